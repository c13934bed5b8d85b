import numpy as np
import pytest

from markovmix.npls import DataError, RecursiveTensorPLS, dominant_rank1
from markovmix.tensorops import frobenius_distance


def make_linear_data(rng, n=200, x_shape=(3, 4), y_dim=2, noise=0.0):
    w = rng.normal(size=(y_dim, *x_shape))
    c = rng.normal(size=y_dim)
    xs = rng.normal(size=(n, *x_shape))
    ys = xs.reshape(n, -1) @ w.reshape(y_dim, -1).T + c
    if noise:
        ys = ys + noise * rng.normal(size=ys.shape)
    return xs, ys, w, c


# -- select_factors ---------------------------------------------------------

def test_select_single_candidate_returns_one():
    m = RecursiveTensorPLS((3,), (1,), max_factors=1)
    xs = np.random.default_rng(0).normal(size=(10, 3))
    assert m.select_factors(xs, np.ones((10, 1))) == 1


def test_select_matches_exhaustive_mse_oracle():
    rng = np.random.default_rng(1)
    for _ in range(25):
        m = RecursiveTensorPLS((4,), (2,), max_factors=5)
        m.betas = rng.normal(size=m.betas.shape)
        m.biases = rng.normal(size=m.biases.shape)
        xs = rng.normal(size=(30, 4))
        ys = rng.normal(size=(30, 2))
        errors = []
        for f in range(1, 6):
            preds = np.array([m.predict(x, factors=f) for x in xs])
            errors.append(np.sum((preds - ys) ** 2))
        best = m.select_factors(xs, ys)
        assert best == int(np.argmin(errors)) + 1


def test_select_tie_breaks_to_smallest():
    m = RecursiveTensorPLS((4,), (1,), max_factors=3)
    # identical zero models for f=1..3 produce exactly equal errors
    xs = np.random.default_rng(2).normal(size=(15, 4))
    assert m.select_factors(xs, np.ones((15, 1))) == 1


def test_select_empty_block_is_noop():
    m = RecursiveTensorPLS((3,), (1,), max_factors=4)
    m.best_factors = 3
    assert m.select_factors([], []) == 3
    assert np.array_equal(m.val_error, np.zeros(4))


# -- update -----------------------------------------------------------------

def test_zero_targets_give_zero_model():
    rng = np.random.default_rng(3)
    m = RecursiveTensorPLS((3, 4), (2,), max_factors=4)
    m.update(rng.normal(size=(50, 3, 4)), np.zeros((50, 2)))
    assert m.weight == 50.0
    assert np.abs(m.betas).max() <= 1e-9
    assert np.abs(m.biases).max() <= 1e-9


def test_perfect_linear_fit_at_full_rank():
    rng = np.random.default_rng(4)
    xs, ys, _, _ = make_linear_data(rng, n=200, x_shape=(3, 4), y_dim=2)
    # closed-form least squares confirms an exact fit exists
    design = np.hstack([xs.reshape(200, -1), np.ones((200, 1))])
    _, residuals, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    assert residuals.size == 0 or residuals.max() < 1e-18

    m = RecursiveTensorPLS((3, 4), (2,), max_factors=12)
    m.select_factors(xs, ys)
    m.update(xs, ys)
    assert m.training_error(xs, ys, 12) < 1e-6
    # held-in sample reproduces its target
    assert np.abs(m.predict(xs[17], factors=12) - ys[17]).max() < 1e-5


def test_batch_vs_recursive_equivalence():
    rng = np.random.default_rng(5)
    xs, ys, _, _ = make_linear_data(rng, n=150, noise=0.1)
    one = RecursiveTensorPLS((3, 4), (2,), max_factors=5)
    two = RecursiveTensorPLS((3, 4), (2,), max_factors=5)
    one.update(xs, ys)
    two.update(xs[:60], ys[:60])
    two.update(xs[60:], ys[60:])
    assert np.array_equal(one.moment_xx, two.moment_xx)
    assert np.array_equal(one.moment_xy, two.moment_xy)
    assert one.weight == two.weight
    for f in range(5):
        assert frobenius_distance(one.betas[f], two.betas[f]) < 1e-8


def test_nonfinite_block_rejected_and_state_untouched():
    rng = np.random.default_rng(6)
    m = RecursiveTensorPLS((3,), (1,), max_factors=2)
    m.update(rng.normal(size=(20, 3)), rng.normal(size=(20, 1)))
    snapshot = m.state_dict()
    bad_x = rng.normal(size=(5, 3))
    bad_x[2, 1] = np.nan
    with pytest.raises(DataError):
        m.update(bad_x, np.ones((5, 1)))
    after = m.state_dict()
    for key in snapshot:
        assert np.array_equal(np.asarray(snapshot[key]), np.asarray(after[key]))


def test_training_mse_monotone_in_rank():
    rng = np.random.default_rng(7)
    xs, ys, _, _ = make_linear_data(rng, n=120, x_shape=(4, 3), y_dim=3, noise=0.5)
    m = RecursiveTensorPLS((4, 3), (3,), max_factors=10)
    m.update(xs, ys)
    errs = [m.training_error(xs, ys, f) for f in range(1, 11)]
    for a, b in zip(errs, errs[1:]):
        assert b <= a + 1e-10


def test_projector_mode_vectors_unit_norm():
    rng = np.random.default_rng(8)
    for _ in range(10):
        t = rng.normal(size=(3, 4, 2))
        for v in dominant_rank1(t):
            assert abs(np.linalg.norm(v) - 1.0) < 1e-10


def test_dominant_rank1_matches_svd_for_matrices():
    rng = np.random.default_rng(9)
    t = rng.normal(size=(5, 4))
    u, s, vt = np.linalg.svd(t)
    w1, w2 = dominant_rank1(t)
    assert min(np.linalg.norm(w1 - u[:, 0]), np.linalg.norm(w1 + u[:, 0])) < 1e-6
    assert min(np.linalg.norm(w2 - vt[0]), np.linalg.norm(w2 + vt[0])) < 1e-6


# -- predict -----------------------------------------------------------------

def test_fresh_model_predicts_zero():
    m = RecursiveTensorPLS((2, 3), (4,), max_factors=3)
    assert np.array_equal(m.predict(np.ones((2, 3))), np.zeros(4))


def test_predict_rank_bounds():
    m = RecursiveTensorPLS((3,), (1,), max_factors=2)
    with pytest.raises(ValueError):
        m.predict(np.zeros(3), factors=3)
    with pytest.raises(ValueError):
        m.predict(np.zeros(3), factors=0)


def test_low_rank_prediction_differs_on_rank2_data():
    rng = np.random.default_rng(10)
    # two independent rank-1 maps: best single-factor fit is strictly worse
    u1, u2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    v1, v2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    xs = rng.normal(size=(100, 3))
    ys = np.outer(xs @ u1, v1) + np.outer(xs @ u2, v2)
    m = RecursiveTensorPLS((3,), (2,), max_factors=4)
    m.update(xs, ys)
    x = rng.normal(size=3)
    assert np.abs(m.predict(x, factors=1) - m.predict(x, factors=4)).max() > 1e-3


# -- convergence and persistence ------------------------------------------------

def test_update_distances_decay_on_stationary_stream():
    rng = np.random.default_rng(11)
    w = rng.normal(size=(2, 3, 3))
    m = RecursiveTensorPLS((3, 3), (2,), max_factors=4)
    for _ in range(24):
        xs = rng.normal(size=(60, 3, 3))
        ys = np.einsum("qij,nij->nq", w, xs) + 0.2 * rng.normal(size=(60, 2))
        m.select_factors(xs, ys)
        m.update(xs, ys)
    dist = np.array(m.update_distances)
    q = len(dist) // 4
    for f in range(4):
        assert dist[-q:, f].mean() < dist[:q, f].mean()


def test_state_roundtrip_bit_exact():
    rng = np.random.default_rng(12)
    xs, ys, _, _ = make_linear_data(rng, n=80, noise=0.3)
    m = RecursiveTensorPLS((3, 4), (2,), max_factors=3, forgetting=0.9)
    m.select_factors(xs, ys)
    m.update(xs, ys)
    m.select_factors(xs[:20], ys[:20])
    m.update(xs[:20], ys[:20])
    back = RecursiveTensorPLS.from_state(m.state_dict())
    x = rng.normal(size=(3, 4))
    assert np.array_equal(back.predict(x), m.predict(x))
    assert back.best_factors == m.best_factors
    assert np.array_equal(back.moment_xx, m.moment_xx)
    assert back.factor_history == m.factor_history


def test_forgetting_downweights_old_blocks():
    rng = np.random.default_rng(13)
    xs = rng.normal(size=(300, 4))
    ys_old = xs @ np.ones((4, 1))
    ys_new = xs @ -np.ones((4, 1))
    m = RecursiveTensorPLS((4,), (1,), max_factors=4, forgetting=0.2)
    m.update(xs, ys_old)
    for _ in range(4):
        m.update(xs, ys_new)
    pred = m.predict(np.ones(4), factors=4)
    assert pred[0] < 0  # the recent regime dominates


def test_extend_output_adds_zero_components():
    rng = np.random.default_rng(14)
    m = RecursiveTensorPLS((3,), (2,), max_factors=3)
    xs = rng.normal(size=(40, 3))
    ys = rng.normal(size=(40, 2))
    m.update(xs, ys)
    before = m.predict(xs[0])
    m.extend_output(1)
    after = m.predict(xs[0])
    assert after.shape == (3,)
    assert np.array_equal(after[:2], before)
    assert after[2] == 0.0
