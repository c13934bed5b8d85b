import numpy as np
import pytest

from markovmix.features import ControlLayout
from markovmix.metrics import (
    CosSimStats,
    accuracy_fscore,
    confusion_matrix,
    cos_sim,
    error_blocks,
    latency_analysis,
    precision_recall,
    reach_metrics,
    sample_accuracy,
    slope_fit,
)
from markovmix.sessionlog import SessionLog, TickRecord, TrialRecord


def make_log(instructed, decoded, tick_s=0.1, y_opt=None, y_hat=None, dim=6):
    layout = ControlLayout.hands3()
    log = SessionLog(tick_s=tick_s, state_names=layout.state_names)
    n = len(instructed)
    y_opt = np.zeros((n, dim)) if y_opt is None else np.asarray(y_opt, dtype=float)
    y_hat = np.zeros((n, dim)) if y_hat is None else np.asarray(y_hat, dtype=float)
    for i in range(n):
        log.ticks.append(
            TickRecord(
                t=(i + 1) * tick_s,
                instructed=int(instructed[i]),
                decoded=int(decoded[i]),
                gamma=np.zeros(3),
                posterior=np.zeros(3),
                y_hat=y_hat[i],
                y_opt=y_opt[i],
                coords=np.zeros(dim),
                target=None,
                control_weight=1.0,
            )
        )
    return log


# -- accuracy / F-score --------------------------------------------------------

def test_perfect_diagonal_matrix():
    cm = np.diag([5, 7, 9])
    acc, fsc = accuracy_fscore(cm)
    assert acc == 1.0
    assert fsc == 1.0


def test_antidiagonal_two_class():
    cm = np.array([[0, 4], [6, 0]])
    acc, fsc = accuracy_fscore(cm)
    assert acc == 0.0
    assert fsc == 0.0


def test_pinned_three_class_matrix():
    # hand evaluation of the macro one-vs-all formulas for this matrix:
    # tp = (8,7,9), fn = (2,3,1), fp = (2,2,2), tn = (18,18,18)
    # acc = (26/30 + 25/30 + 27/30)/3 = 13/15
    # F   = (4/5 + 14/19 + 6/7)/3 = 1592/1995
    cm = np.array([[8, 1, 1], [2, 7, 1], [0, 1, 9]])
    acc, fsc = accuracy_fscore(cm)
    assert abs(acc - 13 / 15) < 1e-12
    assert abs(fsc - 1592 / 1995) < 1e-12
    assert abs(sample_accuracy(cm) - 24 / 30) < 1e-12


def test_zero_precision_recall_class_contributes_zero():
    cm = np.array([[10, 0, 0], [0, 10, 0], [10, 0, 0]])  # class 2 never predicted
    _, fsc = accuracy_fscore(cm)
    p, r = precision_recall(cm)
    assert p[2] == 0.0 and r[2] == 0.0
    assert np.isfinite(fsc)


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        accuracy_fscore(np.zeros((3, 3)))


def test_permutation_equivariance():
    rng = np.random.default_rng(0)
    cm = rng.integers(0, 30, size=(4, 4))
    cm[np.diag_indices(4)] += 40
    perm = rng.permutation(4)
    permuted = cm[np.ix_(perm, perm)]
    assert accuracy_fscore(cm) == pytest.approx(accuracy_fscore(permuted))
    p, r = precision_recall(cm)
    pp, rp = precision_recall(permuted)
    assert np.allclose(p[perm], pp)
    assert np.allclose(r[perm], rp)


def test_confusion_matrix_respects_exclusions():
    cm = confusion_matrix([0, 1, 1], [0, 0, 1], 2, included=[True, False, True])
    assert np.array_equal(cm, [[1, 0], [0, 1]])


# -- latency ----------------------------------------------------------------------

def test_latency_zero_when_switch_is_immediate():
    inst = [0] * 10 + [1] * 30
    dec = [0] * 10 + [1] * 30
    lat = latency_analysis(inst, dec, 0.1)
    assert lat.latencies_s == [0.0]
    assert lat.n_failed == 0
    assert not lat.excluded.any()


def test_latency_measures_stable_switch():
    inst = [0] * 10 + [1] * 40
    dec = [0] * 22 + [1] * 28  # switches 1.2 s after the instruction
    lat = latency_analysis(inst, dec, 0.1)
    assert lat.latencies_s == [pytest.approx(1.2)]
    assert lat.excluded[10:22].all()
    assert not lat.excluded[22:].any()


def test_flickering_decode_fails_transition():
    inst = [0] * 10 + [1] * 60
    dec = ([0] * 10 + [1, 0] * 30)  # never stable for 1 s
    lat = latency_analysis(inst, dec, 0.1)
    assert lat.latencies_s == []
    assert lat.n_failed == 1
    assert not lat.excluded.any()  # failed transitions keep their samples


def test_switch_after_window_counts_as_failed():
    inst = [0] * 10 + [1] * 100
    dec = [0] * 75 + [1] * 35  # switch at 6.5 s > 5 s window
    lat = latency_analysis(inst, dec, 0.1)
    assert lat.n_failed == 1


# -- error blocks ------------------------------------------------------------------

def test_error_blocks_pinned_example():
    # two blocks of 3 and 5 misclassified ticks over 60 s at 10 Hz
    inst = np.zeros(600, dtype=int)
    dec = np.zeros(600, dtype=int)
    dec[100:103] = 1
    dec[400:405] = 1
    stats = error_blocks(inst, dec, 0.1)
    assert stats.n_blocks == 2
    assert stats.rate_per_min == pytest.approx(2.0)
    assert stats.mean_duration_s == pytest.approx(0.4)


def test_no_errors_flagged():
    stats = error_blocks(np.zeros(100, dtype=int), np.zeros(100, dtype=int), 0.1)
    assert stats.n_blocks == 0
    assert stats.rate_per_min == 0.0
    assert stats.mean_duration_s == 0.0


def test_single_block_spanning_log():
    stats = error_blocks(np.zeros(600, dtype=int), np.ones(600, dtype=int), 0.1)
    assert stats.n_blocks == 1
    assert stats.rate_per_min == pytest.approx(1.0)
    assert stats.mean_duration_s == pytest.approx(60.0)


def test_block_count_matches_run_length_oracle():
    rng = np.random.default_rng(1)
    inst = np.zeros(500, dtype=int)
    dec = (rng.random(500) < 0.3).astype(int)
    stats = error_blocks(inst, dec, 0.1)
    err = dec != inst
    rising = int(np.sum(~err[:-1] & err[1:]) + err[0])
    assert stats.n_blocks == rising


def test_exclusions_break_blocks():
    inst = np.zeros(10, dtype=int)
    dec = np.ones(10, dtype=int)
    excluded = np.zeros(10, dtype=bool)
    excluded[5] = True
    stats = error_blocks(inst, dec, 0.1, excluded=excluded)
    assert stats.n_blocks == 2
    assert stats.included_s == pytest.approx(0.9)


# -- cosine similarity -----------------------------------------------------------------

def test_cos_sim_endpoints():
    layout = ControlLayout.hands3()
    n = 20
    y_opt = np.zeros((n, 6))
    y_opt[:, 0] = 1.0
    aligned = make_log([1] * n, [1] * n, y_opt=y_opt, y_hat=2.0 * y_opt)
    assert cos_sim(aligned, 1, layout).value == pytest.approx(1.0)
    opposed = make_log([1] * n, [1] * n, y_opt=y_opt, y_hat=-y_opt)
    assert cos_sim(opposed, 1, layout).value == pytest.approx(-1.0)
    y_perp = np.zeros((n, 6))
    y_perp[:, 1] = 3.0
    orthogonal = make_log([1] * n, [1] * n, y_opt=y_opt, y_hat=y_perp)
    assert cos_sim(orthogonal, 1, layout).value == pytest.approx(0.0)


def test_cos_sim_scale_invariance_and_skips():
    layout = ControlLayout.hands3()
    rng = np.random.default_rng(2)
    n = 30
    y_opt = np.zeros((n, 6))
    y_opt[:, :3] = rng.normal(size=(n, 3))
    y_hat = np.zeros((n, 6))
    y_hat[:, :3] = rng.normal(size=(n, 3))
    y_hat[5, :3] = 0.0  # zero-norm prediction skipped
    log1 = make_log([1] * n, [1] * n, y_opt=y_opt, y_hat=y_hat)
    log2 = make_log([1] * n, [1] * n, y_opt=y_opt, y_hat=7.0 * y_hat)
    s1 = cos_sim(log1, 1, layout)
    s2 = cos_sim(log2, 1, layout)
    assert isinstance(s1, CosSimStats)
    assert s1.n_skipped == 1
    assert s1.value == pytest.approx(s2.value)


def test_cos_sim_no_valid_samples():
    layout = ControlLayout.hands3()
    log = make_log([1] * 5, [1] * 5)
    with pytest.raises(ValueError):
        cos_sim(log, 1, layout)


# -- reach metrics ------------------------------------------------------------------------

def trial(state_name, hit, path, straight, state=1):
    return TrialRecord(
        task_index=0, state=state, state_name=state_name, target=(0, 0, 0),
        t_start=0.0, t_end=1.0, hit=hit, path_length=path, straight_distance=straight,
    )


def test_reach_ratios():
    log = SessionLog(tick_s=0.1, state_names=("idle", "left_hand", "right_hand"))
    log.trials = [
        trial("left_hand", True, 1.0, 1.0),
        trial("left_hand", True, 2.0, 1.0),
        trial("left_hand", False, 5.0, 1.0),
        trial("left_hand", True, 0.1, 0.0),  # zero straight distance, excluded
    ]
    stats = reach_metrics(log)["left_hand"]
    assert stats.sr_percent == pytest.approx(75.0)
    assert stats.n_zero_straight == 1
    assert np.allclose(sorted(stats.r_ratios), [1.0, 2.0])


def test_all_misses():
    log = SessionLog(tick_s=0.1, state_names=("idle", "left_hand", "right_hand"))
    log.trials = [trial("left_hand", False, 1.0, 1.0)] * 3
    stats = reach_metrics(log)["left_hand"]
    assert stats.sr_percent == 0.0
    assert stats.r_ratios.size == 0


# -- slope fits --------------------------------------------------------------------------------

def test_constant_series_is_stable():
    fit = slope_fit([0, 1, 2, 3], [5.0, 5.0, 5.0, 5.0])
    assert fit.slope == 0.0
    assert fit.stable


def test_exact_linear_series_has_zero_width_ci():
    fit = slope_fit([0.0, 1.0, 2.0, 3.0], [0.0, 2.0, 4.0, 6.0])
    assert fit.slope == pytest.approx(2.0)
    assert fit.ci_low == pytest.approx(2.0)
    assert fit.ci_high == pytest.approx(2.0)
    assert not fit.stable


def test_noisy_flat_series_retains_zero_slope():
    rng = np.random.default_rng(3)
    x = np.arange(20.0)
    y = 3.0 + 0.5 * rng.normal(size=20)
    assert slope_fit(x, y).stable


def test_slope_fit_argument_errors():
    with pytest.raises(ValueError):
        slope_fit([0, 1], [1.0, 2.0])
    with pytest.raises(ValueError):
        slope_fit([2, 2, 2], [1.0, 2.0, 3.0])
