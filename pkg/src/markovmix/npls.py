"""Recursive exponentially weighted N-way PLS regression on tensor inputs.

A ``RecursiveTensorPLS`` maintains exponentially weighted first and second
moments of the (vectorized) input and output streams.  Each ``update`` folds a
new block into those moments and then re-extracts a nested family of
multilinear models, one per latent dimension ``f = 1..max_factors``: factor
``f`` adds a single rank-1 multiway projector (one unit-norm weight vector per
input mode, found by alternating power iteration on the cross-covariance) and
the corresponding least-squares output loading, so the model for ``f`` is a
prefix of the deflation sequence for ``f + 1``.

Hyperparameter selection is recursive-validation: ``select_factors`` scores
the *current* models on a block before that block is used for training, folds
the per-factor squared error into an exponentially smoothed tally, and keeps
the argmin.  Call it on each incoming block before ``update``.

With ``forgetting=1`` the recursion is exactly batch-equivalent: moments are
accumulated sample by sample in stream order, so splitting a dataset into
blocks changes nothing, bit for bit.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

from .tensorops import frobenius_distance, mode_n_unfold

_POWER_MAXITER = 100
_POWER_TOL = 1e-9


class DataError(ValueError):
    """Raised when a training block contains non-finite values."""


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    # fix the sign ambiguity of singular/power-iteration vectors
    if v[np.argmax(np.abs(v))] < 0:
        return -v
    return v


def _contract_except(tensor: np.ndarray, vectors, keep: int) -> np.ndarray:
    """Contract ``tensor`` with one vector per mode, skipping mode ``keep``."""
    out = tensor
    # contract from the highest axis down so remaining axis numbers are stable
    for axis in range(tensor.ndim - 1, -1, -1):
        if axis == keep:
            continue
        out = np.tensordot(out, vectors[axis], axes=([axis], [0]))
    return out


def dominant_rank1(tensor: np.ndarray):
    """Unit-norm weight vectors of the dominant rank-1 approximation.

    Alternating power iteration over all modes of ``tensor``, initialized from
    the leading left singular vector of each mode unfolding.  Returns one unit
    vector per mode; for an all-zero tensor the canonical basis vectors are
    returned (degenerate but deterministic).
    """
    shape = tensor.shape
    vectors = []
    for axis in range(tensor.ndim):
        if not tensor.any():
            e = np.zeros(shape[axis])
            e[0] = 1.0
            vectors.append(e)
            continue
        unfolded = mode_n_unfold(tensor, axis)
        u, _, _ = np.linalg.svd(unfolded, full_matrices=False)
        vectors.append(_canonical_sign(u[:, 0].copy()))

    for _ in range(_POWER_MAXITER):
        delta = 0.0
        for axis in range(tensor.ndim):
            new = _contract_except(tensor, vectors, axis)
            norm = np.linalg.norm(new)
            if norm == 0.0:
                continue
            new = _canonical_sign(new / norm)
            delta = max(delta, float(np.max(np.abs(new - vectors[axis]))))
            vectors[axis] = new
        if delta < _POWER_TOL:
            break
    return vectors


class RecursiveTensorPLS:
    """Online N-way PLS with exponential forgetting and validated rank.

    Parameters
    ----------
    x_shape : tuple of int
        Mode sizes of one input tensor.
    y_shape : tuple of int
        Mode sizes of one output tensor.
    max_factors : int
        Highest latent dimension; models for 1..max_factors are kept.
    forgetting : float
        Exponential down-weighting of past blocks, in [0, 1]; 1 keeps
        everything (exact batch equivalence).
    """

    def __init__(self, x_shape, y_shape, max_factors: int = 20, forgetting: float = 1.0):
        if max_factors < 1:
            raise ValueError("max_factors must be >= 1")
        if not 0.0 <= forgetting <= 1.0:
            raise ValueError("forgetting must lie in [0, 1]")
        self.x_shape = tuple(int(s) for s in x_shape)
        self.y_shape = tuple(int(s) for s in y_shape)
        self.max_factors = int(max_factors)
        self.forgetting = float(forgetting)

        p = int(np.prod(self.x_shape))
        q = int(np.prod(self.y_shape)) if self.y_shape else 0
        self._p = p
        self._q = q

        self.weight = 0.0
        self.sum_x = np.zeros(p)
        self.sum_y = np.zeros(q)
        self.moment_xx = np.zeros((p, p))
        self.moment_xy = np.zeros((p, q))

        self.betas = np.zeros((self.max_factors, *self.y_shape, *self.x_shape))
        self.biases = np.zeros((self.max_factors, *self.y_shape))
        self.val_error = np.zeros(self.max_factors)
        self.best_factors = 1
        self.n_updates = 0
        self.update_distances: list[np.ndarray] = []
        self.factor_history: list[int] = []
        self.selected_changes: list[float] = []

    # -- block handling ------------------------------------------------

    def _stack(self, xs, ys):
        x_block = np.asarray([np.asarray(x, dtype=np.float64).ravel() for x in xs])
        y_block = np.asarray([np.asarray(y, dtype=np.float64).ravel() for y in ys])
        if x_block.ndim != 2 or x_block.shape[1] != self._p:
            raise ValueError("input block does not match the configured x shape")
        if y_block.ndim != 2 or y_block.shape[1] != self._q:
            raise ValueError("output block does not match the configured y shape")
        if x_block.shape[0] != y_block.shape[0]:
            raise ValueError("input and output blocks have different lengths")
        return x_block, y_block

    def select_factors(self, xs, ys) -> int:
        """Score current models on a fresh block and return the argmin rank.

        Per-factor squared prediction error on the block is folded into the
        exponentially smoothed validation tally; ties resolve to the smallest
        rank.  An empty block is a no-op.
        """
        if len(xs) == 0:
            return self.best_factors
        x_block, y_block = self._stack(xs, ys)
        if not (np.isfinite(x_block).all() and np.isfinite(y_block).all()):
            raise DataError("validation block contains non-finite values")

        b_all = self.betas.reshape(self.max_factors, self._q, self._p)
        preds = np.einsum("np,fqp->fnq", x_block, b_all)
        preds += self.biases.reshape(self.max_factors, 1, self._q)
        errs = np.sum((preds - y_block[None, :, :]) ** 2, axis=(1, 2))

        self.val_error = self.forgetting * self.val_error + errs
        self.best_factors = int(np.argmin(self.val_error)) + 1
        return self.best_factors

    def update(self, xs, ys) -> None:
        """Fold a block into the moment state and re-extract all models.

        Rejects blocks with non-finite entries without touching the state.
        Moments are accumulated one sample at a time so block partitioning has
        no effect on the result when ``forgetting`` is 1.
        """
        if len(xs) == 0:
            return
        x_block, y_block = self._stack(xs, ys)
        if not (np.isfinite(x_block).all() and np.isfinite(y_block).all()):
            raise DataError("training block contains non-finite values")

        lam = self.forgetting
        self.weight = lam * self.weight + x_block.shape[0]
        self.sum_x = lam * self.sum_x
        self.sum_y = lam * self.sum_y
        self.moment_xx = lam * self.moment_xx
        self.moment_xy = lam * self.moment_xy
        for x_row, y_row in zip(x_block, y_block):
            self.sum_x += x_row
            self.sum_y += y_row
            self.moment_xx += np.outer(x_row, x_row)
            self.moment_xy += np.outer(x_row, y_row)

        previous = self.betas.copy()
        previous_selected = self.factor_history[-1] if self.factor_history else self.best_factors
        self._extract_models()
        self.n_updates += 1
        self.update_distances.append(
            np.array(
                [frobenius_distance(self.betas[f], previous[f]) for f in range(self.max_factors)]
            )
        )
        self.selected_changes.append(
            frobenius_distance(
                self.betas[self.best_factors - 1], previous[previous_selected - 1]
            )
        )
        self.factor_history.append(self.best_factors)

    def selected_distance_series(self) -> np.ndarray:
        """Per update, the coefficient distance between the model selected then
        and the model selected at the previous update."""
        return np.array(self.selected_changes)

    # -- factor extraction ----------------------------------------------

    def _extract_models(self) -> None:
        p, q = self._p, self._q
        if q == 0 or self.weight <= 0.0:
            return
        mean_x = self.sum_x / self.weight
        mean_y = self.sum_y / self.weight
        xx = self.moment_xx - self.weight * np.outer(mean_x, mean_x)
        s = self.moment_xy - self.weight * np.outer(mean_x, mean_y)

        tt_floor = 1e-12 * (np.trace(xx) / p + np.finfo(float).tiny)
        coeff = np.zeros((p, q))
        r_vectors: list[np.ndarray] = []
        p_loadings: list[np.ndarray] = []

        betas = np.zeros_like(self.betas)
        biases = np.zeros_like(self.biases)
        for f in range(self.max_factors):
            if s.any():
                cross = s.reshape(*self.x_shape, q) if q > 1 else s.reshape(*self.x_shape)
                mode_vectors = dominant_rank1(cross)[: len(self.x_shape)]
                w = reduce(np.kron, mode_vectors)
                r = w.copy()
                for r_j, p_j in zip(r_vectors, p_loadings):
                    r -= (p_j @ w) * r_j
                tt = float(r @ xx @ r)
                if tt > tt_floor:
                    p_load = xx @ r / tt
                    q_load = s.T @ r / tt
                    s = s - np.outer(p_load, q_load) * tt
                    coeff = coeff + np.outer(r, q_load)
                    r_vectors.append(r)
                    p_loadings.append(p_load)
            betas[f] = coeff.T.reshape(*self.y_shape, *self.x_shape)
            biases[f] = (mean_y - coeff.T @ mean_x).reshape(self.y_shape)
        self.betas = betas
        self.biases = biases

    # -- prediction -------------------------------------------------------

    def predict(self, x, factors: int | None = None) -> np.ndarray:
        """Predict the output tensor for one input; ``factors`` defaults to the
        validated optimum."""
        f = self.best_factors if factors is None else int(factors)
        if not 1 <= f <= self.max_factors:
            raise ValueError(f"factors must lie in 1..{self.max_factors}, got {f}")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.x_shape:
            raise ValueError(f"input shape {x.shape} does not match {self.x_shape}")
        flat = self.betas[f - 1].reshape(self._q, self._p) @ x.ravel()
        return flat.reshape(self.y_shape) + self.biases[f - 1]

    def training_error(self, xs, ys, factors: int) -> float:
        """Mean squared error of the ``factors``-rank model on a block."""
        x_block, y_block = self._stack(xs, ys)
        coeff = self.betas[factors - 1].reshape(self._q, self._p)
        preds = x_block @ coeff.T + self.biases[factors - 1].ravel()
        return float(np.mean((preds - y_block) ** 2))

    # -- structure ---------------------------------------------------------

    def extend_output(self, n_new: int) -> None:
        """Append ``n_new`` zero-initialized output components (1-D outputs only)."""
        if len(self.y_shape) != 1:
            raise ValueError("extend_output requires a 1-D output shape")
        if n_new < 1:
            raise ValueError("n_new must be >= 1")
        q_new = self._q + int(n_new)
        self.sum_y = np.concatenate([self.sum_y, np.zeros(n_new)])
        self.moment_xy = np.hstack([self.moment_xy, np.zeros((self._p, n_new))])
        self.betas = np.concatenate(
            [self.betas, np.zeros((self.max_factors, n_new, *self.x_shape))], axis=1
        )
        self.biases = np.hstack([self.biases, np.zeros((self.max_factors, n_new))])
        self.y_shape = (q_new,)
        self._q = q_new

    # -- persistence --------------------------------------------------------

    def state_dict(self) -> dict:
        """All state as scalars and float64 arrays; round-trips bit-exactly."""
        return {
            "x_shape": np.array(self.x_shape, dtype=np.float64),
            "y_shape": np.array(self.y_shape, dtype=np.float64),
            "max_factors": float(self.max_factors),
            "forgetting": self.forgetting,
            "weight": self.weight,
            "sum_x": self.sum_x.copy(),
            "sum_y": self.sum_y.copy(),
            "moment_xx": self.moment_xx.copy(),
            "moment_xy": self.moment_xy.copy(),
            "betas": self.betas.copy(),
            "biases": self.biases.copy(),
            "val_error": self.val_error.copy(),
            "best_factors": float(self.best_factors),
            "n_updates": float(self.n_updates),
            "update_distances": np.array(self.update_distances).reshape(
                self.n_updates, self.max_factors
            ),
            "factor_history": np.array(self.factor_history, dtype=np.float64),
            "selected_changes": np.array(self.selected_changes, dtype=np.float64),
        }

    @classmethod
    def from_state(cls, state: dict) -> "RecursiveTensorPLS":
        model = cls(
            tuple(int(v) for v in state["x_shape"]),
            tuple(int(v) for v in state["y_shape"]),
            max_factors=int(state["max_factors"]),
            forgetting=float(state["forgetting"]),
        )
        model.weight = float(state["weight"])
        model.sum_x = np.array(state["sum_x"], dtype=np.float64)
        model.sum_y = np.array(state["sum_y"], dtype=np.float64)
        model.moment_xx = np.array(state["moment_xx"], dtype=np.float64)
        model.moment_xy = np.array(state["moment_xy"], dtype=np.float64)
        model.betas = np.array(state["betas"], dtype=np.float64)
        model.biases = np.array(state["biases"], dtype=np.float64)
        model.val_error = np.array(state["val_error"], dtype=np.float64)
        model.best_factors = int(state["best_factors"])
        model.n_updates = int(state["n_updates"])
        model.update_distances = [row.copy() for row in np.asarray(state["update_distances"])]
        model.factor_history = [int(v) for v in np.asarray(state["factor_history"])]
        model.selected_changes = [float(v) for v in np.asarray(state["selected_changes"])]
        return model

    def clone(self) -> "RecursiveTensorPLS":
        return RecursiveTensorPLS.from_state(self.state_dict())
