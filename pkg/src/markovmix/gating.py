"""Discrete state decoding: discriminative classifier plus HMM forward belief.

The classifier is a :class:`~markovmix.npls.RecursiveTensorPLS` trained on
one-hot state targets; its score vector is squashed to a posterior with a
softmax.  The forward recursion combines that posterior (Bayes-inverted
through the running class priors, the normalizing evidence term cancels) with
a transition matrix learned by counting label transitions under exponential
forgetting.  The resulting belief ``gamma`` is the dynamic gating weight
vector consumed by the mixture decoder.

State labels are 0-based integers in ``range(n_states)`` throughout.
"""

from __future__ import annotations

import warnings

import numpy as np

from .npls import DataError, RecursiveTensorPLS


def one_hot(labels, n_states: int) -> np.ndarray:
    """(n, n_states) dummy matrix with a single 1 per row."""
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= n_states):
        raise ValueError(f"labels must lie in 0..{n_states - 1}")
    out = np.zeros((labels.size, n_states))
    out[np.arange(labels.size), labels] = 1.0
    return out


def softmax(scores: np.ndarray) -> np.ndarray:
    """Overflow-safe softmax (max subtraction)."""
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


class HmmGating:
    """Transition model, class priors and classifier for one state machine.

    Parameters
    ----------
    n_states : int
        Number of discrete states K.
    x_shape : tuple of int
        Shape of one input feature tensor.
    max_factors : int
        Latent-dimension cap of the embedded classifier.
    forgetting : float
        Forgetting factor applied to transition counts, prior counts and the
        classifier's moment state.
    pi : array-like, optional
        Initial state distribution; uniform when omitted.
    prior_floor : float
        Lower bound on class priors, keeps Bayes inversion finite for states
        never seen in training.
    """

    def __init__(
        self,
        n_states: int,
        x_shape,
        max_factors: int = 20,
        forgetting: float = 1.0,
        pi=None,
        prior_floor: float = 1e-6,
    ):
        if n_states < 1:
            raise ValueError("n_states must be >= 1")
        self.n_states = int(n_states)
        self.forgetting = float(forgetting)
        self.prior_floor = float(prior_floor)

        k = self.n_states
        self.transition_counts = np.zeros((k, k))
        self.transition = np.full((k, k), 1.0 / k)
        self.prior_counts = np.zeros(k)
        self.class_priors = np.full(k, 1.0 / k)
        if pi is None:
            self.pi = np.full(k, 1.0 / k)
        else:
            self.pi = np.asarray(pi, dtype=np.float64).copy()
            if self.pi.shape != (k,) or abs(self.pi.sum() - 1.0) > 1e-9 or (self.pi < 0).any():
                raise ValueError("pi must be a length-K probability vector")
        self.belief = self.pi.copy()
        self.classifier = RecursiveTensorPLS(
            x_shape, (k,), max_factors=max_factors, forgetting=forgetting
        )

    # -- transition / prior updates -------------------------------------

    def _check_labels(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.intp)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_states):
            raise ValueError(f"state labels must lie in 0..{self.n_states - 1}")
        return labels

    def update_transitions(self, labels) -> None:
        """Fold a label sequence into transition counts and class priors.

        Counts successive pairs within the sequence only; an empty sequence is
        a no-op.  Rows of the transition matrix with no mass default to
        uniform, and class priors are floored then renormalized.
        """
        labels = self._check_labels(labels)
        if labels.size == 0:
            return
        lam = self.forgetting
        pair_counts = np.zeros_like(self.transition_counts)
        np.add.at(pair_counts, (labels[:-1], labels[1:]), 1.0)
        self.transition_counts = lam * self.transition_counts + pair_counts
        self.prior_counts = lam * self.prior_counts + np.bincount(
            labels, minlength=self.n_states
        )
        self._refresh_derived()

    def _refresh_derived(self) -> None:
        k = self.n_states
        row_mass = self.transition_counts.sum(axis=1, keepdims=True)
        self.transition = np.where(
            row_mass > 0.0, self.transition_counts / np.where(row_mass > 0, row_mass, 1.0),
            1.0 / k,
        )
        total = self.prior_counts.sum()
        if total > 0.0:
            priors = np.maximum(self.prior_counts / total, self.prior_floor)
            self.class_priors = priors / priors.sum()
        else:
            self.class_priors = np.full(k, 1.0 / k)

    # -- decoding ---------------------------------------------------------

    def classify(self, x) -> np.ndarray:
        """Softmax posterior over states for one feature tensor."""
        scores = self.classifier.predict(x)
        if not np.isfinite(scores).all():
            raise DataError("classifier produced non-finite scores")
        return softmax(scores)

    def forward_step(self, posterior, belief=None) -> np.ndarray:
        """One HMM forward recursion step; stores and returns the new belief.

        Emissions are the posterior divided by the class priors (Bayes
        inversion up to the evidence constant, which cancels in the
        normalization).  If every unnormalized term vanishes the belief falls
        back to the transition-predicted prior and a warning is emitted.
        """
        posterior = np.asarray(posterior, dtype=np.float64)
        prev = self.belief if belief is None else np.asarray(belief, dtype=np.float64)
        emission = posterior / self.class_priors
        predicted = self.transition.T @ prev
        alpha = emission * predicted
        total = alpha.sum()
        if not np.isfinite(total) or total <= 0.0:
            warnings.warn("degenerate emission, falling back to predicted prior")
            gamma = predicted / predicted.sum()
        else:
            gamma = alpha / total
        self.belief = gamma
        return gamma

    def reset_belief(self) -> np.ndarray:
        self.belief = self.pi.copy()
        return self.belief

    # -- classifier training ------------------------------------------------

    def update_classifier(self, xs, labels) -> None:
        """Recursive-validation then update of the classifier on one-hot targets."""
        labels = self._check_labels(labels)
        targets = one_hot(labels, self.n_states)
        self.classifier.select_factors(xs, targets)
        self.classifier.update(xs, targets)

    # -- structure ------------------------------------------------------------

    def extend_state(self) -> None:
        """Add one state: zero counts, zero classifier score, zero belief mass."""
        k = self.n_states
        counts = np.zeros((k + 1, k + 1))
        counts[:k, :k] = self.transition_counts
        self.transition_counts = counts
        self.prior_counts = np.concatenate([self.prior_counts, [0.0]])
        self.pi = np.concatenate([self.pi, [0.0]])
        self.belief = np.concatenate([self.belief, [0.0]])
        self.n_states = k + 1
        self.classifier.extend_output(1)
        self._refresh_derived()

    # -- persistence ------------------------------------------------------------

    def state_dict(self) -> dict:
        state = {
            "n_states": float(self.n_states),
            "forgetting": self.forgetting,
            "prior_floor": self.prior_floor,
            "transition_counts": self.transition_counts.copy(),
            "transition": self.transition.copy(),
            "prior_counts": self.prior_counts.copy(),
            "class_priors": self.class_priors.copy(),
            "pi": self.pi.copy(),
            "belief": self.belief.copy(),
        }
        state["classifier"] = self.classifier.state_dict()
        return state

    @classmethod
    def from_state(cls, state: dict) -> "HmmGating":
        clf = RecursiveTensorPLS.from_state(state["classifier"])
        gating = cls(
            int(state["n_states"]),
            clf.x_shape,
            max_factors=clf.max_factors,
            forgetting=float(state["forgetting"]),
            prior_floor=float(state["prior_floor"]),
        )
        gating.classifier = clf
        gating.transition_counts = np.array(state["transition_counts"], dtype=np.float64)
        gating.transition = np.array(state["transition"], dtype=np.float64)
        gating.prior_counts = np.array(state["prior_counts"], dtype=np.float64)
        gating.class_priors = np.array(state["class_priors"], dtype=np.float64)
        gating.pi = np.array(state["pi"], dtype=np.float64)
        gating.belief = np.array(state["belief"], dtype=np.float64)
        return gating

    def clone(self) -> "HmmGating":
        return HmmGating.from_state(self.state_dict())
