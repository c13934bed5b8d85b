"""Markov-gated mixture of multilinear experts.

One expert per discrete state, each a :class:`~markovmix.npls.RecursiveTensorPLS`
that regresses only the output components its state owns; every other
component is a structural zero, and a state with an empty mask (the idle
state) is the constant zero map.  The gating belief weights the expert
outputs:

    y_hat = sum_k gamma_k * expand(expert_k(x), mask_k)

Calibration trains each expert on the sub-block of samples labelled with its
state and refreshes the gating classifier and transition counts on the full
block, always running recursive-validation on a block before training on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gating import HmmGating
from .npls import RecursiveTensorPLS


@dataclass
class DecodeResult:
    """Output of one decode tick."""

    y_hat: np.ndarray     # full output vector, structural zeros included
    gamma: np.ndarray     # gating belief over states, sums to 1
    state: int            # argmax of gamma
    posterior: np.ndarray # raw softmax posterior before the forward step


class MixtureDecoder:
    """K gated experts over a shared feature tensor stream.

    Parameters
    ----------
    masks : sequence of sequence of int
        Output components owned by each state; disjoint, may be empty (idle).
    x_shape : tuple of int
        Shape of one input feature tensor.
    output_dim : int, optional
        Total output dimension; inferred from the masks when omitted.
    max_factors : int
        Latent-dimension cap for experts and gating classifier.
    expert_forgetting, gating_forgetting : float
        Per-role forgetting factors.
    pi : array-like, optional
        Initial gating belief distribution.
    dynamic_gating : bool
        When False the forward recursion is skipped and the raw softmax
        posterior gates the mixture directly (the static variant).
    """

    def __init__(
        self,
        masks,
        x_shape,
        output_dim: int | None = None,
        max_factors: int = 20,
        expert_forgetting: float = 1.0,
        gating_forgetting: float = 1.0,
        pi=None,
        dynamic_gating: bool = True,
    ):
        self.masks = [tuple(int(i) for i in m) for m in masks]
        seen: set[int] = set()
        for mask in self.masks:
            if any(i < 0 for i in mask):
                raise ValueError("mask indices must be non-negative")
            if seen & set(mask):
                raise ValueError("masks must be disjoint across states")
            seen |= set(mask)
        inferred = max(seen) + 1 if seen else 0
        self.output_dim = inferred if output_dim is None else int(output_dim)
        if self.output_dim < inferred:
            raise ValueError("output_dim smaller than the largest mask index")

        self.x_shape = tuple(int(s) for s in x_shape)
        self.max_factors = int(max_factors)
        self.expert_forgetting = float(expert_forgetting)
        self.dynamic_gating = bool(dynamic_gating)
        self.experts = [
            RecursiveTensorPLS(
                self.x_shape, (len(mask),),
                max_factors=max_factors, forgetting=expert_forgetting,
            )
            for mask in self.masks
        ]
        self.gating = HmmGating(
            len(self.masks), self.x_shape,
            max_factors=max_factors, forgetting=gating_forgetting, pi=pi,
        )
        self.n_calibrations = 0

    @property
    def n_states(self) -> int:
        return len(self.masks)

    # -- decoding -----------------------------------------------------------

    def decode(self, x, belief=None) -> DecodeResult:
        """Gate the experts on one feature tensor.

        ``belief`` optionally overrides the gating module's stored belief so a
        decode loop can own the belief across model snapshot swaps.
        """
        posterior = self.gating.classify(x)
        if self.dynamic_gating:
            gamma = self.gating.forward_step(posterior, belief)
        else:
            gamma = posterior
            self.gating.belief = gamma
        y_hat = np.zeros(self.output_dim)
        for k, (expert, mask) in enumerate(zip(self.experts, self.masks)):
            if not mask or gamma[k] == 0.0:
                continue
            y_hat[list(mask)] += gamma[k] * expert.predict(x)
        return DecodeResult(
            y_hat=y_hat, gamma=gamma, state=int(np.argmax(gamma)), posterior=posterior
        )

    def reset_belief(self) -> np.ndarray:
        return self.gating.reset_belief()

    # -- calibration ----------------------------------------------------------

    def calibrate_update(self, xs, ys, zs) -> None:
        """One incremental update from an aligned (features, targets, labels) block.

        Each state's expert validates then trains on its own labelled
        sub-block, restricted to its masked components; states absent from the
        block are untouched.  The gating classifier and transition counts are
        refreshed on the full block.
        """
        xs = [np.asarray(x, dtype=np.float64) for x in xs]
        ys = np.asarray(ys, dtype=np.float64)
        zs = np.asarray(zs, dtype=np.intp)
        if not (len(xs) == len(ys) == len(zs)):
            raise ValueError("feature, target and label blocks must be aligned")
        if len(xs) == 0:
            raise ValueError("calibration block is empty")
        if ys.ndim != 2 or ys.shape[1] != self.output_dim:
            raise ValueError(f"targets must be (n, {self.output_dim})")
        if zs.min() < 0 or zs.max() >= self.n_states:
            raise ValueError(f"labels must lie in 0..{self.n_states - 1}")

        for k, (expert, mask) in enumerate(zip(self.experts, self.masks)):
            if not mask:
                continue
            idx = np.flatnonzero(zs == k)
            if idx.size == 0:
                continue
            sub_x = [xs[i] for i in idx]
            sub_y = ys[np.ix_(idx, list(mask))]
            expert.select_factors(sub_x, sub_y)
            expert.update(sub_x, sub_y)

        self.gating.update_classifier(xs, zs)
        self.gating.update_transitions(zs)
        self.n_calibrations += 1

    # -- structure ---------------------------------------------------------------

    def append_expert(self, mask) -> None:
        """Add a state owning ``mask``; existing experts are untouched."""
        mask = tuple(int(i) for i in mask)
        owned = {i for m in self.masks for i in m}
        if owned & set(mask):
            raise ValueError("new mask overlaps an existing state's components")
        if any(i < 0 for i in mask):
            raise ValueError("mask indices must be non-negative")
        self.masks.append(mask)
        if mask:
            self.output_dim = max(self.output_dim, max(mask) + 1)
        self.experts.append(
            RecursiveTensorPLS(
                self.x_shape, (len(mask),),
                max_factors=self.max_factors, forgetting=self.expert_forgetting,
            )
        )
        self.gating.extend_state()

    def convergence_series(self) -> dict[int, np.ndarray]:
        """Per state, the coefficient change of the selected model at each update."""
        return {
            k: expert.selected_distance_series()
            for k, expert in enumerate(self.experts)
            if self.masks[k]
        }

    # -- persistence ----------------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "masks": [list(m) for m in self.masks],
            "x_shape": list(self.x_shape),
            "output_dim": self.output_dim,
            "max_factors": self.max_factors,
            "expert_forgetting": self.expert_forgetting,
            "dynamic_gating": self.dynamic_gating,
            "n_calibrations": self.n_calibrations,
            "experts": [e.state_dict() for e in self.experts],
            "gating": self.gating.state_dict(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "MixtureDecoder":
        decoder = cls(
            [tuple(m) for m in state["masks"]],
            tuple(state["x_shape"]),
            output_dim=int(state["output_dim"]),
            max_factors=int(state["max_factors"]),
            expert_forgetting=float(state["expert_forgetting"]),
            dynamic_gating=bool(state["dynamic_gating"]),
        )
        decoder.n_calibrations = int(state["n_calibrations"])
        decoder.experts = [RecursiveTensorPLS.from_state(s) for s in state["experts"]]
        decoder.gating = HmmGating.from_state(state["gating"])
        return decoder

    def clone(self) -> "MixtureDecoder":
        return MixtureDecoder.from_state(self.state_dict())
