"""Feature extraction: signal epoching, Morlet spectral tensors, movement targets.

The neural side maps a 1 s multichannel window to an order-3 feature tensor
(decimated time x frequency x channel): per channel and frequency bin the
window is convolved with a complex Morlet wavelet, the magnitude is taken,
and the magnitude series is decimated by contiguous block means.

The movement side builds supervised targets from effector geometry: the owned
components of the output vector point from the current position toward the
target (Cartesian difference for translations, shortest-arc angular
difference in degrees for rotations), clipped to the per-tick step cap;
everything else is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve


@dataclass(frozen=True)
class FeatureConfig:
    """Geometry of the neural feature pipeline.

    The default is the desk-scale preset used by the test suite; ``paper()``
    is the full-scale 10 x 15 x 64 configuration.
    """

    rate: float = 200.0
    n_channels: int = 8
    freqs: tuple = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    epoch_s: float = 1.0
    slide_s: float = 0.1
    n_time_points: int = 5
    n_cycles: float = 7.0

    def __post_init__(self):
        if max(self.freqs) >= self.rate / 2.0:
            raise ValueError(
                f"frequency {max(self.freqs)} Hz is at or above Nyquist ({self.rate / 2} Hz)"
            )
        if self.n_time_points < 1 or self.n_channels < 1 or not self.freqs:
            raise ValueError("degenerate feature configuration")

    @property
    def epoch_samples(self) -> int:
        return int(round(self.epoch_s * self.rate))

    @property
    def slide_samples(self) -> int:
        return int(round(self.slide_s * self.rate))

    @property
    def feature_shape(self) -> tuple:
        return (self.n_time_points, len(self.freqs), self.n_channels)

    @classmethod
    def paper(cls) -> "FeatureConfig":
        return cls(
            rate=586.0,
            n_channels=64,
            freqs=tuple(float(f) for f in range(10, 151, 10)),
            epoch_s=1.0,
            slide_s=0.1,
            n_time_points=10,
        )


@lru_cache(maxsize=256)
def _morlet_kernel_cached(freq: float, rate: float, n_cycles: float) -> np.ndarray:
    sigma = n_cycles / (2.0 * np.pi * freq)
    half = int(np.ceil(3.5 * sigma * rate))
    tau = np.arange(-half, half + 1) / rate
    kernel = np.exp(2j * np.pi * freq * tau) * np.exp(-(tau**2) / (2.0 * sigma**2))
    kernel = kernel / np.sum(np.abs(kernel))
    kernel.setflags(write=False)
    return kernel


def morlet_kernel(freq: float, rate: float, n_cycles: float = 7.0) -> np.ndarray:
    """Complex Morlet wavelet at ``freq`` Hz, L1-normalized, truncated at 3.5 sigma."""
    return _morlet_kernel_cached(float(freq), float(rate), float(n_cycles))


def block_decimate(series: np.ndarray, n_points: int) -> np.ndarray:
    """Contiguous block means along axis 0, reducing to ``n_points`` rows."""
    series = np.asarray(series)
    n = series.shape[0]
    if n_points > n:
        raise ValueError(f"cannot decimate {n} samples to {n_points} points")
    edges = np.linspace(0, n, n_points + 1).astype(int)
    return np.stack([series[a:b].mean(axis=0) for a, b in zip(edges[:-1], edges[1:])])


def spectral_features(window: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Map a (epoch_samples, n_channels) window to a (time, freq, channel) tensor.

    Zero-padded 'same' convolution per frequency bin, magnitude, then block
    decimation of the magnitude series.  All entries are non-negative and the
    map is positively homogeneous in the window amplitude.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (cfg.epoch_samples, cfg.n_channels):
        raise ValueError(
            f"window shape {window.shape} does not match "
            f"({cfg.epoch_samples}, {cfg.n_channels})"
        )
    out = np.empty(cfg.feature_shape)
    for fi, freq in enumerate(cfg.freqs):
        kernel = morlet_kernel(freq, cfg.rate, cfg.n_cycles)
        response = fftconvolve(window, kernel[:, None], mode="same", axes=0)
        out[:, fi, :] = block_decimate(np.abs(response), cfg.n_time_points)
    return out


class EpochBuffer:
    """Sliding window over a frame stream; not ready until 1 s of history."""

    def __init__(self, cfg: FeatureConfig):
        self.cfg = cfg
        self._buf = np.zeros((0, cfg.n_channels))

    def push(self, frames: np.ndarray) -> None:
        frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
        if frames.shape[1] != self.cfg.n_channels:
            raise ValueError("frame channel count mismatch")
        self._buf = np.vstack([self._buf, frames])[-self.cfg.epoch_samples :]

    @property
    def ready(self) -> bool:
        return self._buf.shape[0] >= self.cfg.epoch_samples

    def window(self) -> np.ndarray | None:
        """Last full epoch, or None while history is insufficient."""
        if not self.ready:
            return None
        return self._buf.copy()


# ---------------------------------------------------------------------------
# control layout and movement targets
# ---------------------------------------------------------------------------

KIND_IDLE = "idle"
KIND_TRANSLATION = "translation"
KIND_ROTATION = "rotation"

_KIND_DIMS = {KIND_IDLE: 0, KIND_TRANSLATION: 3, KIND_ROTATION: 1}


@dataclass(frozen=True)
class ControlLayout:
    """Discrete states and the output components each one owns."""

    state_names: tuple
    kinds: tuple
    masks: tuple

    def __post_init__(self):
        if not (len(self.state_names) == len(self.kinds) == len(self.masks)):
            raise ValueError("state_names, kinds and masks must align")
        seen: set = set()
        for kind, mask in zip(self.kinds, self.masks):
            if kind not in _KIND_DIMS:
                raise ValueError(f"unknown state kind {kind!r}")
            if len(mask) != _KIND_DIMS[kind]:
                raise ValueError(f"{kind} states own {_KIND_DIMS[kind]} components")
            if seen & set(mask):
                raise ValueError("masks overlap")
            seen |= set(mask)

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def output_dim(self) -> int:
        return max((i for m in self.masks for i in m), default=-1) + 1

    @property
    def idle_state(self) -> int:
        return self.kinds.index(KIND_IDLE)

    def active_states(self):
        return [k for k, kind in enumerate(self.kinds) if kind != KIND_IDLE]

    @classmethod
    def hands3(cls) -> "ControlLayout":
        """Idle plus left/right 3D hand translation (6 output components)."""
        return cls(
            state_names=("idle", "left_hand", "right_hand"),
            kinds=(KIND_IDLE, KIND_TRANSLATION, KIND_TRANSLATION),
            masks=((), (0, 1, 2), (3, 4, 5)),
        )

    @classmethod
    def hands_wrists5(cls) -> "ControlLayout":
        """Idle, both hand translations and both wrist rotations (8 components)."""
        return cls(
            state_names=("idle", "left_hand", "right_hand", "left_wrist", "right_wrist"),
            kinds=(
                KIND_IDLE,
                KIND_TRANSLATION,
                KIND_TRANSLATION,
                KIND_ROTATION,
                KIND_ROTATION,
            ),
            masks=((), (0, 1, 2), (4, 5, 6), (3,), (7,)),
        )


def wrap_angle(deg: float) -> float:
    """Wrap an angle in degrees to [-180, 180)."""
    return float((deg + 180.0) % 360.0 - 180.0)


def angle_difference(target_deg: float, current_deg: float) -> float:
    """Signed shortest-arc difference target - current, in degrees."""
    return wrap_angle(target_deg - current_deg)


def clip_norm(vec: np.ndarray, cap: float) -> np.ndarray:
    """Scale ``vec`` down to Euclidean norm ``cap`` if it exceeds it."""
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm > cap > 0.0:
        return vec * (cap / norm)
    return vec.copy()


def output_sample(
    coords: np.ndarray,
    target,
    state: int,
    layout: ControlLayout,
    max_step: float,
    max_angle_step: float,
) -> tuple[np.ndarray, int]:
    """Supervised (y, z) pair for the current effector geometry.

    ``coords`` is the flat effector vector aligned with the output
    components.  The active state's components hold the capped difference
    toward ``target``; all others, and the idle state entirely, are zero.
    """
    y = np.zeros(layout.output_dim)
    kind = layout.kinds[state]
    mask = list(layout.masks[state])
    if kind == KIND_TRANSLATION:
        diff = np.asarray(target, dtype=np.float64) - coords[mask]
        y[mask] = clip_norm(diff, max_step)
    elif kind == KIND_ROTATION:
        diff = angle_difference(float(target), coords[mask[0]])
        y[mask[0]] = float(np.clip(diff, -max_angle_step, max_angle_step))
    return y, state
