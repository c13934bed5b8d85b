"""Closed-loop experimental harness on a synthetic neural signal generator.

The synthetic "cortex" is an oscillator bank: each state carries a distinct
channel-by-frequency amplitude signature, and the intended movement vector
linearly modulates designated amplitude cells, plus white noise.  The session
loop ties everything together at the decode rate: generate signal, epoch,
extract features, decode, optionally blend with assistance, step the
effector, and during training phases accumulate (feature, target, label)
samples and run a calibration update every ``block_len`` samples.

Positions are never reset: trials and tasks start wherever the previous one
ended, and the final effector vector carries into the next session.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .features import (
    KIND_ROTATION,
    KIND_TRANSLATION,
    ControlLayout,
    EpochBuffer,
    FeatureConfig,
    angle_difference,
    clip_norm,
    output_sample,
    spectral_features,
    wrap_angle,
)
from .sessionlog import SessionLog, TickRecord, TrialRecord


# ---------------------------------------------------------------------------
# effector kinematics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectorConfig:
    """Workspace geometry and per-tick motion caps."""

    layout: ControlLayout
    workspace_half: float = 0.4   # translation bounds [-half, half] on each axis, meters
    max_step: float = 0.02        # translation cap per tick, meters
    max_angle_step: float = 6.0   # rotation cap per tick, degrees
    hit_radius: float = 0.05      # translation hit threshold, meters
    hit_angle: float = 6.0        # rotation hit threshold, degrees

    def start_coords(self) -> np.ndarray:
        return np.zeros(self.layout.output_dim)


def step_effector(coords: np.ndarray, y: np.ndarray, cfg: EffectorConfig) -> np.ndarray:
    """Apply one increment: per-limb clipping, workspace clamp, angle wrap."""
    out = np.asarray(coords, dtype=np.float64).copy()
    for kind, mask in zip(cfg.layout.kinds, cfg.layout.masks):
        if kind == KIND_TRANSLATION:
            idx = list(mask)
            out[idx] = np.clip(
                out[idx] + clip_norm(y[idx], cfg.max_step),
                -cfg.workspace_half,
                cfg.workspace_half,
            )
        elif kind == KIND_ROTATION:
            i = mask[0]
            step = float(np.clip(y[i], -cfg.max_angle_step, cfg.max_angle_step))
            out[i] = wrap_angle(out[i] + step)
    return out


def assist(y_hat, y_opt, control_weight: float, enforce_cap: bool = True) -> np.ndarray:
    """Blend prediction and optimal direction: w*y_hat + (1-w)*y_opt.

    With the cap enforced the support share (1 - control_weight) may not
    exceed 30%.
    """
    w = float(control_weight)
    if not 0.0 <= w <= 1.0:
        raise ValueError("control weight must lie in [0, 1]")
    if enforce_cap and w < 0.7:
        raise ValueError("support share above the 30% cap")
    return w * np.asarray(y_hat, dtype=np.float64) + (1.0 - w) * np.asarray(
        y_opt, dtype=np.float64
    )


def _distance_to_target(coords, target, state, layout: ControlLayout) -> float:
    mask = list(layout.masks[state])
    if layout.kinds[state] == KIND_TRANSLATION:
        return float(np.linalg.norm(np.asarray(target, dtype=np.float64) - coords[mask]))
    return abs(angle_difference(float(target), coords[mask[0]]))


def required_distance(coords, target, state, layout: ControlLayout,
                      cfg: EffectorConfig) -> float:
    """Minimum distance the effector must travel for the hit test to fire.

    The distance to the hit boundary, not to the target point itself; with
    this as the trial's straight-line reference, path/straight is >= 1 for
    every hit trial by the triangle inequality.
    """
    threshold = (
        cfg.hit_radius if layout.kinds[state] == KIND_TRANSLATION else cfg.hit_angle
    )
    return max(_distance_to_target(coords, target, state, layout) - threshold, 0.0)


# ---------------------------------------------------------------------------
# synthetic neural generator
# ---------------------------------------------------------------------------

class SyntheticCortex:
    """State-conditioned oscillator bank standing in for the signal source.

    Parameters
    ----------
    cfg : FeatureConfig
        Supplies sampling rate, channel count and the frequency grid.
    base : (n_states, n_channels, n_freqs) array
        Per-state oscillation amplitudes.
    coupling : (n_channels, n_freqs, output_dim) array
        Linear map from the normalized intention vector to amplitude
        modulations.
    noise : float
        White noise standard deviation added per sample and channel.
    phases : (n_channels, n_freqs) array
        Fixed phase offsets, radians.
    """

    def __init__(self, cfg: FeatureConfig, base, coupling, noise: float, phases):
        self.cfg = cfg
        self.base = np.asarray(base, dtype=np.float64)
        self.coupling = np.asarray(coupling, dtype=np.float64)
        self.noise = float(noise)
        self.phases = np.asarray(phases, dtype=np.float64)
        k, c, f = self.base.shape
        if (c, f) != (cfg.n_channels, len(cfg.freqs)):
            raise ValueError("base signature grid does not match the feature config")
        if self.coupling.shape[:2] != (c, f):
            raise ValueError("coupling grid does not match the feature config")
        if self.phases.shape != (c, f):
            raise ValueError("phase grid does not match the feature config")
        self._freqs = np.asarray(cfg.freqs, dtype=np.float64)

    @property
    def n_states(self) -> int:
        return self.base.shape[0]

    @property
    def output_dim(self) -> int:
        return self.coupling.shape[2]

    def emit(self, state: int, intent, start_index: int, n: int, rng) -> np.ndarray:
        """Generate ``n`` frames continuing from absolute sample ``start_index``."""
        if not 0 <= state < self.n_states:
            raise ValueError(f"state {state} out of range")
        intent = np.asarray(intent, dtype=np.float64)
        amp = np.clip(self.base[state] + self.coupling @ intent, 0.0, None)
        t = (start_index + np.arange(n)) / self.cfg.rate
        arg = (
            2.0 * np.pi * t[:, None, None] * self._freqs[None, None, :]
            + self.phases[None, :, :]
        )
        frames = np.einsum("tcf,cf->tc", np.sin(arg), amp)
        if self.noise > 0.0:
            frames = frames + self.noise * rng.standard_normal(frames.shape)
        return frames


def separable_cortex(
    cfg: FeatureConfig,
    layout: ControlLayout,
    base_level: float = 0.15,
    signature_gain: float = 1.2,
    coupling_base: float = 0.9,
    coupling_gain: float = 0.45,
    noise: float = 0.4,
    seed: int = 1234,
) -> SyntheticCortex:
    """Generator whose states occupy disjoint signature cells of the (channel,
    frequency) grid, with one dedicated modulation cell per output component."""
    k = layout.n_states
    d = layout.output_dim
    c, f = cfg.n_channels, len(cfg.freqs)
    if c * f < k + d:
        raise ValueError("channel-frequency grid too small for this layout")
    cells = list(itertools.product(range(c), range(f)))
    signature_cells = cells[:k]
    coupling_cells = cells[k : k + d]

    base = np.full((k, c, f), base_level)
    for state, (ci, fi) in enumerate(signature_cells):
        base[state, ci, fi] += signature_gain
    for ci, fi in coupling_cells:
        base[:, ci, fi] = coupling_base
    coupling = np.zeros((c, f, d))
    for j, (ci, fi) in enumerate(coupling_cells):
        coupling[ci, fi, j] = coupling_gain

    phases = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, size=(c, f))
    return SyntheticCortex(cfg, base, coupling, noise, phases)


# ---------------------------------------------------------------------------
# task schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    """One instructed segment: either reaching trials or a timed idle period."""

    state: int
    targets: tuple = ()
    duration_s: float = 0.0


@dataclass(frozen=True)
class TaskSchedule:
    tasks: tuple

    def active_trial_count(self) -> int:
        return sum(len(t.targets) for t in self.tasks)


def target_grid(layout: ControlLayout, center_offset: float = 0.2, half: float = 0.15):
    """Eleven targets per hand (cube corners, center, two face centers), the
    right set mirrored from the left; eleven spread angles per wrist."""
    corners = np.array(list(itertools.product((-half, half), repeat=3)))
    extras = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, half], [0.0, 0.0, -half]])
    left = np.vstack([corners, extras]) + np.array([-center_offset, 0.0, 0.0])
    right = left * np.array([-1.0, 1.0, 1.0])
    angles = (-150.0, -120.0, -90.0, -60.0, -30.0, 0.0, 30.0, 60.0, 90.0, 120.0, 150.0)
    grids = {}
    for state, kind in enumerate(layout.kinds):
        name = layout.state_names[state]
        if kind == KIND_TRANSLATION:
            grids[state] = [tuple(row) for row in (left if "left" in name else right)]
        elif kind == KIND_ROTATION:
            grids[state] = list(angles)
    return grids


def make_schedule(
    layout: ControlLayout,
    cycles: int = 2,
    trials_per_task: int = 3,
    idle_s: float = 4.0,
    target_offset: int = 0,
) -> TaskSchedule:
    """Alternating idle and per-state reaching tasks over the standard grid.

    ``target_offset`` rotates each state's target list so successive sessions
    see different reaches.
    """
    grids = target_grid(layout)
    tasks = []
    cursor = {state: target_offset for state in grids}
    for _ in range(cycles):
        tasks.append(Task(state=layout.idle_state, duration_s=idle_s))
        for state in layout.active_states():
            targets = grids[state]
            start = cursor[state]
            chosen = tuple(targets[(start + i) % len(targets)] for i in range(trials_per_task))
            cursor[state] += trials_per_task
            tasks.append(Task(state=state, targets=chosen))
    return TaskSchedule(tasks=tuple(tasks))


# ---------------------------------------------------------------------------
# closed-loop session
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SessionSettings:
    """Everything a session run needs besides decoder, generator and schedule."""

    feature_cfg: FeatureConfig
    effector_cfg: EffectorConfig
    block_len: int = 150          # training samples per calibration update
    trial_timeout_s: float = 12.0
    assist_weight: float | None = None  # control weight during training, None = off
    enforce_assist_cap: bool = True

    @property
    def layout(self) -> ControlLayout:
        return self.effector_cfg.layout


def _intent_scale(settings: SessionSettings) -> np.ndarray:
    cfg = settings.effector_cfg
    scale = np.ones(cfg.layout.output_dim)
    for kind, mask in zip(cfg.layout.kinds, cfg.layout.masks):
        for i in mask:
            scale[i] = cfg.max_step if kind == KIND_TRANSLATION else cfg.max_angle_step
    return scale


class _SessionRunner:
    def __init__(self, decoder, cortex, settings: SessionSettings, train: bool,
                 seed: int, start_coords, record_stream: bool):
        self.decoder = decoder
        self.cortex = cortex
        self.settings = settings
        self.train = train
        self.rng = np.random.default_rng(seed)
        cfg = settings.effector_cfg
        self.coords = (
            cfg.start_coords() if start_coords is None
            else np.asarray(start_coords, dtype=np.float64).copy()
        )
        self.buffer = EpochBuffer(settings.feature_cfg)
        self.belief = decoder.reset_belief()
        self.intent_scale = _intent_scale(settings)
        self.tick_s = settings.feature_cfg.slide_s
        self.sample_index = 0
        self.tick = 0
        self.train_x: list = []
        self.train_y: list = []
        self.train_z: list = []
        self.current_state: int = settings.layout.idle_state
        self.current_target = None
        self.stream: list = [] if record_stream else None
        self.log = SessionLog(
            tick_s=self.tick_s,
            state_names=settings.layout.state_names,
            meta={"train": train, "seed": seed},
        )

    def advance_signal(self, state: int, y_opt: np.ndarray) -> None:
        n = self.settings.feature_cfg.slide_samples
        frames = self.cortex.emit(
            state, y_opt / self.intent_scale, self.sample_index, n, self.rng
        )
        if self.stream is not None:
            self.stream.append(frames)
        self.buffer.push(frames)
        self.sample_index += n

    def prefill(self, state: int) -> None:
        cfg = self.settings.feature_cfg
        zeros = np.zeros(self.settings.layout.output_dim)
        while self.buffer._buf.shape[0] < cfg.epoch_samples:
            self.advance_signal(state, zeros)

    def do_tick(self, state: int, target) -> None:
        settings = self.settings
        cfg = settings.effector_cfg
        self.current_state = state
        self.current_target = target
        y_opt, z = output_sample(
            self.coords, 0.0 if target is None else target, state,
            settings.layout, cfg.max_step, cfg.max_angle_step,
        )
        self.advance_signal(state, y_opt)
        x = spectral_features(self.buffer.window(), settings.feature_cfg)
        result = self.decoder.decode(x, self.belief)
        self.belief = result.gamma

        control_weight = 1.0
        y_cmd = result.y_hat
        if self.train and settings.assist_weight is not None:
            control_weight = settings.assist_weight
            y_cmd = assist(
                result.y_hat, y_opt, control_weight, settings.enforce_assist_cap
            )
        self.coords = step_effector(self.coords, y_cmd, cfg)

        self.tick += 1
        self.log.ticks.append(
            TickRecord(
                t=self.tick * self.tick_s,
                instructed=state,
                decoded=result.state,
                gamma=result.gamma,
                posterior=result.posterior,
                y_hat=result.y_hat,
                y_opt=y_opt,
                coords=self.coords.copy(),
                target=target,
                control_weight=control_weight,
            )
        )
        if self.train:
            self.train_x.append(x)
            self.train_y.append(y_opt)
            self.train_z.append(z)
            if len(self.train_x) == settings.block_len:
                self.decoder.calibrate_update(self.train_x, self.train_y, self.train_z)
                self.train_x, self.train_y, self.train_z = [], [], []

    def run(self, schedule: TaskSchedule) -> SessionLog:
        settings = self.settings
        layout = settings.layout
        cfg = settings.effector_cfg
        timeout_ticks = max(1, int(round(settings.trial_timeout_s / self.tick_s)))
        self.prefill(schedule.tasks[0].state if schedule.tasks else layout.idle_state)

        for task_index, task in enumerate(schedule.tasks):
            if not task.targets:
                for _ in range(int(round(task.duration_s / self.tick_s))):
                    self.do_tick(task.state, None)
                continue
            for target in task.targets:
                mask = list(layout.masks[task.state])
                straight = required_distance(self.coords, target, task.state, layout, cfg)
                t_start = self.tick * self.tick_s
                path = 0.0
                hit = False
                deadline = self.tick + timeout_ticks
                while self.tick < deadline and not hit:
                    before = self.coords[mask].copy()
                    self.do_tick(task.state, target)
                    if layout.kinds[task.state] == KIND_TRANSLATION:
                        path += float(np.linalg.norm(self.coords[mask] - before))
                        hit = (
                            _distance_to_target(self.coords, target, task.state, layout)
                            < cfg.hit_radius
                        )
                    else:
                        path += abs(angle_difference(self.coords[mask[0]], before[0]))
                        hit = (
                            _distance_to_target(self.coords, target, task.state, layout)
                            < cfg.hit_angle
                        )
                self.log.trials.append(
                    TrialRecord(
                        task_index=task_index,
                        state=task.state,
                        state_name=layout.state_names[task.state],
                        target=target,
                        t_start=t_start,
                        t_end=self.tick * self.tick_s,
                        hit=hit,
                        path_length=path,
                        straight_distance=straight,
                    )
                )
        self.log.meta["final_coords"] = self.coords.tolist()
        return self.log


def run_session(
    decoder,
    cortex: SyntheticCortex,
    schedule: TaskSchedule,
    settings: SessionSettings,
    *,
    train: bool,
    seed: int = 0,
    start_coords=None,
    record_stream: bool = False,
):
    """Run one closed-loop session; returns (log, final_coords[, stream]).

    During a training session the decoder is updated in place every
    ``block_len`` buffered samples (a trailing partial block is dropped);
    during a test session the decoder is never touched.  With
    ``record_stream`` the raw generated frames are returned too, enabling
    bit-exact replay with a frozen decoder.
    """
    runner = _SessionRunner(decoder, cortex, settings, train, seed, start_coords,
                            record_stream)
    log = runner.run(schedule)
    final = runner.coords.copy()
    if record_stream:
        frames = (
            np.vstack(runner.stream) if runner.stream
            else np.zeros((0, settings.feature_cfg.n_channels))
        )
        return log, final, frames
    return log, final


# ---------------------------------------------------------------------------
# chance baseline
# ---------------------------------------------------------------------------

def chance_baseline(
    schedule: TaskSchedule,
    settings: SessionSettings,
    n_runs: int = 100,
    seed: int = 0,
    trial_timeout_s: float | None = None,
):
    """Random-walk cursor statistics against the schedule's targets.

    Each run replays the schedule with a cursor that moves in a uniformly
    random direction at maximal speed every tick (random full-step rotation
    for wrist states).  Returns per state name a dict with arrays ``sr``
    (percent per run) and ``r_ratio`` (per-run mean over hit trials).
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    layout = settings.layout
    cfg = settings.effector_cfg
    timeout_s = settings.trial_timeout_s if trial_timeout_s is None else trial_timeout_s
    timeout_ticks = max(1, int(round(timeout_s / settings.feature_cfg.slide_s)))
    rng = np.random.default_rng(seed)

    per_state: dict = {
        layout.state_names[t.state]: {"sr": [], "r_ratio": [], "trial_r_ratios": []}
        for t in schedule.tasks
        if t.targets
    }
    for _ in range(n_runs):
        coords = cfg.start_coords()
        hits: dict = {name: [0, 0] for name in per_state}
        ratios: dict = {name: [] for name in per_state}
        for task in schedule.tasks:
            if not task.targets:
                continue
            name = layout.state_names[task.state]
            mask = list(layout.masks[task.state])
            rotation = layout.kinds[task.state] == KIND_ROTATION
            for target in task.targets:
                straight = required_distance(coords, target, task.state, layout, cfg)
                path = 0.0
                hit = False
                for _ in range(timeout_ticks):
                    y = np.zeros(layout.output_dim)
                    if rotation:
                        y[mask[0]] = rng.choice((-1.0, 1.0)) * cfg.max_angle_step
                    else:
                        direction = rng.standard_normal(3)
                        direction /= np.linalg.norm(direction)
                        y[mask] = direction * cfg.max_step
                    before = coords[mask].copy()
                    coords = step_effector(coords, y, cfg)
                    if rotation:
                        path += abs(angle_difference(coords[mask[0]], before[0]))
                        hit = _distance_to_target(coords, target, task.state, layout) < cfg.hit_angle
                    else:
                        path += float(np.linalg.norm(coords[mask] - before))
                        hit = _distance_to_target(coords, target, task.state, layout) < cfg.hit_radius
                    if hit:
                        break
                hits[name][1] += 1
                if hit:
                    hits[name][0] += 1
                    if straight > 0.0:
                        ratios[name].append(path / straight)
        for name in per_state:
            done, total = hits[name]
            per_state[name]["sr"].append(100.0 * done / total if total else 0.0)
            per_state[name]["trial_r_ratios"].extend(ratios[name])
            if ratios[name]:
                per_state[name]["r_ratio"].append(float(np.mean(ratios[name])))
    return {
        name: {
            "sr": np.array(vals["sr"]),
            "r_ratio": np.array(vals["r_ratio"]),
            "trial_r_ratios": np.array(vals["trial_r_ratios"]),
        }
        for name, vals in per_state.items()
    }


def timeout_from_log(log: SessionLog, quantile: float = 0.99) -> float:
    """Trial-duration quantile of a reference log, for chance-study timeouts."""
    durations = [t.duration for t in log.trials]
    if not durations:
        raise ValueError("log has no trials")
    return float(np.quantile(durations, quantile))
