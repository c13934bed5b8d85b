"""Multi-session experiment orchestration on top of the simulator.

Runs a config's phases in order against one decoder: training sessions update
it in place, test sessions freeze it.  Effector coordinates carry over from
session to session, target lists rotate so each session reaches somewhere
new, and every session gets its own derived noise seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import SessionConfig
from .decoder import MixtureDecoder
from .features import EpochBuffer, FeatureConfig, spectral_features
from .simulator import make_schedule, run_session, separable_cortex

logger = logging.getLogger(__name__)


def build_decoder(cfg: SessionConfig) -> MixtureDecoder:
    return MixtureDecoder(
        masks=cfg.layout.masks,
        x_shape=cfg.features.feature_shape,
        output_dim=cfg.layout.output_dim,
        max_factors=cfg.decoder.max_factors,
        expert_forgetting=cfg.decoder.expert_forgetting,
        gating_forgetting=cfg.decoder.gating_forgetting,
        dynamic_gating=cfg.decoder.dynamic_gating,
    )


def build_cortex(cfg: SessionConfig):
    g = cfg.generator
    return separable_cortex(
        cfg.features,
        cfg.layout,
        base_level=g.base_level,
        signature_gain=g.signature_gain,
        coupling_base=g.coupling_base,
        coupling_gain=g.coupling_gain,
        noise=g.noise,
        seed=g.phase_seed,
    )


def session_seed(base_seed: int, session_index: int) -> int:
    return base_seed * 10007 + session_index


@dataclass
class ExperimentResult:
    config: SessionConfig
    decoder: MixtureDecoder
    train_logs: list = field(default_factory=list)
    test_logs: list = field(default_factory=list)
    test_streams: list = field(default_factory=list)
    final_coords: np.ndarray | None = None

    @property
    def logs(self) -> list:
        return self.train_logs + self.test_logs


def run_experiment(
    cfg: SessionConfig,
    decoder: MixtureDecoder | None = None,
    record_test_streams: bool = False,
    train_only: bool = False,
) -> ExperimentResult:
    """Run every phase of ``cfg``; returns logs and the trained decoder."""
    layout = cfg.layout
    decoder = build_decoder(cfg) if decoder is None else decoder
    cortex = build_cortex(cfg)
    result = ExperimentResult(config=cfg, decoder=decoder)

    coords = None
    session_index = 0
    for phase in cfg.phases:
        if train_only and phase.kind != "train":
            continue
        for _ in range(phase.sessions):
            schedule = make_schedule(
                layout,
                cycles=cfg.schedule.cycles,
                trials_per_task=cfg.schedule.trials_per_task,
                idle_s=cfg.schedule.idle_s,
                target_offset=session_index * cfg.schedule.trials_per_task,
            )
            seed = session_seed(cfg.seed, session_index)
            train = phase.kind == "train"
            settings = cfg.settings(assist=phase.assist if train else None)
            record = record_test_streams and not train
            out = run_session(
                decoder, cortex, schedule, settings,
                train=train, seed=seed, start_coords=coords, record_stream=record,
            )
            log, coords = out[0], out[1]
            log.meta.update(
                {
                    "session_index": session_index,
                    "phase": phase.kind,
                    "layout": {
                        "names": list(layout.state_names),
                        "kinds": list(layout.kinds),
                        "masks": [list(m) for m in layout.masks],
                    },
                }
            )
            if train:
                result.train_logs.append(log)
            else:
                result.test_logs.append(log)
                if record:
                    result.test_streams.append(out[2])
            logger.info(
                "session %d (%s): %d ticks, %d trials, %d total updates",
                session_index, phase.kind, len(log.ticks), len(log.trials),
                decoder.n_calibrations,
            )
            session_index += 1
    result.final_coords = coords
    return result


def replay_frames(decoder: MixtureDecoder, frames: np.ndarray, feature_cfg: FeatureConfig):
    """Re-decode a recorded frame stream with a frozen decoder.

    Chunks the stream at the slide rate and mirrors the session loop's
    warm-up: a chunk only produces a decode once the epoch buffer was already
    full before it arrived.  Returns (y_hat, gamma) arrays, one row per tick.
    """
    buffer = EpochBuffer(feature_cfg)
    belief = decoder.reset_belief()
    n = feature_cfg.slide_samples
    y_hats, gammas = [], []
    for start in range(0, frames.shape[0] - n + 1, n):
        was_ready = buffer.ready
        buffer.push(frames[start : start + n])
        if not was_ready:
            continue
        x = spectral_features(buffer.window(), feature_cfg)
        result = decoder.decode(x, belief)
        belief = result.gamma
        y_hats.append(result.y_hat)
        gammas.append(result.gamma)
    return np.asarray(y_hats), np.asarray(gammas)
