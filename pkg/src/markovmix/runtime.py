"""Dual-rate runtime: a decode loop and a calibration loop sharing snapshots.

The decode loop ticks at the decode rate, always against the most recently
published decoder snapshot, and owns the gating belief so it survives
snapshot swaps.  The calibration loop drains complete blocks from a bounded
sample buffer, trains a private clone, and publishes it by atomic reference
replacement; a slow training step therefore never blocks a decode tick.  On
buffer overflow the oldest block is dropped with a warning rather than
stalling the decode side.

Two drive modes: ``run_lockstep`` interleaves both roles deterministically on
the calling thread (the test default), ``run_realtime`` runs the calibration
role on a background thread against a wall-clock tick schedule.
"""

from __future__ import annotations

import threading
import time
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .features import EpochBuffer, FeatureConfig, spectral_features


@dataclass
class RuntimeStats:
    n_ticks: int = 0
    n_skipped: int = 0         # source underruns
    n_updates: int = 0
    n_dropped_blocks: int = 0  # buffer overflows
    tick_times: list = field(default_factory=list)  # wall-clock, realtime mode


class DualRateRuntime:
    """Wires a frame source, a decoder and a supervision callback together.

    Parameters
    ----------
    decoder : MixtureDecoder
        Initial snapshot; never mutated, training happens on clones.
    source : object with ``take(n) -> (n, channels) array or None``
        Frame supplier; None signals an underrun for this tick.
    feature_cfg : FeatureConfig
        Epoch and spectral geometry for the decode path.
    supervise : callable (tick_index, DecodeResult) -> (y_opt, z)
        Produces the training target and label for each decoded tick.
    block_len : int
        Samples per calibration update.
    train_fn : callable (decoder_clone, xs, ys, zs) -> None, optional
        Replaces the default ``calibrate_update`` call (tests inject delays).
    max_blocks_buffered : int
        Bound on the sample buffer, in blocks.
    on_tick : callable (tick_index, DecodeResult), optional
        Observer hook for logging.
    """

    def __init__(
        self,
        decoder,
        source,
        feature_cfg: FeatureConfig,
        supervise,
        block_len: int = 150,
        train_fn=None,
        max_blocks_buffered: int = 8,
        on_tick=None,
    ):
        self._snapshot = decoder
        self.source = source
        self.feature_cfg = feature_cfg
        self.supervise = supervise
        self.block_len = int(block_len)
        self.train_fn = train_fn
        self.on_tick = on_tick
        self.stats = RuntimeStats()
        self.belief = decoder.gating.pi.copy()
        self._epochs = EpochBuffer(feature_cfg)
        self._buffer: deque = deque()
        self._buffer_cap = self.block_len * int(max_blocks_buffered)
        self._lock = threading.Lock()
        self._stop = threading.Event()

    @property
    def snapshot(self):
        """The decoder the next tick will use."""
        return self._snapshot

    # -- decode role ---------------------------------------------------

    def decode_tick(self):
        """One decode tick; returns the DecodeResult or None on underrun."""
        frames = self.source.take(self.feature_cfg.slide_samples)
        if frames is None:
            self.stats.n_skipped += 1
            return None
        was_ready = self._epochs.ready
        self._epochs.push(frames)
        if not was_ready:
            return None
        x = spectral_features(self._epochs.window(), self.feature_cfg)
        snapshot = self._snapshot
        result = snapshot.decode(x, self.belief)
        self.belief = result.gamma
        y_opt, z = self.supervise(self.stats.n_ticks, result)
        with self._lock:
            if len(self._buffer) >= self._buffer_cap:
                for _ in range(self.block_len):
                    self._buffer.popleft()
                self.stats.n_dropped_blocks += 1
                warnings.warn("training buffer overflow, dropped oldest block")
            self._buffer.append((x, np.asarray(y_opt, dtype=np.float64), int(z)))
        self.stats.n_ticks += 1
        if self.on_tick is not None:
            self.on_tick(self.stats.n_ticks - 1, result)
        return result

    # -- calibration role ------------------------------------------------

    def _pop_block(self):
        with self._lock:
            if len(self._buffer) < self.block_len:
                return None
            return [self._buffer.popleft() for _ in range(self.block_len)]

    def train_pending(self) -> int:
        """Train and publish once per complete buffered block; returns count."""
        published = 0
        while True:
            block = self._pop_block()
            if block is None:
                return published
            xs = [b[0] for b in block]
            ys = np.asarray([b[1] for b in block])
            zs = np.asarray([b[2] for b in block], dtype=np.intp)
            clone = self._snapshot.clone()
            if self.train_fn is not None:
                self.train_fn(clone, xs, ys, zs)
            else:
                clone.calibrate_update(xs, ys, zs)
            clone.gating.belief = self.belief.copy()
            self._snapshot = clone  # atomic publication
            self.stats.n_updates += 1
            published += 1

    # -- drive modes ----------------------------------------------------------

    def run_lockstep(self, n_ticks: int) -> RuntimeStats:
        """Deterministic single-threaded interleaving of both roles."""
        for _ in range(n_ticks):
            self.decode_tick()
            self.train_pending()
        return self.stats

    def run_realtime(self, n_ticks: int, tick_s: float | None = None) -> RuntimeStats:
        """Wall-clock decode loop with the calibration role on a thread.

        Tick deadlines advance by a fixed period from the start time, so a
        long training step on the other thread does not shift the schedule.
        """
        period = self.feature_cfg.slide_s if tick_s is None else tick_s
        self._stop.clear()

        def calibration_loop():
            while not self._stop.is_set():
                if self.train_pending() == 0:
                    time.sleep(period / 4.0)

        trainer = threading.Thread(target=calibration_loop, daemon=True)
        trainer.start()
        try:
            start = time.monotonic()
            for i in range(n_ticks):
                deadline = start + (i + 1) * period
                delay = deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                self.decode_tick()
                self.stats.tick_times.append(time.monotonic())
        finally:
            self._stop.set()
            trainer.join()
        self.train_pending()  # flush whatever the trainer did not reach
        return self.stats
