"""Versioned decoder archives: a zip of manifest.json plus tensor payloads.

Every numpy array in the decoder state is stored in the package's binary
tensor format (bit-exact float64); structure and scalars live in the
manifest.  The manifest also carries a fingerprint of the configuration that
produced the model and a small provenance block (update count, session
count), so cross-session reuse can detect configuration drift.
"""

from __future__ import annotations

import hashlib
import json
import zipfile

import numpy as np

from .decoder import MixtureDecoder
from .npls import RecursiveTensorPLS
from .tensorops import tensor_from_bytes, tensor_to_bytes

_ARCHIVE_VERSION = 1


class ArchiveError(RuntimeError):
    """Unusable archive: bad version or fingerprint mismatch."""


def config_fingerprint(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _flatten(node, prefix: str, arrays: dict):
    if isinstance(node, np.ndarray):
        arrays[prefix] = node
        return {"__tensor__": prefix}
    if isinstance(node, dict):
        return {k: _flatten(v, f"{prefix}/{k}", arrays) for k, v in node.items()}
    if isinstance(node, (list, tuple)):
        return [_flatten(v, f"{prefix}/{i}", arrays) for i, v in enumerate(node)]
    if isinstance(node, (np.floating, np.integer)):
        return node.item()
    return node


def _unflatten(node, loader):
    if isinstance(node, dict):
        if set(node.keys()) == {"__tensor__"}:
            return loader(node["__tensor__"])
        return {k: _unflatten(v, loader) for k, v in node.items()}
    if isinstance(node, list):
        return [_unflatten(v, loader) for v in node]
    return node


def save_decoder(path, decoder: MixtureDecoder, config: dict | None = None,
                 provenance: dict | None = None) -> None:
    arrays: dict = {}
    structure = _flatten(decoder.state_dict(), "state", arrays)
    manifest = {
        "version": _ARCHIVE_VERSION,
        "fingerprint": None if config is None else config_fingerprint(config),
        "provenance": {
            "n_calibrations": decoder.n_calibrations,
            **(provenance or {}),
        },
        "decoder": structure,
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1))
        for key, arr in arrays.items():
            zf.writestr(f"arrays/{key}.ten", tensor_to_bytes(arr))


def load_decoder(path, config: dict | None = None,
                 allow_mismatch: bool = False) -> tuple[MixtureDecoder, dict]:
    """Returns (decoder, manifest); verifies version and, when a config is
    given, its fingerprint (override with ``allow_mismatch``)."""
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("version") != _ARCHIVE_VERSION:
            raise ArchiveError(f"unsupported archive version {manifest.get('version')}")
        if config is not None and manifest["fingerprint"] is not None:
            if manifest["fingerprint"] != config_fingerprint(config) and not allow_mismatch:
                raise ArchiveError("archive fingerprint does not match this configuration")

        def loader(key: str) -> np.ndarray:
            return tensor_from_bytes(zf.read(f"arrays/{key}.ten"))

        state = _unflatten(manifest["decoder"], loader)
    return MixtureDecoder.from_state(state), manifest


def save_pls(path, model: RecursiveTensorPLS) -> None:
    """Archive a bare regression model in the same container format."""
    arrays: dict = {}
    structure = _flatten(model.state_dict(), "model", arrays)
    manifest = {"version": _ARCHIVE_VERSION, "kind": "pls", "model": structure}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1))
        for key, arr in arrays.items():
            zf.writestr(f"arrays/{key}.ten", tensor_to_bytes(arr))


def load_pls(path) -> RecursiveTensorPLS:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("version") != _ARCHIVE_VERSION or manifest.get("kind") != "pls":
            raise ArchiveError("not a regression model archive")

        def loader(key: str) -> np.ndarray:
            return tensor_from_bytes(zf.read(f"arrays/{key}.ten"))

        state = _unflatten(manifest["model"], loader)
    return RecursiveTensorPLS.from_state(state)
