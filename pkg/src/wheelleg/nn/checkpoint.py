"""Checkpoint I/O: JSON manifest + little-endian float32 binary payload.

A checkpoint is a pair of files sharing one stem: `<stem>.json` holds the
format version, morphology name, layer table (name/shape/offset), encoder
dimensions, normalization constants and RNG state; `<stem>.bin` holds every
parameter row-major as little-endian float32. The loader cross-checks the
payload length against the manifest before accepting anything.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .models import PolicyParams

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a checkpoint pair is structurally inconsistent."""


def save_checkpoint(stem: str, params: PolicyParams, morphology: str,
                    extra: dict | None = None) -> tuple[str, str]:
    vec = params.flatten()
    manifest = {
        "format_version": FORMAT_VERSION,
        "morphology": morphology,
        "obs_dim": params.obs_dim,
        "priv_dim": params.priv_dim,
        "act_dim": params.act_dim,
        "history_len": params.history_len,
        "latent_dim": params.latent_dim,
        "layers": params.manifest(),
        "total_params": int(vec.size),
    }
    if extra:
        manifest["extra"] = extra
    json_path = stem + ".json"
    bin_path = stem + ".bin"
    with open(json_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    vec.astype("<f4").tofile(bin_path)
    return json_path, bin_path


def load_checkpoint(stem: str) -> tuple[dict, np.ndarray]:
    json_path = stem + ".json"
    bin_path = stem + ".bin"
    if not os.path.exists(json_path) or not os.path.exists(bin_path):
        raise CheckpointError(f"checkpoint pair {stem}.json/.bin not found")
    try:
        with open(json_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint manifest {json_path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {manifest.get('format_version')} "
            f"not supported (expected {FORMAT_VERSION})"
        )
    vec = np.fromfile(bin_path, dtype="<f4")
    expected = manifest.get("total_params")
    if vec.size != expected:
        raise CheckpointError(
            f"checkpoint payload corrupt: expected {expected} float32 values, "
            f"found {vec.size}"
        )
    return manifest, vec


def params_from_checkpoint(stem: str, seed: int = 0) -> tuple[PolicyParams, dict]:
    manifest, vec = load_checkpoint(stem)
    params = PolicyParams(
        obs_dim=manifest["obs_dim"],
        priv_dim=manifest["priv_dim"],
        act_dim=manifest["act_dim"],
        history_len=manifest["history_len"],
        latent_dim=manifest["latent_dim"],
        seed=seed,
    )
    params.load_flat(vec)
    return params, manifest
