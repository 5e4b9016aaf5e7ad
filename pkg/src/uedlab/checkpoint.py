"""Versioned binary checkpoint container for policy handles.

Byte layout (all integers little-endian):

    magic            4 bytes  b"UEDC"
    format version   uint32
    descriptor len   uint64
    descriptor       UTF-8 JSON (network topology + role metadata)
    policy params    uint64 count, then count float64 values
    value params     uint64 count, then count float64 values
    optimizer flag   uint8 (0 = none, 1 = adam)
    [adam state]     uint64 step, then two float64 arrays shaped like the
                     full parameter vector (first moment, second moment)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nets import NetworkSpec
from .learner import PolicyHandle

MAGIC = b"UEDC"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _spec_descriptor(spec: NetworkSpec, role: str) -> dict:
    return {
        "role": role,
        "view_shape": list(spec.view_shape),
        "n_actions": spec.n_actions,
        "conv_filters": spec.conv_filters,
        "conv_kernel": spec.conv_kernel,
        "recurrent_width": spec.recurrent_width,
        "head_widths": list(spec.head_widths),
        "direction_embed": spec.direction_embed,
        "timestep_embed": spec.timestep_embed,
        "latent_dim": spec.latent_dim,
    }


def _spec_from_descriptor(desc: dict) -> NetworkSpec:
    return NetworkSpec(
        view_shape=tuple(desc["view_shape"]),
        n_actions=desc["n_actions"],
        conv_filters=desc["conv_filters"],
        conv_kernel=desc["conv_kernel"],
        recurrent_width=desc["recurrent_width"],
        head_widths=tuple(desc["head_widths"]),
        direction_embed=desc["direction_embed"],
        timestep_embed=desc["timestep_embed"],
        latent_dim=desc["latent_dim"],
    )


def _write_array(fh, array: np.ndarray):
    fh.write(struct.pack("<Q", array.size))
    fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"{fh.name}: file is truncated")
    return data


def _read_array(fh) -> np.ndarray:
    (count,) = struct.unpack("<Q", _read_exact(fh, 8))
    return np.frombuffer(_read_exact(fh, count * 8),
                         dtype="<f8").astype(np.float64)


def save_policy(path, policy: PolicyHandle, role: str = "protagonist"):
    path = Path(path)
    desc = json.dumps(_spec_descriptor(policy.spec, role)).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(desc)))
        fh.write(desc)
        _write_array(fh, policy.pi_params.flat)
        _write_array(fh, policy.vf_params.flat)
        if policy.opt_state:
            fh.write(struct.pack("<B", 1))
            fh.write(struct.pack("<Q", policy.opt_state["t"]))
            _write_array(fh, policy.opt_state["m"])
            _write_array(fh, policy.opt_state["v"])
        else:
            fh.write(struct.pack("<B", 0))


def load_policy(path) -> tuple[PolicyHandle, str]:
    """Returns (policy, role)."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (desc_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        try:
            desc = json.loads(_read_exact(fh, desc_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt descriptor") from exc
        spec = _spec_from_descriptor(desc)
        policy = PolicyHandle.create(spec, np.random.default_rng(0))
        pi = _read_array(fh)
        vf = _read_array(fh)
        if pi.size != policy.pi_params.size or vf.size != policy.vf_params.size:
            raise CheckpointError(
                f"{path}: parameter count does not match the stored topology"
            )
        policy.pi_params.flat[...] = pi
        policy.vf_params.flat[...] = vf
        (flag,) = struct.unpack("<B", _read_exact(fh, 1))
        if flag == 1:
            (t,) = struct.unpack("<Q", _read_exact(fh, 8))
            policy.opt_state.update(
                t=int(t), m=_read_array(fh), v=_read_array(fh)
            )
    return policy, desc["role"]
