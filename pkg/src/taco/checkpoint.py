"""Versioned binary checkpoints for parameters and optimizer/sensitivity state.

Layout: an 8-byte magic, a uint32 format version, a uint64 header length, a
UTF-8 JSON header (scalar state plus the array manifest), then the arrays in
manifest order in the standard numpy .npy encoding.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .optim import AdamState, SgdState
from .sensitivity import SensitivityState

MAGIC = b"MTRETCKP"
VERSION = 1


@dataclass
class Checkpoint:
    params: np.ndarray
    sensitivity: SensitivityState | None = None
    adam: AdamState | None = None
    sgd: SgdState | None = None
    meta: dict | None = None


def save_checkpoint(path, params, sensitivity: SensitivityState | None = None,
                    adam: AdamState | None = None, sgd: SgdState | None = None,
                    meta: dict | None = None) -> None:
    header: dict = {"meta": meta or {}, "arrays": ["params"]}
    arrays = [np.asarray(params, dtype=np.float64)]
    if sensitivity is not None:
        header["sensitivity"] = {
            "beta": sensitivity.beta, "tau": sensitivity.tau,
            "burn_in_fraction": sensitivity.burn_in_fraction,
            "step": sensitivity.step, "total_steps": sensitivity.total_steps,
            "median_epsilon": sensitivity.median_epsilon,
        }
        header["arrays"].append("sigma_bar")
        arrays.append(sensitivity.sigma_bar)
    if adam is not None:
        header["adam"] = {
            "step": adam.step, "peak_lr": adam.peak_lr,
            "total_steps": adam.total_steps, "warmup_fraction": adam.warmup_fraction,
            "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
        }
        header["arrays"] += ["adam_m", "adam_v"]
        arrays += [adam.m, adam.v]
    if sgd is not None:
        header["sgd"] = {
            "step": sgd.step, "peak_lr": sgd.peak_lr,
            "total_steps": sgd.total_steps, "warmup_fraction": sgd.warmup_fraction,
        }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for arr in arrays:
            np.lib.format.write_array(f, np.ascontiguousarray(arr), allow_pickle=False)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode())
        data = {}
        for name in header["arrays"]:
            data[name] = np.lib.format.read_array(f, allow_pickle=False)

    sens = None
    if "sensitivity" in header:
        s = header["sensitivity"]
        sens = SensitivityState(
            sigma_bar=data["sigma_bar"], beta=s["beta"], tau=s["tau"],
            burn_in_fraction=s["burn_in_fraction"], step=s["step"],
            total_steps=s["total_steps"], median_epsilon=s["median_epsilon"])
    adam = None
    if "adam" in header:
        a = header["adam"]
        adam = AdamState(m=data["adam_m"], v=data["adam_v"], step=a["step"],
                         peak_lr=a["peak_lr"], total_steps=a["total_steps"],
                         warmup_fraction=a["warmup_fraction"], beta1=a["beta1"],
                         beta2=a["beta2"], eps=a["eps"])
    sgd = None
    if "sgd" in header:
        s = header["sgd"]
        sgd = SgdState(step=s["step"], peak_lr=s["peak_lr"],
                       total_steps=s["total_steps"], warmup_fraction=s["warmup_fraction"])
    return Checkpoint(params=data["params"], sensitivity=sens, adam=adam,
                      sgd=sgd, meta=header.get("meta") or {})
