"""Binary checkpoint format.

Layout: 5-byte magic "AGCR1", then a little-endian uint32 header length,
then a canonical UTF-8 JSON header, then raw little-endian float32
buffers in the order declared by the header's tensor table (parameters in
registry order, then Adam first moments, then second moments).

Loading validates the whole file before constructing any state, so a
truncated or inconsistent checkpoint never yields a partial model.
save(load(path)) is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .model import CloudRemovalModel, ModelConfig

MAGIC = b"AGCR1"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised for malformed checkpoint files; messages carry byte offsets."""


@dataclass
class CheckpointState:
    model: CloudRemovalModel
    train_config: dict
    epoch: int
    step: int
    metrics: dict = field(default_factory=dict)
    adam_steps: dict = field(default_factory=lambda: {"g": 0, "d": 0})
    adam_m: dict = field(default_factory=dict)   # param name -> array
    adam_v: dict = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)


def _tensor_table(model: CloudRemovalModel) -> list[dict]:
    table = []
    for kind in ("param", "adam_m", "adam_v"):
        for name, t in model.registry.items():
            table.append({"name": name, "shape": list(t.shape), "kind": kind})
    return table


def _canonical_header(state: CheckpointState) -> bytes:
    header = {
        "format": FORMAT_VERSION,
        "model_config": state.model.cfg.to_dict(),
        "train_config": state.train_config,
        "epoch": state.epoch,
        "step": state.step,
        "metrics": state.metrics,
        "adam_steps": state.adam_steps,
        "rng_state": state.rng_state,
        "tensors": _tensor_table(state.model),
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(state: CheckpointState, path: str) -> None:
    header = _canonical_header(state)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for kind, store in (("param", None), ("adam_m", state.adam_m), ("adam_v", state.adam_v)):
            for name, t in state.model.registry.items():
                if kind == "param":
                    arr = t.data
                else:
                    arr = store.get(name)
                    if arr is None:
                        arr = np.zeros(t.shape, dtype=np.float32)
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str) -> CheckpointState:
    with open(path, "rb") as f:
        blob = f.read()

    if len(blob) < len(MAGIC) or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(
            f"bad magic at byte 0: expected {MAGIC!r}, got {blob[:len(MAGIC)]!r}"
        )
    if len(blob) < len(MAGIC) + 4:
        raise CheckpointFormatError(f"truncated header length field at byte {len(MAGIC)}")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    header_start = len(MAGIC) + 4
    payload_start = header_start + header_len
    if len(blob) < payload_start:
        raise CheckpointFormatError(
            f"truncated header: need {header_len} bytes at byte {header_start}, "
            f"have {len(blob) - header_start}"
        )
    try:
        header = json.loads(blob[header_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable header at byte {header_start}: {exc}") from exc

    if header.get("format") != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported format version {header.get('format')!r}")

    model_cfg = ModelConfig.from_dict(header["model_config"])
    model = CloudRemovalModel(model_cfg)

    expected = _tensor_table(model)
    declared = header["tensors"]
    if len(declared) != len(expected):
        raise CheckpointFormatError(
            f"tensor table lists {len(declared)} tensors, model needs {len(expected)}"
        )

    # pass 1: validate names/shapes/sizes before touching any state
    offset = payload_start
    reads: list[tuple[dict, int, int]] = []
    for entry, exp in zip(declared, expected):
        name, kind = entry.get("name"), entry.get("kind")
        shape = tuple(entry.get("shape", ()))
        if name != exp["name"] or kind != exp["kind"]:
            raise CheckpointFormatError(
                f"tensor table mismatch: got {kind}:{name}, expected {exp['kind']}:{exp['name']}"
            )
        if shape != tuple(exp["shape"]):
            raise CheckpointFormatError(
                f"tensor {name} ({kind}): declared shape {list(shape)} does not match "
                f"model shape {exp['shape']}"
            )
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        if offset + nbytes > len(blob):
            raise CheckpointFormatError(
                f"truncated payload for tensor {name} ({kind}): need bytes "
                f"[{offset}, {offset + nbytes}), file ends at {len(blob)}"
            )
        reads.append((entry, offset, nbytes))
        offset += nbytes
    if offset != len(blob):
        raise CheckpointFormatError(
            f"{len(blob) - offset} trailing bytes after payload at byte {offset}"
        )

    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for entry, start, nbytes in reads:
        arr = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=start)
        arr = arr.reshape(tuple(entry["shape"])).astype(np.float32)
        kind, name = entry["kind"], entry["name"]
        if kind == "param":
            model.registry[name].data[...] = arr
        elif kind == "adam_m":
            adam_m[name] = arr
        else:
            adam_v[name] = arr

    return CheckpointState(
        model=model,
        train_config=header.get("train_config", {}),
        epoch=int(header["epoch"]),
        step=int(header["step"]),
        metrics=header.get("metrics", {}),
        adam_steps=header.get("adam_steps", {"g": 0, "d": 0}),
        adam_m=adam_m,
        adam_v=adam_v,
        rng_state=header.get("rng_state", {}),
    )
