"""Versioned checkpoint container.

Layout: 4-byte magic ``ASCK``, uint32 format version, uint64 header length,
a canonical JSON header (sorted keys, no float rendering ambiguity since
all numerics live in the arrays), then the named arrays concatenated raw.
Each array entry records name, dtype, shape, and byte offset. Saving a
loaded checkpoint reproduces the original file byte for byte.
"""

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

MAGIC = b"ASCK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    config: dict
    epoch: int = 0
    step: int = 0
    extra: dict = field(default_factory=dict)


def _canonical_header(ckpt: Checkpoint, entries: list[dict]) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "config": ckpt.config,
        "extra": ckpt.extra,
        "arrays": entries,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    entries = []
    payload = io.BytesIO()
    for name in sorted(ckpt.arrays):
        arr = np.ascontiguousarray(ckpt.arrays[name])
        entries.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": payload.tell(),
        })
        payload.write(arr.tobytes(order="C"))
    header = _canonical_header(ckpt, entries)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload.getvalue())


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        raise ValueError(f"{path}: truncated prefix")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    header = json.loads(blob[_PREFIX.size:_PREFIX.size + header_len])
    base = _PREFIX.size + header_len
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = base + entry["offset"]
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(arrays=arrays, config=header["config"],
                      epoch=header["epoch"], step=header["step"],
                      extra=header.get("extra", {}))


# --------------------------------------------------------------------------
# torch model/optimizer bridging

def state_to_arrays(model: torch.nn.Module,
                    optimizer: torch.optim.Optimizer | None = None) -> dict[str, np.ndarray]:
    arrays = {}
    for name, tensor in model.state_dict().items():
        arrays[f"model/{name}"] = tensor.detach().cpu().numpy()
    if optimizer is not None:
        params = [p for group in optimizer.param_groups for p in group["params"]]
        names = {id(p): n for n, p in model.named_parameters()}
        for p in params:
            state = optimizer.state.get(p)
            if not state:
                continue
            pname = names[id(p)]
            for key, val in state.items():
                if torch.is_tensor(val):
                    arrays[f"optim/{pname}/{key}"] = val.detach().cpu().numpy()
                else:
                    arrays[f"optim/{pname}/{key}"] = np.asarray(val)
    return arrays


def load_model_arrays(model: torch.nn.Module, arrays: dict[str, np.ndarray]) -> None:
    state = {}
    for key, arr in arrays.items():
        if key.startswith("model/"):
            state[key[len("model/"):]] = torch.from_numpy(arr.copy())
    missing = set(model.state_dict()) - set(state)
    if missing:
        raise ValueError(f"checkpoint is missing model arrays: {sorted(missing)[:5]}")
    model.load_state_dict(state)


def load_optimizer_arrays(model: torch.nn.Module, optimizer: torch.optim.Optimizer,
                          arrays: dict[str, np.ndarray]) -> None:
    by_param: dict[str, dict[str, np.ndarray]] = {}
    for key, arr in arrays.items():
        if key.startswith("optim/"):
            _, pname, slot = key.split("/", 2)
            by_param.setdefault(pname, {})[slot] = arr
    if not by_param:
        return
    params = dict(model.named_parameters())
    for pname, slots in by_param.items():
        p = params[pname]
        state = {}
        for slot, arr in slots.items():
            tensor = torch.from_numpy(arr.copy())
            state[slot] = tensor.reshape(()) if tensor.ndim == 0 else tensor
        optimizer.state[p] = state
