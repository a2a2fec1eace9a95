"""Binary checkpoint format.

Layout (all integers little-endian):

    magic   b"PPONAV1"
    u32     format version (currently 1)
    u32     header length, then that many bytes of UTF-8 JSON with keys
            arch {input_dim, hidden, n_actions}, seed, iteration, adam_t,
            and the config text the run was started from
    u32     tensor count, then per tensor:
                u16 name length + UTF-8 name
                u8 ndim + u32 per dimension
                IEEE-754 float64 little-endian data, C order

Tensors are float64 end to end, so save/load round-trips are bit-exact.  The
embedded config text makes a checkpoint self-contained: evaluation and replay
can rebuild the exact world without the original config file.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nets import AdamState, ArchSpec, PolicyParams, param_tensors, params_from_tensors

MAGIC = b"PPONAV1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: PolicyParams
    adam: AdamState
    seed: int
    iteration: int
    config_text: str


def _tensor_names(arch: ArchSpec) -> list[str]:
    """Names aligned with :func:`param_tensors` order."""
    names = []
    for head, head_dim in (("policy", arch.n_actions), ("value", 1)):
        for i in range(len(arch.layer_sizes(head_dim)) - 1):
            names.append(f"{head}.{i}.weight")
            names.append(f"{head}.{i}.bias")
    return names


def save_checkpoint(path: str | Path, params: PolicyParams, adam: AdamState,
                    seed: int, iteration: int, config_text: str = "") -> None:
    arch = params.arch
    header = json.dumps({
        "arch": {"input_dim": arch.input_dim, "hidden": list(arch.hidden),
                 "n_actions": arch.n_actions},
        "seed": seed,
        "iteration": iteration,
        "adam_t": adam.t,
        "config_text": config_text,
    }).encode("utf-8")

    names = _tensor_names(arch)
    tensors = list(zip(names, param_tensors(params)))
    tensors += [(f"adam.m.{n}", t) for n, t in zip(names, adam.m)]
    tensors += [(f"adam.v.{n}", t) for n, t in zip(names, adam.v)]

    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION),
              struct.pack("<I", len(header)), header,
              struct.pack("<I", len(tensors))]
    for name, tensor in tensors:
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    """Byte cursor that reports the offset and field name on truncation."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointError(
                f"{self.path}: truncated while reading {what} at byte {self.offset} "
                f"(need {n} more, have {len(self.data) - self.offset})")
        out = self.data[self.offset:self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str, what: str):
        vals = struct.unpack(fmt, self.take(struct.calcsize(fmt), what))
        return vals[0] if len(vals) == 1 else vals


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = str(path)
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: {e}") from e
    r = _Reader(data, path)

    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version = r.unpack("<I", "format version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}, "
                              f"this build reads version {FORMAT_VERSION}")
    header_len = r.unpack("<I", "header length")
    try:
        header = json.loads(r.take(header_len, "header").decode("utf-8"))
        arch = ArchSpec(input_dim=int(header["arch"]["input_dim"]),
                        hidden=tuple(int(h) for h in header["arch"]["hidden"]),
                        n_actions=int(header["arch"]["n_actions"]))
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: malformed header: {e}") from e

    by_name: dict[str, np.ndarray] = {}
    n_tensors = r.unpack("<I", "tensor count")
    for i in range(n_tensors):
        name_len = r.unpack("<H", f"tensor {i} name length")
        name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        ndim = r.unpack("<B", f"{name} ndim")
        shape = tuple(struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"{name} shape")))
        count = int(np.prod(shape, dtype=np.int64))
        raw = r.take(count * 8, f"{name} data")
        by_name[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    names = _tensor_names(arch)
    for name, shape in zip(names, _tensor_shapes(arch)):
        for key in (name, f"adam.m.{name}", f"adam.v.{name}"):
            if key not in by_name:
                raise CheckpointError(f"{path}: missing tensor {key!r}")
            if by_name[key].shape != shape:
                raise CheckpointError(f"{path}: tensor {key!r} has shape "
                                      f"{by_name[key].shape}, expected {shape}")

    params = params_from_tensors(arch, [by_name[n] for n in names])
    adam = AdamState(m=[by_name[f"adam.m.{n}"] for n in names],
                     v=[by_name[f"adam.v.{n}"] for n in names],
                     t=int(header["adam_t"]))
    return Checkpoint(params=params, adam=adam, seed=int(header["seed"]),
                      iteration=int(header["iteration"]),
                      config_text=str(header.get("config_text", "")))


def _tensor_shapes(arch: ArchSpec) -> list[tuple[int, ...]]:
    shapes: list[tuple[int, ...]] = []
    for head_dim in (arch.n_actions, 1):
        sizes = arch.layer_sizes(head_dim)
        for i in range(len(sizes) - 1):
            shapes.append((sizes[i + 1], sizes[i]))
            shapes.append((sizes[i + 1],))
    return shapes


def checkpoint_arch(world_input_dim: int, ckpt: Checkpoint) -> ArchSpec:
    """Validate that a checkpoint matches the observation size of a world."""
    if ckpt.params.arch.input_dim != world_input_dim:
        raise CheckpointError(
            f"checkpoint expects {ckpt.params.arch.input_dim} observation values "
            f"but the configured camera produces {world_input_dim}")
    return ckpt.params.arch
