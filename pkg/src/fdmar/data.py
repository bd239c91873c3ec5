"""Dataset directory layout and raw array file format.

A dataset directory holds ``manifest.json`` plus four raw array files per
sample: ``{idx}_xm``, ``{idx}_xgt``, ``{idx}_xl``, ``{idx}_mask``. Each raw
file is a 16-byte little-endian header (magic ``ASMR``, then uint32 H, W,
channels) followed by H*W*channels float32 values in row-major order.

The manifest records the sample count, image size, per-sample eta, and the
generator seed, so a dataset is fully reproducible from its manifest.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ctsim import ArtifactPair, PhantomSpec, ProjectionGeometry, random_phantom, synthesize_pair

MAGIC = b"ASMR"
_HEADER = struct.Struct("<4sIII")

_SUFFIXES = ("xm", "xgt", "xl", "mask")


def write_array(path, array: np.ndarray) -> None:
    """Write one raw array file (float32 LE with the 16-byte header)."""
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2D or HxWxC array, got ndim={arr.ndim}")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, h, w, c))
        fh.write(arr.tobytes(order="C"))


def read_array(path) -> np.ndarray:
    """Read a raw array file; returns (H, W) for single-channel data."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, h, w, c = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * h * w * c
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(blob)}")
    arr = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)
    return arr[..., 0] if c == 1 else arr


@dataclass
class Dataset:
    """In-memory dataset: a list of pairs plus the manifest metadata."""

    pairs: list[ArtifactPair]
    image_size: int
    seed: int

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, idx) -> ArtifactPair:
        return self.pairs[idx]

    @property
    def etas(self) -> list[float]:
        return [p.eta for p in self.pairs]


def generate_dataset(n: int, size: int, eta_set, seed: int,
                     geometry: ProjectionGeometry | None = None,
                     spec: PhantomSpec = PhantomSpec()) -> Dataset:
    """Synthesize n pairs, cycling eta over eta_set, one RNG per sample.

    Per-sample RNGs are seeded with (seed, index) so generation order (or
    parallelization) cannot change the result.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    eta_set = list(eta_set)
    if not eta_set:
        raise ValueError("eta_set must be nonempty")
    geometry = geometry or ProjectionGeometry()
    pairs = []
    for idx in range(n):
        rng = np.random.default_rng([seed, idx])
        phantom = random_phantom(size, rng, spec)
        eta = eta_set[idx % len(eta_set)]
        pairs.append(synthesize_pair(phantom, eta, geometry))
    return Dataset(pairs=pairs, image_size=size, seed=seed)


def save_dataset(dataset: Dataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "n_samples": len(dataset),
        "image_size": dataset.image_size,
        "seed": dataset.seed,
        "eta": dataset.etas,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    for idx, pair in enumerate(dataset.pairs):
        for suffix, arr in zip(_SUFFIXES, (pair.x_m, pair.x_gt, pair.x_l, pair.mask_i)):
            write_array(out / f"{idx}_{suffix}", arr)


def load_dataset(in_dir) -> Dataset:
    root = Path(in_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {in_dir}")
    manifest = json.loads(manifest_path.read_text())
    pairs = []
    for idx in range(manifest["n_samples"]):
        arrays = {}
        for suffix in _SUFFIXES:
            path = root / f"{idx}_{suffix}"
            if not path.exists():
                raise FileNotFoundError(f"missing sample file {path}")
            arrays[suffix] = np.asarray(read_array(path), dtype=np.float64)
        pairs.append(ArtifactPair(
            x_m=arrays["xm"], x_gt=arrays["xgt"], x_l=arrays["xl"],
            mask_i=arrays["mask"], eta=float(manifest["eta"][idx])))
    return Dataset(pairs=pairs, image_size=int(manifest["image_size"]),
                   seed=int(manifest["seed"]))


def augment_pair(arrays: list[np.ndarray], rng: np.random.Generator,
                 rotate: bool = True, transpose: bool = True) -> list[np.ndarray]:
    """Apply one random 90-degree rotation / transposition to every array.

    The same transform hits all arrays of the sample, keeping labels and
    masks aligned with the image.
    """
    k = int(rng.integers(0, 4)) if rotate else 0
    flip = bool(rng.integers(0, 2)) if transpose else False
    out = []
    for arr in arrays:
        a = np.rot90(arr, k) if k else arr
        if flip:
            a = a.T
        out.append(np.ascontiguousarray(a))
    return out
