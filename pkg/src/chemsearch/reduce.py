"""Dimensionality reduction for embedding pipelines: PCA and sparse random
projection.

PCA is fitted from a single streaming pass of second moments; the
eigendecomposition runs on the accumulated d x d covariance, so fitting cost
is independent of the sample count.  Component signs follow a fixed
convention (the entry of largest magnitude is positive) to keep models
reproducible across runs.

The sparse random projection uses the very sparse scheme with density
``1/s`` for ``s = sqrt(d_in)``: entries are ``+-sqrt(s / d_out)`` with
probability ``1/(2s)`` each, else zero.  The matrix is generated by a
counter-based splitmix64 stream, so a (d_in, d_out, seed) triple regenerates
it bit-identically on any platform; model files only need to store the triple.

Model files::

    "PCA1" | u16 version=1 | u32 d_in | u32 d_out |
        d_in * f64 mean | d_out * d_in * f64 components | d_out * f64 eigenvalues
    "SRP1" | u16 version=1 | u32 d_in | u32 d_out | u64 seed
"""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .formats import FormatError, atomic_write, _read_exact

__all__ = [
    "PcaModel",
    "SparseProjection",
    "pca_fit",
    "pca_apply",
    "make_srp",
    "srp_apply",
    "load_model",
    "apply_model",
]

PCA_MAGIC = b"PCA1"
SRP_MAGIC = b"SRP1"
_MODEL_HEADER = struct.Struct("<4sHII")
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class PcaModel:
    """Fitted principal components.

    ``components`` rows are orthonormal and ordered by non-increasing
    ``eigenvalues``; applying the model maps x to
    ``components @ (x - mean)``.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    @property
    def d_in(self) -> int:
        return self.components.shape[1]

    @property
    def d_out(self) -> int:
        return self.components.shape[0]

    def save(self, path: str | os.PathLike) -> None:
        with atomic_write(path) as fh:
            fh.write(_MODEL_HEADER.pack(PCA_MAGIC, 1, self.d_in, self.d_out))
            fh.write(self.mean.astype("<f8").tobytes())
            fh.write(self.components.astype("<f8").tobytes())
            fh.write(self.eigenvalues.astype("<f8").tobytes())


@dataclass(frozen=True)
class SparseProjection:
    """A seeded sparse random projection, regenerated on demand."""

    d_in: int
    d_out: int
    seed: int

    def __post_init__(self):
        if self.d_in <= 0 or self.d_out <= 0:
            raise ValueError("projection dimensions must be positive")
        if self.d_out > self.d_in:
            raise ValueError(
                f"d_out {self.d_out} exceeds d_in {self.d_in}; projection must reduce"
            )
        if not (0 <= self.seed <= _MASK64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense (d_out, d_in) float64 matrix, deterministic in the seed."""
        s = np.sqrt(float(self.d_in))
        scale = np.sqrt(s / self.d_out)
        tail = 1.0 / (2.0 * s)
        u = _splitmix_uniform(self.seed, self.d_in * self.d_out)
        flat = np.where(u < tail, scale, np.where(u >= 1.0 - tail, -scale, 0.0))
        return flat.reshape(self.d_out, self.d_in)

    def save(self, path: str | os.PathLike) -> None:
        with atomic_write(path) as fh:
            fh.write(_MODEL_HEADER.pack(SRP_MAGIC, 1, self.d_in, self.d_out))
            fh.write(struct.pack("<Q", self.seed))


def _splitmix_uniform(seed: int, n: int) -> np.ndarray:
    """n uniforms in [0, 1) from the splitmix64 stream seeded with ``seed``."""
    golden = np.uint64(0x9E3779B97F4A7C15)
    k = np.arange(1, n + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + k * golden
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _as_chunks(samples) -> Iterable[np.ndarray]:
    if isinstance(samples, np.ndarray):
        return [samples]
    if isinstance(samples, (list, tuple)) and samples and np.ndim(samples[0]) == 1:
        return [np.asarray(samples)]
    return samples


def pca_fit(samples, d_out: int) -> PcaModel:
    """Fit a PCA model from vectors.

    Parameters
    ----------
    samples : (n, d_in) array-like, or an iterable of (c, d_in) chunks
        At least two vectors, all finite.
    d_out : int
        Number of components to keep; must not exceed d_in.

    Returns
    -------
    PcaModel

    Notes
    -----
    Moments are accumulated in one pass in float64; the covariance uses the
    1/(n-1) normalisation.  A warning is emitted for d_out > 20, where a
    tree over the output dimensions stops being a good idea.
    """
    n = 0
    total = None
    moments = None
    for chunk in _as_chunks(samples):
        chunk = np.asarray(chunk, dtype=np.float64)
        if chunk.ndim != 2:
            raise ValueError(f"expected 2-d sample chunks, got shape {chunk.shape}")
        if not np.isfinite(chunk).all():
            raise ValueError("samples contain non-finite values")
        if total is None:
            total = np.zeros(chunk.shape[1])
            moments = np.zeros((chunk.shape[1], chunk.shape[1]))
        elif chunk.shape[1] != len(total):
            raise ValueError(
                f"chunk dimension {chunk.shape[1]} != {len(total)}"
            )
        n += len(chunk)
        total += chunk.sum(axis=0)
        moments += chunk.T @ chunk
    if n < 2:
        raise ValueError(f"PCA needs at least 2 samples, got {n}")
    d_in = len(total)
    if not (0 < d_out <= d_in):
        raise ValueError(f"d_out must be in 1..{d_in}, got {d_out}")
    if d_out > 20:
        warnings.warn(
            f"d_out={d_out} is large for downstream spatial indexing",
            stacklevel=2,
        )
    mean = total / n
    cov = (moments - n * np.outer(mean, mean)) / (n - 1)
    cov = (cov + cov.T) / 2.0
    eigenvalues, vectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:d_out]
    eigenvalues = eigenvalues[order]
    components = vectors[:, order].T
    # Fixed sign: the largest-magnitude entry of each component is positive.
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean, np.ascontiguousarray(components), eigenvalues)


def pca_apply(model: PcaModel, x) -> np.ndarray:
    """Project a vector (d_in,) or batch (m, d_in) onto the components."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.d_in:
        raise ValueError(f"expected dimension {model.d_in}, got {x.shape[-1]}")
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    return (x - model.mean) @ model.components.T


def make_srp(d_in: int, d_out: int, seed: int) -> SparseProjection:
    """Create the sparse random projection for a (d_in, d_out, seed) triple."""
    return SparseProjection(d_in, d_out, seed)


def srp_apply(proj: SparseProjection, x) -> np.ndarray:
    """Project a vector (d_in,) or batch (m, d_in) through the sparse matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != proj.d_in:
        raise ValueError(f"expected dimension {proj.d_in}, got {x.shape[-1]}")
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    return x @ proj.matrix.T


def load_model(path: str | os.PathLike) -> PcaModel | SparseProjection:
    """Load a PCA or sparse-projection model file by magic."""
    with open(path, "rb") as fh:
        magic, version, d_in, d_out = _MODEL_HEADER.unpack(
            _read_exact(fh, _MODEL_HEADER.size, "model header")
        )
        if version != 1:
            raise FormatError(f"unsupported model version {version}")
        if magic == SRP_MAGIC:
            (seed,) = struct.unpack("<Q", _read_exact(fh, 8, "projection seed"))
            return SparseProjection(d_in, d_out, seed)
        if magic != PCA_MAGIC:
            raise FormatError(f"not a model file: bad magic {magic!r}")
        mean = np.frombuffer(_read_exact(fh, 8 * d_in, "mean"), dtype="<f8")
        components = np.frombuffer(
            _read_exact(fh, 8 * d_in * d_out, "components"), dtype="<f8"
        ).reshape(d_out, d_in)
        eigenvalues = np.frombuffer(
            _read_exact(fh, 8 * d_out, "eigenvalues"), dtype="<f8"
        )
        if fh.read(1):
            raise FormatError("trailing bytes after model payload")
    return PcaModel(mean.copy(), components.copy(), eigenvalues.copy())


def apply_model(model: PcaModel | SparseProjection, x) -> np.ndarray:
    """Dispatch to pca_apply or srp_apply based on the model type."""
    if isinstance(model, PcaModel):
        return pca_apply(model, x)
    return srp_apply(model, x)
