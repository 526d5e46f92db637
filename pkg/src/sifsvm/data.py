"""Sparse dataset container, LibSVM I/O and the synthetic generator.

The design matrix is kept in label-folded form: column ``i`` holds
``y_i * x_i``. Both a CSR view (feature-major, shape ``p x n``) and a CSC
view (sample-major) of the same matrix are stored, since feature screening
walks rows and sample screening / the solver walk columns.
"""

from __future__ import annotations

import gzip
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "SparseVec",
    "SynthSpec",
    "LibsvmFormatError",
    "parse_libsvm",
    "load_libsvm",
    "serialize_libsvm",
    "save_libsvm",
    "generate_synthetic",
]


class LibsvmFormatError(ValueError):
    """Malformed LibSVM input. Carries the 1-based line number when known."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass(frozen=True)
class SparseVec:
    """A sparse slice of the design matrix (one row or one column).

    ``indices`` are sorted positions into a dense vector of size ``length``;
    ``values`` are the matching nonzeros.
    """

    indices: np.ndarray
    values: np.ndarray
    length: int

    def restrict(self, keep: np.ndarray) -> "SparseVec":
        """Entries whose index is flagged in the boolean mask ``keep``."""
        if keep.shape[0] != self.length:
            raise ValueError(
                f"mask has length {keep.shape[0]}, expected {self.length}"
            )
        sel = keep[self.indices]
        return SparseVec(self.indices[sel], self.values[sel], self.length)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def dot(self, dense: np.ndarray) -> float:
        return float(self.values @ dense[self.indices])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.length)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])


class Dataset:
    """Immutable labeled sparse design in folded (label times feature) form."""

    def __init__(self, xbar: sp.spmatrix, labels: np.ndarray, meta: dict | None = None):
        labels = np.asarray(labels, dtype=np.float64)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")
        csr = sp.csr_matrix(xbar, dtype=np.float64)
        if csr.shape[1] != labels.shape[0]:
            raise ValueError(
                f"design has {csr.shape[1]} columns but {labels.shape[0]} labels"
            )
        csr.eliminate_zeros()
        csr.sum_duplicates()
        csr.sort_indices()
        self._csr = csr
        self._csc = csr.tocsc()
        self._csc.sort_indices()
        self._labels = labels
        self._labels.setflags(write=False)
        self._sq_csr = None
        self._sq_csc = None
        self._row_sqnorms = None
        self._col_sqnorms = None
        self.meta = dict(meta or {})

    # -- basic shape -------------------------------------------------------

    @property
    def p(self) -> int:
        return self._csr.shape[0]

    @property
    def n(self) -> int:
        return self._csr.shape[1]

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def xbar_csr(self) -> sp.csr_matrix:
        return self._csr

    @property
    def xbar_csc(self) -> sp.csc_matrix:
        return self._csc

    # -- cached derived structure -------------------------------------------

    @property
    def xbar_sq_csr(self) -> sp.csr_matrix:
        """Same sparsity as ``xbar_csr`` with squared values (for norm passes)."""
        if self._sq_csr is None:
            m = self._csr.copy()
            m.data **= 2
            self._sq_csr = m
        return self._sq_csr

    @property
    def xbar_sq_csc(self) -> sp.csc_matrix:
        if self._sq_csc is None:
            m = self._csc.copy()
            m.data **= 2
            self._sq_csc = m
        return self._sq_csc

    @property
    def row_sqnorms(self) -> np.ndarray:
        if self._row_sqnorms is None:
            self._row_sqnorms = np.asarray(self.xbar_sq_csr.sum(axis=1)).ravel()
            self._row_sqnorms.setflags(write=False)
        return self._row_sqnorms

    @property
    def col_sqnorms(self) -> np.ndarray:
        if self._col_sqnorms is None:
            self._col_sqnorms = np.asarray(self.xbar_sq_csc.sum(axis=0)).ravel()
            self._col_sqnorms.setflags(write=False)
        return self._col_sqnorms

    # -- views ----------------------------------------------------------------

    def row_view(self, i: int) -> SparseVec:
        """Feature row ``i`` over samples (the i-th coordinate of every x-bar)."""
        lo, hi = self._csr.indptr[i], self._csr.indptr[i + 1]
        return SparseVec(self._csr.indices[lo:hi], self._csr.data[lo:hi], self.n)

    def col_view(self, i: int) -> SparseVec:
        """Sample column ``i`` over features (the vector y_i * x_i)."""
        lo, hi = self._csc.indptr[i], self._csc.indptr[i + 1]
        return SparseVec(self._csc.indices[lo:hi], self._csc.data[lo:hi], self.p)

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, p={self.p}, nnz={self.nnz})"


# ---------------------------------------------------------------------------
# LibSVM parsing / serialization
# ---------------------------------------------------------------------------


def parse_libsvm(source: Union[str, IO[str], Iterable[str]], n_features: int | None = None) -> Dataset:
    """Parse LibSVM-format text into a :class:`Dataset`.

    ``source`` may be a string of lines or any iterable of lines. Feature
    indices are 1-based and must be strictly increasing within a line; labels
    are mapped to +1/-1 by sign. ``n_features`` pins the feature count when
    the data are known to be wider than the largest index present.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    labels: list[float] = []
    raw_labels: set[float] = set()
    col_rows: list[np.ndarray] = []
    col_vals: list[np.ndarray] = []
    max_index = 0
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            raw = float(tokens[0])
        except ValueError:
            raise LibsvmFormatError(f"invalid label {tokens[0]!r}", line_no) from None
        raw_labels.add(raw)
        labels.append(1.0 if raw > 0 else -1.0)
        idx = np.empty(len(tokens) - 1, dtype=np.int64)
        val = np.empty(len(tokens) - 1, dtype=np.float64)
        prev = 0
        for t, token in enumerate(tokens[1:]):
            head, sep, tail = token.partition(":")
            if not sep:
                raise LibsvmFormatError(f"expected index:value, got {token!r}", line_no)
            try:
                j = int(head)
                x = float(tail)
            except ValueError:
                raise LibsvmFormatError(f"expected index:value, got {token!r}", line_no) from None
            if j <= prev:
                raise LibsvmFormatError(
                    f"feature indices must be strictly increasing (got {j} after {prev})",
                    line_no,
                )
            prev = j
            idx[t] = j
            val[t] = x
        if idx.size:
            max_index = max(max_index, int(idx[-1]))
        col_rows.append(idx - 1)
        col_vals.append(val)
    n = len(labels)
    if n == 0:
        raise LibsvmFormatError("no data lines found")
    if n_features is not None:
        if n_features < max_index:
            raise LibsvmFormatError(
                f"n_features={n_features} is smaller than the largest index {max_index}"
            )
        p = n_features
    else:
        p = max_index
    if raw_labels - {-1.0, 1.0}:
        logger.info(
            "mapped raw labels %s to +1/-1 by sign",
            sorted(raw_labels - {-1.0, 1.0}),
        )
    y = np.asarray(labels)
    rows = np.concatenate(col_rows) if col_rows else np.empty(0, dtype=np.int64)
    cols = np.repeat(np.arange(n), [r.size for r in col_rows])
    vals = np.concatenate(col_vals) if col_vals else np.empty(0)
    vals = vals * y[cols]
    xbar = sp.coo_matrix((vals, (rows, cols)), shape=(p, n))
    return Dataset(xbar, y, meta={"source": "libsvm"})


def load_libsvm(path: str | Path, n_features: int | None = None) -> Dataset:
    """Load a LibSVM file; ``.gz`` paths are decompressed transparently."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt") as fh:
        d = parse_libsvm(fh, n_features=n_features)
    d.meta["path"] = str(path)
    return d


def serialize_libsvm(d: Dataset, stream: IO[str]) -> None:
    """Write ``d`` back out as LibSVM text (raw features, labels unfolded)."""
    csc = d.xbar_csc
    for i in range(d.n):
        y = d.labels[i]
        lo, hi = csc.indptr[i], csc.indptr[i + 1]
        parts = [f"{int(y)}"]
        for j, v in zip(csc.indices[lo:hi], csc.data[lo:hi]):
            parts.append(f"{j + 1}:{float(v * y)!r}")
        stream.write(" ".join(parts) + "\n")


def save_libsvm(d: Dataset, path: str | Path) -> None:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt") as fh:
        serialize_libsvm(d, fh)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Two-block Gaussian synthetic design.

    The first ``floor(informative_fraction * p)`` features are drawn from
    N(mu_scale, 0.75) after label folding; the rest are background noise,
    nonzero with probability ``eta`` and N(0, 1) when present. Classes are
    balanced.
    """

    n: int
    p: int
    eta: float = 0.02
    mu_scale: float = 1.5
    informative_fraction: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two samples")
        if self.p < 1:
            raise ValueError("need at least one feature")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if not 0.0 < self.informative_fraction <= 1.0:
            raise ValueError("informative_fraction must lie in (0, 1]")
        if math.floor(self.informative_fraction * self.p) < 1:
            raise ValueError("informative block would be empty; increase p or the fraction")

    @property
    def n_informative(self) -> int:
        return math.floor(self.informative_fraction * self.p)


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Draw a :class:`Dataset` according to ``spec``, deterministically per seed."""
    rng = np.random.default_rng(spec.seed)
    n, p, k = spec.n, spec.p, spec.n_informative
    n_pos = n // 2
    y = np.concatenate([np.ones(n_pos), -np.ones(n - n_pos)])
    centers = np.where(y[:, None] > 0, spec.mu_scale, -spec.mu_scale)
    x1 = rng.normal(loc=centers, scale=math.sqrt(0.75), size=(n, k))
    p2 = p - k
    if p2 > 0:
        mask = rng.random((n, p2)) < spec.eta
        x2 = np.where(mask, rng.normal(size=(n, p2)), 0.0)
        rows, cols = np.nonzero(mask)
        background = sp.coo_matrix((x2[rows, cols], (rows, cols)), shape=(n, p2))
        x = sp.hstack([sp.csr_matrix(x1), background.tocsr()], format="csr")
    else:
        x = sp.csr_matrix(x1)
    xbar = (x.T @ sp.diags(y)).tocsr()
    meta = {
        "source": "synthetic",
        "seed": spec.seed,
        "eta": spec.eta,
        "mu_scale": spec.mu_scale,
        "informative_features": k,
        "features_normalized": False,
    }
    return Dataset(xbar, y, meta=meta)
