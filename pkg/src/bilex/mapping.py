"""Orthogonal (Procrustes) alignment of a source embedding space onto a target one."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable
from .lexicon import BilingualDictionary

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class EmptyAlignmentError(ValueError):
    pass


class RankDeficientWarning(UserWarning):
    pass


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Scale rows to unit Euclidean length; all-zero rows stay zero."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


@dataclass(frozen=True)
class AlignedMatrices:
    X: np.ndarray
    Z: np.ndarray
    used_pairs: tuple[tuple[str, str], ...] = ()
    dropped: int = 0
    normalized: bool = False


@dataclass(frozen=True)
class MappingModel:
    W: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"mapping matrix must be square, got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise ValueError("mapping matrix has non-finite entries")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def source_dim(self) -> int:
        return self.W.shape[0]

    @property
    def target_dim(self) -> int:
        return self.W.shape[1]

    def orthogonality_error(self) -> float:
        return float(np.abs(self.W.T @ self.W - np.eye(self.W.shape[1])).max())


def align(dictionary: BilingualDictionary, src: EmbeddingTable, tgt: EmbeddingTable,
          normalize: bool = True) -> AlignedMatrices:
    """Stack row-aligned source/target vectors for the in-vocabulary dictionary pairs."""
    if src.dim != tgt.dim:
        raise ValueError(f"source dimension {src.dim} != target dimension {tgt.dim}")
    used, si, ti = [], [], []
    for s, t in dictionary:
        i, j = src.get(s), tgt.get(t)
        if i is None or j is None:
            continue
        used.append((s, t))
        si.append(i)
        ti.append(j)
    dropped = len(dictionary) - len(used)
    if not used:
        raise EmptyAlignmentError(
            f"empty alignment: none of the {len(dictionary)} dictionary pairs is in both vocabularies"
        )
    X = src.vectors[si]
    Z = tgt.vectors[ti]
    if normalize:
        X, Z = normalize_rows(X), normalize_rows(Z)
    if dropped:
        logger.info("align: %d pairs used, %d dropped as OOV", len(used), dropped)
    return AlignedMatrices(X, Z, tuple(used), dropped, normalize)


def fit_orthogonal(am: AlignedMatrices) -> MappingModel:
    """Orthogonal W maximizing trace(W^T X^T Z), i.e. minimizing ||XW - Z||_F.

    With ``X^T Z = U S V^T`` the solution is ``W = U V^T``.
    """
    X, Z = np.asarray(am.X, dtype=np.float64), np.asarray(am.Z, dtype=np.float64)
    if X.shape != Z.shape or X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"incompatible aligned matrices {X.shape} and {Z.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
        raise ValueError("aligned matrices contain non-finite values")
    M = X.T @ Z
    U, S, Vt = np.linalg.svd(M)
    tol = S.max(initial=0.0) * max(M.shape) * np.finfo(np.float64).eps
    rank = int((S > tol).sum())
    if rank < M.shape[0]:
        warnings.warn(f"cross-covariance matrix has rank {rank} < {M.shape[0]}; "
                      "mapping is not unique", RankDeficientWarning, stacklevel=2)
    return MappingModel(U @ Vt, am.normalized)


def apply_mapping(model: MappingModel, table: EmbeddingTable) -> EmbeddingTable:
    if table.dim != model.source_dim:
        raise ValueError(f"table dimension {table.dim} != mapping dimension {model.source_dim}")
    vectors = normalize_rows(table.vectors) if model.normalized else table.vectors
    return EmbeddingTable(table.words, vectors @ model.W)


def save_model(model: MappingModel, path: str | Path) -> None:
    """JSON header record, then one full-precision matrix row per line."""
    meta = {"format_version": MODEL_FORMAT_VERSION, "rows": model.source_dim,
            "cols": model.target_dim, "normalized": model.normalized}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(meta, sort_keys=True) + "\n")
        for row in model.W.tolist():
            f.write(" ".join(repr(x) for x in row) + "\n")


def load_model(path: str | Path) -> MappingModel:
    with open(path, encoding="utf-8") as f:
        meta = json.loads(f.readline())
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported mapping format {meta.get('format_version')!r}")
        W = np.loadtxt(f, ndmin=2)
    if W.shape != (meta["rows"], meta["cols"]):
        raise ValueError(f"{path}: matrix shape {W.shape} disagrees with header")
    return MappingModel(W, bool(meta["normalized"]))
