"""Spatial covariance matrices and the real-folded tensor form.

Per sub-band the receiver gain vector is normalized to unit norm and its
outer product taken, giving a Hermitian, unit-trace, rank-1 matrix that is
invariant to common phase and positive scaling of the gains. For use as a
real-valued model input, the upper triangle (diagonal included) is kept
and the imaginary part folded below the diagonal, then each frequency
slice is standardized to zero mean and unit sample variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DegenerateInputError


def normalize_gains(q: np.ndarray) -> np.ndarray:
    """Scale a complex gain vector to unit 2-norm."""
    q = np.asarray(q, dtype=np.complex128)
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise DataError("cannot normalize a zero gain vector")
    return q / norm


def scm_at_subband(q_unit: np.ndarray) -> np.ndarray:
    """Outer product q q^H of a unit-norm gain vector."""
    q_unit = np.asarray(q_unit, dtype=np.complex128)
    return np.outer(q_unit, q_unit.conj())


@dataclass(frozen=True)
class ScmTensor:
    """K stacked per-sub-band covariance matrices, each N_rx x N_rx."""

    C: np.ndarray                    # (K, N_rx, N_rx) complex
    folded: np.ndarray | None = None  # (K, N_rx, N_rx) real, after preprocessing

    def __post_init__(self):
        c = np.asarray(self.C, dtype=np.complex128)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise ConfigError("SCM stack must have shape (K, N, N)")
        object.__setattr__(self, "C", c)

    @property
    def k(self) -> int:
        return self.C.shape[0]

    @property
    def n_rx(self) -> int:
        return self.C.shape[1]


def stack_scm(matrices) -> ScmTensor:
    """Stack per-sub-band matrices along a leading frequency axis."""
    mats = [np.asarray(m, dtype=np.complex128) for m in matrices]
    if not mats:
        raise ConfigError("cannot stack an empty matrix list")
    shape = mats[0].shape
    for i, m in enumerate(mats):
        if m.shape != shape:
            raise ConfigError(f"matrix {i} has shape {m.shape}, expected {shape}")
    return ScmTensor(C=np.stack(mats, axis=0))


def scm_from_snapshot(gains: np.ndarray) -> ScmTensor:
    """Build the full SCM stack from an (N_rx, K) gain matrix."""
    g = np.asarray(gains, dtype=np.complex128)
    return stack_scm([scm_at_subband(normalize_gains(g[:, k])) for k in range(g.shape[1])])


def real_fold(c: np.ndarray) -> np.ndarray:
    """Fold a Hermitian matrix to real: Re of the upper triangle (diagonal
    included) plus the transposed Im of the upper triangle below it."""
    c = np.asarray(c, dtype=np.complex128)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {c.shape}")
    u = np.triu(c)
    return np.real(u) + np.imag(u).T


def real_unfold(folded: np.ndarray) -> np.ndarray:
    """Inverse of real_fold for Hermitian inputs."""
    f = np.asarray(folded, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {f.shape}")
    upper = np.triu(f, 1)
    lower = np.tril(f, -1)
    herm = upper + 1j * lower.T
    return herm + herm.conj().T + np.diag(np.diag(f)).astype(np.complex128)


def standardize(folded: np.ndarray) -> np.ndarray:
    """Shift/scale each frequency slice to zero mean, unit sample std."""
    x = np.asarray(folded, dtype=np.float64)
    slices = x.reshape(-1, x.shape[-2], x.shape[-1]) if x.ndim == 3 else x[None]
    out = np.empty_like(slices)
    for i, s in enumerate(slices):
        std = s.std(ddof=1)
        if std == 0.0:
            raise DegenerateInputError(f"slice {i} is constant; cannot standardize")
        out[i] = (s - s.mean()) / std
    return out if x.ndim == 3 else out[0]


def fold_tensor(tensor: ScmTensor, standardized: bool = True) -> ScmTensor:
    """Attach the real-folded (optionally standardized) form to the stack."""
    folded = np.stack([real_fold(c) for c in tensor.C], axis=0)
    if standardized:
        folded = standardize(folded)
    return ScmTensor(C=tensor.C, folded=folded)
