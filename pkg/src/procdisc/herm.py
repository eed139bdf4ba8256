"""Dense complex Hermitian linear algebra.

Matrices are plain complex ``numpy`` arrays. Tensor factors of a multi-step
system are ordered ``W_T, V_T, ..., W_1, V_1`` with ``V_1`` varying fastest,
so a single step is the basis ``|w v>`` with flat index ``w * n_v + v``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

ASYMMETRY_WARN = 1e-9
ASYMMETRY_REJECT = 1e-6


class HermitianError(ValueError):
    """Raised when a matrix is too far from Hermitian to be symmetrized."""

    def __init__(self, violation: float):
        super().__init__(f"matrix is not Hermitian: max |H - H^dag| = {violation:.3e}")
        self.violation = violation


def asymmetry(x: np.ndarray) -> float:
    x = np.asarray(x)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x - x.conj().T)))


def hermitian(x, *, reject: float = ASYMMETRY_REJECT) -> np.ndarray:
    """Return ``(x + x^dag) / 2`` as a complex array.

    A warning is issued when the input asymmetry exceeds 1e-9 and a
    :class:`HermitianError` when it exceeds ``reject`` (scaled by the norm).
    """
    x = np.array(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {x.shape}")
    viol = asymmetry(x)
    scale = max(1.0, float(np.max(np.abs(x)))) if x.size else 1.0
    if viol > reject * scale:
        raise HermitianError(viol)
    if viol > ASYMMETRY_WARN * scale:
        warnings.warn(f"symmetrizing matrix with asymmetry {viol:.3e}", stacklevel=2)
    return 0.5 * (x + x.conj().T)


def inner(x: np.ndarray, y: np.ndarray) -> float:
    """Hilbert-Schmidt inner product Tr(x y) of two Hermitian matrices."""
    return float(np.real(np.vdot(np.asarray(x).conj().T, y)))


def kron(*ms: np.ndarray) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


# --------------------------------------------------------------------------
# eigendecomposition


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def _jacobi_rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    apq = a[p, q]
    mag = abs(apq)
    phase = apq / mag
    tau = (a[q, q].real - a[p, p].real) / (2.0 * mag)
    if abs(tau) > 1e150:  # tau^2 would overflow; t ~ 1 / (2 tau)
        t = 0.5 / tau
    else:
        t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    # J = [[c, s*phase], [-s*conj(phase), c]] on (p, q); a <- J^dag a J
    sp = s * phase
    col_p = a[:, p].copy()
    col_q = a[:, q]
    a[:, p] = c * col_p - s * np.conj(phase) * col_q
    a[:, q] = sp * col_p + c * col_q
    row_p = a[p, :].copy()
    row_q = a[q, :]
    a[p, :] = c * row_p - s * phase * row_q
    a[q, :] = np.conj(sp) * row_p + c * row_q
    a[p, q] = 0.0
    a[q, p] = 0.0
    a[p, p] = a[p, p].real
    a[q, q] = a[q, q].real
    vp = v[:, p].copy()
    vq = v[:, q]
    v[:, p] = c * vp - s * np.conj(phase) * vq
    v[:, q] = sp * vp + c * vq


def eig_herm(h, *, tol: float = 1e-13, max_sweeps: int = 100) -> EigenDecomposition:
    """Cyclic Jacobi eigendecomposition of a complex Hermitian matrix.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
    drops below ``tol`` times the Frobenius norm of the input. Eigenvalues
    are returned in ascending order.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    n = h.shape[0]
    scale = max(1.0, float(np.linalg.norm(h)))
    viol = asymmetry(h)
    if viol > 1e-9 * scale:
        raise HermitianError(viol)
    a = 0.5 * (h + h.conj().T)
    v = np.eye(n, dtype=complex)
    norm = float(np.linalg.norm(a))
    target = tol * max(norm, np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > 1e-300:
                    _jacobi_rotate(a, v, p, q)
    else:
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off > target:
            raise RuntimeError(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.2e})")
    w = np.real(np.diag(a))
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], v[:, order])


def psd_project(h) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clamp negative eigenvalues to zero."""
    w, v = eig_herm(h)
    out = (v * np.clip(w, 0.0, None)) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def herm_abs(h) -> np.ndarray:
    """Matrix absolute value |h| = sqrt(h^dag h)."""
    w, v = eig_herm(h)
    out = (v * np.abs(w)) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def trace_norm(h) -> float:
    return float(np.sum(np.abs(eig_herm(h).eigenvalues)))


def lambda_max(h) -> float:
    return float(eig_herm(h).eigenvalues[-1])


def lambda_min(h) -> float:
    return float(eig_herm(h).eigenvalues[0])


# --------------------------------------------------------------------------
# tensor factors


def partial_trace(x: np.ndarray, dims: Sequence[int], drop: Sequence[int]) -> np.ndarray:
    """Trace out the factors with positions ``drop`` of a matrix on ``dims``.

    ``dims`` lists the factor dimensions left to right (rightmost fastest).
    """
    dims = [int(d) for d in dims]
    total = int(np.prod(dims)) if dims else 1
    x = np.asarray(x)
    if x.shape != (total, total):
        raise ValueError(f"matrix of shape {x.shape} does not match factor dims {dims}")
    drop = sorted({int(i) for i in drop})
    if any(i < 0 or i >= len(dims) for i in drop):
        raise ValueError(f"factor selection {drop} out of range for {len(dims)} factors")
    n = len(dims)
    t = x.reshape(dims + dims)
    for removed, i in enumerate(drop):
        k = i - removed
        m = n - removed
        t = np.trace(t, axis1=k, axis2=k + m)
    keep = [d for i, d in enumerate(dims) if i not in drop]
    size = int(np.prod(keep)) if keep else 1
    return t.reshape(size, size)


def permute_factors(x: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: factor ``perm[i]`` of the input becomes factor ``i``."""
    dims = [int(d) for d in dims]
    n = len(dims)
    total = int(np.prod(dims))
    t = np.asarray(x).reshape(dims + dims)
    axes = list(perm) + [n + p for p in perm]
    return t.transpose(axes).reshape(total, total)


def partial_transpose(x: np.ndarray, dims: Sequence[int], which: Sequence[int]) -> np.ndarray:
    dims = [int(d) for d in dims]
    n = len(dims)
    total = int(np.prod(dims))
    axes = list(range(2 * n))
    for i in which:
        axes[i], axes[n + i] = axes[n + i], axes[i]
    return np.asarray(x).reshape(dims + dims).transpose(axes).reshape(total, total)


@dataclass(frozen=True)
class SystemLayout:
    """Step dimensions ``(n_v, n_w)`` for t = 1..T.

    ``steps[0]`` is step 1. Flattened factor order is W_T, V_T, ..., W_1, V_1.
    """

    steps: tuple[tuple[int, int], ...]

    def __post_init__(self):
        steps = tuple((int(v), int(w)) for v, w in self.steps)
        if not steps:
            raise ValueError("layout needs at least one step")
        if any(v < 1 or w < 1 for v, w in steps):
            raise ValueError(f"all dimensions must be >= 1, got {steps}")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def single(cls, n_v: int, n_w: int) -> "SystemLayout":
        return cls(((n_v, n_w),))

    @property
    def T(self) -> int:
        return len(self.steps)

    def n_v(self, t: int) -> int:
        return self.steps[t - 1][0]

    def n_w(self, t: int) -> int:
        return self.steps[t - 1][1]

    @property
    def total_dim(self) -> int:
        return int(np.prod([v * w for v, w in self.steps]))

    @property
    def input_dim(self) -> int:
        return int(np.prod([v for v, _ in self.steps]))

    @property
    def output_dim(self) -> int:
        return int(np.prod([w for _, w in self.steps]))

    def dims(self) -> list[int]:
        """Factor dims in flat order W_T, V_T, ..., W_1, V_1."""
        out = []
        for v, w in reversed(self.steps):
            out += [w, v]
        return out

    def labels(self) -> list[str]:
        out = []
        for t in range(self.T, 0, -1):
            out += [f"W{t}", f"V{t}"]
        return out

    def index(self, label: str) -> int:
        return self.labels().index(label)

    def truncated(self, t: int) -> "SystemLayout":
        """Layout of steps 1..t."""
        if not 1 <= t <= self.T:
            raise ValueError(f"cannot truncate a {self.T}-step layout to {t} steps")
        return SystemLayout(self.steps[:t])

    def dim_upto(self, t: int) -> int:
        """Dimension of W_t V_t ... W_1 V_1 (1 for t = 0)."""
        return int(np.prod([v * w for v, w in self.steps[:t]])) if t > 0 else 1

    def trace_out(self, x: np.ndarray, labels: Sequence[str]) -> np.ndarray:
        return partial_trace(x, self.dims(), [self.index(s) for s in labels])
