"""Standard-form conic programs and a deterministic ADMM solver.

A :class:`ConicProgram` is ``min/max c.x + c0  s.t.  A x = rhs,  x in K`` where
``K`` is a product of PSD cones (Hermitian blocks), nonnegative orthants and
free blocks. Hermitian blocks are real-vectorized so that the Euclidean dot
product equals Tr(XY): diagonal entries first, then the real and imaginary
parts of the strict upper triangle scaled by sqrt(2).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

PSD, HERM, NONNEG, FREE = "psd", "herm", "nonneg", "free"
_SQRT2 = np.sqrt(2.0)
_INDEX_CACHE: dict[int, tuple] = {}


def _indices(d: int):
    if d not in _INDEX_CACHE:
        iu = np.triu_indices(d, 1)
        _INDEX_CACHE[d] = (np.arange(d), iu)
    return _INDEX_CACHE[d]


def herm_to_vec(x: np.ndarray) -> np.ndarray:
    """Vectorize a Hermitian matrix, or a stack of them along axis 0."""
    x = np.asarray(x)
    d = x.shape[-1]
    diag, (r, c) = _indices(d)
    up = x[..., r, c]
    return np.concatenate([x[..., diag, diag].real, _SQRT2 * up.real, _SQRT2 * up.imag], axis=-1)


def vec_to_herm(v: np.ndarray, d: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    diag, (r, c) = _indices(d)
    p = r.size
    out = np.zeros(v.shape[:-1] + (d, d), dtype=complex)
    out[..., diag, diag] = v[..., :d]
    up = (v[..., d:d + p] + 1j * v[..., d + p:]) / _SQRT2
    out[..., r, c] = up
    out[..., c, r] = up.conj()
    return out


@dataclass(frozen=True)
class Block:
    name: str
    kind: str
    dim: int  # matrix dimension for psd/herm blocks, length otherwise

    @property
    def size(self) -> int:
        return self.dim * self.dim if self.kind in (PSD, HERM) else self.dim


@dataclass
class ConicProgram:
    blocks: list[Block]
    A: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    sense: str = "max"
    c0: float = 0.0
    offsets: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.A.shape[0] != self.rhs.size:
            raise ValueError("constraint operator and right-hand side disagree")
        if self.sense not in ("max", "min"):
            raise ValueError(f"unknown sense {self.sense}")
        off = 0
        for b in self.blocks:
            self.offsets[b.name] = (off, off + b.size)
            off += b.size
        if off != self.A.shape[1] or off != self.c.size:
            raise ValueError("block sizes do not match the operator width")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def block(self, name: str) -> Block:
        return next(b for b in self.blocks if b.name == name)

    def decode(self, x: np.ndarray) -> dict:
        out = {}
        for b in self.blocks:
            lo, hi = self.offsets[b.name]
            out[b.name] = vec_to_herm(x[lo:hi], b.dim) if b.kind in (PSD, HERM) else x[lo:hi].copy()
        return out

    def encode(self, values: dict) -> np.ndarray:
        x = np.zeros(self.n)
        for b in self.blocks:
            if b.name in values:
                lo, hi = self.offsets[b.name]
                v = values[b.name]
                x[lo:hi] = herm_to_vec(v) if b.kind in (PSD, HERM) else np.asarray(v, float).reshape(-1)
        return x

    def value(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.c0)


class ProgramBuilder:
    """Assemble a :class:`ConicProgram` from linear maps over named blocks.

    Constraint and objective maps receive a dict of block values (Hermitian
    matrices or real vectors) and must be affine. Their matrices are obtained
    by probing with the canonical basis of every block.
    """

    def __init__(self):
        self.blocks: list[Block] = []
        self._cons: list[tuple[Callable, np.ndarray]] = []
        self._obj: Callable | None = None

    def add(self, name: str, kind: str, dim: int) -> None:
        if kind not in (PSD, HERM, NONNEG, FREE):
            raise ValueError(f"unknown block kind {kind}")
        if any(b.name == name for b in self.blocks):
            raise ValueError(f"duplicate block {name}")
        self.blocks.append(Block(name, kind, int(dim)))

    def constrain(self, fn: Callable[[dict], np.ndarray], target) -> None:
        """Add ``fn(blocks) == target``; Hermitian outputs give one row per real parameter."""
        self._cons.append((fn, np.asarray(target)))

    def objective(self, fn: Callable[[dict], float]) -> None:
        self._obj = fn

    def _zeros(self) -> dict:
        return {b.name: (np.zeros((b.dim, b.dim), complex) if b.kind in (PSD, HERM) else np.zeros(b.dim))
                for b in self.blocks}

    @staticmethod
    def _flat(y) -> np.ndarray:
        y = np.asarray(y)
        if y.ndim == 2 and y.shape[0] == y.shape[1] and np.iscomplexobj(y):
            return herm_to_vec(0.5 * (y + y.conj().T))
        return np.real(y).astype(float).reshape(-1)

    def build(self, sense: str = "max") -> ConicProgram:
        zero = self._zeros()
        probes = []
        for b in self.blocks:
            for k in range(b.size):
                e = np.zeros(b.size)
                e[k] = 1.0
                probes.append((b, vec_to_herm(e, b.dim) if b.kind in (PSD, HERM) else e))
        n = len(probes)
        rows, rhs = [], []
        for fn, target in self._cons:
            base = self._flat(fn(zero))
            cols = np.empty((base.size, n))
            for j, (b, val) in enumerate(probes):
                arg = dict(zero)
                arg[b.name] = val
                cols[:, j] = self._flat(fn(arg)) - base
            rows.append(cols)
            rhs.append(self._flat(target.astype(complex) if target.ndim == 2 else target) - base)
        A = np.vstack(rows) if rows else np.zeros((0, n))
        rhs = np.concatenate(rhs) if rhs else np.zeros(0)
        c0 = float(self._obj(zero)) if self._obj else 0.0
        c = np.array([float(self._obj({**zero, b.name: v})) - c0 for b, v in probes]) if self._obj \
            else np.zeros(n)
        return ConicProgram(list(self.blocks), A, rhs, c, sense, c0)


# --------------------------------------------------------------------------
# ADMM


@dataclass
class SolverOptions:
    rho: float = 1.0
    relax: float = 1.6
    eps_abs: float = 1e-9
    eps_rel: float = 1e-7
    max_iter: int = 200_000
    balance_every: int = 20
    balance_ratio: float = 10.0
    balance_growth: int = 1000
    stall_window: int = 5000
    monitor: Callable[[int, dict, dict], None] | None = None
    monitor_every: int = 1000


@dataclass
class SolveReport:
    status: str
    objective: float
    blocks: dict
    primal_residual: float
    dual_residual: float
    iterations: int
    rho: float
    affine_blocks: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Cone:
    """Projection onto the cone product with PSD blocks batched by dimension."""

    def __init__(self, prog: ConicProgram):
        self.groups: dict[int, list[tuple[int, int]]] = {}
        self.nonneg: list[tuple[int, int]] = []
        for b in prog.blocks:
            lo, hi = prog.offsets[b.name]
            if b.kind == PSD:
                self.groups.setdefault(b.dim, []).append((lo, hi))
            elif b.kind == NONNEG:
                self.nonneg.append((lo, hi))
        self.group_idx = {d: np.concatenate([np.arange(lo, hi) for lo, hi in spans])
                          for d, spans in self.groups.items()}
        self.nonneg_idx = (np.concatenate([np.arange(lo, hi) for lo, hi in self.nonneg])
                           if self.nonneg else np.zeros(0, int))

    def project(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        for d, idx in self.group_idx.items():
            mats = vec_to_herm(v[idx].reshape(-1, d * d), d)
            w, u = np.linalg.eigh(mats)
            proj = (u * np.clip(w, 0.0, None)[..., None, :]) @ np.conj(np.swapaxes(u, -1, -2))
            out[idx] = herm_to_vec(proj).reshape(-1)
        if self.nonneg_idx.size:
            out[self.nonneg_idx] = np.clip(v[self.nonneg_idx], 0.0, None)
        return out


class AffineProjector:
    """Projection onto {x : A x = rhs} through a pseudo-inverse of A."""

    def __init__(self, A: np.ndarray, rhs: np.ndarray, rank_tol: float = 1e-12):
        self.A = A
        if A.shape[0] == 0:
            self.pinv = np.zeros((A.shape[1], 0))
            self.x0 = np.zeros(A.shape[1])
            self.inconsistency = 0.0
            return
        u, s, vt = np.linalg.svd(A, full_matrices=False)
        keep = s > rank_tol * max(s[0], 1.0)
        u, s, vt = u[:, keep], s[keep], vt[keep]
        self.pinv = (vt.T / s) @ u.T
        self.basis = vt
        self.x0 = self.pinv @ rhs
        self.inconsistency = float(np.linalg.norm(A @ self.x0 - rhs))

    def __call__(self, v: np.ndarray) -> np.ndarray:
        if self.A.shape[0] == 0:
            return v
        return v - self.basis.T @ (self.basis @ v) + self.x0


def solve(prog: ConicProgram, opts: SolverOptions | None = None, x_start=None) -> SolveReport:
    """Solve by ADMM splitting between the affine set and the cone product."""
    opts = opts or SolverOptions()
    n = prog.n
    sign = -1.0 if prog.sense == "max" else 1.0
    c = sign * prog.c
    aff = AffineProjector(prog.A, prog.rhs)
    cone = _Cone(prog)
    scale = max(1.0, float(np.linalg.norm(prog.rhs)))
    if aff.inconsistency > 1e-8 * scale:
        log.warning("equality constraints are inconsistent (residual %.2e)", aff.inconsistency)
        x = aff(np.zeros(n))
        return SolveReport("infeasible_suspected", float("nan"), prog.decode(x),
                           aff.inconsistency, float("nan"), 0, opts.rho, prog.decode(x))

    rho = opts.rho
    z = np.zeros(n) if x_start is None else cone.project(np.asarray(x_start, float))
    u = np.zeros(n)
    eps_abs = opts.eps_abs * np.sqrt(n)
    status = "max_iter"
    r_norm = s_norm = float("inf")
    window_best = prev_window_best = float("inf")
    it = 0
    x = z
    next_balance = opts.balance_every
    for it in range(1, opts.max_iter + 1):
        x = aff(z - u - c / rho)
        xh = opts.relax * x + (1.0 - opts.relax) * z
        z_old = z
        z = cone.project(xh + u)
        u = u + xh - z
        r_norm = float(np.linalg.norm(x - z))
        s_norm = rho * float(np.linalg.norm(z - z_old))
        rel_pri = r_norm / max(1.0, np.linalg.norm(x), np.linalg.norm(z))
        rel_dual = s_norm / max(1.0, rho * np.linalg.norm(u))
        if (rel_pri <= opts.eps_rel and rel_dual <= opts.eps_rel) or max(r_norm, s_norm) <= eps_abs:
            status = "optimal"
            break
        if opts.monitor is not None and it % opts.monitor_every == 0:
            opts.monitor(it, prog.decode(z), prog.decode(x))
        if it == next_balance:
            # rebalancing rho too often can make ADMM cycle, so the period grows
            next_balance += opts.balance_every * (1 + it // opts.balance_growth)
            if r_norm > opts.balance_ratio * s_norm:
                rho *= 2.0
                u /= 2.0
            elif s_norm > opts.balance_ratio * r_norm:
                rho /= 2.0
                u *= 2.0
        window_best = min(window_best, r_norm)
        if it % opts.stall_window == 0:
            if window_best > 0.99 * prev_window_best and window_best > 1e-3 * scale:
                status = "infeasible_suspected"
                break
            prev_window_best, window_best = window_best, float("inf")
    rel_pri = r_norm / max(1.0, np.linalg.norm(x), np.linalg.norm(z))
    rel_dual = s_norm / max(1.0, rho * np.linalg.norm(u))
    log.debug("admm %s after %d iterations (r=%.2e s=%.2e rho=%g)", status, it, r_norm, s_norm, rho)
    return SolveReport(status, prog.value(z), prog.decode(z), rel_pri, rel_dual, it, rho, prog.decode(x))
