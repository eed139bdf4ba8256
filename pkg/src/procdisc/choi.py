"""Choi matrices of processes (combs) and testers.

A comb on layout ``L`` is a PSD matrix ``c`` on ``W_T V_T ... W_1 V_1`` whose
marginals satisfy ``Tr_{W_t} c_t = I_{V_t} (x) c_{t-1}`` with ``c_T = c`` and
``c_0 = 1``. A tester is a list of PSD matrices whose sum lies in a
normalization set picked by :class:`TesterSet`.
"""
from __future__ import annotations

import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .herm import SystemLayout, eig_herm, hermitian, kron, partial_trace, permute_factors

DEFAULT_TOL = 1e-8


class TesterSet(str, Enum):
    """Normalization set of a tester; the cone is always the PSD product."""

    GENERAL = "general"
    FIXED_ENTANGLED = "fixed_entangled"
    NONADAPTIVE = "nonadaptive"


@dataclass(frozen=True)
class ProcessChoi:
    layout: SystemLayout
    matrix: np.ndarray
    kind: str = "hermitian"  # hermitian | cp | comb

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise ValueError(f"Choi matrix shape {m.shape} does not match layout dim {d}")
        if self.kind not in ("hermitian", "cp", "comb"):
            raise ValueError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "matrix", hermitian(m))


@dataclass(frozen=True)
class Tester:
    layout: SystemLayout
    elements: tuple
    descriptor: TesterSet = TesterSet.GENERAL

    def __post_init__(self):
        d = self.layout.total_dim
        els = tuple(hermitian(e) for e in self.elements)
        if not els:
            raise ValueError("a tester needs at least one element")
        for e in els:
            if e.shape != (d, d):
                raise ValueError(f"tester element shape {e.shape} does not match layout dim {d}")
        object.__setattr__(self, "elements", els)
        object.__setattr__(self, "descriptor", TesterSet(self.descriptor))

    @property
    def M(self) -> int:
        return len(self.elements)

    def total(self) -> np.ndarray:
        return sum(self.elements)


@dataclass
class ValidationReport:
    ok: bool
    residuals: dict = field(default_factory=dict)
    chain: list = field(default_factory=list)

    def __iter__(self):
        # allows ``ok, chain, residuals = validate_comb(...)``
        return iter((self.ok, self.chain, self.residuals))


# --------------------------------------------------------------------------
# construction


def max_entangled_choi(n: int) -> np.ndarray:
    """|I>><<I| on C^n (x) C^n (unnormalized, trace n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    v = np.eye(n, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def choi_from_kraus(kraus: Sequence) -> ProcessChoi:
    """Choi matrix sum_ij L(|i><j|) (x) |i><j| of the map with the given Kraus operators."""
    ks = [np.atleast_2d(np.asarray(k, dtype=complex)) for k in kraus]
    if not ks:
        raise ValueError("need at least one Kraus operator")
    shape = ks[0].shape
    if any(k.shape != shape for k in ks):
        raise ValueError(f"inconsistent Kraus shapes {[k.shape for k in ks]}")
    n_w, n_v = shape
    # |K>> has entry K[w, v] at index w * n_v + v
    m = sum(np.outer(k.reshape(-1), k.reshape(-1).conj()) for k in ks)
    tp = np.allclose(sum(k.conj().T @ k for k in ks), np.eye(n_v), atol=1e-10)
    return ProcessChoi(SystemLayout.single(n_v, n_w), m, "comb" if tp else "cp")


def choi_from_unitary(u) -> ProcessChoi:
    return choi_from_kraus([u])


def link_tensor(steps: Sequence[ProcessChoi]) -> ProcessChoi:
    """Memoryless comb from single-step Choi matrices; ``steps[0]`` is step 1."""
    if not steps:
        raise ValueError("need at least one step")
    for s in steps:
        if s.layout.T != 1:
            raise ValueError("link_tensor expects single-step Choi matrices")
    layout = SystemLayout(tuple(s.layout.steps[0] for s in steps))
    if layout.total_dim > 4096:
        raise ValueError(f"combined dimension {layout.total_dim} is too large")
    m = kron(*[s.matrix for s in reversed(steps)])
    kind = "comb" if all(s.kind == "comb" for s in steps) else (
        "cp" if all(s.kind in ("cp", "comb") for s in steps) else "hermitian")
    return ProcessChoi(layout, m, kind)


def link_product(a: np.ndarray, a_systems: Sequence[tuple[str, int]],
                 b: np.ndarray, b_systems: Sequence[tuple[str, int]],
                 out_order: Sequence[str] | None = None):
    """Link product of two Choi matrices over their shared labelled systems.

    Systems are ``(label, dim)`` pairs in flat order. Uses
    ``a * b = Tr_s[(a^{T_s} (x) I)(I (x) b)]`` for the shared set ``s``.
    Returns ``(matrix, systems)``.
    """
    a_lab = [s for s, _ in a_systems]
    b_lab = [s for s, _ in b_systems]
    dims = dict(a_systems)
    for s, d in b_systems:
        if s in dims and dims[s] != d:
            raise ValueError(f"system {s} has dims {dims[s]} and {d}")
        dims[s] = d
    shared = [s for s in a_lab if s in b_lab]
    letters = iter(string.ascii_letters)
    row = {s: next(letters) for s in dims}
    col = {s: next(letters) for s in dims}
    # the partial transpose and the trace combine into a row-row, col-col contraction
    a_row = "".join(row[s] for s in a_lab)
    a_col = "".join(col[s] for s in a_lab)
    b_row = "".join(row[s] for s in b_lab)
    b_col = "".join(col[s] for s in b_lab)
    out = [s for s in a_lab if s not in shared] + [s for s in b_lab if s not in shared]
    out_row = "".join(row[s] for s in out)
    out_col = "".join(col[s] for s in out)
    at = np.asarray(a).reshape([dims[s] for s in a_lab] * 2)
    bt = np.asarray(b).reshape([dims[s] for s in b_lab] * 2)
    res = np.einsum(f"{a_row}{a_col},{b_row}{b_col}->{out_row}{out_col}", at, bt)
    size = int(np.prod([dims[s] for s in out])) if out else 1
    res = res.reshape(size, size)
    if out_order is not None:
        if sorted(out_order) != sorted(out):
            raise ValueError(f"out_order {list(out_order)} does not match {out}")
        res = permute_factors(res, [dims[s] for s in out], [out.index(s) for s in out_order])
        out = list(out_order)
    return res, [(s, dims[s]) for s in out]


# --------------------------------------------------------------------------
# marginal chains


def forced_chain(x: np.ndarray, layout: SystemLayout) -> list[np.ndarray]:
    """The chain ``x_t = Tr_{W_{t+1} V_{t+1}} x_{t+1} / N_{V_{t+1}}`` indexed by level.

    ``chain[T]`` is ``x`` and ``chain[0]`` is a 1x1 matrix.
    """
    x = np.asarray(x, dtype=complex)
    if x.shape != (layout.total_dim,) * 2:
        raise ValueError(f"matrix shape {x.shape} does not match layout dim {layout.total_dim}")
    chain = [None] * (layout.T + 1)
    chain[layout.T] = x
    for t in range(layout.T, 0, -1):
        sub = layout.truncated(t)
        chain[t - 1] = partial_trace(chain[t], sub.dims(), [0, 1]) / layout.n_v(t)
    return chain


def chain_residuals(chain: Sequence[np.ndarray], layout: SystemLayout) -> list[float]:
    """Frobenius residuals of ``Tr_{W_t} x_t = I_{V_t} (x) x_{t-1}`` for t = 1..T."""
    out = []
    for t in range(1, layout.T + 1):
        sub = layout.truncated(t)
        lhs = partial_trace(chain[t], sub.dims(), [0])
        rhs = np.kron(np.eye(layout.n_v(t)), chain[t - 1])
        out.append(float(np.linalg.norm(lhs - rhs)))
    return out


def min_eig(x: np.ndarray) -> float:
    return float(eig_herm(x).eigenvalues[0])


def validate_comb(c: ProcessChoi, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check positivity and the marginal chain of a comb. Never raises on invalid input."""
    chain = forced_chain(c.matrix, c.layout)
    res = {"levels": chain_residuals(chain, c.layout)}
    res["normalization"] = abs(float(chain[0][0, 0].real) - 1.0)
    res["psd"] = max(0.0, -min_eig(c.matrix))
    ok = max(res["levels"] + [res["normalization"], res["psd"]]) <= tol
    return ValidationReport(ok, res, chain)


def lin_chn_membership(x: np.ndarray, layout: SystemLayout,
                       tol: float = DEFAULT_TOL) -> tuple[bool, list[np.ndarray]]:
    """Membership in the real span of combs; positivity is not required."""
    x = hermitian(x)
    chain = forced_chain(x, layout)
    scale = max(1.0, float(np.linalg.norm(x)))
    ok = max(chain_residuals(chain, layout)) <= tol * scale
    return ok, chain


# --------------------------------------------------------------------------
# tester normalization sets


def nonadaptive_perm(layout: SystemLayout) -> tuple[list[int], list[int]]:
    """Factor dims and permutation taking (W2, W1, V2, V1) order to (W2, V2, W1, V1)."""
    if layout.T != 2:
        raise ValueError("the nonadaptive tester set is implemented for T = 2 only")
    (v1, w1), (v2, w2) = layout.steps
    return [w2, w1, v2, v1], [0, 2, 1, 3]


def nonadaptive_embed(rho: np.ndarray, layout: SystemLayout) -> np.ndarray:
    """``(1 (x) SWAP_{W1,V2} (x) 1)(I_{W2 W1} (x) rho)(...)^dag`` for rho on V2 V1."""
    dims, perm = nonadaptive_perm(layout)
    big = np.kron(np.eye(dims[0] * dims[1]), rho)
    return permute_factors(big, dims, perm)


def nonadaptive_contract(x: np.ndarray, layout: SystemLayout) -> np.ndarray:
    """Adjoint of :func:`nonadaptive_embed`: reorder to W2 W1 V2 V1 and trace the W's."""
    dims, perm = nonadaptive_perm(layout)
    w2, w1, v2, v1 = dims
    # inverse permutation of [0, 2, 1, 3] is itself
    back = permute_factors(x, [w2, v2, w1, v1], perm)
    return partial_trace(back, dims, [0, 1])


def s_chain(total: np.ndarray, layout: SystemLayout) -> tuple[list[np.ndarray], list[float]]:
    """Reconstruct ``tau_T, ..., tau_1`` from ``total = I_{W_T} (x) tau_T``.

    Returns the chain (``taus[t]`` on V_t W_{t-1} ... V_1, index 0 unused) and
    the residuals of every defining equality, the last being |Tr tau_1 - 1|.
    """
    T = layout.T
    taus = [None] * (T + 1)
    dims = layout.dims()
    taus[T] = partial_trace(total, dims, [0]) / layout.n_w(T)
    res = [float(np.linalg.norm(total - np.kron(np.eye(layout.n_w(T)), taus[T])))]
    for t in range(T, 1, -1):
        tdims = [layout.n_v(t)] + layout.truncated(t - 1).dims()
        traced = partial_trace(taus[t], tdims, [0])
        taus[t - 1] = partial_trace(traced, tdims[1:], [0]) / layout.n_w(t - 1)
        res.append(float(np.linalg.norm(traced - np.kron(np.eye(layout.n_w(t - 1)), taus[t - 1]))))
    res.append(abs(float(np.trace(taus[1]).real) - 1.0))
    return taus, res


def normalization_residual(total: np.ndarray, layout: SystemLayout,
                           descriptor: TesterSet) -> float:
    """Distance-like residual of ``total`` from the normalization set."""
    descriptor = TesterSet(descriptor)
    if descriptor is TesterSet.GENERAL:
        taus, res = s_chain(total, layout)
        neg = max(max(0.0, -min_eig(tau)) for tau in taus[1:])
        return max(res + [neg])
    if descriptor is TesterSet.FIXED_ENTANGLED:
        target = np.eye(layout.total_dim) / layout.input_dim
        return float(np.linalg.norm(total - target))
    rho = nonadaptive_contract(total, layout) / layout.output_dim
    res = float(np.linalg.norm(total - nonadaptive_embed(rho, layout)))
    return max(res, abs(float(np.trace(rho).real) - 1.0), max(0.0, -min_eig(rho)))


def uniform_normalizer(layout: SystemLayout) -> np.ndarray:
    """I / prod N_V, a member of every supported normalization set."""
    return np.eye(layout.total_dim, dtype=complex) / layout.input_dim


def validate_tester(t: Tester, tol: float = DEFAULT_TOL) -> ValidationReport:
    res = {
        "psd": max(max(0.0, -min_eig(e)) for e in t.elements),
        "normalization": normalization_residual(t.total(), t.layout, t.descriptor),
    }
    return ValidationReport(max(res.values()) <= tol, res)


def outcome_probs(t: Tester, c: ProcessChoi) -> np.ndarray:
    if t.layout != c.layout:
        raise ValueError("tester and comb layouts differ")
    return np.array([float(np.real(np.vdot(e, c.matrix))) for e in t.elements])


def _random_density(n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    r = g @ g.conj().T
    return r / np.trace(r).real


def random_normalizer(layout: SystemLayout, descriptor, rng: np.random.Generator) -> np.ndarray:
    """A random member of the normalization set, generically of full rank.

    For the general set each level is built as ``(I (x) B^1/2) R (I (x) B^1/2)``
    with ``Tr_{V_t} R = I`` and ``B = I_{W_{t-1}} (x) tau_{t-1}``.
    """
    descriptor = TesterSet(descriptor)
    if descriptor is TesterSet.FIXED_ENTANGLED:
        return uniform_normalizer(layout)
    if descriptor is TesterSet.NONADAPTIVE:
        return nonadaptive_embed(_random_density(layout.input_dim, rng), layout)
    tau = _random_density(layout.n_v(1), rng)
    for t in range(2, layout.T + 1):
        base = np.kron(np.eye(layout.n_w(t - 1)), tau)
        nv, nb = layout.n_v(t), base.shape[0]
        y = _random_density(nv * nb, rng) * nv * nb
        w, v = np.linalg.eigh(partial_trace(y, [nv, nb], [0]))
        inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
        r = np.kron(np.eye(nv), inv_sqrt) @ y @ np.kron(np.eye(nv), inv_sqrt)
        w, v = np.linalg.eigh(base)
        b_sqrt = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
        tau = np.kron(np.eye(nv), b_sqrt) @ r @ np.kron(np.eye(nv), b_sqrt)
        tau = 0.5 * (tau + tau.conj().T)
    return np.kron(np.eye(layout.n_w(layout.T)), tau)
