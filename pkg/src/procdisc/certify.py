"""Dual certificates and optimality checks.

The dual of the canonical problem is

    minimize    lambda_S(chi) + q.b
    subject to  chi >= z_m(q) := c_m - sum_j q_j a_jm   (all m),   q >= 0,

where ``lambda_S(chi) = sup_{phi in S} <phi, chi>`` is the support function of
the tester normalization set. A tester and a dual point are jointly optimal
iff the three complementarity terms of the duality gap vanish:

    D - P = -sum_j q_j eta_j + sum_m <Phi_m, chi - z_m> + (lambda_S(chi) - sum_m <Phi_m, chi>),

each term being nonnegative at feasible points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import conic
from .choi import (ProcessChoi, Tester, TesterSet, chain_residuals, lin_chn_membership, min_eig,
                   nonadaptive_contract, nonadaptive_embed, normalization_residual)
from .herm import SystemLayout, eig_herm, herm_abs, hermitian, inner, partial_trace
from .problems import ProblemSpec, eta

DEFAULT_TOL = 1e-4
RCOND_MIN = 1e-10


@dataclass
class KktResiduals:
    r_slack: float
    r_comp: float
    r_lambda: float
    r_feas_primal: float
    r_feas_dual: float
    r_comp_elementwise: float = 0.0
    gap_terms: tuple = ()

    def ok(self, tol: float = DEFAULT_TOL) -> bool:
        return max(self.r_slack, self.r_comp, self.r_lambda, self.r_feas_primal, self.r_feas_dual) <= tol

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("r_slack", "r_comp", "r_lambda", "r_feas_primal", "r_feas_dual", "r_comp_elementwise")}


@dataclass
class DualCertificate:
    """A dual point (chi, q) with its support-function value.

    ``chain`` holds the nested witnesses omega_0 .. omega_{T-1} (indexed by
    level) when the value was obtained from the nested program.
    """

    chi: np.ndarray
    q: np.ndarray
    lambda_value: float
    chain: list | None = None
    residuals: KktResiduals | None = None

    def __post_init__(self):
        self.chi = hermitian(self.chi)
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        if np.any(self.q < -1e-12):
            raise ValueError(f"dual weights must be nonnegative, got {self.q.tolist()}")

    def value(self, spec: ProblemSpec) -> float:
        return float(self.lambda_value + self.q @ spec.b)


class RankDeficientError(ValueError):
    def __init__(self, rcond: float):
        super().__init__(f"sum of tester elements is rank deficient (reciprocal condition {rcond:.2e})")
        self.rcond = rcond


def z_vec(q, spec: ProblemSpec) -> list[np.ndarray]:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != spec.J:
        raise ValueError(f"expected {spec.J} dual weights, got {q.size}")
    out = []
    for m in range(spec.M):
        z = spec.c[m].copy()
        for j in range(spec.J):
            z = z - q[j] * spec.a[j][m]
        out.append(z)
    return out


# --------------------------------------------------------------------------
# support function of the normalization set


def add_support_chain(builder: conic.ProgramBuilder, layout: SystemLayout,
                      top: Callable[[dict], np.ndarray]) -> None:
    """Add the nested constraints bounding the support function of S_G.

    Blocks ``omega0`` (scalar) and ``omega1 .. omega{T-1}`` are free; PSD
    slacks ``y1 .. yT`` encode ``I_{V_t} (x) omega_{t-1} >= Tr_{W_t} omega_t``
    with ``omega_T = top(blocks)``.
    """
    T = layout.T
    builder.add("omega0", conic.FREE, 1)
    for t in range(1, T):
        builder.add(f"omega{t}", conic.HERM, layout.dim_upto(t))
    for t in range(1, T + 1):
        builder.add(f"y{t}", conic.PSD, layout.n_v(t) * layout.dim_upto(t - 1))

    def level(v, t):
        if t == T:
            return top(v)
        return v[f"omega{t}"]

    def lower(v, t):
        if t == 1:
            return np.eye(layout.n_v(1)) * v["omega0"][0]
        return np.kron(np.eye(layout.n_v(t)), v[f"omega{t - 1}"])

    for t in range(1, T + 1):
        dims = layout.truncated(t).dims()
        builder.constrain(
            lambda v, t=t, dims=dims: v[f"y{t}"] - lower(v, t) + partial_trace(level(v, t), dims, [0]),
            np.zeros((layout.n_v(t) * layout.dim_upto(t - 1),) * 2, complex))


def repair_chain(chi: np.ndarray, chain: Sequence[np.ndarray], layout: SystemLayout) -> list[np.ndarray]:
    """Shift each omega_t up by the smallest multiple of I that makes the chain feasible.

    The repaired ``omega_0`` is a certified upper bound on lambda_{S_G}(chi).
    """
    T = layout.T
    out = [np.array(c, dtype=complex) for c in chain]
    upper = chi
    for t in range(T, 0, -1):
        dims = layout.truncated(t).dims()
        gap = np.kron(np.eye(layout.n_v(t)), out[t - 1]) - partial_trace(upper, dims, [0])
        shift = max(0.0, -min_eig(gap))
        if shift > 0:
            out[t - 1] = out[t - 1] + shift * np.eye(out[t - 1].shape[0])
        upper = out[t - 1]
    return out


def nested_program(chi: np.ndarray, layout: SystemLayout) -> conic.ConicProgram:
    """The nested program min omega_0 whose value is lambda_{S_G}(chi)."""
    b = conic.ProgramBuilder()
    chi = hermitian(chi)
    add_support_chain(b, layout, lambda v: chi)
    b.objective(lambda v: float(v["omega0"][0]))
    return b.build("min")


def solve_nested(chi: np.ndarray, layout: SystemLayout, opts: conic.SolverOptions | None = None):
    """Solve the nested program; returns (value, chain, report). The value is a repaired upper bound."""
    prog = nested_program(chi, layout)
    rep = conic.solve(prog, opts)
    chain = [np.array([[rep.blocks["omega0"][0]]], dtype=complex)]
    chain += [rep.blocks[f"omega{t}"] for t in range(1, layout.T)]
    chain = repair_chain(hermitian(chi), chain, layout)
    return float(chain[0][0, 0].real), chain, rep


def lambda_S(chi, descriptor, layout: SystemLayout, *, opts=None) -> tuple[float, list | None]:
    """Support function of the normalization set at ``chi``, with its witness chain if any."""
    chi = hermitian(chi)
    descriptor = TesterSet(descriptor)
    if descriptor is TesterSet.FIXED_ENTANGLED:
        return float(np.trace(chi).real) / layout.input_dim, None
    if descriptor is TesterSet.NONADAPTIVE:
        return float(eig_herm(nonadaptive_contract(chi, layout)).eigenvalues[-1]), None
    if layout.T == 1:
        val = float(eig_herm(partial_trace(chi, layout.dims(), [0])).eigenvalues[-1])
        return val, [np.array([[val]], dtype=complex)]
    member, chain = lin_chn_membership(chi, layout, tol=1e-12)
    if member:
        return float(chain[0][0, 0].real), chain[:-1]
    val, chain, _ = solve_nested(chi, layout, opts)
    return val, chain


def certified_lambda(cert: DualCertificate, spec: ProblemSpec) -> float:
    """lambda_S(chi), using the certificate's chain as a witness for multi-step S_G."""
    if spec.descriptor is TesterSet.GENERAL and spec.layout.T > 1 and cert.chain is not None:
        chain = repair_chain(cert.chi, cert.chain, spec.layout)
        return float(chain[0][0, 0].real)
    return lambda_S(cert.chi, spec.descriptor, spec.layout)[0]


def dual_value(cert: DualCertificate, spec: ProblemSpec) -> float:
    return certified_lambda(cert, spec) + float(cert.q @ spec.b)


# --------------------------------------------------------------------------
# optimality conditions


def kkt_residuals(tester: Tester, cert: DualCertificate, spec: ProblemSpec) -> KktResiduals:
    q = cert.q
    et = eta(tester, spec)
    z = z_vec(q, spec)
    phis = tester.elements
    lam = certified_lambda(cert, spec)
    slack = -float(q @ et) if spec.J else 0.0
    comp = sum(inner(p, cert.chi - zm) for p, zm in zip(phis, z))
    attained = sum(inner(p, cert.chi) for p in phis)
    feas_p = max(
        max(max(0.0, -min_eig(p)) for p in phis),
        normalization_residual(tester.total(), spec.layout, spec.descriptor),
        max([0.0] + [float(e) for e in et]),
    )
    feas_d = max(
        max(max(0.0, -min_eig(spec.compress(m, cert.chi - zm))) for m, zm in enumerate(z) if spec.face_dim(m)),
        max([0.0] + [float(-x) for x in q]),
    )
    return KktResiduals(
        r_slack=float(np.max(np.abs(q * et))) if spec.J else 0.0,
        r_comp=abs(comp),
        r_lambda=abs(attained - lam),
        r_feas_primal=feas_p,
        r_feas_dual=feas_d,
        r_comp_elementwise=max(float(np.linalg.norm(spec.compress(m, cert.chi - zm) @ spec.compress(m, p)))
                               for m, (p, zm) in enumerate(zip(phis, z))),
        gap_terms=(slack, comp, lam - attained),
    )


def chi_from_tester(tester: Tester, q, spec: ProblemSpec) -> np.ndarray:
    """The unique dual matrix compatible with a full-rank optimal tester."""
    total = tester.total()
    w = eig_herm(total).eigenvalues
    rcond = float(w[0] / w[-1]) if w[-1] > 0 else 0.0
    if rcond < RCOND_MIN:
        raise RankDeficientError(rcond)
    z = z_vec(q, spec)
    num = sum(zm @ p for zm, p in zip(z, tester.elements))
    raw = np.linalg.solve(total.T, num.T).T  # num @ total^-1
    return 0.5 * (raw + raw.conj().T)


@dataclass
class TesterVerdict:
    optimal: bool
    chi: np.ndarray
    residuals: KktResiduals
    asymmetry: float


def verify_tester(tester: Tester, q, spec: ProblemSpec, tol: float = DEFAULT_TOL) -> TesterVerdict:
    """Decide optimality of a full-rank tester given dual weights ``q`` alone."""
    chi = chi_from_tester(tester, q, spec)
    z = z_vec(q, spec)
    raw = sum(zm @ p for zm, p in zip(z, tester.elements)) @ np.linalg.inv(tester.total())
    lam, chain = lambda_S(chi, spec.descriptor, spec.layout)
    cert = DualCertificate(chi, q, lam, chain)
    res = kkt_residuals(tester, cert, spec)
    asym = float(np.linalg.norm(raw - raw.conj().T))
    return TesterVerdict(res.ok(tol) and asym <= tol, chi, res, asym)


def lift_to_comb_span(cert: DualCertificate, layout: SystemLayout) -> DualCertificate:
    """Raise chi to a dominating element of the span of combs with the same support value."""
    T = layout.T
    if cert.chain is None:
        _, chain = lambda_S(cert.chi, TesterSet.GENERAL, layout)
    else:
        chain = cert.chain
    chain = repair_chain(cert.chi, chain, layout)
    levels = [None] * (T + 1)
    levels[0] = chain[0]
    tops = list(chain[1:]) + [cert.chi]
    for t in range(1, T + 1):
        prime = tops[t - 1]
        dims = layout.truncated(t).dims()
        nw = layout.n_w(t)
        lower = np.kron(np.eye(layout.n_v(t)), levels[t - 1]) if t > 1 else \
            np.eye(layout.n_v(1)) * levels[0][0, 0]
        levels[t] = prime + np.kron(np.eye(nw) / nw, lower - partial_trace(prime, dims, [0]))
    lam = float(levels[0][0, 0].real)
    return DualCertificate(levels[T], cert.q, lam, levels[:T])


@dataclass
class EntangledVerdict:
    sufficient: bool
    chi: np.ndarray
    abs_delta: np.ndarray
    margin: float

    def __iter__(self):
        return iter((self.sufficient, self.chi))


def entangled_optimality_binary(c0, c1, p0: float, p1: float, tol: float = 1e-8) -> EntangledVerdict:
    """Whether maximally entangled inputs suffice for binary minimum-error discrimination."""
    if abs(p0 + p1 - 1.0) > 1e-12 or p0 < 0 or p1 < 0:
        raise ValueError("priors must be nonnegative and sum to 1")
    layout = c0.layout if isinstance(c0, ProcessChoi) else None
    m0 = c0.matrix if isinstance(c0, ProcessChoi) else np.asarray(c0)
    m1 = c1.matrix if isinstance(c1, ProcessChoi) else np.asarray(c1)
    if layout is None:
        raise ValueError("entangled_optimality_binary needs ProcessChoi inputs")
    delta = p0 * m0 - p1 * m1
    absd = herm_abs(delta)
    ok, chain = lin_chn_membership(absd, layout, tol)
    margin = max(chain_residuals(chain, layout))
    chi = 0.5 * (p0 * m0 + p1 * m1 + absd)
    return EntangledVerdict(ok, chi, absd, margin)


# --------------------------------------------------------------------------
# repairs used to sample feasible points from solver iterates


def _psd_clip(x: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(hermitian(x))
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def _psd_sqrt(x: np.ndarray, inverse: bool = False, floor: float = 0.0) -> np.ndarray:
    w, v = np.linalg.eigh(hermitian(x))
    w = np.clip(w, floor, None)
    if inverse:
        w = np.where(w > 0, 1.0 / np.sqrt(np.where(w > 0, w, 1.0)), 0.0)
    else:
        w = np.sqrt(w)
    return (v * w) @ v.conj().T


def feasible_normalizer(blocks_affine: dict, spec: ProblemSpec) -> np.ndarray:
    """An exact member of the normalization set built from an affine-feasible iterate.

    The iterate's chain variables satisfy every equality; mixing with the
    uniform element restores positivity without breaking them.
    """
    layout = spec.layout
    d = layout.total_dim
    uniform = np.eye(d, dtype=complex) / layout.input_dim
    if spec.descriptor is TesterSet.FIXED_ENTANGLED:
        return uniform
    if spec.descriptor is TesterSet.NONADAPTIVE:
        rho = hermitian(blocks_affine["rho"])
        ref = np.eye(rho.shape[0]) / rho.shape[0]
        theta = _mix_to_psd([rho], [ref])
        return nonadaptive_embed((1 - theta) * rho + theta * ref, layout)
    taus = [hermitian(blocks_affine[f"tau{t}"]) for t in range(1, layout.T + 1)]
    # the chain of the uniform element I / prod N_V
    refs = [np.eye(tau.shape[0]) / layout.truncated(t).input_dim for t, tau in enumerate(taus, 1)]
    theta = _mix_to_psd(taus, refs)
    top = (1 - theta) * taus[-1] + theta * refs[-1]
    return np.kron(np.eye(layout.n_w(layout.T)), top)


def _mix_to_psd(mats: Sequence[np.ndarray], refs: Sequence[np.ndarray]) -> float:
    """Smallest theta in [0, 1] with (1-theta) X + theta R >= 0 for every pair."""
    theta = 0.0
    for x, r in zip(mats, refs):
        lo = min_eig(x)
        if lo < 0:
            rmin = min_eig(r)
            theta = max(theta, -lo / (rmin - lo))
    return min(theta, 1.0)


def feasible_tester(blocks_cone: dict, blocks_affine: dict, spec: ProblemSpec,
                    reference: Tester | None = None) -> Tester:
    """Map a primal iterate to a tester that is exactly feasible.

    PSD blocks are congruence-rescaled so that they sum to a valid
    normalization element; remaining constraint violation is removed by
    mixing with ``reference`` (a feasible tester).
    """
    M = spec.M
    phis = [_psd_clip(spec.lift(m, blocks_cone.get(f"phi{m}"))) for m in range(M)]
    target = feasible_normalizer(blocks_affine, spec)
    total = sum(phis)
    scale = max(1.0, float(np.linalg.norm(total)))
    ridge = 1e-12 * scale
    left = _psd_sqrt(target) @ _psd_sqrt(total + ridge * np.eye(total.shape[0]), inverse=True)
    out = [left @ p @ left.conj().T for p in phis]
    remainder = target - sum(out)
    out[0] = out[0] + remainder  # remainder is PSD by construction
    t = Tester(spec.layout, tuple(out), spec.descriptor)
    if spec.J and reference is not None:
        e_it = eta(t, spec)
        e_ref = eta(reference, spec)
        theta = 0.0
        for a, r in zip(e_it, e_ref):
            if a > 0:
                theta = max(theta, a / (a - min(r, 0.0)) if a - min(r, 0.0) > 0 else 1.0)
        theta = min(theta, 1.0)
        t = Tester(spec.layout, tuple((1 - theta) * p + theta * r
                                      for p, r in zip(t.elements, reference.elements)), spec.descriptor)
    return t


def feasible_dual_value(chi: np.ndarray, q, chain: Sequence[np.ndarray] | None,
                        spec: ProblemSpec) -> float:
    """Objective of the nearest-above dual-feasible point: chi shifted by t I, q clipped."""
    q = np.clip(np.asarray(q, float).reshape(-1), 0.0, None)
    chi = hermitian(chi)
    shift = max([0.0] + [-min_eig(spec.compress(m, chi - zm)) for m, zm in enumerate(z_vec(q, spec))
                         if spec.face_dim(m)])
    chi = chi + shift * np.eye(chi.shape[0])
    if spec.descriptor is TesterSet.GENERAL and spec.layout.T > 1 and chain is not None:
        lam = float(repair_chain(chi, chain, spec.layout)[0][0, 0].real)
    else:
        lam = lambda_S(chi, spec.descriptor, spec.layout)[0]
    return lam + float(q @ spec.b)
