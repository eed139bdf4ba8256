"""Compile discrimination problems to conic programs and solve both sides."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .certify import (DualCertificate, add_support_chain, dual_value, feasible_dual_value,
                      feasible_tester, kkt_residuals, KktResiduals, lambda_S, lift_to_comb_span)
from .choi import Tester, TesterSet, lin_chn_membership, nonadaptive_embed
from .herm import inner, partial_trace
from .problems import ProblemSpec

GAP_TOL = 1e-4


class UnsupportedDescriptor(ValueError):
    pass


def compile_primal(spec: ProblemSpec) -> conic.ConicProgram:
    """Tester blocks ``phi{m}``, normalization variables and constraint slacks."""
    b = primal_builder(spec)
    b.objective(lambda v: sum(inner(phi(v, spec, m), spec.c[m]) for m in range(spec.M)))
    return b.build("max")


def primal_builder(spec: ProblemSpec) -> conic.ProgramBuilder:
    """Feasible-tester constraints of ``spec`` without an objective."""
    layout = spec.layout
    D = layout.total_dim
    b = conic.ProgramBuilder()
    for m in range(spec.M):
        if spec.face_dim(m):
            b.add(f"phi{m}", conic.PSD, spec.face_dim(m))

    def total(v):
        return sum(phi(v, spec, m) for m in range(spec.M))

    if spec.descriptor is TesterSet.GENERAL:
        T = layout.T
        for t in range(1, T + 1):
            b.add(f"tau{t}", conic.PSD, layout.n_v(t) * layout.dim_upto(t - 1))
        b.constrain(lambda v: total(v) - np.kron(np.eye(layout.n_w(T)), v[f"tau{T}"]),
                    np.zeros((D, D), complex))
        for t in range(T, 1, -1):
            dims = [layout.n_v(t)] + layout.truncated(t - 1).dims()
            size = layout.dim_upto(t - 1)
            b.constrain(lambda v, t=t, dims=dims: partial_trace(v[f"tau{t}"], dims, [0])
                        - np.kron(np.eye(layout.n_w(t - 1)), v[f"tau{t - 1}"]),
                        np.zeros((size, size), complex))
        b.constrain(lambda v: np.array([np.trace(v["tau1"]).real]), np.array([1.0]))
    elif spec.descriptor is TesterSet.FIXED_ENTANGLED:
        b.constrain(total, np.eye(D, dtype=complex) / layout.input_dim)
    elif spec.descriptor is TesterSet.NONADAPTIVE:
        if layout.T != 2:
            raise UnsupportedDescriptor("the nonadaptive tester set needs T = 2")
        nv = layout.input_dim
        b.add("rho", conic.PSD, nv)
        b.constrain(lambda v: total(v) - nonadaptive_embed(v["rho"], layout), np.zeros((D, D), complex))
        b.constrain(lambda v: np.array([np.trace(v["rho"]).real]), np.array([1.0]))
    else:  # pragma: no cover
        raise UnsupportedDescriptor(str(spec.descriptor))

    if spec.J:
        b.add("slack", conic.NONNEG, spec.J)
        b.constrain(lambda v: np.array([sum(inner(phi(v, spec, m), spec.a[j][m]) for m in range(spec.M))
                                        for j in range(spec.J)]) + v["slack"], spec.b)
    return b


def phi(blocks: dict, spec: ProblemSpec, m: int) -> np.ndarray:
    """Tester element m from solver blocks, lifted from its face if restricted."""
    return spec.lift(m, blocks.get(f"phi{m}"))


def compile_dual(spec: ProblemSpec) -> conic.ConicProgram:
    """Free ``chi``, weights ``q >= 0``, PSD slacks ``s{m} = chi - z_m(q)``."""
    layout = spec.layout
    D = layout.total_dim
    if spec.descriptor is TesterSet.NONADAPTIVE:
        raise UnsupportedDescriptor("no dual formulation is provided for the nonadaptive tester set")
    b = conic.ProgramBuilder()
    b.add("chi", conic.HERM, D)
    if spec.J:
        b.add("q", conic.NONNEG, spec.J)
    for m in range(spec.M):
        if spec.face_dim(m):
            b.add(f"s{m}", conic.PSD, spec.face_dim(m))

    def qa(v, m):
        if not spec.J:
            return 0.0
        return sum(v["q"][j] * spec.a[j][m] for j in range(spec.J))

    # s_m = chi - z_m(q), compressed to the face of outcome m
    for m in range(spec.M):
        if spec.face_dim(m):
            b.constrain(lambda v, m=m: v[f"s{m}"] - spec.compress(m, v["chi"] + qa(v, m)),
                        -spec.compress(m, spec.c[m]))

    def qb(v):
        return float(v["q"] @ spec.b) if spec.J else 0.0

    if spec.descriptor is TesterSet.GENERAL:
        add_support_chain(b, layout, lambda v: v["chi"])
        b.objective(lambda v: float(v["omega0"][0]) + qb(v))
    else:
        b.objective(lambda v: float(np.trace(v["chi"]).real) / layout.input_dim + qb(v))
    return b.build("min")


# --------------------------------------------------------------------------


def _chain_from(blocks: dict, spec: ProblemSpec):
    if spec.descriptor is not TesterSet.GENERAL:
        return None
    chain = [np.array([[blocks["omega0"][0]]], dtype=complex)]
    chain += [blocks[f"omega{t}"] for t in range(1, spec.layout.T)]
    return chain


def _cert_from(rep: conic.SolveReport, spec: ProblemSpec) -> DualCertificate:
    q = rep.blocks["q"] if spec.J else np.zeros(0)
    cert = DualCertificate(rep.blocks["chi"], np.clip(q, 0.0, None), 0.0, _chain_from(rep.blocks, spec))
    cert.lambda_value = dual_value(cert, spec) - float(cert.q @ spec.b)
    return cert


def solve_primal(spec: ProblemSpec, opts: conic.SolverOptions | None = None):
    """Solve the primal alone; returns (tester, value, report)."""
    rep = conic.solve(compile_primal(spec), opts)
    # the solver meets normalization to ~1e-7; the congruence map makes it exact
    tester = feasible_tester(rep.blocks, rep.affine_blocks, spec)
    return tester, spec.objective(tester), rep


def solve_dual(spec: ProblemSpec, opts: conic.SolverOptions | None = None):
    rep = conic.solve(compile_dual(spec), opts)
    cert = _cert_from(rep, spec)
    return cert, cert.value(spec), rep


@dataclass
class PrimalDualResult:
    tester: Tester
    certificate: DualCertificate
    primal_value: float
    dual_value: float
    gap: float
    status: str
    residuals: KktResiduals
    primal_report: conic.SolveReport
    dual_report: conic.SolveReport
    wall_time: float = 0.0
    trace: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return 0.5 * (self.primal_value + self.dual_value)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_primal_dual(spec: ProblemSpec, opts: conic.SolverOptions | None = None, *,
                      sample_every: int | None = None, gap_tol: float = GAP_TOL) -> PrimalDualResult:
    """Solve primal and dual independently and compare their values.

    With ``sample_every`` set, iterates of both runs are recorded at that
    period and mapped to exactly feasible points; their objective values are
    returned in ``trace`` (``primal`` lower bounds, ``dual`` upper bounds).
    """
    start = time.perf_counter()
    base = opts or conic.SolverOptions()
    samples = {"primal": [], "dual": []}

    def with_monitor(kind):
        if not sample_every:
            return base
        o = conic.SolverOptions(**{**base.__dict__})
        o.monitor_every = sample_every
        o.monitor = lambda it, zb, xb: samples[kind].append((it, zb, xb))
        return o

    tester, pval, prep = solve_primal(spec, with_monitor("primal"))
    cert, _, drep = solve_dual(spec, with_monitor("dual"))
    dval = cert.value(spec)
    res = kkt_residuals(tester, cert, spec)
    cert.residuals = res
    gap = abs(pval - dval)
    status = "optimal" if (prep.optimal and drep.optimal and gap <= gap_tol) else (
        "gap_exceeded" if prep.optimal and drep.optimal else "not_converged")
    trace = {}
    if sample_every:
        trace["primal"] = [(it, spec.objective(feasible_tester(zb, xb, spec, tester)))
                           for it, zb, xb in samples["primal"]]
        trace["dual"] = [(it, feasible_dual_value(zb["chi"], zb["q"] if spec.J else np.zeros(0),
                                                  _chain_from(zb, spec), spec))
                         for it, zb, xb in samples["dual"]]
        trace["primal"].append((prep.iterations, spec.objective(feasible_tester(
            prep.blocks, prep.affine_blocks, spec, tester))))
        trace["dual"].append((drep.iterations, feasible_dual_value(cert.chi, cert.q, cert.chain, spec)))
    return PrimalDualResult(tester, cert, pval, dval, gap, status, res, prep, drep,
                            time.perf_counter() - start, trace)


# --------------------------------------------------------------------------
# nested tester sets


@dataclass
class NestedSetReport:
    """Which of the four equivalent statements hold for ``inner`` inside ``outer``.

    ``values_equal``: equal optimal values. ``cert_transfers``: some
    inner-optimal dual point is outer-feasible with equal support values.
    ``outer_optimal_inner``: the returned outer-optimal dual point is
    inner-optimal (checked at that single point only). ``comb_span``: some
    inner-optimal dual point has chi in the span of combs.
    """

    value_inner: float
    value_outer: float
    values_equal: bool
    cert_transfers: bool
    outer_optimal_inner: bool
    comb_span: bool
    witnesses: dict = field(default_factory=dict)
    results: tuple = ()

    @property
    def margin(self) -> float:
        return self.value_outer - self.value_inner


NESTED = {(TesterSet.FIXED_ENTANGLED, TesterSet.GENERAL), (TesterSet.FIXED_ENTANGLED, TesterSet.FIXED_ENTANGLED),
          (TesterSet.GENERAL, TesterSet.GENERAL)}


def compare_tester_sets(spec: ProblemSpec, inner=TesterSet.FIXED_ENTANGLED, outer=TesterSet.GENERAL,
                        opts: conic.SolverOptions | None = None, tol: float = GAP_TOL) -> NestedSetReport:
    """Solve ``spec`` over both sets and evaluate the four statements."""
    inner, outer = TesterSet(inner), TesterSet(outer)
    if (inner, outer) not in NESTED:
        raise UnsupportedDescriptor(f"{inner.value} inside {outer.value} is not a supported nested pair")
    s1, s2 = spec.with_descriptor(inner), spec.with_descriptor(outer)
    r1, r2 = solve_primal_dual(s1, opts, gap_tol=tol), solve_primal_dual(s2, opts, gap_tol=tol)
    layout = spec.layout

    def d1(cert):
        return lambda_S(cert.chi, inner, layout)[0] + float(cert.q @ spec.b)

    def lam_gap(cert):
        return abs(lambda_S(cert.chi, inner, layout)[0] - lambda_S(cert.chi, outer, layout)[0])

    d1_opt = r1.value
    cands = {"inner": r1.certificate, "outer": r2.certificate}
    if outer is TesterSet.GENERAL:
        cands["outer_lifted"] = lift_to_comb_span(r2.certificate, layout)
    # the cone is the same for both sets, so every dual point of one is feasible for the other
    optimal_1 = {k: d1(c) <= d1_opt + tol for k, c in cands.items()}
    transfer = [k for k, c in cands.items() if optimal_1[k] and lam_gap(c) <= tol]
    scale = max(1.0, float(np.linalg.norm(r2.certificate.chi)))
    span = [k for k, c in cands.items() if optimal_1[k] and lin_chn_membership(c.chi, layout, tol / scale)[0]]
    return NestedSetReport(
        value_inner=r1.value, value_outer=r2.value,
        values_equal=abs(r1.value - r2.value) <= tol,
        cert_transfers=bool(transfer), outer_optimal_inner=optimal_1["outer"], comb_span=bool(span),
        witnesses={"cert_transfers": transfer, "comb_span": span},
        results=(r1, r2))
