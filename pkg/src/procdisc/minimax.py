"""Minimax discrimination when the prior distribution is unknown.

The payoff of a tester against prior ``mu`` is
``Q(mu, Phi) = sum_k mu_k Q_k(Phi)`` with ``Q_k(Phi) = sum_m <Phi_m, c_km>``;
the minimax tester maximizes ``min_k Q_k`` over the full probability simplex.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .certify import add_support_chain
from .choi import Tester, TesterSet
from .herm import SystemLayout, hermitian, inner
from .problems import ProblemSpec
from .sdp import UnsupportedDescriptor, phi, primal_builder, solve_primal_dual

ACTIVE_TOL = 1e-5


@dataclass(frozen=True)
class MinimaxSpec:
    layout: SystemLayout
    c: tuple  # c[k][m]
    a: tuple = ()
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    descriptor: TesterSet = TesterSet.GENERAL

    def __post_init__(self):
        c = tuple(tuple(hermitian(x) for x in row) for row in self.c)
        if not c:
            raise ValueError("K must be >= 1")
        if len({len(row) for row in c}) != 1 or not c[0]:
            raise ValueError("every payoff row needs the same number M >= 1 of matrices")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "descriptor", TesterSet(self.descriptor))
        # reuse the shape checks of ProblemSpec
        base = self.problem(np.full(len(c), 1.0 / len(c)))
        object.__setattr__(self, "a", base.a)
        object.__setattr__(self, "b", base.b)

    @property
    def K(self) -> int:
        return len(self.c)

    @property
    def M(self) -> int:
        return len(self.c[0])

    @property
    def J(self) -> int:
        return len(self.a)

    def problem(self, mu) -> ProblemSpec:
        """The known-prior problem with payoffs ``sum_k mu_k c_km``."""
        mu = np.asarray(mu, dtype=float)
        cm = tuple(sum(mu[k] * self.c[k][m] for k in range(len(self.c))) for m in range(len(self.c[0])))
        return ProblemSpec(self.layout, cm, self.a, self.b, self.descriptor, {"strategy": "minimax_slice"})

    def Q_k(self, tester: Tester) -> np.ndarray:
        if tester.M != self.M:
            raise ValueError(f"tester has {tester.M} elements, expected {self.M}")
        return np.array([sum(inner(p, ckm) for p, ckm in zip(tester.elements, row)) for row in self.c])

    def Q(self, mu, tester: Tester) -> float:
        return float(np.asarray(mu, dtype=float) @ self.Q_k(tester))


def min_error_minimax(combs) -> MinimaxSpec:
    """Payoff ``Q_k = Pr(outcome k | comb k)``."""
    layout = combs[0].layout
    d = layout.total_dim
    zero = np.zeros((d, d), complex)
    K = len(combs)
    c = tuple(tuple(combs[k].matrix if m == k else zero for m in range(K)) for k in range(K))
    return MinimaxSpec(layout, c)


def check_simplex(mu, K: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.size != K or np.any(mu < -1e-12) or abs(mu.sum() - 1.0) > 1e-10:
        raise ValueError(f"mu must be a point of the {K}-simplex, got {mu.tolist()}")
    return np.clip(mu, 0.0, None)


@dataclass
class SaddleReport:
    ok: bool
    q_opt: float          # certified upper bound on Q^opt(mu)
    q_opt_lower: float
    q_values: np.ndarray
    residual_min: float   # max(0, Q^opt(mu) - min_k Q_k)
    residual_value: float  # |Q^opt(mu) - Q(mu, Phi)|
    residual_support: float  # max over supported k' of Q_k' - min_k Q_k
    status: str = "optimal"

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class MinimaxSolution:
    tester: Tester
    mu: np.ndarray
    value: float
    saddle_residual: float
    q_values: np.ndarray = None
    mu_source: str = "active_set"
    report: SaddleReport | None = None
    iterations: int = 0

    def __post_init__(self):
        self.mu = check_simplex(self.mu, len(self.mu))


def q_opt(spec: MinimaxSpec, mu, opts=None):
    """Certified bracket ``(lower, upper)`` on ``Q^opt(mu)`` and the solve result."""
    res = solve_primal_dual(spec.problem(mu), opts)
    return res.primal_value, res.dual_value, res


def verify_saddle(tester: Tester, mu, spec: MinimaxSpec, tol: float = 1e-4, opts=None) -> SaddleReport:
    """Check ``Q_k(Phi) >= Q^opt(mu)`` for all k and the first-order support conditions."""
    mu = check_simplex(mu, spec.K)
    qs = spec.Q_k(tester)
    lo, hi, res = q_opt(spec, mu, opts)
    status = res.status
    r_min = max(0.0, hi - float(qs.min()))
    r_val = abs(hi - float(mu @ qs))
    supported = mu > 1e-9
    r_sup = max(0.0, float(qs[supported].max() - qs.min()))
    ok = max(r_min, r_val, r_sup) <= tol
    return SaddleReport(ok, hi, lo, qs, r_min, r_val, r_sup, status)


def compile_epigraph(spec: MinimaxSpec) -> conic.ConicProgram:
    """maximize t subject to Q_k(Phi) - t >= 0 for every k, Phi feasible."""
    base = spec.problem(np.full(spec.K, 1.0 / spec.K))
    b = primal_builder(base)
    b.add("t", conic.FREE, 1)
    b.add("gap", conic.NONNEG, spec.K)
    b.constrain(lambda v: np.array([sum(inner(phi(v, base, m), spec.c[k][m]) for m in range(spec.M))
                                    for k in range(spec.K)]) - v["t"][0] - v["gap"], np.zeros(spec.K))
    b.objective(lambda v: float(v["t"][0]))
    return b.build("max")


def compile_prior_dual(spec: MinimaxSpec) -> conic.ConicProgram:
    """minimize over mu in the simplex the dual bound on Q^opt(mu); jointly linear in (mu, chi, q)."""
    if spec.descriptor is TesterSet.NONADAPTIVE:
        raise UnsupportedDescriptor("no dual formulation is provided for the nonadaptive tester set")
    layout = spec.layout
    b = conic.ProgramBuilder()
    b.add("chi", conic.HERM, layout.total_dim)
    b.add("mu", conic.NONNEG, spec.K)
    if spec.J:
        b.add("q", conic.NONNEG, spec.J)
    for m in range(spec.M):
        b.add(f"s{m}", conic.PSD, layout.total_dim)

    def zm(v, m):
        out = sum(v["mu"][k] * spec.c[k][m] for k in range(spec.K))
        if spec.J:
            out = out - sum(v["q"][j] * spec.a[j][m] for j in range(spec.J))
        return out

    for m in range(spec.M):
        b.constrain(lambda v, m=m: v[f"s{m}"] - v["chi"] + zm(v, m),
                    np.zeros((layout.total_dim,) * 2, complex))
    b.constrain(lambda v: np.array([v["mu"].sum()]), np.array([1.0]))

    def qb(v):
        return float(v["q"] @ spec.b) if spec.J else 0.0

    if spec.descriptor is TesterSet.GENERAL:
        add_support_chain(b, layout, lambda v: v["chi"])
        b.objective(lambda v: float(v["omega0"][0]) + qb(v))
    else:
        b.objective(lambda v: float(np.trace(v["chi"]).real) / layout.input_dim + qb(v))
    return b.build("min")


def solve_minimax(spec: MinimaxSpec, opts: conic.SolverOptions | None = None, *,
                  tol: float = 1e-4) -> MinimaxSolution:
    """Epigraph solve for the minimax tester, then recover a saddle-point prior.

    The prior is first taken uniform on the active set ``argmin_k Q_k``; if
    the saddle check fails, it is obtained from the joint prior-dual program.
    """
    rep = conic.solve(compile_epigraph(spec), opts)
    if rep.status == "infeasible_suspected":
        raise ValueError("the tester constraints are infeasible")
    tester = Tester(spec.layout, tuple(rep.blocks[f"phi{m}"] for m in range(spec.M)), spec.descriptor)
    qs = spec.Q_k(tester)
    active = qs <= qs.min() + ACTIVE_TOL * max(1.0, abs(qs.min()))
    mu = active / active.sum()
    report = verify_saddle(tester, mu, spec, tol, opts)
    source = "active_set"
    if not report.ok and spec.K > 1:
        drep = conic.solve(compile_prior_dual(spec), opts)
        cand = np.clip(drep.blocks["mu"], 0.0, None)
        cand[cand < 1e-9] = 0.0
        cand = cand / cand.sum()
        alt = verify_saddle(tester, cand, spec, tol, opts)
        if alt.ok or alt.residual_min < report.residual_min:
            mu, report, source = cand, alt, "prior_dual"
    return MinimaxSolution(tester, mu, float(qs.min()), report.residual_min, qs, source, report, rep.iterations)


def twirl_mu(mu, action) -> np.ndarray:
    """Orbit average ``mu_k <- (1/|G|) sum_g mu_{g.k}``."""
    mu = np.asarray(mu, dtype=float)
    if len(action.perm(0, "k")) != mu.size:
        raise ValueError("prior permutation size does not match mu")
    out = np.zeros_like(mu)
    for g in range(action.order):
        out += mu[list(action.perm(g, "k"))]
    return out / action.order
