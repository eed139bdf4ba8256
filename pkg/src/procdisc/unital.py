"""Inconclusive discrimination of R cyclically related unital qubit channels.

The family is ``L_r = Ad_{U^r (x) I}(L_0)`` with ``U`` diagonal, ``U^R = I`` and
``L_0^T = L_0``, all with equal priors. Invariance of the optimal dual matrix
reduces it to three reals ``u = (x, y, z)``; each dual constraint becomes
membership of ``u`` in a circular cone ``N_v = {u : u_x - v_x >= |(u_y, u_z) - (v_y, v_z)|}``
and the optimal value is ``inf_q 2 u_x(q) - q p_inc``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .certify import DualCertificate
from .choi import ProcessChoi, validate_comb
from .herm import SystemLayout, eig_herm, partial_trace
from .problems import build_inconclusive

STRUCT_TOL = 1e-9
PAULI_TOL = 1e-12


class UnitalStructureError(ValueError):
    def __init__(self, report: dict):
        bad = {k: v for k, v in report.items() if v is False or (not isinstance(v, bool) and v > STRUCT_TOL)}
        super().__init__(f"channel does not have the cyclic unital structure: {bad}")
        self.report = report


def _pattern(s0, s1, s2, t0, t1, t2) -> np.ndarray:
    return np.array([[s0, s1, t1, t0],
                     [s1, s2, t2, -t1],
                     [t1, t2, s2, -s1],
                     [t0, -t1, -s1, s0]], dtype=float)


@dataclass(frozen=True)
class UnitalParams:
    """Entries of ``zeta_0 = L_0 / R`` and the generator ``U`` of the cyclic family."""

    R: int
    s0: float
    s1: float
    s2: float
    t0: float
    t1: float
    t2: float
    U: np.ndarray = None

    def __post_init__(self):
        if int(self.R) != self.R or self.R < 2:
            raise ValueError(f"R must be an integer >= 2, got {self.R}")
        object.__setattr__(self, "R", int(self.R))
        for name in ("s0", "s1", "s2", "t0", "t1", "t2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if abs(self.R * (self.s0 + self.s2) - 1.0) > STRUCT_TOL:
            raise ValueError(f"R (s0 + s2) = {self.R * (self.s0 + self.s2)} != 1: not trace preserving")
        if eig_herm(self.zeta0).eigenvalues[0] < -STRUCT_TOL:
            raise ValueError("zeta_0 is not positive semidefinite")
        if self.U is None:
            object.__setattr__(self, "U", np.diag([1.0, np.exp(2j * np.pi / self.R)]))
        object.__setattr__(self, "U", np.asarray(self.U, dtype=complex))

    @property
    def zeta0(self) -> np.ndarray:
        return _pattern(self.s0, self.s1, self.s2, self.t0, self.t1, self.t2)

    @property
    def pauli(self) -> bool:
        return abs(self.s1) <= PAULI_TOL and abs(self.t1) <= PAULI_TOL

    def zeta1(self, q: float) -> np.ndarray:
        return q * self.R * _pattern(self.s0, self.s1, self.s2, 0.0, 0.0, 0.0)

    def family(self) -> list[ProcessChoi]:
        layout = SystemLayout.single(2, 2)
        lam0 = self.R * self.zeta0
        out = []
        for r in range(self.R):
            w = np.kron(np.linalg.matrix_power(self.U, r), np.eye(2))
            out.append(ProcessChoi(layout, w @ lam0 @ w.conj().T, "comb"))
        return out

    def problem(self, p_inc: float):
        return build_inconclusive(self.family(), np.full(self.R, 1.0 / self.R), p_inc)


@dataclass(frozen=True)
class ConeApex:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def contains(self, u: "ConeApex", tol: float = 0.0) -> bool:
        """Whether ``u`` lies in the cone with apex at this point."""
        return u.x - self.x >= np.hypot(u.y - self.y, u.z - self.z) - tol

    def __iter__(self):
        return iter((self.x, self.y, self.z))


# --------------------------------------------------------------------------
# parameters


def check_generator(U, R: int) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    if U.shape != (2, 2):
        raise ValueError("U must be 2x2")
    if np.max(np.abs(U - np.diag(np.diag(U)))) > STRUCT_TOL:
        raise ValueError("U must be diagonal in the standard basis")
    if not np.allclose(U @ U.conj().T, np.eye(2), atol=STRUCT_TOL):
        raise ValueError("U must be unitary")
    if np.max(np.abs(np.linalg.matrix_power(U, R) - np.eye(2))) > STRUCT_TOL:
        raise ValueError(f"U^{R} != I")
    for r in range(1, R):
        if np.max(np.abs(np.linalg.matrix_power(U, r) - np.eye(2))) <= STRUCT_TOL:
            raise ValueError(f"U^{r} = I for r = {r} < R; U does not generate a cyclic group of order {R}")
    return U


def extract_params(lambda0: ProcessChoi, R: int, U=None) -> UnitalParams:
    """Read the six reals of ``zeta_0 = L_0 / R``; raises with a residual report on mismatch."""
    if lambda0.layout != SystemLayout.single(2, 2):
        raise ValueError("expected a single-step qubit channel")
    if U is None:
        U = np.diag([1.0, np.exp(2j * np.pi / R)])
    U = check_generator(U, R)
    m = lambda0.matrix
    z = m / R
    s0, s1, t1, t0 = z[0, 0].real, z[0, 1].real, z[0, 2].real, z[0, 3].real
    s2, t2 = z[1, 1].real, z[1, 2].real
    rebuilt = _pattern(s0, s1, s2, t0, t1, t2)
    comb = validate_comb(lambda0)
    report = {
        "pattern": float(np.max(np.abs(z - rebuilt))),
        "imaginary": float(np.max(np.abs(z.imag))),
        "transpose": float(np.max(np.abs(m - m.T))),
        "unital": float(np.max(np.abs(partial_trace(m, [2, 2], [1]) - np.eye(2)))),
        "comb": comb.ok,
    }
    if (not comb.ok or max(v for k, v in report.items() if k != "comb") > STRUCT_TOL * max(1.0, R)):
        raise UnitalStructureError(report)
    return UnitalParams(R, s0, s1, s2, t0, t1, t2, U)


def example_params() -> UnitalParams:
    """R = 3, s0 = t0 = 0.3/R, s1 = t1 = 0, s2 = 0.7/R, t2 = 0.1/R."""
    R = 3
    return UnitalParams(R, 0.3 / R, 0.0, 0.7 / R, 0.3 / R, 0.0, 0.1 / R)


def random_params(rng: np.random.Generator, *, pauli: bool = True, R: int | None = None) -> UnitalParams:
    """Random valid parameters; the general case rejection-samples PSD ``zeta_0``."""
    R = int(rng.integers(2, 6)) if R is None else R
    while True:
        s0 = rng.uniform(0.05, 0.95) / R
        s2 = 1.0 / R - s0
        t0 = rng.uniform(-s0, s0)
        t2 = rng.uniform(-s2, s2)
        if pauli:
            return UnitalParams(R, s0, 0.0, s2, t0, 0.0, t2)
        s1, t1 = rng.uniform(-0.5, 0.5, size=2) * min(s0, s2)
        if eig_herm(_pattern(s0, s1, s2, t0, t1, t2)).eigenvalues[0] >= 1e-6:
            return UnitalParams(R, s0, s1, s2, t0, t1, t2)


# --------------------------------------------------------------------------
# cone geometry


def _apex(ts, tt, k: int) -> ConeApex:
    sg = (-1) ** k
    return ConeApex(0.5 * (ts[0] + ts[2] + sg * (tt[0] - tt[2])),
                    ts[1] - sg * tt[1],
                    0.5 * (ts[0] - ts[2] + sg * (tt[0] + tt[2])))


def cone_apexes(params: UnitalParams, q: float) -> tuple[ConeApex, ConeApex, ConeApex]:
    """Apexes ``v00, v01`` (from zeta_0) and ``v11(q)`` (from zeta_1)."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    p = params
    s = (p.s0, p.s1, p.s2)
    t = (p.t0, p.t1, p.t2)
    qs = tuple(q * p.R * v for v in s)
    return _apex(s, t, 0), _apex(s, t, 1), _apex(qs, (0.0, 0.0, 0.0), 1)


def chi_matrix(u) -> np.ndarray:
    x, y, z = u
    return np.array([[x + z, y, 0, 0],
                     [y, x - z, 0, 0],
                     [0, 0, x - z, -y],
                     [0, 0, -y, x + z]], dtype=complex)


def analytic_eigenvalues(u, q: float, params: UnitalParams) -> dict:
    """Eigenvalues ``lambda_{l,k,+/-}`` of ``chi(u) - zeta_l`` from the apex formula."""
    a00, a01, a11 = cone_apexes(params, q)
    ts1 = _apex(tuple(q * params.R * v for v in (params.s0, params.s1, params.s2)), (0, 0, 0), 0)
    out = {}
    x, y, z = u
    for (l, k), v in {(0, 0): a00, (0, 1): a01, (1, 0): ts1, (1, 1): a11}.items():
        r = np.hypot(y - v.y, z - v.z)
        out[(l, k, +1)] = x - v.x + r
        out[(l, k, -1)] = x - v.x - r
    return out


def _require_pauli(params: UnitalParams) -> None:
    if not params.pauli:
        raise ValueError("closed form needs s1 = t1 = 0; use the reduced conic path")


def _orthant(v: ConeApex) -> tuple[float, float]:
    # in the plane y = 0, N_v is the quadrant x - z >= v_x - v_z, x + z >= v_x + v_z
    return v.x - v.z, v.x + v.z


@dataclass(frozen=True)
class Breakpoints:
    upsilon_prime: ConeApex
    q0: float
    q1: float
    sigma0: ConeApex
    sigma1: ConeApex
    p0: float


def breakpoints(params: UnitalParams) -> Breakpoints:
    """Min-x point of the two fixed cones and the q-range over which u^opt moves."""
    _require_pauli(params)
    v00, v01, _ = cone_apexes(params, 0.0)
    (a0, b0), (a1, b1) = _orthant(v00), _orthant(v01)
    a, b = max(a0, a1), max(b0, b1)
    up = ConeApex(0.5 * (a + b), 0.0, 0.5 * (b - a))
    # v11(q) has x - z = q R s2 and x + z = q R s0
    ra, rb = params.R * params.s2, params.R * params.s0
    lim_a = a / ra if ra > 0 else np.inf
    lim_b = b / rb if rb > 0 else np.inf
    q0 = min(lim_a, lim_b)
    q1 = max(lim_a if ra > 0 else 0.0, lim_b if rb > 0 else 0.0)
    sig0 = cone_apexes(params, q0)[2]
    sig1 = cone_apexes(params, q1)[2]
    p0 = (2 * sig1.x - 2 * up.x) / (q1 - q0) if abs(q1 - q0) > 1e-15 else 1.0
    return Breakpoints(up, q0, q1, sig0, sig1, p0)


def uopt(params: UnitalParams, q: float, opts: conic.SolverOptions | None = None) -> ConeApex:
    """Min-x point of the intersection of the three cones at a fixed q."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    if params.pauli:
        bp = breakpoints(params)
        if q <= bp.q0:
            return bp.upsilon_prime
        if q >= bp.q1:
            return cone_apexes(params, q)[2]
        f = (q - bp.q0) / (bp.q1 - bp.q0)
        return ConeApex(*(bp.upsilon_prime.as_array() + f * (bp.sigma1.as_array() - bp.upsilon_prime.as_array())))
    value, X, _ = _reduced_solve(params, q=q, opts=opts)
    return ConeApex(0.5 * (X[0, 0] + X[1, 1]).real, X[0, 1].real, 0.5 * (X[0, 0] - X[1, 1]).real)


def _nu(v: ConeApex) -> np.ndarray:
    return np.array([[v.x + v.z, v.y], [v.y, v.x - v.z]], dtype=complex)


def _reduced_solve(params: UnitalParams, *, q: float | None = None, p_inc: float = 0.0, opts=None):
    """minimize Tr X - q p_inc s.t. X >= nu00, nu01, q nu11(1); q fixed or free (>= 0)."""
    v00, v01, v11 = cone_apexes(params, 1.0)
    b = conic.ProgramBuilder()
    b.add("X", conic.HERM, 2)
    for i in range(3):
        b.add(f"s{i}", conic.PSD, 2)
    if q is None:
        b.add("q", conic.NONNEG, 1)
        qv = lambda v: v["q"][0]  # noqa: E731
    else:
        qv = lambda v: q  # noqa: E731
    b.constrain(lambda v: v["s0"] - v["X"], -_nu(v00))
    b.constrain(lambda v: v["s1"] - v["X"], -_nu(v01))
    b.constrain(lambda v: v["s2"] - v["X"] + qv(v) * _nu(v11), np.zeros((2, 2), complex))
    b.objective(lambda v: float(np.trace(v["X"]).real) - qv(v) * p_inc)
    rep = conic.solve(b.build("min"), opts)
    X = rep.blocks["X"]
    X = 0.5 * (X + X.conj())  # the program is invariant under complex conjugation
    qval = float(rep.blocks["q"][0]) if q is None else float(q)
    return float(np.trace(X).real) - qval * p_inc, X, qval


def reduced_value(params: UnitalParams, p_inc: float, opts=None) -> tuple[float, ConeApex, float]:
    """Optimal value via the 2x2 program with q free; returns (value, u, q)."""
    value, X, q = _reduced_solve(params, p_inc=p_inc, opts=opts)
    u = ConeApex(0.5 * (X[0, 0] + X[1, 1]).real, X[0, 1].real, 0.5 * (X[0, 0] - X[1, 1]).real)
    return value, u, q


# --------------------------------------------------------------------------
# optimal curve


@dataclass(frozen=True)
class PoptCurve:
    p0: float
    segments: tuple  # ((slope, intercept) below p0, (slope, intercept) from p0 on)
    q0: float
    q1: float
    upsilon_prime: ConeApex
    sigma1: ConeApex

    def evaluate(self, p_inc: float) -> float:
        if not 0.0 <= p_inc <= 1.0:
            raise ValueError(f"p_inc must lie in [0, 1], got {p_inc}")
        slope, icpt = self.segments[0] if p_inc < self.p0 else self.segments[1]
        return icpt + slope * p_inc

    __call__ = evaluate


def popt_curve(params: UnitalParams) -> PoptCurve:
    bp = breakpoints(params)
    segs = ((-bp.q0, 2 * bp.upsilon_prime.x), (-bp.q1, 2 * bp.sigma1.x))
    return PoptCurve(bp.p0, segs, bp.q0, bp.q1, bp.upsilon_prime, bp.sigma1)


def two_ux_orthant(params: UnitalParams, q: float) -> float:
    """2 u^opt_x(q) as the min-x corner of three quadrants (independent of the breakpoints)."""
    _require_pauli(params)
    corners = [_orthant(v) for v in cone_apexes(params, q)]
    return max(c[0] for c in corners) + max(c[1] for c in corners)


def popt_legendre(params: UnitalParams, p_inc: float, n: int = 2001) -> float:
    """inf_q 2u_x(q) - q p_inc on a uniform grid, refined by golden-section search."""
    if not 0.0 <= p_inc <= 1.0:
        raise ValueError(f"p_inc must lie in [0, 1], got {p_inc}")
    _require_pauli(params)
    q1 = max(a / b for a, b in ((params.s2 + abs(params.t2), params.R * params.s2),
                                (params.s0 + abs(params.t0), params.R * params.s0)) if b > 0)
    qs = np.linspace(0.0, max(2 * q1, 2.0), n)
    f = np.array([two_ux_orthant(params, q) - q * p_inc for q in qs])
    i = int(np.argmin(f))
    # the objective is convex in q, so its minimizer lies between the grid neighbours of the grid minimum
    lo, hi = qs[max(i - 1, 0)], qs[min(i + 1, n - 1)]
    g = lambda q: two_ux_orthant(params, q) - q * p_inc  # noqa: E731
    r = 0.5 * (np.sqrt(5.0) - 1.0)
    a, b = hi - r * (hi - lo), lo + r * (hi - lo)
    ga, gb = g(a), g(b)
    for _ in range(80):
        if ga <= gb:
            hi, b, gb = b, a, ga
            a = hi - r * (hi - lo)
            ga = g(a)
        else:
            lo, a, ga = a, b, gb
            b = lo + r * (hi - lo)
            gb = g(b)
    best = min(float(f[i]), ga, gb)
    return best


def popt(params: UnitalParams, p_inc: float, opts=None) -> float:
    """Optimal success probability: closed form for Pauli channels, reduced solve otherwise."""
    if params.pauli:
        return popt_curve(params).evaluate(p_inc)
    return reduced_value(params, p_inc, opts)[0]


def chi_reconstruct(u, q: float, params: UnitalParams, tol: float = 1e-9) -> DualCertificate:
    """Dual certificate ``(chi(u), q)`` for the inconclusive problem of the family."""
    u = ConeApex(*u)
    if q < 0:
        raise ValueError("q must be nonnegative")
    apexes = cone_apexes(params, q)
    worst = min(u.x - v.x - np.hypot(u.y - v.y, u.z - v.z) for v in apexes)
    if worst < -tol:
        raise ValueError(f"u is outside the feasible cones (margin {worst:.3e})")
    chi = chi_matrix(u)
    return DualCertificate(chi, np.array([q]), 2 * u.x, [np.array([[2 * u.x]], dtype=complex)])
