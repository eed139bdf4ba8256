"""Discrimination problems in the canonical linear form.

Every strategy is expressed as

    maximize    sum_m <Phi_m, c_m>
    subject to  eta_j(Phi) = sum_m <Phi_m, a_jm> - b_j <= 0,   j < J,

over testers ``Phi`` whose normalization set is given by a :class:`TesterSet`.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .choi import ProcessChoi, Tester, TesterSet, link_tensor, validate_comb
from .herm import SystemLayout, eig_herm, hermitian, inner, kron, permute_factors


@dataclass(frozen=True)
class ProblemSpec:
    layout: SystemLayout
    c: tuple
    a: tuple = ()
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    descriptor: TesterSet = TesterSet.GENERAL
    info: dict = field(default_factory=dict, compare=False)
    # optional per-outcome isometries B_m: Phi_m is restricted to B_m Y B_m^dag
    faces: tuple = ()

    def __post_init__(self):
        d = self.layout.total_dim
        c = tuple(hermitian(x) for x in self.c)
        if not c:
            raise ValueError("M must be >= 1")
        a = tuple(tuple(hermitian(x) for x in row) for row in self.a)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if len(a) != b.size:
            raise ValueError(f"{len(a)} constraint rows but {b.size} right-hand sides")
        for row in a:
            if len(row) != len(c):
                raise ValueError(f"constraint row has {len(row)} blocks, expected M = {len(c)}")
        for x in c + tuple(x for row in a for x in row):
            if x.shape != (d, d):
                raise ValueError(f"matrix shape {x.shape} does not match layout dim {d}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "descriptor", TesterSet(self.descriptor))
        if self.faces:
            if len(self.faces) != len(c):
                raise ValueError(f"{len(self.faces)} faces for M = {len(c)} outcomes")
            faces = []
            for f in self.faces:
                if f is not None:
                    f = np.asarray(f, dtype=complex).reshape(d, -1)
                    if np.linalg.norm(f.conj().T @ f - np.eye(f.shape[1])) > 1e-10:
                        raise ValueError("face bases must have orthonormal columns")
                faces.append(f)
            object.__setattr__(self, "faces", tuple(faces))

    def face(self, m: int):
        """Orthonormal basis of the subspace supporting Phi_m, or None for the full space."""
        return self.faces[m] if self.faces else None

    def face_dim(self, m: int) -> int:
        f = self.face(m)
        return self.layout.total_dim if f is None else f.shape[1]

    def lift(self, m: int, y) -> np.ndarray:
        f = self.face(m)
        if f is None:
            return y
        if f.shape[1] == 0:
            return np.zeros((f.shape[0],) * 2, dtype=complex)
        return f @ y @ f.conj().T

    def compress(self, m: int, x: np.ndarray) -> np.ndarray:
        f = self.face(m)
        return x if f is None else f.conj().T @ x @ f

    @property
    def M(self) -> int:
        return len(self.c)

    @property
    def J(self) -> int:
        return len(self.a)

    def with_descriptor(self, descriptor) -> "ProblemSpec":
        return ProblemSpec(self.layout, self.c, self.a, self.b, TesterSet(descriptor), dict(self.info), self.faces)

    def with_payoffs(self, c) -> "ProblemSpec":
        return ProblemSpec(self.layout, tuple(c), self.a, self.b, self.descriptor, dict(self.info), self.faces)

    def objective(self, tester: Tester) -> float:
        """Primal objective sum_m <Phi_m, c_m>."""
        _check_tester(tester, self)
        return sum(inner(p, c) for p, c in zip(tester.elements, self.c))


def _check_tester(tester: Tester, spec: ProblemSpec) -> None:
    if tester.layout != spec.layout:
        raise ValueError("tester layout does not match problem layout")
    if tester.M != spec.M:
        raise ValueError(f"tester has {tester.M} elements, problem has M = {spec.M}")


def eta(tester: Tester, spec: ProblemSpec) -> np.ndarray:
    """Constraint values eta_j = sum_m <Phi_m, a_jm> - b_j (feasible iff all <= 0)."""
    _check_tester(tester, spec)
    return np.array([sum(inner(p, a) for p, a in zip(tester.elements, row)) - bj
                     for row, bj in zip(spec.a, spec.b)])


def check_priors(priors: Sequence[float], n: int | None = None) -> np.ndarray:
    p = np.asarray(priors, dtype=float).reshape(-1)
    if n is not None and p.size != n:
        raise ValueError(f"expected {n} priors, got {p.size}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"priors must be nonnegative and sum to 1, got {p.tolist()}")
    return p


def _check_combs(combs: Sequence[ProcessChoi], tol: float = 1e-8) -> SystemLayout:
    if not combs:
        raise ValueError("need at least one comb")
    layout = combs[0].layout
    for k, c in enumerate(combs):
        if c.layout != layout:
            raise ValueError(f"comb {k} has a different layout")
        if not validate_comb(c, tol).ok:
            raise ValueError(f"comb {k} is not a valid comb")
    return layout


def build_min_error(combs: Sequence[ProcessChoi], priors, descriptor=TesterSet.GENERAL) -> ProblemSpec:
    layout = _check_combs(combs)
    p = check_priors(priors, len(combs))
    c = [pr * e.matrix for pr, e in zip(p, combs)]
    return ProblemSpec(layout, tuple(c), descriptor=descriptor, info={"strategy": "min_error"})


def build_inconclusive(combs, priors, p_inc: float, descriptor=TesterSet.GENERAL) -> ProblemSpec:
    """Maximize success probability with inconclusive rate ``p_inc`` (last outcome)."""
    if not 0.0 <= p_inc <= 1.0:
        raise ValueError(f"p_inc must lie in [0, 1], got {p_inc}")
    layout = _check_combs(combs)
    p = check_priors(priors, len(combs))
    d = layout.total_dim
    zero = np.zeros((d, d), dtype=complex)
    mix = sum(pr * e.matrix for pr, e in zip(p, combs))
    c = [pr * e.matrix for pr, e in zip(p, combs)] + [zero]
    a = [[zero] * len(combs) + [-mix]]
    return ProblemSpec(layout, tuple(c), tuple(map(tuple, a)), np.array([-p_inc]), descriptor,
                       info={"strategy": "inconclusive", "p_inc": float(p_inc)})


def build_unambiguous(combs, priors, descriptor=TesterSet.GENERAL) -> ProblemSpec:
    """Error-free identification: P_S + P_I >= 1 forces every error to zero."""
    layout = _check_combs(combs)
    p = check_priors(priors, len(combs))
    d = layout.total_dim
    zero = np.zeros((d, d), dtype=complex)
    weighted = [pr * e.matrix for pr, e in zip(p, combs)]
    c = weighted + [zero]
    a = [[-w for w in weighted] + [-sum(weighted)]]
    faces = [error_free_face(weighted, m) for m in range(len(weighted))] + [None]
    return ProblemSpec(layout, tuple(c), tuple(map(tuple, a)), np.array([-1.0]), descriptor,
                       info={"strategy": "unambiguous"}, faces=tuple(faces))


def error_free_face(weighted: Sequence[np.ndarray], m: int, tol: float = 1e-10) -> np.ndarray:
    """Basis of the kernel of the other hypotheses' payoffs.

    Any error-free tester has ``<Phi_m, c_k> = 0`` for ``k != m``, so its
    support lies in this kernel. Restricting to it up front gives the solver
    a problem with interior points.
    """
    others = sum(w for k, w in enumerate(weighted) if k != m)
    if isinstance(others, int):  # single hypothesis: no restriction
        return np.eye(weighted[0].shape[0], dtype=complex)
    w, v = eig_herm(others)
    keep = w <= tol * max(1.0, float(np.abs(w).max()))
    return v[:, keep]


def build_neyman_pearson(c0: ProcessChoi, c1: ProcessChoi, p_np: float,
                         descriptor=TesterSet.GENERAL) -> ProblemSpec:
    """Maximize detection Pr(1|c1) with false alarm Pr(1|c0) <= p_np."""
    if not 0.0 <= p_np <= 1.0:
        raise ValueError(f"p_np must lie in [0, 1], got {p_np}")
    layout = _check_combs([c0, c1])
    zero = np.zeros((layout.total_dim,) * 2, dtype=complex)
    return ProblemSpec(layout, (zero, c1.matrix), ((zero, c0.matrix),), np.array([p_np]), descriptor,
                       info={"strategy": "neyman_pearson", "p_np": float(p_np)})


def change_point_combs(l0: ProcessChoi, l1: ProcessChoi, T: int) -> list[ProcessChoi]:
    """Comb r applies ``l0`` at steps t <= r and ``l1`` afterwards (r = 0..T)."""
    if l0.layout != l1.layout or l0.layout.T != 1:
        raise ValueError("change-point channels must be single-step with equal dimensions")
    if T < 1:
        raise ValueError("T must be >= 1")
    return [link_tensor([l1 if t > r else l0 for t in range(1, T + 1)]) for r in range(T + 1)]


def build_change_point(l0: ProcessChoi, l1: ProcessChoi, T: int, descriptor=TesterSet.GENERAL):
    combs = change_point_combs(l0, l1, T)
    spec = build_min_error(combs, np.full(T + 1, 1.0 / (T + 1)), descriptor)
    spec.info["strategy"] = "change_point"
    return combs, spec


def build_order_discrimination(channels: Sequence[ProcessChoi], descriptor=TesterSet.GENERAL):
    """Identify the order in which T single-step channels are applied (T <= 3)."""
    T = len(channels)
    if not 1 <= T <= 3:
        raise ValueError("order discrimination is supported for 1 <= T <= 3")
    perms = list(itertools.permutations(range(T)))
    combs = [link_tensor([channels[g[t]] for t in range(T)]) for g in perms]
    spec = build_min_error(combs, np.full(len(perms), 1.0 / len(perms)), descriptor)
    spec.info.update(strategy="order", permutations=perms)
    return combs, spec


def parallel_power(chois: Sequence[np.ndarray], n_v: int, n_w: int) -> np.ndarray:
    """Choi matrix of the parallel product of single-step maps, as one W^K V^K step."""
    K = len(chois)
    m = kron(*chois)
    dims = [n_w, n_v] * K
    perm = [2 * k for k in range(K)] + [2 * k + 1 for k in range(K)]
    return permute_factors(m, dims, perm)


def build_comparison(channels: Sequence[ProcessChoi], weights, K: int,
                     descriptor=TesterSet.GENERAL) -> ProblemSpec:
    """Decide whether K uses of unknown channels (drawn with ``weights``) are identical.

    Hypothesis 0: all K copies are the same channel l (probability sum u_l^K).
    The K copies act in parallel as a single step.
    """
    if K < 2:
        raise ValueError("comparison needs K >= 2")
    layout = _check_combs(channels)
    if layout.T != 1:
        raise ValueError("comparison expects single-step channels")
    u = check_priors(weights, len(channels))
    n_v, n_w = layout.steps[0]
    same = sum(parallel_power([ul * ch.matrix] * K, n_v, n_w) for ul, ch in zip(u, channels))
    avg = sum(ul * ch.matrix for ul, ch in zip(u, channels))
    everything = parallel_power([avg] * K, n_v, n_w)
    p0 = float(np.sum(u**K))
    p1 = 1.0 - p0
    big = SystemLayout.single(n_v**K, n_w**K)
    info = {"strategy": "comparison", "p0": p0, "p1": p1, "trivial": False}
    if p1 <= 1e-14:
        info["trivial"] = True
        zero = np.zeros_like(same)
        return ProblemSpec(big, (same, zero), descriptor=descriptor, info=info)
    tilde0 = same / p0
    tilde1 = (everything - same) / p1
    combs = [ProcessChoi(big, tilde0, "comb"), ProcessChoi(big, tilde1, "comb")]
    spec = build_min_error(combs, [p0, p1], descriptor)
    spec.info.update(info)
    spec.info["combs"] = combs
    return spec
