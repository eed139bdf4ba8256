"""Finite group actions on discrimination problems, twirling and irreducibility.

An element ``g`` acts on outcome, constraint and prior indices by permutations
and on Hermitian matrices by ``x -> U x U^dag`` or, for anti-unitary elements,
``x -> U x^T U^dag``. Groups are given extensionally; the multiplication table
is derived from the action itself when not supplied.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .certify import DualCertificate, lambda_S
from .choi import Tester, TesterSet, normalization_residual, random_normalizer
from .herm import SystemLayout, hermitian, inner, kron
from .problems import ProblemSpec

MAX_ORDER = 256


class GroupError(ValueError):
    """The supplied elements or table do not form a group acting consistently."""


class UnsupportedAction(ValueError):
    pass


@dataclass(frozen=True)
class GroupElement:
    U: np.ndarray
    antiunitary: bool = False
    perm_m: tuple = ()
    perm_j: tuple = ()
    perm_k: tuple = ()

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.U, dtype=complex))
        if u.shape[0] != u.shape[1]:
            raise ValueError(f"U must be square, got {u.shape}")
        if not np.allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=1e-10):
            raise ValueError("U is not unitary")
        object.__setattr__(self, "U", u)
        for name in ("perm_m", "perm_j", "perm_k"):
            p = tuple(int(i) for i in getattr(self, name))
            if sorted(p) != list(range(len(p))):
                raise ValueError(f"{name} = {p} is not a permutation")
            object.__setattr__(self, name, p)

    def act(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if self.antiunitary:
            x = x.T
        return self.U @ x @ self.U.conj().T


def _superop(u: np.ndarray, flag: bool) -> np.ndarray:
    """Matrix of ``x -> u x^(T) u^dag`` on row-major vectorized matrices."""
    n = u.shape[0]
    s = np.kron(u, u.conj())
    if flag:
        swap = np.arange(n * n).reshape(n, n).T.reshape(-1)
        s = s[:, swap]
    return s


class GroupAction:
    """A finite group acting on indices and on Hermitian matrices of size ``dim``."""

    def __init__(self, elements: Sequence[GroupElement], table=None, *, seed: int = 0):
        self.elements = list(elements)
        n = len(self.elements)
        if not 1 <= n <= MAX_ORDER:
            raise GroupError(f"group order must be between 1 and {MAX_ORDER}, got {n}")
        self.dim = self.elements[0].U.shape[0]
        for g in self.elements:
            if g.U.shape[0] != self.dim:
                raise GroupError("all elements must act on the same dimension")
            for name in ("perm_m", "perm_j", "perm_k"):
                if len(getattr(g, name)) != len(getattr(self.elements[0], name)):
                    raise GroupError(f"inconsistent {name} sizes")
        self._rng = np.random.default_rng(seed)
        self._probes = [self._random_herm() for _ in range(2)]
        if table is None:
            table = self._derive_table()
        self.table = np.asarray(table, dtype=int)
        if self.table.shape != (n, n):
            raise GroupError(f"table shape {self.table.shape}, expected {(n, n)}")
        ids = [e for e in range(n) if all(self.table[e, i] == i and self.table[i, e] == i for i in range(n))]
        if not ids:
            raise GroupError("no identity element")
        self.identity = ids[0]
        inv = []
        for i in range(n):
            cands = [j for j in range(n) if self.table[i, j] == self.identity and self.table[j, i] == self.identity]
            if not cands:
                raise GroupError(f"element {i} has no inverse")
            inv.append(cands[0])
        self.inverse = inv

    @property
    def order(self) -> int:
        return len(self.elements)

    def _random_herm(self) -> np.ndarray:
        d = self.dim
        g = self._rng.normal(size=(d, d)) + 1j * self._rng.normal(size=(d, d))
        return g + g.conj().T

    def _fingerprint(self, mats, perms) -> np.ndarray:
        return np.concatenate([m.reshape(-1) for m in mats] + [np.asarray(p, dtype=complex) for p in perms])

    def _derive_table(self) -> np.ndarray:
        n = self.order
        images = [[g.act(p) for p in self._probes] for g in self.elements]
        perms = [(g.perm_m, g.perm_j, g.perm_k) for g in self.elements]
        prints = np.array([self._fingerprint(images[i], perms[i]) for i in range(n)])
        scale = max(1.0, float(np.max(np.abs(prints))))
        for i in range(n):
            for j in range(i):
                if np.max(np.abs(prints[i] - prints[j])) <= 1e-8 * scale:
                    raise GroupError(f"elements {j} and {i} act identically; pass an explicit table")
        table = np.empty((n, n), dtype=int)
        for i, g in enumerate(self.elements):
            for j in range(n):
                mats = [g.act(x) for x in images[j]]
                comp = tuple(tuple(pg[k] for k in ph) for pg, ph in zip(perms[i], perms[j]))
                fp = self._fingerprint(mats, comp)
                dist = np.max(np.abs(prints - fp), axis=1)
                k = int(np.argmin(dist))
                if dist[k] > 1e-8 * scale:
                    raise GroupError(f"product of elements {i} and {j} is not in the set")
                table[i, j] = k
        return table

    # -- action -----------------------------------------------------------

    def act(self, g: int, x: np.ndarray) -> np.ndarray:
        return self.elements[g].act(x)

    def perm(self, g: int, kind: str) -> tuple:
        return getattr(self.elements[g], f"perm_{kind}")

    def validate(self, tol: float = 1e-10, samples: int = 64) -> dict:
        """Check group axioms, table consistency and isometry; raises :class:`GroupError`."""
        n = self.order
        triples = itertools.product(range(n), repeat=3) if n ** 3 <= samples else (
            tuple(self._rng.integers(n, size=3)) for _ in range(samples))
        for a, b, c in triples:
            if self.table[self.table[a, b], c] != self.table[a, self.table[b, c]]:
                raise GroupError(f"table is not associative at ({a}, {b}, {c})")
        pairs = itertools.product(range(n), repeat=2) if n ** 2 <= samples else (
            tuple(self._rng.integers(n, size=2)) for _ in range(samples))
        worst_comp = 0.0
        for a, b in pairs:
            ab = self.table[a, b]
            for p in self._probes:
                lhs = self.act(ab, p)
                rhs = self.act(a, self.act(b, p))
                worst_comp = max(worst_comp, float(np.max(np.abs(lhs - rhs))) / max(1.0, float(np.max(np.abs(p)))))
            for kind in ("m", "j", "k"):
                pa, pb, pab = self.perm(a, kind), self.perm(b, kind), self.perm(ab, kind)
                if tuple(pa[i] for i in pb) != pab:
                    raise GroupError(f"index action on {kind} is not a homomorphism at ({a}, {b})")
        if worst_comp > 1e-8:
            raise GroupError(f"(gh).x differs from g.(h.x) by {worst_comp:.2e}")
        x, y = self._random_herm(), self._random_herm()
        worst_iso = max(abs(inner(self.act(g, x), self.act(g, y)) - inner(x, y)) for g in range(n))
        if worst_iso > tol * max(1.0, abs(inner(x, y))) * self.dim:
            raise GroupError(f"action is not isometric (deviation {worst_iso:.2e})")
        return {"composition": worst_comp, "isometry": worst_iso}


def trivial_action(dim: int, M: int = 0, J: int = 0, K: int = 0) -> GroupAction:
    e = GroupElement(np.eye(dim), False, tuple(range(M)), tuple(range(J)), tuple(range(K)))
    return GroupAction([e])


def dihedral_action(R: int, U: np.ndarray, n_v: int, *, M: int | None = None, J: int = 1,
                    K: int = 0) -> GroupAction:
    """Dihedral group of order 2R acting on R cyclically related channels.

    Rotations ``h^r`` act as ``Ad_{U^r (x) I}`` and shift hypothesis indices
    ``r -> r + 1 mod R``; extra outcome indices (the inconclusive one) are
    fixed. The reflection acts as the transpose; since transposing
    ``Ad_{U^r (x) I}(L)`` with ``L^T = L`` gives ``Ad_{U^-r (x) I}(L)``, it maps
    hypothesis ``r`` to ``-r mod R``. Constraint indices follow the
    hypotheses when ``J == R`` and are fixed otherwise.
    """
    M = R + 1 if M is None else M
    if M < R or K not in (0, R) or J not in (0, 1, R):
        raise ValueError("dihedral action needs M >= R, K in {0, R}, J in {0, 1, R}")
    U = np.asarray(U, dtype=complex)
    els = []
    for k in range(2):
        for r in range(R):
            # element h^r h_*^k: first reflect (m -> -m), then rotate
            shift = tuple(((-m if k else m) + r) % R for m in range(R)) + tuple(range(R, M))
            els.append(GroupElement(np.kron(np.linalg.matrix_power(U, r), np.eye(n_v)), bool(k), shift,
                                    shift[:J] if J == R else tuple(range(J)), shift[:K]))
    return GroupAction(els)


# --------------------------------------------------------------------------
# symmetric problems


@dataclass
class SymmetryReport:
    ok: bool
    violations: list = field(default_factory=list)
    worst: float = 0.0

    def __bool__(self) -> bool:
        return self.ok


def check_symmetric(spec: ProblemSpec, action: GroupAction, tol: float = 1e-9, *,
                    samples: int = 3, seed: int = 0) -> SymmetryReport:
    """Verify that payoffs, constraints and the normalization set are invariant."""
    violations = []
    worst = 0.0
    if action.dim != spec.layout.total_dim:
        return SymmetryReport(False, [f"action dimension {action.dim} != layout dimension {spec.layout.total_dim}"])
    e0 = action.elements[0]
    if len(e0.perm_m) != spec.M or len(e0.perm_j) != spec.J:
        return SymmetryReport(False, [f"permutation sizes ({len(e0.perm_m)}, {len(e0.perm_j)}) "
                                      f"do not match (M, J) = ({spec.M}, {spec.J})"])
    scale = max([1.0] + [float(np.max(np.abs(c))) for c in spec.c])

    def record(msg, err):
        nonlocal worst
        worst = max(worst, err)
        if err > tol * scale:
            violations.append(f"{msg}: {err:.3e}")

    rng = np.random.default_rng(seed)
    normalizers = [random_normalizer(spec.layout, spec.descriptor, rng) for _ in range(samples)]
    for g in range(action.order):
        pm, pj = action.perm(g, "m"), action.perm(g, "j")
        for m in range(spec.M):
            record(f"g={g}: g.c[{m}] != c[{pm[m]}]",
                   float(np.max(np.abs(action.act(g, spec.c[m]) - spec.c[pm[m]]))))
        for j in range(spec.J):
            record(f"g={g}: b[{j}] != b[{pj[j]}]", abs(float(spec.b[j] - spec.b[pj[j]])))
            for m in range(spec.M):
                record(f"g={g}: g.a[{j}][{m}] != a[{pj[j]}][{pm[m]}]",
                       float(np.max(np.abs(action.act(g, spec.a[j][m]) - spec.a[pj[j]][pm[m]]))))
        for phi in normalizers:
            res = normalization_residual(action.act(g, phi), spec.layout, spec.descriptor)
            if res > 1e-8:
                violations.append(f"g={g}: maps the normalization set outside itself ({res:.3e})")
    return SymmetryReport(not violations, violations, worst)


def twirl_tester(t: Tester, action: GroupAction) -> Tester:
    """Group average with elements ``Phi_m <- (1/|G|) sum_g g^-1 . Phi_{g.m}``."""
    if len(action.perm(0, "m")) != t.M:
        raise ValueError("outcome permutation size does not match the tester")
    out = []
    for m in range(t.M):
        acc = np.zeros_like(t.elements[0])
        for g in range(action.order):
            acc = acc + action.act(action.inverse[g], t.elements[action.perm(g, "m")[m]])
        out.append(acc / action.order)
    return Tester(t.layout, tuple(out), t.descriptor)


def twirl_q(q, action: GroupAction) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    for g in range(action.order):
        pinv = action.perm(action.inverse[g], "j")
        out += q[list(pinv)]
    return out / action.order


def twirl_dual(cert: DualCertificate, action: GroupAction, spec: ProblemSpec) -> DualCertificate:
    """Invariant dual point; its support value is recomputed for the averaged chi."""
    chi = sum(action.act(g, cert.chi) for g in range(action.order)) / action.order
    q = twirl_q(cert.q, action) if cert.q.size else cert.q
    lam, chain = lambda_S(chi, spec.descriptor, spec.layout)
    return DualCertificate(hermitian(chi), q, lam, chain)


def is_covariant(t: Tester, action: GroupAction, tol: float = 1e-9) -> bool:
    return all(np.max(np.abs(action.act(g, t.elements[m]) - t.elements[action.perm(g, "m")[m]])) <= tol
               for g in range(action.order) for m in range(t.M))


# --------------------------------------------------------------------------
# irreducibility and sufficiency of maximally entangled inputs


def _rep_items(rep) -> list[tuple[np.ndarray, bool]]:
    out = []
    for item in rep:
        if isinstance(item, tuple):
            u, flag = item
        else:
            u, flag = item, False
        out.append((np.atleast_2d(np.asarray(u, dtype=complex)), bool(flag)))
    return out


def _herm_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n):
        e = np.zeros((n, n), complex)
        e[i, i] = 1
        basis.append(e)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), complex)
            e[i, j] = e[j, i] = 1
            basis.append(e)
            e = np.zeros((n, n), complex)
            e[i, j], e[j, i] = 1j, -1j
            basis.append(e)
    return basis


def commutant_dimension(rep) -> int:
    """Real dimension of the Hermitian matrices fixed by every element of ``rep``."""
    items = _rep_items(rep)
    n = items[0][0].shape[0]
    basis = _herm_basis(n)
    blocks = []
    for u, flag in items:
        cols = []
        for e in basis:
            img = u @ (e.T if flag else e) @ u.conj().T - e
            cols.append(np.concatenate([img.real.reshape(-1), img.imag.reshape(-1)]))
        blocks.append(np.array(cols).T)
    sys_ = np.vstack(blocks)
    s = np.linalg.svd(sys_, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return len(basis)
    rank = int(np.sum(s > 1e-9 * s[0]))
    return len(basis) - rank


def _check_closed(items, max_pairs: int = 1024, seed: int = 0) -> None:
    sups = [_superop(u, f) for u, f in items]
    scale = [np.linalg.norm(s) for s in sups]
    n = len(items)
    rng = np.random.default_rng(seed)
    pairs = itertools.product(range(n), repeat=2) if n * n <= max_pairs else (
        tuple(rng.integers(n, size=2)) for _ in range(max_pairs))
    for a, b in pairs:
        prod = sups[a] @ sups[b]
        if not any(np.linalg.norm(prod - s) <= 1e-8 * sc for s, sc in zip(sups, scale)):
            raise GroupError(f"representation is not closed: product of elements {a} and {b} is missing")


def irreducible(rep) -> bool:
    """Schur test: the (anti)unitary set acts irreducibly iff its Hermitian commutant is R."""
    items = _rep_items(rep)
    if not items:
        raise ValueError("empty representation")
    for u, _ in items:
        if u.shape != items[0][0].shape or not np.allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=1e-10):
            raise ValueError("representation matrices must be unitary and of equal size")
    _check_closed(items)
    return commutant_dimension(items) == 1


@dataclass
class SufficiencyVerdict:
    sufficient: bool
    per_step: list
    symmetric: SymmetryReport

    def __bool__(self) -> bool:
        return self.sufficient


def product_elements(per_step_reps, layout: SystemLayout):
    """Matrices of the product group on the full space, ordered like ``itertools.product``.

    ``per_step_reps[t-1]`` lists ``(U_W, U_V, antiunitary)`` for step t.
    """
    if len(per_step_reps) != layout.T:
        raise UnsupportedAction(f"need one representation per step, got {len(per_step_reps)} for T = {layout.T}")
    out = []
    for combo in itertools.product(*per_step_reps):
        flags = {bool(f) for _, _, f in combo}
        if len(flags) > 1:
            raise UnsupportedAction("anti-unitary parts must agree across steps; mixed partial transposes "
                                    "are not positive maps")
        mats = []
        for (uw, uv, _), t in zip(reversed(combo), range(layout.T, 0, -1)):
            uw, uv = np.atleast_2d(uw), np.atleast_2d(uv)
            if uw.shape[0] != layout.n_w(t) or uv.shape[0] != layout.n_v(t):
                raise UnsupportedAction(f"step {t} representation has the wrong dimensions")
            mats += [uw, uv]
        out.append((kron(*mats), flags.pop()))
    return out


def entangled_sufficiency(spec: ProblemSpec, action: GroupAction, per_step_reps) -> SufficiencyVerdict:
    """True when symmetry forces a maximally entangled tester to be optimal.

    Requires the action on matrices to be exactly the product of per-step
    representations ``U_{W_t} (x) U_{V_t}``; the input-side parts must then
    all be irreducible.
    """
    if spec.descriptor is not TesterSet.GENERAL:
        raise UnsupportedAction("the criterion concerns the general tester set")
    prods = product_elements(per_step_reps, spec.layout)
    if len(prods) != action.order:
        raise UnsupportedAction(f"product group has {len(prods)} elements, action has {action.order}")
    her = [_superop(g.U, g.antiunitary) for g in action.elements]
    used = set()
    for u, f in prods:
        s = _superop(u, f)
        hit = [i for i, h in enumerate(her) if i not in used and np.linalg.norm(s - h) <= 1e-8 * np.linalg.norm(h)]
        if not hit:
            raise UnsupportedAction("the action does not factor into the given per-step representations")
        used.add(hit[0])
    sym = check_symmetric(spec, action)
    per_step = [irreducible([(uv, f) for _, uv, f in rep]) for rep in per_step_reps]
    return SufficiencyVerdict(bool(sym) and all(per_step), per_step, sym)


# --------------------------------------------------------------------------
# standard representations

S_MATRIX = np.array([[0, 1], [-1, 0]], dtype=complex)


def unital_qubit_rep() -> list[tuple[np.ndarray, np.ndarray, bool]]:
    """``{e, h}`` with ``h`` acting as the anti-unitary ``S K`` on both output and input."""
    return [(np.eye(2), np.eye(2), False), (S_MATRIX, S_MATRIX, True)]


def weyl_operators(d: int) -> list[np.ndarray]:
    """Generalized Pauli operators ``sum_i exp(2 pi i i k / d) |i + j><i|``, index ``j * d + k``."""
    out = []
    for j in range(d):
        for k in range(d):
            u = np.zeros((d, d), complex)
            for i in range(d):
                u[(i + j) % d, i] = np.exp(2j * np.pi * i * k / d)
            out.append(u)
    return out
