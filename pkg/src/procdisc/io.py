"""JSON problem files and reports.

Matrices are lists of rows; an entry is a real number or a ``[re, im]`` pair.
Every parse error names the offending path, e.g. ``combs[1].kraus[0][1][0]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .certify import DualCertificate
from .choi import ProcessChoi, Tester, TesterSet, choi_from_kraus, link_tensor, validate_comb
from .herm import SystemLayout
from .minimax import MinimaxSpec, min_error_minimax
from .problems import (ProblemSpec, build_inconclusive, build_min_error, build_neyman_pearson,
                       build_unambiguous)
from .symmetry import GroupAction, GroupElement

VERSION = "procdisc/1"
STRATEGIES = ("min_error", "inconclusive", "unambiguous", "neyman_pearson", "minimax")


class ProblemFileError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# --------------------------------------------------------------------------
# primitives


def encode_matrix(x: np.ndarray) -> list:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return [[[float(v.real), float(v.imag)] for v in row] for row in x]
    return [[float(v) for v in row] for row in x]


def _scalar(v, path: str) -> complex:
    if isinstance(v, bool):
        raise ProblemFileError(path, "expected a number or [re, im], got a boolean")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(p, (int, float)) and not isinstance(p, bool)
                                                  for p in v):
        return complex(v[0], v[1])
    raise ProblemFileError(path, f"expected a number or [re, im], got {json.dumps(v)}")


def decode_matrix(data, path: str) -> np.ndarray:
    if not isinstance(data, list) or not data or not all(isinstance(r, list) for r in data):
        raise ProblemFileError(path, "expected a non-empty list of rows")
    width = len(data[0])
    rows = []
    for i, row in enumerate(data):
        if len(row) != width:
            raise ProblemFileError(f"{path}[{i}]", f"row has {len(row)} entries, expected {width}")
        rows.append([_scalar(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    return np.array(rows, dtype=complex)


def decode_vector(data, path: str) -> np.ndarray:
    if not isinstance(data, list):
        raise ProblemFileError(path, "expected a list of numbers")
    return np.array([_scalar(v, f"{path}[{i}]").real for i, v in enumerate(data)])


def _get(obj: dict, key: str, path: str, kind=None, default=...):
    if not isinstance(obj, dict):
        raise ProblemFileError(path, "expected an object")
    if key not in obj:
        if default is ...:
            raise ProblemFileError(f"{path}.{key}" if path else key, "missing field")
        return default
    v = obj[key]
    if kind is not None and not isinstance(v, kind):
        raise ProblemFileError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return v


# --------------------------------------------------------------------------
# problem files


@dataclass
class ProblemFile:
    layout: SystemLayout
    combs: list
    strategy: dict
    descriptor: TesterSet
    symmetry: GroupAction | None = None
    unital: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.strategy["type"]

    def spec(self, **overrides) -> ProblemSpec:
        """Build the known-prior problem; ``overrides`` replace strategy parameters."""
        st = {**self.strategy, **overrides}
        kind = st["type"]
        priors = st.get("priors")
        if kind == "minimax":
            raise ProblemFileError("strategy.type", "minimax problems are handled by the minimax command")
        if kind in ("min_error", "inconclusive", "unambiguous") and priors is None:
            priors = [1.0 / len(self.combs)] * len(self.combs)
        try:
            if kind == "min_error":
                return build_min_error(self.combs, priors, self.descriptor)
            if kind == "inconclusive":
                return build_inconclusive(self.combs, priors, float(st["p_inc"]), self.descriptor)
            if kind == "unambiguous":
                return build_unambiguous(self.combs, priors, self.descriptor)
            if kind == "neyman_pearson":
                if len(self.combs) != 2:
                    raise ProblemFileError("combs", "neyman_pearson needs exactly two combs")
                return build_neyman_pearson(self.combs[0], self.combs[1], float(st["p_np"]), self.descriptor)
        except KeyError as e:
            raise ProblemFileError(f"strategy.{e.args[0]}", "missing field") from None
        except ProblemFileError:
            raise
        except ValueError as e:
            raise ProblemFileError("strategy", str(e)) from None
        raise ProblemFileError("strategy.type", f"unknown strategy {kind!r}")  # pragma: no cover

    def minimax_spec(self) -> MinimaxSpec:
        if self.kind != "minimax":
            raise ProblemFileError("strategy.type", "not a minimax problem")
        payoff = self.strategy.get("payoff", "min_error")
        if payoff != "min_error":
            raise ProblemFileError("strategy.payoff", f"unsupported minimax payoff {payoff!r}")
        return MinimaxSpec(self.layout, min_error_minimax(self.combs).c, descriptor=self.descriptor)


def _channel(obj, path: str) -> ProcessChoi:
    if not isinstance(obj, dict):
        raise ProblemFileError(path, "expected an object with 'kraus', 'choi' or 'steps'")
    if "kraus" in obj:
        ks = _get(obj, "kraus", path, list)
        if not ks:
            raise ProblemFileError(f"{path}.kraus", "needs at least one operator")
        mats = [decode_matrix(k, f"{path}.kraus[{i}]") for i, k in enumerate(ks)]
        try:
            return choi_from_kraus(mats)
        except ValueError as e:
            raise ProblemFileError(f"{path}.kraus", str(e)) from None
    if "steps" in obj:
        steps = [_channel(s, f"{path}.steps[{i}]") for i, s in enumerate(_get(obj, "steps", path, list))]
        try:
            return link_tensor(steps)
        except ValueError as e:
            raise ProblemFileError(f"{path}.steps", str(e)) from None
    raise ProblemFileError(path, "expected 'kraus', 'choi' or 'steps'")


def _layout(data, path: str) -> SystemLayout:
    if not isinstance(data, list) or not data:
        raise ProblemFileError(path, "expected a non-empty list of {n_v, n_w}")
    steps = []
    for i, st in enumerate(data):
        nv = _get(st, "n_v", f"{path}[{i}]", int)
        nw = _get(st, "n_w", f"{path}[{i}]", int)
        steps.append((nv, nw))
    try:
        return SystemLayout(tuple(steps))
    except ValueError as e:
        raise ProblemFileError(path, str(e)) from None


def _symmetry(data, path: str, dim: int) -> GroupAction:
    els = []
    for i, e in enumerate(_get(data, "elements", path, list)):
        p = f"{path}.elements[{i}]"
        U = decode_matrix(_get(e, "U", p), f"{p}.U")
        if U.shape != (dim, dim):
            raise ProblemFileError(f"{p}.U", f"expected a {dim}x{dim} matrix, got {U.shape}")
        try:
            els.append(GroupElement(U, bool(_get(e, "antiunitary", p, bool, False)),
                                    tuple(_get(e, "perm_m", p, list, [])), tuple(_get(e, "perm_j", p, list, [])),
                                    tuple(_get(e, "perm_k", p, list, []))))
        except ValueError as err:
            raise ProblemFileError(p, str(err)) from None
    table = data.get("table")
    try:
        return GroupAction(els, table)
    except ValueError as err:
        raise ProblemFileError(path, str(err)) from None


def parse_problem(data: Any) -> ProblemFile:
    if not isinstance(data, dict):
        raise ProblemFileError("", "top level must be an object")
    version = _get(data, "version", "", str)
    if version != VERSION:
        raise ProblemFileError("version", f"unsupported version {version!r}, expected {VERSION!r}")
    layout = _layout(_get(data, "layout", ""), "layout")
    combs = []
    for i, c in enumerate(_get(data, "combs", "", list)):
        p = f"combs[{i}]"
        if isinstance(c, dict) and "choi" in c:
            m = decode_matrix(c["choi"], f"{p}.choi")
            try:
                pc = ProcessChoi(layout, m, "comb")
            except ValueError as e:
                raise ProblemFileError(f"{p}.choi", str(e)) from None
        else:
            pc = _channel(c, p)
            if pc.layout != layout:
                raise ProblemFileError(p, f"dimensions {pc.layout.steps} do not match layout {layout.steps}")
        rep = validate_comb(pc)
        if not rep.ok:
            raise ProblemFileError(p, f"not a valid comb: {rep.residuals}")
        combs.append(ProcessChoi(layout, pc.matrix, "comb"))
    if not combs:
        raise ProblemFileError("combs", "need at least one comb")
    st = _get(data, "strategy", "", dict)
    kind = _get(st, "type", "strategy", str)
    if kind not in STRATEGIES:
        raise ProblemFileError("strategy.type", f"unknown strategy {kind!r}; expected one of {STRATEGIES}")
    strategy = dict(st)
    if "priors" in st:
        strategy["priors"] = decode_vector(st["priors"], "strategy.priors").tolist()
    ts = _get(data, "tester_set", "", str, "general")
    try:
        descriptor = TesterSet(ts)
    except ValueError:
        raise ProblemFileError("tester_set", f"unknown tester set {ts!r}") from None
    sym = _symmetry(data["symmetry"], "symmetry", layout.total_dim) if "symmetry" in data else None
    unital = dict(_get(data, "unital", "", dict, {}))
    if "U" in unital:
        unital["U"] = decode_matrix(unital["U"], "unital.U")
    pf = ProblemFile(layout, combs, strategy, descriptor, sym, unital, data)
    if kind != "minimax":
        pf.spec()  # run all problem-level validation at load time
    return pf


def load_problem(path: str) -> ProblemFile:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise ProblemFileError(f"{path}:{e.lineno}:{e.colno}", e.msg) from None
    except OSError as e:
        raise ProblemFileError(path, e.strerror or str(e)) from None
    return parse_problem(data)


# --------------------------------------------------------------------------
# reports


def tester_to_json(t: Tester) -> dict:
    return {"descriptor": t.descriptor.value, "elements": [encode_matrix(e) for e in t.elements]}


def tester_from_json(data: dict, layout: SystemLayout, path: str = "tester") -> Tester:
    els = [decode_matrix(e, f"{path}.elements[{i}]") for i, e in enumerate(_get(data, "elements", path, list))]
    try:
        return Tester(layout, tuple(els), TesterSet(_get(data, "descriptor", path, str, "general")))
    except ValueError as e:
        raise ProblemFileError(path, str(e)) from None


def certificate_to_json(c: DualCertificate) -> dict:
    return {
        "chi": encode_matrix(c.chi),
        "q": [float(v) for v in c.q],
        "lambda": float(c.lambda_value),
        "chain": None if c.chain is None else [encode_matrix(w) for w in c.chain],
    }


def certificate_from_json(data: dict, path: str = "certificate") -> DualCertificate:
    chi = decode_matrix(_get(data, "chi", path), f"{path}.chi")
    q = decode_vector(_get(data, "q", path, list, []), f"{path}.q")
    chain = data.get("chain")
    if chain is not None:
        chain = [decode_matrix(w, f"{path}.chain[{i}]") for i, w in enumerate(chain)]
    try:
        return DualCertificate(chi, q, float(_get(data, "lambda", path)), chain)
    except ValueError as e:
        raise ProblemFileError(path, str(e)) from None


def dumps(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True) + "\n"


def load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ProblemFileError(f"{path}:{e.lineno}:{e.colno}", e.msg) from None
    except OSError as e:
        raise ProblemFileError(path, e.strerror or str(e)) from None


def problem_to_json(layout: SystemLayout, combs, strategy: dict, tester_set: str = "general",
                    symmetry: GroupAction | None = None, unital: dict | None = None) -> dict:
    """Problem file with combs given by their Choi matrices."""
    out = {
        "version": VERSION,
        "layout": [{"n_v": nv, "n_w": nw} for nv, nw in layout.steps],
        "combs": [{"choi": encode_matrix(c.matrix)} for c in combs],
        "strategy": strategy,
        "tester_set": tester_set,
    }
    if symmetry is not None:
        out["symmetry"] = {"elements": [
            {"U": encode_matrix(g.U), "antiunitary": g.antiunitary, "perm_m": list(g.perm_m),
             "perm_j": list(g.perm_j), "perm_k": list(g.perm_k)} for g in symmetry.elements]}
    if unital:
        out["unital"] = {k: (encode_matrix(v) if isinstance(v, np.ndarray) else v) for k, v in unital.items()}
    return out
