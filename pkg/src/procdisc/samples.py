"""Ready-made problem files for the documented instances.

``python -m procdisc.samples DIR`` writes them as JSON into ``DIR``.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .choi import choi_from_kraus
from .herm import SystemLayout
from .io import dumps, encode_matrix, problem_to_json
from .symmetry import dihedral_action
from .unital import UnitalParams, example_params

PAULI_X = np.array([[0, 1], [1, 0]], complex)


def unital_family(params: UnitalParams | None = None, p_inc: float = 0.0, *, symmetry: bool = True) -> dict:
    """Inconclusive discrimination of the R rotated copies of a unital qubit channel."""
    params = params or example_params()
    R = params.R
    sym = dihedral_action(R, params.U, 2) if symmetry else None
    return problem_to_json(SystemLayout.single(2, 2), params.family(),
                           {"type": "inconclusive", "p_inc": p_inc, "priors": [1.0 / R] * R},
                           symmetry=sym, unital={"R": R, "U": params.U})


def unital_minimax(params: UnitalParams | None = None) -> dict:
    params = params or example_params()
    R = params.R
    sym = dihedral_action(R, params.U, 2, M=R, J=0, K=R)
    return problem_to_json(SystemLayout.single(2, 2), params.family(), {"type": "minimax"}, symmetry=sym)


def _kraus_file(kraus_sets, strategy: dict) -> dict:
    return {
        "version": "procdisc/1",
        "layout": [{"n_v": 2, "n_w": 2}],
        "combs": [{"kraus": [encode_matrix(k) for k in ks]} for ks in kraus_sets],
        "strategy": strategy,
        "tester_set": "general",
    }


def identity_vs_x() -> dict:
    return _kraus_file([[np.eye(2)], [PAULI_X]], {"type": "min_error", "priors": [0.5, 0.5]})


def amplitude_damping_kraus(gamma: float) -> list[np.ndarray]:
    return [np.array([[1, 0], [0, np.sqrt(1 - gamma)]], complex),
            np.array([[0, np.sqrt(gamma)], [0, 0]], complex)]


def identity_vs_damping(gamma: float = 1.0) -> dict:
    return _kraus_file([[np.eye(2)], amplitude_damping_kraus(gamma)],
                       {"type": "min_error", "priors": [0.5, 0.5]})


def all_samples() -> dict[str, dict]:
    return {
        "unital_family.json": unital_family(),
        "unital_family_no_symmetry.json": unital_family(symmetry=False),
        "unital_minimax.json": unital_minimax(),
        "identity_vs_x.json": identity_vs_x(),
        "identity_vs_damping.json": identity_vs_damping(),
    }


def write_samples(directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name, data in all_samples().items():
        p = d / name
        p.write_text(dumps(data))
        out.append(p)
    return out


if __name__ == "__main__":  # pragma: no cover
    for p in write_samples(sys.argv[1] if len(sys.argv) > 1 else "problems"):
        print(p)
