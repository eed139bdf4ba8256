import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rand_kraus
from test_choi import random_tester

from procdisc.choi import TesterSet, choi_from_kraus, choi_from_unitary
from procdisc.herm import SystemLayout
from procdisc.minimax import (
    MinimaxSpec, check_simplex, compile_prior_dual, min_error_minimax, q_opt, solve_minimax,
    twirl_mu, verify_saddle,
)
from procdisc.samples import PAULI_X, amplitude_damping_kraus
from procdisc.sdp import UnsupportedDescriptor
from procdisc.symmetry import GroupAction, GroupElement, dihedral_action, trivial_action, twirl_tester
from procdisc.unital import example_params


@pytest.fixture(scope="module")
def example_minimax():
    p = example_params()
    spec = min_error_minimax(p.family())
    return spec, solve_minimax(spec), dihedral_action(p.R, p.U, 2, M=p.R, J=0, K=p.R)


def test_identity_vs_x_value_one():
    spec = min_error_minimax([choi_from_unitary(np.eye(2)), choi_from_unitary(PAULI_X)])
    sol = solve_minimax(spec)
    assert sol.value == pytest.approx(1.0, abs=1e-4)
    assert sol.report.ok
    # perfect discrimination: every prior is a saddle prior
    for mu in ([1.0, 0.0], [0.3, 0.7]):
        assert verify_saddle(sol.tester, mu, spec).ok


def test_identical_combs_value_half(rng):
    c = choi_from_kraus(rand_kraus(rng, 2, 2))
    sol = solve_minimax(min_error_minimax([c, c]))
    assert sol.value == pytest.approx(0.5, abs=1e-4)
    np.testing.assert_allclose(sol.mu, [0.5, 0.5], atol=1e-6)
    assert sol.saddle_residual <= 1e-4


def test_example_minimax_value(example_minimax):
    spec, sol, _ = example_minimax
    assert sol.value == pytest.approx(7 / 15, abs=1e-4)
    np.testing.assert_allclose(sol.mu, np.full(3, 1 / 3), atol=1e-6)
    assert sol.report.ok


def test_twirled_saddle_is_saddle(example_minimax):
    spec, sol, act = example_minimax
    mu = twirl_mu(sol.mu, act)
    tw = twirl_tester(sol.tester, act)
    assert verify_saddle(tw, mu, spec).ok


def test_point_mass_prior_fails():
    spec = min_error_minimax([choi_from_unitary(np.eye(2)), choi_from_kraus(amplitude_damping_kraus(0.6))])
    sol = solve_minimax(spec)
    # under a point mass the best tester always guesses that hypothesis and scores 1 > Q_min
    rep = verify_saddle(sol.tester, [1.0, 0.0], spec)
    assert not rep.ok
    assert rep.q_opt == pytest.approx(1.0, abs=1e-4)
    assert rep.residual_min > 0.2


def test_damping_needs_prior_dual_fallback():
    spec = min_error_minimax([choi_from_unitary(np.eye(2)), choi_from_kraus(amplitude_damping_kraus(0.6))])
    sol = solve_minimax(spec)
    assert sol.mu_source == "prior_dual"
    assert sol.report.ok
    assert sol.saddle_residual <= 1e-4


def test_single_hypothesis_always_saddle(rng):
    c = choi_from_kraus(rand_kraus(rng, 2, 2))
    spec = MinimaxSpec(c.layout, ((c.matrix,),))
    sol = solve_minimax(spec)
    assert sol.value == pytest.approx(1.0, abs=1e-4)
    assert verify_saddle(sol.tester, [1.0], spec).ok


def test_maximin_sampling_bound(rng):
    combs = [choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(3)]
    spec = min_error_minimax(combs)
    sol = solve_minimax(spec)
    for mu in rng.dirichlet(np.ones(3), size=6):
        _, upper, _ = q_opt(spec, mu)
        assert upper >= sol.value - 1e-3


@given(st.integers(0, 2**32 - 1))
def test_payoff_is_bilinear(seed):
    rng = np.random.default_rng(seed)
    combs = [choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(3)]
    spec = min_error_minimax(combs)
    t = random_tester(rng, spec.layout, 3)
    mu = rng.dirichlet(np.ones(3))
    direct = sum(float(np.sum(t.elements[m] * spec.problem(mu).c[m].conj()).real) for m in range(3))
    assert abs(spec.Q(mu, t) - direct) <= 1e-12
    assert abs(spec.Q(mu, t) - float(mu @ spec.Q_k(t))) <= 1e-12


def test_twirl_mu_examples():
    act = dihedral_action(3, np.diag([1, np.exp(2j * np.pi / 3)]), 2, M=3, J=0, K=3)
    np.testing.assert_allclose(twirl_mu(np.full(3, 1 / 3), act), np.full(3, 1 / 3), atol=1e-15)
    cyc = GroupAction([GroupElement(np.eye(2), perm_k=tuple((k + r) % 3 for k in range(3))) for r in range(3)])
    np.testing.assert_allclose(twirl_mu([1, 0, 0], cyc), np.full(3, 1 / 3), atol=1e-15)
    np.testing.assert_allclose(twirl_mu([0.2, 0.8], trivial_action(2, K=2)), [0.2, 0.8])
    with pytest.raises(ValueError, match="permutation size"):
        twirl_mu([0.5, 0.5], act)


def test_simplex_validation():
    with pytest.raises(ValueError, match="simplex"):
        check_simplex([0.7, 0.7], 2)
    with pytest.raises(ValueError, match="simplex"):
        check_simplex([1.2, -0.2], 2)
    with pytest.raises(ValueError, match="simplex"):
        check_simplex([1.0], 2)


def test_spec_shape_errors():
    layout = SystemLayout.single(2, 2)
    with pytest.raises(ValueError):
        MinimaxSpec(layout, ())
    with pytest.raises(ValueError, match="same number"):
        MinimaxSpec(layout, ((np.eye(4),), (np.eye(4), np.eye(4))))


def test_q_k_rejects_wrong_outcomes(rng):
    spec = min_error_minimax([choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(2)])
    with pytest.raises(ValueError, match="elements"):
        spec.Q_k(random_tester(rng, spec.layout, 3))


def test_prior_dual_unsupported_for_nonadaptive(rng):
    combs = [choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(2)]
    base = min_error_minimax(combs)
    spec = MinimaxSpec(base.layout, base.c, descriptor=TesterSet.NONADAPTIVE)
    with pytest.raises(UnsupportedDescriptor):
        compile_prior_dual(spec)
