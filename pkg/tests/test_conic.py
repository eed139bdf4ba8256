import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from procdisc import conic
from procdisc.choi import TesterSet, choi_from_kraus, validate_tester
from procdisc.herm import SystemLayout
from procdisc.problems import build_inconclusive, build_min_error
from procdisc.sdp import UnsupportedDescriptor, compile_dual, compile_primal, solve_primal, solve_primal_dual
from procdisc.unital import example_params

from conftest import rand_density, rand_herm, rand_kraus

seeds = st.integers(0, 2**31 - 1)


def state(v):
    v = np.asarray(v, complex).reshape(2, 1)
    return choi_from_kraus([v / np.linalg.norm(v)])


class TestVectorization:
    @given(seeds, st.integers(1, 6))
    def test_round_trip_and_isometry(self, seed, d):
        rng = np.random.default_rng(seed)
        x, y = rand_herm(rng, d), rand_herm(rng, d)
        vx, vy = conic.herm_to_vec(x), conic.herm_to_vec(y)
        assert vx.size == d * d
        assert np.allclose(conic.vec_to_herm(vx, d), x)
        assert vx @ vy == pytest.approx(np.trace(x @ y).real, abs=1e-10)

    def test_batched(self, rng):
        xs = np.stack([rand_herm(rng, 3) for _ in range(4)])
        v = conic.herm_to_vec(xs)
        assert v.shape == (4, 9)
        assert np.allclose(conic.vec_to_herm(v, 3), xs)


class TestProgram:
    def test_builder_errors(self):
        b = conic.ProgramBuilder()
        b.add("x", conic.PSD, 2)
        with pytest.raises(ValueError):
            b.add("x", conic.FREE, 1)
        with pytest.raises(ValueError):
            b.add("y", "soc", 1)
        with pytest.raises(ValueError):
            conic.ConicProgram([conic.Block("x", conic.FREE, 2)], np.zeros((1, 2)), np.zeros(2), np.zeros(2))

    def test_feasibility_program(self):
        # find X >= 0 with X = diag(0.3, 0.7): the only point
        b = conic.ProgramBuilder()
        b.add("x", conic.PSD, 2)
        b.constrain(lambda v: v["x"], np.diag([0.3, 0.7]).astype(complex))
        rep = conic.solve(b.build("min"))
        assert rep.optimal and rep.primal_residual <= 1e-7 and rep.dual_residual <= 1e-7
        assert np.allclose(rep.blocks["x"], np.diag([0.3, 0.7]), atol=1e-7)

    def test_lambda_max_program(self, rng):
        h = rand_herm(rng, 3)
        b = conic.ProgramBuilder()
        b.add("x", conic.PSD, 3)
        b.constrain(lambda v: np.array([np.trace(v["x"]).real]), np.array([1.0]))
        b.objective(lambda v: float(np.trace(v["x"] @ h).real))
        rep = conic.solve(b.build("max"))
        assert rep.objective == pytest.approx(np.linalg.eigvalsh(h)[-1], abs=1e-6)

    def test_inconsistent_equalities(self):
        b = conic.ProgramBuilder()
        b.add("t", conic.FREE, 1)
        b.constrain(lambda v: v["t"], np.array([1.0]))
        b.constrain(lambda v: v["t"], np.array([2.0]))
        rep = conic.solve(b.build())
        assert rep.status == "infeasible_suspected"

    def test_max_iter_reported(self, rng):
        spec = build_min_error([state([1, 0]), state([1, 1])], [0.5, 0.5])
        rep = conic.solve(compile_primal(spec), conic.SolverOptions(max_iter=3))
        assert rep.status == "max_iter" and rep.iterations == 3

    def test_structure(self):
        spec = build_min_error([state([1, 0]), state([0, 1])], [0.5, 0.5])
        prog = compile_primal(spec)
        psd = [b for b in prog.blocks if b.kind == conic.PSD]
        assert [b.name for b in psd] == ["phi0", "phi1", "tau1"]
        assert all(b.dim == 2 for b in psd[:2]) and psd[2].dim == 1
        fam = example_params().family()
        prog = compile_primal(build_inconclusive(fam, [1 / 3] * 3, 0.2))
        kinds = [(b.name, b.kind, b.dim) for b in prog.blocks]
        assert kinds[:4] == [(f"phi{m}", conic.PSD, 4) for m in range(4)]
        assert ("tau1", conic.PSD, 2) in kinds and ("slack", conic.NONNEG, 1) in kinds

    def test_nonadaptive_dual_unsupported(self, rng):
        ch = choi_from_kraus([np.eye(2)])
        from procdisc.choi import link_tensor
        c = link_tensor([ch, ch])
        spec = build_min_error([c, c], [0.5, 0.5], TesterSet.NONADAPTIVE)
        compile_primal(spec)
        with pytest.raises(UnsupportedDescriptor):
            compile_dual(spec)
        with pytest.raises(UnsupportedDescriptor):
            compile_primal(build_min_error([ch, ch], [.5, .5], TesterSet.NONADAPTIVE))


class TestSolver:
    def test_helstrom_examples(self):
        assert solve_primal_dual(build_min_error([state([1, 0]), state([0, 1])], [.5, .5])).value == \
            pytest.approx(1, abs=1e-6)
        v = solve_primal_dual(build_min_error([state([1, 0]), state([1, 1])], [.5, .5])).value
        assert v == pytest.approx(0.5 * (1 + 1 / np.sqrt(2)), abs=1e-5)

    def test_example_branch(self):
        res = solve_primal_dual(example_params().problem(0.5))
        assert res.optimal
        assert res.primal_value == pytest.approx(7 / 15 - 8 / 21 * 0.5, abs=1e-4)
        assert res.dual_value == pytest.approx(7 / 15 - 8 / 21 * 0.5, abs=1e-4)

    def test_identical_combs_max_prior(self, rng):
        c = choi_from_kraus(rand_kraus(rng, 2, 2))
        assert solve_primal_dual(build_min_error([c, c], [0.3, 0.7])).value == pytest.approx(0.7, abs=1e-5)

    def test_deterministic(self, rng):
        spec = build_min_error([choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(2)], [.5, .5])
        a = conic.solve(compile_primal(spec))
        b = conic.solve(compile_primal(spec))
        assert a.iterations == b.iterations
        assert all(np.array_equal(a.blocks[k], b.blocks[k]) for k in a.blocks)

    @settings(max_examples=5)
    @given(seeds, st.floats(0.2, 5.0))
    def test_scaling_covariance(self, seed, s):
        rng = np.random.default_rng(seed)
        spec = build_min_error([choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(2)], [.5, .5])
        v = solve_primal_dual(spec).value
        vs = solve_primal_dual(spec.with_payoffs([s * c for c in spec.c])).value
        assert vs == pytest.approx(s * v, abs=1e-4 * max(1, s))

    @settings(max_examples=5)
    @given(seeds)
    def test_tester_valid(self, seed):
        rng = np.random.default_rng(seed)
        spec = build_inconclusive([choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(3)], [1 / 3] * 3, 0.3)
        res = solve_primal_dual(spec)
        assert res.optimal and validate_tester(res.tester, 1e-6).ok

    def test_fixed_entangled_descriptor(self, rng):
        # identity vs X with a maximally entangled input: the Bell states are orthogonal
        ident, x = choi_from_kraus([np.eye(2)]), choi_from_kraus([np.array([[0, 1], [1, 0]])])
        spec = build_min_error([ident, x], [.5, .5], TesterSet.FIXED_ENTANGLED)
        res = solve_primal_dual(spec)
        assert res.optimal and res.value == pytest.approx(1, abs=1e-6)

    def test_nonadaptive_primal(self, rng):
        from procdisc.choi import link_tensor
        k = [choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(2)]
        combs = [link_tensor([k[0], k[1]]), link_tensor([k[1], k[0]])]
        general = solve_primal_dual(build_min_error(combs, [.5, .5])).value
        t, v, rep = solve_primal(build_min_error(combs, [.5, .5], TesterSet.NONADAPTIVE))
        assert rep.optimal and validate_tester(t, 1e-6).ok
        assert v <= general + 1e-5  # adaptive testers include the nonadaptive ones
