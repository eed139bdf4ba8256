import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from procdisc.choi import Tester, choi_from_kraus, uniform_normalizer, validate_comb
from procdisc.herm import SystemLayout
from procdisc.problems import (ProblemSpec, build_change_point, build_comparison, build_inconclusive,
                               build_min_error, build_neyman_pearson, build_order_discrimination,
                               build_unambiguous, change_point_combs, check_priors, eta, parallel_power)
from procdisc.sdp import solve_primal_dual
from procdisc.unital import example_params

from conftest import rand_kraus

X = np.array([[0, 1], [1, 0]], complex)
IDENT = choi_from_kraus([np.eye(2)])
XCH = choi_from_kraus([X])


def state(v):
    v = np.asarray(v, complex).reshape(2, 1)
    return choi_from_kraus([v / np.linalg.norm(v)])


def value(spec):
    res = solve_primal_dual(spec)
    assert res.optimal, res.status
    return res.value


class TestStructure:
    def test_min_error(self):
        spec = build_min_error([IDENT, XCH], [0.25, 0.75])
        assert spec.M == 2 and spec.J == 0
        assert np.allclose(spec.c[1], 0.75 * XCH.matrix)

    def test_inconclusive(self):
        spec = build_inconclusive([IDENT, XCH], [0.5, 0.5], 0.3)
        assert spec.M == 3 and spec.J == 1 and spec.b.tolist() == [-0.3]
        assert np.allclose(spec.c[2], 0)
        assert np.allclose(spec.a[0][0], 0) and np.allclose(spec.a[0][2], -0.5 * (IDENT.matrix + XCH.matrix))
        with pytest.raises(ValueError):
            build_inconclusive([IDENT, XCH], [0.5, 0.5], 1.5)

    def test_unambiguous(self):
        spec = build_unambiguous([IDENT, XCH], [0.5, 0.5])
        assert spec.b.tolist() == [-1.0]
        assert np.allclose(spec.a[0][0], -0.5 * IDENT.matrix)

    def test_neyman_pearson(self):
        spec = build_neyman_pearson(IDENT, XCH, 0.1)
        assert np.allclose(spec.c[0], 0) and np.allclose(spec.c[1], XCH.matrix)
        assert np.allclose(spec.a[0][1], IDENT.matrix) and spec.b.tolist() == [0.1]
        with pytest.raises(ValueError):
            build_neyman_pearson(IDENT, XCH, -0.1)

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            build_min_error([IDENT, choi_from_kraus([np.eye(3)])], [0.5, 0.5])
        with pytest.raises(ValueError):
            build_min_error([IDENT, XCH], [0.6, 0.6])
        with pytest.raises(ValueError):
            check_priors([0.5, 0.5], 3)
        with pytest.raises(ValueError):
            ProblemSpec(IDENT.layout, (np.eye(4),), ((np.eye(4),),), np.zeros(2))
        with pytest.raises(ValueError):
            ProblemSpec(IDENT.layout, ())

    def test_eta(self):
        spec = build_inconclusive([IDENT, XCH], [0.5, 0.5], 0.25)
        s = uniform_normalizer(IDENT.layout)
        # all weight on the inconclusive outcome: P_I = 1
        t = Tester(IDENT.layout, (0 * s, 0 * s, s))
        assert eta(t, spec) == pytest.approx([-1 + 0.25])
        assert eta(Tester(IDENT.layout, (s, 0 * s)), build_min_error([IDENT, XCH], [.5, .5])).size == 0
        np_spec = build_neyman_pearson(IDENT, XCH, 0.2)
        assert eta(Tester(IDENT.layout, (s, 0 * s)), np_spec) == pytest.approx([-0.2])


class TestDownstreamValues:
    def test_min_error(self):
        assert value(build_min_error([IDENT, XCH], [0.5, 0.5])) == pytest.approx(1, abs=1e-6)
        assert value(build_min_error([IDENT, IDENT], [0.5, 0.5])) == pytest.approx(0.5, abs=1e-6)
        assert value(build_min_error(example_params().family(), [1 / 3] * 3)) == pytest.approx(7 / 15, abs=1e-6)

    def test_inconclusive(self):
        fam = example_params().family()
        assert value(build_inconclusive(fam, [1 / 3] * 3, 0.7)) == pytest.approx(0.2, abs=1e-6)
        assert value(build_inconclusive(fam, [1 / 3] * 3, 1.0)) == pytest.approx(0, abs=1e-6)

    def test_unambiguous(self):
        assert value(build_unambiguous([state([1, 0]), state([0, 1])], [.5, .5])) == pytest.approx(1, abs=1e-6)
        assert value(build_unambiguous([IDENT, IDENT], [.5, .5])) == pytest.approx(0, abs=1e-6)
        # equal-prior pure states: 1 - |<psi0|psi1>|
        v = value(build_unambiguous([state([1, 0]), state([1, 1])], [.5, .5]))
        assert v == pytest.approx(1 - 1 / np.sqrt(2), abs=1e-5)

    def test_neyman_pearson(self):
        assert value(build_neyman_pearson(IDENT, XCH, 1.0)) == pytest.approx(1, abs=1e-6)
        assert value(build_neyman_pearson(IDENT, IDENT, 0.3)) == pytest.approx(0.3, abs=1e-6)
        assert value(build_neyman_pearson(IDENT, XCH, 0.0)) == pytest.approx(1, abs=1e-6)

    @settings(max_examples=5)
    @given(st.integers(0, 2**31 - 1))
    def test_inconclusive_zero_matches_min_error(self, seed):
        rng = np.random.default_rng(seed)
        combs = [choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(2)]
        a = value(build_min_error(combs, [0.4, 0.6]))
        b = value(build_inconclusive(combs, [0.4, 0.6], 0.0))
        assert a == pytest.approx(b, abs=1e-4)


class TestCompositeBuilders:
    def test_change_point(self):
        assert len(change_point_combs(IDENT, XCH, 1)) == 2
        combs, spec = build_change_point(IDENT, XCH, 2)
        assert len(combs) == 3 and all(validate_comb(c).ok for c in combs)
        # r = 0: X at every step; r = 2: identity at every step
        assert np.allclose(combs[0].matrix, np.kron(XCH.matrix, XCH.matrix))
        assert np.allclose(combs[2].matrix, np.kron(IDENT.matrix, IDENT.matrix))
        assert np.allclose(combs[1].matrix, np.kron(XCH.matrix, IDENT.matrix))

    def test_change_point_identical(self):
        _, spec = build_change_point(IDENT, IDENT, 2)
        assert value(spec) == pytest.approx(1 / 3, abs=1e-5)

    def test_order(self, rng):
        chans = [IDENT, XCH]
        combs, spec = build_order_discrimination(chans)
        assert len(combs) == 2 and spec.info["permutations"] == [(0, 1), (1, 0)]
        with pytest.raises(ValueError):
            build_order_discrimination([IDENT] * 4)

    def test_comparison(self, rng):
        spec = build_comparison([IDENT], [1.0], 2)
        assert spec.info["trivial"] and spec.info["p0"] == 1
        chans = [choi_from_kraus(rand_kraus(rng, 2, 2)) for _ in range(2)]
        spec = build_comparison(chans, [0.5, 0.5], 2)
        assert spec.info["p0"] == pytest.approx(0.5)
        t0, t1 = spec.info["combs"]
        assert validate_comb(t0).ok and validate_comb(t1).ok
        avg = 0.5 * (chans[0].matrix + chans[1].matrix)
        assert np.allclose(0.5 * t0.matrix + 0.5 * t1.matrix, parallel_power([avg, avg], 2, 2), atol=1e-10)
        with pytest.raises(ValueError):
            build_comparison(chans, [0.5, 0.5], 1)

    def test_parallel_power_is_a_channel(self, rng):
        k = rand_kraus(rng, 2, 2)
        c = choi_from_kraus(k).matrix
        big = parallel_power([c, c], 2, 2)
        ref = choi_from_kraus([np.kron(a, b) for a in k for b in k]).matrix
        assert np.allclose(big, ref)
        assert validate_comb(choi_from_kraus([np.kron(a, b) for a in k for b in k])).ok
        assert SystemLayout.single(4, 4).total_dim == big.shape[0]
