import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgdstop.schedule import (
    Family, ScheduleSpec, StepMatrix, Verdict, certify, lemma_inequality_holds, relaxed_condnum_threshold, step_matrix,
)

REFERENCE = ScheduleSpec.scalar_rational(0.2, 375000, dimension=3)


def recheck_k_star(spec, C, C2, horizon):
    """Smallest k with the step-size inequality at both extremes for every k' in [k, horizon]."""
    ks = np.arange(horizon + 1)
    lo, hi = spec.extreme_eigenvalues(ks)
    ok = lemma_inequality_holds(lo, lo, hi, C, C2) & lemma_inequality_holds(hi, lo, hi, C, C2)
    k = horizon + 1
    while k > 0 and ok[k - 1]:
        k -= 1
    return k


class TestStepMatrix:
    def test_reference_first_step(self):
        m = step_matrix(REFERENCE, 0)
        assert m.lambda_min == m.lambda_max == pytest.approx(0.2, rel=1e-15)
        assert m.kappa == 1.0
        assert np.array_equal(m.matrix, 0.2 * np.eye(3))

    def test_power_first_step(self):
        m = step_matrix(ScheduleSpec.scalar_power(1.0, 1.0, dimension=2), 0)
        assert np.array_equal(m.matrix, np.eye(2))

    def test_diagonal_example(self):
        m = step_matrix(ScheduleSpec.diagonal_rational((1.0, 2.0), a=1.0, b=1.0), 1)
        assert (m.lambda_min, m.lambda_max, m.kappa) == (0.5, 1.0, 2.0)

    def test_explicit_list(self):
        mats = [[[2.0, 1.0], [1.0, 2.0]], np.eye(2)]
        spec = ScheduleSpec.explicit_list(mats)
        m = step_matrix(spec, 0)
        assert m.lambda_min == pytest.approx(1.0) and m.lambda_max == pytest.approx(3.0)
        with pytest.raises(ValueError, match="horizon"):
            step_matrix(spec, 2)

    def test_invalid_matrices(self):
        with pytest.raises(ValueError, match="symmetric"):
            StepMatrix.from_matrix([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError, match="positive definite"):
            StepMatrix.from_matrix([[1.0, 0.0], [0.0, -1.0]])
        with pytest.raises(ValueError):
            ScheduleSpec.explicit_list([])
        with pytest.raises(ValueError):
            ScheduleSpec.scalar_rational(-0.1, 10)
        with pytest.raises(ValueError):
            ScheduleSpec.diagonal_rational((1.0, 0.0), 1.0, 1.0)
        with pytest.raises(ValueError):
            step_matrix(REFERENCE, -1)

    @given(
        family=st.sampled_from(["rational", "power", "diagonal"]), a=st.floats(1e-4, 10), b=st.floats(1e-2, 1e6),
        q=st.floats(0, 2), k=st.integers(0, 10**7), scales=st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=5),
    )
    def test_invariants(self, family, a, b, q, k, scales):
        spec = {
            "rational": lambda: ScheduleSpec.scalar_rational(a, b, len(scales)),
            "power": lambda: ScheduleSpec.scalar_power(a, q, len(scales)),
            "diagonal": lambda: ScheduleSpec.diagonal_rational(scales, a, b),
        }[family]()
        m = step_matrix(spec, k)
        assert np.linalg.norm(m.matrix - m.matrix.T) <= 1e-12 * np.linalg.norm(m.matrix)
        assert m.lambda_min > 0
        assert m.kappa * m.lambda_min == pytest.approx(m.lambda_max, rel=1e-12)
        if spec.is_scalar:
            assert m.kappa == 1.0 and m.lambda_max * m.kappa == m.lambda_max

    def test_deterministic(self):
        assert np.array_equal(step_matrix(REFERENCE, 123).matrix, step_matrix(REFERENCE, 123).matrix)


class TestCertify:
    def test_reference_schedule(self):
        cert = certify(REFERENCE, 3.0, 0.0, 10_000)
        assert cert.p1_ok
        assert cert.p2_verdict is Verdict.PROVEN_FINITE
        assert cert.p3_verdict is Verdict.PROVEN_INFINITE
        assert cert.p4_limit_estimate == 0.0
        assert cert.certified

    @pytest.mark.parametrize("spec", [REFERENCE, ScheduleSpec.scalar_power(1.0, 0.7), ScheduleSpec.diagonal_rational((1.0, 3.0), 0.5, 10.0)])
    def test_zero_lipschitz_gives_zero_index(self, spec):
        assert certify(spec, 0.0, 5.0, 100).k_star == 0

    def test_power_k_star_example(self):
        spec = ScheduleSpec.scalar_power(1.0, 1.0)
        cert = certify(spec, 4.0, 0.0, 10_000)
        assert cert.k_star == 3 and cert.k_star_analytic == 3
        assert recheck_k_star(spec, 4.0, 0.0, 10_000) == 3

    @pytest.mark.parametrize("q,p2,p3", [(0.4, Verdict.PROVEN_INFINITE, Verdict.PROVEN_INFINITE), (0.75, Verdict.PROVEN_FINITE, Verdict.PROVEN_INFINITE), (1.5, Verdict.PROVEN_FINITE, Verdict.PROVEN_FINITE)])
    def test_power_verdicts(self, q, p2, p3):
        cert = certify(ScheduleSpec.scalar_power(0.1, q), 1.0, 0.0, 100)
        assert (cert.p2_verdict, cert.p3_verdict) == (p2, p3)

    def test_explicit_list_verdicts_unknown(self):
        spec = ScheduleSpec.explicit_list([np.eye(2) * 0.1 / (k + 1) for k in range(20)])
        cert = certify(spec, 1.0, 1.0, 1000)
        assert cert.p2_verdict is Verdict.UNKNOWN and cert.p3_verdict is Verdict.UNKNOWN
        assert cert.horizon_checked == 19
        assert cert.k_star == recheck_k_star_explicit(spec, 1.0, 1.0)

    def test_relaxed_threshold(self):
        assert relaxed_condnum_threshold(2.0, 1.0) == pytest.approx(0.125)
        assert relaxed_condnum_threshold(0.0, 1.0) == math.inf
        assert certify(REFERENCE, 2.0, 1.0, 10).relaxed_condnum_threshold == pytest.approx(0.125)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            certify(REFERENCE, 1.0, 0.0, 0)

    def test_json_handles_non_finite(self):
        d = certify(ScheduleSpec.scalar_power(0.1, 0.4), 0.0, 0.0, 10).to_dict()
        assert d["p2_bound"] is None and d["relaxed_condnum_threshold"] == "inf"

    @given(
        a=st.floats(1e-3, 2), b=st.floats(1, 1e4), C=st.floats(0, 20), C2=st.floats(0, 20),
        scales=st.lists(st.floats(0.1, 10), min_size=1, max_size=4), horizon=st.integers(1, 3000),
    )
    def test_certificate_consistency(self, a, b, C, C2, scales, horizon):
        spec = ScheduleSpec.diagonal_rational(scales, a, b)
        cert = certify(spec, C, C2, horizon)
        lo, hi = spec.extreme_eigenvalues(np.arange(horizon))
        assert cert.p2_verdict is Verdict.PROVEN_FINITE
        assert np.sum(hi**2) <= cert.p2_bound * (1 + 1e-12)
        if cert.k_star is not None:
            assert cert.k_star == recheck_k_star(spec, C, C2, horizon)
            ks = np.arange(cert.k_star, horizon + 1)
            lo, hi = spec.extreme_eigenvalues(ks)
            assert np.all(lemma_inequality_holds(lo, lo, hi, C, C2) & lemma_inequality_holds(hi, lo, hi, C, C2))

    @given(a=st.floats(1e-3, 5), q=st.floats(0.55, 2), C=st.floats(0.01, 20), C2=st.floats(0, 20))
    def test_power_scan_matches_closed_form(self, a, q, C, C2):
        spec = ScheduleSpec.scalar_power(a, q, dimension=2)
        cert = certify(spec, C, C2, 2000)
        if cert.k_star is not None:
            assert cert.k_star == cert.k_star_analytic
        lo, hi = spec.extreme_eigenvalues(np.arange(2000))
        assert np.sum(hi**2) <= cert.p2_bound * (1 + 1e-12)


def recheck_k_star_explicit(spec, C, C2):
    mats = [step_matrix(spec, k) for k in range(spec.horizon)]
    ok = [
        lemma_inequality_holds(np.array([m.lambda_min]), m.lambda_min, m.lambda_max, C, C2)[0]
        and lemma_inequality_holds(np.array([m.lambda_max]), m.lambda_min, m.lambda_max, C, C2)[0]
        for m in mats
    ]
    k = len(ok)
    while k > 0 and ok[k - 1]:
        k -= 1
    return k if k < len(ok) else None


def test_round_trip_dict():
    for spec in (REFERENCE, ScheduleSpec.diagonal_rational((1.0, 2.0), 1.0, 3.0), ScheduleSpec.explicit_list([np.eye(1)])):
        assert ScheduleSpec.from_dict(spec.to_dict(), spec.dimension) == spec
    assert Family("scalar_rational") is Family.SCALAR_RATIONAL
