from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levybridge.errors import ParameterDomainError
from levybridge.models import (
    CharacteristicExponent,
    LengthLaw,
    cdf,
    evaluate,
    integrate,
    parse_model,
    sample_tau,
)
from levybridge.verification import CATALOG


class TestEvaluate:
    def test_stable_at_zero(self):
        assert evaluate(CharacteristicExponent.stable(1.5), 0.0) == 0.0

    def test_stable_at_two(self):
        assert evaluate(CharacteristicExponent.stable(1.5), 2.0) == pytest.approx(-(2.0**1.5), rel=1e-15)

    def test_nig_at_one(self):
        assert evaluate(CharacteristicExponent.nig(), 1.0) == pytest.approx(1 - math.sqrt(2), rel=1e-15)

    def test_tempered_symmetric(self):
        m = CharacteristicExponent.tempered_stable(0.5, 1.0, 1.0)
        assert evaluate(m, 3.0) == evaluate(m, -3.0)

    def test_tempered_matches_complex_form(self):
        # independent route: complex powers in 50-digit arithmetic
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 50
        for a, c, lam in [(0.5, 1.0, 1.0), (1.5, 0.7, 2.0), (0.25, 2.0, 0.5)]:
            m = CharacteristicExponent.tempered_stable(a, c, lam)
            for u in (0.01, 0.3, 1.0, 7.0, 40.0):
                v = mp.mpf(u) / lam
                z = (1 - 1j * v) ** a + (1 + 1j * v) ** a - 2
                expect = float((mp.gamma(-a) * c * mp.mpf(lam) ** a * z).real)
                assert evaluate(m, u) == pytest.approx(expect, rel=1e-13)

    def test_mts_half_equals_nig(self):
        u = np.linspace(-30, 30, 61)
        np.testing.assert_allclose(
            evaluate(CharacteristicExponent.modified_tempered_stable(0.5), u),
            evaluate(CharacteristicExponent.nig(), u),
            rtol=1e-13,
            atol=1e-15,
        )

    def test_mts_formula(self):
        a = 0.75
        u = np.array([0.5, 2.0, 10.0])
        expect = 2 ** (-a - 0.5) * math.gamma(-a) / math.sqrt(math.pi) * ((1 + u**2) ** a - 1)
        np.testing.assert_allclose(evaluate(CharacteristicExponent.modified_tempered_stable(a), u), expect, rtol=1e-13)

    def test_gaussian_and_cauchy(self):
        assert evaluate(CharacteristicExponent.gaussian(2.0), 1.5) == pytest.approx(-0.5 * 4 * 2.25)
        assert evaluate(CharacteristicExponent.cauchy(), -3.0) == -3.0

    def test_array_shape_preserved(self):
        out = evaluate(CharacteristicExponent.nig(), np.zeros((2, 3)))
        assert out.shape == (2, 3)

    @pytest.mark.parametrize("alpha", [1.0, 0.0, 2.0, -0.5, 2.5])
    def test_stable_alpha_domain(self, alpha):
        with pytest.raises(ParameterDomainError):
            CharacteristicExponent.stable(alpha)

    def test_tempered_alpha_one_rejected(self):
        with pytest.raises(ParameterDomainError):
            CharacteristicExponent.tempered_stable(1.0, 1.0, 1.0)

    @pytest.mark.parametrize("c, lam", [(0.0, 1.0), (1.0, -1.0)])
    def test_tempered_scale_domain(self, c, lam):
        with pytest.raises(ParameterDomainError):
            CharacteristicExponent.tempered_stable(0.5, c, lam)

    def test_gaussian_sigma_domain(self):
        with pytest.raises(ParameterDomainError):
            CharacteristicExponent.gaussian(0.0)

    def test_nonfinite_u(self):
        with pytest.raises(ParameterDomainError):
            evaluate(CharacteristicExponent.cauchy(), math.inf)

    @given(u=st.floats(-1e6, 1e6, allow_nan=False), idx=st.integers(0, len(CATALOG) - 1))
    def test_symmetric_and_nonpositive(self, u, idx):
        m = CATALOG[idx]
        assert evaluate(m, u) == evaluate(m, -u)
        assert evaluate(m, u) <= 0.0


class TestParseModel:
    @pytest.mark.parametrize(
        "text, model_id, params",
        [
            ("stable:alpha=1.5", "stable", {"alpha": 1.5}),
            ("nig", "nig", {}),
            ("tempered:alpha=0.5,c=1,lambda=1", "tempered_stable", {"alpha": 0.5, "c": 1.0, "lambda": 1.0}),
            ("mts:alpha=0.5", "modified_tempered_stable", {"alpha": 0.5}),
            ("gaussian:sigma=1", "gaussian_oracle", {"sigma": 1.0}),
            ("cauchy", "cauchy_oracle", {}),
            ("tempered:alpha=0.5,lam=2", "tempered_stable", {"alpha": 0.5, "c": 1.0, "lambda": 2.0}),
        ],
    )
    def test_spec_strings(self, text, model_id, params):
        m = parse_model(text)
        assert m.model_id == model_id
        assert m.param_dict == params

    def test_round_trip(self):
        for m in CATALOG:
            assert parse_model(m.spec_string()) == m

    @pytest.mark.parametrize("text", ["levy", "stable", "stable:alpha", "stable:alpha=x", "nig:alpha=1"])
    def test_rejects(self, text):
        with pytest.raises(ParameterDomainError):
            parse_model(text)

    def test_hashable(self):
        assert len({parse_model("nig"), CharacteristicExponent.nig()}) == 1


class TestLengthLaw:
    def test_cdf_examples(self, two_atoms):
        assert cdf(two_atoms, 0.0) == 0.0
        assert cdf(two_atoms, 1.0) == 0.5
        assert cdf(two_atoms, 3.0) == 1.0

    def test_integrate_examples(self, two_atoms):
        assert integrate(two_atoms) == 1.0
        assert integrate(two_atoms, lambda r: r) == 1.5
        assert integrate(two_atoms, None, 1.0, 2.0) == 0.5

    def test_uniform_density(self):
        law = LengthLaw.uniform(1.0, 3.0)
        assert integrate(law) == pytest.approx(1.0, abs=1e-15)
        assert cdf(law, 2.0) == pytest.approx(0.5)
        assert integrate(law, lambda r: r) == pytest.approx(2.0)

    def test_uniform_nodes(self):
        law = LengthLaw.uniform(1.0, 3.0, n=21)
        assert law.grid.size == 21
        assert integrate(law) == pytest.approx(1.0, abs=1e-14)
        with pytest.raises(ParameterDomainError):
            LengthLaw.uniform(1.0, 3.0, n=1)

    def test_restrict_clips_density(self):
        law = LengthLaw.uniform(1.0, 3.0)
        at, ap, grid, values = law.restrict(1.5, 2.5)
        assert grid[0] == 1.5 and grid[-1] == 2.5
        assert np.trapezoid(values, grid) == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(atom_times=[0.0], atom_probs=[1.0]),
            dict(atom_times=[2.0, 1.0], atom_probs=[0.5, 0.5]),
            dict(atom_times=[1.0], atom_probs=[0.9]),
            dict(atom_times=[1.0, 2.0], atom_probs=[1.5, -0.5]),
            dict(grid=[0.0, 1.0], values=[1.0, 1.0]),
            dict(grid=[1.0], values=[1.0]),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterDomainError):
            LengthLaw(**{k: np.asarray(v, dtype=float) for k, v in kwargs.items()})

    def test_json_round_trip(self, tmp_path):
        law = LengthLaw.from_dict(
            {"atoms": [{"r": 2.0, "p": 0.25}, {"r": 0.5, "p": 0.25}], "density": {"grid": [1.0, 2.0], "values": [0.5, 0.5]}}
        )
        assert list(law.atom_times) == [0.5, 2.0]
        path = tmp_path / "law.json"
        path.write_text(json.dumps(law.to_dict()))
        back = LengthLaw.from_json(path)
        assert back.to_dict() == law.to_dict()

    def test_normalized(self):
        law = LengthLaw.normalized([1.0, 2.0], [2.0, 6.0])
        np.testing.assert_allclose(law.atom_probs, [0.25, 0.75])

    def test_immutable_arrays(self, two_atoms):
        with pytest.raises(ValueError):
            two_atoms.atom_probs[0] = 1.0

    @given(
        probs=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=5),
        a=st.floats(0.0, 3.0),
        b=st.floats(0.0, 3.0),
    )
    def test_integrate_additive(self, probs, a, b):
        law = LengthLaw.normalized(np.arange(1, len(probs) + 1) * 0.6, probs)
        lo, hi = sorted((a, b))
        g = lambda r: np.sin(r) + 2
        total = integrate(law, g)
        parts = integrate(law, g, 0.0, lo) + integrate(law, g, lo, hi) + integrate(law, g, hi, math.inf)
        assert parts == pytest.approx(total, abs=1e-12)

    @given(ts=st.lists(st.floats(0.0, 5.0), min_size=2, max_size=20))
    def test_cdf_monotone(self, ts):
        law = LengthLaw.from_dict(
            {"atoms": [{"r": 0.5, "p": 0.5}], "density": {"grid": [1.0, 2.0, 4.0], "values": [0.0, 1.0 / 3.0, 0.0]}}
        )
        vals = [cdf(law, t) for t in sorted(ts)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_cdf_right_continuous_at_atoms(self, two_atoms):
        assert cdf(two_atoms, 1.0) - cdf(two_atoms, 1.0 - 1e-12) == pytest.approx(0.5)
        assert cdf(two_atoms, 1.0 + 1e-12) == cdf(two_atoms, 1.0)


class TestSampleTau:
    def test_point_mass(self):
        rng = np.random.default_rng(0)
        assert np.all(sample_tau(LengthLaw.point_mass(1.7), rng, size=100) == 1.7)
        assert sample_tau(LengthLaw.point_mass(1.7), rng) == 1.7

    def test_two_atoms_frequency(self, two_atoms):
        draws = sample_tau(two_atoms, np.random.default_rng(1), size=100_000)
        assert 0.49 <= np.mean(draws == 1.0) <= 0.51
        assert set(np.unique(draws)) == {1.0, 2.0}

    def test_uniform_mean(self):
        draws = sample_tau(LengthLaw.uniform(1.0, 2.0), np.random.default_rng(2), size=100_000)
        assert abs(draws.mean() - 1.5) <= 0.01
        assert draws.min() >= 1.0 and draws.max() <= 2.0

    def test_triangular_ks(self):
        from scipy import stats

        law = LengthLaw(grid=np.array([1.0, 2.0, 3.0]), values=np.array([0.0, 1.0, 0.0]))
        draws = sample_tau(law, np.random.default_rng(3), size=20_000)
        assert stats.kstest(draws, stats.triang(c=0.5, loc=1.0, scale=2.0).cdf).pvalue > 0.01

    def test_deterministic(self, two_atoms):
        a = sample_tau(two_atoms, np.random.default_rng(5), size=50)
        b = sample_tau(two_atoms, np.random.default_rng(5), size=50)
        assert np.array_equal(a, b)
