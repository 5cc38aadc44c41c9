import numpy as np
import pytest

from ibs import (ConfigurationError, InputShapeError, SearchConfig, build_model, decompose,
                 gradient_along_path, integrated_gradients, predict_proba, sample_boundary,
                 select_optimal_baseline)
from ibs.attribution import read_attribution_csv, write_attribution_csv


def riemann_oracle(model, x, baseline, steps=100_000, h=1e-6):
    """Trapezoid rule over central finite-difference gradients; shares no code with IG."""
    t = np.linspace(0.0, 1.0, steps + 1)
    w = np.full(t.size, 1.0 / steps)
    w[[0, -1]] *= 0.5
    d = x - baseline
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        pts = baseline + t[:, None] * d
        g = (predict_proba(model, pts + e) - predict_proba(model, pts - e)) / (2 * h)
        out[i] = d[i] * (w @ g)
    return out


@pytest.fixture(scope="module")
def custom_boundary(custom_run):
    ds, model, _, tr, _ = custom_run
    return sample_boundary(model, ds.subset(tr), 400, SearchConfig())


class TestBasics:
    def test_baseline_equal_input_gives_zero(self, small_mlp):
        x = np.array([0.3, -1.0, 2.0])
        a = integrated_gradients(small_mlp, x, x.copy(), 64)
        np.testing.assert_array_equal(a.values, 0.0)
        np.testing.assert_array_equal(a.delta, 0.0)
        assert a.completeness_residual == 0.0

    @pytest.mark.parametrize("steps", [1, 3, 128])
    def test_linear_logit_closed_form(self, linear2d, steps):
        x, b = np.array([1.5, -2.0]), np.array([-0.25, 0.75])
        a = integrated_gradients(linear2d, x, b, steps, output="logit")
        np.testing.assert_allclose(a.values, (x - b) * np.array([2.0, -1.0]), rtol=1e-15)
        assert a.completeness_residual < 1e-12

    def test_factorization_is_bitwise(self, small_mlp):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = integrated_gradients(small_mlp, rng.normal(size=3), rng.normal(size=3), 37)
            delta, cg = decompose(a)
            np.testing.assert_array_equal(delta * cg, a.values)

    def test_symmetry_under_reversal(self, small_mlp):
        x, b = np.array([1.0, 2.0, -0.5]), np.array([-1.0, 0.0, 0.3])
        fwd = integrated_gradients(small_mlp, x, b, 64)
        rev = integrated_gradients(small_mlp, b, x, 64)
        np.testing.assert_allclose(fwd.values, -rev.values, rtol=1e-12, atol=1e-15)

    def test_ignored_feature_gets_exact_zero(self):
        rng = np.random.default_rng(2)
        W1 = rng.normal(size=(3, 5))
        W1[1] = 0.0
        m = build_model([W1, rng.normal(size=(5, 1))], [np.zeros(5), np.zeros(1)])
        a = integrated_gradients(m, np.array([1.0, 4.0, -1.0]), np.array([0.0, -3.0, 0.5]), 50)
        assert a.values[1] == 0.0

    def test_target_zero_negates(self, small_mlp):
        x, b = np.array([1.0, 2.0, -0.5]), np.zeros(3)
        a1 = integrated_gradients(small_mlp, x, b, 32, target=1)
        a0 = integrated_gradients(small_mlp, x, b, 32, target=0)
        np.testing.assert_array_equal(a0.values, -a1.values)
        assert a0.completeness_residual == pytest.approx(a1.completeness_residual, abs=1e-15)

    def test_errors(self, small_mlp):
        with pytest.raises(InputShapeError):
            integrated_gradients(small_mlp, np.zeros(3), np.zeros(2))
        with pytest.raises(ConfigurationError):
            integrated_gradients(small_mlp, np.zeros(3), np.zeros(3), steps=0)
        with pytest.raises(ConfigurationError):
            integrated_gradients(small_mlp, np.zeros(3), np.zeros(3), target=2)


class TestCompleteness:
    def test_matches_independent_oracle(self, small_mlp):
        rng = np.random.default_rng(4)
        for _ in range(3):
            x, b = rng.normal(size=3), rng.normal(size=3)
            ig = integrated_gradients(small_mlp, x, b, 100_000)
            np.testing.assert_allclose(ig.values, riemann_oracle(small_mlp, x, b), atol=1e-4)
            assert ig.completeness_residual < 1e-4

    def test_trained_mlp_converges_with_steps(self, custom_run):
        ds, model, _, tr, te = custom_run
        rng = np.random.default_rng(8)
        coarse, fine = [], []
        for _ in range(20):
            x, b = ds.features[rng.choice(te)], ds.features[rng.choice(tr)]
            coarse.append(integrated_gradients(model, x, b, 32).completeness_residual)
            fine.append(integrated_gradients(model, x, b, 32768).completeness_residual)
        assert max(fine) < 1e-4
        assert np.mean(fine) < np.mean(coarse) / 50

    def test_monotone_for_smooth_integrand(self, linear2d):
        x, b = np.array([2.0, -1.0]), np.array([-1.5, 1.0])
        res = [integrated_gradients(linear2d, x, b, s).completeness_residual
               for s in (32, 64, 128, 256, 512, 1024)]
        for r0, r1 in zip(res, res[1:]):
            assert r1 <= 1.1 * r0

    def test_holds_for_far_baseline_with_many_steps(self, custom_run):
        ds, model, _, _, te = custom_run
        x = ds.features[te[0]]
        zero = np.zeros(2)
        a = integrated_gradients(model, x, zero, 50_000)
        assert abs(a.total - (predict_proba(model, x) - predict_proba(model, zero))) <= 1e-3


class TestPath:
    def test_endpoints(self, small_mlp):
        x, b = np.array([1.0, 0.0, 2.0]), np.array([-1.0, 1.0, 0.0])
        tr = gradient_along_path(small_mlp, b, x, 11)
        assert tr.t_values[0] == 0.0 and tr.t_values[-1] == 1.0
        assert np.all(np.diff(tr.t_values) > 0)
        assert tr.predictions[0] == predict_proba(small_mlp, b)
        assert tr.predictions[-1] == predict_proba(small_mlp, x)
        assert tr.gradients.shape == (11, 3)

    def test_linear_bell_shape(self, linear2d):
        # path through the boundary: the gradient peaks where f crosses 0.5
        tr = gradient_along_path(linear2d, np.array([-3.0, 0.0]), np.array([3.0, 0.0]), 201)
        ratio = tr.gradients / np.array([2.0, -1.0])
        np.testing.assert_allclose(ratio[:, 0], ratio[:, 1], rtol=1e-12)
        scale = ratio[:, 0]
        assert np.all(scale > 0)
        peak = int(np.argmax(scale))
        assert np.all(np.diff(scale[:peak + 1]) > 0) and np.all(np.diff(scale[peak:]) < 0)
        assert tr.predictions[peak] == pytest.approx(0.5, abs=0.02)

    def test_boundary_baseline_starts_neutral(self, custom_run, custom_boundary):
        ds, model, _, _, te = custom_run
        sel = select_optimal_baseline(ds.features[te[0]], custom_boundary, model)
        tr = gradient_along_path(model, sel.baseline, ds.features[te[0]])
        assert abs(tr.predictions[0] - 0.5) <= 1e-3

    def test_resolution_check(self, small_mlp):
        with pytest.raises(ConfigurationError):
            gradient_along_path(small_mlp, np.zeros(3), np.ones(3), 1)


class TestSigns:
    def _attr(self, ds, model, bset, sid):
        x = ds.features[sid]
        target = int(predict_proba(model, x) > 0.5)
        sel = select_optimal_baseline(x, bset, model, refine=True)
        return sel, integrated_gradients(model, x, sel.baseline, 128, target)

    def test_first_test_sample_delta_and_cg_agree(self, custom_run, custom_boundary):
        ds, model, _, _, te = custom_run
        sel, a = self._attr(ds, model, custom_boundary, te[0])
        assert sel.crossings == 0
        delta, cg = decompose(a)
        for i in ds.informative_indices:
            assert np.sign(delta[i]) == np.sign(cg[i])

    def test_agreement_rate_over_test_samples(self, custom_run, custom_boundary):
        # the boundary is curved, so a weak feature can disagree on a few samples
        ds, model, _, _, te = custom_run
        agree = []
        for sid in te[:50]:
            _, a = self._attr(ds, model, custom_boundary, sid)
            agree.extend(a.delta[i] * a.cumulated_gradients[i] >= -1e-6 for i in ds.informative_indices)
        assert np.mean(agree) >= 0.95


class TestFiles:
    def test_csv_round_trip(self, small_mlp, tmp_path):
        a = integrated_gradients(small_mlp, np.array([1.0, 2.0, 3.0]), np.zeros(3), 16)
        path, summary = write_attribution_csv(a, tmp_path / "a.csv", baseline_id=7)
        delta, cg, values = read_attribution_csv(path)
        np.testing.assert_array_equal(delta, a.delta)
        np.testing.assert_array_equal(cg, a.cumulated_gradients)
        np.testing.assert_array_equal(values, a.values)
        assert '"baseline_id": 7' in summary.read_text()
