import numpy as np
import pytest

from core.metrics import (
    ArraySampleSource,
    CallableSampleSource,
    KsdEstimator,
    eval_protocol,
    ksd,
    ksd_squared,
    stein_kernel,
)
from core.targets import TARGET_NAMES, make_target
from core.utils.errors import ConfigurationError, SourceExhaustedError
from core.utils.prng import Prng


def brute_force_ksd_squared(target, x, c=1.0, beta=-0.5):
    """Independent double loop over i != j."""
    n, d = x.shape
    s = target.score(x)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            diff = x[i] - x[j]
            r2 = float(diff @ diff)
            base = c**2 + r2
            grad_x = 2.0 * beta * base ** (beta - 1.0) * diff
            grad_y = -grad_x
            trace = -2.0 * beta * d * base ** (beta - 1.0) - 4.0 * beta * (beta - 1.0) * base ** (beta - 2.0) * r2
            total += s[i] @ s[j] * base**beta + s[i] @ grad_y + s[j] @ grad_x + trace
    return total / (n * (n - 1))


def exact_draws(name, n, rng):
    """Independent draws from each analytic target (donut radius ignores the polar Jacobian)."""
    if name == "gaussian":
        return rng.normal(size=(n, 2))
    if name == "mog2":
        signs = rng.choice([-1.0, 1.0], size=n)
        return rng.normal(size=(n, 2)) + signs[:, None] * np.array([2.0, 0.0])
    if name == "rosenbrock":
        x1 = np.sqrt(10.0) * rng.normal(size=n)
        return np.column_stack([x1, x1**2 - 2.0 + rng.normal(size=n)])
    if name == "donut":
        angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
        radius = 2.6 + np.sqrt(0.033) * rng.normal(size=n)
        return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    if name == "funnel":
        x1 = 3.0 * rng.normal(size=n)
        return np.column_stack([x1, np.exp(x1 / 2.0) * rng.normal(size=n)])
    x1 = np.sqrt(2.0) * rng.normal(size=n)
    return np.column_stack([x1, np.sin(2.0 * x1) + 0.3 * rng.normal(size=n)])


class TestSteinKernel:
    def test_origin_on_standard_normal(self):
        assert stein_kernel(KsdEstimator(), make_target("gaussian"), [0.0, 0.0], [0.0, 0.0]) == pytest.approx(2.0)

    def test_symmetric(self, rng):
        estimator, target = KsdEstimator(), make_target("squiggle")
        for _ in range(5):
            x, y = rng.normal(size=2), rng.normal(size=2)
            assert stein_kernel(estimator, target, x, y) == pytest.approx(
                stein_kernel(estimator, target, y, x), rel=1e-12, abs=1e-12)

    def test_finite_far_apart(self):
        value = stein_kernel(KsdEstimator(), make_target("gaussian"), [1e3, -1e3], [-1e3, 1e3])
        assert np.isfinite(value)


class TestKsd:
    @pytest.mark.parametrize("name", TARGET_NAMES)
    def test_matches_double_loop(self, name, rng):
        target = make_target(name)
        x = rng.normal(size=(16, 2))
        expected = brute_force_ksd_squared(target, x)
        assert ksd_squared(KsdEstimator(), target, x) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_matches_double_loop_other_kernel(self, rng):
        target = make_target("mog2")
        x = rng.normal(size=(16, 2))
        expected = brute_force_ksd_squared(target, x, c=0.5, beta=-0.3)
        assert ksd_squared(KsdEstimator(c=0.5, beta=-0.3), target, x) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("name", TARGET_NAMES)
    def test_target_draws_beat_shifted_draws(self, name, rng):
        target = make_target(name)
        x = exact_draws(name, 500, rng)
        assert ksd(KsdEstimator(), target, x) < ksd(KsdEstimator(), target, x + 3.0)

    @pytest.mark.parametrize("name", TARGET_NAMES)
    def test_log_offset_exact(self, name, rng):
        x = rng.normal(size=(30, 2))
        assert ksd(KsdEstimator(), make_target(name), x) == ksd(KsdEstimator(), make_target(name, log_offset=-12.5), x)

    def test_permutation_invariant(self, rng):
        target = make_target("rosenbrock")
        x = rng.normal(size=(40, 2))
        assert ksd(KsdEstimator(), target, x[rng.permutation(40)]) == pytest.approx(
            ksd(KsdEstimator(), target, x), rel=1e-10)

    def test_u_statistic_needs_two_points(self):
        with pytest.raises(ConfigurationError):
            ksd(KsdEstimator(), make_target("gaussian"), [[0.0, 0.0]])

    def test_v_statistic_single_point(self):
        # score terms vanish at the origin, leaving the trace term
        value = ksd_squared(KsdEstimator(statistic="v_statistic"), make_target("gaussian"), [[0.0, 0.0]])
        assert value == pytest.approx(2.0)

    def test_clipped_at_zero(self, rng):
        x = rng.normal(size=(3, 2))
        assert ksd(KsdEstimator(), make_target("gaussian"), x) >= 0.0

    @pytest.mark.parametrize("params", [{"c": 0.0}, {"beta": 0.0}, {"beta": -1.0}, {"statistic": "w"}])
    def test_invalid_estimator(self, params):
        with pytest.raises(ConfigurationError):
            KsdEstimator(**params)


class TestEvalProtocol:
    def gaussian_source(self):
        return CallableSampleSource(lambda n, p: p.normal((n, 2)))

    def test_single_repeat(self):
        report = eval_protocol(KsdEstimator(), make_target("gaussian"), self.gaussian_source(), 50, 1, Prng(0))
        assert report.std == 0.0
        assert report.single_repeat
        assert report.to_json()["single_repeat"] is True

    def test_identical_batches(self, rng):
        fixed = rng.normal(size=(40, 2))
        source = CallableSampleSource(lambda n, p: fixed)
        report = eval_protocol(KsdEstimator(), make_target("gaussian"), source, 40, 5, Prng(0))
        assert report.std == pytest.approx(0.0, abs=1e-12)

    def test_array_source_exhausted(self, rng):
        source = ArraySampleSource(rng.normal(size=(100, 2)))
        with pytest.raises(SourceExhaustedError) as info:
            eval_protocol(KsdEstimator(), make_target("gaussian"), source, 30, 4, Prng(0))
        assert info.value.requested == 120
        assert info.value.available == 100

    def test_array_source_uses_disjoint_chunks(self, rng):
        points = rng.normal(size=(90, 2))
        report = eval_protocol(KsdEstimator(), make_target("gaussian"), ArraySampleSource(points), 30, 3, Prng(0))
        expected = [ksd(KsdEstimator(), make_target("gaussian"), points[k * 30:(k + 1) * 30]) for k in range(3)]
        assert report.mean == pytest.approx(np.mean(expected), rel=1e-12)

    def test_worker_count_does_not_change_result(self):
        target = make_target("mog2")
        serial = eval_protocol(KsdEstimator(), target, self.gaussian_source(), 60, 6, Prng(9), max_workers=1)
        threaded = eval_protocol(KsdEstimator(), target, self.gaussian_source(), 60, 6, Prng(9), max_workers=4)
        assert serial.to_json() == threaded.to_json()

    def test_report_json_fields(self):
        report = eval_protocol(KsdEstimator(), make_target("gaussian"), self.gaussian_source(), 20, 2, Prng(0))
        assert set(report.to_json()) >= {"metric", "mean", "std", "n_samples", "n_repeats", "kernel", "statistic"}
        assert report.to_json()["kernel"] == {"c": 1.0, "beta": -0.5}

    def test_more_samples_lower_ksd(self):
        target = make_target("gaussian")
        small = eval_protocol(KsdEstimator(), target, self.gaussian_source(), 250, 20, Prng(1))
        large = eval_protocol(KsdEstimator(), target, self.gaussian_source(), 1000, 20, Prng(2))
        assert large.mean < small.mean

    def test_bad_sizes(self):
        with pytest.raises(ConfigurationError):
            eval_protocol(KsdEstimator(), make_target("gaussian"), self.gaussian_source(), 0, 1, Prng(0))
