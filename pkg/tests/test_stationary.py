import math

import numpy as np
import pytest

from corrq import (ConfigError, EstimatorConfig, SeedSpec, batch_means,
                   collect_stationary, make_params, params_from_rate,
                   regenerative_sample, stationary_sample)


def birth_death_pmf(n, lam, theta, k_max=400):
    """Stationary law of the independent-patience system: birth lam, death
    min(k, n) + theta*max(k - n, 0).  Solved numerically as an oracle."""
    log_pi = np.zeros(k_max + 1)
    for k in range(1, k_max + 1):
        death = min(k, n) + theta * max(k - n, 0)
        log_pi[k] = log_pi[k - 1] + math.log(lam) - math.log(death)
    log_pi -= log_pi.max()
    pi = np.exp(log_pi)
    return pi / pi.sum()


class TestBatchMeans:
    def test_iid_standard_error_scale(self):
        rng = SeedSpec(1).stream()
        x = rng.normal(size=10_000)
        mean, se = batch_means(x, batches=20)
        assert mean == pytest.approx(0.0, abs=0.05)
        assert se == pytest.approx(1.0 / math.sqrt(10_000), rel=0.5)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            batch_means(np.array([]))


class TestStationaryOracles:
    def test_mm1_mean(self):
        # no abandonment, single server, rho = 1/2: E[X] = rho/(1-rho) = 1
        params = params_from_rate(1, 0.5, 1.0, mode="none")
        cfg = EstimatorConfig(samples=4000, burn_in_mult=50.0, spacing_lof=3.0)
        s = stationary_sample(params, cfg, SeedSpec(101), observable="X")
        assert s.mean == pytest.approx(1.0, abs=max(5 * s.std_error, 0.08))

    def test_erlang_a_single_server_is_poisson(self):
        # birth lam=1, death k: stationary law is Poisson(1)
        params = params_from_rate(1, 1.0, 1.0, mode="independent")
        cfg = EstimatorConfig(samples=4000, burn_in_mult=50.0, spacing_lof=3.0)
        s = stationary_sample(params, cfg, SeedSpec(102), observable="X")
        vals = s.samples.astype(int)
        for k in range(4):
            target = math.exp(-1.0) / math.factorial(k)
            hat = (vals == k).mean()
            se = math.sqrt(target * (1 - target) / vals.size)
            assert hat == pytest.approx(target, abs=5 * se + 0.01)

    def test_erlang_a_multi_server_mean(self):
        params = params_from_rate(5, 4.0, 0.7, mode="independent")
        pmf = birth_death_pmf(5, 4.0, 0.7)
        target = float((np.arange(pmf.size) * pmf).sum())
        cfg = EstimatorConfig(samples=4000, burn_in_mult=50.0, spacing_lof=3.0)
        s = stationary_sample(params, cfg, SeedSpec(103), observable="X")
        assert s.mean == pytest.approx(target, abs=max(5 * s.std_error, 0.1))

    def test_perfect_mode_scaled_queue_not_growing(self):
        # beta = 1: E[Q]/sqrt(n) approaches a positive constant; the small-n
        # value should not be exceeded at the larger n (CI slack allowed)
        cfg = EstimatorConfig(samples=1500, burn_in_mult=25.0, spacing_lof=1.0)
        qhat = {}
        se = {}
        for n in (16, 144):
            params = make_params(n, 1.0, 0.5)
            s = stationary_sample(params, cfg, SeedSpec(104, n=n), observable="Q")
            qhat[n] = s.mean / math.sqrt(n)
            se[n] = s.std_error / math.sqrt(n)
        assert qhat[144] <= qhat[16] + 3 * (se[16] + se[144]) + 0.05
        assert 0.0 <= qhat[144] <= 1.0

    def test_multi_observable_single_run(self):
        params = make_params(8, -1.0, 1.0)
        cfg = EstimatorConfig(samples=200, burn_in_mult=10.0, spacing_lof=1.0)
        out, sim = collect_stationary(params, cfg, SeedSpec(105), observables=("X", "Q", "L"))
        assert set(out) == {"X", "Q", "L"}
        # scaled-observable identity at sample level
        assert np.array_equal(out["Q"].samples, np.maximum(out["X"].samples - 8, 0))
        assert (out["L"].samples >= 0).all()

    def test_regenerative_agrees_with_batch_means_small_system(self):
        params = params_from_rate(1, 0.5, 1.0, mode="none")
        reg = regenerative_sample(params, SeedSpec(106), cycles=400)
        assert reg.mean == pytest.approx(1.0, abs=0.15)

    def test_csv_format(self):
        params = make_params(2, 0.0, 1.0)
        cfg = EstimatorConfig(samples=3, burn_in_mult=1.0, spacing_lof=1.0)
        s = stationary_sample(params, cfg, SeedSpec(107))
        lines = s.to_csv().strip().splitlines()
        assert lines[0] == "sample_index,value"
        assert len(lines) == 4 and lines[1].startswith("0,")

    def test_bad_configs_rejected(self):
        params = make_params(2, 0.0, 1.0)
        with pytest.raises(ConfigError):
            stationary_sample(params, EstimatorConfig(samples=0), SeedSpec(1))
        with pytest.raises(ConfigError):
            stationary_sample(params, EstimatorConfig(samples=5, spacing_lof=0.0), SeedSpec(1))
        with pytest.raises(ConfigError):
            collect_stationary(params, EstimatorConfig(samples=5), SeedSpec(1),
                               observables=("X", "bogus"))
