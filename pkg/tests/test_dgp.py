import numpy as np
import pytest

from factorbreak.dgp import (
    DgpConfig,
    Scenario,
    gen_errors,
    gen_factors,
    gen_loadings,
    gen_panel,
    stream,
    toeplitz_omega,
)
from factorbreak.errors import ParameterError
from factorbreak.panel_model import panel_spectrum


class TestConfig:
    def test_defaults(self):
        cfg = DgpConfig(n_len=10, t_len=21)
        assert cfg.k0 == 10 and cfg.scenario is Scenario.ONE_A and cfg.r0 == 3

    def test_scenario_parsing(self):
        assert DgpConfig(10, 20, scenario="1.d").scenario is Scenario.ONE_D
        with pytest.raises(ParameterError):
            DgpConfig(10, 20, scenario="2A")

    def test_all_problems_reported(self):
        with pytest.raises(ParameterError) as err:
            DgpConfig(10, 20, rho=1.0, beta=-0.1, scenario="1C")
        msg = str(err.value)
        assert "rho" in msg and "beta" in msg and "1C" in msg

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"k0": 0},
            {"k0": 20},
            {"alpha": 1.0},
            {"scenario": "1C", "m": 1.5},
            {"scenario": "1B", "r0": 4},
            {"scenario": "1D", "r0": 1},
            {"seed": -1},
            {"seed": 2**64},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            DgpConfig(10, 20, **kwargs)


class TestFactors:
    def test_iid_case_uncorrelated(self):
        f = gen_factors(DgpConfig(5, 10000, rho=0.0), stream(1, "factors"), n_factors=1)
        assert f.shape == (10000, 1)
        x = f[:, 0]
        ac = np.corrcoef(x[1:], x[:-1])[0, 1]
        assert abs(ac) < 0.05

    def test_stationary_variance(self):
        f = gen_factors(DgpConfig(5, 20000, rho=0.7), stream(2, "factors"))
        target = 1.0 / (1.0 - 0.49)
        assert target == pytest.approx(1.9608, abs=1e-4)
        for v in f.var(axis=0):
            assert abs(v - target) < 0.10 * target

    def test_recursion(self):
        cfg = DgpConfig(5, 50, rho=0.4)
        f = gen_factors(cfg, stream(3, "factors"))
        u = stream(3, "factors").standard_normal((50, 3))
        np.testing.assert_allclose(f[0], u[0] / np.sqrt(1 - 0.16))
        np.testing.assert_allclose(f[1:], 0.4 * f[:-1] + u[1:], atol=1e-12)

    def test_deterministic(self):
        cfg = DgpConfig(5, 100, rho=0.5)
        a = gen_factors(cfg, stream(9, "factors"))
        b = gen_factors(cfg, stream(9, "factors"))
        assert np.array_equal(a, b)


class TestErrors:
    def test_toeplitz(self):
        expected = np.array([[1, 0.3, 0.09], [0.3, 1, 0.3], [0.09, 0.3, 1]])
        np.testing.assert_array_equal(toeplitz_omega(3, 0.3), expected)

    def test_independent_case(self):
        e = gen_errors(DgpConfig(4, 20000), stream(4, "errors"))
        c = np.corrcoef(e.T)
        off = c[~np.eye(4, dtype=bool)]
        assert np.all(np.abs(off) < 0.05)

    def test_stationary_covariance(self):
        e = gen_errors(DgpConfig(5, 50000, alpha=0.3, beta=0.3), stream(0, "errors"))
        target = toeplitz_omega(5, 0.3) / (1 - 0.09)
        rel = np.abs(np.cov(e.T) - target) / target
        assert rel.max() < 0.10

    def test_first_row_scaling_and_recursion(self):
        cfg = DgpConfig(3, 30, alpha=0.6, beta=0.5)
        e = gen_errors(cfg, stream(5, "errors"))
        z = stream(5, "errors").standard_normal((30, 3))
        chol = np.linalg.cholesky(toeplitz_omega(3, 0.5))
        v = z @ chol.T
        np.testing.assert_allclose(e[0], v[0] / np.sqrt(1 - 0.36), atol=1e-12)
        np.testing.assert_allclose(e[1:], 0.6 * e[:-1] + v[1:], atol=1e-12)


class TestLoadings:
    def test_1a(self, rng):
        load = gen_loadings("1A", 3, 50, rng)
        assert np.linalg.matrix_rank(load.c) == 2
        assert np.all(load.lambda2[:, 2] == 0.0)
        assert (load.r, load.r1, load.r2) == (3, 3, 2)
        np.testing.assert_array_equal(load.lambda2, load.lambda1 @ np.diag([1.0, 1.0, 0.0]))

    def test_1a_loading_variance(self):
        load = gen_loadings("1A", 3, 20000, stream(0, "loadings"))
        np.testing.assert_allclose(load.lambda1.var(axis=0), 1 / 9, rtol=0.05)

    def test_1b(self, rng):
        load = gen_loadings("1B", 3, 50, rng)
        c = load.c
        np.testing.assert_array_equal(np.diag(c), [0.5, 1.5, 2.5])
        assert np.all(np.triu(c, 1) == 0.0)
        assert (load.r, load.r1, load.r2) == (3, 3, 3)

    @pytest.mark.parametrize("m, r2", [(1.0, 3), (0.1, 3), (0.0, 2)])
    def test_1c(self, rng, m, r2):
        load = gen_loadings("1C", 3, 50, rng, m=m)
        np.testing.assert_array_equal(load.c, [[1, 0, 0], [2, 1, 0], [3, 2, m]])
        assert load.r2 == r2
        if m == 0.0:
            assert np.linalg.det(load.c) == 0.0

    def test_1d_layout(self):
        load = gen_loadings("1D", 3, 200, stream(0, "loadings"))
        assert (load.r, load.r1, load.r2) == (5, 2, 3)
        assert np.all(load.lambda1[:, 2:] == 0.0)
        assert np.all(load.lambda2[:, :2] == 0.0)

    def test_1d_post_break_covariance(self):
        # The +-15% band is ~1.5 standard errors at N=200; N=2000 makes it ~5.
        load = gen_loadings("1D", 3, 2000, stream(0, "loadings"))
        lam2 = load.lambda2[:, 2:]
        cov = lam2.T @ lam2 / lam2.shape[0]
        assert np.abs(cov - np.eye(3) / 3).max() < 0.15 / 3
        lam1 = load.lambda1[:, :2]
        np.testing.assert_allclose(lam1.T @ lam1 / 2000, np.eye(2) / 2, atol=0.15 / 2)

    def test_1d_generalizes(self, rng):
        load = gen_loadings("1D", 4, 30, rng)
        assert (load.r, load.r1, load.r2) == (7, 3, 4)

    def test_unsupported(self, rng):
        with pytest.raises(ParameterError):
            gen_loadings("1A", 4, 10, rng)
        with pytest.raises(ParameterError):
            gen_loadings("1C", 3, 10, rng)


class TestPanel:
    def test_noiseless_assembly(self):
        cfg = DgpConfig(8, 12, scenario="1B", seed=3, zero_error=True)
        sim = gen_panel(cfg)
        x = sim.panel.values
        for t in range(12):
            lam = sim.lambda1 if t < sim.k0 else sim.lambda2
            np.testing.assert_allclose(x[t], lam @ sim.factors[t], atol=1e-14)
        assert np.array_equal(x, sim.common_component())

    @pytest.mark.parametrize("scenario, m", [("1A", None), ("1C", 0.5), ("1D", None)])
    def test_reconstruction(self, scenario, m):
        sim = gen_panel(DgpConfig(15, 30, scenario=scenario, m=m, rho=0.3, alpha=0.2, beta=0.4, seed=11))
        assert np.array_equal(sim.panel.values, sim.common_component() + sim.errors)
        assert sim.r_pseudo >= max(sim.r1, sim.r2)

    def test_1d_pseudo_factor_layout(self):
        sim = gen_panel(DgpConfig(10, 40, scenario="1D", seed=2))
        k0 = sim.k0
        np.testing.assert_array_equal(sim.pseudo_factors[:k0, :2], sim.factors[:k0, :2])
        np.testing.assert_array_equal(sim.pseudo_factors[k0:, 2:], sim.factors[k0:])

    def test_deterministic(self):
        cfg = DgpConfig(20, 30, scenario="1B", rho=0.5, alpha=0.3, beta=0.3, seed=99)
        a, b = gen_panel(cfg), gen_panel(cfg)
        assert np.array_equal(a.panel.values, b.panel.values)
        assert np.array_equal(a.c, b.c)

    def test_seed_streams_independent(self):
        cfg = DgpConfig(20, 30, seed=5)
        factors = gen_factors(cfg, stream(5, "factors"))
        sim = gen_panel(cfg)
        assert np.array_equal(sim.factors, factors)
        assert not np.array_equal(stream(5, "errors").standard_normal(5), stream(5, "factors").standard_normal(5))

    def test_break_singularity(self):
        for scenario, m in [("1A", None), ("1C", 0.0)]:
            sim = gen_panel(DgpConfig(10, 20, scenario=scenario, m=m))
            assert np.linalg.matrix_rank(sim.c) < 3
        sim = gen_panel(DgpConfig(10, 20, scenario="1D"))
        assert np.linalg.matrix_rank(sim.lambda1) == 2 and np.linalg.matrix_rank(sim.lambda2) == 3

    @staticmethod
    def _third_to_fourth_ratios():
        ratios = []
        for seed in range(20):
            w = panel_spectrum(gen_panel(DgpConfig(200, 200, seed=seed)).panel)
            ratios.append(w[2] / w[3])
        return np.array(ratios)

    def test_factor_separation(self):
        # Third pseudo-factor: loading variance 1/9 times its 1/2 pre-break share,
        # about 0.056, against a noise edge (sqrt(N)+sqrt(T))^2/(NT) = 0.02.
        assert np.median(self._third_to_fourth_ratios()) > 2.0

    @pytest.mark.xfail(strict=True, reason="10x separation needs unit-variance loadings; 1/9 gives ~3x")
    def test_factor_separation_tenfold(self):
        assert np.median(self._third_to_fourth_ratios()) > 10.0
