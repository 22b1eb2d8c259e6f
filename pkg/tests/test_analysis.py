import math
import warnings

import numpy as np
import pytest

from overlap_lab.analysis import (
    BoundInputs,
    RateFit,
    avg_grad_norm,
    bound_rhs,
    bound_step_size,
    bound_terms,
    deviation_coefficient,
    grad_norm_series,
    min_iterations,
    rate_slope,
    run_bound_check,
)
from overlap_lab.core import RngStream
from overlap_lab.objectives import LogisticEnsemble, make_quadratic


def test_bound_step_size_hand_values():
    assert bound_step_size(2.0, 4, 16) == 0.25
    assert bound_step_size(1.0, 1, 4) == 0.5
    for bad in [(0.0, 2, 4), (-1.0, 2, 4)]:
        with pytest.raises(ValueError):
            bound_step_size(*bad)
    with pytest.raises(ValueError):
        bound_step_size(1.0, 0, 4)
    with pytest.raises(ValueError):
        bound_step_size(1.0, 2, 0)


def test_min_iterations_hand_values():
    # 60 m tau^2 / alpha^2, rounded up
    assert min_iterations(16, 2, 0.6) == 10667
    assert min_iterations(1, 1, 1.0) == 60
    assert min_iterations(4, 2, 0.5) == 3840
    with pytest.raises(ValueError):
        min_iterations(4, 2, 0.0)
    with pytest.raises(ValueError):
        min_iterations(4, 2, 1.5)
    with pytest.raises(ValueError):
        min_iterations(0, 2, 0.5)


def test_bound_terms_exact_oracle():
    # All inputs chosen so every term has a closed form:
    # t1 = 1/(4 sqrt(15)), t2 = 1/(32 sqrt(15)), t3 = 13/1440, t4 = 1/30.
    b = BoundInputs(smoothness=1.0, gap=1.0, sigma_sq=1.0, kappa_sq=1.0,
                    m=4, tau=2, alpha=0.5, K=3840)
    t1, t2, t3, t4 = bound_terms(b)
    s15 = math.sqrt(15.0)
    assert t1 == pytest.approx(1.0 / (4.0 * s15), rel=1e-12)
    assert t2 == pytest.approx(1.0 / (32.0 * s15), rel=1e-12)
    assert t3 == pytest.approx(13.0 / 1440.0, rel=1e-12)
    assert t4 == pytest.approx(1.0 / 30.0, rel=1e-12)
    # K equals the minimum budget here, so no validity warning
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rhs = bound_rhs(b)
    assert rhs == pytest.approx(t1 + t2 + t3 + t4, rel=1e-15)
    assert rhs == pytest.approx(0.11497954885250017, rel=1e-12)


def test_bound_rhs_warns_below_budget():
    b = BoundInputs(smoothness=1.0, gap=1.0, sigma_sq=1.0, kappa_sq=1.0,
                    m=4, tau=2, alpha=0.5, K=100)
    with pytest.warns(UserWarning, match="below the analysis threshold"):
        bound_rhs(b)


def test_bound_collapses_without_noise_or_heterogeneity():
    b = BoundInputs(smoothness=2.0, gap=3.0, sigma_sq=0.0, kappa_sq=0.0,
                    m=4, tau=2, alpha=0.5, K=3840)
    t1, t2, t3, t4 = bound_terms(b)
    assert t2 == t3 == t4 == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert bound_rhs(b) == t1


def test_bound_inputs_validation():
    ok = dict(smoothness=1.0, gap=1.0, sigma_sq=1.0, kappa_sq=1.0,
              m=2, tau=1, alpha=0.5, K=10)
    BoundInputs(**ok)
    for key, val in [("alpha", 0.0), ("alpha", 1.0), ("smoothness", 0.0),
                     ("gap", -1.0), ("sigma_sq", -0.1), ("kappa_sq", -0.1),
                     ("m", 0), ("tau", 0), ("K", 0)]:
        with pytest.raises(ValueError):
            BoundInputs(**{**ok, key: val})


def test_deviation_coefficient_quarter_at_budget():
    # At K = 60 m tau^2 / alpha^2 with the prescribed step size the worker
    # spread coefficient lands exactly on the 1/4 ceiling.
    for m, tau, alpha, L in [(4, 2, 0.5, 1.0), (16, 2, 0.6, 3.0), (1, 1, 1.0, 2.0)]:
        K = 60.0 * m * tau * tau / (alpha * alpha)
        eta = math.sqrt(m / K) / L
        assert deviation_coefficient(eta, L, tau, alpha) == pytest.approx(
            0.25, abs=1e-12)
    with pytest.raises(ValueError):
        deviation_coefficient(0.1, 1.0, 2, 0.0)


def test_grad_norm_series_matches_hand_values():
    ens = make_quadratic(2, 3, 1.0, 4.0, 0.5, RngStream(seed=5))
    ys = np.array([[0.0, 0.0, 0.0], [1.0, -1.0, 2.0]])
    series = grad_norm_series(ys, ens)
    for row, y in zip(series, ys):
        g = ens.global_grad(y)
        assert row == g @ g
    assert avg_grad_norm(ys, ens) == pytest.approx(series.mean(), rel=1e-15)
    with pytest.raises(ValueError):
        grad_norm_series(np.zeros(3), ens)


def test_rate_slope_recovers_planted_exponent():
    mk = np.array([1e3, 1e4, 1e5, 1e6])
    vals = 3.0 * mk ** -0.5
    fit = rate_slope(mk, vals)
    assert isinstance(fit, RateFit)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit.residual_rms == pytest.approx(0.0, abs=1e-12)


def test_rate_slope_validation():
    with pytest.raises(ValueError):
        rate_slope([10.0], [1.0])
    with pytest.raises(ValueError):
        rate_slope([10.0, 20.0], [1.0])
    with pytest.raises(ValueError):
        rate_slope([10.0, -20.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        rate_slope([10.0, 20.0], [1.0, 0.0])


def _bound_ensemble():
    return make_quadratic(2, 2, 1.0, 1.0, 1.0, RngStream(seed=0))


def test_run_bound_check_report():
    ens = _bound_ensemble()
    K = min_iterations(2, 1, 0.6)
    assert K == 334
    report = run_bound_check(ens, tau=1, alpha=0.6, K=K, seeds=range(4),
                             init=np.full(2, 3.0))
    assert report["verdict"] == "pass"
    assert report["min_iterations"] == K
    assert report["inputs"]["eta"] == bound_step_size(
        ens.constants().smoothness, 2, K)
    assert [p["seed"] for p in report["per_seed"]] == [0, 1, 2, 3]
    assert all(p["status"] == "completed" for p in report["per_seed"])
    assert report["mean_lhs"] == pytest.approx(
        np.mean([p["lhs"] for p in report["per_seed"]]), rel=1e-15)
    assert report["mean_lhs"] <= report["rhs"]
    terms = report["terms"]
    assert set(terms) == {"gap", "noise", "local_noise", "diversity"}
    assert report["rhs"] == pytest.approx(sum(terms.values()), rel=1e-12)
    assert 0.0 < report["deviation_coefficient"] <= 0.25 + 1e-12


def test_run_bound_check_short_budget_paths():
    ens = _bound_ensemble()
    with pytest.raises(ValueError, match="below the minimum budget"):
        run_bound_check(ens, tau=1, alpha=0.6, K=50, seeds=[0],
                        init=np.full(2, 3.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        report = run_bound_check(ens, tau=1, alpha=0.6, K=50, seeds=[0],
                                 init=np.full(2, 3.0), allow_short=True)
    assert report["inputs"]["K"] == 50


def test_run_bound_check_input_guards():
    ens = _bound_ensemble()
    with pytest.raises(ValueError, match="alpha"):
        run_bound_check(ens, tau=1, alpha=1.0, K=400, seeds=[0],
                        init=np.zeros(2))
    with pytest.raises(ValueError, match="seed"):
        run_bound_check(ens, tau=1, alpha=0.6, K=400, seeds=[],
                        init=np.zeros(2))
    gen = np.random.default_rng(0)
    feats = [gen.standard_normal((20, 2)) for _ in range(2)]
    labs = [np.where(gen.random(20) < 0.5, -1.0, 1.0) for _ in range(2)]
    logi = LogisticEnsemble.from_worker_data(feats, labs, l2=0.01, batch_size=5)
    with pytest.raises(ValueError, match="exact"):
        run_bound_check(logi, tau=1, alpha=0.6, K=400, seeds=[0],
                        init=np.zeros(3))
