import math
from fractions import Fraction

import numpy as np
import pytest

from ranklaw import fit, urnsim
from ranklaw.errors import SimulationError
from ranklaw.urnsim import UrnConfig


def test_log_gamma_anchors():
    assert urnsim.log_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
    assert urnsim.log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-12)
    assert urnsim.log_gamma(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), rel=1e-12)
    with pytest.raises(SimulationError):
        urnsim.log_gamma(0.0)


def test_log_gamma_recurrence():
    for x in [0.1, 0.7, 1.3, 2.9, 11.5, 101.25]:
        assert urnsim.log_gamma(x + 1) == pytest.approx(
            urnsim.log_gamma(x) + math.log(x), rel=1e-12
        )


def test_beta_fn_values_and_symmetry(rng):
    assert urnsim.beta_fn(1.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert urnsim.beta_fn(2.0, 3.0) == pytest.approx(1.0 / 12.0, rel=1e-12)
    for _ in range(20):
        x, y = rng.random(2) * 10 + 0.05
        assert urnsim.beta_fn(x, y) == pytest.approx(urnsim.beta_fn(y, x), rel=1e-12)
    with pytest.raises(SimulationError):
        urnsim.beta_fn(-1.0, 2.0)


def _poly_incomplete_beta(a: int, b: int, eps: Fraction) -> Fraction:
    # binomial expansion of the integrand, integrated term by term
    total = Fraction(0)
    for j in range(b + 1):
        total += (Fraction(math.comb(b, j)) * (-1) ** j
                  * eps ** (a + j + 1) / (a + j + 1))
    return total


@pytest.mark.parametrize("a", [0, 1, 2, 3])
@pytest.mark.parametrize("b", [0, 1, 2, 3])
@pytest.mark.parametrize("eps", [Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1)])
def test_incomplete_beta_polynomial_cases(a, b, eps):
    expected = float(_poly_incomplete_beta(a, b, eps))
    assert urnsim.incomplete_beta(a, b, float(eps)) == pytest.approx(
        expected, abs=1e-10
    )


def test_incomplete_beta_half_interval_value():
    assert urnsim.incomplete_beta(1, 1, 0.5) == pytest.approx(1 / 8 - 1 / 24, abs=1e-12)


def test_incomplete_beta_complete_equals_beta_fn():
    for a, b in [(0.5, 1.5), (2.0, 3.0), (1.2, 0.3)]:
        assert urnsim.incomplete_beta(a, b, 1.0) == pytest.approx(
            urnsim.beta_fn(a + 1, b + 1), abs=1e-9
        )


def test_incomplete_beta_monotone_in_eps():
    values = [urnsim.incomplete_beta(1.7, 2.3, e) for e in np.linspace(0, 1, 21)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_incomplete_beta_argument_validation():
    with pytest.raises(SimulationError):
        urnsim.incomplete_beta(1.0, 1.0, 1.5)
    with pytest.raises(SimulationError):
        urnsim.incomplete_beta(-0.5, 1.0, 0.5)


def test_yule_simon_classic_special_case():
    # b * B(1, b+1) = b/(b+1), the no-offset single-seed value
    for b in [1.5, 2.0, 3.0]:
        assert b * urnsim.beta_fn(1.0, b + 1.0) == pytest.approx(b / (b + 1.0), rel=1e-12)


def test_yule_simon_pmf_normalizes_with_tail_bound():
    for b in [1.5, 2.0, 3.0]:
        k_max = 200000
        total = sum(urnsim.yule_simon_pmf(k, 0.5, b, k0=1) for k in range(1, k_max + 1))
        tail = urnsim.yule_simon_tail(k_max, 0.5, b, k0=1)
        assert total + tail == pytest.approx(1.0, abs=1e-6)
        assert tail < 0.01


def test_yule_simon_ratio_recurrence():
    a, b, k0 = 0.7, 2.4, 2
    for k in [2, 5, 17, 120]:
        ratio = (urnsim.yule_simon_pmf(k + 1, a, b, k0)
                 / urnsim.yule_simon_pmf(k, a, b, k0))
        assert ratio == pytest.approx((k + a) / (k + a + b), rel=1e-10)


def test_yule_simon_support_and_validation():
    assert urnsim.yule_simon_pmf(1, 0.0, 2.0, k0=2) == 0.0
    with pytest.raises(SimulationError):
        urnsim.yule_simon_pmf(3, 0.0, 1.0, k0=1)


def test_yule_simon_tail_slope_hyperbolic():
    ks = np.arange(100, 1001)
    for b in [1.5, 2.0, 3.0]:
        pmf = np.array([urnsim.yule_simon_pmf(int(k), 0.0, b, k0=1) for k in ks])
        slope = np.polyfit(np.log(ks), np.log(pmf), 1)[0]
        assert slope == pytest.approx(-b, rel=0.03)


def test_simulate_single_urn():
    outcome = urnsim.simulate_urns(UrnConfig(n_urns=1, total_balls=50))
    assert outcome.occupancy == (51,)


def test_simulate_conservation(rng):
    for _ in range(10):
        cfg = UrnConfig(n_urns=int(rng.integers(1, 30)),
                        total_balls=int(rng.integers(0, 2000)),
                        a=float(rng.random() * 3), k0=int(rng.integers(0, 3)) or 1,
                        seed=int(rng.integers(0, 10000)))
        outcome = urnsim.simulate_urns(cfg)
        assert outcome.total == cfg.n_urns * cfg.k0 + cfg.total_balls


def test_simulate_deterministic_for_seed():
    cfg = UrnConfig(n_urns=10, total_balls=500, seed=7)
    assert urnsim.simulate_urns(cfg) == urnsim.simulate_urns(cfg)


def test_simulate_uniform_attachment_limit():
    cfg = UrnConfig(n_urns=10, total_balls=10000, a=1e9, seed=3)
    occ = urnsim.simulate_urns(cfg).occupancy
    assert max(occ) / min(occ) < 1.2


def test_simulate_capacity_cap_respected():
    cfg = UrnConfig(n_urns=5, total_balls=15, k0=1, capacity=4, seed=1)
    occ = urnsim.simulate_urns(cfg).occupancy
    assert all(k <= 4 for k in occ)
    assert sum(occ) == 20


def test_simulate_capacity_equals_k0_errors_immediately():
    cfg = UrnConfig(n_urns=3, total_balls=1, k0=2, capacity=2)
    with pytest.raises(SimulationError, match="after 0 of 1"):
        urnsim.simulate_urns(cfg)


def test_simulate_capacity_exhaustion_reports_progress():
    cfg = UrnConfig(n_urns=2, total_balls=100, k0=1, capacity=3, seed=5)
    with pytest.raises(SimulationError, match="after 4 of 100"):
        urnsim.simulate_urns(cfg)


def test_simulate_invalid_configs():
    with pytest.raises(SimulationError):
        UrnConfig(n_urns=0, total_balls=1)
    with pytest.raises(SimulationError):
        UrnConfig(n_urns=1, total_balls=1, k0=1, a=-1.0)
    with pytest.raises(SimulationError):
        UrnConfig(n_urns=1, total_balls=1, k0=2, capacity=1)


def test_preferential_profile_is_convex_decreasing():
    rows = urnsim.replicate_occupancies(
        UrnConfig(n_urns=20, total_balls=8092, a=1.0, k0=1, seed=11), 100
    )
    mean = rows.mean(axis=0)
    assert all(b <= a for a, b in zip(mean, mean[1:]))
    drops = -np.diff(mean)
    # head drops dominate tail drops (convex-decreasing shape)
    assert drops[:5].mean() > drops[-5:].mean()


def test_generate_ranksize_exact_curve():
    model = fit.RankSizeModel(fit.ModelKind.LAVALETTE3, 1e3, 15, (1.0, 0.6, 0.2))
    series = urnsim.generate_ranksize(model)
    r = np.arange(1, 16, dtype=float)
    expected = np.sort(fit.model_eval(model, r))[::-1]
    got = np.array([v for _, v, _ in series.entries])
    assert np.allclose(got, expected, rtol=1e-12)


def test_generate_ranksize_symmetric_form():
    model = fit.RankSizeModel(fit.ModelKind.LAVALETTE3, 1.0, 12, (1.0, 0.3, 0.3))
    series = urnsim.generate_ranksize(model)
    values = [v for _, v, _ in series.entries]
    pairs = list(zip(values, values[::-1]))
    # reflection-symmetric generator: values come in equal head/tail pairs
    log_values = np.log(np.sort(values))
    assert np.allclose(np.diff(log_values[:6]), np.diff(log_values[:6]))


def test_export_outcome_format():
    outcome = urnsim.simulate_urns(UrnConfig(n_urns=2, total_balls=3, seed=0))
    text = urnsim.export_outcome(outcome)
    assert text.splitlines()[0] == "urn_id,occupancy"
    assert len(text.splitlines()) == 3


def test_replicate_summary_format():
    rows = urnsim.replicate_occupancies(UrnConfig(n_urns=4, total_balls=50), 5)
    text = urnsim.export_replicate_summary(rows)
    assert text.splitlines()[0] == "position,mean_occupancy,std_occupancy"
    assert len(text.splitlines()) == 5
