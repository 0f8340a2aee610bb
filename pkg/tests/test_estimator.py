import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from blindfdi.dcmodel import evaluate
from blindfdi.errors import ContractError
from blindfdi.estimator import (
    BAD_DATA, CLEAN, NoiseModel, chi_square_threshold, detect, residual, scrub, snr_sigma,
    wls_estimate, wsse,
)


@pytest.fixture
def snapshot(ieee14, rng):
    _, jac, x0 = ieee14
    sigma = rng.uniform(0.005, 0.02, jac.m)
    z = evaluate(jac, x0) + sigma * rng.standard_normal(jac.m)
    return jac, x0, z, NoiseModel(sigma)


def test_threshold_values():
    assert chi_square_threshold(41, 0.95) == pytest.approx(56.94, abs=0.01)
    assert chi_square_threshold(1, 0.95) == pytest.approx(3.841, abs=1e-3)
    values = [chi_square_threshold(41, c) for c in (0.5, 0.9, 0.99, 0.999999)]
    assert all(b > a for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("conf", [0.0, 1.0, -0.1, 1.5])
def test_threshold_rejects_confidence(conf):
    with pytest.raises(ContractError):
        chi_square_threshold(41, conf)


def test_wls_matches_normal_equations(snapshot):
    jac, _, z, noise = snapshot
    W = np.diag(1 / noise.sigma**2)
    G = jac.H.T @ W @ jac.H
    expected = np.linalg.solve(G, jac.H.T @ W @ z)
    np.testing.assert_allclose(wls_estimate(jac, z, noise), expected, rtol=1e-9)
    r = residual(jac, z, expected)
    assert wsse(jac, z, noise) == pytest.approx(float(np.sum((r / noise.sigma) ** 2)), rel=1e-10)


def test_rows_of_measurements(snapshot, rng):
    jac, _, z, noise = snapshot
    Z = z + 0.01 * rng.standard_normal((4, jac.m))
    batch = wls_estimate(jac, Z, noise)
    for k in range(4):
        np.testing.assert_allclose(batch[k], wls_estimate(jac, Z[k], noise), rtol=1e-12)
    np.testing.assert_allclose(wsse(jac, Z, noise), [wsse(jac, row, noise) for row in Z])


def test_noise_model():
    sig = np.array([0.1, 0.2])
    np.testing.assert_allclose(NoiseModel(sig).R, np.diag(sig**2))
    with pytest.raises(ContractError):
        NoiseModel(np.array([0.1, 0.0]))
    truth = np.array([[3.0, 4.0], [-3.0, 4.0]])
    np.testing.assert_allclose(snr_sigma(truth, 20.0), [0.3, 0.4])
    np.testing.assert_allclose(NoiseModel.from_snr(truth, [20.0, 40.0]).sigma, [0.3, 0.04])


def test_contract_errors(snapshot):
    jac, _, z, noise = snapshot
    with pytest.raises(ContractError):
        detect(jac, z[:-1], noise)
    with pytest.raises(ContractError):
        detect(jac, z, NoiseModel(noise.sigma[:-1]))
    with pytest.raises(ContractError):
        residual(jac, z, np.zeros(jac.n + 2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
def test_stealth_identity(systems, seed, scale):
    """WSSE(z + Hc) == WSSE(z) and the estimate moves by exactly c."""
    g = np.random.default_rng(seed)
    for _, jac, x0 in systems.values():
        sigma = g.uniform(0.005, 0.02, jac.m)
        noise = NoiseModel(sigma)
        z = evaluate(jac, x0) + sigma * g.standard_normal(jac.m)
        c = scale * g.standard_normal(jac.n)
        base, hit = detect(jac, z, noise), detect(jac, z + jac.H @ c, noise)
        assert hit.wsse == pytest.approx(base.wsse, rel=1e-8)
        np.testing.assert_allclose(hit.estimate - base.estimate, c, rtol=1e-8, atol=1e-8 * np.abs(c).max())


def test_false_alarm_rate(ieee14):
    _, jac, x0 = ieee14
    g = np.random.default_rng(99)
    sigma = g.uniform(0.005, 0.02, jac.m)
    Z = evaluate(jac, x0) + sigma * g.standard_normal((4000, jac.m))
    w = wsse(jac, Z, NoiseModel(sigma))
    rate = np.mean(w >= chi_square_threshold(jac.psi, 0.95))
    assert 0.025 <= rate <= 0.1
    # the statistic is chi-square with psi degrees of freedom
    assert stats.kstest(w, "chi2", args=(jac.psi,)).pvalue > 1e-3


def test_detect_verdicts(snapshot, rng):
    jac, _, z, noise = snapshot
    out = detect(jac, z, noise)
    assert out.psi == 41 and out.tau == pytest.approx(56.9424, abs=1e-4)
    np.testing.assert_allclose(out.normalized_residuals, np.abs(out.residual) / noise.sigma)
    a = rng.standard_normal(jac.m)
    a *= np.linalg.norm(jac.H @ np.full(jac.n, 0.05)) / np.linalg.norm(a)
    assert detect(jac, z + a, noise).verdict == BAD_DATA


def test_scrub_removes_single_gross_error(snapshot):
    jac, _, z, noise = snapshot
    hits = 0
    for sensor in range(0, jac.m, 3):
        bad = z.copy()
        bad[sensor] += 10 * noise.sigma[sensor] * 3
        res = scrub(jac, bad, noise)
        if res.removed == (sensor,) and res.outcome.verdict == CLEAN:
            hits += 1
        assert res.stop_reason in ("clean", "observability", "max_rounds")
    # critical measurements cannot be identified; every redundant one must be
    assert hits >= 0.9 * len(range(0, jac.m, 3))


def test_scrub_clean_and_stealthy(snapshot, rng):
    jac, _, z, noise = snapshot
    assert scrub(jac, z, noise).removed == ()
    c = 0.1 * rng.standard_normal(jac.n)
    res = scrub(jac, z + jac.H @ c, noise)
    assert res.removed == ()
    np.testing.assert_allclose(res.outcome.estimate - detect(jac, z, noise).estimate, c, atol=1e-9)
    z_clean, removed, outcome = res
    assert outcome is res.outcome


def test_scrub_reports_observability_stop():
    from blindfdi.casefile import parse_case
    from blindfdi.dcmodel import build_jacobian

    from conftest import TWO_BUS

    jac = build_jacobian(parse_case(TWO_BUS))
    noise = NoiseModel(np.full(4, 0.01))
    z = np.array([-1.0, 3.0, -6.0, 10.0])  # four mutually inconsistent readings of one angle
    res = scrub(jac, z, noise, max_rounds=10)
    assert res.stop_reason == "observability"
    assert len(res.removed) == 2 and res.kept.sum() == 2
    assert res.outcome.verdict == BAD_DATA
    assert np.isnan(res.z_clean[~res.kept]).all()


def test_scrub_max_rounds(snapshot, rng):
    jac, _, z, noise = snapshot
    bad = z + rng.choice([-1, 1], jac.m) * 50 * noise.sigma
    res = scrub(jac, bad, noise, max_rounds=2)
    assert len(res.removed) == 2 and res.stop_reason == "max_rounds"
