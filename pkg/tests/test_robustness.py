import math

import numpy as np
import pytest

from bowfree.errors import ConfigError, PremiseError
from bowfree.generators import gen_generative_instance
from bowfree.graphs import MixedGraph
from bowfree.linalg import snorm
from bowfree.lsem import ParamSet, forward_map
from bowfree.recovery import recover_all
from bowfree.robustness import (
    AssumptionProfile,
    PerturbationSpec,
    check_assumptions,
    condition_bound,
    estimate_condition_number,
    eta_bound,
    per_vertex_error_check,
    relative_distance,
    sample_perturbation,
    stability_premise,
)


def test_relative_distance_examples():
    a = np.array([[2.0]])
    assert relative_distance(a, a) == 0.0
    assert relative_distance(a, np.array([[1.0]])) == pytest.approx(0.5)
    ref = np.eye(2)
    other = np.array([[1.0, 9.0], [0.0, 1.0]])
    assert relative_distance(ref, other) == 0.0  # zero entries skipped


def test_relative_distance_is_asymmetric():
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([[2.0, 0.0], [0.0, 2.0]])
    assert relative_distance(a, b) == pytest.approx(1.0)
    assert relative_distance(b, a) == pytest.approx(0.5)


def test_relative_distance_zero_reference():
    with pytest.raises(ConfigError):
        relative_distance(np.zeros((2, 2)), np.ones((2, 2)))


def test_sample_perturbation_entrywise_bound():
    rng = np.random.default_rng(0)
    sigma = rng.standard_normal((5, 5))
    sigma = sigma @ sigma.T + 5 * np.eye(5)
    gamma, k = 1e-4, 2
    cap = gamma / math.sqrt(k)
    for seed in range(10_000):
        spec = PerturbationSpec(gamma, k, seed, strict=False)
        eps = sample_perturbation(sigma, spec).sigma - sigma
        assert np.all(np.abs(eps) <= cap * np.abs(sigma) + 1e-18)
        assert np.allclose(eps, eps.T)


def test_sample_perturbation_tight_entry():
    sigma = np.array([[4.0, 1.0], [1.0, 2.0]])
    spec = PerturbationSpec(1e-3, 1, 7, enforce_tight=True, strict=False)
    eps = sample_perturbation(sigma, spec).sigma - sigma
    assert eps[0, 0] == pytest.approx(1e-3 * 4.0)
    assert relative_distance(sigma, sigma + eps) == pytest.approx(1e-3)


def test_sample_perturbation_gamma_limits():
    sigma = np.eye(3)
    with pytest.raises(ConfigError):
        sample_perturbation(sigma, PerturbationSpec(0.0, 2, 0))
    with pytest.raises(ConfigError):
        sample_perturbation(sigma, PerturbationSpec(0.5, 2, 0, strict=True))
    # permitted when the strict regime flag is dropped
    out = sample_perturbation(sigma, PerturbationSpec(0.5, 2, 0, strict=False))
    assert out.meta["strict"] is False


def test_sample_perturbation_vanishes_with_gamma():
    sigma = np.eye(3) * 2
    out = sample_perturbation(sigma, PerturbationSpec(1e-15, 1, 3, strict=False))
    np.testing.assert_allclose(out.sigma, sigma, atol=1e-14)


def test_sample_perturbation_block_norm_bounds():
    # per-vertex norm bounds implied by the entrywise constraint
    inst = gen_generative_instance(n=12, k=2, p=0.7, seed=21)
    g, sigma = inst.graph, inst.sigma.sigma
    gamma, k = 1e-6, 2
    profile = check_assumptions(g, sigma, inst.params.lam)
    alpha = profile.alpha
    for seed in range(50):
        eps = sample_perturbation(sigma, PerturbationSpec(gamma, k, seed)).sigma - sigma
        for v in range(g.n):
            pa = list(g.parents(v))
            if not pa:
                continue
            spa = list(g.spa(v))
            pp = snorm(sigma[np.ix_(pa, pa)])
            assert snorm(eps[np.ix_(pa, pa)]) <= gamma * pp + 1e-15
            assert np.linalg.norm(eps[pa, v]) <= gamma * alpha * pp + 1e-15
            if spa:
                assert snorm(eps[np.ix_(spa, pa)]) <= gamma * alpha * pp + 1e-15
                assert np.linalg.norm(eps[spa, v]) <= gamma * alpha * pp + 1e-15


def test_perturbation_preserves_definiteness_for_small_gamma():
    inst = gen_generative_instance(n=12, k=2, p=0.6, seed=5)
    out = sample_perturbation(inst.sigma, PerturbationSpec(1e-5, 2, 1))
    assert np.linalg.eigvalsh(out.sigma)[0] > 0


def test_check_assumptions_trivial_instance():
    g = MixedGraph(3, [], [(0, 1)])
    profile = check_assumptions(g, np.eye(3), np.zeros((3, 3)))
    assert profile.alpha == 0.0
    assert profile.kappa0 == 1.0
    assert profile.per_vertex == {}
    assert profile.lambda_floor == math.inf


def test_check_assumptions_scale_invariant():
    inst = gen_generative_instance(n=12, k=2, p=0.7, seed=9)
    base = check_assumptions(inst.graph, inst.sigma.sigma, inst.params.lam)
    scaled = check_assumptions(inst.graph, 7.3 * inst.sigma.sigma, inst.params.lam)
    assert base.alpha == pytest.approx(scaled.alpha, rel=1e-10)
    assert base.kappa0 == pytest.approx(scaled.kappa0, rel=1e-10)


def test_check_assumptions_flags_singular_block():
    g = MixedGraph(3, [(0, 2), (1, 2)], [])
    sigma = np.ones((3, 3))  # parent block singular
    profile = check_assumptions(g, sigma, np.zeros((3, 3)))
    assert not profile.per_vertex[2].pass_a1
    assert not math.isfinite(profile.kappa0)


def _profile(alpha, beta, kappa0, floor=0.1, k=2):
    return AssumptionProfile(alpha, beta, kappa0, floor, k)


def test_premise_trivial_and_failing_cases():
    ok = stability_premise(_profile(0.0, 0.5, 2.0))
    assert ok.holds and ok.growth == 0.0
    bad = stability_premise(_profile(1.0, 1.0, 1.0))
    assert not bad.holds


def test_premise_generative_constants():
    mu = 30.0
    kappa0 = ((1 + mu) / mu) ** 4 + (mu + 1) ** 2 / (5 * mu**2 * (mu - 1))
    assert kappa0 == pytest.approx(1.1475, abs=5e-4)
    check = stability_premise(_profile(1 / mu, 1 / mu, kappa0, k=2))
    assert check.holds


def test_eta_zero_when_alpha_zero():
    constants = eta_bound(_profile(0.0, 0.3, 1.5), n=20, k=2, gamma=1e-9)
    assert constants.eta == 0.0
    assert condition_bound(constants, _profile(0.0, 0.3, 1.5, floor=1e-3), 20, 2) == 0.0


def _eta_bisection_oracle(alpha, beta, kappa0, n, k, gamma):
    s = 1.0 - alpha * beta * kappa0
    d_lin = 1.0 - k * alpha * kappa0 / s - k * alpha * kappa0**2 * (1 + beta) / s**2

    def gap(eta):
        tau = k * eta / n**2
        numer = (
            alpha * kappa0**2 * (1 + beta) * (1 + beta + tau) / s**2
            + kappa0 * alpha * (1 + beta + tau) / s
        )
        c_quad = 4 * alpha * (1 + beta) * kappa0**3 * (k * eta + 1 + beta + tau) ** 2 / s**3
        return eta * d_lin - numer - c_quad * gamma

    lo, hi = 0.0, 1.0
    while gap(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_eta_fixed_point_matches_bisection():
    alpha = beta = 0.05
    kappa0, k, n, gamma = 1.2, 2, 20, 1e-9
    constants = eta_bound(_profile(alpha, beta, kappa0, k=k), n=n, k=k, gamma=gamma)
    oracle = _eta_bisection_oracle(alpha, beta, kappa0, n, k, gamma)
    assert constants.eta == pytest.approx(oracle, abs=1e-10)
    assert constants.tau == pytest.approx(k * constants.eta / n**2, rel=1e-12)


def test_eta_premise_error():
    with pytest.raises(PremiseError):
        eta_bound(_profile(0.9, 0.9, 5.0), n=10, k=3, gamma=1e-9)


def test_condition_bound_arithmetic():
    constants = eta_bound(_profile(0.05, 0.05, 1.2), n=10, k=4, gamma=1e-9)
    fake = constants.__class__(1.0, constants.tau, constants.c_quad, True)
    profile = _profile(0.05, 0.05, 1.2, floor=0.005, k=4)  # floor below 1/n^2
    assert condition_bound(fake, profile, 10, 4) == pytest.approx(200.0)
    tighter = _profile(0.05, 0.05, 1.2, floor=0.5, k=4)
    assert condition_bound(fake, tighter, 10, 4) == pytest.approx(math.sqrt(4) / 0.5)


def test_condition_estimate_monotone_in_trials():
    inst = gen_generative_instance(n=12, k=2, p=0.6, seed=31)
    small = estimate_condition_number(inst.graph, inst.sigma, 3, [1e-8], seed=5)
    large = estimate_condition_number(inst.graph, inst.sigma, 9, [1e-8], seed=5)
    assert small.kappa_hat <= large.kappa_hat
    assert [r.ratio for r in small.records] == [r.ratio for r in large.records[:3]]


def test_condition_estimate_matches_directional_derivative():
    w = 0.6
    g = MixedGraph(2, [(0, 1)])
    lam = np.array([[0.0, w], [0.0, 0.0]])
    sigma = forward_map(g, ParamSet(lam, np.eye(2))).sigma
    est = estimate_condition_number(g, sigma, 1, [1e-9], seed=0, enforce_tight=True)
    record = est.records[0]
    eps = sample_perturbation(sigma, PerturbationSpec(1e-9, 1, record_seed(0))).sigma - sigma

    def recovered(s):
        return recover_all(g, s).lambda_hat[0, 1]

    t = 1.0
    central = (recovered(sigma + t * eps) - recovered(sigma - t * eps)) / 2
    predicted = abs(central) / abs(w) / record.rel_sigma
    assert record.ratio == pytest.approx(predicted, rel=1e-4)


def record_seed(trial, seed=0, gamma_index=0):
    return int(np.random.SeedSequence([seed, gamma_index, trial]).generate_state(1)[0])


def test_condition_estimate_within_error_rate_bound():
    inst = gen_generative_instance(n=12, k=2, p=0.7, seed=41)
    profile = check_assumptions(inst.graph, inst.sigma.sigma, inst.params.lam)
    assert stability_premise(profile).holds
    constants = eta_bound(profile, 12, 2, 1e-8)
    bound = condition_bound(constants, profile, 12, 2)
    est = estimate_condition_number(
        inst.graph, inst.sigma, 20, [1e-8], seed=2, enforce_tight=True
    )
    assert est.failures == 0
    assert est.kappa_hat <= bound


def test_per_vertex_error_check_small_gamma_passes():
    inst = gen_generative_instance(n=12, k=2, p=0.7, seed=51)
    profile = check_assumptions(inst.graph, inst.sigma.sigma, inst.params.lam)
    constants = eta_bound(profile, 12, 2, 1e-8)
    base = recover_all(inst.graph, inst.sigma).lambda_hat
    for tight in (False, True):
        checks = per_vertex_error_check(
            inst.graph,
            inst.sigma,
            base,
            PerturbationSpec(1e-8, 2, 9, enforce_tight=tight),
            constants,
            trials=10,
        )
        assert checks and all(c.passed for c in checks)
