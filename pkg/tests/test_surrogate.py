"""Delta estimation, the network, and gradients through the equilibrium."""

import numpy as np
import pytest

from mechscm.voting import (
    CountryParams,
    Intervention,
    Population,
    generate_population,
    ne_from_params,
    vcg_country_params,
)
from mechscm.surrogate import (
    DegenerateDesign,
    DeltaEstimate,
    NonFinite,
    OmegaNetwork,
    TrainConfig,
    adam_step,
    dictator_baseline,
    estimate_delta,
    evaluate,
    forward,
    loss_and_gradient,
    make_dataset,
    ne_q_hat,
    omega_intervention_mapping,
    stochastic_floor,
    train,
)


def tiny_population(seed=0, sizes=(3, 4, 3)) -> Population:
    rng = np.random.default_rng(seed)
    total = sum(sizes)
    return Population(
        sizes=sizes,
        a=rng.uniform(0.35, 0.65, total),
        b=np.concatenate([rng.uniform(7, 13, s) / s for s in sizes]),
        d=rng.uniform(0.01, 0.03, total),
    )


# ---------------------------------------------------------------------------
# Delta estimation


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_vcg_delta_regression_exact(seed):
    # the equilibrium line is exactly linear for truthful aggregation, so the
    # regression recovers delta to numerical precision on any seed
    pop = generate_population(seed=seed, n_countries=4, total_citizens=120)
    est = estimate_delta("vcg", pop, seed=seed + 100)
    true = vcg_country_params(pop, Intervention.zero(pop)).delta
    assert est.method == "regression"
    assert np.max(np.abs(est.delta_hat - true)) <= 1e-9
    assert est.fit_points is not None and len(est.fit_points) == 4
    assert np.all(est.slope_se >= 0.0)


def test_single_country_design_degenerate():
    pop = generate_population(seed=5, n_countries=1, total_citizens=20)
    with pytest.raises(DegenerateDesign):
        estimate_delta("vcg", pop, seed=0)


def test_dictator_plug_in_mean():
    pop = Population(
        sizes=(2,),
        a=np.array([0.5, 0.5]),
        b=np.array([1.0, 1.0]),
        d=np.array([0.1, 0.3]),
    )
    est = estimate_delta("dictator", pop, seed=0)
    assert est.method == "plug_in"
    assert est.delta_hat[0] == pytest.approx(0.2, abs=1e-12)


# ---------------------------------------------------------------------------
# Network forward


def test_forward_zero_weights_gives_zero():
    net = OmegaNetwork.init(6, 2, hidden=(4,), seed=0)
    for w in net.weights:
        w[:] = 0.0
    out = forward(net, np.full(6, 0.05))
    assert np.allclose(out, 0.0)


def test_forward_linear_single_layer_hand_check():
    net = OmegaNetwork.init(3, 1, hidden=(), seed=0)
    net.weights[0][:, 0] = [1.0, 2.0, -1.0]
    net.biases[0][:] = 0.5
    lam = np.array([0.01, 0.02, 0.03])
    # input scaling x = 10 * lambda, single affine layer
    want = 0.1 * 1 + 0.2 * 2 + 0.3 * (-1) + 0.5
    assert forward(net, lam)[0] == pytest.approx(want, abs=1e-12)


def test_forward_shape_mismatch():
    net = OmegaNetwork.init(6, 2, hidden=(4,), seed=0)
    with pytest.raises(ValueError):
        forward(net, np.zeros(5))


def test_ne_q_hat_matches_closed_form():
    rng = np.random.default_rng(0)
    alpha = rng.uniform(0.5, 15.0, size=(4, 3))
    delta = rng.uniform(0.0, 1.0, size=3)
    got = ne_q_hat(alpha, delta)
    for j in range(4):
        want = ne_from_params(CountryParams(alpha=alpha[j], delta=delta))
        assert np.allclose(got[j], want.q, atol=1e-12)


# ---------------------------------------------------------------------------
# Loss and gradients


def test_perfect_predictions_zero_loss_and_gradient():
    net = OmegaNetwork.init(4, 2, hidden=(3,), seed=1)
    lam = np.zeros((3, 4))
    delta = np.array([0.2, 0.1])
    alpha = forward(net, lam)
    q = ne_q_hat(alpha, delta)
    loss, (gw, gb) = loss_and_gradient(net, lam, q, delta)
    assert loss == pytest.approx(0.0, abs=1e-20)
    assert all(np.allclose(g, 0.0) for g in gw + gb)


def _numeric_gradient(net, lam, q, delta, h=1e-5):
    grads = []
    for p in net.weights + net.biases:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up, _ = loss_and_gradient(net, lam, q, delta)
            p[idx] = orig - h
            dn, _ = loss_and_gradient(net, lam, q, delta)
            p[idx] = orig
            g[idx] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


def _random_small_config(seed):
    """A width-4 toy network and batch, re-sampled until every rectifier
    pre-activation sits safely away from its kink."""
    rng = np.random.default_rng(seed)
    while True:
        n_in = int(rng.integers(3, 7))
        n_out = int(rng.integers(2, 4))
        net = OmegaNetwork.init(n_in, n_out, hidden=(4,), seed=rng.integers(2**31))
        for w in net.weights:
            w += rng.normal(0, 0.3, size=w.shape)
        for b in net.biases:
            b += rng.normal(0, 0.3, size=b.shape)
        lam = rng.uniform(0, 0.1, size=(int(rng.integers(2, 5)), n_in))
        delta = rng.uniform(0.0, 1.0, size=n_out)
        q = rng.normal(0, 1.0, size=(lam.shape[0], n_out))
        _, pre, _ = net.forward_cached(lam)
        if all(np.min(np.abs(z)) > 1e-3 for z in pre[:-1]):
            return net, lam, q, delta


def test_gradient_matches_central_differences_50_configs():
    worst = 0.0
    for seed in range(50):
        net, lam, q, delta = _random_small_config(seed)
        _, (gw, gb) = loss_and_gradient(net, lam, q, delta)
        numeric = _numeric_gradient(net, lam, q, delta)
        analytic = gw + gb
        num_flat = np.concatenate([g.ravel() for g in numeric])
        ana_flat = np.concatenate([g.ravel() for g in analytic])
        rel = np.linalg.norm(ana_flat - num_flat) / max(np.linalg.norm(num_flat), 1e-10)
        worst = max(worst, rel)
    assert worst < 1e-4


def test_gradient_single_country_hand_derivation():
    # with one country and delta = 0, q_hat = alpha / 2, so
    # dL/dw = (alpha/2 - q) * dalpha/dw  (batch of one)
    net = OmegaNetwork.init(2, 1, hidden=(), seed=3)
    lam = np.array([[0.02, 0.05]])
    q = np.array([[1.2]])
    delta = np.zeros(1)
    alpha = forward(net, lam)
    loss, (gw, gb) = loss_and_gradient(net, lam, q, delta)
    resid = float(alpha[0, 0] / 2.0 - q[0, 0])
    assert loss == pytest.approx(resid**2, abs=1e-12)
    # dalpha/dw_i = 10 * lam_i, dalpha/db = 1
    want_w = resid * (10.0 * lam[0])
    assert np.allclose(gw[0].ravel(), want_w, atol=1e-12)
    assert gb[0][0] == pytest.approx(resid, abs=1e-12)


def test_non_finite_detected():
    net = OmegaNetwork.init(3, 2, hidden=(3,), seed=0)
    net.weights[0][0, 0] = np.inf
    with pytest.raises(NonFinite):
        loss_and_gradient(net, np.full((2, 3), 0.05), np.zeros((2, 2)), np.zeros(2))


# ---------------------------------------------------------------------------
# Training loop (small scale) and evaluation plumbing


def small_cfg(seed=0):
    return TrainConfig(n_train=48, n_test=16, epochs=8, batch_size=16, seed=seed)


def test_training_curve_finite_and_decreasing():
    pop = tiny_population()
    res = train(pop, "vcg", small_cfg())
    assert np.all(np.isfinite(res.curve))
    assert res.curve[-1] < res.curve[0]


def test_training_deterministic():
    pop = tiny_population()
    r1 = train(pop, "vcg", small_cfg(seed=7))
    r2 = train(pop, "vcg", small_cfg(seed=7))
    assert r1.delta.delta_hat.tobytes() == r2.delta.delta_hat.tobytes()
    assert abs(r1.curve[-1] - r2.curve[-1]) <= 1e-12
    assert all(
        np.array_equal(w1, w2) for w1, w2 in zip(r1.net.weights, r2.net.weights)
    )


def test_baseline_independent_of_network():
    pop = tiny_population()
    test_set = make_dataset("vcg", pop, 12, np.random.SeedSequence(5))
    res = train(pop, "vcg", small_cfg())
    other = OmegaNetwork.init(pop.total, pop.n_countries, seed=99)
    r1 = evaluate(res.net, res.delta, pop, "vcg", test_set)
    r2 = evaluate(other, res.delta, pop, "vcg", test_set)
    assert r1.baseline_mae == r2.baseline_mae
    assert np.array_equal(r1.per_country_baseline_mae, r2.per_country_baseline_mae)


def test_dictator_floor_exceeds_deterministic_reach():
    pop = tiny_population(sizes=(5, 5, 5))
    test_set = make_dataset("dictator", pop, 10, np.random.SeedSequence(6))
    floor = stochastic_floor(pop, test_set, n_interventions=5, n_redraws=40, seed=0)
    assert floor > 0.0
    res = train(pop, "dictator", small_cfg())
    rep = evaluate(res.net, res.delta, pop, "dictator", test_set, baseline_draws=500)
    assert rep.stochastic_floor is not None and rep.stochastic_floor > 0.0
    # a deterministic predictor cannot beat the draw dispersion
    assert rep.model_mae > 0.25 * rep.stochastic_floor


def test_dictator_baseline_deterministic():
    pop = tiny_population()
    b1 = dictator_baseline(pop, n_draws=100, seed=3)
    b2 = dictator_baseline(pop, n_draws=100, seed=3)
    assert np.array_equal(b1, b2)


def test_omega_intervention_mapping_roundtrip():
    from mechscm.abstraction import push_omega
    from mechscm.core import Setting, mech

    pop = tiny_population()
    res = train(pop, "vcg", small_cfg())
    mapping = omega_intervention_mapping(pop, res.net, res.delta)
    ov = mapping.per_var[mech("U*")]
    lam = np.linspace(0.0, 0.1, pop.total)
    low_iv = Setting(dict(zip(ov.low_vars, lam.tolist())))
    high = push_omega(None, mapping, low_iv)
    alpha_hat, delta_hat = high[mech("U*")]
    assert np.allclose(alpha_hat, forward(res.net, lam))
    assert np.allclose(delta_hat, res.delta.delta_hat)
