"""Euler-Maruyama batch simulation: stepping, seeding, explosions, bias."""

import numpy as np
import pytest

from nonrev import (
    ExplosionError,
    IntegratorConfig,
    Potential,
    SkewMatrix,
    chain_rng,
    drift_skew_grad,
    drift_zero,
    em_step,
    potential_gaussian,
    potential_torus,
    simulate_chains,
)

J2 = SkewMatrix(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def anticonfining() -> Potential:
    # U = -x^4/4 pushes mass outward; chains must trip the explosion guard
    def energy(x):
        return -0.25 * np.asarray(x, dtype=float)[..., 0] ** 4

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.stack([-x[..., 0] ** 3], axis=-1)

    return Potential(dim=1, energy=energy, grad=grad, label="anticonfining")


def test_config_validation():
    ok = dict(step=0.1, n_steps=10, snapshot_times=(1.0,), n_chains=4,
              master_seed=0)
    IntegratorConfig(**ok, x0=(0.0,))
    with pytest.raises(ValueError, match="step"):
        IntegratorConfig(**{**ok, "step": 0.0}, x0=(0.0,))
    with pytest.raises(ValueError, match="snapshot"):
        IntegratorConfig(**{**ok, "snapshot_times": (2.0,)}, x0=(0.0,))
    with pytest.raises(ValueError, match="non-decreasing"):
        IntegratorConfig(**{**ok, "snapshot_times": (0.9, 0.5)}, x0=(0.0,))
    with pytest.raises(ValueError, match="exactly one"):
        IntegratorConfig(**ok)
    with pytest.raises(ValueError, match="exactly one"):
        IntegratorConfig(**ok, x0=(0.0,), spread=1.0)
    with pytest.raises(ValueError, match="spread"):
        IntegratorConfig(**ok, spread=-1.0)


def test_em_step_values():
    flat = Potential(
        dim=2,
        energy=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        grad=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        label="flat",
    )
    out = em_step(np.array([0.0, 0.0]), flat, drift_zero(2), 0.5,
                  np.array([1.0, 0.0]))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-15)

    p = potential_gaussian(-np.eye(2))
    out = em_step(np.array([1.0, 0.0]), p, drift_zero(2), 0.1, np.zeros(2))
    np.testing.assert_allclose(out, [0.9, 0.0], atol=1e-15)

    c = drift_skew_grad(J2, p)
    out = em_step(np.array([1.0, 0.0]), p, c, 0.1, np.zeros(2))
    np.testing.assert_allclose(out, [0.9, -0.1], atol=1e-15)


def test_em_step_wraps_torus():
    p = potential_torus([])
    out = em_step(np.array([6.2, 0.1]), p, drift_zero(2), 0.5,
                  np.array([0.5, -0.5]))
    assert np.all(out >= 0) and np.all(out < 2 * np.pi)


def test_zero_steps_returns_initial_state():
    p = potential_gaussian(-np.eye(2))
    cfg = IntegratorConfig(step=0.1, n_steps=0, snapshot_times=(0.0, 0.0),
                           n_chains=3, master_seed=1, x0=(2.0, -1.0))
    batch = simulate_chains(p, drift_zero(2), cfg)
    assert batch.states.shape == (2, 3, 2)
    np.testing.assert_array_equal(batch.states,
                                  np.broadcast_to([2.0, -1.0], (2, 3, 2)))


def test_chain_rng_contract():
    # the substream derivation is part of the public reproducibility contract
    g = chain_rng(123, 7)
    ref = np.random.default_rng(np.random.SeedSequence(123, spawn_key=(7,)))
    np.testing.assert_array_equal(g.standard_normal(5), ref.standard_normal(5))


def test_snapshot_rounding_to_prior_step():
    p = potential_gaussian(-np.eye(1))
    base = dict(step=0.1, n_steps=10, n_chains=2, master_seed=4, x0=(1.0,))
    a = simulate_chains(p, drift_zero(1),
                        IntegratorConfig(snapshot_times=(0.25,), **base))
    b = simulate_chains(p, drift_zero(1),
                        IntegratorConfig(snapshot_times=(0.2,), **base))
    np.testing.assert_array_equal(a.states, b.states)


def test_equilibrium_moments():
    p = potential_gaussian(-np.eye(2))
    cfg = IntegratorConfig(step=1e-3, n_steps=10000, snapshot_times=(10.0,),
                           n_chains=2000, master_seed=5, x0=(3.0, 3.0))
    batch = simulate_chains(p, drift_zero(2), cfg)
    x = batch.states[-1]
    assert batch.exploded == 0
    assert np.all(np.abs(x.mean(axis=0)) < 3.0 / np.sqrt(2000))
    cov = np.cov(x.T)
    assert np.all(np.abs(np.diag(cov) - 1.0) < 3.0 * np.sqrt(2.0 / 2000))
    assert abs(cov[0, 1]) < 3.0 / np.sqrt(2000)


def test_explosion_guard_counts_and_freezes():
    p = anticonfining()
    cfg = IntegratorConfig(step=1e-2, n_steps=50, snapshot_times=(0.5,),
                           n_chains=64, master_seed=11, x0=(1.0,))
    batch = simulate_chains(p, drift_zero(1), cfg)
    assert 0 < batch.exploded < 64
    assert batch.first_explosion_time is not None
    assert batch.first_explosion_time <= 0.5
    # frozen chains stay at their last admissible state, hence finite
    assert np.all(np.isfinite(batch.states))


def test_all_exploded_is_hard_error():
    p = anticonfining()
    cfg = IntegratorConfig(step=1e-2, n_steps=10000, snapshot_times=(100.0,),
                           n_chains=64, master_seed=11, x0=(1.0,))
    with pytest.raises(ExplosionError, match="first explosion"):
        simulate_chains(p, drift_zero(1), cfg)


def test_reproducible_and_chain_count_invariant():
    p = potential_gaussian(np.diag([-1.0, -4.0]))
    c = drift_skew_grad(J2, p)
    base = dict(step=1e-3, n_steps=500, snapshot_times=(0.05, 0.2, 0.5),
                master_seed=99, x0=(2.0, -1.0))
    big = simulate_chains(p, c, IntegratorConfig(n_chains=64, **base))
    again = simulate_chains(p, c, IntegratorConfig(n_chains=64, **base))
    np.testing.assert_array_equal(big.states, again.states)
    # chain i is a pure function of (master_seed, i): a smaller batch is a prefix
    small = simulate_chains(p, c, IntegratorConfig(n_chains=17, **base))
    np.testing.assert_array_equal(big.states[:, :17], small.states)


def test_spread_start_uses_chain_streams():
    p = potential_gaussian(-np.eye(2))
    cfg = IntegratorConfig(step=0.1, n_steps=0, snapshot_times=(0.0,),
                           n_chains=5, master_seed=3, spread=2.0)
    batch = simulate_chains(p, drift_zero(2), cfg)
    expect = np.stack([2.0 * chain_rng(3, i).standard_normal(2) for i in range(5)])
    np.testing.assert_array_equal(batch.states[0], expect)


def test_torus_chains_stay_in_fundamental_domain():
    p = potential_torus([((1, 0), 1.0)])
    cfg = IntegratorConfig(step=1e-2, n_steps=300, snapshot_times=(1.0, 3.0),
                           n_chains=32, master_seed=8, x0=(0.1, 6.0))
    batch = simulate_chains(p, drift_zero(2), cfg)
    assert np.all(batch.states >= 0.0)
    assert np.all(batch.states < 2 * np.pi)


def test_discretization_bias_halves_with_step():
    # the stationary variance of the discrete chain is 1/(1 - h/2); the
    # error vs the true equilibrium must shrink ~2x when h halves
    p = potential_gaussian(np.array([[-1.0]]))
    errs = {}
    for h in (0.1, 0.05):
        cfg = IntegratorConfig(step=h, n_steps=int(8.0 / h), snapshot_times=(8.0,),
                               n_chains=100000, master_seed=42, x0=(0.0,))
        batch = simulate_chains(p, drift_zero(1), cfg)
        errs[h] = abs(batch.states[-1][:, 0].var() - 1.0)
        assert abs(errs[h] - h / (2.0 - h)) < 3.0 * np.sqrt(2.0 / 100000)
    assert errs[0.1] / errs[0.05] > 1.4


def test_dimension_mismatch_rejected():
    p = potential_gaussian(-np.eye(2))
    cfg = IntegratorConfig(step=0.1, n_steps=5, snapshot_times=(0.5,),
                           n_chains=2, master_seed=0, x0=(0.0,))
    with pytest.raises(ValueError, match="x0"):
        simulate_chains(p, drift_zero(2), cfg)
    with pytest.raises(ValueError, match="dim"):
        simulate_chains(p, drift_zero(1),
                        IntegratorConfig(step=0.1, n_steps=5, snapshot_times=(0.5,),
                                         n_chains=2, master_seed=0, x0=(0.0, 0.0)))
