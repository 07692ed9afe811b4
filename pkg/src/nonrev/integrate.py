"""Euler-Maruyama simulation of the perturbed overdamped dynamics.

One step integrates dX = (-grad U(X) + C(X)) dt + sqrt(2) dW.  Chains are
advanced in lockstep but each chain consumes its own noise substream derived
from ``(master_seed, chain_index)``, so results are reproducible chain by
chain and independent of batching or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drift import DriftField
from .errors import ExplosionError
from .model import TORUS, Potential

Array = np.ndarray

# Noise buffer budget per chunk, in float64 values.
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class IntegratorConfig:
    """Stepping, seeding and snapshot plan for a batch of chains.

    Exactly one of ``x0`` (all chains start at a point) and ``spread``
    (chains start from an isotropic normal with that standard deviation)
    must be given.
    """

    step: float
    n_steps: int
    snapshot_times: tuple[float, ...]
    n_chains: int
    master_seed: int
    x0: tuple[float, ...] | None = None
    spread: float | None = None
    explosion_radius: float = 1e6

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.n_chains < 1:
            raise ValueError(f"n_chains must be >= 1, got {self.n_chains}")
        if self.explosion_radius <= 0:
            raise ValueError("explosion_radius must be positive")
        if (self.x0 is None) == (self.spread is None):
            raise ValueError("exactly one of x0 and spread must be set")
        if self.spread is not None and self.spread <= 0:
            raise ValueError("spread must be positive")
        times = tuple(float(t) for t in self.snapshot_times)
        horizon = self.n_steps * self.step
        if any(t < 0 or t > horizon * (1 + 1e-12) + 1e-12 for t in times):
            raise ValueError("snapshot times must lie in [0, n_steps * step]")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be non-decreasing")
        object.__setattr__(self, "snapshot_times", times)


@dataclass(frozen=True)
class SampleBatch:
    """Recorded snapshots: ``states[k]`` holds all chains at ``times[k]``."""

    times: tuple[float, ...]
    states: Array  # (n_snapshots, n_chains, dim)
    config: IntegratorConfig
    exploded: int
    first_explosion_time: float | None = None


def chain_rng(master_seed: int, chain: int) -> np.random.Generator:
    """The noise substream of one chain.

    Fixed derivation: ``SeedSequence(master_seed, spawn_key=(chain,))``.  A
    chain draws ``dim`` normals for its start when ``spread`` is set, then
    ``dim`` normals per step, in step order.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(chain,)))


def em_step(x: Array, p: Potential, c: DriftField, h: float, noise: Array) -> Array:
    """One Euler-Maruyama step; vectorizes over leading axes of ``x``.

    Non-finite outputs are not raised here; ``simulate_chains`` treats them
    as explosions.
    """
    x = np.asarray(x, dtype=float)
    out = x + h * (c.eval(x) - p.grad(x)) + np.sqrt(2.0 * h) * np.asarray(noise, dtype=float)
    if p.domain == TORUS:
        out = np.mod(out, np.asarray(p.periods, dtype=float))
    return out


def simulate_chains(p: Potential, c: DriftField, cfg: IntegratorConfig) -> SampleBatch:
    """Run all chains and record the configured snapshots.

    Snapshots are taken at the nearest step boundary not after the requested
    time.  Chains whose state norm exceeds ``explosion_radius`` (or turns
    non-finite) are frozen at their last admissible state and counted in
    ``exploded``; if every chain explodes, that is a hard error.
    """
    if c.dim != p.dim:
        raise ValueError(f"drift dim {c.dim} != potential dim {p.dim}")
    if cfg.x0 is not None and len(cfg.x0) != p.dim:
        raise ValueError(f"x0 must have {p.dim} components")

    d = p.dim
    n = cfg.n_chains
    h = cfg.step
    gens = [chain_rng(cfg.master_seed, i) for i in range(n)]

    if cfg.x0 is not None:
        x = np.tile(np.asarray(cfg.x0, dtype=float), (n, 1))
    else:
        x = np.empty((n, d))
        for i, g in enumerate(gens):
            x[i] = g.standard_normal(d)
        x *= cfg.spread
    if p.domain == TORUS:
        x = np.mod(x, np.asarray(p.periods, dtype=float))

    snap_steps = [min(cfg.n_steps, int(np.floor(t / h + 1e-9))) for t in cfg.snapshot_times]
    snapshots = np.empty((len(snap_steps), n, d))
    for k, s in enumerate(snap_steps):
        if s == 0:
            snapshots[k] = x

    alive = np.ones(n, dtype=bool)
    exploded = 0
    first_explosion = None

    chunk = max(1, min(cfg.n_steps if cfg.n_steps else 1, _CHUNK_BUDGET // max(1, n * d)))
    step_index = 0
    while step_index < cfg.n_steps:
        m = min(chunk, cfg.n_steps - step_index)
        noise = np.empty((n, m, d))
        for i, g in enumerate(gens):
            noise[i] = g.standard_normal((m, d))
        for j in range(m):
            step_index += 1
            xn = em_step(x, p, c, h, noise[:, j, :])
            bad = ~np.all(np.isfinite(xn), axis=1)
            bad |= np.linalg.norm(np.where(np.isfinite(xn), xn, 0.0), axis=1) > cfg.explosion_radius
            newly = alive & bad
            if newly.any():
                exploded += int(newly.sum())
                if first_explosion is None:
                    first_explosion = step_index * h
                alive &= ~newly
            x[alive] = xn[alive]
            for k, s in enumerate(snap_steps):
                if s == step_index:
                    snapshots[k] = x

    if exploded == n:
        raise ExplosionError(
            f"all {n} chains exploded; first explosion at t = {first_explosion:.6g}"
        )

    snapshots.setflags(write=False)
    return SampleBatch(
        times=cfg.snapshot_times,
        states=snapshots,
        config=cfg,
        exploded=exploded,
        first_explosion_time=first_explosion,
    )
