"""Potentials and their equilibrium structure.

Everything downstream works against a single ``Potential`` contract: an
energy U with gradient (and, for the built-ins, Laplacian and Hessian) on
full space or on a periodic torus.  The equilibrium density of the
associated diffusion is proportional to exp(-U).

Evaluation callables are vectorized over leading axes: input ``x`` of shape
``(..., dim)`` yields energies of shape ``(...,)``, gradients of shape
``(..., dim)``, Laplacians of shape ``(...,)`` and Hessians of shape
``(..., dim, dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Array = np.ndarray

FULL_SPACE = "full_space"
TORUS = "torus"

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Potential:
    """Energy landscape with optional higher derivatives.

    ``laplacian`` and ``hessian`` may be None for user-supplied potentials;
    the built-in constructors always provide them.  ``kind`` tags the
    construction ("gaussian", "double_well", "torus", "user") so downstream
    code can use closed forms where they exist.
    """

    dim: int
    energy: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    laplacian: Callable[[Array], Array] | None = None
    hessian: Callable[[Array], Array] | None = None
    domain: str = FULL_SPACE
    periods: tuple[float, ...] | None = None
    kind: str = "user"
    label: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.domain not in (FULL_SPACE, TORUS):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == TORUS:
            if self.periods is None or len(self.periods) != self.dim:
                raise ValueError("torus potentials need one period per axis")
            if any(p <= 0 for p in self.periods):
                raise ValueError("torus periods must be positive")


@dataclass(frozen=True)
class ConfinementReport:
    """Radial profile of the confinement functional 0.5|grad U|^2 - lap U."""

    radii: Array
    values: Array
    diverges: bool


def potential_gaussian(D: Array) -> Potential:
    """Gaussian equilibrium exp(-U) with U(x) = -x.Dx/2 for negative definite D.

    The stationary density is the centered normal with covariance -inv(D).
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"D must be a square matrix, got shape {D.shape}")
    asym = np.max(np.abs(D - D.T))
    if asym > SYMMETRY_TOL:
        raise ValueError(f"D must be symmetric: max |D - D^T| = {asym:.3e}")
    eigs = np.linalg.eigvalsh(D)
    if eigs.max() >= 0:
        raise ValueError(
            f"D must be negative definite: offending eigenvalue {eigs.max():.6g} >= 0"
        )
    D = 0.5 * (D + D.T)
    D.setflags(write=False)
    dim = D.shape[0]
    trace = float(np.trace(D))

    def energy(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return -0.5 * np.einsum("...i,...i->...", x, x @ D)

    def grad(x: Array) -> Array:
        return -np.asarray(x, dtype=float) @ D

    def laplacian(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], -trace)

    def hessian(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(-D, x.shape[:-1] + (dim, dim))

    return Potential(
        dim=dim,
        energy=energy,
        grad=grad,
        laplacian=laplacian,
        hessian=hessian,
        kind="gaussian",
        label=f"gaussian(dim={dim})",
    )


def potential_double_well(a: float) -> Potential:
    """One-dimensional quartic double well U(x) = a (x^2 - 1)^2, a > 0."""
    if a <= 0:
        raise ValueError(f"well depth a must be positive, got {a}")
    a = float(a)

    def energy(x: Array) -> Array:
        u = np.asarray(x, dtype=float)[..., 0]
        return a * (u * u - 1.0) ** 2

    def grad(x: Array) -> Array:
        u = np.asarray(x, dtype=float)[..., 0]
        return (4.0 * a * u * (u * u - 1.0))[..., None]

    def laplacian(x: Array) -> Array:
        u = np.asarray(x, dtype=float)[..., 0]
        return 4.0 * a * (3.0 * u * u - 1.0)

    def hessian(x: Array) -> Array:
        return laplacian(x)[..., None, None]

    return Potential(
        dim=1,
        energy=energy,
        grad=grad,
        laplacian=laplacian,
        hessian=hessian,
        kind="double_well",
        label=f"double_well(a={a:g})",
    )


def potential_torus(coeffs: list[tuple[tuple[int, int], float]]) -> Potential:
    """Trigonometric potential on the 2-torus with period 2*pi per axis.

    ``coeffs`` is a list of ((k1, k2), amplitude) pairs; the energy is the
    sum of amplitude * cos(k . x).  An empty list gives the uniform
    equilibrium U = 0.
    """
    waves = np.array([k for k, _ in coeffs], dtype=float).reshape(-1, 2)
    amps = np.array([a for _, a in coeffs], dtype=float)
    for k in waves:
        if not np.all(k == np.round(k)):
            raise ValueError(f"wave vectors must be integer, got {tuple(k)}")
    waves.setflags(write=False)
    amps.setflags(write=False)

    def energy(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        phase = np.einsum("...i,mi->...m", x, waves)
        return np.einsum("...m,m->...", np.cos(phase), amps)

    def grad(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        phase = np.einsum("...i,mi->...m", x, waves)
        return -np.einsum("...m,m,mi->...i", np.sin(phase), amps, waves)

    def laplacian(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        phase = np.einsum("...i,mi->...m", x, waves)
        k2 = np.einsum("mi,mi->m", waves, waves)
        return -np.einsum("...m,m,m->...", np.cos(phase), amps, k2)

    def hessian(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        phase = np.einsum("...i,mi->...m", x, waves)
        return -np.einsum("...m,m,mi,mj->...ij", np.cos(phase), amps, waves, waves)

    return Potential(
        dim=2,
        energy=energy,
        grad=grad,
        laplacian=laplacian,
        hessian=hessian,
        domain=TORUS,
        periods=(2.0 * np.pi, 2.0 * np.pi),
        kind="torus",
        label=f"torus({len(amps)} modes)",
    )


def gaussian_density(D: Array) -> Callable[[Array], Array]:
    """Normalized stationary density of ``potential_gaussian(D)``.

    Returns a vectorized callable for the centered normal with covariance
    -inv(D).
    """
    D = np.asarray(D, dtype=float)
    cov = -np.linalg.inv(D)
    prec = np.linalg.inv(cov)
    dim = D.shape[0]
    norm = 1.0 / np.sqrt((2.0 * np.pi) ** dim * np.linalg.det(cov))

    def pdf(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        q = np.einsum("...i,ij,...j->...", x, prec, x)
        return norm * np.exp(-0.5 * q)

    return pdf


def check_confinement(
    p: Potential,
    r_max: float,
    n_radii: int = 24,
    n_directions: int = 32,
    growth_factor: float = 10.0,
    seed: int = 0,
) -> ConfinementReport:
    """Probe the confinement functional 0.5|grad U|^2 - lap U radially.

    The functional is averaged over seeded random directions at each radius.
    ``diverges`` is a desk-scale proxy for divergence at infinity: the last
    value exceeds the first by ``growth_factor`` and the tail of the profile
    is strictly increasing.
    """
    if p.domain != FULL_SPACE:
        raise ValueError("confinement check applies to full-space potentials only")
    if p.laplacian is None:
        raise ValueError("confinement check needs an analytic Laplacian")
    if r_max <= 0 or n_radii < 3 or n_directions < 1:
        raise ValueError("need r_max > 0, n_radii >= 3, n_directions >= 1")

    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_directions, p.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.linspace(r_max / n_radii, r_max, n_radii)

    points = radii[:, None, None] * dirs[None, :, :]  # (n_radii, n_directions, dim)
    g = p.grad(points)
    vals = 0.5 * np.einsum("...i,...i->...", g, g) - p.laplacian(points)
    values = vals.mean(axis=1)

    tail = values[-max(3, n_radii // 4):]
    diverges = bool(
        values[-1] > growth_factor * values[0] and np.all(np.diff(tail) > 0)
    )
    return ConfinementReport(radii=radii, values=values, diverges=diverges)


def grad_check(p: Potential, points: Array, h_fd: float = 1e-4) -> float:
    """Max componentwise gap between analytic gradient and central differences."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != p.dim:
        raise ValueError(f"points must have {p.dim} components")
    worst = 0.0
    for x in points:
        g = p.grad(x)
        for i in range(p.dim):
            e = np.zeros(p.dim)
            e[i] = h_fd
            fd = (p.energy(x + e) - p.energy(x - e)) / (2.0 * h_fd)
            worst = max(worst, abs(float(fd - g[i])))
    return worst
