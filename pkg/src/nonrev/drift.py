"""Divergence-free drift perturbations and invariance checks.

A ``DriftField`` is an extra drift C added to the reversible dynamics
dX = -grad U dt + sqrt(2) dW.  The equilibrium exp(-U) stays invariant
exactly when C is weighted divergence free, div(C exp(-U)) = 0, which in
differentiated form reads div C - C . grad U = 0.  Built-in constructions
satisfy this identically:

* ``drift_skew_grad``: C = S grad U for an antisymmetric matrix S,
* ``drift_stream_2d``: the rotated gradient of a stream function on the
  2-torus (weighted divergence free against the uniform equilibrium).

``weighted_divergence_residual`` checks the differentiated condition at
probe points; ``weak_invariance_residual`` checks the weak form
integral(C . grad f dpi) = 0 against smooth compactly supported test
functions by quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import FULL_SPACE, Potential

Array = np.ndarray

SKEW_TOL = 1e-12


@dataclass(frozen=True)
class SkewMatrix:
    """Validated antisymmetric matrix."""

    entries: Array

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"skew matrix must be square, got shape {entries.shape}")
        worst = np.max(np.abs(entries + entries.T)) if entries.size else 0.0
        if worst > SKEW_TOL:
            raise ValueError(f"matrix is not antisymmetric: max |S + S^T| = {worst:.3e}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def random_skew(dim: int, rng: np.random.Generator) -> SkewMatrix:
    """Seeded dense skew matrix A - A^T with entrywise standard normal A."""
    a = rng.standard_normal((dim, dim))
    return SkewMatrix(a - a.T)


@dataclass(frozen=True)
class DriftField:
    """Vector field C with (possibly analytic) divergence.

    ``divergence`` may be None, in which case ``div`` falls back to central
    finite differences.  ``skew`` carries the matrix S for the S grad U
    family; ``stream`` carries the stream function for 2-d stream fields.
    Both are consumed by the generator discretization.
    """

    dim: int
    eval: Callable[[Array], Array]
    divergence: Callable[[Array], Array] | None
    kind: str
    label: str
    skew: Array | None = None
    stream: Callable[[Array], Array] | None = None

    def __call__(self, x: Array) -> Array:
        return self.eval(x)

    def div(self, x: Array, h_fd: float = 1e-3) -> float:
        """Divergence at a single point, analytic when available."""
        if self.divergence is not None:
            return float(self.divergence(np.asarray(x, dtype=float)))
        return _fd_divergence(self.eval, np.asarray(x, dtype=float), h_fd)


def _fd_divergence(field: Callable[[Array], Array], x: Array, h_fd: float) -> float:
    # Step scales with the local coordinate so probes far from the origin
    # do not lose all significant digits.
    total = 0.0
    for i in range(x.shape[-1]):
        step = h_fd * max(1.0, abs(float(x[i])))
        e = np.zeros_like(x)
        e[i] = step
        total += float(field(x + e)[i] - field(x - e)[i]) / (2.0 * step)
    return total


def drift_zero(dim: int) -> DriftField:
    """The trivial perturbation C = 0."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")

    def eval_c(x: Array) -> Array:
        return np.zeros_like(np.asarray(x, dtype=float))

    def div_c(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    return DriftField(dim=dim, eval=eval_c, divergence=div_c, kind="zero",
                      label=f"zero(dim={dim})")


def drift_skew_grad(S: SkewMatrix, p: Potential) -> DriftField:
    """C = S grad U: weighted divergence free for every antisymmetric S.

    When the potential exposes a Hessian, the divergence is returned as the
    analytic zero of the identity div(S grad U) = trace(S Hess U) = 0.
    Otherwise ``div`` falls back to finite differences.
    """
    if S.dim != p.dim:
        raise ValueError(f"skew matrix dim {S.dim} != potential dim {p.dim}")
    entries = S.entries

    def eval_c(x: Array) -> Array:
        return p.grad(x) @ entries.T

    divergence = None
    if p.hessian is not None:
        def divergence(x: Array) -> Array:
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1])

    return DriftField(
        dim=p.dim,
        eval=eval_c,
        divergence=divergence,
        kind="skew_grad",
        label=f"skew_grad({p.label})",
        skew=entries,
    )


def drift_stream_2d(
    stream: Callable[[Array], Array],
    stream_grad: Callable[[Array], Array],
    label: str = "stream",
) -> DriftField:
    """Rotated gradient of a stream function on the 2-torus.

    C = (d stream/dx2, -d stream/dx1) is divergence free identically, hence
    invariant for the uniform equilibrium U = 0.
    """

    def eval_c(x: Array) -> Array:
        g = np.asarray(stream_grad(x), dtype=float)
        return np.stack([g[..., 1], -g[..., 0]], axis=-1)

    def div_c(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    return DriftField(
        dim=2,
        eval=eval_c,
        divergence=div_c,
        kind="stream_2d",
        label=f"stream_2d({label})",
        stream=stream,
    )


def _skew_quadratic(S: Array, g: Array) -> float:
    # g . (S g) paired so the (i, j) and (j, i) terms cancel exactly in
    # floating point whenever S is exactly antisymmetric: g_i*g_j is the
    # identical float in both terms.
    total = 0.0
    d = g.shape[-1]
    for i in range(d):
        for j in range(i + 1, d):
            total += S[i, j] * (g[j] * g[i]) + S[j, i] * (g[i] * g[j])
    return total


def weighted_divergence_residual(
    c: DriftField,
    p: Potential,
    probes: Array,
    h_fd: float = 1e-3,
) -> float:
    """Max of |div C - C . grad U| over probe points.

    This is exp(U) div(C exp(-U)) in differentiated form; it vanishes
    identically for invariant fields.  For the S grad U family the advection
    term is evaluated with exact pairwise cancellation so the analytic path
    returns a double-precision zero.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[-1] != p.dim or c.dim != p.dim:
        raise ValueError("probe/drift/potential dimensions disagree")
    worst = 0.0
    for x in probes:
        div = c.div(x, h_fd=h_fd)
        if c.skew is not None:
            adv = _skew_quadratic(c.skew, p.grad(x))
        else:
            adv = float(np.dot(c.eval(x), p.grad(x)))
        worst = max(worst, abs(div - adv))
    return worst


@dataclass(frozen=True)
class Bump:
    """Smooth compactly supported test function exp(1 - 1/(1 - |u|^2)).

    ``u = (x - center) / radius``; the bump is 1 at the center and vanishes
    with all derivatives on the sphere |u| = 1.
    """

    center: Array
    radius: float

    def value(self, x: Array) -> Array:
        u = (np.asarray(x, dtype=float) - self.center) / self.radius
        s = np.einsum("...i,...i->...", u, u)
        inside = s < 1.0
        out = np.zeros(s.shape)
        si = s[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - si))
        return out

    def grad(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.radius
        s = np.einsum("...i,...i->...", u, u)
        inside = s < 1.0
        out = np.zeros(x.shape)
        si = s[inside]
        coef = np.exp(1.0 - 1.0 / (1.0 - si)) * (-2.0 / (self.radius * (1.0 - si) ** 2))
        out[inside] = coef[..., None] * u[inside]
        return out


def bump_family(
    n: int,
    dim: int,
    rng: np.random.Generator,
    center_halfwidth: float = 1.5,
    radius_range: tuple[float, float] = (2.0, 3.5),
) -> list[Bump]:
    """Seeded family of bump test functions."""
    bumps = []
    for _ in range(n):
        center = rng.uniform(-center_halfwidth, center_halfwidth, size=dim)
        radius = rng.uniform(*radius_range)
        bumps.append(Bump(center=center, radius=radius))
    return bumps


def weak_invariance_residual(
    c: DriftField,
    p: Potential,
    test_fns: Sequence,
    ranges: Sequence[tuple[float, float]],
    n: int = 200,
) -> list[float]:
    """Normalized weak-form residuals |int (C . grad f) dpi| per test function.

    The integral is a midpoint quadrature over a tensor grid on ``ranges``;
    the residual is normalized by int |C| |grad f| dpi so the scale of C and
    f drops out.  Test functions need ``value``/``grad`` methods (``Bump``
    instances work); if they expose ``center``/``radius``, their support is
    checked against the quadrature box.
    """
    if len(test_fns) == 0:
        raise ValueError("need at least one test function")
    if len(ranges) != p.dim or c.dim != p.dim:
        raise ValueError("range/drift/potential dimensions disagree")
    for f in test_fns:
        if hasattr(f, "center") and hasattr(f, "radius"):
            for i, (lo, hi) in enumerate(ranges):
                if f.center[i] - f.radius < lo or f.center[i] + f.radius > hi:
                    raise ValueError(
                        "quadrature box does not cover the support of a test function"
                    )

    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for lo, hi in ranges]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    u = p.energy(pts)
    weight = np.exp(-(u - u.min()))  # common normalization cancels in the ratio
    cvals = c.eval(pts)
    cnorm = np.linalg.norm(cvals, axis=-1)

    residuals = []
    for f in test_fns:
        gf = f.grad(pts)
        num = float(np.sum(weight * np.einsum("...i,...i->...", cvals, gf)))
        den = float(np.sum(weight * cnorm * np.linalg.norm(gf, axis=-1)))
        residuals.append(abs(num) / den if den > 0 else abs(num))
    return residuals
