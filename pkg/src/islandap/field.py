"""
Anisotropy fields, diffusion tensors and the manufactured benchmark problems.

A field is described by an unnormalized direction vector B(x, y) and its
Jacobian.  The unit direction is

    b = B / sqrt(|B|^2 + delta)

so that singular points (B = 0) stay evaluable.  The diffusion tensor is

    A = (1/eps) b b^T + alpha b_perp b_perp^T,    b_perp = (-b2, b1)

which equals R(theta) diag(1/eps, alpha) R(theta)^T for a unit b.  Angles are
never stored; the components of b are the primary quantities.

Source terms of the benchmarks are built from the flux split

    A grad u = (1/eps) b (b . grad u) + alpha b_perp (b_perp . grad u)

using the construction identity b . grad u0 = 0, so no 1/eps factor ever
multiplies a cancelling quantity.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

DELTA_REG = 1e-16

# field families known to the compiled tracer
KERNEL_UNIFORM, KERNEL_ROTATING, KERNEL_EXAMPLE1, KERNEL_EXAMPLE2 = 0, 1, 2, 3

VectorFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
JacobianFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ConfigError(ValueError):
    """Invalid problem or grid configuration."""


class SingularPointError(ValueError):
    """Field evaluated exactly at a singular point without regularization."""


@dataclass(frozen=True)
class DiscontinuityRay:
    """Half-line ``origin + t (cos angle, sin angle)``, t > 0, where div b may jump."""

    origin: tuple[float, float]
    angle: float

    @property
    def direction(self) -> tuple[float, float]:
        return (math.cos(self.angle), math.sin(self.angle))


@dataclass(frozen=True)
class CutRay:
    """Horizontal segment ``y = origin_y`` running from the island center to ``x_end``.

    Grid nodes strictly between the center and ``x_end`` are cut-point
    candidates for the island.
    """

    center: tuple[float, float]
    x_end: float

    def contains(self, x: float, y: float, tol: float = 1e-12) -> bool:
        if abs(y - self.center[1]) > tol:
            return False
        lo, hi = sorted((self.center[0], self.x_end))
        return lo + tol < x < hi - tol


@dataclass(frozen=True)
class FieldSpec:
    """Anisotropy direction, diffusivities and singular-point bookkeeping."""

    vector: VectorFn
    jacobian: JacobianFn
    epsilon: float = 1.0
    alpha: float = 1.0
    singular_points: tuple[tuple[float, float], ...] = ()
    discontinuity_rays: tuple[DiscontinuityRay, ...] = ()
    delta_reg: float = DELTA_REG
    # (family code, parameters) of an equivalent compiled field, if any
    kernel: tuple[int, tuple[float, ...]] | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")

    def b(self, x, y):
        """Regularized unit direction ``(b1, b2)``."""
        B1, B2 = self.vector(np.asarray(x, float), np.asarray(y, float))
        n2 = B1 * B1 + B2 * B2
        if self.delta_reg == 0 and np.any(n2 == 0):
            raise SingularPointError("direction field vanishes and delta_reg is 0")
        n = np.sqrt(n2 + self.delta_reg)
        return B1 / n, B2 / n

    def b_jacobian(self, x, y):
        """Unit direction plus its Jacobian ``(b1, b2, d1b1, d2b1, d1b2, d2b2)``."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        B1, B2 = self.vector(x, y)
        B1x, B1y, B2x, B2y = self.jacobian(x, y)
        n2 = B1 * B1 + B2 * B2 + self.delta_reg
        n = np.sqrt(n2)
        n3 = n2 * n
        # d_j |B|^2 / 2
        gx = B1 * B1x + B2 * B2x
        gy = B1 * B1y + B2 * B2y
        return (
            B1 / n,
            B2 / n,
            B1x / n - B1 * gx / n3,
            B1y / n - B1 * gy / n3,
            B2x / n - B2 * gx / n3,
            B2y / n - B2 * gy / n3,
        )

    def div_b(self, x, y):
        _, _, b1x, _, _, b2y = self.b_jacobian(x, y)
        return b1x + b2y

    def with_epsilon(self, epsilon: float) -> FieldSpec:
        return replace(self, epsilon=epsilon)


def unit_field(p: Sequence[float], fld: FieldSpec) -> np.ndarray:
    """Regularized unit direction at a single point."""
    b1, b2 = fld.b(p[0], p[1])
    return np.array([float(b1), float(b2)])


def tensor_parts(fld: FieldSpec, x, y):
    """Entries of ``b b^T`` and ``alpha b_perp b_perp^T`` as ``(a11, a12, a22)`` tuples."""
    b1, b2 = fld.b(x, y)
    par = (b1 * b1, b1 * b2, b2 * b2)
    a = fld.alpha
    perp = (a * b2 * b2, -a * b1 * b2, a * b1 * b1)
    return par, perp


def diffusion_tensor(p: Sequence[float], fld: FieldSpec) -> np.ndarray:
    """The symmetric 2x2 diffusion tensor at point ``p``."""
    par, perp = tensor_parts(fld, p[0], p[1])
    inv_eps = 1.0 / fld.epsilon
    a11 = inv_eps * par[0] + perp[0]
    a12 = inv_eps * par[1] + perp[1]
    a22 = inv_eps * par[2] + perp[2]
    return np.array([[float(a11), float(a12)], [float(a12), float(a22)]])


def uniform_field(theta: float, epsilon: float = 1.0, alpha: float = 1.0) -> FieldSpec:
    """Constant direction ``(cos theta, sin theta)``."""
    c, s = math.cos(theta), math.sin(theta)

    def vector(x, y):
        one = np.ones_like(np.asarray(x, float) + np.asarray(y, float))
        return c * one, s * one

    def jacobian(x, y):
        z = np.zeros_like(np.asarray(x, float) + np.asarray(y, float))
        return z, z, z, z

    return FieldSpec(vector, jacobian, epsilon=epsilon, alpha=alpha, delta_reg=0.0, kernel=(KERNEL_UNIFORM, (c, s)))


def rotating_field(center=(0.0, 0.0), epsilon: float = 1.0, alpha: float = 1.0) -> FieldSpec:
    """Counter-clockwise circles around ``center``; b = (-(y-yc), x-xc)/r."""
    xc, yc = center

    def vector(x, y):
        return -(np.asarray(y, float) - yc), np.asarray(x, float) - xc

    def jacobian(x, y):
        z = np.zeros_like(np.asarray(x, float) + np.asarray(y, float))
        return z, z - 1.0, z + 1.0, z

    return FieldSpec(
        vector,
        jacobian,
        epsilon=epsilon,
        alpha=alpha,
        singular_points=(tuple(center),),
        kernel=(KERNEL_ROTATING, (float(xc), float(yc))),
    )


@dataclass(frozen=True)
class ProblemCase:
    """A manufactured benchmark: domain, field, exact solution and data."""

    label: str
    domain: tuple[float, float]
    field: FieldSpec
    exact: ScalarFn
    source: ScalarFn
    island_centers: tuple[tuple[float, float], ...]
    cut_rays: tuple[CutRay, ...]
    params: dict = field(default_factory=dict)
    rebuild: Callable[[float], ProblemCase] | None = None

    def boundary(self, x, y):
        return self.exact(x, y)

    def with_epsilon(self, epsilon: float) -> ProblemCase:
        if self.rebuild is None:
            raise ConfigError(f"problem {self.label!r} cannot be rebuilt at another epsilon")
        return self.rebuild(epsilon)


def _split_source(fld: FieldSpec, x, y, grad_u, lap_u, grad_w=None, hess_w=None):
    """-div(A grad u) for u = u0 + eps*w with b . grad u0 = 0 identically.

    The flux is (1 - alpha*eps) b (b . grad w) + alpha |b|^2 grad u, where
    |b|^2 < 1 only within the regularization radius of singular points.
    """
    alpha, eps, delta = fld.alpha, fld.epsilon, fld.delta_reg
    b1, b2, b1x, b1y, b2x, b2y = fld.b_jacobian(x, y)
    B1, B2 = fld.vector(x, y)
    B1x, B1y, B2x, B2y = fld.jacobian(x, y)
    nB2 = B1 * B1 + B2 * B2
    den = nB2 + delta
    bb = nB2 / den
    # grad |b|^2 = delta * grad|B|^2 / (|B|^2 + delta)^2
    dbb_x = 2.0 * delta * (B1 * B1x + B2 * B2x) / (den * den)
    dbb_y = 2.0 * delta * (B1 * B1y + B2 * B2y) / (den * den)
    ux, uy = grad_u
    f = -alpha * (bb * lap_u + dbb_x * ux + dbb_y * uy)
    if grad_w is not None:
        wx, wy = grad_w
        wxx, wxy, wyy = hess_w
        s = b1 * wx + b2 * wy
        sx = b1x * wx + b2x * wy + b1 * wxx + b2 * wxy
        sy = b1y * wx + b2y * wy + b1 * wxy + b2 * wyy
        div_b = b1x + b2y
        f = f - (1.0 - alpha * eps) * (s * div_b + b1 * sx + b2 * sy)
    return f


def example1_case(gamma1: float, gamma2: float, phi: float, epsilon: float, alpha: float = 1.0) -> ProblemCase:
    """Single island with elliptic field lines on [-0.5, 0.5]^2.

    u = 1 - q^{3/2},  q = g1^2 (x cos phi + y sin phi)^2 + g2^2 (x sin phi - y cos phi)^2,
    b = (-u_y, u_x) / |grad u|.  The exact solution does not depend on eps.
    """
    if not (gamma1 > 0 and gamma2 > 0):
        raise ConfigError(f"gamma1, gamma2 must be positive, got {gamma1}, {gamma2}")
    if not 0 <= phi < math.pi:
        raise ConfigError(f"phi must lie in [0, pi), got {phi}")
    if not 0 < epsilon <= 1:
        raise ConfigError(f"epsilon must lie in (0, 1], got {epsilon}")
    c, s = math.cos(phi), math.sin(phi)
    g1s, g2s = gamma1 * gamma1, gamma2 * gamma2
    # Hessian of q is constant
    qxx = 2.0 * (g1s * c * c + g2s * s * s)
    qxy = 2.0 * (g1s * c * s - g2s * s * c)
    qyy = 2.0 * (g1s * s * s + g2s * c * c)

    def q_and_grad(x, y):
        r1 = x * c + y * s
        r2 = x * s - y * c
        q = g1s * r1 * r1 + g2s * r2 * r2
        qx = 2.0 * (g1s * r1 * c + g2s * r2 * s)
        qy = 2.0 * (g1s * r1 * s - g2s * r2 * c)
        return q, qx, qy

    def exact(x, y):
        q, _, _ = q_and_grad(np.asarray(x, float), np.asarray(y, float))
        return 1.0 - q ** 1.5

    def derivs(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        q, qx, qy = q_and_grad(x, y)
        sq = np.sqrt(q)
        ux = -1.5 * sq * qx
        uy = -1.5 * sq * qy
        # q^{-1/2} grad q grad q^T is O(q^{1/2}); define it as 0 at the center
        with np.errstate(divide="ignore", invalid="ignore"):
            isq = np.where(q > 0, 1.0 / np.where(q > 0, sq, 1.0), 0.0)
        uxx = -1.5 * (sq * qxx + 0.5 * isq * qx * qx)
        uxy = -1.5 * (sq * qxy + 0.5 * isq * qx * qy)
        uyy = -1.5 * (sq * qyy + 0.5 * isq * qy * qy)
        return ux, uy, uxx, uxy, uyy

    def vector(x, y):
        ux, uy, *_ = derivs(x, y)
        return -uy, ux

    def jacobian(x, y):
        _, _, uxx, uxy, uyy = derivs(x, y)
        return -uxy, -uyy, uxx, uxy

    rays = () if gamma1 == gamma2 else (DiscontinuityRay((0.0, 0.0), phi),)
    fld = FieldSpec(
        vector,
        jacobian,
        epsilon=epsilon,
        alpha=alpha,
        singular_points=((0.0, 0.0),),
        discontinuity_rays=rays,
        kernel=(KERNEL_EXAMPLE1, (g1s, g2s, c, s)),
    )

    def source(x, y):
        ux, uy, uxx, _, uyy = derivs(x, y)
        return _split_source(fld, x, y, (ux, uy), uxx + uyy)

    params = dict(gamma1=gamma1, gamma2=gamma2, phi=phi, alpha=alpha)
    return ProblemCase(
        label="example1",
        domain=(0.5, 0.5),
        field=fld,
        exact=exact,
        source=source,
        island_centers=((0.0, 0.0),),
        cut_rays=(CutRay((0.0, 0.0), -0.5),),
        params=params,
        rebuild=lambda e: example1_case(gamma1, gamma2, phi, e, alpha),
    )


def example2_case(lam: float, epsilon: float, alpha: float = 1.0) -> ProblemCase:
    """Two islands centered at (+-0.5, 0) on [-1, 1] x [-0.5, 0.5].

    u = cos(lam cos(2 pi (x - 3/2)) + cos(pi y)) + eps sin(2 pi y) sin(pi x),
    B = (-pi sin(pi y), 2 lam pi sin(2 pi (x - 3/2))).
    """
    if lam == 0:
        raise ConfigError("lambda must be non-zero (degenerate field)")
    if not 0 < epsilon <= 1:
        raise ConfigError(f"epsilon must lie in (0, 1], got {epsilon}")
    pi = math.pi

    def vector(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return -pi * np.sin(pi * y), 2.0 * lam * pi * np.sin(2.0 * pi * (x - 1.5))

    def jacobian(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        z = np.zeros(np.broadcast(x, y).shape)
        return z, -pi * pi * np.cos(pi * y) + z, 4.0 * lam * pi * pi * np.cos(2.0 * pi * (x - 1.5)) + z, z

    def limit(x, y):
        return np.cos(lam * np.cos(2.0 * pi * (np.asarray(x, float) - 1.5)) + np.cos(pi * np.asarray(y, float)))

    def perturbation(x, y):
        return np.sin(2.0 * pi * np.asarray(y, float)) * np.sin(pi * np.asarray(x, float))

    def exact(x, y):
        return limit(x, y) + epsilon * perturbation(x, y)

    singular = ((-1.0, 0.0), (-0.5, 0.0), (0.0, 0.0), (0.5, 0.0), (1.0, 0.0))
    fld = FieldSpec(
        vector,
        jacobian,
        epsilon=epsilon,
        alpha=alpha,
        singular_points=singular,
        kernel=(KERNEL_EXAMPLE2, (float(lam),)),
    )

    def source(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        arg = 2.0 * pi * (x - 1.5)
        ph = lam * np.cos(arg) + np.cos(pi * y)
        px = -2.0 * pi * lam * np.sin(arg)
        py = -pi * np.sin(pi * y)
        pxx = -4.0 * pi * pi * lam * np.cos(arg)
        pyy = -pi * pi * np.cos(pi * y)
        sp, cp = np.sin(ph), np.cos(ph)
        w = np.sin(2.0 * pi * y) * np.sin(pi * x)
        wx = pi * np.sin(2.0 * pi * y) * np.cos(pi * x)
        wy = 2.0 * pi * np.cos(2.0 * pi * y) * np.sin(pi * x)
        wxx = -pi * pi * w
        wyy = -4.0 * pi * pi * w
        wxy = 2.0 * pi * pi * np.cos(2.0 * pi * y) * np.cos(pi * x)
        ux = -sp * px + epsilon * wx
        uy = -sp * py + epsilon * wy
        lap0 = -cp * (px * px + py * py) - sp * (pxx + pyy)
        lap = lap0 + epsilon * (wxx + wyy)
        return _split_source(fld, x, y, (ux, uy), lap, (wx, wy), (wxx, wxy, wyy))

    return ProblemCase(
        label="example2",
        domain=(1.0, 0.5),
        field=fld,
        exact=exact,
        source=source,
        island_centers=((-0.5, 0.0), (0.5, 0.0)),
        cut_rays=(CutRay((-0.5, 0.0), -1.0), CutRay((0.5, 0.0), 0.0)),
        params=dict(lam=lam, alpha=alpha),
        rebuild=lambda e: example2_case(lam, e, alpha),
    )


def example2_limit(lam: float):
    """The eps -> 0 limit solution of the two-island problem."""

    def u0(x, y):
        return np.cos(lam * np.cos(2.0 * math.pi * (np.asarray(x, float) - 1.5)) + np.cos(math.pi * np.asarray(y, float)))

    return u0
