"""Variable-curvature hyperboloid geometry kernel.

Points live on the upper sheet of a two-sheeted hyperboloid embedded in
Minkowski space R^{n,1}: ``<x, x>_L = -zeta^2`` with ``x0 >= zeta > 0``,
where ``<.,.>_L`` is the Lorentzian scalar product of signature
``(-, +, ..., +)``. The sectional curvature is ``K = -1/zeta^2``, so larger
``zeta`` means a flatter space.

Everything here is pure numpy over the last axis: arrays of shape
``(..., n+1)`` are batches of ambient points or tangent vectors. Operations
are pure functions, safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# NaN guard for the arccosh argument. The lower clamp at 1 absorbs float
# drift; the upper clamp only exists to keep inf out of downstream math and
# is far beyond any distance the package can meaningfully represent.
ACOSH_ARG_MAX = 1e120

DEFAULT_ZETA_MIN = 0.1
DEFAULT_ZETA_MAX = 10.0

_EPS = np.finfo(np.float64).eps


class ManifoldError(ValueError):
    """Raised when inputs violate a manifold precondition."""


@dataclass(frozen=True)
class CurvatureParam:
    """Positive curvature parameter zeta; the space has curvature -1/zeta^2."""

    zeta: float
    zeta_min: float = DEFAULT_ZETA_MIN
    zeta_max: float = DEFAULT_ZETA_MAX

    def __post_init__(self):
        if not (self.zeta_min > 0 and self.zeta_min <= self.zeta_max):
            raise ManifoldError(f"bad curvature bounds [{self.zeta_min}, {self.zeta_max}]")
        if not (self.zeta_min <= self.zeta <= self.zeta_max):
            raise ManifoldError(
                f"zeta={self.zeta} outside [{self.zeta_min}, {self.zeta_max}]"
            )

    @property
    def kappa(self) -> float:
        return -1.0 / (self.zeta * self.zeta)

    def clamped(self, zeta: float) -> "CurvatureParam":
        z = min(max(zeta, self.zeta_min), self.zeta_max)
        return CurvatureParam(z, self.zeta_min, self.zeta_max)


def as_zeta(zeta) -> float:
    """Accept a float or a CurvatureParam; return the positive scalar."""
    z = zeta.zeta if isinstance(zeta, CurvatureParam) else float(zeta)
    if not (z > 0) or not math.isfinite(z):
        raise ManifoldError(f"curvature parameter must be positive and finite, got {z}")
    return z


def lorentz_inner(u: np.ndarray, v: np.ndarray, keepdims: bool = False) -> np.ndarray:
    """Lorentzian scalar product -u0*v0 + sum_i u_i*v_i over the last axis."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape[-1] != v.shape[-1]:
        raise ManifoldError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    if u.shape[-1] < 2:
        raise ManifoldError("ambient dimension must be at least 2")
    prod = u * v
    spatial = prod[..., 1:].sum(axis=-1, keepdims=keepdims)
    time = prod[..., :1] if keepdims else prod[..., 0]
    return spatial - time


def lorentz_norm(v: np.ndarray, keepdims: bool = False) -> np.ndarray:
    """sqrt(<v,v>_L) for spacelike vectors; negative inner products clip to 0."""
    return np.sqrt(np.maximum(lorentz_inner(v, v, keepdims=keepdims), 0.0))


def origin(dim: int, zeta) -> np.ndarray:
    """The hyperboloid base point (zeta, 0, ..., 0) in ambient dimension dim+1."""
    z = as_zeta(zeta)
    o = np.zeros(dim + 1, dtype=np.float64)
    o[0] = z
    return o


def manifold_residual(x: np.ndarray, zeta) -> np.ndarray:
    """|<x,x>_L + zeta^2| — zero for points exactly on the manifold."""
    z = as_zeta(zeta)
    return np.abs(lorentz_inner(x, x) + z * z)


def check_on_manifold(x: np.ndarray, zeta, tol: float = 1e-6) -> None:
    """Raise ManifoldError if x drifts off the hyperboloid.

    The comparison adds a rounding-noise floor proportional to the squared
    coordinate magnitude: far from the origin the quadratic form is a
    difference of huge, nearly equal terms and an absolute test would
    trip on float cancellation alone.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ManifoldError("non-finite coordinates")
    z = as_zeta(zeta)
    resid = manifold_residual(x, z)
    floor = 64.0 * _EPS * (x[..., 0] ** 2 + z * z)
    bad = resid > tol * max(1.0, z * z) + floor
    if np.any(bad):
        worst = float(np.max(resid))
        raise ManifoldError(f"point off manifold at zeta={z}: residual {worst:.3e}")
    if np.any(x[..., 0] <= 0):
        raise ManifoldError("point on the lower hyperboloid sheet")


def check_tangent(v: np.ndarray, x: np.ndarray, tol: float = 1e-6) -> None:
    """Raise ManifoldError unless <x, v>_L = 0 within tolerance."""
    ip = lorentz_inner(x, v)
    scale = 1.0 + np.abs(x[..., 0]) * np.max(np.abs(np.asarray(v)), axis=-1, initial=0.0)
    if np.any(np.abs(ip) > tol * scale):
        raise ManifoldError(f"vector not tangent: <x,v> = {float(np.max(np.abs(ip))):.3e}")


def _acosh1p(u: np.ndarray) -> np.ndarray:
    """arccosh(1 + u) for u >= 0, accurate down to u ~ 0 (log1p form)."""
    u = np.minimum(np.maximum(u, 0.0), ACOSH_ARG_MAX)
    return np.log1p(u + np.sqrt(u * (u + 2.0)))


def hyp_distance(x: np.ndarray, y: np.ndarray, zeta, validate: bool = True) -> np.ndarray:
    """Geodesic distance zeta*arccosh(-<x,y>_L / zeta^2), batched.

    Evaluated through the Minkowski form of the difference vector,
    ``-<x,y> - zeta^2 = <x-y, x-y>_L / 2``, which is algebraically the same
    argument but avoids the cancellation of the large x0*y0 product for
    nearby points.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = as_zeta(zeta)
    if validate:
        check_on_manifold(x, z)
        check_on_manifold(y, z)
    diff = x - y
    u = lorentz_inner(diff, diff) / (2.0 * z * z)
    return z * _acosh1p(u)


def log_map(x: np.ndarray, y: np.ndarray, zeta, validate: bool = True) -> np.ndarray:
    """Tangent vector at x pointing to y, with Lorentz norm d(x, y).

    x == y (distance below 1e-12) returns the zero vector rather than
    raising; the direction is undefined there and zero is the limit.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = as_zeta(zeta)
    if validate:
        check_on_manifold(x, z)
        check_on_manifold(y, z)
    diff = x - y
    u = np.maximum(lorentz_inner(diff, diff, keepdims=True) / (2.0 * z * z), 0.0)
    beta = 1.0 + u  # equals -<x,y>/zeta^2
    d = z * _acosh1p(u)
    w = y - beta * x
    # |w|_L = zeta * sqrt(beta^2 - 1) identically; computing it from u avoids
    # the cancellation of the huge components of w far from the base point
    wn = z * np.sqrt(u * (u + 2.0))
    safe = np.maximum(wn, 1e-300)
    v = np.where(d < 1e-12, 0.0, d * w / safe)
    return v


def exp_map(x: np.ndarray, v: np.ndarray, zeta, validate: bool = True) -> np.ndarray:
    """Follow the geodesic from x with initial velocity v for unit time."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = as_zeta(zeta)
    if validate:
        check_on_manifold(x, z)
        check_tangent(v, x)
    nv = lorentz_norm(v, keepdims=True)
    t = nv / z
    safe = np.maximum(nv, 1e-300)
    out = np.cosh(t) * x + z * np.sinh(t) * (v / safe)
    return np.where(nv < 1e-300, x, out)


def parallel_transport(
    x: np.ndarray, y: np.ndarray, v: np.ndarray, zeta, validate: bool = True
) -> np.ndarray:
    """Move tangent vector v from T_x to T_y along the connecting geodesic.

    P(v) = v + <y, v>_L / (zeta^2 - <x, y>_L) * (x + y); a linear isometry
    of tangent spaces.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = as_zeta(zeta)
    if validate:
        check_on_manifold(x, z)
        check_on_manifold(y, z)
        check_tangent(v, x)
    num = lorentz_inner(y, v, keepdims=True)
    den = z * z - lorentz_inner(x, y, keepdims=True)  # >= 2*zeta^2 > 0
    return v + (num / den) * (x + y)


def tangent_from_euclidean(w: np.ndarray) -> np.ndarray:
    """Lift a Euclidean vector w in R^n to (0, w), tangent at the origin."""
    w = np.asarray(w, dtype=np.float64)
    zeros = np.zeros(w.shape[:-1] + (1,), dtype=np.float64)
    return np.concatenate([zeros, w], axis=-1)


def to_hyperboloid(w: np.ndarray, zeta) -> np.ndarray:
    """Map Euclidean features to the manifold: exp at the origin of (0, w)."""
    w = np.asarray(w, dtype=np.float64)
    z = as_zeta(zeta)
    r = np.linalg.norm(w, axis=-1, keepdims=True)
    safe = np.maximum(r, 1e-300)
    x0 = z * np.cosh(r / z)
    xs = z * np.sinh(r / z) * (w / safe)
    xs = np.where(r < 1e-300, 0.0, xs)
    return np.concatenate([x0, xs], axis=-1)


def to_tangent_coords(x: np.ndarray, zeta) -> np.ndarray:
    """Spatial coordinates of log at the origin: the inverse of to_hyperboloid.

    Uses the cancellation-free radius arccosh(x0/zeta) with
    x0/zeta - 1 = |x_s|^2 / (zeta * (x0 + zeta)).
    """
    x = np.asarray(x, dtype=np.float64)
    z = as_zeta(zeta)
    xs = x[..., 1:]
    s = np.linalg.norm(xs, axis=-1, keepdims=True)
    u = s * s / (z * (x[..., :1] + z))
    d = z * _acosh1p(u)
    safe = np.maximum(s, 1e-300)
    return np.where(s < 1e-300, 0.0, d * xs / safe)


def transfer_curvature(x: np.ndarray, zeta_from, zeta_to) -> np.ndarray:
    """Carry a point to another curvature: exp_o at zeta_to of log_o at zeta_from.

    The origin's tangent space is shared across curvatures, so this keeps
    the tangent coordinates and re-wraps them on the new hyperboloid.
    """
    z0 = as_zeta(zeta_from)
    z1 = as_zeta(zeta_to)
    if z0 == z1:
        return np.asarray(x, dtype=np.float64).copy()
    return to_hyperboloid(to_tangent_coords(x, z0), z1)


def project_to_manifold(raw: np.ndarray, zeta) -> np.ndarray:
    """Renormalize after float drift: recompute x0 from the spatial part."""
    raw = np.asarray(raw, dtype=np.float64)
    z = as_zeta(zeta)
    xs = raw[..., 1:]
    if not np.all(np.isfinite(xs)):
        raise ManifoldError("non-finite spatial coordinates")
    x0 = np.sqrt(z * z + (xs * xs).sum(axis=-1, keepdims=True))
    return np.concatenate([x0, xs], axis=-1)
