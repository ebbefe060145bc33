"""Discrete extrinsic geometry of periodic grid immersions of codimension 2.

An immersion is a map F of an n-torus parameter domain (n = 1 or 2) into
R^(n+2), sampled on a uniform periodic grid.  All derivatives are centered
finite differences (order 2 by default, order 4 selectable); all index
arithmetic wraps.  From the sampled positions we build

    tangents        t_i = dF/dx_i
    metric          g_ij = (t_i, t_j)
    second form     A_ij = normal projection of d^2 F/dx_i dx_j
    mean curvature  H = g^ij A_ij
    oriented frame  (nu1, nu2) spanning the 2D normal plane, nu2 = J nu1

J is the quarter-turn of the normal plane.  Its direction is fixed by the
sign convention det[t_1, ..., t_n, v, Jv] < 0 in ambient coordinates; this
is the convention under which a curve's binormal velocity is -J(kappa n) =
kappa b, and under which a product of circles S^1(a) x S^1(b) drifts with
radial rates (-1/b, +1/a).  Flip the convention and every flow runs
backwards in time, nothing else changes.

Integrals are plain Riemann sums over the parameter grid, which are
spectrally accurate for smooth periodic integrands.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateImmersionError,
    FrameDegeneracyError,
    UnsupportedDimensionError,
)

G_MIN = 1e-10          # det(g) floor below which the immersion is degenerate
H_MIN = 1e-8           # |H| floor for seeding the normal frame from H/|H|
TOL_PERP_FACTOR = 1e-6  # normality tolerance, scaled by the local |d2F|
MIN_GRID = 8


# ---------------------------------------------------------------------------
# grid containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridImmersion:
    """Uniformly sampled periodic immersion of an n-torus into R^(n+2).

    points has shape (*grid_shape, n+2); param_periods gives the parameter
    period of each grid axis (2*pi unless stated otherwise).
    """

    points: np.ndarray
    param_periods: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "param_periods", tuple(float(p) for p in self.param_periods))
        n = pts.ndim - 1
        if n not in (1, 2):
            raise UnsupportedDimensionError(f"intrinsic dimension must be 1 or 2, got {n}")
        if pts.shape[-1] != n + 2:
            raise ValueError(
                f"codimension must be 2: ambient dim {pts.shape[-1]} != {n} + 2"
            )
        if len(self.param_periods) != n:
            raise ValueError("need one parameter period per grid axis")
        if any(N < MIN_GRID for N in pts.shape[:-1]):
            raise ValueError(f"grid sizes must be >= {MIN_GRID}, got {pts.shape[:-1]}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("immersion contains non-finite points")

    @property
    def dim(self):
        return self.points.ndim - 1

    @property
    def shape(self):
        return self.points.shape[:-1]

    @property
    def ambient_dim(self):
        return self.points.shape[-1]

    @property
    def spacings(self):
        return tuple(p / N for p, N in zip(self.param_periods, self.shape))


@dataclass
class ShapeField:
    """Per-grid-point geometry bundle derived from a GridImmersion."""

    immersion: GridImmersion
    order: int
    tangents: np.ndarray        # (*s, n, d)
    metric: np.ndarray          # (*s, n, n)
    metric_inv: np.ndarray      # (*s, n, n)
    det_g: np.ndarray           # (*s,)
    sqrt_det_g: np.ndarray      # (*s,)
    second_form: np.ndarray     # (*s, n, n, d), normal-valued
    mean_curvature: np.ndarray  # (*s, d)
    rho: np.ndarray             # (*s,), |H|^2
    nu1: np.ndarray             # (*s, d)
    nu2: np.ndarray             # (*s, d), = J nu1
    tol_perp: np.ndarray        # (*s,)
    tau: np.ndarray | None = field(default=None)      # (*s, n), set by torsion_form
    tau_mask: np.ndarray | None = field(default=None)  # True where |H| < H_MIN


# ---------------------------------------------------------------------------
# immersion builders
# ---------------------------------------------------------------------------

def _param_grid(shape):
    axes = [np.arange(N) * (2.0 * np.pi / N) for N in shape]
    if len(axes) == 1:
        return axes
    return np.meshgrid(*axes, indexing="ij")


def circle_immersion(radius, n):
    """Round circle of the given radius in the z=0 plane of R^3."""
    if radius <= 0:
        raise ValueError(f"circle radius must be positive, got {radius}")
    (theta,) = _param_grid((n,))
    pts = np.stack(
        [radius * np.cos(theta), radius * np.sin(theta), np.zeros_like(theta)], axis=-1
    )
    return GridImmersion(pts, (2.0 * np.pi,))


def torus_immersion(a, b, shape):
    """Product of circles S^1(a) x S^1(b) in R^4: (a cos, a sin, b cos, b sin)."""
    if a <= 0 or b <= 0:
        raise ValueError(f"torus radii must be positive, got a={a}, b={b}")
    theta, phi = _param_grid(shape)
    pts = np.stack(
        [a * np.cos(theta), a * np.sin(theta), b * np.cos(phi), b * np.sin(phi)],
        axis=-1,
    )
    return GridImmersion(pts, (2.0 * np.pi, 2.0 * np.pi))


def perturbed_torus_immersion(a, b, eps, k1, k2, shape):
    """Product torus displaced by eps*cos(k1 t + k2 p) n1 + eps*sin(k1 t - k2 p) n2.

    The displacement breaks both circle symmetries while staying within a
    sqrt(2)*eps tube of the torus; eps must stay below min(a, b)/2.
    """
    if a <= 0 or b <= 0:
        raise ValueError(f"torus radii must be positive, got a={a}, b={b}")
    if eps >= min(a, b) / 2:
        raise ValueError(f"perturbation eps={eps} too large for radii ({a}, {b})")
    theta, phi = _param_grid(shape)
    n1 = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta), np.zeros_like(theta)], axis=-1)
    n2 = np.stack([np.zeros_like(phi), np.zeros_like(phi), np.cos(phi), np.sin(phi)], axis=-1)
    base = torus_immersion(a, b, shape).points
    c = eps * np.cos(k1 * theta + k2 * phi)
    s = eps * np.sin(k1 * theta - k2 * phi)
    return GridImmersion(base + c[..., None] * n1 + s[..., None] * n2, (2.0 * np.pi, 2.0 * np.pi))


def build_immersion(kind, shape, **params):
    """Dispatch on a surface kind name; see the individual builders."""
    if isinstance(shape, int):
        shape = (shape,)
    if kind == "circle":
        if len(shape) != 1:
            raise ValueError("circle needs a 1D grid shape")
        return circle_immersion(params.pop("R"), shape[0])
    if kind == "torus_product":
        return torus_immersion(params.pop("a"), params.pop("b"), shape)
    if kind == "perturbed_torus":
        return perturbed_torus_immersion(
            params.pop("a"), params.pop("b"), params.pop("eps"),
            params.pop("k1"), params.pop("k2"), shape,
        )
    raise ValueError(f"unknown surface kind {kind!r}")


# ---------------------------------------------------------------------------
# periodic finite differences
# ---------------------------------------------------------------------------

def diff(f, axis, h, order=2):
    """Centered first derivative along a periodic grid axis."""
    if order == 2:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * h)
    if order == 4:
        return (
            -np.roll(f, -2, axis) + 8.0 * np.roll(f, -1, axis)
            - 8.0 * np.roll(f, 1, axis) + np.roll(f, 2, axis)
        ) / (12.0 * h)
    raise ValueError(f"finite-difference order must be 2 or 4, got {order}")


def diff2(f, axis, h, order=2):
    """Centered second derivative along a periodic grid axis."""
    if order == 2:
        return (np.roll(f, -1, axis) - 2.0 * f + np.roll(f, 1, axis)) / (h * h)
    if order == 4:
        return (
            -np.roll(f, -2, axis) + 16.0 * np.roll(f, -1, axis) - 30.0 * f
            + 16.0 * np.roll(f, 1, axis) - np.roll(f, 2, axis)
        ) / (12.0 * h * h)
    raise ValueError(f"finite-difference order must be 2 or 4, got {order}")


# ---------------------------------------------------------------------------
# shape field
# ---------------------------------------------------------------------------

def project_normal(sf, X):
    """Normal-plane projection of an ambient vector field X, one vector per point.

    Projection is with respect to the discrete tangent span (Gram solve), not
    the (nu1, nu2) frame, so it stays well defined where |H| is small.
    """
    b = np.einsum("...id,...d->...i", sf.tangents, X)
    alpha = np.linalg.solve(sf.metric, b[..., None])[..., 0]
    return X - np.einsum("...i,...id->...d", alpha, sf.tangents)


def tangential_defect(sf, X):
    """Max-norm of the tangential component of X, for normality checks."""
    return np.linalg.norm(X - project_normal(sf, X), axis=-1)


def _require_normal(sf, X, what):
    defect = tangential_defect(sf, X)
    bad = defect > sf.tol_perp
    if bad.any():
        idx = np.unravel_index(np.argmax(defect - sf.tol_perp), defect.shape)
        raise ValueError(
            f"{what} is not normal to the immersion: tangential defect "
            f"{defect[idx]:.3e} > tol {sf.tol_perp[idx]:.3e} at grid index {idx}"
        )


def shape_field(imm, order=2, seed_frame=None):
    """Compute the full geometry bundle of an immersion.

    Raises DegenerateImmersionError when det(g) falls below G_MIN, naming the
    offending grid index.
    """
    pts = imm.points
    n, hs = imm.dim, imm.spacings

    tangents = np.stack([diff(pts, i, hs[i], order) for i in range(n)], axis=-2)
    metric = np.einsum("...id,...jd->...ij", tangents, tangents)
    det_g = np.linalg.det(metric)
    if det_g.min() <= G_MIN:
        idx = np.unravel_index(np.argmin(det_g), det_g.shape)
        raise DegenerateImmersionError(idx, det_g[idx])
    metric_inv = np.linalg.inv(metric)

    second = np.empty(imm.shape + (n, n, imm.ambient_dim))
    for i in range(n):
        for j in range(i, n):
            if i == j:
                dij = diff2(pts, i, hs[i], order)
            else:
                dij = diff(diff(pts, i, hs[i], order), j, hs[j], order)
            second[..., i, j, :] = dij
            second[..., j, i, :] = dij

    tol_perp = TOL_PERP_FACTOR * np.max(np.linalg.norm(second, axis=-1), axis=(-2, -1))
    tol_perp = np.maximum(tol_perp, TOL_PERP_FACTOR)

    # batched normal projection of all n^2 second derivatives at once
    flat = second.reshape(imm.shape + (n * n, imm.ambient_dim))
    b = np.einsum("...id,...md->...im", tangents, flat)
    alpha = np.linalg.solve(metric, b)
    a_flat = flat - np.einsum("...im,...id->...md", alpha, tangents)
    second_form = a_flat.reshape(second.shape)

    H = np.einsum("...ij,...ijd->...d", metric_inv, second_form)
    rho = np.einsum("...d,...d->...", H, H)

    sf = ShapeField(
        immersion=imm,
        order=order,
        tangents=tangents,
        metric=metric,
        metric_inv=metric_inv,
        det_g=det_g,
        sqrt_det_g=np.sqrt(det_g),
        second_form=second_form,
        mean_curvature=H,
        rho=rho,
        nu1=np.empty_like(H),
        nu2=np.empty_like(H),
        tol_perp=tol_perp,
    )
    nu1, nu2 = normal_frame(imm, sf, seed=seed_frame)
    sf.nu1, sf.nu2 = nu1, nu2
    return sf


# ---------------------------------------------------------------------------
# oriented normal frame and J
# ---------------------------------------------------------------------------

def _neighbors(idx, shape):
    for axis in range(len(shape)):
        for step in (-1, 1):
            nb = list(idx)
            nb[axis] = (nb[axis] + step) % shape[axis]
            yield tuple(nb)


def _transport_frame(sf, nu1, valid):
    """Fill nu1 on invalid points by breadth-first parallel transport.

    Each missing point inherits its nearest assigned neighbor's nu1, projected
    to the local normal plane and renormalized (the minimal smooth extension).
    """
    from collections import deque

    shape = sf.rho.shape
    assigned = valid.copy()
    queue = deque(zip(*np.nonzero(valid)))
    while queue:
        idx = queue.popleft()
        for nb in _neighbors(idx, shape):
            if assigned[nb]:
                continue
            w = project_normal_at(sf, nb, nu1[idx])
            norm = np.linalg.norm(w)
            if norm < 1e-12:
                continue
            nu1[nb] = w / norm
            assigned[nb] = True
            queue.append(nb)
    if not assigned.all():
        raise FrameDegeneracyError("parallel transport could not reach every masked point")
    return nu1


def project_normal_at(sf, idx, v):
    """Normal projection of a single ambient vector at one grid point."""
    t = sf.tangents[idx]
    alpha = np.linalg.solve(sf.metric[idx], t @ v)
    return v - alpha @ t


def normal_frame(imm, sf, seed=None):
    """Oriented orthonormal frame (nu1, nu2) of the normal plane, nu2 = J nu1.

    nu1 is seeded from H/|H| wherever |H| >= H_MIN; remaining points inherit
    the frame by breadth-first parallel transport, or from a supplied seed
    field when |H| is small everywhere.  The quarter-turn direction is fixed
    by det[t_1, ..., t_n, nu1, nu2] < 0 (see module docstring).
    """
    absH = np.sqrt(sf.rho)
    valid = absH >= H_MIN
    nu1 = np.zeros_like(sf.mean_curvature)
    nu1[valid] = sf.mean_curvature[valid] / absH[valid][..., None]

    if not valid.all():
        if valid.any():
            nu1 = _transport_frame(sf, nu1, valid)
        elif seed is not None:
            proj = project_normal(sf, np.broadcast_to(seed, nu1.shape).copy())
            norms = np.linalg.norm(proj, axis=-1)
            if norms.min() < 1e-12:
                raise FrameDegeneracyError("seed frame is tangential at some point")
            nu1 = proj / norms[..., None]
        else:
            raise FrameDegeneracyError(
                "|H| < h_min everywhere and no seed frame supplied"
            )

    # complete nu1 to a basis of the normal plane: best-conditioned ambient
    # axis vector, projected out of the tangents and nu1
    d = imm.ambient_dim
    eye = np.eye(d)
    candidates = []
    for k in range(d):
        e = np.broadcast_to(eye[k], nu1.shape)
        w = project_normal(sf, e)
        w = w - np.einsum("...d,...d->...", w, nu1)[..., None] * nu1
        candidates.append(w)
    cand = np.stack(candidates, axis=-2)                  # (*s, d, d)
    norms = np.linalg.norm(cand, axis=-1)                 # (*s, d)
    best = np.argmax(norms, axis=-1)
    w = np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]
    w = w / np.linalg.norm(w, axis=-1)[..., None]

    # orientation lock: det[t_1..t_n, nu1, w] must be negative
    cols = np.concatenate(
        [np.moveaxis(sf.tangents, -2, -1), nu1[..., None], w[..., None]], axis=-1
    )
    sign = np.linalg.det(cols)
    w = np.where(sign[..., None] > 0, -w, w)
    return nu1, w


def apply_j(sf, v):
    """Quarter-turn J of a normal vector field: J(a nu1 + b nu2) = a nu2 - b nu1."""
    a = np.einsum("...d,...d->...", v, sf.nu1)
    b = np.einsum("...d,...d->...", v, sf.nu2)
    return a[..., None] * sf.nu2 - b[..., None] * sf.nu1


# ---------------------------------------------------------------------------
# derived operators
# ---------------------------------------------------------------------------

def normal_derivative(sf, X, axis):
    """Normal connection applied to a normal field: project(dX/dx_axis)."""
    h = sf.immersion.spacings[axis]
    return project_normal(sf, diff(X, axis, h, sf.order))


def grid_integral(imm, values):
    """Riemann sum of a per-point scalar over the parameter grid."""
    cell = float(np.prod(imm.spacings))
    return float(np.sum(values) * cell)


def integrate_density(sf, values):
    """Integral of a scalar against the Riemannian volume, sum(v sqrt(g)) h^n."""
    return grid_integral(sf.immersion, values * sf.sqrt_det_g)


def willmore_energy(imm, sf=None, order=2):
    """Total squared mean curvature, integral of |H|^2 dvol."""
    if sf is None:
        sf = shape_field(imm, order=order)
    return integrate_density(sf, sf.rho)


def torsion_form(imm, sf):
    """Torsion 1-form of the normalized mean-curvature frame, chi = 2 tau^sharp.

    tau_i measures the rotation rate of (h, Jh), h = H/|H|, along the i-th
    coordinate: tau_i = -(D_i h, J h), i.e. the pairing uses the transpose
    rotation -J.  This is the sign under which tau reduces to the classical
    torsion of a space curve (and the curvature-density transport below runs
    the right way); pairing with +J instead negates tau and chi.

    Points with |H| < H_MIN are masked (NaN components, mask returned on the
    shape field as tau_mask); the frame rotation rate is undefined there.
    """
    absH = np.sqrt(sf.rho)
    mask = absH < H_MIN
    safe = np.where(mask, 1.0, absH)
    h_sec = sf.mean_curvature / safe[..., None]
    jh = apply_j(sf, h_sec)
    n = imm.dim
    tau = np.stack(
        [-np.einsum("...d,...d->...", normal_derivative(sf, h_sec, i), jh) for i in range(n)],
        axis=-1,
    )
    if mask.any():
        tau[mask] = np.nan
    chi = 2.0 * np.einsum("...ij,...j->...i", sf.metric_inv, tau)
    sf.tau = tau
    sf.tau_mask = mask
    return tau, chi


def normal_laplacian(imm, sf, V):
    """Connection Laplacian in the normal bundle with the metric correction.

    Delta_perp V = g^ij (D_i D_j V - Gamma^k_ij D_k V), where D is the
    normal-projected coordinate derivative.  Dropping the Christoffel term
    breaks the energy-gradient identity on non-flat parameter metrics.
    """
    _require_normal(sf, V, "normal_laplacian input")
    n = imm.dim
    first = [normal_derivative(sf, V, j) for j in range(n)]
    second = np.empty(sf.metric.shape + V.shape[-1:])
    for i in range(n):
        for j in range(n):
            second[..., i, j, :] = normal_derivative(sf, first[j], i)
    gamma = _christoffel(sf)
    corr = np.einsum("...kij,...kd->...ijd", gamma, np.stack(first, axis=-2))
    return np.einsum("...ij,...ijd->...d", sf.metric_inv, second - corr)


def _christoffel(sf):
    """Gamma^k_ij = 0.5 g^kl (d_i g_lj + d_j g_li - d_l g_ij), (*s, k, i, j)."""
    n, hs = sf.immersion.dim, sf.immersion.spacings
    dg = np.stack([diff(sf.metric, l, hs[l], sf.order) for l in range(n)], axis=-3)
    # dg[..., l, i, j] = d_l g_ij
    t1 = np.einsum("...ilj->...lij", dg)   # d_i g_lj
    t2 = np.einsum("...jli->...lij", dg)   # d_j g_li
    t3 = dg                                 # d_l g_ij
    return 0.5 * np.einsum("...kl,...lij->...kij", sf.metric_inv, t1 + t2 - t3)


def willmore_gradient(imm, sf):
    """L2 gradient of the Willmore energy with respect to normal variations.

    Returns the full gradient; half of it is
        Delta_perp H + g^ik g^jl (A_ij, H) A_kl - 0.5 |H|^2 H.
    """
    lap = normal_laplacian(imm, sf, sf.mean_curvature)
    s = np.einsum("...ijd,...d->...ij", sf.second_form, sf.mean_curvature)
    quad = np.einsum("...ik,...jl,...ij,...kld->...d", sf.metric_inv, sf.metric_inv,
                     s, sf.second_form)
    half = lap + quad - 0.5 * sf.rho[..., None] * sf.mean_curvature
    return 2.0 * half


def _curvature_source_scalar(sf):
    """-2 g^ik g^jl (A_ij, H)(A_kl, JH) at every grid point."""
    jh = apply_j(sf, sf.mean_curvature)
    s = np.einsum("...ijd,...d->...ij", sf.second_form, sf.mean_curvature)
    p = np.einsum("...ijd,...d->...ij", sf.second_form, jh)
    return -2.0 * np.einsum("...ik,...jl,...ij,...kl->...", sf.metric_inv, sf.metric_inv, s, p)


def source_term(imm, sf):
    """Source of the curvature-density continuity equation, per grid point."""
    return _curvature_source_scalar(sf)


def energy_derivative_integrand(imm, sf):
    """Density whose integral is d/dt of the Willmore energy under the flow.

    Returns (integrand * sqrt(det g), integral); the pointwise scalar is the
    same as source_term, so the two quadratures agree identically.
    """
    density = _curvature_source_scalar(sf) * sf.sqrt_det_g
    return density, grid_integral(imm, density)


# ---------------------------------------------------------------------------
# normal-bundle curvature vs the torsion form
# ---------------------------------------------------------------------------

def _edge_integrals(tau, spacings):
    """Trapezoid edge integrals of a point-sampled 1-form on the 2D grid."""
    h1, h2 = spacings
    e1 = 0.5 * h1 * (tau[..., 0] + np.roll(tau[..., 0], -1, axis=0))
    e2 = 0.5 * h2 * (tau[..., 1] + np.roll(tau[..., 1], -1, axis=1))
    return e1, e2


def _plaquette_curl(e1, e2, spacings):
    """Discrete exterior derivative on plaquettes from edge integrals.

    Exactly annihilates edge-level differences phi[i+1]-phi[i], i.e. d(d phi)
    = 0 holds to machine precision at this level.
    """
    h1, h2 = spacings
    circ = (
        e1 + np.roll(e2, -1, axis=0) - np.roll(e1, -1, axis=1) - e2
    )
    return circ / (h1 * h2)


def normal_curvature_check(imm, sf):
    """Compare d(tau) with the normal-bundle curvature on grid plaquettes.

    The curvature side is read off from the commutator of normal-projected
    derivatives applied to nu1, against nu2, with the sign for which the two
    fields cancel: returns (dtau, r_perp, max |dtau + r_perp|).
    """
    if imm.dim != 2:
        raise UnsupportedDimensionError("plaquette 2-forms need a 2D grid")
    if sf.tau is None:
        torsion_form(imm, sf)
    if sf.tau_mask is not None and sf.tau_mask.any():
        raise FrameDegeneracyError("torsion form is masked; curvature check unavailable")

    e1, e2 = _edge_integrals(sf.tau, imm.spacings)
    dtau = _plaquette_curl(e1, e2, imm.spacings)

    d0d1 = normal_derivative(sf, normal_derivative(sf, sf.nu1, 1), 0)
    d1d0 = normal_derivative(sf, normal_derivative(sf, sf.nu1, 0), 1)
    r_perp_pts = np.einsum("...d,...d->...", d0d1 - d1d0, sf.nu2)
    # interpolate the point values to plaquette centers
    r_perp = 0.25 * (
        r_perp_pts
        + np.roll(r_perp_pts, -1, axis=0)
        + np.roll(r_perp_pts, -1, axis=1)
        + np.roll(np.roll(r_perp_pts, -1, axis=0), -1, axis=1)
    )
    resid = float(np.max(np.abs(dtau + r_perp)))
    return dtau, r_perp, resid


# ---------------------------------------------------------------------------
# Marsden-Weinstein pairing
# ---------------------------------------------------------------------------

def mw_pairing(imm, u, v, sf=None, order=2):
    """Pairing of two ambient vector fields: integral of det[u, v, t_1..t_n] dx."""
    if sf is None:
        sf = shape_field(imm, order=order)
    cols = np.concatenate(
        [u[..., None], v[..., None], np.moveaxis(sf.tangents, -2, -1)], axis=-1
    )
    return grid_integral(imm, np.linalg.det(cols))


# ---------------------------------------------------------------------------
# scalar Laplace-Beltrami and metric divergence (used by the membrane module)
# ---------------------------------------------------------------------------

def metric_divergence(sf, vec):
    """(1/sqrt g) d_i (sqrt g X^i) for contravariant components vec (*s, n)."""
    n, hs = sf.immersion.dim, sf.immersion.spacings
    acc = np.zeros_like(sf.sqrt_det_g)
    for i in range(n):
        acc = acc + diff(sf.sqrt_det_g * vec[..., i], i, hs[i], sf.order)
    return acc / sf.sqrt_det_g


def laplace_beltrami(sf, scalar):
    """Scalar Laplacian of the induced metric in divergence form."""
    n, hs = sf.immersion.dim, sf.immersion.spacings
    grad = np.stack([diff(scalar, i, hs[i], sf.order) for i in range(n)], axis=-1)
    flux = np.einsum("...ij,...j->...i", sf.metric_inv, grad)
    return metric_divergence(sf, flux)


# ---------------------------------------------------------------------------
# snapshot I/O
# ---------------------------------------------------------------------------

def save_immersion(imm, path):
    """Write the text snapshot: header lines, then one row per grid point.

    Rows are in row-major multi-index order, columns are the ambient
    coordinates at 17 significant digits.
    """
    lines = [
        f"dim {imm.dim}",
        "shape " + " ".join(str(N) for N in imm.shape),
        "param_periods " + " ".join(f"{p:.17g}" for p in imm.param_periods),
        f"ambient {imm.ambient_dim}",
    ]
    flat = imm.points.reshape(-1, imm.ambient_dim)
    lines.extend(" ".join(f"{x:.17g}" for x in row) for row in flat)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_immersion(path):
    """Read a snapshot written by save_immersion."""
    with open(path) as fh:
        header = {}
        data_start = 0
        lines = fh.read().splitlines()
    for k, line in enumerate(lines):
        key, *rest = line.split()
        if key in ("dim", "shape", "param_periods", "ambient"):
            header[key] = rest
            data_start = k + 1
        else:
            break
    dim = int(header["dim"][0])
    shape = tuple(int(x) for x in header["shape"])
    periods = tuple(float(x) for x in header["param_periods"])
    ambient = int(header["ambient"][0])
    if len(shape) != dim or ambient != dim + 2:
        raise ValueError(f"inconsistent snapshot header: {header}")
    rows = np.array([[float(x) for x in line.split()] for line in lines[data_start:]])
    pts = rows.reshape(shape + (ambient,))
    return GridImmersion(pts, periods)


def export_shape_field(sf, path):
    """Write the geometry bundle as CSV, one named column per component."""
    imm = sf.immersion
    n, d = imm.dim, imm.ambient_dim
    cols = []
    names = []
    for i in range(n):
        for j in range(i, n):
            names.append(f"g_{i+1}{j+1}")
            cols.append(sf.metric[..., i, j])
    names.append("det_g")
    cols.append(sf.det_g)
    for i in range(n):
        for j in range(i, n):
            for c in range(d):
                names.append(f"A_{i+1}{j+1}_x{c+1}")
                cols.append(sf.second_form[..., i, j, c])
    for c in range(d):
        names.append(f"H_x{c+1}")
        cols.append(sf.mean_curvature[..., c])
    for c in range(d):
        names.append(f"nu1_x{c+1}")
        cols.append(sf.nu1[..., c])
    for c in range(d):
        names.append(f"nu2_x{c+1}")
        cols.append(sf.nu2[..., c])
    if sf.tau is not None:
        for i in range(n):
            names.append(f"tau_{i+1}")
            cols.append(sf.tau[..., i])
    names.append("rho")
    cols.append(sf.rho)
    table = np.stack([c.reshape(-1) for c in cols], axis=-1)
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in table:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
