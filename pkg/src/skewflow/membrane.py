"""Grid evolution of 2D membranes in R^4 under the skew-mean-curvature flow.

Markers move with velocity -J H (purely normal), so marker labels double as
surface coordinates for the whole run: marker-time derivatives of geometric
fields ARE normal-time derivatives up to truncation, and no tangential
correction is applied.  There is no remeshing; the solver is only warranted
for the short horizons where analytic oracles exist.

Besides the flow itself, this module assembles the diagnostic residuals of
the membrane analogues of the 1D curvature/torsion system:

    continuity   d/dt rho + div(rho chi) = -2 g^ik g^jl (A_ij, H)(A_kl, JH)
    contracted   d/dt_perp H + 2 g^ij tau_i D_j H + (div tau^sharp) H
                     = -g^ik g^jl (A_kl, JH) A_ij
    momentum     d/dt tau_i + grad_i |tau|^2 - grad_i(Lap|H| / |H|)
                     = +grad_i( g^mk g^jl (A_mj,JH)(A_kl,JH) / |H|^2 )
                       + g^kl/|H|^2 [ (A_ik,H)(D_l JH, JH) - (A_il,JH)(D_k JH, H) ]
    energy rate  d/dt W = -2 int g^ik g^jl (A_ij,H)(A_kl,JH) dvol

Time derivatives in the residuals are centered 3-point differences across
consecutive snapshots, matching the O(dt^2) budget of the RK4 snapshots.
"""

from dataclasses import dataclass

import numpy as np

from . import diffgeo as dg
from .errors import DegenerateImmersionError, EvolutionAbort

RK4_IMAG_STABILITY = 2.0   # conservative fraction of the RK4 imaginary-axis limit
_FD_SECOND_MAX = {2: 4.0, 4: 16.0 / 3.0}


@dataclass
class MembraneTrajectory:
    times: np.ndarray            # strictly increasing snapshot times
    snapshots: list              # GridImmersion per time
    order: int = 2               # finite-difference order used throughout

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        if len(self.snapshots) != self.times.size:
            raise ValueError("one snapshot per time required")

    def fields(self, i):
        return dg.shape_field(self.snapshots[i], order=self.order)


def smc_rhs(imm, order=2, sf=None):
    """Marker velocity -J H per grid point."""
    if sf is None:
        sf = dg.shape_field(imm, order=order)
    return -dg.apply_j(sf, sf.mean_curvature)


def stability_limit(imm, order=2, sf=None):
    """Estimated RK4 step bound for the dispersive (Schrodinger-like) flow.

    The stiffest linearized mode oscillates at roughly
    c_ord * sum_i max(g^ii) / h_i^2 with c_ord the peak symbol of the second
    difference; the usable step is a conservative fraction of 2.83 over that.
    """
    if sf is None:
        sf = dg.shape_field(imm, order=order)
    lam = sum(
        _FD_SECOND_MAX[order] * sf.metric_inv[..., i, i].max() / imm.spacings[i] ** 2
        for i in range(imm.dim)
    )
    return RK4_IMAG_STABILITY / lam


def evolve_membrane(imm, dt, t_final, stride=1, order=2):
    """RK4 Lagrangian-marker evolution, snapshots every `stride` steps.

    Raises ValueError for a step size above the stability estimate, and
    EvolutionAbort (carrying the last snapshot) on metric degeneration or
    non-finite coordinates.
    """
    nsteps = int(round(t_final / dt))
    if abs(nsteps * dt - t_final) > 1e-12 * max(1.0, t_final):
        raise ValueError("t_final must be an integer number of steps")
    if nsteps % stride != 0:
        raise ValueError("step count must be a multiple of the output stride")
    dt_max = stability_limit(imm, order=order)
    if dt > dt_max:
        raise ValueError(f"dt={dt:.3e} above the stability estimate {dt_max:.3e}")

    periods = imm.param_periods
    pts = imm.points.copy()

    def rhs(p):
        return smc_rhs(dg.GridImmersion(p, periods), order=order)

    times = [0.0]
    snaps = [dg.GridImmersion(pts.copy(), periods)]
    for step in range(1, nsteps + 1):
        t = step * dt
        try:
            k1 = rhs(pts)
            k2 = rhs(pts + 0.5 * dt * k1)
            k3 = rhs(pts + 0.5 * dt * k2)
            k4 = rhs(pts + dt * k3)
        except DegenerateImmersionError as exc:
            raise EvolutionAbort(
                f"metric degenerated inside a step: {exc}", t, snaps[-1]
            ) from exc
        pts = pts + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(pts)):
            raise EvolutionAbort("non-finite coordinates", t, snaps[-1])
        if step % stride == 0:
            times.append(t)
            snaps.append(dg.GridImmersion(pts.copy(), periods))
            if dt > stability_limit(snaps[-1], order=order):
                raise EvolutionAbort(
                    "dt no longer within the stability estimate", t, snaps[-1]
                )
    return MembraneTrajectory(np.array(times), snaps, order=order)


def extract_radii(imm):
    """Mean norms of the two coordinate pairs; exact radii on torus-like data."""
    pts = imm.points
    a = float(np.mean(np.hypot(pts[..., 0], pts[..., 1])))
    b = float(np.mean(np.hypot(pts[..., 2], pts[..., 3])))
    return a, b


def _triple(traj, i, fields=None):
    if not 0 < i < len(traj.snapshots) - 1:
        raise IndexError("residuals need snapshots on both sides of i")
    if fields is None:
        fields = (traj.fields(i - 1), traj.fields(i), traj.fields(i + 1))
    span = traj.times[i + 1] - traj.times[i - 1]
    return fields, span


def continuity_residual(traj, i, fields=None):
    """Pointwise residual of the curvature-density continuity equation at
    snapshot i: centered d/dt of rho + div(rho chi) - source.

    Points where |H| is masked (and their stencil neighbors) carry NaN in the
    returned field and are excluded from the max norm.
    """
    (sfm, sf0, sfp), span = _triple(traj, i, fields)
    d_rho = (sfp.rho - sfm.rho) / span
    tau, chi = dg.torsion_form(sf0.immersion, sf0)
    div = dg.metric_divergence(sf0, sf0.rho[..., None] * chi)
    resid = d_rho + div - dg.source_term(sf0.immersion, sf0)
    return resid, float(np.nanmax(np.abs(resid)))


def corollary_residual(traj, i, fields=None):
    """Normal-vector residual of the contracted continuity form at snapshot i."""
    (sfm, sf0, sfp), span = _triple(traj, i, fields)
    dH = dg.project_normal(sf0, (sfp.mean_curvature - sfm.mean_curvature) / span)
    tau, _ = dg.torsion_form(sf0.immersion, sf0)
    gradH = np.stack(
        [dg.normal_derivative(sf0, sf0.mean_curvature, j) for j in range(2)], axis=-2
    )
    advect = 2.0 * np.einsum("...ij,...i,...jd->...d", sf0.metric_inv, tau, gradH)
    div_tau = dg.metric_divergence(
        sf0, np.einsum("...ij,...j->...i", sf0.metric_inv, tau)
    )
    jh = dg.apply_j(sf0, sf0.mean_curvature)
    p = np.einsum("...ijd,...d->...ij", sf0.second_form, jh)
    quad = np.einsum(
        "...ik,...jl,...kl,...ijd->...d",
        sf0.metric_inv, sf0.metric_inv, p, sf0.second_form,
    )
    resid = dH + advect + div_tau[..., None] * sf0.mean_curvature + quad
    return resid, float(np.nanmax(np.linalg.norm(resid, axis=-1)))


def momentum_residual(traj, i, fields=None):
    """Covector residual of the torsion momentum equation at snapshot i.

    The equation checked is

        d/dt tau_i + grad_i |tau|^2 - grad_i(Lap|H|/|H|)
            = +grad_i( g^mk g^jl (A_mj,JH)(A_kl,JH) / |H|^2 )
              + g^kl/|H|^2 [ (A_ik,H)(D_l JH, JH) - (A_il,JH)(D_k JH, H) ],

    derived from the time-space curvature of the normal bundle along the
    flow.  Note the plus sign on the squared-form gradient: with a minus
    sign the residual stops converging on evolved non-symmetric data while
    still vanishing on products of circles (where that scalar is constant),
    which is how the sign was pinned; see tests/test_membrane.py.
    """
    (sfm, sf0, sfp), span = _triple(traj, i, fields)
    imm = sf0.immersion
    n, hs = imm.dim, imm.spacings

    taum, _ = dg.torsion_form(sfm.immersion, sfm)
    tau0, _ = dg.torsion_form(imm, sf0)
    taup, _ = dg.torsion_form(sfp.immersion, sfp)
    d_tau = (taup - taum) / span

    def grad(scalar):
        return np.stack([dg.diff(scalar, k, hs[k], sf0.order) for k in range(n)], axis=-1)

    tau_sq = np.einsum("...ij,...i,...j->...", sf0.metric_inv, tau0, tau0)
    absH = np.sqrt(sf0.rho)
    lap_term = grad(dg.laplace_beltrami(sf0, absH) / absH)

    jh = dg.apply_j(sf0, sf0.mean_curvature)
    p = np.einsum("...ijd,...d->...ij", sf0.second_form, jh)      # (A_ij, JH)
    s = np.einsum("...ijd,...d->...ij", sf0.second_form, sf0.mean_curvature)
    q = np.einsum("...mk,...jl,...mj,...kl->...", sf0.metric_inv, sf0.metric_inv, p, p)
    grad_q = grad(q / sf0.rho)

    djh = np.stack([dg.normal_derivative(sf0, jh, k) for k in range(n)], axis=-2)
    u = np.einsum("...ld,...d->...l", djh, jh)                    # (D_l JH, JH)
    w = np.einsum("...kd,...d->...k", djh, sf0.mean_curvature)    # (D_k JH, H)
    frame_term = (
        np.einsum("...kl,...ik,...l->...i", sf0.metric_inv, s, u)
        - np.einsum("...kl,...il,...k->...i", sf0.metric_inv, p, w)
    ) / sf0.rho[..., None]

    resid = d_tau + grad(tau_sq) - lap_term - grad_q - frame_term
    return resid, float(np.nanmax(np.abs(resid)))


def energy_identity_check(traj, i, fields=None):
    """(lhs, rhs, gap): centered d/dt of the Willmore energy vs the rate integral."""
    (sfm, sf0, sfp), span = _triple(traj, i, fields)
    wm = dg.willmore_energy(sfm.immersion, sfm)
    wp = dg.willmore_energy(sfp.immersion, sfp)
    lhs = (wp - wm) / span
    _, rhs = dg.energy_derivative_integrand(sf0.immersion, sf0)
    return lhs, rhs, lhs - rhs


def max_frame_rotation(traj):
    """Largest per-step rotation angle of nu1 along the trajectory.

    Values below pi/2 certify the frame never flips between snapshots.
    """
    worst = 0.0
    prev = traj.fields(0)
    for i in range(1, len(traj.snapshots)):
        cur = traj.fields(i)
        cosang = np.clip(np.einsum("...d,...d->...", prev.nu1, cur.nu1), -1.0, 1.0)
        worst = max(worst, float(np.max(np.arccos(cosang))))
        prev = cur
    return worst


def diagnostics(traj):
    """Per-snapshot table: t, willmore, volume, extracted radii, max residuals.

    Residual columns need both neighbors and are NaN at the endpoints.
    """
    m = len(traj.snapshots)
    cols = {
        key: np.full(m, np.nan)
        for key in (
            "t", "willmore", "volume", "a_extracted", "b_extracted",
            "max_continuity_residual", "max_momentum_residual", "energy_gap",
        )
    }
    fields = [traj.fields(i) for i in range(m)]
    for i, sf in enumerate(fields):
        cols["t"][i] = traj.times[i]
        cols["willmore"][i] = dg.willmore_energy(sf.immersion, sf)
        cols["volume"][i] = dg.integrate_density(sf, np.ones_like(sf.rho))
        a, b = extract_radii(sf.immersion)
        cols["a_extracted"][i] = a
        cols["b_extracted"][i] = b
    for i in range(1, m - 1):
        triple = (fields[i - 1], fields[i], fields[i + 1])
        cols["max_continuity_residual"][i] = continuity_residual(traj, i, triple)[1]
        cols["max_momentum_residual"][i] = momentum_residual(traj, i, triple)[1]
        cols["energy_gap"][i] = energy_identity_check(traj, i, triple)[2]
    return cols
