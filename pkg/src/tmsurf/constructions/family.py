"""Concentrating test-function family and the lower-bound comparison it induces.

The family glues a logarithmic plateau profile of height c inside geodesic
balls of radius R*eps around a minimal orbit (R = -log eps) to the rescaled
Green function G/c outside, through an annulus where the regular remainder
psi~ is faded out by a cutoff. The gluing constant B is chosen so that the
shifted norm is exactly one; continuity at the seam then fixes
c^2 = -(1/2*pi*ell) log(R*eps) + A + (1/4*pi*ell) log(1 + pi*ell*R^2) - B.

Evaluating the exponential functional on the family from below uses the
pointwise bound e^t >= 1 + t away from the concentration balls and exact
radial quadrature of the exponential profile inside them, so the reported
value is a certified lower bound of the quadrature model.  Comparing it with
Vol + pi*ell*e^(1+4*pi*ell*A) built from the *same* fitted constant and mesh
volume makes the leading discretization errors cancel in the margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .._sums import sorted_sum
from ..geometry import GroupAction
from .green import GreenDecomposition, GreenError, UpperBound, extract_A, green_l2_norm_sq, upper_bound_value
from .moser import min_orbit_separation
from .radial import RadialModel, log_integral_exp, radial_integral

__all__ = [
    "FamilyError",
    "TestFunctionFamily",
    "build_test_family",
    "LowerBoundReport",
    "test_family_lower_bound",
]

_NORM_TOL = 1e-6
_SEAM_TOL = 1e-8
_SECANT_TOL = 1e-12
_MAX_ITER = 80


class FamilyError(RuntimeError):
    """Raised when no admissible family member exists at the requested eps."""


def _smoothstep_down(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


@dataclass(eq=False)
class TestFunctionFamily:
    eps: float
    R: float
    r_eps: float  # seam radius R*eps
    b_const: float
    c_sq: float
    mbar: float
    norm_sq: float
    seam_gap: float
    values: np.ndarray  # vertex samples of phi = eta - mbar
    dec: GreenDecomposition = field(repr=False)
    pieces: dict = field(repr=False, default_factory=dict)

    @property
    def c(self) -> float:
        return float(np.sqrt(self.c_sq))

    @property
    def mbar_c(self) -> float:
        """|mean| * height; decays like R*eps*log(R*eps) as eps -> 0."""
        return abs(self.mbar) * self.c

    def plateau(self, rho, b_const: float | None = None):
        """Profile inside the concentration balls (height c at the center)."""
        b = self.b_const if b_const is None else b_const
        ell = self.dec.ell
        q = -np.log1p(np.pi * ell * (np.asarray(rho) / self.eps) ** 2) / (4.0 * np.pi * ell) + b
        return self.c + q / self.c


def build_test_family(
    dec: GreenDecomposition,
    eps: float,
    n_quad: int = 400,
) -> TestFunctionFamily:
    """Member of the family at parameter eps, normalized to unit shifted norm.

    The norm is assembled semi-analytically: radial quadrature inside the
    balls, the integrated-by-parts identity for the outer Dirichlet energy,
    and the mesh L2 norm of G outside.  Cross terms supported on the cutoff
    annulus are of order R*eps*log(R*eps) and are dropped; they are far below
    the O(1/R^2) terms that the construction itself carries.
    """
    if dec.a_const is None:
        extract_A(dec)
    if dec.l2_sq is None:
        green_l2_norm_sq(dec)
    if not 0.0 < eps < 0.2:
        raise FamilyError(f"eps={eps} outside (0, 0.2); the profile needs R = -log eps > 1")
    ell, alpha, a_const, l2 = dec.ell, dec.alpha, dec.a_const, dec.l2_sq
    mesh, ops, model = dec.ops.mesh, dec.ops, dec.model
    vol = mesh.total_area
    R = -np.log(eps)
    r_eps = R * eps
    sep = min_orbit_separation(mesh, dec.action, dec.source)
    if 2.0 * r_eps >= 0.5 * sep or 2.0 * r_eps >= model.max_rho:
        raise FamilyError(
            f"eps={eps} too large: cutoff radius {2 * r_eps:.4g} reaches the "
            f"orbit separation scale (sep={sep:.4g})"
        )

    two_pi_ell = 2.0 * np.pi * ell
    t_seam = np.pi * ell * R * R
    t0 = -np.log(r_eps) / two_pi_ell + a_const + np.log1p(t_seam) / (2.0 * two_pi_ell)

    def g_hat(rho):
        return -np.log(rho) / two_pi_ell + a_const

    def q_log(rho):
        return -np.log1p(np.pi * ell * (rho / eps) ** 2) / (2.0 * two_pi_ell)

    def q_prime(rho):
        return -(rho / (2.0 * eps * eps)) / (1.0 + np.pi * ell * (rho / eps) ** 2)

    area_in = model.ball_area(r_eps)
    j_q = radial_integral(lambda r: q_prime(r) ** 2, 0.0, r_eps, model, n=n_quad)
    i_log = radial_integral(q_log, 0.0, r_eps, model, n=n_quad)
    i_log2 = radial_integral(lambda r: q_log(r) ** 2, 0.0, r_eps, model, n=n_quad)
    lo = r_eps * 1e-12
    i_g = radial_integral(g_hat, lo, r_eps, model, n=n_quad, log_grid=True)

    # boundary flux of the parametrix at the seam circle, ell balls in total
    kappa = model.circumference(r_eps) / (2.0 * np.pi * r_eps)
    boundary = kappa * g_hat(r_eps)

    def assemble(b: float) -> tuple[float, float, float]:
        c_sq = t0 - b
        if c_sq <= 0.0:
            raise FamilyError(
                f"eps={eps} too large: plateau height c^2 = {c_sq:.4g} <= 0 at B={b:.4g}"
            )
        i_q = i_log + b * area_in
        i_q2 = i_log2 + 2.0 * b * i_log + b * b * area_in
        c = np.sqrt(c_sq)
        mbar = ell * (c_sq * area_in + i_q - i_g) / (vol * c)
        dirichlet = (ell * j_q + boundary + (ell / vol) * i_g) / c_sq
        l2_in = ell * (c_sq * area_in + 2.0 * i_q + i_q2 / c_sq)
        norm_sq = dirichlet - alpha * l2_in + alpha * vol * mbar * mbar
        return norm_sq, mbar, c_sq

    b0 = 1.0 / (4.0 * np.pi * ell)
    try:
        f0 = assemble(b0)[0] - 1.0
    except FamilyError:
        raise FamilyError(
            f"eps={eps} too large: no admissible plateau height near B=1/(4 pi ell)"
        ) from None
    b1 = b0 + 0.05 * b0 * (1.0 if f0 < 0 else -1.0)
    f1 = assemble(b1)[0] - 1.0
    history = [(b0, f0), (b1, f1)]
    for _ in range(_MAX_ITER):
        if abs(f1) <= _SECANT_TOL or f1 == f0:
            break
        b0, f0, b1 = b1, f1, b1 - f1 * (b1 - b0) / (f1 - f0)
        f1 = assemble(b1)[0] - 1.0
        history.append((b1, f1))
    if abs(f1) > _SECANT_TOL * 1e3:
        raise FamilyError(
            f"norm equation did not converge at eps={eps}: |norm^2 - 1| = {abs(f1):.3e}; "
            f"trace={[(round(b, 6), float(f)) for b, f in history]}"
        )
    b_const = b1
    norm_sq, mbar, c_sq = assemble(b_const)
    if abs(norm_sq - 1.0) > _NORM_TOL:
        raise FamilyError(f"normalized member violates |norm^2 - 1| <= {_NORM_TOL}: {norm_sq!r}")
    c = float(np.sqrt(c_sq))

    # vertex samples; the seam agrees to machine precision by construction
    rho = dec.dist_orbit
    g_v = dec.values
    eta = g_v / c
    ann = (rho >= r_eps) & (rho < 2.0 * r_eps)
    if np.any(ann):
        zeta = _smoothstep_down(rho[ann] / r_eps - 1.0)
        eta[ann] = ((1.0 - zeta) * g_v[ann] + zeta * g_hat(rho[ann])) / c
    inner = rho < r_eps
    eta[inner] = c + (q_log(rho[inner]) + b_const) / c
    phi = eta - mbar
    seam_gap = abs((c + (q_log(r_eps) + b_const) / c) - g_hat(r_eps) / c)
    if seam_gap > _SEAM_TOL * max(1.0, c):
        raise FamilyError(f"seam mismatch {seam_gap:.3e} at r_eps={r_eps:.4g}")

    pieces = {
        "t0": float(t0),
        "j_q": float(j_q),
        "boundary": float(boundary),
        "i_g": float(i_g),
        "area_in": float(area_in),
        "l2_sq": float(l2),
        "n_quad": n_quad,
    }
    return TestFunctionFamily(
        eps=float(eps),
        R=float(R),
        r_eps=float(r_eps),
        b_const=float(b_const),
        c_sq=float(c_sq),
        mbar=float(mbar),
        norm_sq=float(norm_sq),
        seam_gap=float(seam_gap),
        values=phi,
        dec=dec,
        pieces=pieces,
    )


@dataclass(eq=False)
class LowerBoundReport:
    eps: float
    value: float
    log_value: float
    bound: UpperBound
    margin: float
    tether: float  # 4*pi*ell*|G|_2^2 / c^2, the predicted size of the margin
    margin_log_eps: float  # margin * (-log eps)
    b_const: float
    c_sq: float
    mbar_c: float
    inner_value: float
    inner_reference: float  # pi*ell*e^(1+4*pi*ell*A)
    outer_value: float
    annulus_value: float

    @property
    def tether_ratio(self) -> float:
        return self.margin / self.tether if self.tether else float("nan")


def test_family_lower_bound(fam: TestFunctionFamily, n_quad: int = 400) -> LowerBoundReport:
    """Certified-from-below value of the exponential functional on the member.

    Away from the concentration balls every lumped cell contributes
    a_v (1 + gamma phi_v^2) <= a_v e^(gamma phi_v^2); the cells of the orbit
    vertices are replaced by model disks of equal area on which the profile
    is integrated radially -- exponentially inside the seam, linearized
    outside it.  The companion upper bound uses the same fitted constant and
    the same mesh volume, so the margin isolates the 1/c^2 excess.
    """
    dec = fam.dec
    ell, model, ops = dec.ell, dec.model, dec.ops
    gamma = 4.0 * np.pi * ell
    c = fam.c
    mbar = fam.mbar

    pole_areas = ops.lumped[dec.orbit]
    if np.unique(pole_areas).size != 1:
        raise FamilyError("orbit cells are not exactly congruent; group action is inexact")
    rho_cell = model.ball_radius(float(pole_areas[0]))
    r_in = min(fam.r_eps, rho_cell)

    def log_inner(rho):
        return gamma * (fam.plateau(rho) - mbar) ** 2

    log_i_in = log_integral_exp(log_inner, 0.0, r_in, model, n=n_quad)
    inner_value = float(np.exp(log_i_in))

    annulus_value = 0.0
    if rho_cell > fam.r_eps:

        def lin_tail(rho):
            eta = dec.log_singular_model(rho) / c
            return 1.0 + gamma * (eta - mbar) ** 2

        annulus_value = float(
            radial_integral(lin_tail, fam.r_eps, rho_cell, model, n=n_quad)
        )

    mask = np.ones(ops.n, dtype=bool)
    mask[dec.orbit] = False
    phi = fam.values[mask]
    outer_value = float(
        sorted_sum(ops.lumped[mask]) + gamma * sorted_sum(ops.lumped[mask] * phi * phi)
    )

    value = outer_value + ell * (inner_value + annulus_value)
    log_value = float(
        logsumexp(
            [np.log(outer_value), np.log(ell) + log_i_in]
            + ([np.log(ell * annulus_value)] if annulus_value > 0 else [])
        )
    )
    bound = upper_bound_value(dec)
    margin = value - bound.value
    tether = gamma * dec.l2_sq / fam.c_sq
    return LowerBoundReport(
        eps=fam.eps,
        value=value,
        log_value=log_value,
        bound=bound,
        margin=margin,
        tether=float(tether),
        margin_log_eps=float(margin * fam.R),
        b_const=fam.b_const,
        c_sq=fam.c_sq,
        mbar_c=fam.mbar_c,
        inner_value=ell * inner_value,
        inner_reference=float(np.pi * ell * np.exp(1.0 + gamma * dec.a_const)),
        outer_value=outer_value,
        annulus_value=ell * annulus_value,
    )
