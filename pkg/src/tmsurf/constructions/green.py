"""Invariant Green functions of the shifted operator and their regular parts.

G solves (K - alpha M) G = b with b carrying weight 1/ell at every vertex of
the source orbit minus the uniform density, so that the load is balanced.
Near the source, G = -(1/2*pi*ell) log(rho) + A + psi~ with psi~(x0) = 0; the
constant A drives the closed-surface upper bound Vol + pi*ell*e^(1+4*pi*ell*A).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .._sums import sorted_sum
from ..discretization import FemOperators, NormParams, orbit_reduction, project_invariant_meanzero
from ..geometry import GroupAction, geodesic_distance, max_radius, mean_edge_length
from ..spectrum import ComplementSpace
from .radial import RadialModel, radial_integral, radial_model

__all__ = [
    "GreenError",
    "GreenDecomposition",
    "green_solve",
    "extract_A",
    "richardson_pair",
    "green_l2_norm_sq",
    "UpperBound",
    "upper_bound_formula",
    "upper_bound_value",
    "invariant_shifted_solver",
]

_RESIDUAL_TOL = 1e-10


class GreenError(RuntimeError):
    pass


def invariant_shifted_solver(
    ops: FemOperators, action: GroupAction, alpha: float
) -> Callable[[np.ndarray], np.ndarray]:
    """Factorized solver for (K - alpha M) u = b on the orbit-constant subspace.

    For alpha = 0 the operator is singular along constants; the factorization
    then carries a mean-zero multiplier row, which leaves balanced loads
    (sum b = 0) unchanged. Invariance of the solution is exact because the
    solve happens on orbit unknowns.
    """
    red = orbit_reduction(ops, action)
    shifted = (red.stiffness - alpha * red.mass).tocsc()
    if alpha == 0.0:
        w = red.areas.reshape(-1, 1)
        kkt = sp.bmat([[shifted, sp.csc_matrix(w)], [sp.csc_matrix(w.T), None]], format="csc")
        lu = spla.splu(kkt)

        def solve(b_full: np.ndarray) -> np.ndarray:
            rhs = np.append(red.reduce(b_full), 0.0)
            return red.expand(lu.solve(rhs)[:-1])

        return solve
    try:
        lu = spla.splu(shifted)
    except RuntimeError as exc:
        raise GreenError(f"shifted operator is singular at alpha={alpha}: {exc}") from exc

    def solve(b_full: np.ndarray) -> np.ndarray:
        return red.expand(lu.solve(red.reduce(b_full)))

    return solve


@dataclass(eq=False)
class GreenDecomposition:
    values: np.ndarray
    source: int
    orbit: np.ndarray
    alpha: float
    ell: int
    residual: float
    dist_source: np.ndarray  # geodesic distance from the source vertex
    dist_orbit: np.ndarray  # min geodesic distance over the source orbit
    ops: FemOperators = field(repr=False)
    action: GroupAction = field(repr=False)
    a_const: float | None = None
    a_fit_residual: float | None = None
    a_annulus: tuple[float, float] | None = None
    psi_indices: np.ndarray | None = field(default=None, repr=False)
    psi_values: np.ndarray | None = field(default=None, repr=False)
    psi_coeffs: tuple[float, float, float, float] | None = None  # rho^2, rho^2 log, rho^4, rho^4 log
    l2_sq: float | None = None

    @property
    def model(self) -> RadialModel:
        return radial_model(self.ops.mesh)

    def log_singular_model(self, rho):
        """-(1/2*pi*ell) log(rho) + A, the radial profile with psi~ removed."""
        if self.a_const is None:
            raise GreenError("regular constant not extracted yet")
        return -np.log(rho) / (2.0 * np.pi * self.ell) + self.a_const

    def psi_model(self, rho):
        """Fitted even-parametrix expansion of psi~ near the source."""
        if self.psi_coeffs is None:
            raise GreenError("regular constant not extracted yet")
        c2, c2l, c4, c4l = self.psi_coeffs
        rho = np.asarray(rho, dtype=float)
        r2 = rho * rho
        log_r = np.log(np.where(rho > 0, rho, 1.0))
        return r2 * (c2 + c2l * log_r) + r2 * r2 * (c4 + c4l * log_r)

    def psi_model_deriv(self, rho):
        if self.psi_coeffs is None:
            raise GreenError("regular constant not extracted yet")
        c2, c2l, c4, c4l = self.psi_coeffs
        rho = np.asarray(rho, dtype=float)
        log_r = np.log(np.where(rho > 0, rho, 1.0))
        return rho * (2.0 * c2 + c2l * (2.0 * log_r + 1.0)) + rho**3 * (
            4.0 * c4 + c4l * (4.0 * log_r + 1.0)
        )


def green_solve(
    ops: FemOperators,
    action: GroupAction,
    source: int,
    params: NormParams,
    complement: ComplementSpace | None = None,
) -> GreenDecomposition:
    """Solve the orbit-source Green problem and package the decomposition."""
    n = ops.n
    if not 0 <= source < n:
        raise GreenError(f"source vertex {source} out of range")
    orbit = np.flatnonzero(action.orbit_index == action.orbit_index[source])
    ell = len(orbit)
    if ell != action.min_orbit_size:
        warnings.warn(
            f"source {source} lies on a non-minimal orbit (size {ell} > "
            f"{action.min_orbit_size}); the sharp-constant statements use minimal orbits",
            stacklevel=2,
        )
    b = -ops.lumped / ops.mesh.total_area
    b[orbit] += 1.0 / ell
    if complement is not None and complement.removed:
        basis = complement.basis
        b = b - (ops.mass @ basis) @ basis[source]
    g = invariant_shifted_solver(ops, action, params.alpha)(b)
    g = project_invariant_meanzero(g, ops, action)
    if complement is not None and complement.removed:
        g = complement.project(g)
    res = np.linalg.norm(ops.stiffness @ g - params.alpha * (ops.mass @ g) - b)
    if res > _RESIDUAL_TOL * max(1.0, float(np.linalg.norm(b))):
        raise GreenError(f"Green solve residual {res:.3e} exceeds {_RESIDUAL_TOL:.0e}")
    fields = [geodesic_distance(ops.mesh, int(p)).distances for p in orbit]
    dist_orbit = np.min(np.stack(fields), axis=0)
    dist_source = fields[int(np.flatnonzero(orbit == source)[0])]
    return GreenDecomposition(
        values=g,
        source=int(source),
        orbit=orbit,
        alpha=params.alpha,
        ell=ell,
        residual=float(res),
        dist_source=dist_source,
        dist_orbit=dist_orbit,
        ops=ops,
        action=action,
    )


def extract_A(dec: GreenDecomposition, annulus: tuple[float, float] = (5.0, 20.0)) -> float:
    """Regular constant from a least-squares fit over a mesh-scaled annulus.

    Fits G + (1/2*pi*ell) log(rho) over annulus[0]*h <= rho <= annulus[1]*h
    against {1, displacement, rho^2, rho^2 log rho, rho^4, rho^4 log rho}.
    The displacement columns absorb the gradient of psi~ at the source; the
    even radial columns match the parametrix expansion of psi~, whose
    curvature would otherwise leak into the constant over so wide a window.
    All columns vanish at the source, so the constant is the extrapolated
    value there.
    """
    mesh = dec.ops.mesh
    h = mean_edge_length(mesh)
    lo, hi = annulus[0] * h, annulus[1] * h
    if hi >= max_radius(mesh):
        raise GreenError(f"fit annulus outer radius {hi:.3g} reaches past the surface scale")
    others = dec.orbit[dec.orbit != dec.source]
    if others.size and float(np.min(dec.dist_source[others])) <= hi:
        raise GreenError("fit annulus contains another source point; refine the mesh")
    rho = dec.dist_source
    sel = np.flatnonzero((rho >= lo) & (rho <= hi))
    if sel.size < 12:
        raise GreenError(f"only {sel.size} vertices in the fit annulus; refine the mesh")
    y = dec.values[sel] + np.log(rho[sel]) / (2.0 * np.pi * dec.ell)
    disp = _displacements(mesh, dec.source, sel)
    r2 = (rho[sel] / hi) ** 2  # normalized for conditioning
    log_r = np.log(rho[sel])
    basis = np.column_stack(
        [np.ones(sel.size), disp / hi, r2, r2 * log_r, r2 * r2, r2 * r2 * log_r]
    )
    coef, _, _, _ = np.linalg.lstsq(basis, y, rcond=None)
    fit = basis @ coef
    dec.a_const = float(coef[0])
    dec.a_fit_residual = float(np.sqrt(np.mean((y - fit) ** 2)))
    dec.a_annulus = (lo, hi)
    dec.psi_indices = sel
    dec.psi_values = y - dec.a_const  # psi~ samples: remainder after the constant
    hi2 = hi * hi
    dec.psi_coeffs = (
        float(coef[-4] / hi2),
        float(coef[-3] / hi2),
        float(coef[-2] / hi2**2),
        float(coef[-1] / hi2**2),
    )
    return dec.a_const


def _displacements(mesh, source: int, sel: np.ndarray) -> np.ndarray:
    if mesh.surface_kind == "torus":
        nx, ny = mesh.grid_shape
        spacing = np.array([mesh.periods[0] / nx, mesh.periods[1] / ny])
        d = mesh.grid_index[sel] - mesh.grid_index[source]
        d = (d + [nx // 2, ny // 2]) % [nx, ny] - [nx // 2, ny // 2]
        return d * spacing
    return mesh.vertices[sel] - mesh.vertices[source]


def richardson_pair(a_coarse: float, a_fine: float) -> float:
    """Second-order extrapolation from a mesh-level pair (h halves per level)."""
    return (4.0 * a_fine - a_coarse) / 3.0


def green_l2_norm_sq(dec: GreenDecomposition) -> float:
    """Mesh L2 norm of G with the singular cells integrated radially.

    The source vertices and their one-ring neighbours are excluded from the
    lumped sum; their total area is matched to model disks around the sources,
    on which the log-singular radial profile is integrated exactly. The psi~
    contribution inside the disks is O(rho_ex^2 log rho_ex) and dropped.
    """
    if dec.a_const is None:
        raise GreenError("extract the regular constant before the L2 norm")
    mesh = dec.ops.mesh
    tris = mesh.triangles
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[dec.orbit] = True
    touching = mask[tris].any(axis=1)
    excl = np.zeros(mesh.n_vertices, dtype=bool)
    excl[np.unique(tris[touching])] = True
    area_excl = sorted_sum(dec.ops.lumped[excl])
    model = dec.model
    rho_ex = model.ball_radius(area_excl / dec.ell)
    mesh_part = sorted_sum(dec.ops.lumped[~excl] * dec.values[~excl] ** 2)
    disk_part = dec.ell * radial_integral(
        lambda rho: dec.log_singular_model(rho) ** 2,
        rho_ex * 1e-12,
        rho_ex,
        model,
        log_grid=True,
    )
    dec.l2_sq = float(mesh_part + disk_part)
    return dec.l2_sq


class UpperBound(NamedTuple):
    value: float
    log_value: float


def upper_bound_formula(vol: float, ell: int, a_const: float) -> UpperBound:
    """Vol + pi*ell*e^(1+4*pi*ell*A), evaluated through logs."""
    log_peak = np.log(np.pi * ell) + 1.0 + 4.0 * np.pi * ell * a_const
    log_value = float(np.logaddexp(np.log(vol), log_peak))
    value = float(vol + np.exp(log_peak)) if log_peak < 709.0 else float("inf")
    return UpperBound(value=value, log_value=log_value)


def upper_bound_value(dec: GreenDecomposition) -> UpperBound:
    if dec.a_const is None:
        raise GreenError("extract the regular constant before the upper bound")
    return upper_bound_formula(dec.ops.mesh.total_area, dec.ell, dec.a_const)
