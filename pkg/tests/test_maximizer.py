"""Subcritical maximizer: fixed-point solver, multipliers, blow-up diagnostics.

The quantitative oracle is the near-critical quadratic regime: for
epsilon = 4*pi*ell - beta with small beta the maximum of the exponential
functional is Vol + beta/(lambda_1 - alpha) + O(beta^2), with the maximizer
inside the first invariant eigencluster.
"""

import numpy as np
import pytest

from tmsurf.constructions import BubbleProfile
from tmsurf.discretization import norm_one_alpha, quadratic_form_sq
from tmsurf.geometry import geodesic_distance, orbit_stats
from tmsurf.maximizer import (
    MaximizerError,
    MaximizerState,
    ProblemSpec,
    alpha_failure_probe,
    blowup_diagnostics,
    multiplier_report,
    normalized_competitor,
    sharpness_probe,
    solve_subcritical,
)
from tmsurf.constructions.radial import RadialModel
from tmsurf.spectrum import complement_projector


def _spec(s, epsilon_sub, level=1, alpha_frac=0.25):
    comp = complement_projector(s.spectrum, s.ops, s.action, level)
    alpha = alpha_frac * comp.lambda_level
    return ProblemSpec(
        ops=s.ops, action=s.action, complement=comp, alpha=alpha, epsilon_sub=epsilon_sub
    )


# ---------------------------------------------------------------- quadratic regime


@pytest.fixture(scope="module")
def quadratic_state(sphere3):
    spec = _spec(sphere3, epsilon_sub=8 * np.pi - 0.05)
    return spec, solve_subcritical(spec, seed="moser")


def test_quadratic_regime_value(sphere3, quadratic_state):
    spec, state = quadratic_state
    assert state.converged
    vol = sphere3.mesh.total_area
    predicted = 0.05 / (sphere3.spectrum.lambda_1 - spec.alpha)
    assert abs((state.value - vol) / predicted - 1.0) < 0.05


def test_quadratic_regime_eigencluster(sphere3, quadratic_state):
    _, state = quadratic_state
    # maximizer sits in the lambda_1 cluster: 5 invariant vectors at L3
    basis = sphere3.spectrum.eigenvectors[:, :5]
    mu = sphere3.ops.mass @ state.u
    inside = float(np.sum((basis.T @ mu) ** 2))
    total = float(state.u @ mu)
    assert 1.0 - inside / total < 1e-4


def test_quadratic_regime_seed_agreement(sphere3, quadratic_state):
    spec, state = quadratic_state
    sym = solve_subcritical(spec, seed="symmetric")
    assert sym.converged
    assert abs(sym.value - state.value) / state.value < 1e-8
    # the cluster is 5-fold degenerate: a random seed drifts in value-flat
    # directions, so only the value is pinned down
    with pytest.warns(UserWarning, match="residual"):
        rnd = solve_subcritical(spec, seed="random", tol=1e-7, rng_seed=7)
    assert rnd.residual < 1e-5
    assert abs(rnd.value - state.value) / state.value < 1e-6


# ---------------------------------------------------------------- moderate epsilon


@pytest.fixture(scope="module")
def moderate_state(sphere3):
    spec = _spec(sphere3, epsilon_sub=2 * np.pi)
    return spec, solve_subcritical(spec, seed="moser")


def test_moderate_epsilon_converges(sphere3, moderate_state):
    spec, state = moderate_state
    assert state.converged
    assert state.residual <= 1e-8
    assert state.iterations < 400
    assert state.lambda_eps > 0
    assert state.log_value > np.log(sphere3.mesh.total_area)
    assert state.log_value == pytest.approx(np.log(state.value), rel=1e-12)
    assert state.c_eps == pytest.approx(np.abs(state.u).max(), rel=1e-15)
    assert state.x_eps == int(np.flatnonzero(np.abs(state.u) == state.c_eps)[0])


def test_moderate_epsilon_feasibility(sphere3, moderate_state):
    spec, state = moderate_state
    assert norm_one_alpha(state.u, sphere3.ops, spec.norm_params) == pytest.approx(
        1.0, abs=1e-10
    )
    assert abs(sphere3.ops.lumped @ state.u) < 1e-10
    for perm in sphere3.action.permutations:
        np.testing.assert_array_equal(state.u[perm], state.u)


def test_moderate_epsilon_multipliers(sphere3, moderate_state):
    _, state = moderate_state
    report = multiplier_report(state, sphere3.ops)
    assert report.residual_u < 1e-12
    assert report.residual_const < 1e-12
    assert report.residual_gammas.size == 0
    assert report.mu_over_lambda == pytest.approx(report.mu_eps / report.lambda_eps, rel=1e-14)
    assert report.lambda_eps > 0


def test_solver_deterministic(sphere3, moderate_state):
    spec, state = moderate_state
    again = solve_subcritical(spec, seed="moser")
    np.testing.assert_array_equal(again.u, state.u)
    assert again.value == state.value
    assert again.iterations == state.iterations


def test_unknown_seed_rejected(sphere3):
    spec = _spec(sphere3, epsilon_sub=2 * np.pi)
    with pytest.raises(MaximizerError):
        solve_subcritical(spec, seed="gradient")


def test_normalized_competitor(sphere3, moderate_state, rng):
    spec, _ = moderate_state
    v = normalized_competitor(rng.standard_normal(sphere3.mesh.n_vertices), spec)
    assert norm_one_alpha(v, sphere3.ops, spec.norm_params) == pytest.approx(1.0, abs=1e-10)
    assert abs(sphere3.ops.lumped @ v) < 1e-10
    for perm in sphere3.action.permutations:
        np.testing.assert_array_equal(v[perm], v)


# ---------------------------------------------------------------- second level


def test_second_level_multipliers(sphere3):
    spec = _spec(sphere3, epsilon_sub=2 * np.pi, level=2)
    state = solve_subcritical(spec, seed="moser")
    assert state.converged
    assert state.gammas.size == 5  # multiplicity of the removed cluster
    report = multiplier_report(state, sphere3.ops)
    assert report.residual_gammas.size == 5
    assert np.max(report.residual_gammas) < 1e-8
    # solution stays orthogonal to the removed cluster
    basis = spec.complement.basis
    overlap = basis.T @ (sphere3.ops.mass @ state.u)
    assert np.max(np.abs(overlap)) < 1e-10


# ---------------------------------------------------------------- blow-up diagnostics


def _bubble_state(s, c, lambda_eps=4.0, epsilon_sub=25.0):
    """Hand-built state whose peak is exactly the rescaled bubble."""
    spec = _spec(s, epsilon_sub=epsilon_sub)
    center = int(orbit_stats(s.action).min_vertices[0])
    partner = int(s.action.permutations[1][center])
    bubble = BubbleProfile(2)
    r_eps = np.exp(
        0.5 * np.log(lambda_eps) - np.log(c) - (4 * np.pi - 0.5 * epsilon_sub) * c * c
    )
    # min over the two mirrored fields stays bitwise invariant under the flip
    d = np.minimum(
        geodesic_distance(s.mesh, center).distances,
        geodesic_distance(s.mesh, partner).distances,
    )
    u = c + bubble(d / r_eps) / c
    value = float(np.sum(s.ops.lumped * np.exp(u)))
    return spec, MaximizerState(
        u=u,
        lambda_eps=lambda_eps,
        mu_eps=0.1,
        gammas=np.array([]),
        c_eps=c,
        x_eps=center,
        value=value,
        log_value=float(np.log(value)),
        residual=0.0,
        iterations=1,
        converged=True,
        spec=spec,
    ), bubble, r_eps


def test_blowup_profile_recovery(sphere3):
    spec, state, bubble, r_eps = _bubble_state(sphere3, c=3.3)
    diag = blowup_diagnostics(state, sphere3.mesh, sphere3.action, bubble, radii=(0.4, 0.8))
    assert diag.r_eps == pytest.approx(r_eps, rel=1e-12)
    assert not diag.resolution_warning
    assert diag.profile_points >= 8
    assert diag.profile_error < 1e-12
    assert diag.orbit.size == 2


def test_blowup_orbit_energies_identical(sphere3):
    _, state, bubble, _ = _bubble_state(sphere3, c=3.3)
    diag = blowup_diagnostics(state, sphere3.mesh, sphere3.action, bubble, radii=(0.4, 0.8))
    np.testing.assert_array_equal(diag.local_energies[0], diag.local_energies[1])
    assert np.all(diag.local_energies > 0)
    assert np.all(np.diff(diag.energy_fractions) > 0)
    assert diag.energy_budget == pytest.approx(
        float(state.u @ (sphere3.ops.stiffness @ state.u)), rel=1e-14
    )


def test_blowup_threshold_guard(sphere3):
    _, state, bubble, _ = _bubble_state(sphere3, c=3.3)
    low = MaximizerState(
        u=state.u, lambda_eps=state.lambda_eps, mu_eps=state.mu_eps, gammas=state.gammas,
        c_eps=1.0, x_eps=state.x_eps, value=state.value, log_value=state.log_value,
        residual=0.0, iterations=1, converged=True, spec=state.spec,
    )
    with pytest.raises(MaximizerError, match="threshold"):
        blowup_diagnostics(low, sphere3.mesh, sphere3.action, bubble, radii=(0.4,))


def test_blowup_resolution_warning(sphere3):
    # c = 8 drives r_eps far below the L3 edge length
    _, state, bubble, _ = _bubble_state(sphere3, c=8.0)
    with pytest.warns(UserWarning, match="resolution"):
        diag = blowup_diagnostics(state, sphere3.mesh, sphere3.action, bubble, radii=(0.4,))
    assert diag.resolution_warning
    assert np.isnan(diag.profile_error)


# ---------------------------------------------------------------- scalar probes


def test_sharpness_probe_separates_regimes():
    model = RadialModel("sphere", np.pi, 4 * np.pi)
    rows = sharpness_probe(
        model,
        2,
        beta_grid=[0.9 * 8 * np.pi, 1.1 * 8 * np.pi],
        k_grid=[100, 1000, 10000, 100000],
    )
    sub, sup = rows
    assert sup["strictly_increasing"]
    assert not sub["strictly_increasing"]  # saturates and turns over by k = 1e5
    assert sup["slope"] > 3 * abs(sub["slope"]) > 0
    assert sub["variation"] < 1e-3
    assert sup["log_values"] == sorted(sup["log_values"])


def test_alpha_failure_probe_growth(sphere3):
    e1 = sphere3.spectrum.eigenvectors[:, 0]
    lam1 = sphere3.spectrum.lambda_1
    rows = alpha_failure_probe(
        sphere3.ops, sphere3.action, e1, alpha=lam1, t_grid=(1.0, 2.0, 4.0, 8.0)
    )
    assert all(row["feasible"] for row in rows)
    assert all(abs(row["shifted_form"]) < 1e-8 * row["t"] ** 2 for row in rows)
    rates = [row["growth_rate"] for row in rows]
    assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))
    # log-value itself grows at least quadratically in t
    logs = [row["log_value"] for row in rows]
    assert logs[-1] - logs[0] > 0
    q = quadratic_form_sq(2.0 * e1, sphere3.ops, lam1)
    assert abs(q) < 1e-8
