"""Experiment runner: every module behind reproducible subcommands.

All outputs are plain JSON/CSV written with canonical formatting (sorted
keys, shortest round-trip floats, no timestamps), so a rerun with the same
config and seed produces byte-identical files.  Every exponential-scale
quantity is accompanied by its log.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure inside a stage (partial artifacts are kept).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .constructions.bubble import BubbleProfile
from .constructions.family import build_test_family, test_family_lower_bound
from .constructions.green import (
    extract_A,
    green_l2_norm_sq,
    green_solve,
    richardson_pair,
    upper_bound_value,
)
from .constructions.radial import RadialModel
from .discretization import NormParams, assemble
from .geometry import (
    build_flat_torus_mesh,
    build_sphere_mesh,
    group_action,
    orbit_stats,
    read_group_json,
    read_off,
    write_group_json,
    write_off,
)
from .maximizer import (
    ProblemSpec,
    blowup_diagnostics,
    multiplier_report,
    sharpness_probe,
    solve_subcritical,
)
from .spectrum import complement_projector, invariant_spectrum

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# canonical serialization


def _py(x):
    """JSON-safe deep copy: numpy scalars/arrays to builtins, non-finite to None."""
    if isinstance(x, dict):
        return {str(k): _py(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_py(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_py(v) for v in x.tolist()]
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    return x


def canonical_json(payload) -> str:
    return json.dumps(_py(payload), indent=2, sort_keys=True) + "\n"


def _write_json(path, payload) -> None:
    Path(path).write_text(canonical_json(payload))


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _mesh_hash(mesh) -> str:
    return hashlib.sha256(mesh.vertices.tobytes() + mesh.triangles.tobytes()).hexdigest()


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("TM_THREADS", "1")))
    except ValueError:
        return 1


def _sweep(fn, items):
    """Order-preserving map, fanned out over TM_THREADS when it exceeds one."""
    items = list(items)
    n = _n_threads()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# mesh/group construction shared by the subcommands


def _add_mesh_args(p: argparse.ArgumentParser, level_flag: str = "--level") -> None:
    p.add_argument("--surface", choices=("sphere", "torus"), default="sphere")
    p.add_argument(level_flag, dest="surface_level", type=int, default=4,
                   help="sphere subdivision level")
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=64)
    p.add_argument("--periods", type=float, nargs=2, default=(1.0, 1.0), metavar=("A", "B"))
    p.add_argument("--group", default="trivial", help="sphere: trivial|antipodal|cyclic(m)|dihedral(m); torus: trivial|shift(a,b)[+shift(c,d)]")
    p.add_argument("--mesh", help="OFF file to load instead of building a surface")
    p.add_argument("--perms", help="permutation JSON for --mesh (defaults to --group, or trivial)")


def _build_mesh(args):
    if args.mesh:
        mesh = read_off(args.mesh)
        if args.perms:
            action = read_group_json(args.perms, mesh.n_vertices)
        else:
            action = group_action(mesh, args.group)
        return mesh, action
    if args.surface == "sphere":
        return build_sphere_mesh(args.surface_level, args.group)
    return build_flat_torus_mesh(args.nx, args.ny, tuple(args.periods), group_kind=args.group)


def _auto_source(action: GroupAction) -> int:
    return int(orbit_stats(action).min_vertices[0])


def _spectrum_payload(spec) -> dict:
    return {
        "eigenvalues": spec.eigenvalues,
        "clusters": [[v, m] for v, m in spec.groups],
        "residuals": spec.residuals,
        "lambda_1": spec.lambda_1,
    }


def _green_payload(dec, with_values: bool = True) -> dict:
    out = {
        "alpha": dec.alpha,
        "source": dec.source,
        "orbit": dec.orbit,
        "ell": dec.ell,
        "residual": dec.residual,
        "a_const": dec.a_const,
        "a_fit_residual": dec.a_fit_residual,
        "a_annulus": dec.a_annulus,
        "l2_sq": dec.l2_sq,
    }
    if with_values:
        out["values"] = dec.values
    return out


_MARGIN_COLUMNS = (
    "eps", "margin", "value", "log_value", "bound", "bound_log",
    "tether", "margin_log_eps", "b_const", "c_sq",
)


def _report_payload(rep) -> dict:
    return {
        "eps": rep.eps,
        "value": rep.value,
        "log_value": rep.log_value,
        "bound": rep.bound.value,
        "bound_log": rep.bound.log_value,
        "margin": rep.margin,
        "tether": rep.tether,
        "tether_ratio": rep.tether_ratio,
        "margin_log_eps": rep.margin_log_eps,
        "b_const": rep.b_const,
        "c_sq": rep.c_sq,
        "mbar_c": rep.mbar_c,
        "inner_value": rep.inner_value,
        "inner_reference": rep.inner_reference,
        "outer_value": rep.outer_value,
        "annulus_value": rep.annulus_value,
    }


def _state_payload(state, with_vector: bool = True) -> dict:
    out = {
        "lambda_eps": state.lambda_eps,
        "mu_eps": state.mu_eps,
        "gammas": state.gammas,
        "c_eps": state.c_eps,
        "x_eps": state.x_eps,
        "value": state.value,
        "log_value": state.log_value,
        "residual": state.residual,
        "iterations": state.iterations,
        "converged": state.converged,
    }
    if with_vector:
        out["u"] = state.u
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_mesh(args) -> int:
    mesh, action = _build_mesh(args)
    write_off(mesh, args.out)
    if args.perms_out:
        write_group_json(action, args.perms_out)
    print(
        f"{mesh.surface_kind}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
        f"group '{action.name}' of order {action.order}, ell={action.min_orbit_size} -> {args.out}"
    )
    return 0


def cmd_spectrum(args) -> int:
    mesh, action = _build_mesh(args)
    ops = assemble(mesh)
    spec = invariant_spectrum(ops, action, args.count, seed=args.rng_seed)
    _write_json(args.out, {"schema": SCHEMA_VERSION, "spectrum": _spectrum_payload(spec)})
    print(f"lambda_1^G = {spec.lambda_1!r}, {len(spec.groups)} clusters -> {args.out}")
    return 0


def _solve_green(mesh, action, alpha: float, source, eig_count: int):
    ops = assemble(mesh)
    spec = invariant_spectrum(ops, action, eig_count)
    params = NormParams(alpha=alpha, lambda_gap=spec.lambda_1, beta=1.0)
    src = _auto_source(action) if source in (None, "auto") else int(source)
    dec = green_solve(ops, action, src, params)
    extract_A(dec)
    green_l2_norm_sq(dec)
    return ops, spec, dec


def cmd_green(args) -> int:
    mesh, action = _build_mesh(args)
    _, _, dec = _solve_green(mesh, action, args.alpha, args.orbit, args.eig_count)
    bound = upper_bound_value(dec)
    payload = {
        "schema": SCHEMA_VERSION,
        "green": _green_payload(dec),
        "upper_bound": {"value": bound.value, "log_value": bound.log_value},
    }
    _write_json(args.out, payload)
    print(f"A = {dec.a_const!r} (fit rms {dec.a_fit_residual:.2e}), residual {dec.residual:.2e} -> {args.out}")
    return 0


def cmd_bounds(args) -> int:
    mesh, action = _build_mesh(args)
    _, _, dec = _solve_green(mesh, action, args.alpha, args.orbit, args.eig_count)

    def one(eps: float):
        fam = build_test_family(dec, eps, n_quad=args.n_quad)
        return _report_payload(test_family_lower_bound(fam, n_quad=args.n_quad))

    reports = _sweep(one, args.eps)
    bound = upper_bound_value(dec)
    payload = {
        "schema": SCHEMA_VERSION,
        "green": _green_payload(dec, with_values=False),
        "upper_bound": {"value": bound.value, "log_value": bound.log_value},
        "sweep": reports,
    }
    _write_json(args.out, payload)
    csv_path = args.csv or Path(args.out).with_suffix(".csv")
    _write_csv(csv_path, _MARGIN_COLUMNS, [[r[h] for h in _MARGIN_COLUMNS] for r in reports])
    worst = min(r["margin"] for r in reports)
    print(f"{len(reports)} eps values, min margin {worst!r} -> {args.out}, {csv_path}")
    return 0


def cmd_maximize(args) -> int:
    mesh, action = _build_mesh(args)
    ops = assemble(mesh)
    spec = invariant_spectrum(ops, action, args.eig_count, seed=args.rng_seed)
    comp = complement_projector(spec, ops, action, args.level)
    problem = ProblemSpec(ops, action, comp, args.alpha, args.eps)
    seed = args.seed
    if seed not in ("moser", "symmetric", "random"):
        with open(seed) as fh:
            seed = np.asarray(json.load(fh)["u"], dtype=float)
    state = solve_subcritical(problem, seed, max_iters=args.max_iters, tol=args.tol, rng_seed=args.rng_seed)
    rep = multiplier_report(state, ops)
    payload = {
        "schema": SCHEMA_VERSION,
        "state": _state_payload(state),
        "multiplier_checks": {
            "residual_u": rep.residual_u,
            "residual_const": rep.residual_const,
            "residual_gammas": rep.residual_gammas,
            "mu_over_lambda": rep.mu_over_lambda,
        },
    }
    _write_json(args.out, payload)
    print(
        f"value = {state.value!r} (log {state.log_value!r}), c_eps = {state.c_eps!r}, "
        f"residual {state.residual:.2e}, converged={state.converged} -> {args.out}"
    )
    return 0 if state.converged else 3


def _model_from_args(args) -> RadialModel:
    if args.surface == "sphere":
        return RadialModel("sphere", np.pi, 4.0 * np.pi)
    a, b = args.periods
    return RadialModel("torus", min(a, b) / 2.0, a * b)


def cmd_sharpness(args) -> int:
    model = _model_from_args(args)
    rows = sharpness_probe(model, args.ell, args.beta_grid, args.k_grid, r=args.r, alpha=args.alpha)
    csv_rows = []
    for row in rows:
        for k, lv in zip(row["k"], row["log_values"]):
            csv_rows.append(
                [row["beta"], k, lv, row["slope"], row["strictly_increasing"], row["variation"]]
            )
    _write_csv(
        args.out,
        ["beta", "k", "log_value", "slope", "strictly_increasing", "variation"],
        csv_rows,
    )
    for row in rows:
        print(
            f"beta={row['beta']!r}: slope={row['slope']!r}, variation={row['variation']!r}, "
            f"increasing={row['strictly_increasing']}"
        )
    return 0


# ---------------------------------------------------------------------------
# pipeline runner


def _load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {cfg.get('schema')!r}")
    return cfg


def _config_mesh(cfg: dict):
    surface = cfg.get("surface", {})
    kind = surface.get("kind", "sphere")
    group = cfg.get("group", "trivial")
    if kind == "sphere":
        return build_sphere_mesh(int(surface.get("level", 4)), group)
    if kind == "torus":
        periods = tuple(surface.get("periods", (1.0, 1.0)))
        return build_flat_torus_mesh(
            int(surface.get("nx", 64)), int(surface.get("ny", 64)), periods, group_kind=group
        )
    if kind == "off":
        for key in ("path",) + (("perms",) if "perms" in surface else ()):
            if not Path(surface[key]).exists():
                raise ConfigError(f"referenced file does not exist: {surface[key]}")
        mesh = read_off(surface["path"])
        if "perms" in surface:
            return mesh, read_group_json(surface["perms"], mesh.n_vertices)
        return mesh, group_action(mesh, group)
    raise ConfigError(f"unknown surface kind {kind!r}")


def _resolve_alpha(cfg_alpha, spec) -> float:
    if isinstance(cfg_alpha, dict):
        level = int(cfg_alpha.get("level", 1))
        return float(cfg_alpha["gap_fraction"]) * spec.group_value(level)
    return float(cfg_alpha)


def run_experiment(config_path, out_dir=None) -> int:
    """Execute the pipeline named in the config; see the README for the schema."""
    cfg = _load_config(config_path)
    config_text = Path(config_path).read_text()
    out = Path(out_dir or cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config_text)
    pipeline = cfg.get("pipeline", [])
    known = {"mesh", "spectrum", "green", "bounds", "maximize", "diagnostics", "sharpness"}
    unknown = [s for s in pipeline if s not in known]
    if unknown:
        raise ConfigError(f"unknown pipeline stages {unknown}; valid: {sorted(known)}")

    results: dict = {"schema": SCHEMA_VERSION, "config_sha256": _sha256_text(config_text)}
    outputs = ["config.json"]
    mesh = action = ops = spec = dec = state = None
    rng_seed = int(cfg.get("rng_seed", 0))
    eig_count = int(cfg.get("eigen_count", 8))
    if not pipeline:
        _write_manifest(out, config_text, None, outputs)
        print(f"empty pipeline: manifest only -> {out}")
        return 0
    stage = "setup"
    try:
        if pipeline:
            stage = "mesh"
            mesh, action = _config_mesh(cfg)
            results["mesh"] = {
                "surface": mesh.surface_kind,
                "n_vertices": mesh.n_vertices,
                "n_triangles": mesh.n_triangles,
                "group": action.name,
                "group_order": action.order,
                "ell": action.min_orbit_size,
                "total_area": mesh.total_area,
            }
            if "mesh" in pipeline:
                write_off(mesh, out / "mesh.off")
                write_group_json(action, out / "group.json")
                outputs += ["mesh.off", "group.json"]

        if pipeline and {"spectrum", "green", "bounds", "maximize", "diagnostics"} & set(pipeline):
            stage = "spectrum"
            ops = assemble(mesh)
            spec = invariant_spectrum(ops, action, eig_count, seed=rng_seed)
            results["spectrum"] = _spectrum_payload(spec)

        if {"green", "bounds"} & set(pipeline):
            stage = "green"
            gcfg = cfg.get("green", {})
            alpha = _resolve_alpha(cfg.get("alpha", 0.0), spec)
            params = NormParams(alpha=alpha, lambda_gap=spec.lambda_1, beta=1.0)
            source = gcfg.get("source", "auto")
            src = _auto_source(action) if source == "auto" else int(source)
            dec = green_solve(ops, action, src, params)
            extract_A(dec)
            green_l2_norm_sq(dec)
            bound = upper_bound_value(dec)
            results["green"] = _green_payload(dec, with_values=False)
            results["upper_bound"] = {"value": bound.value, "log_value": bound.log_value}

        if "bounds" in pipeline:
            stage = "bounds"
            bcfg = cfg.get("bounds", {})
            epsilons = [float(e) for e in bcfg.get("epsilons", (1e-3, 1e-4, 1e-5))]
            n_quad = int(bcfg.get("n_quad", 400))

            def one(eps):
                fam = build_test_family(dec, eps, n_quad=n_quad)
                return _report_payload(test_family_lower_bound(fam, n_quad=n_quad))

            reports = _sweep(one, epsilons)
            results["bounds"] = reports
            header = ["eps", "margin", "value", "log_value", "bound", "bound_log", "tether", "margin_log_eps", "b_const", "c_sq"]
            _write_csv(out / "margins.csv", header, [[r[h] for h in header] for r in reports])
            outputs.append("margins.csv")

        if {"maximize", "diagnostics"} & set(pipeline):
            stage = "maximize"
            mcfg = cfg.get("maximize", {})
            level = int(mcfg.get("level", 1))
            comp = complement_projector(spec, ops, action, level)
            alpha = _resolve_alpha(mcfg.get("alpha", cfg.get("alpha", 0.0)), spec)
            eps_sub = mcfg.get("epsilon_sub", np.pi * action.min_orbit_size)
            problem = ProblemSpec(ops, action, comp, alpha, float(eps_sub))
            seed = mcfg.get("seed", "moser")
            if isinstance(seed, list):
                seed = np.asarray(seed, dtype=float)
            state = solve_subcritical(
                problem,
                seed,
                max_iters=int(mcfg.get("max_iters", 400)),
                tol=float(mcfg.get("tol", 1e-8)),
                rng_seed=rng_seed,
            )
            rep = multiplier_report(state, ops)
            results["maximize"] = _state_payload(state, with_vector=False)
            results["maximize"]["multiplier_checks"] = {
                "residual_u": rep.residual_u,
                "residual_const": rep.residual_const,
                "residual_gammas": rep.residual_gammas,
                "mu_over_lambda": rep.mu_over_lambda,
            }
            _write_json(out / "state.json", {"schema": SCHEMA_VERSION, "state": _state_payload(state)})
            outputs.append("state.json")

        if "diagnostics" in pipeline:
            stage = "diagnostics"
            dcfg = cfg.get("diagnostics", {})
            diag = blowup_diagnostics(
                state,
                mesh,
                action,
                BubbleProfile(action.min_orbit_size),
                dcfg.get("radii", (0.1, 0.2, 0.4)),
                c_threshold=float(dcfg.get("c_threshold", 3.0)),
            )
            results["diagnostics"] = {
                "r_eps": diag.r_eps,
                "c_eps": diag.c_eps,
                "orbit": diag.orbit,
                "radii": diag.radii,
                "local_energies": diag.local_energies,
                "energy_budget": diag.energy_budget,
                "energy_fractions": diag.energy_fractions,
                "profile_error": diag.profile_error,
                "profile_points": diag.profile_points,
                "resolution_warning": diag.resolution_warning,
            }

        if "sharpness" in pipeline:
            stage = "sharpness"
            scfg = cfg.get("sharpness", {})
            surface = cfg.get("surface", {})
            if surface.get("kind", "sphere") == "sphere":
                model = RadialModel("sphere", np.pi, 4.0 * np.pi)
            else:
                a, b = surface.get("periods", (1.0, 1.0))
                model = RadialModel("torus", min(a, b) / 2.0, a * b)
            results["sharpness"] = sharpness_probe(
                model,
                int(scfg.get("ell", action.min_orbit_size if action is not None else 1)),
                scfg.get("beta_grid", ()),
                scfg.get("k_grid", ()),
                r=float(scfg.get("r", 0.05)),
                alpha=float(scfg.get("alpha", 0.0)),
            )
    except (ConfigError, json.JSONDecodeError):
        raise
    except Exception as exc:
        results["failed_stage"] = stage
        _write_json(out / "results.json", results)
        _write_manifest(out, config_text, mesh, outputs + ["results.json"])
        raise StageError(stage, exc) from exc

    _write_json(out / "results.json", results)
    outputs.append("results.json")
    _write_manifest(out, config_text, mesh, outputs)
    print(f"pipeline {pipeline or '(empty)'} complete -> {out}")
    return 0


def _write_manifest(out: Path, config_text: str, mesh, outputs) -> None:
    manifest = {
        "schema": SCHEMA_VERSION,
        "tool": "tmsurf",
        "version": __version__,
        "config_sha256": _sha256_text(config_text),
        "mesh_sha256": _mesh_hash(mesh) if mesh is not None else None,
        "outputs": sorted(set(outputs) | {"manifest.json"}),
    }
    _write_json(out / "manifest.json", manifest)


def cmd_run(args) -> int:
    return run_experiment(args.config, args.out_dir)


# ---------------------------------------------------------------------------
# comparison of two runs


def _walk(prefix: str, obj, leaves: dict) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _walk(f"{prefix}.{k}" if prefix else str(k), v, leaves)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _walk(f"{prefix}[{i}]", v, leaves)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        leaves[prefix] = float(obj)


def _load_run(d):
    docs = {}
    for name in ("manifest", "results"):
        path = Path(d) / f"{name}.json"
        if not path.exists():
            raise ConfigError(f"no {name}.json under {d}")
        docs[name] = json.loads(path.read_text())
    return docs


def compare_report(dir_a, dir_b) -> dict:
    """Per-quantity relative differences between two run directories.

    When both runs carry the fitted Green constant at different mesh sizes,
    the fine/coarse pair is combined into its Richardson extrapolation.
    """
    run_a, run_b = _load_run(dir_a), _load_run(dir_b)
    schemas = [r["manifest"].get("schema") for r in (run_a, run_b)]
    if schemas[0] != schemas[1]:
        raise ConfigError(f"manifest schema mismatch: {schemas[0]!r} vs {schemas[1]!r}")
    a, b = {}, {}
    _walk("", run_a["results"], a)
    _walk("", run_b["results"], b)
    drop = {"config_sha256", "schema"}
    shared = sorted((set(a) & set(b)) - drop)
    diffs = {}
    for key in shared:
        va, vb = a[key], b[key]
        scale = max(abs(va), abs(vb))
        diffs[key] = {"a": va, "b": vb, "rel_diff": abs(va - vb) / scale if scale else 0.0}
    max_key = max(shared, key=lambda k: diffs[k]["rel_diff"], default=None)
    report = {
        "schema": SCHEMA_VERSION,
        "n_compared": len(shared),
        "only_in_a": sorted(set(a) - set(b) - drop),
        "only_in_b": sorted(set(b) - set(a) - drop),
        "max_rel_diff": diffs[max_key]["rel_diff"] if max_key else 0.0,
        "max_rel_diff_key": max_key,
        "diffs": diffs,
    }
    key_a, key_n = "green.a_const", "mesh.n_vertices"
    if key_a in shared and key_n in shared and a[key_n] != b[key_n]:
        coarse, fine = sorted([(a[key_n], a[key_a]), (b[key_n], b[key_a])])
        report["richardson_a"] = richardson_pair(coarse[1], fine[1])
    return report


def cmd_compare(args) -> int:
    report = compare_report(args.run_a, args.run_b)
    if args.out:
        _write_json(args.out, report)
    print(
        f"{report['n_compared']} shared quantities, max relative difference "
        f"{report['max_rel_diff']!r} at {report['max_rel_diff_key']}"
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tm", description=__doc__)
    p.add_argument("--version", action="version", version=f"tmsurf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mesh", help="build a surface and export OFF + permutations")
    _add_mesh_args(m)
    m.add_argument("--out", required=True)
    m.add_argument("--perms-out", help="write the group permutations as JSON")
    m.set_defaults(fn=cmd_mesh)

    s = sub.add_parser("spectrum", help="invariant mean-zero eigenvalues")
    _add_mesh_args(s)
    s.add_argument("--count", type=int, default=8)
    s.add_argument("--rng-seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_spectrum)

    g = sub.add_parser("green", help="orbit Green function and its regular part")
    _add_mesh_args(g)
    g.add_argument("--alpha", type=float, default=0.0)
    g.add_argument("--orbit", default="auto", help="source vertex index, or 'auto' for a minimal orbit")
    g.add_argument("--eig-count", type=int, default=8)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_green)

    b = sub.add_parser("bounds", help="upper bound vs test-family lower bound")
    _add_mesh_args(b)
    b.add_argument("--alpha", type=float, default=0.0)
    b.add_argument("--orbit", default="auto")
    b.add_argument("--eig-count", type=int, default=8)
    b.add_argument("--eps", type=float, nargs="+", default=(1e-3, 1e-4, 1e-5))
    b.add_argument("--n-quad", type=int, default=400)
    b.add_argument("--out", required=True)
    b.add_argument("--csv", help="also write a margin-vs-eps table")
    b.set_defaults(fn=cmd_bounds)

    x = sub.add_parser("maximize", help="subcritical maximizer of the exponential functional")
    _add_mesh_args(x, level_flag="--surface-level")
    x.add_argument("--alpha", type=float, required=True)
    x.add_argument("--eps", type=float, required=True, help="subcritical deficit in the exponent")
    x.add_argument("--level", type=int, default=1, help="eigenvalue level j whose gap bounds alpha")
    x.add_argument("--seed", default="moser", help="moser|symmetric|random or a JSON file with a 'u' array")
    x.add_argument("--rng-seed", type=int, default=0)
    x.add_argument("--eig-count", type=int, default=12)
    x.add_argument("--max-iters", type=int, default=400)
    x.add_argument("--tol", type=float, default=1e-8)
    x.add_argument("--out", required=True)
    x.set_defaults(fn=cmd_maximize)

    h = sub.add_parser("sharpness", help="divergence table across exponents")
    h.add_argument("--surface", choices=("sphere", "torus"), default="sphere")
    h.add_argument("--periods", type=float, nargs=2, default=(1.0, 1.0))
    h.add_argument("--ell", type=int, default=2)
    h.add_argument("--beta-grid", type=float, nargs="+", required=True)
    h.add_argument("--k-grid", type=int, nargs="+", required=True)
    h.add_argument("--r", type=float, default=0.05)
    h.add_argument("--alpha", type=float, default=0.0)
    h.add_argument("--out", required=True)
    h.set_defaults(fn=cmd_sharpness)

    r = sub.add_parser("run", help="execute a JSON-configured pipeline")
    r.add_argument("config")
    r.add_argument("--out-dir", help="override the config's output directory")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("compare", help="relative differences between two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--out", help="write the full diff as JSON")
    c.set_defaults(fn=cmd_compare)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, OSError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
