"""Experiment runner: config parsing, orchestration, and file emission.

Configs are TOML (key/value with nested sections).  Flags only override
config keys; the resolved configuration with all defaults materialized is
echoed into the output directory so any run can be reproduced from its own
artifacts.  Outputs are CSV tables, JSON summaries and whitespace-delimited
two-column files, written atomically (temp file + rename), with LF endings
and '.' decimals so identical configs produce byte-identical files.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
from importlib import resources
from multiprocessing import get_context
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import admissibility, diagnostics, kernels
from .errors import ConfigError, InputError, ParameterError, ShapeError, WieError
from .forcing import (Forcing, linear_forcing, separable_forcing, sine_gordon_psi,
                      space_profile, time_factor, zero_forcing)
from .grids import (InitialData, SpaceGrid, rescaled_time_grid,
                    validate_support_margin, weighted_time_integral)
from .minimizer import MinimizeOptions, ProblemTemplate, minimize, rescale
from .oracle import OracleConfig, leapfrog_solve, solution_energy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

OUT_DIR_ENV = "WIE_OUT_DIR"

DEFAULTS = {
    "problem": {
        "eps": 0.1,
        "eps_list": [],
        "r": 2.0,
        "eps_f": 0.45,
        "boundary": "dirichlet",
        "half_length": 3.0,
        "nx": 201,
        "ht_resc": 0.1,
        "t_phys": 1.0,
        "tail_tol": 1e-9,
        "power_reg": -1.0,  # negative means automatic
    },
    "initial": {
        "w0": "bump",
        "w0_params": {},
        "w1": "zero",
        "w1_params": {},
    },
    "forcing": {
        "kind": "zero",
        "time_factor": "exp_decay",
        "time_params": {},
        "space_profile": "bump",
        "space_params": {},
        "psi": "sine_gordon",
    },
    "minimize": {
        "method": "lbfgs",
        "memory": 10,
        "grad_tol": 1e-9,
        "max_iters": 500,
        "preconditioner": "kron",
        "multistart": 0,
        "multistart_scale": 0.1,
    },
    "oracle": {
        "ht_phys": 0.02,
        "include_power_term": True,
        "compare": "none",  # none | traveling
    },
    "admissibility": {
        "eps_f": 0.45,
        "windows": [1.0, 2.0, 5.0],
    },
    "sharpness": {
        "eta": "exp_t2",
        "eta_params": {},
        "n_max": 40,
    },
    "outputs": {
        "directory": "out",
        "formats": ["csv", "json"],
    },
    "run": {
        "seed": 0,
        "jobs": 1,
    },
}


# ---------------------------------------------------------------------------
# config handling


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and not key.endswith("_params"):
            if not isinstance(val, dict):
                raise ConfigError(f"{where} must be a table")
            out[key] = _deep_merge(base[key], val, where)
        else:
            out[key] = val
    return out


def resolve_config_path(spec: str) -> Path:
    """A filesystem path, or a bare preset name resolved from the package."""
    p = Path(spec)
    if p.exists():
        return p
    if "/" not in spec and not spec.endswith(".toml"):
        preset = resources.files("wie").joinpath("presets", f"{spec}.toml")
        try:
            if preset.is_file():
                return Path(str(preset))
        except (OSError, TypeError):
            pass
    raise ConfigError(f"config not found: {spec}")


def load_config(spec: str) -> dict:
    path = resolve_config_path(spec)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return _deep_merge(DEFAULTS, raw)


def _toml_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        out = repr(float(val))
        return out if ("e" in out or "." in out or "inf" in out or "nan" in out) else out + ".0"
    if isinstance(val, str):
        return json.dumps(val)
    if isinstance(val, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    if isinstance(val, dict):
        inner = ", ".join(f"{k} = {_toml_value(v)}" for k, v in val.items())
        return "{" + inner + "}"
    raise ConfigError(f"cannot serialize config value {val!r}")


def dump_config(cfg: dict) -> str:
    lines = []
    for section in sorted(cfg):
        lines.append(f"[{section}]")
        for key in sorted(cfg[section]):
            lines.append(f"{key} = {_toml_value(cfg[section][key])}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# builders


def build_space_grid(cfg: dict) -> SpaceGrid:
    p = cfg["problem"]
    return SpaceGrid(half_length=float(p["half_length"]), n_points=int(p["nx"]),
                     boundary=str(p["boundary"]))


def build_initial(cfg: dict, grid: SpaceGrid) -> InitialData:
    ini = cfg["initial"]
    w0 = space_profile(str(ini["w0"]), **ini["w0_params"])(grid.nodes)
    w1 = space_profile(str(ini["w1"]), **ini["w1_params"])(grid.nodes)
    return InitialData(w0, w1)


def build_forcing(cfg: dict) -> Forcing:
    f = cfg["forcing"]
    kind = str(f["kind"])
    if kind == "zero":
        return zero_forcing()
    tau = time_factor(str(f["time_factor"]), **f["time_params"])
    g = space_profile(str(f["space_profile"]), **f["space_params"])
    if kind == "linear":
        return linear_forcing(tau, g)
    if kind == "separable":
        if str(f["psi"]) != "sine_gordon":
            raise ConfigError(f"unknown psi {f['psi']!r}")
        psi, psi_prime = sine_gordon_psi()
        return separable_forcing(tau, g, psi, psi_prime)
    raise ConfigError(f"unknown forcing kind {kind!r} (custom forcings are library-only)")


def build_template(cfg: dict) -> ProblemTemplate:
    p = cfg["problem"]
    grid = build_space_grid(cfg)
    data = build_initial(cfg, grid)
    forcing = build_forcing(cfg)
    validate_support_margin(data, grid, float(p["t_phys"]))
    power_reg = float(p["power_reg"])
    return ProblemTemplate(
        r=float(p["r"]), initial=data, space=grid, forcing=forcing,
        t_phys=float(p["t_phys"]), ht_resc=float(p["ht_resc"]),
        eps_f=float(p["eps_f"]), tail_tol=float(p["tail_tol"]),
        power_reg=None if power_reg < 0 else power_reg,
    )


def build_minimize_options(cfg: dict) -> MinimizeOptions:
    m = cfg["minimize"]
    return MinimizeOptions(
        method=str(m["method"]), memory=int(m["memory"]),
        grad_tol=float(m["grad_tol"]), max_iters=int(m["max_iters"]),
        preconditioner=str(m["preconditioner"]), multistart=int(m["multistart"]),
        multistart_scale=float(m["multistart_scale"]),
        rng_seed=int(cfg["run"]["seed"]),
    )


def build_oracle_config(cfg: dict) -> OracleConfig:
    o = cfg["oracle"]
    return OracleConfig(
        t_phys=float(cfg["problem"]["t_phys"]), ht_phys=float(o["ht_phys"]),
        space=build_space_grid(cfg), r=float(cfg["problem"]["r"]),
        forcing=build_forcing(cfg),
        include_power_term=bool(o["include_power_term"]),
    )


def eps_sweep(cfg: dict) -> list[float]:
    p = cfg["problem"]
    eps_list = [float(e) for e in p["eps_list"]]
    if not eps_list:
        eps_list = [float(p["eps"])]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    return eps_list


# ---------------------------------------------------------------------------
# output writers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_fmt(row[name]) for name in fieldnames))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path: Path, obj) -> None:
    def default(o):
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        raise TypeError(f"not JSON serializable: {type(o)}")

    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n")


def write_twocol(path: Path, xs, ys) -> None:
    lines = [f"{_fmt(float(a))} {_fmt(float(b))}" for a, b in zip(xs, ys)]
    _atomic_write(path, "\n".join(lines) + "\n")


def _out_dir(cfg: dict, args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(cfg["outputs"]["directory"])


def _echo_config(cfg: dict, out: Path) -> None:
    _atomic_write(out / "resolved.toml", dump_config(cfg))


# ---------------------------------------------------------------------------
# subcommands


def cmd_minimize(cfg: dict, args) -> int:
    out = _out_dir(cfg, args)
    eps = eps_sweep(cfg)[0]
    template = build_template(cfg)
    prob = template.problem(eps)
    res = minimize(prob, build_minimize_options(cfg))
    w_phys = rescale(res.u_eps, eps, template.physical_grid(float(cfg["oracle"]["ht_phys"])))
    report = diagnostics.energy_report(res.u_eps, prob, w_phys)
    _echo_config(cfg, out)
    write_json(out / "result.json", {"eps": eps, **res.summary(), **report.flags})
    write_csv(out / "energy.csv",
              ["t", "K_eps", "W", "E_eps", "margin_bound", "margin_energy"],
              list(report.rows()))
    write_twocol(out / "plot_energy_margin.dat", report.inequality_times,
                 report.inequality_margin)
    print(f"minimize eps={eps}: converged={res.converged} J={res.j_value:.6e} "
          f"grad={res.grad_norm:.2e} iters={res.iterations}")
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def _converge_worker(payload) -> dict:
    cfg, eps = payload
    template = build_template(cfg)
    oracle_cfg = build_oracle_config(cfg)
    truth = leapfrog_solve(oracle_cfg, template.initial)
    prob = template.problem(eps)
    res = minimize(prob, build_minimize_options(cfg))
    w_eps = rescale(res.u_eps, eps, truth.time)
    l2 = diagnostics.space_time_l2(w_eps, truth.values)
    sup = float(np.max(np.abs(w_eps.values - truth.values)))
    ineq = diagnostics.check_energy_inequality(w_eps, prob.forcing, prob.r,
                                               power_reg=prob.power_reg)
    bound = diagnostics.check_approx_energy_bound(res.u_eps, prob)
    elem = diagnostics.check_elementary_estimates(res.u_eps, prob)
    return {
        "eps": eps, "l2_error": l2, "sup_error": sup,
        "j_value": res.j_value, "grad_norm": res.grad_norm,
        "iterations": res.iterations, "converged": res.converged,
        "weighted_energy": res.weighted_energy, "energy_bound": res.energy_bound,
        "energy_margin_min": ineq.min_margin, "energy_tol": ineq.tol,
        "energy_ok": ineq.ok, "bound_margin_min": float(np.min(bound.margins)),
        "bound_ok": bound.ok_upper and bound.ok_lower,
        "elementary_ok": elem.ok,
        "potential_moment": diagnostics.weighted_potential_moment(res.u_eps, prob),
    }


def cmd_converge(cfg: dict, args) -> int:
    out = _out_dir(cfg, args)
    eps_list = eps_sweep(cfg)
    jobs = int(cfg["run"]["jobs"])
    payloads = [(cfg, eps) for eps in eps_list]
    if jobs > 1:
        with get_context("spawn").Pool(min(jobs, len(payloads))) as pool:
            rows = pool.map(_converge_worker, payloads)
    else:
        rows = [_converge_worker(p) for p in payloads]
    fieldnames = ["eps", "l2_error", "sup_error", "j_value", "grad_norm",
                  "iterations", "converged", "weighted_energy", "energy_bound",
                  "energy_margin_min", "energy_tol", "energy_ok",
                  "bound_margin_min", "bound_ok", "elementary_ok", "potential_moment"]
    errors = [row["l2_error"] for row in rows]
    summary = {
        "eps_list": eps_list,
        "l2_errors": errors,
        "strictly_decreasing": all(b < a for a, b in zip(errors, errors[1:])),
        "ratio_smallest_to_largest": errors[-1] / errors[0] if errors[0] > 0 else 0.0,
        "all_converged": all(row["converged"] for row in rows),
        "all_energy_ok": all(row["energy_ok"] for row in rows),
        "all_bound_ok": all(row["bound_ok"] for row in rows),
    }
    _echo_config(cfg, out)
    write_csv(out / "errors.csv", fieldnames, rows)
    write_json(out / "summary.json", summary)
    write_twocol(out / "plot_l2.dat", eps_list, errors)
    for row in rows:
        print(f"converge eps={row['eps']}: l2={row['l2_error']:.6e} "
              f"sup={row['sup_error']:.6e} converged={row['converged']}")
    if not summary["all_converged"]:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_oracle(cfg: dict, args) -> int:
    out = _out_dir(cfg, args)
    oracle_cfg = build_oracle_config(cfg)
    grid = oracle_cfg.space
    data = build_initial(cfg, grid)
    traj = leapfrog_solve(oracle_cfg, data)
    energy = solution_energy(traj, oracle_cfg.r)
    rows = [{"t": float(t), "E": float(e)} for t, e in zip(traj.time.nodes, energy)]
    summary = {
        "t_phys": oracle_cfg.t_phys,
        "ht_phys": oracle_cfg.ht_phys,
        "energy_initial": float(energy[0]),
        "energy_drift_rel": float(np.max(np.abs(energy - energy[0]))
                                  / max(energy[0], 1e-300)),
        "max_amplitude": float(np.max(np.abs(traj.values))),
    }
    if str(cfg["oracle"]["compare"]) == "traveling":
        shifted = space_profile(str(cfg["initial"]["w0"]),
                                **cfg["initial"]["w0_params"])
        exact = np.stack([shifted(grid.nodes - t) for t in traj.time.nodes])
        sup_err = float(np.max(np.abs(traj.values - exact)))
        summary["traveling_sup_error"] = sup_err
        summary["traveling_error_over_h2"] = sup_err / oracle_cfg.ht_phys**2
    _echo_config(cfg, out)
    write_csv(out / "oracle_energy.csv", ["t", "E"], rows)
    write_json(out / "summary.json", summary)
    print(f"oracle: energy drift {summary['energy_drift_rel']:.3e}"
          + (f", traveling sup error {summary['traveling_sup_error']:.3e}"
             if "traveling_sup_error" in summary else ""))
    return EXIT_OK


def cmd_admissible(cfg: dict, args) -> int:
    out = _out_dir(cfg, args)
    grid = build_space_grid(cfg)
    forcing = build_forcing(cfg)
    a = cfg["admissibility"]
    report = admissibility.check_hypotheses(
        forcing, grid, eps_f_candidate=float(a["eps_f"]),
        windows=tuple(float(w) for w in a["windows"]))
    _echo_config(cfg, out)
    write_json(out / "admissibility.json", report.to_dict())
    print(f"admissible: {report.admissible} (envelope {report.envelope})")
    return EXIT_OK


def cmd_sharpness(cfg: dict, args) -> int:
    out = _out_dir(cfg, args)
    grid = build_space_grid(cfg)
    data = build_initial(cfg, grid)
    s = cfg["sharpness"]
    eta = time_factor(str(s["eta"]), **s["eta_params"])
    g = space_profile(str(cfg["forcing"]["space_profile"]),
                      **cfg["forcing"]["space_params"])
    eps = eps_sweep(cfg)[0]
    result = admissibility.sharpness_demo(
        eta, g, data, grid, eps, r=float(cfg["problem"]["r"]),
        n_max=int(s["n_max"]))
    rows = [row.as_dict() for row in result.rows]
    first = result.first_below(-1e6)
    summary = {
        "c0": result.c0,
        "eventually_strictly_decreasing": result.eventually_strictly_decreasing(),
        "first_n_below_minus_1e6": first,
        "inertia_max": max(row.inertia for row in result.rows),
    }
    _echo_config(cfg, out)
    write_csv(out / "sharpness.csv",
              ["n", "value", "forcing_log", "inertia", "potential"], rows)
    write_json(out / "summary.json", summary)
    print(f"sharpness: first value below -1e6 at n={first}, "
          f"decreasing={summary['eventually_strictly_decreasing']}")
    return EXIT_OK


def _kernel_suite() -> list[dict]:
    """The kernel identity and bound suite behind the kernels-test subcommand."""
    checks = []

    def record(name, value, bound, ok):
        checks.append({"check": name, "value": value, "bound": bound,
                       "ok": bool(ok)})

    for eps in (0.05, 0.1, 0.2):
        total = kernels.mollify(lambda t: np.ones_like(t), eps, 0.0)
        err = abs(total - 1.0)
        record(f"normalization_eps_{eps}", err, 1e-8 + 1e-9, err <= 1e-8 + 1e-9)
    tgrid = rescaled_time_grid(30.0, 0.002)
    for alpha in (0, 1, 2):
        val = weighted_time_integral(tgrid.nodes**alpha, tgrid)
        err = abs(val - math.gamma(alpha + 1))
        record(f"gamma_moment_alpha_{alpha}", err, 1e-6 + tgrid.tail_tol,
               err <= 1e-6 + tgrid.tail_tol)
    for alpha in (0, 1, 2):
        val = kernels.mollify(lambda t, a=alpha: t**a, 0.1, 0.0)
        exact = math.gamma(alpha + 2) * 0.1**alpha  # kernel moments of t^alpha
        err = abs(val - exact)
        record(f"kernel_moment_alpha_{alpha}", err, 1e-6, err <= 1e-6)
    step = lambda t: np.where((t >= 1.0) & (t <= 2.0), 1.0, 0.0)
    mesh = np.linspace(0.0, 3.0, 1501)
    l1_prev = None
    mono = True
    for eps in (0.2, 0.1, 0.05):
        vals = np.array([kernels.mollify(step, eps, float(s)) for s in mesh])
        l1 = float(np.trapezoid(np.abs(vals - step(mesh)), mesh))
        if l1_prev is not None:
            mono = mono and l1 < l1_prev
        l1_prev = l1
    record("approximate_identity_L1_monotone", float(l1_prev), math.nan, mono)
    # increasing-kernel fact: eps -> eps^-1 exp(-t/eps) grows on (0, t)
    t_val = 1.0
    eps_mesh = np.linspace(0.05, 0.95 * t_val, 64)
    vals = np.exp(-t_val / eps_mesh) / eps_mesh
    record("kernel_monotone_in_eps", float(np.min(np.diff(vals))), 0.0,
           bool(np.all(np.diff(vals) > 0.0)))
    # uniform bound on the kernel average for three catalog forcings
    grid = SpaceGrid(3.0, 101)
    catalog = [
        linear_forcing(time_factor("constant"), space_profile("bump")),
        linear_forcing(time_factor("exp_decay", rate=1.0), space_profile("bump")),
        linear_forcing(time_factor("gaussian_bump", center=1.0, width=0.5),
                       space_profile("bump")),
    ]
    t_horizon = 1.0
    for idx, forcing in enumerate(catalog):
        f_sq = forcing.f_norm_sq(grid)
        bound = kernels.m_f(f_sq, 0.25, t_horizon, envelope=forcing.envelope)
        worst = -math.inf
        for eps in (0.2, 0.1, 0.05):
            samples = np.array([
                kernels.q_eps(f_sq, eps, float(s), envelope=forcing.envelope)
                for s in np.linspace(0.0, t_horizon, 100)])
            worst = max(worst, float(np.max(samples)))
        record(f"q_bounded_by_m_f_forcing_{idx}", worst, bound,
               worst <= bound + 1e-6)
    return checks


def cmd_kernels_test(cfg: dict, args) -> int:
    out = _out_dir(cfg, args)
    checks = _kernel_suite()
    _echo_config(cfg, out)
    write_json(out / "kernels.json", {"checks": checks,
                                      "all_ok": all(c["ok"] for c in checks)})
    width = max(len(c["check"]) for c in checks)
    for c in checks:
        print(f"{c['check']:<{width}}  {'PASS' if c['ok'] else 'FAIL'}")
    return EXIT_OK if all(c["ok"] for c in checks) else EXIT_NUMERICAL


COMMANDS = {
    "minimize": cmd_minimize,
    "converge": cmd_converge,
    "oracle": cmd_oracle,
    "admissible": cmd_admissible,
    "sharpness": cmd_sharpness,
    "kernels-test": cmd_kernels_test,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wie",
        description="Weighted inertia-energy approximation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default="smoke",
                       help="path to a TOML config or a bundled preset name")
        p.add_argument("--eps", type=float, default=None,
                       help="override the configured eps (single value)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes for eps sweeps")
        p.add_argument("--seed", type=int, default=None, help="run seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.eps is not None:
            cfg["problem"]["eps"] = float(args.eps)
            cfg["problem"]["eps_list"] = []
        if args.jobs is not None:
            cfg["run"]["jobs"] = int(args.jobs)
        if args.seed is not None:
            cfg["run"]["seed"] = int(args.seed)
        try:
            return COMMANDS[args.command](cfg, args)
        except (ConfigError, InputError) as exc:
            raise exc
        except (ParameterError, ShapeError) as exc:
            # bad parameter combinations surfaced while building from config
            raise ConfigError(str(exc)) from exc
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WieError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
