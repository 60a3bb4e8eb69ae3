"""Command-line entry point: experiment dispatch and reproducibility manifests.

Subcommands
-----------
run    Execute one experiment kind and write, under --out:
         <kind>.csv           rows `experiment,seed,t,quantity,value`
         <kind>_summary.json  derived estimates and pass/fail per property
         manifest.json        resolved config echo, seed list, version,
                              wall times, sha256 of every output file
       Exit 0 on success with all asserted properties passing, 2 on a
       property failure (failing seeds listed), 1 on config/IO errors.
check  Run the inequality/property suites; exit 0/2 as above.
norms  Compute the Besov norms of a stored field (binary + JSON sidecar).

Configuration is flat INI with sections [solver], [noise], [besov],
[experiment]; every key has a default, and the manifest echoes the fully
resolved values.  Passing a manifest.json as --config re-runs its experiment
with identical seeds, reproducing the CSV byte for byte.  All randomness
flows from the single [experiment] seed (overridable via --seed); per-member
seeds are derived by the splitmix64 rule in :mod:`spde_sync.experiments` and
recorded in the manifest.

Output files are written to a temporary name and renamed into place, so no
file is left partially written on failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__, besov, experiments
from .experiments import ExperimentConfig, default_experiment_config
from .noise import renorm_constant
from .solver import SolverConfig
from .torus import TorusGrid, load_field, save_field


class ConfigError(ValueError):
    """Malformed configuration; carries a line-aware diagnostic."""


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(" ", "").split(",") if tok)


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)


_SCHEMA = {
    ("solver", "d"): int,
    ("solver", "L"): float,
    ("solver", "N"): int,
    ("solver", "dt"): float,
    ("solver", "truncation"): int,
    ("solver", "mass_term"): float,
    ("solver", "nonlinearity"): _parse_float_list,
    ("solver", "scheme"): str,
    ("noise", "mass"): float,
    ("besov", "alpha"): float,
    ("besov", "p"): int,
    ("besov", "quad_points"): int,
    ("besov", "suite_alpha"): float,
    ("besov", "suite_p"): _parse_int_list,
    ("experiment", "kind"): str,
    ("experiment", "seed"): int,
    ("experiment", "ensemble"): int,
    ("experiment", "horizon"): float,
    ("experiment", "fit_start"): float,
    ("experiment", "fit_end"): float,
    ("experiment", "output_every"): float,
    ("experiment", "extremal"): float,
    ("experiment", "extremal_alt"): float,
    ("experiment", "r_values"): _parse_float_list,
    ("experiment", "gamma"): float,
    ("experiment", "pullback_span"): float,
    ("experiment", "sample_count"): int,
    ("experiment", "order_runs"): int,
    ("experiment", "pair_count"): int,
    ("experiment", "alpha0"): float,
    ("experiment", "delta"): float,
    ("experiment", "threads"): int,
}


def _line_of(text: str, section: str, key: str | None) -> int:
    """Best-effort line number of a section or key for diagnostics."""
    in_section = False
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("["):
            in_section = stripped == f"[{section}]"
            if key is None and in_section:
                return i
        elif in_section and key is not None:
            name = stripped.split("=", 1)[0].split(":", 1)[0].strip()
            if name == key:
                return i
    return 0


def read_config_file(path) -> dict:
    """Parse an INI file into {section: {key: parsed value}} with validation."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (N vs n)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    sections: dict = {}
    for section in parser.sections():
        if section not in {"solver", "noise", "besov", "experiment"}:
            raise ConfigError(
                f"{path}: line {_line_of(text, section, None)}: "
                f"unknown section [{section}]"
            )
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                raise ConfigError(
                    f"{path}: line {_line_of(text, section, key)}: "
                    f"unknown key {key!r} in [{section}]"
                )
            try:
                sections.setdefault(section, {})[key] = spec(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: line {_line_of(text, section, key)}: "
                    f"bad value for {key!r}: {exc}"
                ) from exc
    return sections


def resolve_config(kind: str, sections: dict) -> ExperimentConfig:
    """Build the fully resolved experiment configuration from section values."""
    sol = dict(sections.get("solver", {}))
    noi = dict(sections.get("noise", {}))
    bes = dict(sections.get("besov", {}))
    exp = dict(sections.get("experiment", {}))
    exp.pop("kind", None)

    grid = TorusGrid(d=int(sol.pop("d", 2)),
                     L=float(sol.pop("L", experiments.DEFAULT_TORUS_SIZE)),
                     N=int(sol.pop("N", 64)))
    truncation = int(sol.pop("truncation", grid.N // 2 - 1))
    mass = float(noi.pop("mass", 1.0))
    solver = SolverConfig(
        grid=grid,
        dt=float(sol.pop("dt", 1e-3)),
        truncation=truncation,
        renorm=renorm_constant(grid, truncation, mass),
        nonlinearity=tuple(sol.pop("nonlinearity", (0.0, 0.0, 1.0))),
        mass_term=float(sol.pop("mass_term", 1.0)),
        scheme=str(sol.pop("scheme", "semi_implicit")),
    )
    kwargs = {}
    for name in ("alpha", "p", "quad_points", "suite_alpha", "suite_p"):
        if name in bes:
            kwargs[name] = bes.pop(name)
    for name, value in exp.items():
        kwargs[name] = tuple(value) if isinstance(value, list) else value
    if "suite_p" in kwargs:
        kwargs["suite_p"] = tuple(int(x) for x in kwargs["suite_p"])
    if "r_values" in kwargs:
        kwargs["r_values"] = tuple(float(x) for x in kwargs["r_values"])
    return default_experiment_config(kind, solver=solver, **kwargs)


def config_echo(cfg: ExperimentConfig) -> dict:
    """Canonical resolved-values dict; re-parses to an identical config."""
    sol = cfg.solver
    return {
        "solver": {
            "d": sol.grid.d,
            "L": sol.grid.L,
            "N": sol.grid.N,
            "dt": sol.dt,
            "truncation": sol.truncation,
            "mass_term": sol.mass_term,
            "nonlinearity": list(sol.nonlinearity),
            "scheme": sol.scheme,
        },
        "noise": {"mass": sol.renorm.mass},
        "besov": {
            "alpha": cfg.alpha,
            "p": cfg.p,
            "quad_points": cfg.quad_points,
            "suite_alpha": cfg.suite_alpha,
            "suite_p": list(cfg.suite_p),
        },
        "experiment": {
            "kind": cfg.kind,
            "seed": cfg.seed,
            "ensemble": cfg.ensemble,
            "horizon": cfg.horizon,
            "fit_start": cfg.fit_start,
            "fit_end": cfg.fit_end,
            "output_every": cfg.output_every,
            "extremal": cfg.extremal,
            "extremal_alt": cfg.extremal_alt,
            "r_values": list(cfg.r_values),
            "gamma": cfg.gamma,
            "pullback_span": cfg.pullback_span,
            "sample_count": cfg.sample_count,
            "order_runs": cfg.order_runs,
            "pair_count": cfg.pair_count,
            "alpha0": cfg.alpha0,
            "delta": cfg.delta,
            "threads": cfg.threads,
        },
    }


def load_config(kind: str | None, path) -> ExperimentConfig:
    """Load from an INI file or a manifest JSON (its config echo)."""
    if path is None:
        if kind is None:
            raise ConfigError("no experiment kind given")
        return default_experiment_config(kind)
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    if p.suffix == ".json":
        manifest = json.loads(p.read_text())
        sections = manifest.get("config", manifest)
        manifest_kind = sections.get("experiment", {}).get("kind")
        return resolve_config(kind or manifest_kind, sections)
    sections = read_config_file(p)
    file_kind = sections.get("experiment", {}).get("kind")
    if kind is None and file_kind is None:
        raise ConfigError("experiment kind given neither on the command line "
                          "nor in the config file")
    return resolve_config(kind or file_kind, sections)


def atomic_write(path: Path, data: str | bytes):
    """Write to a temporary sibling and rename, so failures leave no partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data)
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def _sha256(path: Path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json_default(obj):
    import numpy as np

    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _cmd_run(args) -> int:
    cfg = load_config(args.experiment, args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.ensemble is not None:
        overrides["ensemble"] = args.ensemble
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    result = experiments.run_experiment(cfg)

    csv_path = out_dir / f"{cfg.kind}.csv"
    summary_path = out_dir / f"{cfg.kind}_summary.json"
    atomic_write(csv_path, experiments.csv_lines(result.rows))
    atomic_write(summary_path, json.dumps(result.summary, indent=2,
                                          sort_keys=True,
                                          default=_json_default) + "\n")
    outputs = {csv_path.name: _sha256(csv_path),
               summary_path.name: _sha256(summary_path)}

    if args.save_fields and result.field_dumps:
        fields_dir = out_dir / "fields"
        fields_dir.mkdir(exist_ok=True)
        for name, f in result.field_dumps.items():
            bin_path, json_path = save_field(f, fields_dir / name)
            outputs[f"fields/{bin_path.name}"] = _sha256(bin_path)
            outputs[f"fields/{json_path.name}"] = _sha256(json_path)

    manifest = {
        "experiment": cfg.kind,
        "config": config_echo(cfg),
        "seeds": cfg.member_seeds(),
        "version": __version__,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": outputs,
    }
    atomic_write(out_dir / "manifest.json",
                 json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    if not result.passed:
        print(f"{cfg.kind}: PROPERTY FAILURE; failing seeds: "
              f"{result.failing_seeds}", file=sys.stderr)
        return 2
    print(f"{cfg.kind}: ok ({csv_path})")
    return 0


def _cmd_check(args) -> int:
    solver = SolverConfig(grid=TorusGrid(L=experiments.DEFAULT_TORUS_SIZE,
                                         N=args.grid))
    cfg = default_experiment_config(
        "lemma_suite", solver=solver, pair_count=args.pairs, seed=args.seed,
        threads=args.threads if args.threads is not None else 0,
    )
    failures = 0

    result = experiments.run_lemma_suite(cfg)
    for name, ok in result.summary["checks"].items():
        print(f"check {name}: {'pass' if ok else 'FAIL'}")
        failures += not ok
    if result.failing_seeds:
        print(f"failing seeds: {result.failing_seeds}", file=sys.stderr)

    ok = _check_embedding(cfg)
    print(f"check embedding_sup_by_p: {'pass' if ok else 'FAIL'}")
    failures += not ok

    ok = _check_monotonicity(cfg)
    print(f"check functional_monotonicity: {'pass' if ok else 'FAIL'}")
    failures += not ok

    return 2 if failures else 0


def _check_embedding(cfg: ExperimentConfig) -> bool:
    """Observed sup-by-integral embedding ratios stay below the frozen constant."""
    grid = cfg.solver.grid
    params = cfg.besov_params()
    beta = cfg.alpha - grid.d / cfg.p
    worst = 0.0
    for i in range(100):
        f = experiments.corpus_field(grid, experiments.derive_seed(cfg.seed, 71), i)
        sup = besov.besov_norm_sup(f, cfg.alpha, params.s_grid)
        integral = besov.besov_norm_p(f, params.with_alpha(beta))
        if integral > 0:
            worst = max(worst, sup / integral)
    return worst <= experiments.EMBEDDING_SUP_BY_P


def _check_monotonicity(cfg: ExperimentConfig) -> bool:
    grid = cfg.solver.grid
    for i in range(50):
        g, f = experiments.ordered_corpus_pair(
            grid, experiments.derive_seed(cfg.seed, 72), i)
        for p in cfg.suite_p:
            if (besov.signed_power_integral(g, p)
                    > besov.signed_power_integral(f, p) + 1e-12):
                return False
    return True


def _cmd_norms(args) -> int:
    f = load_field(args.field)
    params = besov.BesovParams.for_grid(f.grid, args.alpha, args.p,
                                        J=args.quad_points)
    report = {
        "field": str(args.field),
        "alpha": args.alpha,
        "p": args.p,
        "sup_norm": besov.besov_norm_sup(f, args.alpha, params.s_grid),
        "p_norm": besov.besov_norm_p(f, params),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spde-sync",
        description="Synchronization-by-noise experiments for the "
                    "renormalized stochastic Allen-Cahn equation on the "
                    "2-torus.",
        exit_on_error=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment", exit_on_error=False)
    run.add_argument("--experiment", choices=experiments.EXPERIMENT_KINDS)
    run.add_argument("--config", help="INI config or manifest.json")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--ensemble", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--save-fields", action="store_true",
                     help="dump representative end-state fields")
    run.set_defaults(fn=_cmd_run)

    check = sub.add_parser("check", help="run the inequality/property suites",
                           exit_on_error=False)
    check.add_argument("--pairs", type=int, default=1000)
    check.add_argument("--grid", type=int, default=64)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--threads", type=int)
    check.set_defaults(fn=_cmd_check)

    norms = sub.add_parser("norms", help="Besov norms of a stored field",
                           exit_on_error=False)
    norms.add_argument("--field", required=True)
    norms.add_argument("--alpha", type=float, required=True)
    norms.add_argument("--p", type=int, required=True)
    norms.add_argument("--quad-points", type=int, default=64)
    norms.set_defaults(fn=_cmd_norms)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except argparse.ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse exits directly on unknown flags
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    except experiments.DegenerateFitError as exc:
        print(f"degenerate fit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
