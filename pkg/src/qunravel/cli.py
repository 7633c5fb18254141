"""Command-line entry point.

One JSON config file per experiment; the ``--seed``, ``--workers`` and
``--out`` flags override the corresponding config fields.  The default worker
count may come from the ``QUNRAVEL_WORKERS`` environment variable; precedence
is flag > config field > environment > 1.  No output carries a timestamp, so
identical configs produce byte-identical artifacts.

Exit status: 0 on success (verify: all criteria passed), 1 on runtime or
verification failure, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import DEFAULT_MASTER_SEED, AcceptanceContext, run_all
from .cavity import (
    CavityState,
    default_probe_model,
    probe_model_from_json_dict,
    probe_record_to_csv,
    purification_experiment,
    purification_report_to_json_dict,
    run_probe_sequence,
)
from .ensemble import report_to_json_dict, run_ensemble, timeseries_csv, trajectories_csv
from .errors import ConfigError, QunravelError
from .jsonio import dump_json, load_json, pairs_to_complex
from .master import (
    MasterEvolutionConfig,
    analytic_solution,
    density_path_to_csv,
    evolve_density,
)
from .noise import NOISE_ALGORITHM, NoiseSource
from .spectral import DensityMatrix, family_from_json_dict, offdiag_block_norm
from .trajectory import (
    Scheme,
    TrajectoryConfig,
    save_states,
    simulate,
    trajectory_to_csv,
)

_MODES = ("trajectory", "ensemble", "lindblad", "cavity", "verify")


def _load_config_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError("config", f"config file not found: {path}")
    try:
        doc = load_json(path)
    except ValueError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config", f"top level of {path} must be a JSON object")
    return doc


def _resolve(doc: dict, args) -> dict:
    """Apply flag and environment overrides; returns the resolved config dict."""
    cfg = dict(doc)
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if args.out is not None:
        cfg["out"] = str(args.out)
    if args.workers is not None:
        cfg["workers"] = args.workers
    elif "workers" not in cfg:
        env = os.environ.get("QUNRAVEL_WORKERS")
        if env is not None:
            try:
                cfg["workers"] = int(env)
            except ValueError as exc:
                raise ConfigError("QUNRAVEL_WORKERS", f"not an integer: {env!r}") from exc
        else:
            cfg["workers"] = 1
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers", f"must be >= 1, got {cfg['workers']}")
    cfg["workers"] = int(cfg["workers"])
    return cfg


def _require(cfg: dict, name: str):
    if name not in cfg:
        raise ConfigError(name, "required field is missing")
    return cfg[name]


def _load_family(cfg: dict, base: Path):
    rel = Path(str(_require(cfg, "family")))
    path = rel if rel.is_absolute() else base / rel
    if not path.exists():
        raise ConfigError("family", f"family file not found: {path}")
    try:
        return family_from_json_dict(load_json(path))
    except QunravelError:
        raise
    except Exception as exc:
        raise ConfigError("family", f"cannot parse {path}: {exc}") from exc


def _load_state_vector(cfg: dict, base: Path, field: str = "initial_state") -> np.ndarray:
    value = _require(cfg, field)
    if isinstance(value, str):
        path = Path(value)
        path = path if path.is_absolute() else base / path
        if not path.exists():
            raise ConfigError(field, f"state file not found: {path}")
        value = load_json(path)["amplitudes"]
    try:
        vec = pairs_to_complex(value)
    except Exception as exc:
        raise ConfigError(field, f"expected [re, im] pairs: {exc}") from exc
    if vec.ndim != 1:
        raise ConfigError(field, "expected a 1-d amplitude vector")
    return vec


def _trajectory_config(cfg: dict) -> TrajectoryConfig:
    section = _require(cfg, "trajectory")
    if not isinstance(section, dict):
        raise ConfigError("trajectory", "must be an object")
    try:
        return TrajectoryConfig(
            dt=float(_require(section, "dt")),
            t_final=float(_require(section, "t_final")),
            scheme=Scheme(section.get("scheme", Scheme.ITO_EULER_MARUYAMA.value)),
            renormalize_each_step=bool(section.get("renormalize_each_step", True)),
            collapse_epsilon=float(section.get("collapse_epsilon", 1e-4)),
            record_stride=int(section.get("record_stride", 1)),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("trajectory", str(exc)) from exc


def _master_config(cfg: dict) -> MasterEvolutionConfig:
    section = _require(cfg, "master")
    if not isinstance(section, dict):
        raise ConfigError("master", "must be an object")
    try:
        return MasterEvolutionConfig(
            dt=float(_require(section, "dt")),
            t_final=float(_require(section, "t_final")),
            record_stride=int(section.get("record_stride", 1)),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("master", str(exc)) from exc


def _out_dir(cfg: dict) -> Path:
    out = Path(str(_require(cfg, "out")))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _metadata(cfg: dict) -> dict:
    return {
        "library_version": __version__,
        "rng_algorithm": NOISE_ALGORITHM,
        "master_seed": int(_require(cfg, "master_seed")),
        "resolved_config": cfg,
    }


def _cmd_trajectory(cfg: dict, base: Path) -> int:
    family = _load_family(cfg, base)
    psi0 = _load_state_vector(cfg, base)
    tcfg = _trajectory_config(cfg)
    seed = int(_require(cfg, "master_seed"))
    stream = int(cfg.get("stream_index", 0))
    out = _out_dir(cfg)
    path = simulate(psi0, family, tcfg, NoiseSource(seed, stream, family.size))
    with open(out / "trajectory.csv", "w") as fh:
        trajectory_to_csv(path, fh)
    if cfg.get("dump_states", False):
        save_states(path, out / "states.npz")
    meta = _metadata(cfg)
    meta["verdict"] = -1 if path.verdict is None else int(path.verdict)
    meta["verdict_time"] = path.verdict_time
    dump_json(meta, out / "metadata.json")
    print(f"trajectory: verdict={meta['verdict']} verdict_time={meta['verdict_time']}")
    return 0


def _cmd_ensemble(cfg: dict, base: Path) -> int:
    family = _load_family(cfg, base)
    psi0 = _load_state_vector(cfg, base)
    tcfg = _trajectory_config(cfg)
    seed = int(_require(cfg, "master_seed"))
    M = int(_require(cfg, "M"))
    out = _out_dir(cfg)
    report = run_ensemble(psi0, family, tcfg, M, seed, cfg["workers"])
    doc = report_to_json_dict(report)
    doc["metadata"]["resolved_config"] = cfg
    dump_json(doc, out / "report.json")
    with open(out / "timeseries.csv", "w") as fh:
        timeseries_csv(report, fh)
    with open(out / "trajectories.csv", "w") as fh:
        trajectories_csv(report, fh)
    frac = report.collapse_counts / report.M
    print(f"ensemble: M={M} collapse fractions={np.round(frac, 4).tolist()} undecided={report.undecided}")
    return 0


def _cmd_lindblad(cfg: dict, base: Path) -> int:
    family = _load_family(cfg, base)
    psi0 = _load_state_vector(cfg, base)
    mcfg = _master_config(cfg)
    out = _out_dir(cfg)
    rho0 = DensityMatrix.from_pure(psi0)
    path = evolve_density(rho0, family, mcfg)
    with open(out / "density_path.csv", "w") as fh:
        density_path_to_csv(path, fh)
    sup_err = 0.0
    for t, state in zip(path.times, path.states):
        exact = analytic_solution(rho0, family, float(t)).entries
        sup_err = max(sup_err, float(np.linalg.norm(state - exact)))
    offd = np.array([offdiag_block_norm(s, family) for s in path.states])
    decay_err = float(np.abs(offd - offd[0] * np.exp(-path.times)).max())
    meta = _metadata(cfg)
    summary = {
        "metadata": meta,
        "comparison": {
            "sup_frobenius_error_vs_analytic": sup_err,
            "offdiag_decay_max_error": decay_err,
        },
    }
    dump_json(summary, out / "comparison.json")
    print(f"lindblad: sup error vs analytic {sup_err:.3e}, offdiag decay error {decay_err:.3e}")
    return 0


def _cmd_cavity(cfg: dict, base: Path) -> int:
    section = _require(cfg, "cavity")
    if not isinstance(section, dict):
        raise ConfigError("cavity", "must be an object")
    coeffs = _load_state_vector(section, base, "initial_coefficients")
    if "probe_model" in section and section["probe_model"] is not None:
        rel = Path(str(section["probe_model"]))
        path = rel if rel.is_absolute() else base / rel
        if not path.exists():
            raise ConfigError("cavity.probe_model", f"probe model file not found: {path}")
        probe = probe_model_from_json_dict(load_json(path))
    else:
        probe = default_probe_model(coeffs.shape[0])
    cav0 = CavityState(coeffs)
    seed = int(_require(cfg, "master_seed"))
    K = int(_require(section, "K"))
    out = _out_dir(cfg)
    experiment = section.get("experiment", "purification" if "R" in section else "sequence")
    if experiment == "sequence":
        stream = int(section.get("stream_index", 0))
        record = run_probe_sequence(
            cav0, probe, K, NoiseSource(seed, stream, 1),
            track_coefficients=bool(section.get("track_coefficients", True)),
        )
        with open(out / "probe_run.csv", "w") as fh:
            probe_record_to_csv(record, fh)
        meta = _metadata(cfg)
        meta["inferred_n"] = record.inferred_n
        dump_json(meta, out / "metadata.json")
        print(f"cavity sequence: inferred_n={record.inferred_n} f_plus={record.running_f_plus[-1]:.4f}")
    elif experiment == "purification":
        R = int(_require(section, "R"))
        report = purification_experiment(cav0, probe, K, R, seed, cfg["workers"])
        doc = purification_report_to_json_dict(report)
        doc["metadata"]["resolved_config"] = cfg
        dump_json(doc, out / "purification.json")
        print(
            f"cavity purification: histogram={report.histogram.tolist()} "
            f"unresolved={report.unresolved} chi2={report.chi_square.statistic:.2f}"
        )
    else:
        raise ConfigError("cavity.experiment", f"unknown experiment {experiment!r}")
    return 0


def _cmd_verify(cfg: dict, base: Path) -> int:
    seed = int(cfg.get("master_seed", DEFAULT_MASTER_SEED))
    ctx = AcceptanceContext(master_seed=seed, workers=cfg["workers"])
    results = run_all(ctx, printer=print)
    if "out" in cfg:
        out = _out_dir(cfg)
        doc = {
            "metadata": {
                "library_version": __version__,
                "rng_algorithm": NOISE_ALGORITHM,
                "master_seed": seed,
                "resolved_config": cfg,
            },
            "criteria": [
                {"number": r.number, "name": r.name, "passed": r.passed, "detail": r.detail}
                for r in results
            ],
        }
        dump_json(doc, out / "acceptance.json")
    failed = [r.number for r in results if not r.passed]
    if failed:
        print(f"FAILED criteria: {failed}")
        return 1
    print("all acceptance criteria passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qunravel",
        description="Trajectory, ensemble, deterministic, and probe-model experiments",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in _MODES:
        p = sub.add_parser(mode, help=f"run the {mode} experiment")
        p.add_argument("--config", type=Path, required=(mode != "verify"),
                       help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--workers", type=int, help="override worker count")
        p.add_argument("--out", type=Path, help="override output directory")
    return parser


_COMMANDS = {
    "trajectory": _cmd_trajectory,
    "ensemble": _cmd_ensemble,
    "lindblad": _cmd_lindblad,
    "cavity": _cmd_cavity,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            doc = _load_config_file(args.config)
            base = args.config.parent
        else:
            doc, base = {}, Path.cwd()
        cfg = _resolve(doc, args)
        return _COMMANDS[args.mode](cfg, base)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except QunravelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
