"""Command-line experiment harness.

Verbs: run, depth-sweep, coupling-sweep, nfe-compare, sync-demo, make-bundle.
Settings come from an INI config file (--config) overridden by flags; the
effective configuration is echoed into the output directory next to the CSV
results. All outputs are deterministic given config + seed, wall-time
columns aside.

Exit codes: 0 success, 2 configuration error, 3 dataset load error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import model as mdl
from .coupling import compute_attention, uniform_coupling
from .diagnostics import (frequency_sync_residual, order_parameter_all,
                          pairwise_distance_stats, sync_report)
from .dynamics import DynamicsSpec, energy, make_rhs
from .graphs import (BundleError, Graph, generate_synthetic,
                     largest_connected_component, load_bundle, save_bundle)
from .solvers import SolverConfig, integrate_dopri5, integrate_fixed
from .training import TrainConfig, run_seeded

SCHEMA_VERSION = 1


class ConfigError(Exception):
    pass


def parse_synthetic_spec(spec: str):
    """'synthetic:KIND:k=v,...' -> generate_synthetic arguments."""
    parts = spec.split(":")
    if len(parts) < 2 or parts[0] != "synthetic":
        raise ConfigError(f"bad synthetic spec {spec!r}")
    kind = parts[1]
    kwargs = {"n": 20, "f": 8, "seed": 0, "p": None}
    if len(parts) > 2 and parts[2]:
        for item in parts[2].split(","):
            if "=" not in item:
                raise ConfigError(f"bad synthetic parameter {item!r}")
            key, value = item.split("=", 1)
            if key not in kwargs:
                raise ConfigError(f"unknown synthetic parameter {key!r}")
            kwargs[key] = float(value) if key == "p" else int(value)
    return kind, kwargs


def load_dataset(dataset: str, use_lcc=True) -> Graph:
    if dataset.startswith("synthetic:"):
        kind, kw = parse_synthetic_spec(dataset)
        g = generate_synthetic(kind, kw["n"], kw["f"], kw["seed"], p=kw["p"])
    else:
        g = load_bundle(dataset)
    if use_lcc:
        g, _ = largest_connected_component(g)
    return g


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _echo_config(args, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cp = configparser.ConfigParser()
    cp["effective"] = {k: str(v) for k, v in sorted(vars(args).items()) if k != "func"}
    with open(out / "effective_config.ini", "w") as fh:
        cp.write(fh)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        max_epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay,
        optimizer=args.optimizer, patience=args.patience, seed=args.seed,
        dropout=args.dropout, strength=args.K, t_end=args.T, dt=args.dt,
        hidden_dim=args.hidden, heads=args.heads, d_k=args.d_k,
        dynamics=args.dynamics_kind, scale_power=args.scale_power,
        omega_mode=args.omega_mode, beta0=args.beta0, learn_beta=not args.freeze_beta,
    )


_DYNAMICS_ALIASES = {
    "kuramoto": ("kuramoto", {}),
    "grand_linear": ("grand_linear", {}),
    "grand_modified": ("grand_modified", {}),
    # source-free ablation: beta pinned to zero, alpha still trainable
    "grand_modified_nosource": ("grand_modified", {"beta0": 0.0, "freeze_beta": True}),
}


def _resolve_dynamics(args, name):
    if name not in _DYNAMICS_ALIASES:
        raise ConfigError(
            f"field 'dynamics' has unknown value {name!r}; "
            f"choose from {sorted(_DYNAMICS_ALIASES)}"
        )
    kind, overrides = _DYNAMICS_ALIASES[name]
    args.dynamics_kind = kind
    for key, value in overrides.items():
        setattr(args, key, value)
    return args


def cmd_run(args) -> int:
    g = load_dataset(args.dataset)
    _echo_config(args, args.out)
    per_class_values = args.per_class_values or [args.per_class]
    rows = []
    for per_class in per_class_values:
        run_args = _resolve_dynamics(_copy_args(args), args.dynamics)
        cfg = _train_config(run_args)
        summary = run_seeded(g, cfg, args.splits, args.seeds,
                             per_class=per_class, val_count=args.val_count,
                             workers=args.workers)
        rows.append((SCHEMA_VERSION, g.name or args.dataset, args.dynamics,
                     args.K, args.T, args.dt, args.splits, args.seeds,
                     per_class, f"{summary.mean_acc:.6f}", f"{summary.std_acc:.6f}",
                     summary.diverged))
    _write_csv(
        Path(args.out) / "results.csv",
        ["schema_version", "dataset", "dynamics", "K", "T", "dt",
         "splits", "seeds", "per_class", "mean_acc", "std_acc", "diverged"],
        rows,
    )
    return 0


def cmd_depth_sweep(args) -> int:
    g = load_dataset(args.dataset)
    _echo_config(args, args.out)
    dynamics_list = [d.strip() for d in args.dynamics.split(",")]
    rows = []
    for name in dynamics_list:
        for t_end in args.T_values:
            run_args = _resolve_dynamics(_copy_args(args), name)
            run_args.T = t_end
            run_args.dt = 0.1  # fixed-step Euler comparison
            cfg = _train_config(run_args)
            summary = run_seeded(g, cfg, args.splits, args.seeds,
                                 per_class=args.per_class, val_count=args.val_count,
                                 workers=args.workers)
            spread = _final_spread(g, cfg)
            rows.append((SCHEMA_VERSION, g.name or args.dataset, name, args.K,
                         t_end, 0.1, args.splits, args.seeds,
                         f"{summary.mean_acc:.6f}", f"{summary.std_acc:.6f}",
                         f"{spread:.6e}"))
    _write_csv(
        Path(args.out) / "depth_sweep.csv",
        ["schema_version", "dataset", "dynamics", "K", "T", "dt", "splits",
         "seeds", "mean_acc", "std_acc", "final_max_pairwise"],
        rows,
    )
    return 0


def _final_spread(g, cfg: TrainConfig) -> float:
    """Max pairwise distance of X(T) for a freshly initialized model."""
    params = mdl.init_params(
        g, cfg.hidden_dim, heads=cfg.heads, d_k=cfg.d_k, strength=cfg.strength,
        t_end=cfg.t_end, dt=cfg.dt, dynamics=cfg.dynamics, seed=cfg.seed,
        scale_power=cfg.scale_power, omega_mode=cfg.omega_mode,
        beta0=cfg.beta0, learn_beta=cfg.learn_beta,
    )
    _, tape = mdl.forward(g, params)
    return pairwise_distance_stats(tape.states[-1])[0]


def cmd_coupling_sweep(args) -> int:
    if args.dynamics != "kuramoto":
        raise ConfigError("field 'dynamics' must be 'kuramoto' for coupling-sweep")
    g = load_dataset(args.dataset)
    _echo_config(args, args.out)
    rows = []
    for strength in args.K_values:
        run_args = _resolve_dynamics(_copy_args(args), "kuramoto")
        run_args.K = strength
        cfg = _train_config(run_args)
        summary = run_seeded(g, cfg, args.splits, args.seeds,
                             per_class=args.per_class, val_count=args.val_count,
                             workers=args.workers)
        params = mdl.init_params(g, cfg.hidden_dim, heads=cfg.heads, d_k=cfg.d_k,
                                 strength=strength, t_end=cfg.t_end, dt=cfg.dt,
                                 dynamics="kuramoto", seed=cfg.seed)
        _, tape = mdl.forward(g, params)
        report = sync_report(tape.states[-1])
        rows.append((SCHEMA_VERSION, g.name or args.dataset, strength, args.T,
                     f"{summary.mean_acc:.6f}", f"{summary.std_acc:.6f}",
                     f"{report.order_r.mean():.6f}", f"{report.max_pairwise:.6e}"))
    _write_csv(
        Path(args.out) / "coupling_sweep.csv",
        ["schema_version", "dataset", "K", "T", "mean_acc", "std_acc",
         "mean_order_r", "final_max_pairwise"],
        rows,
    )
    return 0


def cmd_nfe_compare(args) -> int:
    g = load_dataset(args.dataset)
    _echo_config(args, args.out)
    params = mdl.init_params(g, args.hidden, heads=args.heads, d_k=args.d_k,
                             strength=args.K, t_end=args.T, dt=args.dt, seed=args.seed)
    x0 = mdl.encode(g, params)
    a = compute_attention(x0, params.attn, g)
    cfg = SolverConfig(method="dopri5", t_end=args.T, rtol=args.rtol,
                       atol=args.atol, max_nfe=args.max_nfe)
    rows = []
    nfes = {}
    for kind in ("kuramoto", "grand_linear"):
        if kind == "kuramoto":
            spec = DynamicsSpec(kind="kuramoto", coupling=a, strength=args.K, omega=x0)
        else:
            spec = DynamicsSpec(kind="grand_linear", coupling=a)
        traj = integrate_dopri5(x0, make_rhs(spec), cfg)
        nfes[kind] = traj.nfe
        rows.append((SCHEMA_VERSION, g.name or args.dataset, kind, args.rtol,
                     args.atol, traj.nfe, traj.accepted, traj.rejected))
    ratio = nfes["kuramoto"] / max(1, nfes["grand_linear"])
    _write_csv(
        Path(args.out) / "nfe_compare.csv",
        ["schema_version", "dataset", "dynamics", "rtol", "atol",
         "nfe", "accepted", "rejected"],
        rows,
    )
    with open(Path(args.out) / "nfe_ratio.json", "w") as fh:
        json.dump({"nfe_kuramoto": nfes["kuramoto"],
                   "nfe_grand_linear": nfes["grand_linear"],
                   "ratio": ratio}, fh)
        fh.write("\n")
    print(f"NFE kuramoto={nfes['kuramoto']} grand_linear={nfes['grand_linear']} "
          f"ratio={ratio:.2f}")
    return 0


def cmd_sync_demo(args) -> int:
    """Identical versus distinct natural frequencies, side by side, no training."""
    g = load_dataset(args.dataset)
    _echo_config(args, args.out)
    rng = np.random.default_rng(args.seed)
    a = uniform_coupling(g, with_self_loops=False)
    x0 = rng.uniform(0.0, 1.0, size=(g.n, 1))
    omega = rng.uniform(-0.1, 0.1, size=(g.n, 1))
    cases = {
        "identical": DynamicsSpec(kind="kuramoto_identical", coupling=a,
                                  strength=args.K),
        "distinct": DynamicsSpec(kind="kuramoto", coupling=a, strength=args.K,
                                 omega=omega),
    }
    cfg = SolverConfig(method="euler", dt=args.dt, t_end=args.T)
    for name, spec in cases.items():
        traj = integrate_fixed(x0, make_rhs(spec), cfg, record=True)
        rows = []
        rhs = make_rhs(spec)
        stride = max(1, len(traj.states) // args.max_rows)
        for idx in range(0, len(traj.states), stride):
            t, x = traj.times[idx], traj.states[idx]
            r, _ = order_parameter_all(x)
            mx, _ = pairwise_distance_stats(x)
            u = energy(x, a)
            dx = rhs(x)
            freq = pairwise_distance_stats(dx)[0] if g.n >= 2 else 0.0
            rows.append((SCHEMA_VERSION, f"{t:.6f}", name, f"{mx:.8e}",
                         f"{r[0]:.8f}", f"{u[0]:.8e}", f"{freq:.8e}"))
        _write_csv(
            Path(args.out) / f"sync_demo_{name}.csv",
            ["schema_version", "time", "case", "max_pairwise", "order_r",
             "energy", "freq_residual"],
            rows,
        )
        final = rows[-1]
        print(f"{name}: final max_pairwise={final[3]} order_r={final[4]} "
              f"energy={final[5]} freq_residual={final[6]}")
    return 0


def cmd_make_bundle(args) -> int:
    kind, kw = parse_synthetic_spec(args.spec)
    try:
        g = generate_synthetic(kind, kw["n"], kw["f"], kw["seed"], p=kw["p"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    save_bundle(g, args.out)
    print(f"wrote bundle {args.out}: n={g.n}, edges={g.num_edges}")
    return 0


def _copy_args(args):
    return argparse.Namespace(**vars(args))


def _float_list(text):
    return [float(v) for v in text.split(",") if v]


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kuramoto-gnn",
        description="Oscillator-dynamics graph network experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, training=True):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--dataset", default="synthetic:ring:n=20,f=8,seed=0",
                       help="bundle directory or synthetic:KIND:k=v,...")
        p.add_argument("--dynamics", default="kuramoto")
        p.add_argument("--K", type=float, default=1.0)
        p.add_argument("--T", type=float, default=1.0)
        p.add_argument("--dt", type=float, default=0.1)
        p.add_argument("--solver", default="euler",
                       choices=["euler", "rk4", "dopri5"])
        p.add_argument("--rtol", type=float, default=1e-7)
        p.add_argument("--atol", type=float, default=1e-7)
        p.add_argument("--out", default="results")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        if training:
            p.add_argument("--splits", type=int, default=1)
            p.add_argument("--seeds", type=int, default=1)
            p.add_argument("--per-class", dest="per_class", type=int, default=20)
            p.add_argument("--val-count", dest="val_count", type=int, default=500)
            p.add_argument("--epochs", type=int, default=300)
            p.add_argument("--lr", type=float, default=0.01)
            p.add_argument("--weight-decay", dest="weight_decay", type=float, default=5e-4)
            p.add_argument("--optimizer", default="adam",
                           choices=["adam", "sgd_momentum"])
            p.add_argument("--patience", type=int, default=100)
            p.add_argument("--dropout", type=float, default=0.4)
        p.add_argument("--hidden", type=int, default=64)
        p.add_argument("--heads", type=int, default=4)
        p.add_argument("--d-k", dest="d_k", type=int, default=16)
        p.add_argument("--scale-power", dest="scale_power", type=float, default=1.0)
        p.add_argument("--omega-mode", dest="omega_mode", default="tied",
                       choices=["tied", "zero"])
        p.add_argument("--beta0", type=float, default=1.0)
        p.add_argument("--freeze-beta", dest="freeze_beta", action="store_true")

    p_run = sub.add_parser("run", help="train and report mean/std accuracy")
    common(p_run)
    p_run.add_argument("--per-class-values", type=_int_list, default=None,
                       help="label-rate sweep: comma-separated counts per class")
    p_run.set_defaults(func=cmd_run)

    p_depth = sub.add_parser("depth-sweep", help="accuracy across horizons T")
    common(p_depth)
    p_depth.add_argument("--T-values", type=_float_list, default=[1, 4, 8])
    p_depth.set_defaults(func=cmd_depth_sweep)

    p_coup = sub.add_parser("coupling-sweep", help="accuracy across strengths K")
    common(p_coup)
    p_coup.add_argument("--K-values", type=_float_list, default=[0.4, 0.6, 0.8, 1, 1.5, 2, 3])
    p_coup.set_defaults(func=cmd_coupling_sweep)

    p_nfe = sub.add_parser("nfe-compare", help="adaptive-solver work comparison")
    common(p_nfe, training=False)
    p_nfe.add_argument("--max-nfe", dest="max_nfe", type=int, default=2_000_000)
    p_nfe.set_defaults(func=cmd_nfe_compare)

    p_sync = sub.add_parser("sync-demo", help="synchronization time series")
    common(p_sync, training=False)
    p_sync.add_argument("--max-rows", dest="max_rows", type=int, default=500)
    p_sync.set_defaults(func=cmd_sync_demo)

    p_bundle = sub.add_parser("make-bundle", help="write a synthetic bundle to disk")
    p_bundle.add_argument("--spec", required=True,
                          help="synthetic:KIND:k=v,... specification")
    p_bundle.add_argument("--out", required=True)
    p_bundle.set_defaults(func=cmd_make_bundle)
    return parser


_CONFIG_TYPES = {
    "K": float, "T": float, "dt": float, "rtol": float, "atol": float,
    "lr": float, "weight_decay": float, "dropout": float, "scale_power": float,
    "beta0": float,
    "splits": int, "seeds": int, "per_class": int, "val_count": int,
    "epochs": int, "patience": int, "hidden": int, "heads": int, "d_k": int,
    "workers": int, "seed": int, "max_nfe": int, "max_rows": int,
    "T_values": _float_list, "K_values": _float_list, "per_class_values": _int_list,
    "freeze_beta": lambda v: v.lower() in ("1", "true", "yes"),
}


def apply_config_file(args, parser_defaults):
    """Overlay file values under explicit command-line flags.

    Precedence: flag > file > default. A flag counts as explicit when its
    value differs from the parser default.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep flag names like T and K case-sensitive
    read = cp.read(args.config)
    if not read:
        raise ConfigError(f"cannot read config file {args.config!r}")
    for section in cp.sections():
        for key, raw in cp[section].items():
            if not hasattr(args, key):
                raise ConfigError(f"field {key!r} in {args.config} is not a known setting")
            if getattr(args, key) != parser_defaults.get(key):
                continue  # explicit flag wins
            caster = _CONFIG_TYPES.get(key, str)
            try:
                setattr(args, key, caster(raw))
            except ValueError as exc:
                raise ConfigError(f"field {key!r}: cannot parse {raw!r}") from exc
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if getattr(args, "config", None):
            defaults = {
                action.dest: action.default
                for action in parser._subparsers._group_actions[0]
                .choices[args.command]._actions
            }
            apply_config_file(args, defaults)
        if hasattr(args, "dynamics") and args.command != "make-bundle":
            for name in str(args.dynamics).split(","):
                if name.strip() not in _DYNAMICS_ALIASES:
                    raise ConfigError(
                        f"field 'dynamics' has unknown value {name.strip()!r}")
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except BundleError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
