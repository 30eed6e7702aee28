"""Command line entry point: ``qnetsim run | calibrate | export``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .mitigation import build_calibration
from .report import histogram_rows, plot_settings, plot_sweep, plot_triangle, summary_rows, write_csv
from .runner import DEFAULT_NOISE, ConfigError, ExperimentConfig, EXPERIMENTS, read_record, run
from .simcore import NoiseModel


def load_noise(spec: str | None) -> NoiseModel | None:
    """``none``, ``default`` or a path to a noise JSON file."""
    if spec is None or spec == "none":
        return None
    if spec == "default":
        return DEFAULT_NOISE
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"noise file not found: {spec}")
    try:
        return NoiseModel.from_dict(json.loads(path.read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{spec}: malformed noise config ({exc})") from exc


def _shots(value: str):
    if value == "paper-default":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"shots must be an integer or 'paper-default', got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnetsim", description="Simulated quantum-network Bell experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one experiment and write its JSON record")
    p.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    p.add_argument("--n", type=int, default=None, help="nodes (commnet) or branches (star)")
    p.add_argument("--shots", type=_shots, default="paper-default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", default="none", help="none, default, or a noise JSON path")
    p.add_argument("--mitigation", choices=("none", "pinv", "lsq"), default="none")
    p.add_argument("--calibration", default="exact", help="'exact' or a calibration JSON path")
    p.add_argument("--exact-probs", action="store_true", help="store exact probabilities instead of counts")
    p.add_argument("--settings-subset", type=int, default=None, help="random subset of commnet settings")
    p.add_argument("--bootstrap-resamples", type=int, default=1000, help="0 disables the bootstrap")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("calibrate", help="build a readout calibration matrix")
    p.add_argument("--n", type=int, required=True, help="number of measured qubits")
    p.add_argument("--noise", required=True)
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("export", help="tables and figures from records")
    p.add_argument("--record", action="append", required=True, help="record path (repeat for sweeps)")
    p.add_argument("--format", choices=("csv", "plotdata"), required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--no-plot", action="store_true")
    return parser


def cmd_run(args) -> int:
    config = ExperimentConfig(
        experiment=args.experiment,
        n=args.n,
        shots=args.shots,
        seed=args.seed,
        noise=load_noise(args.noise),
        mitigation=args.mitigation,
        calibration=args.calibration,
        exact_probs=args.exact_probs,
        settings_subset=args.settings_subset,
        bootstrap_resamples=args.bootstrap_resamples,
        workers=args.workers,
        output=args.out,
    )
    if config.calibration != "exact" and not Path(config.calibration).is_file():
        raise ConfigError(f"calibration file not found: {config.calibration}")
    record = run(config)
    summary = {k: v for k, v in record["derived"]["raw"].items() if not isinstance(v, list)}
    print(json.dumps({"out": args.out, **summary}))
    return 0


def cmd_calibrate(args) -> int:
    noise = load_noise(args.noise)
    if args.n < 1:
        raise ConfigError("n must be >= 1")
    cal = build_calibration(args.n, noise, mode=args.mode, shots=args.shots, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cal.save(args.out)
    print(json.dumps({"out": args.out, "mode": cal.mode, "condition_number": cal.condition_number}))
    return 0


def cmd_export(args) -> int:
    records = []
    for path in args.record:
        if not path:
            raise ConfigError("empty record path")
        records.append((Path(path), read_record(path)))
    out = Path(args.out_dir)
    written = []
    if args.format == "csv":
        rows = summary_rows([r for _, r in records])
        written.append(write_csv(rows, out / "derived.csv"))
        if not args.no_plot:
            fig = plot_sweep(rows, out / "derived.png")
            if fig is not None:
                written.append(fig)
    else:
        for path, rec in records:
            written.append(write_csv(histogram_rows(rec), out / f"{path.stem}_plotdata.csv"))
            if args.no_plot:
                continue
            if rec["config"]["experiment"] == "triangle":
                written.append(plot_triangle(rec, out / f"{path.stem}_hist.png"))
            else:
                written.append(plot_settings(rec, out / f"{path.stem}_hist.png"))
    for p in written:
        print(p)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "calibrate": cmd_calibrate, "export": cmd_export}[args.command]
    try:
        return handler(args)
    except (ConfigError, ValueError, FileNotFoundError, IsADirectoryError, KeyError) as exc:
        print(f"qnetsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
