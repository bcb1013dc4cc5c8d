"""Command-line interface.

Subcommands: ``sweep``, ``estimate``, ``check-spam`` and ``make-design``.
Exit codes: 0 ok, 1 usage or parse error, 2 SPAM check failed, 3 numerical
failure (singular frame or degenerate data), 4 data/frame shape mismatch,
5 SPAM error too large to split by gauge.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, hs, io, sim, tomo
from .errors import (
    DegenerateDataError,
    FrameError,
    MissingShotsError,
    QPTError,
    ShapeMismatchError,
    SpamCorrectionError,
)

EXIT_OK, EXIT_USAGE, EXIT_CHECK_FAILED, EXIT_NUMERICAL, EXIT_SHAPE, EXIT_SPAM_POWER = 0, 1, 2, 3, 4, 5

RECORD_COLUMNS = (
    "grid_index",
    "noise_param",
    "estimator",
    "run_index",
    "seed",
    "fid_err_entanglement",
    "fid_err_average",
    "abs_fid_err_entanglement",
    "abs_fid_err_average",
    "eigen_delta",
    "cp_slack",
    "tp_slack",
    "spam_check_passed",
    "error",
)
AGGREGATE_COLUMNS = ("grid_index", "noise_param", "total_spam", "estimator", "n") + tuple(
    f"{stat}_{m}" for m in sim.METRICS for stat in ("mean", "sigma")
)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything needed to reproduce a sweep."""

    name: str = "custom"
    design: str = "minimal"
    noise_kind: str = "depolarizing"
    gate_gamma: float = 0.99
    grid: list = field(default_factory=lambda: [round(0.005 * i, 10) for i in range(9)])
    n_runs: int = 50
    shots: object = 5000
    estimators: list = field(default_factory=lambda: [e.tag for e in sim.DEFAULT_ESTIMATORS])
    base_seed: int = 20240601
    truncate_p: bool = True
    fidelity_convention: str = "average"
    formats: list = field(default_factory=lambda: ["csv", "json"])
    workers: int = 1
    dump_data: bool = False

    def validate(self):
        if self.design not in sim.DESIGNS:
            raise UsageError(f"unknown design {self.design!r}; choose from {sorted(sim.DESIGNS)}")
        if self.noise_kind not in ("depolarizing", "coherent"):
            raise UsageError(f"noise_kind must be 'depolarizing' or 'coherent', got {self.noise_kind!r}")
        if not self.grid:
            raise UsageError("grid is empty")
        if int(self.n_runs) < 1:
            raise UsageError("n_runs must be >= 1")
        if not (self.shots == "exact" or (isinstance(self.shots, int) and self.shots >= 1)):
            raise UsageError(f"shots must be a positive integer or 'exact', got {self.shots!r}")
        if self.fidelity_convention not in ("average", "entanglement"):
            raise UsageError("fidelity_convention must be 'average' or 'entanglement'")
        if set(self.formats) - {"csv", "json"}:
            raise UsageError(f"unknown output format in {self.formats}")
        if self.dump_data and self.shots == "exact":
            raise UsageError("--dump-data writes integer counts and needs finite --shots")
        try:
            specs = [sim.EstimatorSpec.parse(e) for e in self.estimators]
            self.noise_grid()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        self.estimators = [s.tag for s in specs]
        return self

    def design_obj(self) -> sim.ExperimentDesign:
        base = sim.DESIGNS[self.design]
        shots = None if self.shots == "exact" else int(self.shots)
        return sim.ExperimentDesign(base.preps, base.bases, base.tracked_effects, shots, True)

    def noise_grid(self):
        if self.noise_kind == "coherent":
            return sim.coherent_grid(self.grid, self.gate_gamma)
        return sim.depolarizing_grid(self.grid, self.gate_gamma)

    def to_dict(self):
        return asdict(self)


_FIG_DEPOL = dict(noise_kind="depolarizing", grid=[round(0.005 * i, 10) for i in range(9)])
_FIG_COHERENT = dict(noise_kind="coherent", grid=[round(0.0125 * i, 10) for i in range(9)])
BUILTIN_CONFIGS = {
    "paper-fig1-depol": RunConfig(name="paper-fig1-depol", **_FIG_DEPOL),
    "paper-fig2-depol": RunConfig(name="paper-fig2-depol", **_FIG_DEPOL),
    "paper-fig1-coherent": RunConfig(name="paper-fig1-coherent", **_FIG_COHERENT),
    "paper-fig2-coherent": RunConfig(name="paper-fig2-coherent", **_FIG_COHERENT),
}


def load_config(spec: str | None) -> RunConfig:
    if spec is None:
        return RunConfig()
    if spec in BUILTIN_CONFIGS:
        return copy.deepcopy(BUILTIN_CONFIGS[spec])
    path = Path(spec)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {spec!r} (not a builtin name either): {exc}") from None
    unknown = set(raw) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**raw)


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _shots(text: str):
    if text == "exact":
        return "exact"
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"shots must be an integer or 'exact', got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("shots must be >= 1")
    return n


def _formats(text: str) -> list:
    out = [f.strip() for f in text.split(",") if f.strip()]
    if not out or set(out) - {"csv", "json"}:
        raise argparse.ArgumentTypeError(f"--format takes a subset of csv,json, got {text!r}")
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spamqpt", description="Standard and SPAM-corrected quantum process tomography.")
    parser.add_argument("--version", action="version", version=f"spamqpt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep", help="simulate QPT over a grid of SPAM noise strengths")
    p.add_argument("--config", help="builtin config name (%s) or path to a JSON config" % ", ".join(BUILTIN_CONFIGS))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="base seed; run r uses seed+r")
    p.add_argument("--shots", type=_shots, help="shots per circuit, or 'exact' for infinite shots")
    p.add_argument("--grid", type=_float_list, help="comma-separated noise parameters (per-side 1-gamma, or phi)")
    p.add_argument("--runs", type=int, help="replications per grid point")
    p.add_argument("--estimators", help="comma-separated estimators, e.g. standard,corrected:0.5,ols,overcomplete")
    p.add_argument("--gauge-p", type=_float_list, help="gauge splits used for every corrected/overcomplete estimator")
    p.add_argument("--no-truncate-p", action="store_true", help="do not rank-truncate gate data in the overcomplete estimator")
    p.add_argument("--format", type=_formats, help="output formats, subset of csv,json")
    p.add_argument("--workers", type=int, help="worker processes for replications")
    p.add_argument("--dump-data", action="store_true", help="also write frames and per-run counts files")

    p = sub.add_parser("estimate", help="estimate a process from recorded counts")
    p.add_argument("--frame", required=True, help="frame JSON file")
    p.add_argument("--counts", required=True, help="gate-circuit counts CSV")
    p.add_argument("--calibration", help="calibration (no-gate) counts CSV; enables SPAM correction")
    p.add_argument("--estimator", choices=("auto",) + sim.EstimatorSpec.KINDS, default="auto",
                   help="estimator; auto picks corrected/overcomplete with calibration data, else standard/ols")
    p.add_argument("--gauge-p", type=_float_list, default=[0.5], help="gauge split(s) for SPAM correction")
    p.add_argument("--no-truncate-p", action="store_true", help="do not rank-truncate gate data (overcomplete)")
    p.add_argument("--target", help="target unitary for fidelity: 'xpi2' or a JSON file with 'real' and 'imag'")
    p.add_argument("--out", help="output JSON path (default: stdout)")

    p = sub.add_parser("check-spam", help="test calibration data against the a-priori frame")
    p.add_argument("--frame", required=True, help="frame JSON file")
    p.add_argument("--calibration", required=True, help="calibration counts CSV")
    p.add_argument("--out", help="also write the report as JSON here")

    p = sub.add_parser("make-design", help="write a builtin experiment design and its frames")
    p.add_argument("design", choices=sorted(sim.DESIGNS), help="builtin design")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--shots", type=_shots, default=5000, help="shots per circuit recorded in design.json")
    return parser


def _resolve_sweep_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.shots is not None:
        cfg.shots = args.shots
    if args.grid is not None:
        cfg.grid = args.grid
    if args.runs is not None:
        cfg.n_runs = args.runs
    if args.estimators is not None:
        cfg.estimators = [e for e in args.estimators.split(",") if e.strip()]
    if args.gauge_p is not None:
        kept = [e for e in cfg.estimators if sim.EstimatorSpec.parse(e).gauge_p is None]
        kinds = []
        for e in cfg.estimators:
            k = sim.EstimatorSpec.parse(e).kind
            if k in ("corrected", "overcomplete") and k not in kinds:
                kinds.append(k)
        cfg.estimators = kept + [f"{k}:{p:g}" for k in kinds or ["corrected"] for p in args.gauge_p]
    if args.no_truncate_p:
        cfg.truncate_p = False
    if args.format is not None:
        cfg.formats = args.format
    if args.workers is not None:
        cfg.workers = args.workers
    if args.dump_data:
        cfg.dump_data = True
    return cfg.validate()


def _write_records(path, records, header):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([io.fmt(getattr(r, c)) for c in RECORD_COLUMNS])


def _total_spam(cfg, param):
    return 2 * param if cfg.noise_kind == "depolarizing" else math.nan


def _write_aggregates_csv(path, aggregates, cfg, header):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for a in aggregates:
            row = [a.grid_index, io.fmt(a.noise_param), io.fmt(_total_spam(cfg, a.noise_param)), a.estimator, a.n]
            for m in sim.METRICS:
                row += [io.fmt(a.mean[m]), io.fmt(a.sigma[m])]
            w.writerow(row)


def _nan_to_none(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def _aggregates_json(aggregates, cfg, meta):
    return {
        "_meta": meta,
        "config": cfg.to_dict(),
        "aggregates": [
            {
                "grid_index": a.grid_index,
                "noise_param": a.noise_param,
                "total_spam": _nan_to_none(_total_spam(cfg, a.noise_param)),
                "estimator": a.estimator,
                "n": a.n,
                "mean": {k: _nan_to_none(v) for k, v in a.mean.items()},
                "sigma": {k: _nan_to_none(v) for k, v in a.sigma.items()},
            }
            for a in aggregates
        ],
    }


def _write_plot(path, result, cfg, metric, header):
    tags = cfg.estimators
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        fh.write(f"# metric: {metric}; noise_param is {'per-side 1-gamma' if cfg.noise_kind == 'depolarizing' else 'phi (rad)'}\n")
        fh.write("# columns: noise_param " + " ".join(f"{t}_mean {t}_sigma" for t in tags) + "\n")
        for gi, param in enumerate(cfg.grid):
            cells = [io.fmt(float(param))]
            for t in tags:
                a = result.aggregate(t, gi)[0]
                cells += [io.fmt(a.mean[metric]), io.fmt(a.sigma[metric])]
            fh.write(" ".join(cells) + "\n")


def _dump_data(out: Path, cfg: RunConfig, header):
    design = cfg.design_obj()
    basis = hs.build_basis(2)
    io.write_frame(design.frame(basis), out / "frame.json")
    io.write_frame(design.full_frame(basis), out / "frame_full.json")
    data_dir = out / "data"
    data_dir.mkdir(exist_ok=True)
    pairs = {b: sim.BASIS_OUTCOMES[b] for b in design.bases}
    for gi, noise in enumerate(cfg.noise_grid()):
        for r in range(cfg.n_runs):
            ds = sim.simulate_dataset(design, noise, cfg.base_seed + r, basis)
            stem = data_dir / f"g{gi:02d}_r{r:03d}"
            io.write_counts(ds.p_hat, pairs, f"{stem}_gate.csv", header)
            io.write_counts(ds.i_hat, pairs, f"{stem}_calibration.csv", header)


def cmd_sweep(args) -> int:
    cfg = _resolve_sweep_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.to_dict()
    h = io.config_hash(resolved)
    header = io.header_line(h, cfg.base_seed)
    (out / "config.json").write_text(json.dumps({"_meta": io.meta(h, cfg.base_seed), **resolved}, indent=2) + "\n")

    result = sim.sweep(cfg.noise_grid(), cfg.n_runs, cfg.design_obj(), cfg.estimators,
                       cfg.base_seed, cfg.truncate_p, max(1, cfg.workers))
    if "csv" in cfg.formats:
        _write_records(out / "records.csv", result.records, header)
        _write_aggregates_csv(out / "aggregates.csv", result.aggregates, cfg, header)
    if "json" in cfg.formats:
        blob = _aggregates_json(result.aggregates, cfg, io.meta(h, cfg.base_seed))
        (out / "aggregates.json").write_text(json.dumps(blob, indent=2) + "\n")
    _write_plot(out / "plot_fig1.dat", result, cfg, f"fid_err_{cfg.fidelity_convention}", header)
    _write_plot(out / "plot_fig2.dat", result, cfg, "eigen_delta", header)

    failures = [r for r in result.records if r.error]
    warn_path = out / "warnings.txt"
    if failures:
        with open(warn_path, "w") as fh:
            fh.write(f"# {header}\n")
            for r in failures:
                fh.write(f"grid {r.grid_index} run {r.run_index} {r.estimator}: {r.error}\n")
        print(f"warning: {len(failures)} estimator failures, see {warn_path}", file=sys.stderr)
    elif warn_path.exists():
        warn_path.unlink()
    if cfg.dump_data:
        _dump_data(out, cfg, header)
    print(f"wrote sweep '{cfg.name}' ({len(result.records)} records) to {out}")
    return EXIT_OK


def _load_target(spec):
    if spec is None:
        return None
    if spec.lower() == "xpi2":
        return hs.X_PI_2
    try:
        raw = json.loads(Path(spec).read_text())
        return np.array(raw["real"], dtype=float) + 1j * np.array(raw.get("imag", 0.0), dtype=float)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise io.ParseError(f"cannot read target unitary {spec!r}: {exc}") from None


def run_estimate(frame, gate, calib, estimator="auto", gauge_ps=(0.5,), truncate_p=True, target=None):
    """Apply the requested estimator(s); returns (list of result dicts, warnings)."""
    basis = hs.build_basis(frame.dim)
    warnings = []
    if estimator == "auto":
        if calib is None:
            estimator = "standard" if frame.is_square else "ols"
        else:
            estimator = "corrected" if frame.is_square else "overcomplete"
    if estimator in ("corrected", "overcomplete") and calib is None:
        raise UsageError(f"estimator {estimator!r} needs --calibration counts")
    if calib is None:
        warnings.append("no calibration counts supplied; SPAM correction was skipped")

    results = []
    if estimator in ("standard", "ols"):
        fn = tomo.standard_qpt if estimator == "standard" else tomo.ols_qpt
        results.append(fn(frame, gate, basis))
    else:
        for p in gauge_ps:
            if estimator == "corrected":
                results.append(tomo.spam_corrected_qpt(frame, calib, gate, p, basis))
            else:
                results.append(tomo.overcomplete_spam_corrected_qpt(frame, calib, gate, truncate_p, p, basis))
    out = []
    for est in results:
        fid = None
        if target is not None:
            fid = hs.fidelities(est.g_hat, target, basis)
            fid["uncorrected"] = hs.fidelities(est.g0_hat, target, basis)
        out.append(io.estimate_to_dict(est, fid))
    return out, warnings


def cmd_estimate(args) -> int:
    frame = io.read_frame(args.frame)
    gate = io.read_counts(args.counts)
    calib = io.read_counts(args.calibration) if args.calibration else None
    target = _load_target(args.target)
    estimates, warnings = run_estimate(frame, gate, calib, args.estimator, args.gauge_p,
                                       not args.no_truncate_p, target)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    inputs = {"frame": str(args.frame), "counts": str(args.counts), "calibration": args.calibration,
              "estimator": args.estimator, "gauge_p": args.gauge_p, "truncate_p": not args.no_truncate_p,
              "target": args.target}
    h = io.config_hash(inputs)
    doc = {
        "format": io.ESTIMATE_FORMAT,
        "_meta": io.meta(h, None),
        "inputs": inputs,
        "dim": frame.dim,
        "basis": io.BASIS_DOC,
        "warnings": warnings,
        "estimates": estimates,
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check_spam(args) -> int:
    frame = io.read_frame(args.frame)
    calib = io.read_counts(args.calibration)
    rep = tomo.spam_consistency_check(frame, calib)
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status}: max |z| = {rep.max_abs_z:.3f}, {rep.n_over_3}/{rep.n_entries} entries with |z| > 3")
    if args.out:
        inputs = {"frame": str(args.frame), "calibration": str(args.calibration)}
        doc = {"_meta": io.meta(io.config_hash(inputs), None), "inputs": inputs, **rep.as_dict()}
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def cmd_make_design(args) -> int:
    base = sim.DESIGNS[args.design]
    shots = None if args.shots == "exact" else args.shots
    design = sim.ExperimentDesign(base.preps, base.bases, base.tracked_effects, shots, True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    basis = hs.build_basis(2)
    doc = {"_meta": io.meta(io.config_hash(design.to_dict()), None), "name": args.design, **design.to_dict(),
           "outcomes": {b: list(sim.BASIS_OUTCOMES[b]) for b in design.bases},
           "n_circuits": design.n_circuits}
    (out / "design.json").write_text(json.dumps(doc, indent=2) + "\n")
    io.write_frame(design.frame(basis), out / "frame.json")
    io.write_frame(design.full_frame(basis), out / "frame_full.json")
    print(f"wrote design '{args.design}' ({design.n_circuits} circuits) to {out}")
    return EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "estimate": cmd_estimate, "check-spam": cmd_check_spam, "make-design": cmd_make_design}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, io.ParseError, MissingShotsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapeMismatchError as exc:
        print(f"error: {exc}. Make sure the counts cover every effect and state label in the frame.", file=sys.stderr)
        return EXIT_SHAPE
    except SpamCorrectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPAM_POWER
    except (FrameError, DegenerateDataError) as exc:
        print(f"error: {exc}. Choose informationally complete, well-conditioned states and effects.", file=sys.stderr)
        return EXIT_NUMERICAL
    except QPTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
