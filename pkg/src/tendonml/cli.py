"""Command-line pipeline: generate, benchmark, distill, validate, report.

Every stage writes into the run directory (``--out``) and records its files
with SHA-256 digests in ``manifest.json``. Later stages locate their inputs
only through that manifest.

Exit codes: 0 ok, 2 configuration, 3 data, 4 model failure, 5 missing input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import pickle
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .dataset import build_from_spec, read_csv, split, write_csv
from .distill import PolyBasis, distill_model, probe_grid, read_tf, render_equations, write_tf
from .errors import (BadGridSpec, ConfigError, DatasetTooSparse, SchemaMismatch,
                     TooFewSamples, UnknownHyperparameter)
from .evalkit import (export_curves, improvement_ratio, run_benchmark, sweep_targets,
                      validate_controller, write_deviation_overlay, write_pred_vs_actual)
from .model_api import tune
from .plant import PlantParams

log = logging.getLogger("tendonml")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_MODEL, EXIT_MISSING = 0, 2, 3, 4, 5
MANIFEST = "manifest.json"


class MissingInput(Exception):
    pass


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(out: Path) -> dict:
    p = out / MANIFEST
    if not p.is_file():
        return {"version": __version__, "stages": {}}
    return json.loads(p.read_text(encoding="utf-8"))


def record_stage(out: Path, stage: str, files, cfg: RunConfig) -> dict:
    m = load_manifest(out)
    m["version"] = __version__
    m["config"] = cfg.snapshot()
    entries = [{"path": Path(f).relative_to(out).as_posix(), "sha256": sha256_file(f)}
               for f in files]
    m.setdefault("stages", {})[stage] = {"files": sorted(entries, key=lambda e: e["path"])}
    _dump_json(m, out / MANIFEST)
    return m


def stage_files(out: Path, stage: str) -> list[Path]:
    """Files recorded for ``stage``; ``MissingInput`` if the stage never ran or a file vanished."""
    m = load_manifest(out)
    if stage not in m.get("stages", {}):
        raise MissingInput(f"{out}: no '{stage}' stage in the manifest; run '{stage}' first")
    files = [out / e["path"] for e in m["stages"][stage]["files"]]
    gone = [str(f) for f in files if not f.is_file()]
    if gone:
        raise MissingInput(f"files listed in the manifest are missing: {', '.join(gone)}")
    return files


def _find(files, suffix: str) -> Path:
    for f in files:
        if f.as_posix().endswith(suffix):
            return f
    raise MissingInput(f"no {suffix} among the recorded files")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig, out: Path) -> int:
    params = cfg.plant_params()
    lo, hi, step = cfg.grid
    ds = build_from_spec(lo, hi, step, cfg.replicates, params, cfg.seed, cfg.plant)
    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    files = write_csv(ds, data_dir / "dataset.csv")
    record_stage(out, "generate", files, cfg)
    print(f"samples: {len(ds)}  inversion failures: {ds.meta['n_failed']}  -> {files[0]}")
    return EXIT_OK


def _load_dataset(out: Path):
    return read_csv(_find(stage_files(out, "generate"), "dataset.csv"))


def cmd_benchmark(cfg: RunConfig, out: Path, generate: bool = False) -> int:
    if generate:
        cmd_generate(cfg, out)
    try:
        ds = _load_dataset(out)
    except MissingInput:
        if (out / "data" / "dataset.csv").exists():
            raise
        raise MissingInput(f"{out}: no dataset; run 'generate' first or pass --generate") from None
    train, val = split(ds, cfg.train_fraction, cfg.seed)
    specs = cfg.specs()
    if cfg.tune:
        specs = [tune(s, train, val) for s in specs]
    report = run_benchmark(specs, train, val)

    bdir = out / "benchmark"
    mdir = out / "models"
    for d in (bdir, mdir, bdir / "curves"):
        d.mkdir(parents=True, exist_ok=True)
    files = [report.write_csv(bdir / "report.csv")]
    curves = {}
    for name, model in report.models.items():
        files.append(write_pred_vs_actual(model, val, bdir / f"pred_{name}.svg"))
        mpath = mdir / f"{name}.pkl"
        with open(mpath, "wb") as fh:
            pickle.dump(model, fh, protocol=4)
        files.append(mpath)
        if model.training_curve:
            curves[name] = model.training_curve
    if curves:
        files += export_curves(curves, bdir / "curves")
    record_stage(out, "benchmark", files, cfg)

    print(f"{'model':<18} {'mse':>10} {'mae':>9} {'fit_s':>9}")
    for r in report.rows:
        if r.ok:
            print(f"{r.model:<18} {r.mse:10.4f} {r.mae:9.4f} {r.fit_seconds:9.4f}")
        else:
            print(f"{r.model:<18} ERROR {r.error}")
    return EXIT_MODEL if report.failed else EXIT_OK


def cmd_distill(cfg: RunConfig, out: Path) -> int:
    if not out.is_dir():
        raise MissingInput(f"run directory not found: {out}")
    models = [f for f in stage_files(out, "benchmark") if f.suffix == ".pkl"]
    if not models:
        raise MissingInput(f"{out}: the benchmark stage recorded no trained models")
    basis = PolyBasis(cfg.degree)
    probe = probe_grid(-90.0, 90.0, cfg.probe_step)
    ddir = out / "distill"
    files = []
    tfs = [distill_model("analytical", basis, probe)]
    for mpath in models:
        with open(mpath, "rb") as fh:
            tfs.append(distill_model(pickle.load(fh), basis, probe))
    for tf in tfs:
        files += write_tf(tf, ddir / tf.source)
        tag = " (surrogate of implicit model)" if tf.surrogate_of_implicit_model else ""
        print(f"[{tf.source}]{tag} residual rms {tf.residual_rms:.3g}")
        print(render_equations(tf), end="")
    record_stage(out, "distill", files, cfg)
    return EXIT_OK


def read_report(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def best_from_report(rows: list[dict]) -> str:
    """Lowest validation MAE, ties broken by lower fit time."""
    ok = [r for r in rows if math.isfinite(float(r["mae"]))]
    if not ok:
        raise MissingInput("benchmark report has no successful rows")
    return min(ok, key=lambda r: (float(r["mae"]), float(r["fit_seconds"])))["model"]


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    if not out.is_dir():
        raise MissingInput(f"run directory not found: {out}")
    tf_files = [f for f in stage_files(out, "distill") if f.suffix == ".json"]
    best = best_from_report(read_report(_find(stage_files(out, "benchmark"), "report.csv")))
    meta = _load_dataset(out).meta
    params = PlantParams(**meta["plant_params"]).noiseless()
    targets = sweep_targets(cfg.sweep_protocol)

    base = validate_controller("analytical", params, targets)
    tf = read_tf(_find(tf_files, f"distill/{best}.json"))
    cand = validate_controller(tf, params, targets)

    vdir = out / "validate"
    vdir.mkdir(parents=True, exist_ok=True)
    files = [base.write_csv(vdir / "deviation_analytical.csv"),
             cand.write_csv(vdir / f"deviation_{best}.csv")]
    files += write_deviation_overlay([base, cand], vdir)

    ratio = improvement_ratio(base, cand)
    lines = [
        f"sweep protocol: {cfg.sweep_protocol} ({len(targets)} targets)",
        f"best model: {best}",
        f"analytical mean |dev| alpha {base.mean_abs[0]:.6f} beta {base.mean_abs[1]:.6f}",
        f"{best} mean |dev| alpha {cand.mean_abs[0]:.6f} beta {cand.mean_abs[1]:.6f}",
    ]
    if ratio is None:
        lines.append("improvement ratio: not applicable (analytical deviation ~0)")
    else:
        inv = [base.mean_abs[k] / cand.mean_abs[k] if cand.mean_abs[k] > 0 else math.inf
               for k in range(2)]
        lines.append(f"deviation ratio (model/analytical): alpha {ratio[0]:.4f} beta {ratio[1]:.4f}")
        lines.append(f"improvement ratio: alpha {inv[0]:.2f}x beta {inv[1]:.2f}x")
    summary = vdir / "summary.txt"
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    files.append(summary)
    record_stage(out, "validate", files, cfg)
    print("\n".join(lines))
    return EXIT_OK


def cmd_report(cfg: RunConfig, out: Path) -> int:
    m = load_manifest(out)
    if not m.get("stages"):
        raise MissingInput(f"{out}: empty or missing manifest")
    md = ["# Run report", "", f"toolkit version {m.get('version')}", "", "## Configuration", "",
          "```", json.dumps(m.get("config", {}), indent=2, sort_keys=True), "```", ""]
    stages = m["stages"]
    if "generate" in stages:
        meta = _load_dataset(out).meta
        md += ["## Dataset", "",
               f"preset {meta.get('plant_preset')}, grid {meta.get('grid')}, "
               f"replicates {meta.get('replicates')}, noise {meta.get('noise_sigma')}, "
               f"inversion failures {meta.get('n_failed')} of {meta.get('n_grid')}", ""]
    if "benchmark" in stages:
        rows = read_report(_find(stage_files(out, "benchmark"), "report.csv"))
        md += ["## Benchmark", "", "| model | MSE | MAE | fit s |", "|---|---|---|---|"]
        for r in rows:
            md.append(f"| {r['model']} | {float(r['mse']):.4f} | {float(r['mae']):.4f} "
                      f"| {float(r['fit_seconds']):.4f} |")
        md.append("")
    if "distill" in stages:
        md += ["## Transfer functions", ""]
        for f in stage_files(out, "distill"):
            if f.suffix == ".txt":
                md += [f"### {f.stem}", "", "```", f.read_text(encoding="utf-8").rstrip(), "```", ""]
    if "validate" in stages:
        s = _find(stage_files(out, "validate"), "summary.txt")
        md += ["## Closed-loop validation", "", "```", s.read_text(encoding="utf-8").rstrip(),
               "```", ""]
    md += ["## Files", ""]
    for stage, entry in stages.items():
        if stage == "report":
            continue
        for e in entry["files"]:
            md.append(f"- `{e['path']}` ({stage}) sha256 `{e['sha256'][:16]}`")
    path = out / "report.md"
    path.write_text("\n".join(md) + "\n", encoding="utf-8")
    record_stage(out, "report", [path], cfg)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="run directory (default: run)")
    common.add_argument("--models", help="comma-separated model families")
    common.add_argument("--plant", help="plant preset: ideal, default or heavy")
    common.add_argument("--replicates", type=int, help="measurements per grid pose")
    common.add_argument("--noise-sigma", type=float, dest="noise_sigma",
                        help="measurement noise std in degrees")
    common.add_argument("--degree", type=int, help="transfer-function degree (1 or 2)")
    common.add_argument("--sweep-protocol", dest="sweep_protocol",
                        help="validation targets: alternating or grid")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="tendonml", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="build the training dataset")
    b = sub.add_parser("benchmark", parents=[common], help="fit and score every model family")
    b.add_argument("--generate", action="store_true", help="generate the dataset first")
    b.add_argument("--tune", action="store_true", default=None,
                   help="grid-search the tunable hyperparameter on validation MAE")
    sub.add_parser("distill", parents=[common], help="fit polynomial transfer functions")
    sub.add_parser("validate", parents=[common], help="closed-loop controller comparison")
    sub.add_parser("report", parents=[common], help="collate the run into report.md")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {
        "seed": args.seed, "out": args.out, "models": args.models, "plant": args.plant,
        "replicates": args.replicates, "noise_sigma": args.noise_sigma, "degree": args.degree,
        "sweep_protocol": args.sweep_protocol, "tune": getattr(args, "tune", None),
    }
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg.out)
        if args.command == "generate":
            return cmd_generate(cfg, out)
        if args.command == "benchmark":
            return cmd_benchmark(cfg, out, generate=args.generate)
        if args.command == "distill":
            return cmd_distill(cfg, out)
        if args.command == "validate":
            return cmd_validate(cfg, out)
        return cmd_report(cfg, out)
    except (ConfigError, BadGridSpec, UnknownHyperparameter) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetTooSparse, SchemaMismatch, TooFewSamples) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MissingInput as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
