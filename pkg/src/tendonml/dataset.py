"""MIMO angle -> tendon datasets: grid sweeps, replicates, splits, CSV I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadGridSpec, DatasetTooSparse, NoConvergence, SchemaMismatch, TooFewSamples
from .numerics import stream_for
from .plant import PlantParams, PoseAngles, TendonDelta, invert_plant, plant_forward

CSV_HEADER = ["alpha_deg", "beta_deg", "l1", "l2", "l3", "replicate", "edge_flag"]
EDGE_MARGIN_DEG = 80.0
MIN_SUCCESS_FRACTION = 0.9


@dataclass(frozen=True)
class Sample:
    pose: PoseAngles
    cmd: TendonDelta
    replicate: int = 0
    edge: bool = False


@dataclass
class Dataset:
    samples: list[Sample]
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def X(self) -> np.ndarray:
        """Inputs as an ``(n, 2)`` array of (alpha, beta)."""
        return np.array([s.pose for s in self.samples], dtype=np.float64).reshape(-1, 2)

    @property
    def Y(self) -> np.ndarray:
        """Targets as an ``(n, 3)`` array of (l1, l2, l3)."""
        return np.array([s.cmd for s in self.samples], dtype=np.float64).reshape(-1, 3)

    @property
    def replicates(self) -> np.ndarray:
        return np.array([s.replicate for s in self.samples], dtype=np.int64)


def generate_grid(min_deg: float, max_deg: float, step: float) -> list[PoseAngles]:
    """Cartesian grid over both axes, alpha outer and beta inner."""
    if not (math.isfinite(min_deg) and math.isfinite(max_deg) and math.isfinite(step)):
        raise BadGridSpec("grid bounds must be finite")
    if not min_deg < max_deg:
        raise BadGridSpec(f"empty range [{min_deg}, {max_deg}]")
    if step <= 0:
        raise BadGridSpec(f"step must be positive, got {step}")
    count = (max_deg - min_deg) / step
    if abs(count - round(count)) > 1e-9:
        raise BadGridSpec(f"range {max_deg - min_deg} is not a multiple of step {step}")
    axis = axis_values(min_deg, max_deg, step)
    return [PoseAngles(float(a), float(b)) for a in axis for b in axis]


def axis_values(min_deg: float, max_deg: float, step: float) -> np.ndarray:
    n = int(round((max_deg - min_deg) / step))
    return min_deg + step * np.arange(n + 1, dtype=np.float64)


def build_dataset(
    grid,
    replicates: int,
    params: PlantParams,
    seed: int,
    preset_name: str | None = None,
    grid_spec: tuple[float, float, float] | None = None,
) -> Dataset:
    """Invert the plant at every grid pose and record ``replicates`` measurements.

    The recorded input is the achieved pose: the target itself when the plant
    is noise-free, otherwise a noisy re-measurement drawn from the stream
    keyed on ``(seed, point index, replicate)``.

    Raises:
        DatasetTooSparse: fewer than 90% of grid points could be inverted.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    grid = [PoseAngles(float(p[0]), float(p[1])) for p in grid]
    if not grid:
        raise BadGridSpec("empty grid")
    clean = params.noiseless()
    samples: list[Sample] = []
    failed = []
    for idx, target in enumerate(grid):
        try:
            cmd = invert_plant(target, clean)
        except NoConvergence as exc:
            failed.append({"index": idx, "alpha": target.alpha, "beta": target.beta,
                           "residual": exc.residual})
            continue
        edge = abs(target.alpha) > EDGE_MARGIN_DEG or abs(target.beta) > EDGE_MARGIN_DEG
        for rep in range(replicates):
            if params.noise_sigma > 0:
                pose = plant_forward(cmd, params, stream_for(seed, "dataset", idx, rep))
            else:
                pose = target
            samples.append(Sample(pose, cmd, rep, edge))

    meta = {
        "plant_preset": preset_name,
        "plant_params": asdict(params),
        "grid": list(grid_spec) if grid_spec is not None else None,
        "replicates": int(replicates),
        "noise_sigma": float(params.noise_sigma),
        "seed": int(seed),
        "n_grid": len(grid),
        "n_failed": len(failed),
        "failed_points": failed,
    }
    if len(grid) - len(failed) < MIN_SUCCESS_FRACTION * len(grid):
        raise DatasetTooSparse(
            f"plant inversion failed at {len(failed)} of {len(grid)} grid points"
        )
    return Dataset(samples, meta)


def build_from_spec(
    min_deg: float, max_deg: float, step: float, replicates: int,
    params: PlantParams, seed: int, preset_name: str | None = None,
) -> Dataset:
    grid = generate_grid(min_deg, max_deg, step)
    return build_dataset(grid, replicates, params, seed, preset_name, (min_deg, max_deg, step))


def regenerate(meta: dict) -> Dataset:
    """Rebuild a dataset from its metadata alone."""
    if meta.get("grid") is None:
        raise ValueError("metadata carries no grid spec")
    params = PlantParams(**meta["plant_params"])
    lo, hi, step = meta["grid"]
    return build_from_spec(lo, hi, step, meta["replicates"], params, meta["seed"],
                           meta.get("plant_preset"))


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle followed by a prefix split."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(ds)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise TooFewSamples(f"{n} samples cannot be split at {train_fraction}")
    order = stream_for(seed, "split").permutation(n)
    train = [ds.samples[i] for i in order[:n_train]]
    val = [ds.samples[i] for i in order[n_train:]]
    meta = dict(ds.meta)
    return Dataset(train, {**meta, "split": "train"}), Dataset(val, {**meta, "split": "val"})


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

def meta_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_csv(ds: Dataset, path) -> tuple[Path, Path]:
    """Write ``ds`` as CSV (6-decimal floats) plus a ``.meta.json`` sidecar."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in ds.samples:
            w.writerow([f"{v:.6f}" for v in (*s.pose, *s.cmd)] + [s.replicate, int(s.edge)])
    mpath = meta_path_for(path)
    mpath.write_text(json.dumps(ds.meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path, mpath


def read_csv(path) -> Dataset:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path}: empty file, expected header {','.join(CSV_HEADER)}")
    header = rows[0]
    missing = [c for c in CSV_HEADER if c not in header]
    if missing:
        raise SchemaMismatch(f"{path}: missing column(s) {', '.join(missing)}")
    if header != CSV_HEADER:
        raise SchemaMismatch(f"{path}: header {header} does not match {CSV_HEADER}")
    samples = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise SchemaMismatch(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
        try:
            a, b, l1, l2, l3 = (float(v) for v in row[:5])
            samples.append(Sample(PoseAngles(a, b), TendonDelta(l1, l2, l3),
                                  int(row[5]), bool(int(row[6]))))
        except ValueError as exc:
            raise SchemaMismatch(f"{path}:{lineno}: {exc}") from None
    mpath = meta_path_for(path)
    meta = json.loads(mpath.read_text(encoding="utf-8")) if mpath.exists() else {}
    return Dataset(samples, meta)
