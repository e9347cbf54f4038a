"""Monte-Carlo sweeps over UE power, RRH power or CU array size."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import SystemConfig, config_hash, dbm_to_watt, file_sha256
from .fronthaul import Scheme, SingularCombinerError, build_combiner
from .mm import SUBPROBLEM_FAILED, InfeasibleScenarioError, mm_solve
from .scenario import build_realization, draw_access_channels, sample_topology, trial_rng

log = logging.getLogger(__name__)

SWEPT_PARAMETERS = ("P_UE_dbm", "P_H_max_dbm", "N_C")
SWEEP_ALIASES = {"pu": "P_UE_dbm", "phmax": "P_H_max_dbm", "nc": "N_C"}
CSV_COLUMNS = ("scheme", "swept_parameter", "value", "mean_sum_rate", "stderr", "trials",
               "mean_iters")


@dataclass(frozen=True)
class SweepSpec:
    swept_parameter: str
    values: tuple
    schemes: tuple = (Scheme.MR, Scheme.ZF)
    trials: int = 20
    base: SystemConfig = field(default_factory=SystemConfig)

    def __post_init__(self):
        param = SWEEP_ALIASES.get(self.swept_parameter, self.swept_parameter)
        object.__setattr__(self, "swept_parameter", param)
        values = tuple(int(v) if param == "N_C" else float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "schemes", tuple(Scheme.parse(s) for s in self.schemes))

    def validate(self):
        if self.swept_parameter not in SWEPT_PARAMETERS:
            raise ValueError(f"unknown swept parameter {self.swept_parameter!r}")
        if not self.values:
            raise ValueError("sweep values must be nonempty")
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted ascending")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        self.base.validate()
        return self

    def config_at(self, value):
        if self.swept_parameter == "P_UE_dbm":
            return self.base.with_updates(P_UE=dbm_to_watt(value))
        if self.swept_parameter == "P_H_max_dbm":
            return self.base.with_updates(P_H_max=dbm_to_watt(value))
        return self.base.with_updates(N_C=int(value))


@dataclass
class SweepCell:
    scheme: Scheme
    value: float
    rates: list
    iterations: list
    failures: int

    @property
    def trials(self):
        return len(self.rates)

    @property
    def invalid(self):
        return self.trials == 0

    @property
    def mean(self):
        return float(np.mean(self.rates)) if self.rates else math.nan

    @property
    def stderr(self):
        if self.trials < 2:
            return 0.0 if self.rates else math.nan
        return float(np.std(self.rates, ddof=1) / math.sqrt(self.trials))

    @property
    def mean_iters(self):
        return float(np.mean(self.iterations)) if self.iterations else math.nan


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: dict  # (scheme, value) -> SweepCell

    def cell(self, scheme, value):
        return self.cells[(Scheme.parse(scheme), value)]

    def series(self, scheme):
        scheme = Scheme.parse(scheme)
        return [self.cells[(scheme, v)] for v in self.spec.values]

    @property
    def invalid_cells(self):
        return [c for c in self.cells.values() if c.invalid]


def _run_trial(spec, trial):
    """All (scheme, value) outcomes of one trial; ``None`` marks a failure."""
    base = spec.base
    rng = trial_rng(base.seed, trial)
    topology = sample_topology(base, rng)
    H = draw_access_channels(topology, base, rng)
    out = {}
    for value in spec.values:
        cfg = spec.config_at(value)
        channels = build_realization(topology, H, cfg)
        for scheme in spec.schemes:
            key = (scheme, value)
            try:
                combiner = build_combiner(channels.B, channels.G, scheme)
                res = mm_solve(channels, combiner, cfg)
            except (SingularCombinerError, InfeasibleScenarioError) as exc:
                log.warning("trial %d %s=%s %s: %s", trial, spec.swept_parameter, value,
                            scheme.value, exc)
                out[key] = None
                continue
            if res.trace.status == SUBPROBLEM_FAILED:
                log.warning("trial %d %s=%s %s: subproblem failed", trial,
                            spec.swept_parameter, value, scheme.value)
                out[key] = None
            else:
                out[key] = (res.sum_rate, res.trace.iterations)
    return out


def run_sweep(spec, workers=1):
    """Average ``mm_solve`` sum-rates over trials for every (scheme, value).

    Each trial draws one topology and one set of access channels from
    ``(base.seed, trial)`` and reuses them across all swept values and
    schemes, so the curves are paired. Results are reduced in trial order
    whatever the number of workers.
    """
    spec.validate()
    trials = range(spec.trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_trial, [spec] * spec.trials, trials))
    else:
        outcomes = [_run_trial(spec, t) for t in trials]

    cells = {}
    for scheme in spec.schemes:
        for value in spec.values:
            cell = SweepCell(scheme, value, [], [], 0)
            for out in outcomes:
                got = out[(scheme, value)]
                if got is None:
                    cell.failures += 1
                else:
                    cell.rates.append(got[0])
                    cell.iterations.append(got[1])
            if cell.invalid:
                log.warning("all trials failed for %s at %s=%s", scheme.value,
                            spec.swept_parameter, value)
            cells[(scheme, value)] = cell
    return SweepResult(spec, cells)


def _fmt(x):
    return repr(int(x)) if isinstance(x, (int, np.integer)) else repr(float(x))


def emit_results(result, out_dir, config_path=None):
    """Write ``sweep.csv`` and the ``sweep.json`` sidecar into ``out_dir``.

    The CSV holds only deterministic quantities; the timestamp goes to the
    sidecar. Returns the two paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = out_dir / "sweep.csv", out_dir / "sweep.json"
    spec = result.spec
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for scheme in spec.schemes:
            for cell in result.series(scheme):
                writer.writerow([scheme.value, spec.swept_parameter, _fmt(cell.value),
                                 _fmt(cell.mean), _fmt(cell.stderr), cell.trials,
                                 _fmt(cell.mean_iters)])
    meta = {
        "version": __version__,
        "seed": spec.base.seed,
        "config": spec.base.to_dict(),
        "config_sha256": file_sha256(config_path) if config_path else config_hash(spec.base),
        "sweep": {"swept_parameter": spec.swept_parameter, "values": list(spec.values),
                  "schemes": [s.value for s in spec.schemes], "trials": spec.trials},
        "failures": {f"{c.scheme.value}@{_fmt(c.value)}": c.failures
                     for c in result.cells.values()},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    meta_path.write_text(json.dumps(meta, indent=2))
    return csv_path, meta_path


def read_results_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_convergence_trace(result, out_path):
    """Write iteration, objective and worst violation for every MM iterate.

    Row ``t`` is the point after ``t`` MM updates, so row 0 is the initial
    point and the file has ``iterations + 1`` data rows.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tr = result.trace
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("iteration", "objective", "worst_violation"))
        for t, (obj, viol) in enumerate(zip(tr.objective_per_iter, tr.worst_violation_per_iter)):
            writer.writerow([t, _fmt(obj), _fmt(viol)])
    return out_path


__all__ = ["SweepSpec", "SweepCell", "SweepResult", "run_sweep", "emit_results",
           "read_results_csv", "emit_convergence_trace", "SWEPT_PARAMETERS"]
