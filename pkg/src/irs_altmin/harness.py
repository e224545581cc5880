"""Monte Carlo experiments: baselines, paired realizations, CSV output.

Every method of a cell consumes the same channel realization, the same
CSI estimate and the same random initial IRS phases.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .channels import gen_scenario
from .config import NoiseModel, SystemConfig
from .csi import (CsiEstimate, build_pilot_plan, ls_estimate_full,
                  sample_csi_statistical)
from .errors import ConfigError, ReportingError
from .model import ChannelSet, IrsPhases
from .optimizer import (PgSettings, RunTrace, alternating_minimize,
                        quantize_phases, reoptimize_fixed)
from .transceiver import (DesignProblem, TransceiverState, downlink_mse,
                          mmse_downlink_filter, mrt_precoders, sum_rate)

log = logging.getLogger(__name__)

__all__ = ["METHODS", "ExperimentSpec", "MetricRow", "Realization",
           "draw_realization", "design_method", "run_method",
           "evaluate_state", "delta_r", "g_irs", "monte_carlo",
           "summarize", "read_results", "RESULT_COLUMNS"]

METHODS = ("proposed_pg", "af_ops", "r_irs_ops", "o_irs_mrt", "no_irs_mrt",
           "proposed_nonrobust", "proposed_perfect")

# method -> (IRS update variant, CSI used by the design, robust flag)
_METHOD_TABLE = {
    "proposed_pg": ("pg", "estimate", None),
    "af_ops": ("af", "estimate", None),
    "r_irs_ops": ("fixed", "estimate", None),
    "o_irs_mrt": ("mrt", "estimate", None),
    "no_irs_mrt": ("none", "estimate", None),
    "proposed_nonrobust": ("pg", "estimate", False),
    "proposed_perfect": ("pg", "truth", False),
}

RESULT_COLUMNS = ("method", "snr_db", "N", "N_path_I", "bits", "realization",
                  "sum_rate", "avg_mse", "iterations", "wall_ms")
SUMMARY_COLUMNS = ("method", "snr_db", "N", "N_path_I", "bits", "count",
                   "sum_rate_mean", "sum_rate_se", "avg_mse_mean",
                   "avg_mse_se", "iterations_mean")
GAIN_COLUMNS = ("snr_db", "N", "N_path_I", "bits", "delta_r", "g_irs")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % x


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep over SNR, IRS size, IRS-user paths and quantization bits."""

    config: SystemConfig
    snr_db: Tuple[float, ...] = (10.0,)
    num_irs_elements: Tuple[int, ...] = (9,)
    paths_irs_user: Tuple[int, ...] = (4,)
    quantization_bits: Tuple[Optional[int], ...] = (None,)
    methods: Tuple[str, ...] = ("proposed_pg",)
    num_realizations: int = 100
    output: str = "results"
    csi_source: str = "statistical"

    def __post_init__(self):
        for name in ("snr_db", "num_irs_elements", "paths_irs_user",
                     "quantization_bits", "methods"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)) or value is None:
                value = (value,)
            object.__setattr__(self, name, tuple(value))
            if not getattr(self, name):
                raise ConfigError(f"sweep axis {name} is empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; "
                              f"expected a subset of {METHODS}")
        if self.num_realizations < 1:
            raise ConfigError("num_realizations must be >= 1")
        if self.csi_source not in ("statistical", "ls"):
            raise ConfigError("csi_source must be 'statistical' or 'ls'")
        for b in self.quantization_bits:
            if b is not None and (not isinstance(b, int) or b < 1):
                raise ConfigError(f"invalid quantization bits {b!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        known = {"config", "sweep", "methods", "num_realizations", "output",
                 "csi_source"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown experiment keys: {unknown}")
        cfg = dict(data.pop("config", None) or {})
        preset = cfg.pop("preset", "full")
        if preset == "desk":
            config = SystemConfig.desk(**cfg)
        elif preset == "full":
            config = SystemConfig.from_dict(cfg)
        else:
            raise ConfigError(f"unknown preset {preset!r}")
        sweep = dict(data.pop("sweep", None) or {})
        allowed = {"snr_db", "num_irs_elements", "paths_irs_user",
                   "quantization_bits"}
        bad = sorted(set(sweep) - allowed)
        if bad:
            raise ConfigError(f"unknown sweep axes: {bad}")
        defaults = {"snr_db": config.snr_db,
                    "num_irs_elements": config.num_irs_elements,
                    "paths_irs_user": config.paths_irs_user,
                    "quantization_bits": config.quantization_bits}
        axes = {k: sweep.get(k, defaults[k]) for k in allowed}
        try:
            return cls(config=config, **axes, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path) -> "ExperimentSpec":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(data)

    def cells(self) -> List[SystemConfig]:
        out = []
        for snr in self.snr_db:
            for n in self.num_irs_elements:
                for paths in self.paths_irs_user:
                    out.append(self.config.replace(
                        snr_db=float(snr), num_irs_elements=int(n),
                        paths_irs_user=int(paths), quantization_bits=None))
        return out


@dataclass
class MetricRow:
    method: str
    snr_db: float
    N: int
    N_path_I: int
    bits: Optional[int]
    realization: int
    sum_rate: float
    avg_mse: float
    iterations: int
    wall_ms: float
    scenario_digest: str = field(default="", compare=False)

    def csv_fields(self) -> List[str]:
        return [self.method, _fmt(float(self.snr_db)), _fmt(self.N),
                _fmt(self.N_path_I), _fmt(self.bits), _fmt(self.realization),
                _fmt(float(self.sum_rate)), _fmt(float(self.avg_mse)),
                _fmt(self.iterations), _fmt(float(self.wall_ms))]


@dataclass(frozen=True)
class Realization:
    channels: ChannelSet
    csi: CsiEstimate
    nu0: IrsPhases
    index: int


def draw_realization(config: SystemConfig, index: int,
                     base_seed: int = None,
                     csi_source: str = "statistical") -> Realization:
    """Channels, CSI and initial IRS phases of realization ``index``."""
    base_seed = config.rng_seed if base_seed is None else base_seed
    ss = np.random.SeedSequence(int(base_seed) + int(index))
    rng_ch, rng_csi, rng_nu = (np.random.default_rng(s) for s in ss.spawn(3))
    channels = gen_scenario(config, rng_ch)
    noise = NoiseModel.from_config(config)
    if csi_source == "ls" and config.csi_mode != "perfect":
        csi = ls_estimate_full(channels, build_pilot_plan(config), rng_csi,
                               config, noise)
    else:
        csi = sample_csi_statistical(channels, config, rng_csi, noise)
    nu0 = IrsPhases.random(config.num_irs_elements, rng_nu)
    return Realization(channels, csi, nu0, index)


@dataclass
class MethodDesign:
    method: str
    problem: DesignProblem
    state: TransceiverState
    trace: RunTrace
    variant: str


def _problem_for(method: str, real: Realization,
                 config: SystemConfig) -> DesignProblem:
    _, source, robust = _METHOD_TABLE[method]
    if source == "truth":
        return DesignProblem.from_channels(real.channels, config,
                                           real.csi.noise)
    return DesignProblem.from_csi(real.csi, config, robust=robust)


def design_method(method: str, real: Realization,
                  config: SystemConfig) -> MethodDesign:
    if method not in _METHOD_TABLE:
        raise ConfigError(f"unknown method {method!r}")
    variant = _METHOD_TABLE[method][0]
    prob = _problem_for(method, real, config)
    settings = PgSettings.from_config(config)
    if variant == "none":
        prob = prob.without_irs()
        start = time.perf_counter()
        nu = np.zeros(0, dtype=complex)
        P, _ = mrt_precoders(prob, nu)
        W = mmse_downlink_filter(prob, P, nu)
        trace = RunTrace(wall_time=time.perf_counter() - start)
        state = TransceiverState(P, W, None, None, None, None, IrsPhases(nu))
        return MethodDesign(method, prob, state, trace, variant)
    state, trace = alternating_minimize(prob, settings, real.nu0, variant)
    return MethodDesign(method, prob, state, trace, variant)


def evaluate_state(channels: ChannelSet, state: TransceiverState,
                   config: SystemConfig, noise: NoiseModel = None):
    """(sum_rate, avg_mse) on the true channels."""
    noise = noise or NoiseModel.from_config(config)
    nu = state.nu.nu
    if nu.size == 0:
        channels = channels.without_irs()
    H = channels.equivalent(nu)
    streams = config.stream_counts()
    rate = sum_rate(H, state.P, state.W, noise.cov, streams)
    truth = DesignProblem.from_channels(channels, config, noise)
    mse = downlink_mse(truth, state.P, state.W, nu)
    return rate, float(mse.sum() / config.num_users)


def _quantized(design: MethodDesign, bits: int, config: SystemConfig):
    if design.variant == "none":
        return design.state, 0.0
    start = time.perf_counter()
    nu_q = quantize_phases(design.state.nu, bits,
                           keep_magnitude=design.variant == "af")
    settings = PgSettings.from_config(config)
    state = reoptimize_fixed(design.problem, settings, nu_q.nu, design.state,
                             "mrt" if design.variant == "mrt" else "pg")
    return state, time.perf_counter() - start


def run_method(method: str, real: Realization, config: SystemConfig,
               bits_list: Sequence[Optional[int]] = (None,),
               deterministic: bool = False) -> List[MetricRow]:
    """Design once, then evaluate each requested quantization level."""
    design = design_method(method, real, config)
    digest = _pairing_digest(real)
    rows = []
    for bits in bits_list:
        if bits is None:
            state, extra = design.state, 0.0
        else:
            state, extra = _quantized(design, bits, config)
        rate, mse = evaluate_state(real.channels, state, config,
                                   real.csi.noise)
        wall = 0.0 if deterministic else 1e3 * (design.trace.wall_time
                                                + extra)
        rows.append(MetricRow(method, config.snr_db,
                              config.num_irs_elements, config.paths_irs_user,
                              bits, real.index, rate, mse,
                              design.trace.iterations, wall, digest))
    if _pairing_digest(real) != digest:
        raise RuntimeError("realization modified during a run")
    return rows


def _pairing_digest(real: Realization) -> str:
    """Content hash of everything the methods of a cell must share."""
    h = hashlib.sha256()
    h.update(real.channels.digest().encode())
    h.update(real.csi.digest().encode())
    h.update(np.ascontiguousarray(real.nu0.nu).tobytes())
    return h.hexdigest()


def _run_task(task) -> List[MetricRow]:
    config, index, methods, bits_list, deterministic, csi_source = task
    real = draw_realization(config, index, csi_source=csi_source)
    rows = []
    for method in methods:
        rows.extend(run_method(method, real, config, bits_list,
                               deterministic))
    return rows


# aggregation ----------------------------------------------------------------
def _cell_key(row: MetricRow):
    return (float(row.snr_db), int(row.N), int(row.N_path_I), row.bits)


def _select(rows: Iterable[MetricRow], method: str, cell=None):
    out = [r for r in rows if r.method == method
           and (cell is None or _cell_key(r) == tuple(cell))]
    return out


def _mean_diff(rows, a: str, b: str, cell=None) -> float:
    ra, rb = _select(rows, a, cell), _select(rows, b, cell)
    if not ra or not rb:
        missing = a if not ra else b
        raise ReportingError(f"no {missing} rows for cell {cell}")
    return (float(np.mean([r.sum_rate for r in ra]))
            - float(np.mean([r.sum_rate for r in rb])))


def delta_r(rows: Sequence[MetricRow], cell=None) -> float:
    """Mean sum-rate gain of the proposed design over random IRS phases."""
    return _mean_diff(rows, "proposed_pg", "r_irs_ops", cell)


def g_irs(rows: Sequence[MetricRow], cell=None) -> float:
    """Mean sum-rate gain of the proposed design over no IRS."""
    return _mean_diff(rows, "proposed_pg", "no_irs_mrt", cell)


def _mean_se(values) -> Tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def summarize(rows: Sequence[MetricRow]) -> List[dict]:
    groups: Dict[tuple, List[MetricRow]] = {}
    for r in rows:
        groups.setdefault((r.method,) + _cell_key(r), []).append(r)
    out = []
    for key, members in groups.items():
        rate_mean, rate_se = _mean_se([m.sum_rate for m in members])
        mse_mean, mse_se = _mean_se([m.avg_mse for m in members])
        out.append(dict(zip(SUMMARY_COLUMNS, key + (
            len(members), rate_mean, rate_se, mse_mean, mse_se,
            float(np.mean([m.iterations for m in members]))))))
    return out


def _gains(rows: Sequence[MetricRow]) -> List[dict]:
    out = []
    for cell in dict.fromkeys(_cell_key(r) for r in rows):
        entry = dict(zip(GAIN_COLUMNS[:4], cell))
        for name, fn in (("delta_r", delta_r), ("g_irs", g_irs)):
            try:
                entry[name] = fn(rows, cell)
            except ReportingError:
                entry[name] = None
        out.append(entry)
    return out


def _write_csv(path: Path, header, rows, deterministic: bool) -> None:
    try:
        with open(path, "w", newline="") as fh:
            if not deterministic:
                stamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
                fh.write(f"# generated {stamp}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def monte_carlo(spec: ExperimentSpec, out_dir=None, threads: int = 1,
                deterministic: bool = False, seed: int = None,
                realizations: int = None) -> List[MetricRow]:
    """Run the full sweep and write results.csv, summary.csv, gains.csv."""
    n_real = realizations or spec.num_realizations
    tasks = []
    for cell in spec.cells():
        if seed is not None:
            cell = cell.replace(rng_seed=int(seed))
        for r in range(n_real):
            tasks.append((cell, r, spec.methods, spec.quantization_bits,
                          deterministic, spec.csi_source))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]

    out = Path(out_dir or spec.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    _write_csv(out / "results.csv", RESULT_COLUMNS,
               [r.csv_fields() for r in rows], deterministic)
    summary = summarize(rows)
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS,
               [[_fmt(d[c]) if c != "method" else d[c]
                 for c in SUMMARY_COLUMNS] for d in summary], deterministic)
    gains = _gains(rows)
    if any(g["delta_r"] is not None or g["g_irs"] is not None for g in gains):
        _write_csv(out / "gains.csv", GAIN_COLUMNS,
                   [[_fmt(g[c]) for c in GAIN_COLUMNS] for g in gains],
                   deterministic)
    return rows


def read_results(path) -> List[MetricRow]:
    """Parse a results.csv back into MetricRow objects."""
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for rec in csv.DictReader(lines):
        rows.append(MetricRow(
            rec["method"], float(rec["snr_db"]), int(rec["N"]),
            int(rec["N_path_I"]),
            int(rec["bits"]) if rec["bits"] else None,
            int(rec["realization"]), float(rec["sum_rate"]),
            float(rec["avg_mse"]), int(rec["iterations"]),
            float(rec["wall_ms"])))
    return rows
