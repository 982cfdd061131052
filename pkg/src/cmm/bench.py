"""Wall-clock scaling measurements for the connectors.

A sweep times repeated forward passes at a series of sequence lengths and
records median and 10th/90th percentile latencies; :func:`fit_slope` then
fits ``log(median) = a + slope * log(T)`` to check the growth class.
"""

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import cross_attention_forward, prepend_forward
from .block import cmm_forward
from .config import DEFAULT_GRIDS, DEFAULT_TOP_K, CmmConfig
from .errors import ParameterError, UsageError
from .fixtures import CONNECTORS, generate_connector_weights, generate_inputs
from .ssm import SsmBackend

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "connector", "backend", "T", "G", "D_t", "H", "k", "repeats",
    "wall_ns_median", "wall_ns_p10", "wall_ns_p90", "tokens_per_sec", "seed",
)

# Acceptance bands on the fitted log-log slope, per connector.
SLOPE_BANDS = {
    "cmm": (0.9, 1.3),
    "prepend": (1.6, 2.4),
    "cross_attend": (0.9, 1.3),
}


@dataclass
class ScalingRecord:
    connector: str
    backend: str  # empty for connectors without an SSM
    T: int
    G: int
    D_t: int
    H: int
    k: int
    repeats: int
    wall_ns_median: float
    wall_ns_p10: float
    wall_ns_p90: float
    tokens_per_sec: float
    seed: int
    # raw per-call timings; kept in memory only, never emitted
    samples_ns: list = field(default=None, compare=False, repr=False)

    @property
    def total_seconds(self):
        return sum(self.samples_ns) / 1e9 if self.samples_ns else None


@dataclass
class SlopeReport:
    connector: str
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    band: tuple = None

    @property
    def passed(self):
        if self.band is None:
            return True
        lo, hi = self.band
        return lo <= self.slope <= hi


@dataclass
class SweepSpec:
    connectors: tuple = ("cmm",)
    T_values: tuple = (256, 512, 1024, 2048, 4096, 8192)
    backend: str = "diagonal_lti"
    G: int = DEFAULT_GRIDS
    D_t: int = 64
    H: int = 4
    k: int = DEFAULT_TOP_K
    repeats: int = 20
    warmup: int = 3
    seed: int = 0
    jobs: int = 1
    interleave: bool = True

    def validate(self):
        if not self.connectors:
            raise UsageError("connector", "at least one connector is required")
        for c in self.connectors:
            if c not in CONNECTORS:
                raise UsageError("connector", f"unknown connector {c!r}; choose from {CONNECTORS}")
        if not self.T_values or any(int(t) < 1 for t in self.T_values):
            raise UsageError("T", f"sequence lengths must be positive, got {self.T_values!r}")
        try:
            SsmBackend.parse(self.backend)
        except ValueError:
            raise UsageError("backend", f"unknown backend {self.backend!r}") from None
        if self.repeats < 5:
            raise UsageError("repeats", f"need at least 5 timed calls, got {self.repeats}")
        if self.warmup < 2:
            raise UsageError("warmup", f"need at least 2 warmup calls, got {self.warmup}")
        if self.jobs < 1:
            raise UsageError("jobs", f"must be >= 1, got {self.jobs}")
        try:
            self.config(self.T_values[0])
        except ParameterError as exc:
            msg = str(exc)
            fld = "k" if "k=" in msg else "heads" if "H=" in msg else "D" if "D_" in msg else "G"
            raise UsageError(fld, msg) from None

    def config(self, T):
        return CmmConfig(T=int(T), G=self.G, D_t=self.D_t, H=self.H, k=self.k, backend=self.backend)


def make_runner(connector, cfg: CmmConfig, seed):
    """Build a zero-argument forward call; fixture generation happens here, not in timing."""
    w = generate_connector_weights(connector, cfg, seed)
    inp = generate_inputs(cfg.T, cfg.G, cfg.D_t, cfg.D_v, seed)
    if connector == "cmm":
        return lambda: cmm_forward(inp.xt, inp.xv, w, cfg)
    if connector == "prepend":
        return lambda: prepend_forward(inp.xt, inp.xv, w, cfg.H, cfg.ln_eps)
    return lambda: cross_attention_forward(inp.xt, inp.xv, w, cfg.H, cfg.ln_eps)


def time_calls(fn, repeats, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return samples


def _record(connector, spec, cfg, samples):
    p10, med, p90 = np.percentile(samples, [10, 50, 90])
    total = sum(samples) / 1e9
    return ScalingRecord(
        connector=connector,
        backend=cfg.backend.value if connector == "cmm" else "",
        T=cfg.T, G=cfg.G, D_t=cfg.D_t, H=cfg.H, k=cfg.k if connector == "cmm" else 0,
        repeats=spec.repeats,
        wall_ns_median=float(med), wall_ns_p10=float(p10), wall_ns_p90=float(p90),
        tokens_per_sec=cfg.T * spec.repeats / total,
        seed=spec.seed,
        samples_ns=samples,
    )


def measure_point(connector, spec: SweepSpec, T):
    cfg = spec.config(T)
    fn = make_runner(connector, cfg, spec.seed)
    return _record(connector, spec, cfg, time_calls(fn, spec.repeats, spec.warmup))


def _measure_interleaved(points):
    """Time one call per point per round, so slow spells on the host are
    spread across all points instead of landing on a single one."""
    spec = points[0][1]
    cfgs = [s.config(T) for _, s, T in points]
    runners = [make_runner(c, cfg, s.seed) for (c, s, _), cfg in zip(points, cfgs)]
    for fn in runners:
        for _ in range(spec.warmup):
            fn()
    samples = [[] for _ in points]
    for _ in range(spec.repeats):
        for fn, bucket in zip(runners, samples):
            t0 = time.perf_counter_ns()
            fn()
            bucket.append(time.perf_counter_ns() - t0)
    return [_record(c, s, cfg, smp) for (c, s, _), cfg, smp in zip(points, cfgs, samples)]


def _measure_args(args):
    return measure_point(*args)


def run_sweep(spec: SweepSpec):
    """Time every (connector, T) point of ``spec``; returns records in sweep order."""
    spec.validate()
    points = [(c, spec, int(T)) for c in spec.connectors for T in spec.T_values]
    if spec.jobs > 1:
        log.info("sweep: %d points on %d concurrent workers", len(points), spec.jobs)
        with ProcessPoolExecutor(spec.jobs) as pool:
            return list(pool.map(_measure_args, points))
    if spec.interleave:
        log.info("sweep: %d points, single worker, interleaved rounds", len(points))
        return _measure_interleaved(points)
    log.info("sweep: %d points, single worker, point by point", len(points))
    return [measure_point(*p) for p in points]


def fit_slope(records, band=None):
    """Least-squares fit of ``ln(median wall time)`` against ``ln(T)``.

    Records must share one connector and have strictly increasing ``T``.
    """
    if len(records) < 5:
        raise ParameterError(f"fit_slope: need at least 5 points, got {len(records)}")
    Ts = [r.T for r in records]
    if any(b <= a for a, b in zip(Ts, Ts[1:])):
        raise ParameterError(f"fit_slope: T values must be strictly increasing, got {Ts}")
    connectors = {r.connector for r in records}
    if len(connectors) != 1:
        raise ParameterError(f"fit_slope: mixed connectors {sorted(connectors)}")
    connector = connectors.pop()
    x = np.log(np.asarray(Ts, dtype=np.float64))
    y = np.log(np.asarray([r.wall_ns_median for r in records], dtype=np.float64))
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = ((x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    ss_res = ((y - intercept - slope * x) ** 2).sum()
    ss_tot = ((y - ym) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if band is None:
        band = SLOPE_BANDS.get(connector)
    return SlopeReport(connector, float(slope), float(intercept), float(r2), len(records), band)


def group_by_connector(records):
    groups = {}
    for r in records:
        groups.setdefault(r.connector, []).append(r)
    return {c: sorted(rs, key=lambda r: r.T) for c, rs in groups.items()}


def _row(r):
    return {c: getattr(r, c) for c in CSV_COLUMNS}


def emit_records(records, fmt, path):
    """Write records as ``csv`` (with header row) or ``jsonl``."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for r in records:
                writer.writerow(_row(r))
    elif fmt in ("jsonl", "json-lines"):
        with open(path, "w") as fh:
            for r in records:
                fh.write(json.dumps(_row(r)) + "\n")
    else:
        raise ParameterError(f"emit_records: unknown format {fmt!r}")


_INT_FIELDS = {"T", "G", "D_t", "H", "k", "repeats", "seed"}
_FLOAT_FIELDS = {"wall_ns_median", "wall_ns_p10", "wall_ns_p90", "tokens_per_sec"}


def _coerce(row):
    out = {}
    for name in CSV_COLUMNS:
        v = row[name]
        if name in _INT_FIELDS:
            v = int(v)
        elif name in _FLOAT_FIELDS:
            v = float(v)
        else:
            v = "" if v is None else str(v)
        out[name] = v
    return ScalingRecord(**out)


def read_records(path):
    """Parse a CSV or JSON-lines file written by :func:`emit_records`."""
    with open(path, newline="") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return [_coerce(json.loads(line)) for line in text.splitlines() if line.strip()]
    return [_coerce(row) for row in csv.DictReader(text.splitlines())]

