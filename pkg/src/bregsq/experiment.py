"""Seeded convergence studies, plot-data files and risk reports on CSV samples.

A study draws ``repetitions`` fresh samples at every size of an ``n`` grid,
evaluates every requested estimator on each, and summarises the estimates per
``(measure, n)`` against a reference value and a theoretical CLT interval.

Seeds are derived from ``(master_seed, n, repetition)`` through
``numpy.random.SeedSequence``, so any single row can be replayed on its own and
growing the grid or the repetition count leaves existing rows unchanged.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .assumptions import check_assumptions
from .distributions import AnalyticDistribution, parse_distribution, sample as draw
from .errors import (
    BregsqError,
    DomainError,
    InversionError,
    ManifestError,
    NoInterval,
    OracleFailure,
    ParseError,
    VarianceDiverges,
)
from .estimators import EmpiricalSample, clt_interval, estimate
from .generators import parse_generator
from .oracle import asymptotic_variance, quantile_asymptotic_variance, true_bregman_superquantile, true_quantile

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentManifest",
    "ConvergenceRecord",
    "SummaryRow",
    "ConvergenceResult",
    "parse_manifest",
    "load_manifest",
    "measures_for",
    "row_seed",
    "run_convergence",
    "emit_plot_data",
    "read_plot_data",
    "report_risks",
    "PLOT_COLUMNS",
    "default_workers",
    "OracleCache",
]

PLOT_COLUMNS = ("measure", "n", "mean", "ref", "exp_ci_lo", "exp_ci_hi", "theo_ci_lo", "theo_ci_hi")
DESK_SCALE = 0.1
REFERENCE_KEY = 0


def default_workers() -> int:
    """Parallelism degree from ``BREGSQ_WORKERS``, else up to 4 threads."""
    env = os.environ.get("BREGSQ_WORKERS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer BREGSQ_WORKERS=%r", env)
    return max(1, min(4, os.cpu_count() or 1))


# ---------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ExperimentManifest:
    """Declarative description of a convergence study.

    The default grid runs from 1000 to 100000 in steps of 500 with a 10^6
    reference sample; ``scale`` multiplies the largest size and the reference
    size (``scale=0.1`` gives the desk grid 1000..10000).
    """

    distribution: str
    generators: Tuple[str, ...]
    alpha: float = 0.95
    n_min: int = 1000
    n_max: int = 100_000
    n_step: int = 500
    n_grid: Optional[Tuple[int, ...]] = None
    scale: float = DESK_SCALE
    repetitions: int = 50
    reference_n: int = 1_000_000
    master_seed: int = 0
    ci_level: float = 0.95
    include_quantile: bool = False
    reference: str = "oracle"
    theo_ci_center: str = "reference"
    check_assumptions: bool = True
    output: Optional[str] = None
    format: str = "csv"
    records: Optional[str] = None

    def __post_init__(self):
        self.validate()

    @property
    def sizes(self) -> List[int]:
        if self.n_grid is not None:
            return list(self.n_grid)
        top = int(round(self.n_max * self.scale))
        return list(range(self.n_min, top + 1, self.n_step))

    @property
    def reference_size(self) -> int:
        return int(round(self.reference_n * self.scale))

    def validate(self):
        try:
            parse_distribution(self.distribution)
            for gname in self.generators:
                parse_generator(gname)
        except ValueError as exc:
            raise ManifestError(str(exc)) from None
        if not self.generators:
            raise ManifestError("generator list is empty")
        if len(set(self.generators)) != len(self.generators):
            raise ManifestError("generator list has duplicates")
        if not 0.0 < self.alpha < 1.0:
            raise ManifestError("alpha must lie in (0, 1)")
        if not 0.0 < self.ci_level < 1.0:
            raise ManifestError("ci_level must lie in (0, 1)")
        if not self.scale > 0:
            raise ManifestError("scale must be positive")
        if self.n_grid is None and (self.n_min < 1 or self.n_step < 1):
            raise ManifestError("n_min and n_step must be positive")
        sizes = self.sizes
        if not sizes:
            raise ManifestError("sample-size grid is empty")
        if sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ManifestError("sample-size grid must be positive and strictly increasing")
        if self.repetitions < 2:
            raise ManifestError("repetitions must be >= 2")
        if self.reference_size <= sizes[-1]:
            raise ManifestError(
                f"reference size {self.reference_size} must exceed the largest grid size {sizes[-1]}"
            )
        if self.reference not in ("oracle", "sample"):
            raise ManifestError("reference must be 'oracle' or 'sample'")
        if self.theo_ci_center not in ("reference", "mean"):
            raise ManifestError("theo_ci_center must be 'reference' or 'mean'")
        if self.format not in ("csv", "json"):
            raise ManifestError("format must be 'csv' or 'json'")

    def canonical(self) -> str:
        """Stable text form; its hash is the timestamp-free run id."""
        d = asdict(self)
        d.pop("output")
        d.pop("records")
        return json.dumps(d, sort_keys=True)

    @property
    def run_id(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


_INT_KEYS = ("n_min", "n_max", "n_step", "repetitions", "reference_n", "master_seed")
_FLOAT_KEYS = ("alpha", "scale", "ci_level")
_BOOL_KEYS = ("include_quantile", "check_assumptions")
_STR_KEYS = ("distribution", "reference", "theo_ci_center", "output", "format", "records")
_LIST_KEYS = ("generators", "n_grid")


def _parse_bool(v: str) -> bool:
    v = v.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_int(v: str) -> int:
    # accept 1e6 style as long as it is integral
    x = float(v) if any(c in v for c in ".eE") else int(v)
    if x != int(x):
        raise ValueError(f"not an integer: {v!r}")
    return int(x)


def parse_manifest(text: str) -> ExperimentManifest:
    """Parse the flat ``key = value`` manifest format.

    ``#`` starts a comment; list values are comma separated.  Unknown or
    repeated keys are errors.
    """
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip().lower(), val.strip()
        if not sep or not key:
            raise ManifestError(f"line {lineno}: expected 'key = value'")
        if key in values:
            raise ManifestError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = _parse_int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _BOOL_KEYS:
                values[key] = _parse_bool(val)
            elif key in _STR_KEYS:
                values[key] = val
            elif key == "generators":
                values[key] = tuple(p.strip() for p in val.split(",") if p.strip())
            elif key == "n_grid":
                values[key] = tuple(_parse_int(p.strip()) for p in val.split(",") if p.strip())
            else:
                raise ManifestError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ManifestError):
                raise
            raise ManifestError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    for req in ("distribution", "generators"):
        if req not in values:
            raise ManifestError(f"missing required key {req!r}")
    return ExperimentManifest(**values)


def load_manifest(path) -> ExperimentManifest:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def measures_for(m: ExperimentManifest) -> List[str]:
    """Measure names in output order: ``quantile`` (optional), then one per generator."""
    out = ["quantile"] if m.include_quantile else []
    for gname in m.generators:
        g = parse_generator(gname)
        out.append("superquantile" if g.name == "identity" else f"bregman:{g.name}")
    return out


# ---------------------------------------------------------------- running


@dataclass(frozen=True)
class ConvergenceRecord:
    n: int
    repetition: int
    seed: int
    measure: str
    estimate: float
    error: str = ""
    run_id: str = ""


@dataclass(frozen=True)
class SummaryRow:
    measure: str
    n: int
    mean: float
    ref: float
    exp_ci_lo: float
    exp_ci_hi: float
    theo_ci_lo: float
    theo_ci_hi: float
    sd: float = math.nan
    count: int = 0

    def plot_values(self) -> tuple:
        return tuple(getattr(self, c) for c in PLOT_COLUMNS)


@dataclass
class ConvergenceResult:
    manifest: ExperimentManifest
    records: List[ConvergenceRecord]
    summary: List[SummaryRow]
    references: Dict[str, dict] = field(default_factory=dict)

    def rows_for(self, measure: str) -> List[SummaryRow]:
        return [r for r in self.summary if r.measure == measure]


def row_seed(master_seed: int, n: int, repetition: int) -> int:
    """64-bit seed for one ``(n, repetition)`` cell, independent of the rest of the grid."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(n), int(repetition)))
    return int(ss.generate_state(1, np.uint64)[0])


def _generator_of(measure: str):
    if measure == "quantile":
        return None
    if measure == "superquantile":
        return parse_generator("identity")
    return parse_generator(measure.split(":", 1)[1])


def _run_cell(d: AnalyticDistribution, measures, alpha, n, rep, master_seed, run_id):
    seed = row_seed(master_seed, n, rep)
    s = EmpiricalSample(draw(d, n, seed))
    out = []
    for m in measures:
        try:
            val, err = estimate(s, m, alpha).point, ""
        except (DomainError, InversionError) as exc:
            val, err = math.nan, f"{type(exc).__name__}: {exc}"
        out.append(ConvergenceRecord(n, rep, seed, m, float(val), err, run_id))
    return out


def _oracle_reference(d, measure, alpha) -> float:
    if measure == "quantile":
        return true_quantile(d, alpha)
    return true_bregman_superquantile(d, _generator_of(measure), alpha)


def _theoretical_variance(d, measure, alpha, check: bool) -> Tuple[Optional[float], str]:
    g = _generator_of(measure)
    try:
        if check and g is not None:
            scale = None if g.name == "identity" else g
            verdicts = check_assumptions(d, scale).h_verdicts
            bad = [h for h, v in sorted(verdicts.items()) if v != "satisfied"]
            if bad:
                return None, "assumption " + ", ".join(f"{h} {verdicts[h]}" for h in bad)
        if g is None:
            return quantile_asymptotic_variance(d, alpha), ""
        return asymptotic_variance(d, g, alpha), ""
    except (VarianceDiverges, OracleFailure) as exc:
        return None, f"variance diverges ({exc})"
    except (DomainError, InversionError) as exc:
        return None, f"no limit variance ({exc})"


class OracleCache:
    """JSON sidecar of oracle values keyed by ``family|measure|alpha|quadrature-version``.

    Entries are only ever added; a missing or unreadable file starts empty.
    """

    VERSION = "gk15-1e-10-v1"

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.data: Dict[str, dict] = {}
        if self.path is not None and self.path.exists():
            try:
                self.data = json.loads(self.path.read_text(encoding="utf-8"))
            except (OSError, ValueError):
                log.warning("ignoring unreadable oracle cache %s", self.path)
        self.dirty = False

    def key(self, family: str, measure: str, alpha: float, checked: bool) -> str:
        return f"{family}|{measure}|{alpha!r}|{self.VERSION}{'|checked' if checked else ''}"

    def get(self, key):
        return self.data.get(key)

    def put(self, key, entry):
        self.data[key] = entry
        self.dirty = True

    def save(self):
        if self.path is not None and self.dirty:
            self.path.write_text(json.dumps(self.data, indent=1, sort_keys=True) + "\n", encoding="utf-8")
            self.dirty = False


def _oracle_entry(d, meas, alpha, checked) -> dict:
    try:
        value = _oracle_reference(d, meas, alpha)
    except (OracleFailure, DomainError, InversionError) as exc:
        log.info("oracle unavailable for %s: %s", meas, exc)
        value = math.nan
    var, note = _theoretical_variance(d, meas, alpha, checked)
    return {"value": None if math.isnan(value) else value, "variance": var, "note": note}


def _reference_values(m: ExperimentManifest, d, measures, run_id, cache: Optional[OracleCache] = None) -> Dict[str, dict]:
    cache = cache or OracleCache()
    refs: Dict[str, dict] = {}
    sample_refs: Optional[Dict[str, float]] = None
    for meas in measures:
        key = cache.key(d.name, meas, m.alpha, m.check_assumptions)
        entry = cache.get(key)
        if entry is None:
            entry = _oracle_entry(d, meas, m.alpha, m.check_assumptions)
            cache.put(key, entry)
        value = entry["value"]
        value = math.nan if value is None else float(value)
        source = "oracle"
        if m.reference == "sample" or not math.isfinite(value):
            if sample_refs is None:
                recs = _run_cell(d, measures, m.alpha, m.reference_size, REFERENCE_KEY, m.master_seed, run_id)
                sample_refs = {r.measure: r.estimate for r in recs}
            value, source = sample_refs[meas], "sample"
        refs[meas] = {"value": float(value), "source": source, "variance": entry["variance"], "note": entry["note"]}
    cache.save()
    return refs


def run_convergence(
    m: ExperimentManifest, workers: Optional[int] = None, oracle_cache=None
) -> ConvergenceResult:
    """Run every ``(n, repetition)`` cell and summarise per ``(measure, n)``.

    Estimator domain errors are recorded in the row (estimate NaN) and do not
    stop the run.  Output order is ``(measure, n, repetition)`` whatever the
    completion order of the parallel jobs.  ``oracle_cache`` is an optional
    JSON sidecar path for oracle values and limit variances.
    """
    d = parse_distribution(m.distribution)
    measures = measures_for(m)
    run_id = m.run_id
    jobs = [(n, rep) for n in m.sizes for rep in range(1, m.repetitions + 1)]
    workers = workers or default_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda j: _run_cell(d, measures, m.alpha, j[0], j[1], m.master_seed, run_id), jobs))
    else:
        parts = [_run_cell(d, measures, m.alpha, n, rep, m.master_seed, run_id) for n, rep in jobs]
    order = {meas: i for i, meas in enumerate(measures)}
    records = sorted((r for p in parts for r in p), key=lambda r: (order[r.measure], r.n, r.repetition))
    refs = _reference_values(m, d, measures, run_id, OracleCache(oracle_cache))
    z = NormalDist().inv_cdf(0.5 * (1.0 + m.ci_level))
    summary = []
    for meas in measures:
        ref = refs[meas]
        for n in m.sizes:
            vals = np.array([r.estimate for r in records if r.measure == meas and r.n == n])
            vals = vals[np.isfinite(vals)]
            mean = float(vals.mean()) if vals.size else math.nan
            sd = float(vals.std(ddof=1)) if vals.size > 1 else math.nan
            if ref["variance"] is not None:
                center = ref["value"] if m.theo_ci_center == "reference" else mean
                half = z * math.sqrt(ref["variance"] / n)
                tlo, thi = center - half, center + half
            else:
                tlo = thi = math.nan
            summary.append(
                SummaryRow(meas, n, mean, ref["value"], mean - z * sd, mean + z * sd, tlo, thi, sd, int(vals.size))
            )
    return ConvergenceResult(m, records, summary, refs)


# ---------------------------------------------------------------- plot data


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _json_num(x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def plot_data_bytes(summary: Sequence[SummaryRow], fmt: str = "csv") -> bytes:
    """Serialised plot data; identical summaries give identical bytes."""
    if not summary:
        raise ValueError("summary is empty")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for row in summary:
            w.writerow([_fmt(v) for v in row.plot_values()])
        return buf.getvalue().encode()
    if fmt == "json":
        rows = [{c: (v if c == "measure" else _json_num(v)) for c, v in zip(PLOT_COLUMNS, row.plot_values())} for row in summary]
        return (json.dumps({"columns": list(PLOT_COLUMNS), "rows": rows}, indent=2) + "\n").encode()
    raise ValueError(f"unknown format {fmt!r}")


def emit_plot_data(summary: Sequence[SummaryRow], path, fmt: str = "csv") -> Path:
    """One row per ``(measure, n)`` with the columns of :data:`PLOT_COLUMNS`."""
    data = plot_data_bytes(summary, fmt)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def _num(v) -> float:
    if v is None:
        return math.nan
    return float(v)


def read_plot_data(path, fmt: Optional[str] = None) -> List[SummaryRow]:
    """Inverse of :func:`emit_plot_data` (format taken from the suffix by default)."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    text = path.read_text(encoding="utf-8")
    rows = []
    try:
        if fmt == "json":
            for r in json.loads(text)["rows"]:
                rows.append(SummaryRow(r["measure"], int(r["n"]), *(_num(r[c]) for c in PLOT_COLUMNS[2:])))
        else:
            reader = csv.reader(io.StringIO(text))
            header = tuple(next(reader))
            if header != PLOT_COLUMNS:
                raise ParseError(f"unexpected header {header}")
            for rec in reader:
                rows.append(SummaryRow(rec[0], int(rec[1]), *(float(v) for v in rec[2:])))
    except (KeyError, ValueError, IndexError, StopIteration) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"cannot read plot data {path}: {exc}") from None
    return rows


def write_records(records: Sequence[ConvergenceRecord], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "measure", "n", "repetition", "seed", "estimate", "error"])
        for r in records:
            w.writerow([r.run_id, r.measure, r.n, r.repetition, r.seed, _fmt(r.estimate), r.error])
    return path


# ---------------------------------------------------------------- CSV reports


def report_risks(
    csv_path,
    alphas: Sequence[float] = (0.95,),
    generators: Sequence[str] = ("geometric", "harmonic"),
    ci_level: float = 0.95,
) -> Tuple[List[dict], List[str]]:
    """Quantile, classical and Bregman superquantiles with empirical-mode CIs.

    Returns ``(rows, warnings)``.  A generator whose domain excludes the data
    yields a row with ``status='skipped'`` and the reason; the other rows are
    still produced.
    """
    s = EmpiricalSample.from_csv(csv_path)
    if s.n < 2:
        raise ParseError(f"{csv_path}: need at least 2 numeric values, got {s.n}")
    measures = ["quantile", "superquantile"] + [f"bregman:{parse_generator(g).name}" for g in generators]
    rows = []
    for alpha in alphas:
        for meas in measures:
            row = {"measure": meas, "alpha": alpha, "n": s.n, "point": None, "ci_low": None, "ci_high": None,
                   "status": "ok", "reason": ""}
            try:
                g = _generator_of(meas)
                if g is not None and not g.in_domain(s.values).all():
                    # the estimator only reads the tail, but the report needs the whole file in the domain
                    i = int(np.flatnonzero(~g.in_domain(s.values))[0])
                    raise DomainError(
                        f"value {float(s.values[i])!r} at row {i + 1} is outside the domain {g.domain} of {g.name}",
                        argument="csv", index=i + 1,
                    )
                est = estimate(s, meas, alpha)
                row["point"] = est.point
            except BregsqError as exc:
                row.update(status="skipped", reason=f"{type(exc).__name__}: {exc}")
                rows.append(row)
                continue
            try:
                ci = clt_interval(est, level=ci_level, sample=s)
                row.update(ci_low=ci.ci_low, ci_high=ci.ci_high)
            except NoInterval as exc:
                row["reason"] = f"no interval: {exc.reason}"
            rows.append(row)
    return rows, list(s.warnings)
