"""Experiment runner: parameter sweeps, repeats, metrics and CSV output.

Every repeat of every parameter combination draws its randomness from a
``SeedSequence`` keyed by the master seed, the repeat index and the
combination itself, so results do not depend on sweep order and a rerun with
the same config reproduces the main CSV byte for byte. Wall-clock timings
are kept out of the main CSV for that reason and go to a sidecar file.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import time
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import baselines, protocol
from .datasets import Dataset, dataset_stats, gen_zipf, load_transactions, true_frequencies
from .frequency import FrequencyTable
from .hashing import make_hash_family
from .ldp import PrivacyParams, olh_bucket_count, olh_count_from_support, olh_keep_probability
from .metrics import mse, ncr, var_topk

log = logging.getLogger(__name__)

PROTOCOLS = ("privsketch", "privsketch-nosmp", "multi-pcms-mean", "multi-pcms-min", "ps-olh")
SWEEP_AXES = ("epsilon", "K", "M", "n", "d", "topk")
USER_CHUNK = 16384

RESULT_COLUMNS = [
    "protocol", "epsilon", "K", "M", "n", "d", "topk", "repeat", "summary",
    "mse", "mse_std", "var", "var_std", "var_missing", "ncr", "ncr_std",
]
TIMING_COLUMNS = ["protocol", "epsilon", "K", "M", "n", "d", "repeat", "user_seconds", "collector_seconds"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    protocols: list[str] = field(default_factory=lambda: ["privsketch"])
    epsilon: list[float] = field(default_factory=lambda: [3.0])
    K: list[int] = field(default_factory=lambda: [4])
    M: list[int] = field(default_factory=lambda: [128])
    n: list[int] = field(default_factory=lambda: [10_000])
    d: list[int] = field(default_factory=lambda: [1_000])
    topk: list[int] = field(default_factory=lambda: [10])
    dataset: Optional[str] = None  # transaction file; synthetic Zipf when unset
    zipf_s: float = 1.1
    draws_per_user: int = 100
    repeats: int = 10
    seed: int = 0
    output: Optional[str] = None
    query_domain: str = "full"  # "full" or a file of dense item ids
    clip: bool = False
    pad_length: Optional[int] = None  # PS-OLH; P90 of set lengths when unset
    normalize: str = "matches"  # sampled PrivSketch calibration

    def validate(self) -> "ExperimentConfig":
        for name in ("protocols", *SWEEP_AXES):
            if not getattr(self, name):
                raise ConfigError(f"sweep list {name!r} is empty")
        unknown = [p for p in self.protocols if p not in PROTOCOLS]
        if unknown:
            raise ConfigError(f"unknown protocol(s) {unknown}; choose from {list(PROTOCOLS)}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if any(e <= 0 for e in self.epsilon):
            raise ConfigError("epsilon values must be positive")
        if any(k < 1 for k in self.K) or any(m < 2 for m in self.M):
            raise ConfigError("K must be >= 1 and M >= 2")
        if any(k < 1 for k in self.topk):
            raise ConfigError("topk must be >= 1")
        if self.dataset is not None and len(self.d) > 1:
            raise ConfigError("domain size cannot be swept for a transaction-file dataset")
        if self.normalize not in protocol.NORMALIZATIONS:
            raise ConfigError(f"normalize must be one of {protocol.NORMALIZATIONS}")
        if self.pad_length is not None and self.pad_length < 1:
            raise ConfigError("pad_length must be >= 1")
        return self


# -- config file parsing ---------------------------------------------------

_LIST_PARSERS: dict[str, Callable[[str], object]] = {
    "protocols": str, "epsilon": float, "K": int, "M": int, "n": int, "d": int, "topk": int,
}
_SCALAR_PARSERS: dict[str, Callable[[str], object]] = {
    "dataset": str, "zipf_s": float, "draws_per_user": int, "repeats": int, "seed": int,
    "output": str, "query_domain": str, "pad_length": int, "normalize": str,
}
_ALIASES = {"protocol": "protocols", "eps": "epsilon", "k": "K", "m": "M", "draws": "draws_per_user"}


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_setting(key: str, value: str) -> tuple[str, object]:
    """Normalise a ``key = value`` pair into an ``ExperimentConfig`` field."""
    key = key.strip().replace("-", "_")
    key = _ALIASES.get(key, key)
    try:
        if key in _LIST_PARSERS:
            parts = [p for p in value.replace(",", " ").split() if p]
            return key, [_LIST_PARSERS[key](p) for p in parts]
        if key in _SCALAR_PARSERS:
            return key, _SCALAR_PARSERS[key](value.strip())
        if key == "clip":
            return key, _parse_bool(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None
    raise ConfigError(f"unknown config key {key!r}")


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read a flat ``key = value`` file; ``overrides`` (already parsed) win."""
    settings: dict[str, object] = {}
    if path is not None:
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            name, parsed = parse_setting(key, value)
            settings[name] = parsed
    settings.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in settings.items() if k in known}).validate()


# -- seeding ---------------------------------------------------------------


def _stable_int(value) -> int:
    return zlib.crc32(repr(value).encode("utf-8"))


def repeat_seed(master: int, repeat: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master & 0xFFFFFFFFFFFFFFFF, repeat])


def stream(master: int, repeat: int, *key) -> np.random.Generator:
    """Generator for one (repeat, purpose) pair, independent of loop order."""
    ss = np.random.SeedSequence(
        entropy=repeat_seed(master, repeat).entropy,
        spawn_key=(repeat, *(_stable_int(k) for k in key)),
    )
    return np.random.default_rng(ss)


def _derived_seed(master: int, *key) -> int:
    return int(np.random.SeedSequence([master & 0xFFFFFFFFFFFFFFFF, *(_stable_int(k) for k in key)]).generate_state(1, np.uint64)[0])


# -- protocol runners ------------------------------------------------------


@dataclass
class RunContext:
    dataset: Dataset
    domain: np.ndarray
    epsilon: float
    k_count: int
    m_size: int
    seed: int
    repeat: int
    pad_length: int
    normalize: str = "matches"

    def family(self):
        return make_hash_family(self.k_count, self.m_size, _derived_seed(self.seed, "hash", self.repeat, self.k_count, self.m_size))

    def params(self) -> PrivacyParams:
        return PrivacyParams(self.epsilon, self.k_count, self.m_size)

    def chunks(self):
        users = self.dataset.users
        for start in range(0, len(users), USER_CHUNK):
            yield users[start : start + USER_CHUNK]


@dataclass
class Timed:
    table: FrequencyTable
    user_seconds: float
    collector_seconds: float


def _run_privsketch(ctx: RunContext, rng: np.random.Generator, sampled: bool) -> Timed:
    family, params = ctx.family(), ctx.params()
    hashes = family.hash_all(ctx.domain)
    total = np.zeros(ctx.domain.size, dtype=np.int64)
    matches = np.zeros(ctx.domain.size, dtype=np.int64)
    t_user = t_coll = 0.0
    for chunk in ctx.chunks():
        t0 = time.perf_counter()
        if sampled:
            reports = protocol.simulate_sampled(chunk, params, family, rng)
        else:
            reports = protocol.simulate_full(chunk, params, family, rng)
        t1 = time.perf_counter()
        if sampled:
            c, m = protocol.sampled_counts(reports, hashes)
            matches += m
        else:
            c = protocol.full_counts(reports, hashes)
        total += c
        t_coll += time.perf_counter() - t1
        t_user += t1 - t0
    t0 = time.perf_counter()
    n = ctx.dataset.n
    if sampled:
        values = protocol.calibrate_sampled(total, matches, n, params, ctx.normalize)
    else:
        values = protocol.calibrate_full(total, n, params)
    t_coll += time.perf_counter() - t0
    return Timed(FrequencyTable(ctx.domain, values), t_user, t_coll)


def _run_pcms_mean(ctx: RunContext, rng: np.random.Generator) -> Timed:
    family = ctx.family()
    sums = np.zeros(family.shape, dtype=np.int64)
    per_row = np.zeros(family.k_count, dtype=np.int64)
    t_user = t_coll = 0.0
    for chunk in ctx.chunks():
        t0 = time.perf_counter()
        reports = baselines.simulate_multi_pcms(chunk, ctx.epsilon, family, rng)
        t1 = time.perf_counter()
        s, r = baselines.pcms_row_sums(reports, family.k_count)
        sums += s
        per_row += r
        t_coll += time.perf_counter() - t1
        t_user += t1 - t0
    t0 = time.perf_counter()
    table = baselines.pcms_mean_from_sums(sums, per_row, family, ctx.domain, ctx.epsilon, ctx.dataset.n)
    t_coll += time.perf_counter() - t0
    return Timed(table, t_user, t_coll)


def _run_pcms_min(ctx: RunContext, rng: np.random.Generator) -> Timed:
    family = ctx.family()
    k, m = family.shape
    sums = np.zeros((k, m), dtype=np.int64)
    t_user = t_coll = 0.0
    for chunk in ctx.chunks():
        t0 = time.perf_counter()
        sketches = baselines.simulate_multi_pcms_min(chunk, ctx.epsilon, family, rng)
        t1 = time.perf_counter()
        sums += sketches.sum(axis=0, dtype=np.int64)
        t_coll += time.perf_counter() - t1
        t_user += t1 - t0
    t0 = time.perf_counter()
    n = ctx.dataset.n
    table = baselines.pcms_min_from_sums(sums, n, family, ctx.domain, ctx.epsilon, n)
    t_coll += time.perf_counter() - t0
    return Timed(table, t_user, t_coll)


def _run_ps_olh(ctx: RunContext, rng: np.random.Generator) -> Timed:
    g = olh_bucket_count(ctx.epsilon)
    p = olh_keep_probability(ctx.epsilon, g)
    support = np.zeros(ctx.domain.size, dtype=np.int64)
    t_user = t_coll = 0.0
    for chunk in ctx.chunks():
        t0 = time.perf_counter()
        reports = baselines.simulate_ps_olh(chunk, ctx.pad_length, ctx.epsilon, rng)
        t1 = time.perf_counter()
        support += baselines.olh_supports(reports, ctx.domain, g)
        t_coll += time.perf_counter() - t1
        t_user += t1 - t0
    n = ctx.dataset.n
    est = ctx.pad_length * olh_count_from_support(support, n, p, g) / n
    return Timed(FrequencyTable(ctx.domain, est), t_user, t_coll)


RUNNERS: dict[str, Callable[[RunContext, np.random.Generator], Timed]] = {
    "privsketch": lambda ctx, rng: _run_privsketch(ctx, rng, sampled=True),
    "privsketch-nosmp": lambda ctx, rng: _run_privsketch(ctx, rng, sampled=False),
    "multi-pcms-mean": _run_pcms_mean,
    "multi-pcms-min": _run_pcms_min,
    "ps-olh": _run_ps_olh,
}


def run_protocol(name: str, ctx: RunContext, rng: np.random.Generator) -> Timed:
    try:
        runner = RUNNERS[name]
    except KeyError:
        raise ConfigError(f"unknown protocol {name!r}") from None
    return runner(ctx, rng)


# -- experiment ------------------------------------------------------------


@dataclass
class ResultTable:
    rows: list[dict]
    timings: list[dict]

    def repeat_rows(self) -> list[dict]:
        return [r for r in self.rows if r["summary"] == 0]

    def summary_rows(self) -> list[dict]:
        return [r for r in self.rows if r["summary"] == 1]


def _load_dataset(config: ExperimentConfig, n: int, d: int, cache: dict) -> Dataset:
    if config.dataset is not None:
        if "file" not in cache:
            cache["file"] = load_transactions(config.dataset)
        ds = cache["file"]
        return ds if n >= ds.n else ds.subset(n)
    key = (n, d)
    if key not in cache:
        seed = _derived_seed(config.seed, "dataset", n, d)
        cache[key] = gen_zipf(n, d, config.zipf_s, config.draws_per_user, seed)
    return cache[key]


def _query_domain(config: ExperimentConfig, ds: Dataset) -> np.ndarray:
    if config.query_domain == "full":
        return ds.domain
    ids = np.array([int(t) for t in Path(config.query_domain).read_text().split()], dtype=np.int64)
    if ids.size == 0:
        raise ConfigError(f"candidate list {config.query_domain} is empty")
    if ids.min() < 0 or ids.max() >= ds.domain_size:
        raise ConfigError("candidate ids must lie in the dataset's dense domain")
    return np.unique(ids)


def _summarise(group: list[dict]) -> dict:
    def stats(key):
        vals = np.array([r[key] for r in group], dtype=np.float64)
        ok = vals[~np.isnan(vals)]
        if ok.size == 0:
            return math.nan, math.nan, int(vals.size)
        std = float(np.std(ok, ddof=1)) if ok.size > 1 else 0.0
        return float(np.mean(ok)), std, int(vals.size - ok.size)

    base = {k: group[0][k] for k in ("protocol", "epsilon", "K", "M", "n", "d", "topk")}
    out = dict(base, repeat="", summary=1)
    out["mse"], out["mse_std"], _ = stats("mse")
    out["var"], out["var_std"], out["var_missing"] = stats("var")
    out["ncr"], out["ncr_std"], _ = stats("ncr")
    return out


def run_experiment(config: ExperimentConfig, progress: Optional[Callable[[str], None]] = None) -> ResultTable:
    config.validate()
    cache: dict = {}
    repeat_rows: list[dict] = []
    timings: list[dict] = []
    for n, d in itertools.product(config.n, config.d):
        ds = _load_dataset(config, n, d, cache)
        domain = _query_domain(config, ds)
        truth = true_frequencies(ds, domain)
        pad = config.pad_length or dataset_stats(ds)[4] or 1
        for k_count, m_size, eps, proto in itertools.product(config.K, config.M, config.epsilon, config.protocols):
            for rep in range(config.repeats):
                ctx = RunContext(ds, domain, eps, k_count, m_size, config.seed, rep, pad, config.normalize)
                rng = stream(config.seed, rep, proto, eps, k_count, m_size, ds.n, ds.domain_size)
                timed = run_protocol(proto, ctx, rng)
                est = timed.table.clipped() if config.clip else timed.table
                common = dict(protocol=proto, epsilon=eps, K=k_count, M=m_size, n=ds.n, d=ds.domain_size)
                timings.append(dict(common, repeat=rep, user_seconds=timed.user_seconds, collector_seconds=timed.collector_seconds))
                err = mse(est, truth, domain)
                for k in config.topk:
                    repeat_rows.append(dict(
                        common, topk=k, repeat=rep, summary=0,
                        mse=err, mse_std="", var=var_topk(est, truth, ds.n, k), var_std="",
                        var_missing="", ncr=ncr(est, truth, k), ncr_std="",
                    ))
                if progress:
                    progress(f"{proto} eps={eps} K={k_count} M={m_size} n={ds.n} d={ds.domain_size} repeat={rep} mse={err:.4g}")
    return ResultTable(_with_summaries(repeat_rows), timings)


def _with_summaries(repeat_rows: list[dict]) -> list[dict]:
    order = {p: i for i, p in enumerate(PROTOCOLS)}

    def key(r):
        return (order[r["protocol"]], r["epsilon"], r["K"], r["M"], r["n"], r["d"], r["topk"])

    ordered = sorted(repeat_rows, key=lambda r: (*key(r), r["repeat"]))
    out: list[dict] = []
    for _, group in itertools.groupby(ordered, key=key):
        group = list(group)
        out.extend(group)
        out.append(_summarise(group))
    return out


# -- output ----------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else format(value, ".10g")
    return str(value)


def table_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


def write_results(table: ResultTable, path) -> Path:
    """Write the result CSV and its ``.timing.csv`` sidecar; returns the main path."""
    path = Path(path)
    path.write_text(table_to_csv(table.rows, RESULT_COLUMNS), encoding="utf-8")
    timing_path = path.with_name(path.stem + ".timing.csv")
    timing_path.write_text(table_to_csv(table.timings, TIMING_COLUMNS), encoding="utf-8")
    return path


# -- plot data -------------------------------------------------------------


@dataclass(frozen=True)
class FigureSpec:
    name: str
    x: str
    metric: str
    protocols: tuple[str, ...]
    where: tuple[tuple[str, object], ...] = ()


_SKETCH_PROTOCOLS = ("privsketch", "privsketch-nosmp", "multi-pcms-mean", "multi-pcms-min")
FIGURES = {
    "fig4": FigureSpec("fig4", "epsilon", "mse", ("privsketch", "multi-pcms-mean", "ps-olh")),
    "fig6-var": FigureSpec("fig6-var", "topk", "var", ("privsketch",)),
    "fig6-ncr": FigureSpec("fig6-ncr", "topk", "ncr", ("privsketch",)),
    "fig7-n": FigureSpec("fig7-n", "epsilon", "mse", _SKETCH_PROTOCOLS),
    "fig8a": FigureSpec("fig8a", "M", "mse", _SKETCH_PROTOCOLS),
    "fig8b": FigureSpec("fig8b", "K", "mse", _SKETCH_PROTOCOLS),
    "fig8c": FigureSpec("fig8c", "d", "mse", _SKETCH_PROTOCOLS),
}


def column_name(protocol_name: str, metric: str) -> str:
    return f"{protocol_name.replace('-', '_')}_{metric}"


def plot_data(table: ResultTable, spec: FigureSpec) -> str:
    """CSV text with the x column and one y column per protocol."""
    if spec.x not in SWEEP_AXES:
        raise ConfigError(f"x axis must be one of {SWEEP_AXES}")
    rows = [r for r in table.summary_rows() if all(r[k] == v for k, v in spec.where)]
    if not rows:
        raise ConfigError(f"{spec.name}: no summary rows to plot")
    present = {r["protocol"] for r in rows}
    missing = [p for p in spec.protocols if p not in present]
    if missing:
        raise ConfigError(f"{spec.name}: missing protocol column(s) {missing}")
    series: dict[tuple, dict[str, object]] = {}
    for r in rows:
        if r["protocol"] not in spec.protocols:
            continue
        cell = series.setdefault(r[spec.x], {})
        col = column_name(r["protocol"], spec.metric)
        if col in cell:
            raise ConfigError(f"{spec.name}: several rows per {spec.x}={r[spec.x]} for {r['protocol']}; fix other sweep axes with 'where'")
        cell[col] = r[spec.metric]
    columns = [spec.x] + [column_name(p, spec.metric) for p in spec.protocols]
    out = [dict(cell, **{spec.x: x}) for x, cell in sorted(series.items())]
    return table_to_csv(out, columns)


def emit_plot_data(table: ResultTable, spec: FigureSpec, out_dir) -> Path:
    text = plot_data(table, spec)  # raises before anything is written
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{spec.name}.csv"
    path.write_text(text, encoding="utf-8")
    return path
