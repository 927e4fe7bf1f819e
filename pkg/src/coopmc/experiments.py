"""Declarative experiments: spec files, shared-physics evaluation, threshold tuning, CSV + manifest output."""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import __version__
from .analytics import ErrorReport, SUPPORTED, averaged_error, calibrate_amplification
from .channel import ChannelModel
from .config import MS, UM, ReleaseConfig, SpatialConfig, SystemConfig, TimingConfig, symmetric_rx_positions
from .detectors import (CONST_KINDS, GENIE, LOCAL, MAJORITY, MD_ML, SA_CONST, SA_ML, SD_CONST, SD_ML,
                        DetectorVariant, run_fc_detector)
from .optimizer import AllocationProblem, exhaustive_grid, solve_allocation
from .particle_sim import (DEFAULT_RHO_MIN, FcTiming, TxPhase, af_releases, combine_units, rx_decisions_from_sums, score,
                           simulate_relay, simulate_relay_units, simulate_tx_phase)
from .stochastic import SeededStream

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ["sweep_value", "variant", "history_mode", "q_bar", "std_err", "source", "schema_version"]
SWEEP_AXES = ("m_fc", "K", "rx3_distance", "allocation_grid", "none")
SOURCES = ("analytic", "particle_sim", "optimizer")


class SpecError(ValueError):
    """Invalid experiment spec; ``where`` names the offending field."""

    def __init__(self, where: str, msg: str, line: Optional[int] = None):
        self.where = where
        self.line = line
        loc = f"{where}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{loc}: {msg}")


# ---------------------------------------------------------------- spec parsing

DEFAULT_SYSTEM = {
    "spatial": {"tx_position_um": [0.0, 0.0, 0.0], "fc_position_um": [2.0, 0.0, 0.0], "rx_radius_um": 0.2,
                "fc_radius_um": 0.2, "layout": "symmetric", "K": 2},
    "timing": {"t_trans_ms": 1.0, "t_report_ms": 0.3, "dt_rx_ms": 0.1, "dt_fc_ms": 0.03, "m_rx": 5,
               "m_fc": 10, "L": 20},
    "release": {"s0": 10000, "rx_budget": 2000, "amplification_target": 1000.0,
                "diffusion_um2_per_ms": 5.0, "p1": 0.5},
    "rx_threshold": 5,
}


@dataclass
class ExperimentSpec:
    name: str
    system: dict
    variants: List[DetectorVariant]
    axis: str = "none"
    values: list = field(default_factory=list)
    realizations: int = 2000
    seed: int = 1
    sources: Tuple[str, ...] = ("analytic", "particle_sim")
    tune: bool = False
    out_dir: str = "results"
    raw: dict = field(default_factory=dict)

    def sweep_points(self) -> list:
        return list(self.values) if self.axis != "none" and self.values else [None]


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _line_of(text: str, key: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip().startswith(f"{key}:") or line.strip().startswith(f"- {key}:"):
            return i
    return None


def parse_spec(doc: dict, text: str = "") -> ExperimentSpec:
    if not isinstance(doc, dict):
        raise SpecError("<root>", "expected a mapping")
    known = {"scenario", "system", "variants", "sweep", "realizations", "seed", "sources", "tune", "out_dir"}
    for k in doc:
        if k not in known:
            raise SpecError(k, "unknown field", _line_of(text, k))
    name = str(doc.get("scenario", "experiment"))
    system = _merge(DEFAULT_SYSTEM, doc.get("system", {}))
    variants = []
    for i, v in enumerate(doc.get("variants", [])):
        where = f"variants[{i}]"
        if not isinstance(v, dict) or "kind" not in v:
            raise SpecError(where, "each variant needs a kind", _line_of(text, "kind"))
        kind = str(v["kind"]).upper()
        const = v.get("fc_constant_threshold")
        if kind in CONST_KINDS and const is None:
            const = 0  # placeholder until tuned
        try:
            variants.append(DetectorVariant(kind, v.get("history_mode", GENIE), const))
        except ValueError as e:
            raise SpecError(where, str(e), _line_of(text, "kind")) from None
    if not variants:
        raise SpecError("variants", "at least one variant is required")
    sweep = doc.get("sweep") or {}
    axis = sweep.get("axis", "none")
    if axis not in SWEEP_AXES:
        raise SpecError("sweep.axis", f"must be one of {SWEEP_AXES}", _line_of(text, "axis"))
    values = list(sweep.get("values", []) or [])
    _check_values(axis, values, text)
    realizations = doc.get("realizations", 2000)
    if not isinstance(realizations, int) or realizations < 1:
        raise SpecError("realizations", "must be an integer >= 1", _line_of(text, "realizations"))
    sources = tuple(doc.get("sources", ["analytic", "particle_sim"]))
    for s in sources:
        if s not in SOURCES:
            raise SpecError("sources", f"unknown source {s!r}", _line_of(text, "sources"))
    spec = ExperimentSpec(name=name, system=system, variants=variants, axis=axis, values=values,
                          realizations=realizations, seed=int(doc.get("seed", 1)), sources=sources,
                          tune=bool(doc.get("tune", False)), out_dir=str(doc.get("out_dir", "results")), raw=doc)
    for v in spec.sweep_points():
        try:
            config_for(spec, v)
        except SpecError:
            raise
        except (ValueError, TypeError, KeyError) as e:
            raise SpecError("system", str(e)) from None
    return spec


def _check_values(axis, values, text):
    line = _line_of(text, "values")
    if axis == "none":
        return
    if not values:
        return
    if axis == "m_fc" and not all(isinstance(v, int) and v >= 1 for v in values):
        raise SpecError("sweep.values", "m_fc values must be positive integers", line)
    if axis == "K" and not all(isinstance(v, int) and 1 <= v <= 6 for v in values):
        raise SpecError("sweep.values", "K values must be integers in 1..6", line)
    if axis == "rx3_distance" and not all(isinstance(v, (list, tuple)) and len(v) == 3 for v in values):
        raise SpecError("sweep.values", "rx3_distance values are RX positions [x, y, z] in um", line)
    if axis == "allocation_grid" and not all(isinstance(v, (int, float)) and v >= 0 for v in values):
        raise SpecError("sweep.values", "allocation values must be nonnegative numbers", line)


def load_spec(path: str) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise SpecError("<yaml>", str(e), None if mark is None else mark.line + 1) from None
    if isinstance(doc, dict) and "spec" in doc and "manifest_version" in doc:
        doc = doc["spec"]  # re-run from a manifest
    return parse_spec(doc, text)


def build_system(system: dict, K: Optional[int] = None, rx_positions_um=None, s_alloc=None) -> SystemConfig:
    sp, tm, rel = system["spatial"], system["timing"], system["release"]
    if rx_positions_um is None:
        if "rx_positions_um" in sp and K is None:
            rx_positions_um = sp["rx_positions_um"]
        else:
            K = int(K if K is not None else sp.get("K", 2))
            rx_positions_um = [tuple(np.asarray(p) / UM) for p in symmetric_rx_positions(K)]
    K = len(rx_positions_um)
    spatial = SpatialConfig(tx_position=tuple(np.asarray(sp["tx_position_um"], float) * UM),
                            rx_positions=tuple(tuple(np.asarray(p, float) * UM) for p in rx_positions_um),
                            fc_position=tuple(np.asarray(sp["fc_position_um"], float) * UM),
                            rx_radius=float(sp["rx_radius_um"]) * UM, fc_radius=float(sp["fc_radius_um"]) * UM)
    timing = TimingConfig(t_trans=tm["t_trans_ms"] * MS, t_report=tm["t_report_ms"] * MS, dt_rx=tm["dt_rx_ms"] * MS,
                          dt_fc=tm["dt_fc_ms"] * MS, m_rx=int(tm["m_rx"]), m_fc=int(tm["m_fc"]), L=int(tm["L"]))
    d = float(rel["diffusion_um2_per_ms"]) * UM * UM / MS
    budget = float(rel["rx_budget"])
    if s_alloc is not None:
        s_k = tuple(float(x) for x in s_alloc)
    elif "s_k" in rel and len(rel["s_k"]) == K:
        s_k = tuple(float(x) for x in rel["s_k"])
    else:
        s_k = (float(np.floor(budget / K + 0.5)),) * K
    release = ReleaseConfig(s0=int(rel["s0"]), s_k=s_k, alpha_k=(0.0,) * K, d0=d, d_k=(d,) * K, p1=float(rel["p1"]))
    xi = system.get("rx_threshold", 5)
    cfg = SystemConfig(spatial, timing, release, rx_thresholds=xi)
    if "alpha" in rel:
        a = rel["alpha"]
        cfg = cfg.with_alpha(a if isinstance(a, (list, tuple)) else [a] * K)
    else:
        a = calibrate_amplification(ChannelModel(cfg), float(rel["amplification_target"]))
        cfg = cfg.with_alpha([a] * K)
    return cfg


def config_for(spec: ExperimentSpec, value) -> SystemConfig:
    system = spec.system
    if value is None or spec.axis == "none":
        return build_system(system)
    if spec.axis == "m_fc":
        s = _merge(system, {"timing": {"m_fc": int(value), "dt_fc_ms": system["timing"]["t_report_ms"] / value}})
        return build_system(s)
    if spec.axis == "K":
        return build_system(system, K=int(value))
    if spec.axis == "rx3_distance":
        base = system["spatial"].get("rx_positions_um")
        if not base or len(base) < 2:
            raise SpecError("system.spatial.rx_positions_um", "rx3_distance needs the fixed RX positions listed")
        return build_system(system, rx_positions_um=list(base[:2]) + [list(value)])
    if spec.axis == "allocation_grid":
        base = build_system(system)
        if base.K != 2:
            raise SpecError("sweep.axis", "allocation_grid needs K = 2")
        n = float(system["release"]["rx_budget"])
        if value > n:
            raise SpecError("sweep.values", "allocation exceeds the budget")
        return build_system(system, s_alloc=(value, n - value))
    raise SpecError("sweep.axis", f"unsupported axis {spec.axis}")


def sweep_label(spec: ExperimentSpec, value, cfg: SystemConfig):
    if value is None:
        return ""
    if spec.axis == "rx3_distance":
        return round(float(cfg.spatial.d_tx[-1] / UM), 6)
    return value


def point_seed(base_seed: int, sweep_value, variant: str) -> int:
    h = hashlib.sha256(json.dumps([int(base_seed), repr(sweep_value), variant]).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


# ---------------------------------------------------------------- shared physics

def _chunks(n: int, workers: int) -> List[Tuple[int, int]]:
    k = max(1, min(workers, n))
    edges = np.linspace(0, n, k + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _tx_job(args):
    cfgs, tx, seed, offset, rho = args
    return simulate_tx_phase(cfgs, tx.shape[0], SeededStream(seed), tx=tx, rho_min=rho, row_offset=offset).rx_sums


def _units_job(args):
    cfg, n, seed, timings, offset, rho = args
    return simulate_relay_units(cfg, n, SeededStream(seed), timings, rho, row_offset=offset)


def _relay_job(args):
    cfg, rel, seed, timings, tag, offset, rho = args
    return simulate_relay(cfg, rel, SeededStream(seed), timings, rho, stream_tag=tag, row_offset=offset)


def _pmap(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def _tx_key(cfg: SystemConfig):
    sp, tm, rel = cfg.spatial, cfg.timing, cfg.release
    return (sp.tx_position, tm.t_trans, tm.t_report, tm.dt_rx, tm.m_rx, tm.L, rel.s0, rel.d0, rel.p1)


def _relay_key(cfg: SystemConfig, kind: str):
    sp, tm, rel = cfg.spatial, cfg.timing, cfg.release
    key = (kind, sp.rx_positions, sp.fc_position, sp.fc_radius, tm.t_trans, tm.T, tm.L, rel.d_k)
    if kind == "DF":
        return key + (tuple(int(round(s)) for s in rel.s_k),)
    return key + (rel.alpha_k, sp.rx_positions)


class SimulationBank:
    """Caches particle physics so that every detector, threshold and FC timing reuses one realization.

    Prepare with every config of an experiment first: RX sites and FC sample
    grids are then simulated as unions.
    """

    def __init__(self, sequences: int, seed: int, workers: int = 1, rho_min: float = DEFAULT_RHO_MIN):
        self.R = sequences
        self.seed = seed
        self.workers = workers
        self.rho_min = rho_min
        self._tx: Dict[tuple, TxPhase] = {}
        self._groups: Dict[tuple, List[SystemConfig]] = {}
        self._relay_groups: Dict[tuple, List[SystemConfig]] = {}
        self._relay: Dict[tuple, Dict[FcTiming, np.ndarray]] = {}
        self._models: Dict[SystemConfig, ChannelModel] = {}

    def prepare(self, cfgs: Sequence[SystemConfig]):
        for c in cfgs:
            self._groups.setdefault(_tx_key(c), []).append(c)
            for kind in ("DF", "AF"):
                self._relay_groups.setdefault(_relay_key(c, kind), []).append(c)

    def model(self, cfg) -> ChannelModel:
        if cfg not in self._models:
            self._models[cfg] = ChannelModel(cfg)
        return self._models[cfg]

    def tx_phase(self, cfg: SystemConfig) -> TxPhase:
        key = _tx_key(cfg)
        if key not in self._tx:
            group = self._groups.get(key) or [cfg]
            if cfg not in group:
                group.append(cfg)
            L = cfg.timing.L
            tx = (SeededStream(self.seed, (0,)).rng.random((self.R, L)) < cfg.release.p1).astype(np.int64)
            t0 = time.time()
            jobs = [(group, tx[a:b], self.seed, a, self.rho_min) for a, b in _chunks(self.R, self.workers)]
            parts = _pmap(_tx_job, jobs, self.workers)
            ref = simulate_tx_phase(group, 1, SeededStream(self.seed), tx=tx[:1] * 0)  # site list only
            self._tx[key] = TxPhase(tx=tx, rx_sums=np.concatenate(parts, axis=0), sites=ref.sites)
            log.info("TX phase: %d sequences, %d sites, %.1fs", self.R, ref.sites.shape[0], time.time() - t0)
        return self._tx[key]

    def _timings(self, key) -> List[FcTiming]:
        group = self._relay_groups.get(key, [])
        ts = {FcTiming(c.timing.dt_fc, c.timing.m_fc) for c in group}
        return sorted(ts, key=lambda t: (t.m_fc, t.dt_fc))

    def fc_counts(self, cfg: SystemConfig, relay: str, rx_decisions=None) -> np.ndarray:
        """Per-species FC sums (R, K, L) for ``cfg``'s FC timing."""
        key = _relay_key(cfg, relay)
        if key not in self._relay_groups or cfg not in self._relay_groups[key]:
            self._relay_groups.setdefault(key, []).append(cfg)
        timing = FcTiming(cfg.timing.dt_fc, cfg.timing.m_fc)
        if key not in self._relay or timing not in self._relay[key]:
            timings = self._timings(key)
            if timing not in timings:
                timings.append(timing)
            t0 = time.time()
            chunks = _chunks(self.R, self.workers)
            if relay == "DF":
                jobs = [(cfg, b - a, self.seed, timings, a, self.rho_min) for a, b in chunks]
                parts = _pmap(_units_job, jobs, self.workers)
            else:
                rel = af_releases(cfg, self.tx_phase(cfg).for_config(cfg))
                jobs = [(cfg, rel[a:b], self.seed, timings, 4, a, self.rho_min) for a, b in chunks]
                parts = _pmap(_relay_job, jobs, self.workers)
            self._relay[key] = {t: np.concatenate([p[t] for p in parts], axis=0) for t in timings}
            log.info("%s relay: %d timings, %.1fs", relay, len(timings), time.time() - t0)
        data = self._relay[key][timing]
        if relay == "DF":
            return combine_units(data, rx_decisions)
        return data

    def rx_decisions(self, cfg: SystemConfig) -> np.ndarray:
        return rx_decisions_from_sums(cfg, self.tx_phase(cfg).for_config(cfg))

    def species_counts(self, cfg: SystemConfig, relay: str) -> np.ndarray:
        if relay == "DF":
            return self.fc_counts(cfg, "DF", self.rx_decisions(cfg))
        return self.fc_counts(cfg, "AF")

    def evaluate(self, cfg: SystemConfig, variant: DetectorVariant, rx_threshold: Optional[int] = None) -> ErrorReport:
        if rx_threshold is not None:
            cfg = cfg.with_rx_threshold(rx_threshold)
        tx = self.tx_phase(cfg).tx
        rx_dec = self.rx_decisions(cfg) if variant.relay == "DF" else None
        fc = self.species_counts(cfg, variant.relay)
        res = run_fc_detector(self.model(cfg), variant, fc, tx, rx_dec)
        return score(res.decisions, tx, variant.kind, variant.history_mode, self.seed)


# ---------------------------------------------------------------- tuning

def rx_threshold_grid(cfg: SystemConfig, limit: int = 400) -> List[int]:
    """RX thresholds 1 .. mean + 6 sqrt(mean), the mean being an RX count for a 1 under average ISI."""
    model = ChannelModel(cfg)
    rel = cfg.release
    top = rel.s0 * float(np.max(model.rx_sum[:, 0] + rel.p1 * model.rx_sum[:, 1:].sum(axis=1)))
    hi = int(np.ceil(top + 6 * np.sqrt(top)))
    if hi > limit:
        raise ValueError(f"RX threshold grid of {hi} points exceeds the limit of {limit}")
    return list(range(1, hi + 1))


def fc_threshold_grid(cfg: SystemConfig, variant: DetectorVariant, rx_threshold: int) -> List[int]:
    model = ChannelModel(cfg)
    rel = cfg.release
    if variant.kind == SA_CONST:
        mu = float(np.sum(np.asarray(rel.alpha_k) * rel.s0 * model.rx_sum[:, 0] * model.fc_sum[:, 0]))
        isi = float(np.sum(np.asarray(rel.alpha_k) * rel.s0 * np.cumsum(model.rx_sum, axis=1)[:, -1] *
                           model.fc_sum[:, 1:].sum(axis=1))) * rel.p1
    elif variant.kind == MAJORITY:
        mu = float(np.max(np.asarray(rel.s_k) * model.fc_sum[:, 0]))
        isi = float(np.max(np.asarray(rel.s_k) * model.fc_sum[:, 1:].sum(axis=1)))
    else:
        mu = float(np.sum(np.asarray(rel.s_k) * model.fc_sum[:, 0]))
        isi = float(np.sum(np.asarray(rel.s_k) * model.fc_sum[:, 1:].sum(axis=1)))
    top = mu + isi
    return list(range(1, int(np.ceil(top + 6 * np.sqrt(top))) + 1))


@dataclass
class TunedThreshold:
    sweep_value: object
    variant: str
    history_mode: str
    rx_threshold: Optional[int]
    fc_threshold: Optional[int]
    q_bar: float
    std_err: float
    default_q_bar: float


def _const_error_table(kind: str, fc: np.ndarray, tx: np.ndarray, grid: Sequence[int]) -> np.ndarray:
    """Per-sequence error rates (len(grid), R) of a constant-threshold rule for every threshold in ``grid``."""
    K = fc.shape[1]
    out = np.empty((len(grid), tx.shape[0]))
    pooled = fc.sum(axis=1)
    for i, xf in enumerate(grid):
        if kind == MAJORITY:
            dec = (fc >= xf).sum(axis=1) >= int(np.ceil(K / 2))
        else:
            dec = pooled >= xf
        out[i] = (dec != tx).mean(axis=1)
    return out


def _seq_report(per_seq: np.ndarray):
    R = per_seq.size
    se = float(per_seq.std(ddof=1) / np.sqrt(R)) if R > 1 else float("nan")
    return float(per_seq.mean()), se


def tune_point(bank: SimulationBank, cfg: SystemConfig, variant: DetectorVariant,
               sweep_value=None) -> TunedThreshold:
    """Exhaustive search of the Monte Carlo error over (RX threshold, FC threshold).

    Ties go to the smallest thresholds.  Constant-threshold rules are scored for
    the whole FC grid at once since they ignore the decision history.
    """
    rx_grid = rx_threshold_grid(cfg) if variant.relay == "DF" else [None]
    default = bank.evaluate(cfg, variant)
    best = None
    for xr in rx_grid:
        run_cfg = cfg if xr is None else cfg.with_rx_threshold(xr)
        if variant.kind in CONST_KINDS:
            grid = fc_threshold_grid(cfg, variant, xr or 0)
            tx = bank.tx_phase(run_cfg).tx
            table = _const_error_table(variant.kind, bank.species_counts(run_cfg, variant.relay), tx, grid)
            for xf, row in zip(grid, table):
                q, se = _seq_report(row)
                key = (q, xr or 0, xf)
                if best is None or key < best[0]:
                    best = (key, se, xr, xf)
        else:
            rep = bank.evaluate(run_cfg, variant)
            key = (rep.q_bar, xr or 0, 0)
            if best is None or key < best[0]:
                best = (key, rep.std_err, xr, None)
    (q, _, _), se, xr, xf = best
    return TunedThreshold(sweep_value, variant.kind, variant.history_mode, xr, xf, q, se, default.q_bar)


def tune_constant_thresholds(spec: ExperimentSpec, workers: int = 1, bank: Optional[SimulationBank] = None):
    bank = bank or SimulationBank(spec.realizations, point_seed(spec.seed, "physics", ""), workers)
    cfgs = [(v, config_for(spec, v)) for v in spec.sweep_points()]
    bank.prepare([c for _, c in cfgs])
    table = []
    for value, cfg in cfgs:
        for variant in spec.variants:
            t = tune_point(bank, cfg, variant, sweep_label(spec, value, cfg))
            log.info("tuned %s at %s: rx=%s fc=%s q=%.4g", variant.label, value, t.rx_threshold, t.fc_threshold,
                     t.q_bar)
            table.append(t)
    return table


# ---------------------------------------------------------------- running

@dataclass
class ResultRow:
    sweep_value: object
    variant: str
    history_mode: str
    q_bar: float
    std_err: Optional[float]
    source: str

    def as_list(self):
        se = "" if self.std_err is None or not np.isfinite(self.std_err) else repr(float(self.std_err))
        return [self.sweep_value, self.variant, self.history_mode, repr(float(self.q_bar)), se, self.source,
                CSV_SCHEMA_VERSION]


def _analytic(cfg, variant, realizations, seed) -> ErrorReport:
    return averaged_error(variant, ChannelModel(cfg), realizations, SeededStream(seed))


def run_points(spec: ExperimentSpec, workers: int = 1, bank: Optional[SimulationBank] = None) -> List[ResultRow]:
    rows: List[ResultRow] = []
    points = [(v, config_for(spec, v)) for v in spec.sweep_points()]
    need_sim = "particle_sim" in spec.sources or spec.tune
    if need_sim and bank is None:
        bank = SimulationBank(spec.realizations, point_seed(spec.seed, "physics", ""), workers)
        bank.prepare([c for _, c in points])
    for value, cfg in points:
        label = sweep_label(spec, value, cfg)
        for variant in spec.variants:
            rx_t = None
            v = variant
            if spec.tune:
                t = tune_point(bank, cfg, variant, label)
                rx_t = t.rx_threshold
                if t.fc_threshold is not None:
                    v = DetectorVariant(variant.kind, variant.history_mode, t.fc_threshold)
            run_cfg = cfg if rx_t is None else cfg.with_rx_threshold(rx_t)
            mode = "none" if v.kind in CONST_KINDS else v.history_mode
            if "analytic" in spec.sources and v.kind in SUPPORTED and v.history_mode == GENIE:
                rep = _analytic(run_cfg, v, spec.realizations, point_seed(spec.seed, value, v.label))
                rows.append(ResultRow(label, v.kind, mode, rep.q_bar, rep.std_err, "analytic"))
            if "particle_sim" in spec.sources:
                rep = bank.evaluate(run_cfg, v)
                rows.append(ResultRow(label, v.kind, mode, rep.q_bar, rep.std_err, "particle_sim"))
        if "optimizer" in spec.sources and cfg.K >= 1:
            n = float(spec.system["release"]["rx_budget"])
            sol = solve_allocation(AllocationProblem(cfg, N=n, seed=spec.seed))
            rows.append(ResultRow(label, SD_ML, GENIE, sol.full_objective, None, "optimizer"))
    return rows


def write_csv(rows: Sequence[ResultRow], path: str):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path: str) -> List[dict]:
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _versions() -> dict:
    import numba
    import scipy
    return {"coopmc": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "pyyaml": yaml.__version__}


def _file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def run_experiment(spec: ExperimentSpec, out_dir: Optional[str] = None, workers: int = 1, mode: str = "run") -> dict:
    """Run a spec and write ``<scenario>.csv`` (or the tuning / optimizer table) plus ``manifest.json``."""
    out_dir = out_dir or spec.out_dir
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    files = []
    if mode == "run":
        rows = run_points(spec, workers)
        path = os.path.join(out_dir, f"{spec.name}.csv")
        write_csv(rows, path)
        files.append(path)
    elif mode == "tune":
        table = tune_constant_thresholds(spec, workers)
        path = os.path.join(out_dir, f"{spec.name}_thresholds.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep_value", "variant", "history_mode", "rx_threshold", "fc_threshold", "q_bar", "std_err",
                        "default_q_bar", "schema_version"])
            for t in table:
                w.writerow([t.sweep_value, t.variant, t.history_mode, "" if t.rx_threshold is None else t.rx_threshold,
                            "" if t.fc_threshold is None else t.fc_threshold, repr(t.q_bar), repr(t.std_err),
                            repr(t.default_q_bar), CSV_SCHEMA_VERSION])
        files.append(path)
    elif mode == "optimize":
        path = os.path.join(out_dir, f"{spec.name}_allocation.csv")
        write_csv(optimize_rows(spec), path)
        files.append(path)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    manifest = {
        "manifest_version": 1,
        "mode": mode,
        "scenario": spec.name,
        "config_hash": config_hash(spec.raw),
        "seed": spec.seed,
        "realizations": spec.realizations,
        "versions": _versions(),
        "wall_time_s": round(time.time() - t0, 3),
        "files": {os.path.basename(f): _file_digest(f) for f in files},
        "spec": spec.raw,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return manifest


def optimize_rows(spec: ExperimentSpec) -> List[ResultRow]:
    """Allocation curve (adaptive-threshold objective) and the multistart optimum for each sweep point."""
    rows = []
    n = float(spec.system["release"]["rx_budget"])
    for value in spec.sweep_points():
        cfg = config_for(spec, value) if spec.axis != "allocation_grid" else build_system(spec.system)
        problem = AllocationProblem(cfg, N=n, seed=spec.seed)
        if cfg.K <= 3:
            grid = exhaustive_grid(problem, n / 20)
            for obj, alloc in grid.history:
                rows.append(ResultRow(";".join(f"{a:g}" for a in alloc), SD_ML, GENIE, obj, None, "analytic"))
        sol = solve_allocation(problem)
        rows.append(ResultRow(";".join(f"{a:.6g}" for a in sol.s_dagger), SD_ML, GENIE, sol.full_objective, None,
                              "optimizer"))
        if spec.axis == "allocation_grid":
            break
    return rows
