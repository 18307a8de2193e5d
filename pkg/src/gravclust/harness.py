"""Monte-Carlo experiment runner behind the ``gravclust run`` command.

Every experiment writes into its output directory:

``series.csv``
    one row per evaluation step, averaged over runs (and nodes).
``summary.csv``
    one row of aggregate metrics; deterministic given the master seed.
``timings.csv``
    wall-clock figures, kept apart so the other files stay reproducible.
``manifest.txt``
    the resolved configuration as ``key = value`` lines; feeding it back
    through ``--config`` reproduces the run.

Experiment kinds add their own files (``nodes.csv``, ``units.csv``,
``timing.csv``).
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, _kernels, core, datagen, diffusion, metrics
from .exceptions import ConfigError

KINDS = ("single", "distributed", "convergence", "timing", "demo-fig1")
DEFAULT_NODE_PE = "0,0,0,0.05,0.05,0.05,0.1,0.1,0.1,0.2"


@dataclass
class ExperimentConfig:
    experiment: str = "single"
    dataset: str = "data1"
    noise: str = "gaussian"
    contamination: str = "none"
    mode: str = "both"
    runs: int = 100
    seed: int = 0
    out: str = "results"
    workers: int = 1
    # stream schedule
    vectors_per_phase: int = 50
    batch_size: int = 10
    clusters: int = 0  # 0: every cluster of the dataset
    stationary: bool = False
    # network
    nodes: int = 10
    neighbors: int = 4
    node_pe: str = DEFAULT_NODE_PE
    # convergence
    sigmas: str = "0.5,3,7"
    conv_steps: int = 300
    conv_features: int = 50
    eps_min: float = 0.5
    # enumeration threshold of the non-robust control series
    control_mmin: float = 1.0
    # clustering parameter overrides; None keeps the library default
    g: Optional[float] = None
    kdamp: Optional[float] = None
    eps_r: Optional[float] = None
    rx: Optional[float] = None
    mmin: Optional[float] = None
    dmax: Optional[float] = None
    p: Optional[str] = None
    dt: Optional[float] = None
    max_speed: Optional[float] = None
    core_radius: Optional[float] = None

    def validate(self) -> None:
        if self.experiment not in KINDS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(KINDS)}")
        if self.dataset not in datagen.DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        try:
            datagen.Noise(self.noise)
        except ValueError:
            raise ConfigError(f"unknown noise family {self.noise!r}") from None
        try:
            diffusion.ExchangeMode(self.mode)
        except ValueError:
            raise ConfigError(f"unknown exchange mode {self.mode!r}") from None
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.experiment == "distributed":
            if not 0 <= self.neighbors < self.nodes:
                raise ConfigError(f"neighbors must lie in [0, {self.nodes - 1}], got {self.neighbors}")
            self.node_contamination()
        self.gc_params()
        self.contamination_spec()
        self.schedule()

    # resolved pieces

    def specs(self) -> List[datagen.ClusterSpec]:
        return datagen.DATASETS[self.dataset](datagen.Noise(self.noise))

    def schedule(self) -> datagen.StreamSchedule:
        n = len(self.specs())
        total = self.clusters or n
        if total > n:
            raise ConfigError(f"dataset {self.dataset} has only {n} clusters")
        if self.experiment == "demo-fig1":
            start = total - 1
        elif self.stationary:
            start = total
        else:
            start = 1
        return datagen.StreamSchedule(self.vectors_per_phase, self.batch_size, total, max(start, 1))

    def gc_params(self) -> core.GcParams:
        base = core.GcParams()
        if self.experiment == "demo-fig1":
            base = core.GcParams(exponent=2.0, eps_r=1.0, r_x=2.0, m_min=7.0)
        elif self.experiment == "convergence":
            base = core.GcParams(d_max=math.inf)
        exponent = None
        if self.p is not None:
            exponent = core.ADAPTIVE if str(self.p) == core.ADAPTIVE else _to_float(self.p, "p")
        params = base.with_overrides(
            g=self.g, k_damp=self.kdamp, eps_r=self.eps_r, r_x=self.rx, m_min=self.mmin,
            d_max=self.dmax, exponent=exponent, delta_t=self.dt, max_speed=self.max_speed,
            core_radius=self.core_radius,
        )
        params.validate()
        return params

    def contamination_spec(self, p_e: Optional[float] = None) -> datagen.ContaminationSpec:
        q = self.specs()[0].q
        return parse_contamination(self.contamination, self.dataset, q, p_e=p_e)

    def node_contamination(self) -> List[datagen.ContaminationSpec]:
        pes = [_to_float(v, "node_pe") for v in str(self.node_pe).split(",") if v.strip()]
        if len(pes) == 1:
            pes = pes * self.nodes
        if len(pes) != self.nodes:
            raise ConfigError(f"node_pe lists {len(pes)} rates for {self.nodes} nodes")
        q = self.specs()[0].q
        if self.contamination == "none":
            return [datagen.NO_CONTAMINATION] * self.nodes
        family = self.contamination
        return [parse_contamination(family, self.dataset, q, p_e=pe) for pe in pes]

    def sigma_values(self) -> List[float]:
        return [_to_float(s, "sigmas") for s in str(self.sigmas).split(",") if s.strip()]


def _to_float(v, name) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {v!r}") from None


def parse_contamination(text: str, dataset: str, q: int, p_e: Optional[float] = None) -> datagen.ContaminationSpec:
    """``none`` | ``chi2:<p_e>`` | ``gauss:<p_e>[:<variance>]``.

    ``chi2`` selects the per-cluster skewed laws of the 2-D datasets.
    """
    parts = str(text).strip().lower().split(":")
    kind = parts[0]
    if kind == "none":
        return datagen.NO_CONTAMINATION
    rate = _to_float(parts[1], "contamination") if len(parts) > 1 else 0.05
    rate = rate if p_e is None else p_e
    if kind == "chi2":
        if dataset == "data1":
            return datagen.data1_chisquare_outliers(rate)
        if dataset == "fig1":
            return datagen.fig1_outliers(rate)
        raise ConfigError(f"chi2 outliers are defined for data1/fig1, not {dataset}")
    if kind == "gauss":
        var = _to_float(parts[2], "contamination") if len(parts) > 2 else 3.0
        return datagen.gaussian_outliers(q, rate, var)
    raise ConfigError(f"unknown contamination spec {text!r}")


# config files

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, value: str):
    kind = str(_FIELD_TYPES[name])
    if value.lower() in ("none", "") and "Optional" in kind:
        return None
    if "bool" in kind:
        return value.lower() in ("1", "true", "yes", "on")
    if "int" in kind and "Optional" not in kind:
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {value!r}") from None
    if "float" in kind:
        return _to_float(value, name)
    return value


def read_config_file(path) -> Dict[str, object]:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "version":
                continue
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, value)
    return out


def config_from(values: Dict[str, object]) -> ExperimentConfig:
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def write_manifest(path, cfg: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# gravclust {__version__} resolved experiment configuration\n")
        for k, v in asdict(cfg).items():
            fh.write(f"{k} = {'none' if v is None else v}\n")
        fh.write("# resolved clustering parameters (informational)\n")
        for k, v in asdict(cfg.gc_params()).items():
            fh.write(f"# {k} = {v}\n")


# seeds

def run_seed(master: int, run: int) -> int:
    return int(np.random.SeedSequence([master, run]).generate_state(1)[0])


def _map(fn, args: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args)))


# single node

def single_run(cfg: ExperimentConfig, run: int) -> dict:
    seed = run_seed(cfg.seed, run)
    specs = cfg.specs()
    truths = np.array([s.centroid for s in specs])
    state = core.new_state(specs[0].q, cfg.gc_params(), seed)
    rng = np.random.default_rng([seed, 1])
    k_hat, k_true, k_ctrl, n_vec, t_idx, dists = [], [], [], [], [], []
    per_cluster = 0
    t0 = time.perf_counter()
    for t, item in enumerate(datagen.make_stream(specs, cfg.schedule(), cfg.contamination_spec(), rng), start=1):
        core.ingest(state, item.coords)
        est = core.step(state)
        if item.cluster == 0:
            per_cluster += 1
        if item.batch_end:
            k_hat.append(est.k_hat)
            k_true.append(item.k_true)
            k_ctrl.append(int((state.masses >= cfg.control_mmin).sum()))
            n_vec.append(per_cluster)
            t_idx.append(t)
            dists.append(metrics.match_centroids(est.centroids, truths[: item.k_true]))
    return dict(k_hat=np.array(k_hat), k_true=np.array(k_true), k_ctrl=np.array(k_ctrl),
                n_vectors=np.array(n_vec), t=np.array(t_idx), matches=dists,
                final_centroids=est.centroids, seconds=time.perf_counter() - t0)


def distributed_run(cfg: ExperimentConfig, run: int) -> dict:
    seed = run_seed(cfg.seed, run)
    specs = cfg.specs()
    truths = np.array([s.centroid for s in specs])
    q = specs[0].q
    schedule = cfg.schedule()
    conts = cfg.node_contamination()
    streams = [list(datagen.make_stream(specs, schedule, conts[j], np.random.default_rng([seed, 2, j])))
               for j in range(cfg.nodes)]
    topo = diffusion.build_topology(diffusion.random_placement(cfg.nodes, seed), cfg.neighbors)
    node_seeds = [int(s) for s in np.random.SeedSequence([seed, 3]).generate_state(cfg.nodes)]
    nodes = diffusion.make_nodes(cfg.nodes, q, cfg.gc_params(), node_seeds)
    mode = diffusion.ExchangeMode(cfg.mode)
    k_hat, k_true, n_vec, t_idx, matches = [], [], [], [], []
    per_cluster = 0
    t0 = time.perf_counter()
    for t in range(len(streams[0])):
        lead = streams[0][t]
        est = diffusion.run_round(nodes, topo, mode, [s[t].coords for s in streams])
        if lead.cluster == 0:
            per_cluster += 1
        if lead.batch_end:
            k_hat.append([e.k_hat for e in est])
            k_true.append(lead.k_true)
            n_vec.append(per_cluster)
            t_idx.append(t + 1)
            matches.append([metrics.match_centroids(e.centroids, truths[: lead.k_true]) for e in est])
    return dict(k_hat=np.array(k_hat), k_true=np.array(k_true), n_vectors=np.array(n_vec),
                t=np.array(t_idx), matches=matches, seconds=time.perf_counter() - t0)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.6g}"
    if isinstance(v, np.integer):
        return int(v)
    return v


SERIES_HEADER = ["step", "vectors_per_cluster", "t", "k_true", "mean_k_hat", "std_k_hat", "p_correct", "centroid_rmse"]
SUMMARY_HEADER = ["experiment", "dataset", "noise", "contamination", "mode", "runs", "rmse_k", "p_corr",
                  "centroid_rmse", "unmatched_estimates", "unmatched_truths", "control_rmse_k", "control_p_corr"]


def _series_rows(results, k_key="k_hat"):
    first = results[0]
    rows = []
    for i in range(len(first["t"])):
        ks = np.array([r[k_key][i] for r in results], dtype=float).ravel()
        truth = first["k_true"][i]
        ms = []
        for r in results:
            m = r["matches"][i]
            ms.extend(m if isinstance(m, list) else [m])
        rows.append([i + 1, first["n_vectors"][i], first["t"][i], truth, ks.mean(), ks.std(),
                     float(np.mean(ks == truth)), metrics.pooled_centroid_rmse(ms)])
    return rows


def _all_matches(results):
    out = []
    for r in results:
        for m in r["matches"]:
            out.extend(m if isinstance(m, list) else [m])
    return out


def _records(results, k_key="k_hat"):
    return [metrics.RunRecord(r["t"], r[k_key], r["k_true"]) for r in results]


def _summary_row(cfg, results, control: bool):
    recs = _records(results)
    ms = _all_matches(results)
    row = dict(experiment=cfg.experiment, dataset=cfg.dataset, noise=cfg.noise,
               contamination=cfg.contamination, mode=cfg.mode if cfg.experiment == "distributed" else "",
               runs=cfg.runs, rmse_k=metrics.rmse_k(recs), p_corr=metrics.p_correct(recs),
               centroid_rmse=metrics.pooled_centroid_rmse(ms),
               unmatched_estimates=sum(m.unmatched_estimates for m in ms),
               unmatched_truths=sum(m.unmatched_truths for m in ms),
               control_rmse_k=math.nan, control_p_corr=math.nan)
    if control:
        crec = _records(results, "k_ctrl")
        row["control_rmse_k"] = metrics.rmse_k(crec)
        row["control_p_corr"] = metrics.p_correct(crec)
    return row


def _timings(out: Path, results) -> None:
    secs = [r["seconds"] for r in results]
    _write_csv(out / "timings.csv", ["run", "seconds"], list(enumerate(secs)))


def _run_single(cfg, out: Path) -> dict:
    results = _map(single_run, [(cfg, r) for r in range(cfg.runs)], cfg.workers)
    _write_csv(out / "series.csv", SERIES_HEADER, _series_rows(results))
    row = _summary_row(cfg, results, control=True)
    _write_csv(out / "summary.csv", SUMMARY_HEADER, [[row[h] for h in SUMMARY_HEADER]])
    _timings(out, results)
    return row


def _run_distributed(cfg, out: Path) -> dict:
    results = _map(distributed_run, [(cfg, r) for r in range(cfg.runs)], cfg.workers)
    _write_csv(out / "series.csv", SERIES_HEADER, _series_rows(results))
    node_rows = []
    for i in range(len(results[0]["t"])):
        ks = np.array([r["k_hat"][i] for r in results], dtype=float)  # runs x nodes
        for j in range(cfg.nodes):
            node_rows.append([i + 1, j, results[0]["k_true"][i], ks[:, j].mean(), ks[:, j].std()])
    _write_csv(out / "nodes.csv", ["step", "node", "k_true", "mean_k_hat", "std_k_hat"], node_rows)
    row = _summary_row(cfg, results, control=False)
    _write_csv(out / "summary.csv", SUMMARY_HEADER, [[row[h] for h in SUMMARY_HEADER]])
    _timings(out, results)
    return row


# convergence

def convergence_run(cfg: ExperimentConfig, run: int, sigma: float) -> np.ndarray:
    """Mass-weighted mean distance of mobile units to the true centre per step.

    A single cluster at (3, 3) with variance 0.3 per axis is loaded at once,
    one mobile unit per feature emitted with spread ``sigma``.
    """
    seed = run_seed(cfg.seed, run)
    centre = np.array([3.0, 3.0])
    feats = np.random.default_rng([seed, 4]).normal(centre, math.sqrt(0.3), size=(cfg.conv_features, 2))
    state = core.new_state(2, cfg.gc_params().with_overrides(r_x=sigma), seed)
    for f in feats:
        core.ingest(state, f)
    out = np.empty(cfg.conv_steps)
    for t in range(cfg.conv_steps):
        core.step(state)
        d = np.linalg.norm(state.positions - centre, axis=1)
        out[t] = float(d @ state.masses / state.masses.sum())
    return out


def _run_convergence(cfg, out: Path) -> dict:
    sigmas = cfg.sigma_values()
    series_rows, summary_rows, summary = [], [], {}
    for sigma in sigmas:
        curves = np.array(_map(convergence_run, [(cfg, r, sigma) for r in range(cfg.runs)], cfg.workers))
        steps = np.array([metrics.convergence_time(c, cfg.eps_min) for c in curves])
        ok = steps != metrics.NEVER
        mean_step = float(steps[ok].mean()) if ok.any() else math.nan
        for t in range(cfg.conv_steps):
            series_rows.append([t + 1, sigma, curves[:, t].mean(), curves[:, t].std()])
        summary_rows.append([sigma, cfg.runs, mean_step, float(ok.mean()), cfg.eps_min])
        summary[sigma] = dict(mean_step=mean_step, converged=float(ok.mean()), steps=steps)
    _write_csv(out / "series.csv", ["step", "sigma", "mean_distance", "std_distance"], series_rows)
    _write_csv(out / "summary.csv", ["sigma", "runs", "mean_convergence_step", "converged_fraction", "eps_min"],
               summary_rows)
    return summary


# timing

def timing_run(cfg: ExperimentConfig, run: int) -> List[tuple]:
    seed = run_seed(cfg.seed, run)
    specs = cfg.specs()
    state = core.new_state(specs[0].q, cfg.gc_params(), seed)
    rng = np.random.default_rng([seed, 1])
    _kernels.warm_up()
    rows, batch, evals = [], 0, 0
    t0 = time.perf_counter()
    for item in datagen.make_stream(specs, cfg.schedule(), cfg.contamination_spec(), rng):
        core.ingest(state, item.coords)
        core.step(state)
        evals += state.last_force_evaluations
        if item.batch_end:
            now = time.perf_counter()
            batch += 1
            rows.append((batch, state.n_fixed, now - t0, evals))
            evals = 0
            t0 = now
    return rows


def run_timing(cfg: ExperimentConfig, out: Optional[Path] = None) -> np.ndarray:
    """Per-batch wall-clock and force-term counts against cumulative input size.

    Returns an array with columns (batch, n_features, mean_seconds, mean_force_evaluations).
    """
    runs = _map(timing_run, [(cfg, r) for r in range(cfg.runs)], cfg.workers)
    arr = np.array(runs, dtype=float)  # runs x batches x 4
    table = np.column_stack([arr[0, :, 0], arr[0, :, 1], arr[:, :, 2].mean(0), arr[:, :, 3].mean(0)])
    if out is not None:
        _write_csv(out / "timing.csv", ["batch", "n_features", "mean_seconds", "mean_force_evaluations"],
                   [[int(r[0]), int(r[1]), r[2], r[3]] for r in table])
    return table


# late-cluster replay

def fig1_run(cfg: ExperimentConfig, run: int, dump_units: bool = False) -> dict:
    seed = run_seed(cfg.seed, run)
    specs = cfg.specs()
    state = core.new_state(specs[0].q, cfg.gc_params(), seed)
    rng = np.random.default_rng([seed, 1])
    k_series, truth, units = [], [], []
    for t, item in enumerate(datagen.make_stream(specs, cfg.schedule(), cfg.contamination_spec(), rng), start=1):
        core.ingest(state, item.coords)
        est = core.step(state)
        k_series.append(est.k_hat)
        truth.append(item.k_true)
        if dump_units:
            for u, (x, m) in enumerate(zip(state.positions, state.masses)):
                units.append([t, u, *x, m, int(m >= state.params.m_min)])
    k_series, truth = np.array(k_series), np.array(truth)
    switch = int(np.argmax(truth == truth.max())) if truth.max() > truth.min() else len(truth)
    before = int(k_series[switch - 1]) if switch > 0 else 0
    hits = np.nonzero(k_series[switch:] == truth.max())[0]
    latency = int(hits[0]) + 1 if len(hits) else metrics.NEVER
    return dict(k=k_series, k_true=truth, before=before, latency=latency, units=units)


def _run_fig1(cfg, out: Path) -> dict:
    results = [fig1_run(cfg, r, dump_units=(r == 0)) for r in range(cfg.runs)] if cfg.workers <= 1 else \
        _map(fig1_run, [(cfg, r, r == 0) for r in range(cfg.runs)], cfg.workers)
    sched = cfg.schedule()
    k_before, k_after = sched.total_clusters - 1, sched.total_clusters
    window = 100
    ok = [r["before"] == k_before and r["latency"] != metrics.NEVER and r["latency"] <= window for r in results]
    ks = np.array([r["k"] for r in results], dtype=float)
    truth = results[0]["k_true"]
    _write_csv(out / "series.csv", ["t", "k_true", "mean_k_hat", "std_k_hat", "p_correct"],
               [[t + 1, truth[t], ks[:, t].mean(), ks[:, t].std(), float(np.mean(ks[:, t] == truth[t]))]
                for t in range(ks.shape[1])])
    q = cfg.specs()[0].q
    _write_csv(out / "units.csv", ["t", "unit", *[f"x{i + 1}" for i in range(q)], "mass", "is_cluster"],
               results[0]["units"])
    lat = [r["latency"] for r in results if r["latency"] != metrics.NEVER]
    row = dict(runs=cfg.runs, k_before=k_before, k_after=k_after, window=window,
               success=int(sum(ok)), success_rate=float(np.mean(ok)),
               mean_latency=float(np.mean(lat)) if lat else math.nan)
    _write_csv(out / "summary.csv", list(row), [list(row.values())])
    return row


def run_experiment(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    write_manifest(out / "manifest.txt", cfg)
    if cfg.experiment == "single":
        return _run_single(cfg, out)
    if cfg.experiment == "distributed":
        return _run_distributed(cfg, out)
    if cfg.experiment == "convergence":
        return _run_convergence(cfg, out)
    if cfg.experiment == "timing":
        table = run_timing(cfg, out)
        return dict(batches=len(table), total_seconds=float(table[:, 2].sum()))
    return _run_fig1(cfg, out)
