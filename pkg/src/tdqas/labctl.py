"""Experiment harness: run configs, the gate-mutation and instantiation experiments, reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .circuitspace import (
    NATIVE_GATESET,
    Circuit,
    GateKind,
    GateSet,
    instantiate,
    layered_space_sizes,
    mutate_gate_types,
    random_assignment,
    random_circuit,
    random_topology,
    sequence_space_sizes,
    space_report,
)
from .dqas_engine import DqasConfig, run_dqas, run_td_gt
from .paulisim import NOISELESS, NoiseConfig, circuit_depth
from .problems import er_graph, generate_entanglement_dataset, heisenberg, hydrogen, tfim
from .supernet_engine import (
    SupernetConfig,
    retrain_td,
    run_gt_phase,
    run_supernet,
    run_td_phase,
)
from .trainer import CostLedger, Objective, TrainConfig, derive_seed, train

TASKS = ("vqe_h2", "vqe_heisenberg", "vqe_tfim", "maxcut", "classify")
ENGINES = ("supernet", "dqas")
MODES = ("baseline", "tdgt")


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


# --------------------------------------------------------------------------
# configuration


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _pick(section: dict, allowed: Sequence[str], where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return dict(section)


def parse_noise(section: dict) -> NoiseConfig:
    keys = ("enabled", "p_single_depol", "p_double_depol", "p_bitflip")
    try:
        return NoiseConfig(**_pick(section, keys, "noise"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[noise]: {exc}") from exc


def parse_train(section: dict, seed: int) -> TrainConfig:
    keys = ("max_iters", "learning_rate", "optimizer", "restarts", "init_scale", "batch_size")
    try:
        return TrainConfig(seed=seed, **_pick(section, keys, "trainer"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[trainer]: {exc}") from exc


def _gateset(text, where: str) -> GateSet:
    if isinstance(text, (list, tuple)):
        text = ",".join(map(str, text))
    if not isinstance(text, str):
        raise ConfigError(f"{where}: gate set must be a string or list")
    try:
        return GateSet.parse(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad gate set {text!r}: {exc}") from exc


@dataclass
class RunConfig:
    task: str
    engine: str
    mode: str
    seed: int
    noise: NoiseConfig = NOISELESS
    train: TrainConfig = field(default_factory=TrainConfig)
    problem: dict = field(default_factory=dict)
    engine_section: dict = field(default_factory=dict)
    output: Optional[str] = None


def preset_names() -> list[str]:
    root = resources.files("tdqas.presets")
    return sorted(f"{d.name}/{f.name[:-5]}" for d in root.iterdir() if d.is_dir()
                  for f in d.iterdir() if f.name.endswith(".toml"))


def load_toml(path: str) -> dict:
    """Read a config file; a name like ``desk/h2_supernet`` selects a bundled preset."""
    try:
        if not os.path.exists(path) and path.removesuffix(".toml") in preset_names():
            text = resources.files("tdqas.presets").joinpath(path.removesuffix(".toml") + ".toml").read_text()
            return tomllib.loads(text)
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_run_config(data: dict) -> RunConfig:
    top = ("task", "engine", "mode", "seed", "output", "noise", "trainer", "problem", "supernet", "dqas")
    _pick(data, top, "top level")
    for key in ("task", "engine", "seed"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    task, engine, mode = data["task"], data["engine"], data.get("mode", "tdgt")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    if engine not in ENGINES:
        raise ConfigError(f"engine must be one of {ENGINES}")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    seed = data["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    if engine not in data:
        raise ConfigError(f"missing [{engine}] section")
    return RunConfig(
        task, engine, mode, seed,
        parse_noise(_section(data, "noise")),
        parse_train(_section(data, "trainer"), seed),
        _section(data, "problem"),
        _section(data, engine),
        data.get("output"),
    )


PROBLEM_KEYS = {
    "vqe_h2": ("hamiltonian_file",),
    "vqe_heisenberg": ("n_qubits",),
    "vqe_tfim": ("n_qubits",),
    "maxcut": ("graph_seed", "n_nodes", "edge_p", "n_graphs", "initial"),
    "classify": ("dataset_seed", "n_qubits", "n_train", "n_test", "band_low", "band_high", "eval_batch"),
}


def build_objective(task: str, problem: dict) -> Objective:
    """Task objective; problem instances use their own seeds so runs with different seeds share them."""
    if task not in PROBLEM_KEYS:
        raise ConfigError(f"unknown task {task!r}")
    _pick(problem, PROBLEM_KEYS[task], "problem")
    if task == "vqe_h2":
        return Objective.vqe(hydrogen(problem.get("hamiltonian_file")))
    if task == "vqe_heisenberg":
        return Objective.vqe(heisenberg(int(problem.get("n_qubits", 5))))
    if task == "vqe_tfim":
        return Objective.vqe(tfim(int(problem.get("n_qubits", 6))))
    if task == "maxcut":
        rng = np.random.default_rng(int(problem.get("graph_seed", 2024)))
        n = int(problem.get("n_nodes", 10))
        p = float(problem.get("edge_p", 0.5))
        graphs = []
        while len(graphs) < int(problem.get("n_graphs", 10)):
            g = er_graph(n, p, rng)
            if g.edges:
                graphs.append(g)
        return Objective.maxcut(graphs, initial=problem.get("initial", "zero"))
    if task == "classify":
        rng = np.random.default_rng(int(problem.get("dataset_seed", 2024)))
        train_set, test_set = generate_entanglement_dataset(
            int(problem.get("n_qubits", 8)),
            int(problem.get("n_train", 400)),
            int(problem.get("n_test", 100)),
            tuple(problem.get("band_low", (0.10, 0.20))),
            tuple(problem.get("band_high", (0.40, 0.50))),
            rng,
        )
        return Objective.classification(train_set, test_set, eval_batch=int(problem.get("eval_batch", 64)))


_SUPERNET_KEYS = ("n_experts", "T_total", "T_warm", "N_search", "T_extra", "learning_rate", "init_scale")


def _supernet_config(base: dict, phase: dict, n_qubits: int, train: TrainConfig, noise, seed, default_gs):
    merged = {k: v for k, v in base.items() if k in _SUPERNET_KEYS}
    merged.update({k: v for k, v in phase.items() if k in _SUPERNET_KEYS})
    gateset = _gateset(phase.get("gateset", base.get("gateset", default_gs)), "[supernet]")
    try:
        return SupernetConfig(
            n_qubits, int(base.get("n_layers", 3)), gateset, train=train, noise=noise, seed=seed, **merged
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[supernet]: {exc}") from exc


def supernet_configs(cfg: RunConfig, n_qubits: int):
    sec = cfg.engine_section
    _pick(sec, ("n_layers", "gateset", "td", "gt") + _SUPERNET_KEYS, "supernet")
    td, gt = _section(sec, "td"), _section(sec, "gt")
    _pick(td, ("gateset",) + _SUPERNET_KEYS, "supernet.td")
    _pick(gt, ("gateset",) + _SUPERNET_KEYS, "supernet.gt")
    base = _supernet_config(sec, {}, n_qubits, cfg.train, cfg.noise, cfg.seed, "I,Ry,Rz|CNOT,CI")
    td_cfg = _supernet_config(sec, td, n_qubits, cfg.train, cfg.noise, derive_seed(cfg.seed, 1), "Ry,I|CNOT,CI")
    gt_cfg = _supernet_config(sec, gt, n_qubits, cfg.train, cfg.noise, derive_seed(cfg.seed, 2), "Ry,Rz|CNOT")
    return base, td_cfg, gt_cfg


def dqas_config(cfg: RunConfig, n_qubits: int) -> DqasConfig:
    sec = dict(cfg.engine_section)
    keys = ("n_gates", "gateset", "td_gateset", "N_batch", "N_train", "lr_structure", "learning_rate",
            "init_scale", "converge_prob", "N_batch_td", "N_train_td", "N_batch_gt", "N_train_gt")
    _pick(sec, keys, "dqas")
    if "n_gates" not in sec:
        raise ConfigError("[dqas] needs n_gates")
    gateset = _gateset(sec.pop("gateset", "Rx,Ry,Rz|XX,YY,ZZ"), "[dqas]")
    td_gateset = _gateset(sec.pop("td_gateset", "Rx|XX"), "[dqas]")
    try:
        return DqasConfig(n_qubits, gateset=gateset, td_gateset=td_gateset, train=cfg.train,
                          noise=cfg.noise, seed=cfg.seed, **sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[dqas]: {exc}") from exc


# --------------------------------------------------------------------------
# runs


def circuit_properties(circuit: Circuit) -> dict:
    return {"depth": circuit_depth(circuit), "n_param": circuit.n_params, "n_gates": circuit.n_gates}


def _phase(objective: Objective, circuit, params, value, head, noise, ledger) -> dict:
    metric = objective.metric(circuit, params, value, head, noise, ledger, "experiment")
    return {"metric": metric, "loss": value, "properties": circuit_properties(circuit),
            "circuit": circuit.to_dict()}


def _space(joint_report, topo_report, gate_report) -> dict:
    return space_report(
        joint_report.joint_size, topo_report.topo_size, gate_report.gate_size_min, gate_report.gate_size_max
    ).to_dict()


def run(cfg: RunConfig) -> dict:
    """Execute one engine/mode and return the report dictionary."""
    objective = build_objective(cfg.task, cfg.problem)
    n = objective.n_qubits
    ledger = CostLedger()
    phases = {}
    if cfg.engine == "supernet":
        base, td_cfg, gt_cfg = supernet_configs(cfg, n)
        space = _space(
            layered_space_sizes(base.gateset, n, base.n_layers),
            layered_space_sizes(td_cfg.gateset, n, td_cfg.n_layers),
            layered_space_sizes(gt_cfg.gateset, n, gt_cfg.n_layers),
        )
        if cfg.mode == "baseline":
            res = run_supernet(base, objective, ledger, "baseline")
            final = _phase(objective, res.circuit, res.params, res.value, res.head, cfg.noise, ledger)
        else:
            td = run_td_phase(td_cfg, objective, ledger)
            td_fit = retrain_td(td, td_cfg, objective, ledger)
            phases["TD"] = _phase(objective, td.circuit, td_fit.params, td_fit.value, td_fit.head,
                                  cfg.noise, ledger)
            phases["TD"]["topology"] = td.topology.to_dict()
            gt = run_gt_phase(td, gt_cfg, objective, ledger)
            phases["GT"] = _phase(objective, gt.circuit, gt.params, gt.value, gt.head, cfg.noise, ledger)
            phases["GT"].update(n_candidates=gt.n_candidates, exhaustive=gt.exhaustive)
            final = phases["GT"]
    else:
        dcfg = dqas_config(cfg, n)
        space = _space(
            sequence_space_sizes(dcfg.gateset, n, dcfg.n_gates),
            sequence_space_sizes(dcfg.td_gateset, n, dcfg.n_gates),
            sequence_space_sizes(dcfg.gateset.active(), n, dcfg.n_gates),
        )
        if cfg.mode == "baseline":
            res = run_dqas(dcfg, objective, ledger, "baseline")
            final = _phase(objective, res.circuit, res.params, res.value, res.head, cfg.noise, ledger)
            final["iterations"] = res.iterations
        else:
            rep = run_td_gt(dcfg, objective, ledger)
            for name, res in (("TD", rep.td), ("GT", rep.gt)):
                phases[name] = _phase(objective, res.circuit, res.params, res.value, res.head, cfg.noise, ledger)
                phases[name]["iterations"] = res.iterations
            phases["TD"]["topology"] = rep.topology.to_dict()
            final = phases["GT"]
    totals = ledger.totals()
    return {
        "task": cfg.task,
        "engine": cfg.engine,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "noise": cfg.noise.enabled,
        "metric": final["metric"],
        "properties": final["properties"],
        "qcc": {tag: totals[tag] for tag in ("TD", "GT", "baseline", "retrain")},
        "qcc_total": ledger.total(),
        "ledger": ledger.to_dict(),
        "search_space": space,
        "circuit": final["circuit"],
        "phases": phases,
    }


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# report summary

SUMMARY_FIELDS = ("task", "engine", "mode", "seed", "metric", "td_metric", "qcc_TD", "qcc_GT",
                  "qcc_baseline", "qcc_retrain", "depth", "n_param", "n_gates")


def report_summary(reports: Sequence[dict]) -> str:
    """One CSV row per report, in input order."""
    if not reports:
        raise ValueError("need at least one report")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    for rep in reports:
        try:
            row = [rep["task"], rep["engine"], rep["mode"], rep["seed"], rep["metric"],
                   rep.get("phases", {}).get("TD", {}).get("metric", "")]
            row += [rep["qcc"][t] for t in ("TD", "GT", "baseline", "retrain")]
            row += [rep["properties"][k] for k in ("depth", "n_param", "n_gates")]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"report does not match the schema: missing {exc}") from exc
        writer.writerow(row)
    return out.getvalue()


# --------------------------------------------------------------------------
# experiments


@dataclass
class HypothesisRecord:
    p: float
    variants: np.ndarray
    d: float


def mse_deviation(p: float, variants: Sequence[float]) -> float:
    variants = np.asarray(variants, dtype=float)
    return float(np.mean((p - variants) ** 2))


def _performance(objective: Objective, loss: float) -> float:
    # higher is better: -energy, approximation ratio, -BCE
    return -loss


def best_performance(objective, circuit, train_cfg, noise) -> float:
    return _performance(objective, train(objective, circuit, train_cfg, noise).value)


def hypothesis_experiment(
    objective: Objective,
    n_originals: int,
    n_variants: int,
    n_gates: int,
    fraction: float,
    restarts: int,
    train_cfg: TrainConfig,
    noise: NoiseConfig = NOISELESS,
    seed: int = 0,
    gateset: GateSet = NATIVE_GATESET,
) -> list[HypothesisRecord]:
    """Train originals and class-preserving mutants; ``d_i`` is the mean squared deviation."""
    records = []
    for i in range(n_originals):
        rng = np.random.default_rng(derive_seed(seed, 51, i))
        original = random_circuit(gateset, objective.n_qubits, n_gates, rng)
        cfg = train_cfg.replace(restarts=restarts, seed=derive_seed(seed, 52, i))
        p = best_performance(objective, original, cfg, noise)
        variants = []
        for j in range(n_variants):
            mutant = mutate_gate_types(original, fraction, rng, gateset)
            vcfg = train_cfg.replace(restarts=restarts, seed=derive_seed(seed, 53, i, j))
            variants.append(best_performance(objective, mutant, vcfg, noise))
        records.append(HypothesisRecord(p, np.array(variants), mse_deviation(p, variants)))
    return records


def bin_means(p: np.ndarray, d: np.ndarray, n_bins: int) -> list[tuple[float, float, int]]:
    """Equal-width bins over ``p``: ``(center, mean d, count)`` for every nonempty bin."""
    p, d = np.asarray(p, dtype=float), np.asarray(d, dtype=float)
    if p.size == 0:
        return []
    lo, hi = float(p.min()), float(p.max())
    if hi == lo:
        return [(lo, float(d.mean()), int(p.size))]
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, p, side="right") - 1, 0, n_bins - 1)
    out = []
    for b in range(n_bins):
        sel = idx == b
        if sel.any():
            out.append((float((edges[b] + edges[b + 1]) / 2), float(d[sel].mean()), int(sel.sum())))
    return out


def hypothesis_summary(records, noisy: bool, vqe: bool) -> dict:
    p = np.array([r.p for r in records])
    d = np.array([r.d for r in records])
    keep = np.ones(p.size, dtype=bool)
    if noisy and vqe:
        keep = p >= -5.0  # performance is -energy; drop extreme outliers before binning
    order = np.argsort(p[keep], kind="stable")
    ps, ds = p[keep][order], d[keep][order]
    q = max(1, ps.size // 5)
    return {
        "n": int(p.size),
        "n_binned": int(keep.sum()),
        "bins": bin_means(ps, ds, 10 if noisy else 100),
        "top_quintile_mean_d": float(ds[-q:].mean()) if ds.size else math.nan,
        "bottom_quintile_mean_d": float(ds[:q].mean()) if ds.size else math.nan,
        "fraction_d_below_0.1": float(np.mean(d < 0.1)) if d.size else math.nan,
    }


def hypothesis_csv(records, vqe: bool) -> str:
    out = io.StringIO()
    if vqe:
        out.write("# performance = -energy\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["p", "d"])
    for r in records:
        writer.writerow([repr(r.p), repr(r.d)])
    return out.getvalue()


@dataclass
class CorrelationRecord:
    topo_id: int
    y_bar: float
    y_prime: float


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 points for a correlation")
    xc, yc = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0:
        raise ValueError("correlation undefined for constant data")
    return float(np.clip(xc @ yc / denom, -1.0, 1.0))


def correlation_experiment(
    objective: Objective,
    n_topologies: int,
    n_assignments: int,
    n_gates: int,
    train_cfg: TrainConfig,
    instantiations: Sequence[tuple[str, str]] = (("Rx", "XX"),),
    noise: NoiseConfig = NOISELESS,
    seed: int = 0,
    gateset: GateSet = NATIVE_GATESET,
) -> dict[tuple[str, str], tuple[list[CorrelationRecord], float]]:
    """Per topology: mean trained performance of random assignments vs. each instantiation's."""
    if n_topologies < 3:
        raise ValueError("need at least 3 topologies")
    topologies, y_bar = [], []
    for t in range(n_topologies):
        rng = np.random.default_rng(derive_seed(seed, 61, t))
        topo = random_topology(objective.n_qubits, n_gates, rng)
        topologies.append(topo)
        perf = []
        for a in range(n_assignments):
            circuit = random_assignment(topo, gateset, rng)
            cfg = train_cfg.replace(restarts=1, seed=derive_seed(seed, 62, t, a))
            perf.append(best_performance(objective, circuit, cfg, noise))
        y_bar.append(float(np.mean(perf)))
    results = {}
    for single, double in instantiations:
        records = []
        for t, topo in enumerate(topologies):
            circuit = instantiate(topo, GateKind.parse(single), GateKind.parse(double))
            cfg = train_cfg.replace(restarts=1, seed=derive_seed(seed, 63, t))
            records.append(CorrelationRecord(t, y_bar[t], best_performance(objective, circuit, cfg, noise)))
        r = pearson([x.y_bar for x in records], [x.y_prime for x in records])
        results[(single, double)] = (records, r)
    return results


def correlation_csv(records: Sequence[CorrelationRecord], vqe: bool) -> str:
    out = io.StringIO()
    if vqe:
        out.write("# performance = -energy\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["topo_id", "y_bar", "y_prime"])
    for r in records:
        writer.writerow([r.topo_id, repr(r.y_bar), repr(r.y_prime)])
    return out.getvalue()


@dataclass
class ExperimentConfig:
    task: str
    seed: int
    noise: NoiseConfig
    train: TrainConfig
    problem: dict
    options: dict
    output: Optional[str] = None


def parse_experiment_config(data: dict, kind: str) -> ExperimentConfig:
    _pick(data, ("task", "seed", "output", "noise", "trainer", "problem", kind), "top level")
    for key in ("task", "seed"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    if data["task"] not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    seed = data["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    opts = _section(data, kind)
    allowed = {
        "hypothesis": ("n_originals", "n_variants", "n_gates", "fraction", "restarts", "gateset"),
        "correlation": ("n_topologies", "n_assignments", "n_gates", "instantiations", "gateset"),
    }[kind]
    _pick(opts, allowed, kind)
    return ExperimentConfig(
        data["task"], seed, parse_noise(_section(data, "noise")), parse_train(_section(data, "trainer"), seed),
        _section(data, "problem"), opts, data.get("output"),
    )


def run_hypothesis(cfg: ExperimentConfig) -> tuple[list[HypothesisRecord], dict]:
    o = cfg.options
    objective = build_objective(cfg.task, cfg.problem)
    records = hypothesis_experiment(
        objective, int(o.get("n_originals", 60)), int(o.get("n_variants", 5)), int(o.get("n_gates", 35)),
        float(o.get("fraction", 0.2)), int(o.get("restarts", 5)), cfg.train, cfg.noise, cfg.seed,
        _gateset(o.get("gateset", "Rx,Ry,Rz|XX,YY,ZZ"), "[hypothesis]"),
    )
    return records, hypothesis_summary(records, cfg.noise.enabled, cfg.task.startswith("vqe"))


def run_correlation(cfg: ExperimentConfig):
    o = cfg.options
    objective = build_objective(cfg.task, cfg.problem)
    pairs = [tuple(p) for p in o.get("instantiations", [["Rx", "XX"]])]
    for pair in pairs:
        if len(pair) != 2:
            raise ConfigError("instantiations must be [single, double] pairs")
    return correlation_experiment(
        objective, int(o.get("n_topologies", 30)), int(o.get("n_assignments", 20)), int(o.get("n_gates", 20)),
        cfg.train, pairs, cfg.noise, cfg.seed, _gateset(o.get("gateset", "Rx,Ry,Rz|XX,YY,ZZ"), "[correlation]"),
    )
