"""Differentiable architecture search with a per-slot softmax over operations.

Structure logits are trained with a score-function estimator (batch-mean
baseline); gate angles are shared per ``(slot, operation)`` and trained by
averaged parameter-shift gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .circuitspace import Circuit, GateElement, GateSet, Topology, topology_of
from .paulisim import NOISELESS, NoiseConfig
from .supernet_engine import SharedParamTable
from .trainer import CLASSIFY, Adam, CostLedger, Objective, TrainConfig, derive_seed, train

@dataclass(frozen=True)
class OpPool:
    n_qubits: int
    slots: tuple  # per slot: tuple of (GateKind, position)

    def __post_init__(self):
        if any(len(ops) == 0 for ops in self.slots):
            raise ValueError("every slot needs at least one operation")
        for ops in self.slots:
            for kind, pos in ops:
                if not 0 <= pos < self.n_qubits:
                    raise ValueError(f"position {pos} out of range")

    @classmethod
    def joint(cls, gateset: GateSet, n_qubits: int, n_gates: int) -> "OpPool":
        ops = tuple((k, p) for k in gateset.kinds for p in range(n_qubits))
        return cls(n_qubits, (ops,) * n_gates)

    @classmethod
    def on_topology(cls, topology: Topology, gateset: GateSet) -> "OpPool":
        """Same-arity kinds of ``gateset`` at each placeholder's fixed position."""
        return cls(
            topology.n_qubits,
            tuple(tuple((k, s.position) for k in gateset.pool(s.cls)) for s in topology.slots),
        )

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(ops) for ops in self.slots)

    def circuit(self, arch: Sequence[int]) -> Circuit:
        return Circuit(self.n_qubits, tuple(GateElement(*self.slots[s][k]) for s, k in enumerate(arch)))

    def param_keys(self, arch: Sequence[int]) -> list[tuple[int, int]]:
        return [(s, int(k)) for s, k in enumerate(arch) if self.slots[s][k][0].parameterized]

    def all_param_keys(self) -> list[tuple[int, int]]:
        return [(s, k) for s, ops in enumerate(self.slots) for k, (kind, _) in enumerate(ops) if kind.parameterized]


class StructureModel:
    """Logits ``alpha[s][k]`` padded to a rectangle; padding never receives probability."""

    def __init__(self, sizes: Sequence[int], lr: float = 0.1):
        self.sizes = tuple(sizes)
        width = max(self.sizes) if self.sizes else 1
        self.mask = np.zeros((len(self.sizes), width), dtype=bool)
        for s, n in enumerate(self.sizes):
            self.mask[s, :n] = True
        self.logits = np.zeros(self.mask.shape)
        self._opt = Adam(self.logits.shape, lr)

    def probabilities(self) -> np.ndarray:
        z = np.where(self.mask, self.logits, -np.inf)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def log_prob(self, arch: Sequence[int]) -> float:
        p = self.probabilities()
        return float(np.sum(np.log(p[np.arange(len(arch)), arch])))

    def score_gradient(self, archs: np.ndarray, losses: np.ndarray) -> np.ndarray:
        """``(1/B) sum_k (L_k - mean L) grad log p(arch_k)``."""
        archs = np.asarray(archs)
        advantage = np.asarray(losses, dtype=float) - np.mean(losses)
        p = self.probabilities()
        grad = np.zeros(self.logits.shape)
        rows = np.arange(archs.shape[1])
        for arch, adv in zip(archs, advantage):
            onehot = np.zeros(self.logits.shape)
            onehot[rows, arch] = 1.0
            grad += adv * (onehot - p)
        return np.where(self.mask, grad / len(archs), 0.0)

    def step(self, grad: np.ndarray) -> None:
        self.logits = self._opt.step(self.logits, grad, self.mask)

    def max_probability(self) -> np.ndarray:
        return self.probabilities().max(axis=1)


def sample_batch(model: StructureModel, n_batch: int, rng: np.random.Generator) -> np.ndarray:
    """``(n_batch, n_slots)`` operation indices drawn slot-independently."""
    cdf = np.cumsum(model.probabilities(), axis=1)
    u = rng.random((n_batch, len(model.sizes), 1))
    idx = (u >= cdf[None]).sum(axis=2)
    return np.minimum(idx, np.array(model.sizes) - 1)


def finalize(model: StructureModel) -> tuple[int, ...]:
    """Per-slot argmax; lowest index wins ties."""
    z = np.where(model.mask, model.logits, -np.inf)
    return tuple(int(i) for i in np.argmax(z, axis=1))


def new_table(pool: OpPool, objective: Objective, rng: np.random.Generator, init_scale: float,
              lr: float) -> SharedParamTable:
    table = SharedParamTable(pool.all_param_keys(), 1, objective.width, objective.head_size, lr)
    table.values[:] = rng.uniform(-init_scale, init_scale, table.values.shape)
    table.heads[0] = objective.init_head(rng)
    return table


def dqas_step(
    model: StructureModel,
    table: SharedParamTable,
    pool: OpPool,
    archs: np.ndarray,
    objective: Objective,
    noise: NoiseConfig = NOISELESS,
    ledger: Optional[CostLedger] = None,
    tag: str = "baseline",
    batch=None,
) -> np.ndarray:
    """One structure + shared-parameter update; returns the batch losses."""
    if len(archs) == 0:
        raise ValueError("empty architecture batch")
    losses = np.empty(len(archs))
    grad_sum: dict = {}
    head_sum = np.zeros(table.heads.shape[1])
    for i, arch in enumerate(archs):
        circuit, keys = pool.circuit(arch), pool.param_keys(arch)
        loss, grads, head_grads = objective.losses_and_grads(
            circuit, table.gather(keys), noise, ledger, tag, table.heads, batch
        )
        losses[i] = loss[0]
        for key, g in zip(keys, grads[0]):
            grad_sum[key] = grad_sum.get(key, 0.0) + g
        head_sum += head_grads[0]
    if not np.all(np.isfinite(losses)):
        raise FloatingPointError(f"non-finite DQAS loss {losses}")
    model.step(model.score_gradient(archs, losses))
    keys = sorted(grad_sum)
    if keys or head_sum.size:
        grads = np.array([grad_sum[k] for k in keys]).reshape(len(keys), table.values.shape[2])
        table.step(0, keys, grads / len(archs), head_sum / len(archs))
    return losses


@dataclass(frozen=True)
class DqasConfig:
    n_qubits: int
    n_gates: int
    gateset: GateSet
    N_batch: int = 32
    N_train: int = 100
    lr_structure: float = 0.1
    learning_rate: float = 0.05
    init_scale: float = math.pi
    converge_prob: float = 0.95
    td_gateset: GateSet = field(default_factory=lambda: GateSet.parse("Rx|XX"))
    N_batch_td: int = 8
    N_train_td: int = 100
    N_batch_gt: int = 8
    N_train_gt: int = 30
    train: TrainConfig = field(default_factory=lambda: TrainConfig(restarts=3))
    noise: NoiseConfig = NOISELESS
    seed: int = 0

    def __post_init__(self):
        if min(self.N_batch, self.N_train, self.N_batch_td, self.N_train_td,
               self.N_batch_gt, self.N_train_gt) < 1:
            raise ValueError("batch sizes and iteration counts must be >= 1")
        if not 0 < self.converge_prob <= 1:
            raise ValueError("converge_prob must lie in (0, 1]")


@dataclass
class DqasResult:
    circuit: Circuit
    params: np.ndarray
    value: float
    head: np.ndarray
    arch: tuple
    iterations: int
    model: StructureModel
    table: SharedParamTable
    score: float  # shared-parameter loss of the finalized architecture before retraining


def search_structure(
    pool: OpPool,
    objective: Objective,
    config: DqasConfig,
    n_batch: int,
    n_train: int,
    ledger: Optional[CostLedger],
    tag: str,
    rng: np.random.Generator,
    table: Optional[SharedParamTable] = None,
) -> tuple[StructureModel, SharedParamTable, int]:
    model = StructureModel(pool.sizes, config.lr_structure)
    if table is None:
        table = new_table(pool, objective, rng, config.init_scale, config.learning_rate)
    it = 0
    while it < n_train:
        archs = sample_batch(model, n_batch, rng)
        batch = None
        if objective.kind == CLASSIFY:
            n = len(objective.train_set)
            batch = rng.choice(n, size=min(config.train.batch_size, n), replace=False)
        dqas_step(model, table, pool, archs, objective, config.noise, ledger, tag, batch)
        it += 1
        if model.max_probability().min() >= config.converge_prob:
            break
    return model, table, it


def _finish(pool, model, table, objective, config, ledger, iterations, seed_key) -> DqasResult:
    arch = finalize(model)
    circuit = pool.circuit(arch)
    score = float(objective.losses(circuit, table.gather(pool.param_keys(arch)), config.noise,
                                   ledger, "experiment", table.heads)[0])
    retrain_cfg = config.train.replace(seed=derive_seed(config.seed, seed_key))
    result = train(objective, circuit, retrain_cfg, config.noise, ledger, "retrain")
    return DqasResult(circuit, result.params, result.value, result.head, arch, iterations, model, table, score)


def run_dqas(
    config: DqasConfig,
    objective: Objective,
    ledger: Optional[CostLedger] = None,
    tag: str = "baseline",
    pool: Optional[OpPool] = None,
    n_batch: Optional[int] = None,
    n_train: Optional[int] = None,
) -> DqasResult:
    """Structure search then from-scratch retraining of the most probable architecture."""
    pool = OpPool.joint(config.gateset, config.n_qubits, config.n_gates) if pool is None else pool
    rng = np.random.default_rng(derive_seed(config.seed, 31))
    model, table, it = search_structure(
        pool, objective, config, n_batch or config.N_batch, n_train or config.N_train, ledger, tag, rng
    )
    return _finish(pool, model, table, objective, config, ledger, it, 32)


def inherit_gt_table(td: DqasResult, td_pool: OpPool, gt_pool: OpPool, objective: Objective,
                     config: DqasConfig) -> SharedParamTable:
    """``theta_GT[s][g] = theta_TD[s][TD op at s]``; non-parameterized TD ops give 0."""
    table = SharedParamTable(gt_pool.all_param_keys(), 1, objective.width, objective.head_size,
                             config.learning_rate)
    for i, (s, _) in enumerate(table.keys):
        source = (s, td.arch[s])
        if source in td.table.index:
            table.values[0, i] = td.table.get(0, source)
    table.heads[0] = td.table.heads[0]
    return table


@dataclass
class TdGtReport:
    td: DqasResult
    gt: DqasResult
    topology: Topology
    td_pool: OpPool
    gt_pool: OpPool


def run_td_gt(config: DqasConfig, objective: Objective, ledger: Optional[CostLedger] = None) -> TdGtReport:
    ledger = CostLedger() if ledger is None else ledger
    td_pool = OpPool.joint(config.td_gateset, config.n_qubits, config.n_gates)
    td = run_dqas(config, objective, ledger, "TD", td_pool, config.N_batch_td, config.N_train_td)
    topology = topology_of(td.circuit)
    gt_pool = OpPool.on_topology(topology, config.gateset.active())
    rng = np.random.default_rng(derive_seed(config.seed, 41))
    table = inherit_gt_table(td, td_pool, gt_pool, objective, config)
    model, table, it = search_structure(
        gt_pool, objective, config, config.N_batch_gt, config.N_train_gt, ledger, "GT", rng, table
    )
    # same retrain seed as TD: an unchanged architecture retrains to the same value
    gt = _finish(gt_pool, model, table, objective, config, ledger, it, 32)
    return TdGtReport(td, gt, topology, td_pool, gt_pool)
