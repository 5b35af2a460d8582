"""One-shot weight-sharing search over a layered circuit grid.

Each layer holds one single-qubit slot per qubit followed by one two-qubit
slot per ring position. A sample fills every slot with a kind from the gate
set; identity kinds leave the slot empty. Angles live in a shared table keyed
by ``(layer, class, qubit, kind)``, one copy per expert.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .circuitspace import (
    DOUBLE,
    SINGLE,
    Circuit,
    GateElement,
    GateKind,
    GateSet,
    LayeredTopology,
    Topology,
)
from .paulisim import NOISELESS, NoiseConfig
from .trainer import (
    CLASSIFY,
    Adam,
    CostLedger,
    Objective,
    TrainConfig,
    TrainResult,
    derive_seed,
    train,
)

SlotKey = tuple  # (layer, class, qubit, kind)


@dataclass(frozen=True)
class SupernetConfig:
    n_qubits: int
    n_layers: int
    gateset: GateSet
    n_experts: int = 1
    T_total: int = 100
    T_warm: int = 50
    N_search: int = 100
    T_extra: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    noise: NoiseConfig = NOISELESS
    seed: int = 0
    learning_rate: float = 0.05
    init_scale: float = math.pi

    def __post_init__(self):
        if self.n_experts < 1:
            raise ValueError("n_experts must be >= 1")
        if min(self.n_qubits, self.n_layers, self.T_total, self.T_warm, self.N_search, self.T_extra) < 0:
            raise ValueError("counts must be nonnegative")
        if self.T_warm > self.T_total:
            raise ValueError("T_warm must not exceed T_total")
        if not (self.gateset.singles and self.gateset.doubles):
            raise ValueError("supernet gate set needs single and double kinds")


@dataclass(frozen=True)
class SupernetSample:
    singles: tuple  # [layer][qubit] -> GateKind
    doubles: tuple  # [layer][ring position] -> GateKind

    @property
    def n_qubits(self) -> int:
        return len(self.singles[0]) if self.singles else 0

    def slots(self) -> list[tuple[int, str, int, GateKind]]:
        """Non-identity ``(layer, class, qubit, kind)`` in induced-circuit order."""
        out = []
        for layer, (srow, drow) in enumerate(zip(self.singles, self.doubles)):
            out += [(layer, SINGLE, q, k) for q, k in enumerate(srow) if not k.is_identity]
            out += [(layer, DOUBLE, q, k) for q, k in enumerate(drow) if not k.is_identity]
        return out

    def circuit(self, n_qubits: Optional[int] = None) -> Circuit:
        n = self.n_qubits if n_qubits is None else n_qubits
        return Circuit(n, tuple(GateElement(k, q) for _, _, q, k in self.slots()))

    def param_keys(self) -> list[SlotKey]:
        return [s for s in self.slots() if s[3].parameterized]

    def layered(self) -> LayeredTopology:
        return LayeredTopology(
            self.n_qubits,
            tuple(tuple(not k.is_identity for k in row) for row in self.singles),
            tuple(tuple(not k.is_identity for k in row) for row in self.doubles),
        )

    def to_dict(self) -> dict:
        return {
            "singles": [[k.value for k in row] for row in self.singles],
            "doubles": [[k.value for k in row] for row in self.doubles],
        }


class SharedParamTable:
    """Per-expert angle store with Adam state; every key is pre-populated."""

    def __init__(self, keys, n_experts: int, width: int, head_size: int = 0, learning_rate: float = 0.05):
        self.keys = list(keys)
        self.index = {k: i for i, k in enumerate(self.keys)}
        if len(self.index) != len(self.keys):
            raise ValueError("duplicate table keys")
        self.values = np.zeros((n_experts, len(self.keys), width))
        self.heads = np.zeros((n_experts, head_size))
        self._opt = Adam(self.values.shape, learning_rate)
        self._head_opt = Adam(self.heads.shape, learning_rate)

    @classmethod
    def for_grid(cls, config: SupernetConfig, objective: Objective, rng: np.random.Generator):
        keys = [
            (layer, arity, q, kind)
            for layer in range(config.n_layers)
            for arity in (SINGLE, DOUBLE)
            for q in range(config.n_qubits)
            for kind in config.gateset.pool(arity)
            if kind.parameterized
        ]
        table = cls(keys, config.n_experts, objective.width, objective.head_size, config.learning_rate)
        table.values[:] = rng.uniform(-config.init_scale, config.init_scale, table.values.shape)
        for e in range(config.n_experts):
            table.heads[e] = objective.init_head(rng)
        return table

    @property
    def n_experts(self) -> int:
        return self.values.shape[0]

    def get(self, expert: int, key: SlotKey) -> np.ndarray:
        return self.values[expert, self.index[key]]

    def gather(self, keys, experts=None) -> np.ndarray:
        """Parameters for ``keys`` as ``(E, P, W)``."""
        idx = [self.index[k] for k in keys]
        experts = range(self.n_experts) if experts is None else experts
        return self.values[list(experts)][:, idx, :]

    def step(self, expert: int, keys, grad: np.ndarray, head_grad: Optional[np.ndarray] = None) -> None:
        full = np.zeros_like(self.values)
        mask = np.zeros(self.values.shape, dtype=bool)
        idx = [self.index[k] for k in keys]
        full[expert, idx] = grad
        mask[expert, idx] = True
        self.values = self._opt.step(self.values, full, mask)
        if self.heads.shape[1]:
            hfull = np.zeros_like(self.heads)
            hmask = np.zeros(self.heads.shape, dtype=bool)
            hfull[expert] = head_grad
            hmask[expert] = True
            self.heads = self._head_opt.step(self.heads, hfull, hmask)


def _minibatch(objective: Objective, batch_size: int, rng: np.random.Generator):
    if objective.kind != CLASSIFY:
        return None
    n = len(objective.train_set)
    return rng.choice(n, size=min(batch_size, n), replace=False)


def sample_uniform(config: SupernetConfig, rng: np.random.Generator) -> SupernetSample:
    shape = (config.n_layers, config.n_qubits)
    spool, dpool = config.gateset.pool(SINGLE), config.gateset.pool(DOUBLE)
    s = rng.integers(len(spool), size=shape)
    d = rng.integers(len(dpool), size=shape)
    return SupernetSample(
        tuple(tuple(spool[i] for i in row) for row in s),
        tuple(tuple(dpool[i] for i in row) for row in d),
    )


def warmup_and_train(
    config: SupernetConfig,
    objective: Objective,
    ledger: Optional[CostLedger] = None,
    tag: str = "baseline",
    rng: Optional[np.random.Generator] = None,
    table: Optional[SharedParamTable] = None,
) -> SharedParamTable:
    """Train the shared table: random expert during warm-up, best expert afterwards."""
    rng = np.random.default_rng(derive_seed(config.seed, 1)) if rng is None else rng
    table = SharedParamTable.for_grid(config, objective, rng) if table is None else table
    for t in range(config.T_total):
        sample = sample_uniform(config, rng)
        circuit, keys = sample.circuit(config.n_qubits), sample.param_keys()
        batch = _minibatch(objective, config.train.batch_size, rng)
        if t < config.T_warm:
            expert = int(rng.integers(config.n_experts))
        else:
            scores = objective.losses(circuit, table.gather(keys), config.noise, ledger, tag,
                                      table.heads, batch)
            expert = int(np.argmin(scores))
        loss, grads, head_grads = objective.losses_and_grads(
            circuit, table.gather(keys, [expert]), config.noise, ledger, tag,
            table.heads[[expert]], batch,
        )
        if not np.all(np.isfinite(loss)):
            raise FloatingPointError(f"non-finite supernet loss at iteration {t}")
        table.step(expert, keys, grads[0], head_grads[0])
    return table


@dataclass
class SearchResult:
    sample: SupernetSample
    score: float
    expert: int
    scores: np.ndarray  # best-expert score of every draw, in draw order


def search(
    config: SupernetConfig,
    table: SharedParamTable,
    objective: Objective,
    ledger: Optional[CostLedger] = None,
    tag: str = "baseline",
    rng: Optional[np.random.Generator] = None,
) -> SearchResult:
    """Score ``N_search`` uniform samples under every expert; lowest score wins, earliest on ties."""
    if config.N_search < 1:
        raise ValueError("N_search must be >= 1")
    rng = np.random.default_rng(derive_seed(config.seed, 2)) if rng is None else rng
    best = None
    scores = np.empty(config.N_search)
    for i in range(config.N_search):
        sample = sample_uniform(config, rng)
        circuit, keys = sample.circuit(config.n_qubits), sample.param_keys()
        per_expert = objective.losses(circuit, table.gather(keys), config.noise, ledger, tag, table.heads)
        expert = int(np.argmin(per_expert))
        scores[i] = per_expert[expert]
        if best is None or scores[i] < best.score:
            best = SearchResult(sample, float(scores[i]), expert, scores)
    return best


def _retrain(objective, circuit, init, head, config: SupernetConfig, ledger, tag="retrain") -> TrainResult:
    return train(objective, circuit, config.train, config.noise, ledger, tag, init=init, init_head=head)


@dataclass
class EngineResult:
    circuit: Circuit
    params: np.ndarray
    value: float
    head: np.ndarray
    score: float  # one-shot score that selected the circuit
    details: dict = field(default_factory=dict)


def run_supernet(config: SupernetConfig, objective: Objective, ledger: Optional[CostLedger] = None,
                 tag: str = "baseline") -> EngineResult:
    """Plain supernet search followed by retraining of the winner."""
    ledger = CostLedger() if ledger is None else ledger
    table = warmup_and_train(config, objective, ledger, tag, np.random.default_rng(derive_seed(config.seed, 1)))
    found = search(config, table, objective, ledger, tag, np.random.default_rng(derive_seed(config.seed, 2)))
    circuit = found.sample.circuit(config.n_qubits)
    init = table.gather(found.sample.param_keys(), [found.expert])[0]
    result = _retrain(objective, circuit, init, table.heads[found.expert], config, ledger)
    return EngineResult(circuit, result.params, result.value, result.head, found.score,
                        {"sample": found.sample.to_dict()})


# --------------------------------------------------------------------------
# topology-driven phases


def check_td_gateset(gateset: GateSet) -> None:
    singles, doubles = gateset.singles, gateset.doubles
    ok = (
        len(singles) == 2 and GateKind.I in singles
        and sum(k.parameterized for k in singles) == 1
        and len(doubles) == 2 and GateKind.CI in doubles
    )
    if not ok:
        raise ValueError(f"gate set {gateset} is not topology-shaped ({{S, I | D, CI}})")


@dataclass
class TdResult:
    topology: Topology
    layered: LayeredTopology
    table: SharedParamTable
    sample: SupernetSample
    expert: int
    score: float

    @property
    def circuit(self) -> Circuit:
        return self.sample.circuit(self.layered.n_qubits)

    def params(self) -> np.ndarray:
        return self.table.gather(self.sample.param_keys(), [self.expert])[0]

    def head(self) -> np.ndarray:
        return self.table.heads[self.expert]


def run_td_phase(config_td: SupernetConfig, objective: Objective, ledger: Optional[CostLedger] = None,
                 tag: str = "TD") -> TdResult:
    check_td_gateset(config_td.gateset)
    table = warmup_and_train(config_td, objective, ledger, tag,
                             np.random.default_rng(derive_seed(config_td.seed, 11)))
    found = search(config_td, table, objective, ledger, tag,
                   np.random.default_rng(derive_seed(config_td.seed, 12)))
    layered = found.sample.layered()
    return TdResult(layered.to_topology(), layered, table, found.sample, found.expert, found.score)


def retrain_td(td: TdResult, config: SupernetConfig, objective: Objective,
               ledger: Optional[CostLedger] = None) -> TrainResult:
    """Retrain the TD winner's instantiation, warm-started from its shared angles."""
    return _retrain(objective, td.circuit, td.params(), td.head(), config, ledger)


def inherit_table(td: TdResult, gateset: GateSet, objective: Objective,
                  learning_rate: float = 0.05) -> SharedParamTable:
    """GT table over active slots: every kind copies the TD angle stored at that slot.

    Slots whose TD kind carries no angle (e.g. CNOT) start at 0.
    """
    td_kind = {(layer, arity, q): kind for layer, arity, q, kind in td.sample.slots()}
    keys = [
        (layer, arity, q, kind)
        for layer, arity, q in td.layered.active_slots()
        for kind in gateset.pool(arity)
        if kind.parameterized
    ]
    table = SharedParamTable(keys, 1, objective.width, objective.head_size, learning_rate)
    for i, (layer, arity, q, _) in enumerate(keys):
        source = (layer, arity, q, td_kind[(layer, arity, q)])
        if source[3].parameterized:
            table.values[0, i] = td.table.get(td.expert, source)
    table.heads[0] = td.head()
    return table


@dataclass
class GtResult(EngineResult):
    n_candidates: int = 0
    exhaustive: bool = False


def gt_assignments(td: TdResult, gateset: GateSet, limit: int, rng: np.random.Generator):
    """All kind assignments over active slots when there are at most ``limit``, else ``limit`` draws.

    Sampled draws start with the TD winner's own kinds whenever ``gateset`` can express them.
    """
    pools = [gateset.pool(arity) for _, arity, _ in td.layered.active_slots()]
    total = math.prod(len(p) for p in pools)
    if total <= limit:
        return list(itertools.product(*pools)), True
    td_kind = {(layer, arity, q): kind for layer, arity, q, kind in td.sample.slots()}
    own = tuple(td_kind[slot] for slot in td.layered.active_slots())
    draws = [own] if all(k in p for k, p in zip(own, pools)) else []
    draws += [tuple(p[rng.integers(len(p))] for p in pools) for _ in range(limit - len(draws))]
    return draws, False


def _candidate(td: TdResult, kinds) -> tuple[Circuit, list]:
    slots = td.layered.active_slots()
    elements = tuple(GateElement(k, q) for (_, _, q), k in zip(slots, kinds))
    keys = [(layer, arity, q, k) for (layer, arity, q), k in zip(slots, kinds) if k.parameterized]
    return Circuit(td.layered.n_qubits, elements), keys


def run_gt_phase(
    td: TdResult,
    config_gt: SupernetConfig,
    objective: Objective,
    ledger: Optional[CostLedger] = None,
    tag: str = "GT",
) -> GtResult:
    """Fine-tune gate kinds on the TD topology with inherited angles, then retrain the winner."""
    if any(k.is_identity for k in config_gt.gateset.kinds):
        raise ValueError("GT gate set must not contain identity kinds")
    if td.layered.n_qubits != config_gt.n_qubits:
        raise ValueError("topology and GT config disagree on qubit count")
    rng = np.random.default_rng(derive_seed(config_gt.seed, 21))
    table = inherit_table(td, config_gt.gateset, objective, config_gt.learning_rate)
    candidates, exhaustive = gt_assignments(td, config_gt.gateset, max(config_gt.N_search, 1), rng)
    best = None
    for kinds in candidates:
        circuit, keys = _candidate(td, kinds)
        params = table.gather(keys)
        heads = table.heads.copy()
        opt, head_opt = Adam(params.shape, config_gt.learning_rate), Adam(heads.shape, config_gt.learning_rate)
        for _ in range(config_gt.T_extra):
            batch = _minibatch(objective, config_gt.train.batch_size, rng)
            _, grads, head_grads = objective.losses_and_grads(
                circuit, params, config_gt.noise, ledger, tag, heads, batch
            )
            params = opt.step(params, grads)
            heads = head_opt.step(heads, head_grads)
        score = float(objective.losses(circuit, params, config_gt.noise, ledger, tag, heads)[0])
        if not math.isfinite(score):
            raise FloatingPointError("non-finite GT candidate score")
        if best is None or score < best[0]:
            best = (score, circuit, params[0], heads[0], kinds)
    score, circuit, init, head, kinds = best
    result = _retrain(objective, circuit, init, head, config_gt, ledger)
    return GtResult(
        circuit, result.params, result.value, result.head, score,
        {"kinds": [k.value for k in kinds]}, len(candidates), exhaustive,
    )
