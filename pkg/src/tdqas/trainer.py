"""Circuit training: objectives, Adam/SGD, restarts, and the phase-tagged cost ledger.

Parameters of a circuit are held as a ``(P, W)`` matrix. ``W`` is the
objective's width: 1 for VQE and classification, the number of graphs for
MaxCut (each graph gets its own angles on the shared architecture).
Batched entry points take a leading restart/expert axis, ``(R, P, W)``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .circuitspace import Circuit
from .paulisim import (
    NOISELESS,
    ExecTimeModel,
    NoiseConfig,
    PauliSum,
    expect_rows,
    exec_time,
    shift_gradient,
    shift_rows,
    simulate,
    z_expectations,
)
from .problems import (
    Dataset,
    Graph,
    MlpHead,
    maxcut_brute_force,
    maxcut_hamiltonian,
    qnn_circuit,
    qnn_rows,
)

PHASE_TAGS = ("baseline", "TD", "GT", "retrain", "experiment")


class CostLedger:
    """Append-only record of circuit execution times, grouped by phase tag.

    Entries are stored as ``{tag: Counter(time -> count)}`` so that millions of
    executions stay cheap; totals are exact rational sums of the float times.
    """

    def __init__(self):
        self._entries: dict[str, Counter] = {tag: Counter() for tag in PHASE_TAGS}

    def add(self, tag: str, time: float, count: int = 1) -> None:
        if tag not in self._entries:
            raise ValueError(f"unknown phase tag {tag!r}")
        if count < 0 or not math.isfinite(time) or time < 0:
            raise ValueError("ledger entries need a finite nonnegative time and count")
        if count:
            self._entries[tag][float(time)] += int(count)

    def n_entries(self, tag: Optional[str] = None) -> int:
        tags = PHASE_TAGS if tag is None else (tag,)
        return sum(sum(self._entries[t].values()) for t in tags)

    def entries(self, tag: Optional[str] = None):
        """Iterate ``(tag, time)`` pairs (grouped, not in insertion order)."""
        for t in PHASE_TAGS if tag is None else (tag,):
            for time, count in sorted(self._entries[t].items()):
                for _ in range(count):
                    yield t, time

    def exact_total(self, tag: Optional[str] = None) -> Fraction:
        tags = PHASE_TAGS if tag is None else (tag,)
        return sum(
            (Fraction(time) * count for t in tags for time, count in self._entries[t].items()),
            Fraction(0),
        )

    def total(self, tag: Optional[str] = None) -> float:
        return float(self.exact_total(tag))

    def totals(self) -> dict[str, float]:
        return {tag: self.total(tag) for tag in PHASE_TAGS}

    def merge(self, other: "CostLedger") -> None:
        for tag in PHASE_TAGS:
            self._entries[tag].update(other._entries[tag])

    def to_dict(self) -> dict:
        return {
            "totals": self.totals(),
            "counts": {tag: self.n_entries(tag) for tag in PHASE_TAGS},
            "entries": {
                tag: [[time, count] for time, count in sorted(self._entries[tag].items())]
                for tag in PHASE_TAGS
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "CostLedger":
        ledger = cls()
        for tag, pairs in data.get("entries", {}).items():
            for time, count in pairs:
                ledger.add(tag, time, count)
        return ledger


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed; independent streams for distinct key tuples."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def restart_seed(seed: int, restart: int) -> int:
    """Seed of restart ``restart``; restart 0 uses ``seed`` itself so best-of-k runs nest."""
    return int(seed) if restart == 0 else derive_seed(seed, 7919, restart)


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 200
    learning_rate: float = 0.05
    optimizer: str = "adam"
    restarts: int = 1
    init_scale: float = math.pi
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def replace(self, **changes) -> "TrainConfig":
        data = dict(self.__dict__)
        data.update(changes)
        return TrainConfig(**data)


class Adam:
    """Elementwise Adam; entries outside ``mask`` keep their moments and step count."""

    def __init__(self, shape, lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = np.zeros(shape)

    def step(self, x: np.ndarray, grad: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        if mask is None:
            mask = np.ones(x.shape, dtype=bool)
        self.t = np.where(mask, self.t + 1, self.t)
        self.m = np.where(mask, self.beta1 * self.m + (1 - self.beta1) * grad, self.m)
        self.v = np.where(mask, self.beta2 * self.v + (1 - self.beta2) * grad**2, self.v)
        t = np.maximum(self.t, 1)
        m_hat = self.m / (1 - self.beta1**t)
        v_hat = self.v / (1 - self.beta2**t)
        return np.where(mask, x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps), x)


class Sgd:
    def __init__(self, shape, lr=0.05):
        self.lr = lr

    def step(self, x, grad, mask=None):
        update = x - self.lr * grad
        return update if mask is None else np.where(mask, update, x)


def make_optimizer(name: str, shape, lr: float):
    return Adam(shape, lr) if name == "adam" else Sgd(shape, lr)


# --------------------------------------------------------------------------
# objectives

VQE, MAXCUT, CLASSIFY = "vqe", "maxcut_ratio", "classification"


@dataclass(eq=False)
class Objective:
    """A task to minimize: energy (vqe), negated mean ratio (maxcut), or BCE (classification)."""

    kind: str
    n_qubits: int
    hamiltonian: Optional[PauliSum] = None
    graphs: tuple = ()
    train_set: Optional[Dataset] = None
    test_set: Optional[Dataset] = None
    initial: str = "zero"
    head_hidden: int = 8
    eval_batch: int = 64
    time_model: ExecTimeModel = field(default_factory=ExecTimeModel)
    _cut_max: tuple = ()
    _cut_hams: tuple = ()

    @classmethod
    def vqe(cls, hamiltonian: PauliSum, **kw) -> "Objective":
        return cls(VQE, hamiltonian.n_qubits, hamiltonian=hamiltonian, **kw)

    @classmethod
    def maxcut(cls, graphs: Sequence[Graph], initial: str = "zero", **kw) -> "Objective":
        graphs = tuple(graphs)
        if not graphs:
            raise ValueError("maxcut objective needs at least one graph")
        n = graphs[0].n_nodes
        if any(g.n_nodes != n for g in graphs):
            raise ValueError("all graphs must have the same node count")
        cut_max = tuple(maxcut_brute_force(g) for g in graphs)
        if min(cut_max) == 0:
            raise ValueError("graphs without edges have no approximation ratio")
        if initial not in ("zero", "plus"):
            raise ValueError("initial must be 'zero' or 'plus'")
        return cls(
            MAXCUT, n, graphs=graphs, initial=initial,
            _cut_max=cut_max, _cut_hams=tuple(maxcut_hamiltonian(g) for g in graphs), **kw,
        )

    @classmethod
    def classification(cls, train_set: Dataset, test_set: Dataset, **kw) -> "Objective":
        if len(train_set) == 0:
            raise ValueError("empty training set")
        if len(np.unique(train_set.labels)) < 2:
            raise ValueError("training set has a single class")
        return cls(CLASSIFY, train_set.n_qubits, train_set=train_set, test_set=test_set, **kw)

    @property
    def width(self) -> int:
        return len(self.graphs) if self.kind == MAXCUT else 1

    @property
    def cut_max(self) -> tuple:
        return self._cut_max

    @property
    def head_size(self) -> int:
        if self.kind != CLASSIFY:
            return 0
        return self.head_hidden * (self.n_qubits + 2) + 1

    def init_head(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind != CLASSIFY:
            return np.zeros(0)
        return MlpHead.init(self.n_qubits, rng, self.head_hidden).to_vector()

    def head(self, vector) -> MlpHead:
        return MlpHead.zeros(self.n_qubits, self.head_hidden).with_vector(vector)

    def circuit_time(self, circuit: Circuit) -> float:
        if self.kind == CLASSIFY:
            return exec_time(qnn_circuit(circuit), self.time_model)
        return exec_time(circuit, self.time_model)

    def performance(self, loss: float) -> float:
        """Higher-is-better view of a training loss (not used for classification accuracy)."""
        return -loss

    def score_batch(self) -> np.ndarray:
        return np.arange(min(self.eval_batch, len(self.train_set)))

    def _initial(self):
        if self.kind == MAXCUT and self.initial == "plus":
            d = 2**self.n_qubits
            return np.full(d, 1 / math.sqrt(d), dtype=complex)
        return None

    def _check(self, circuit, params):
        if circuit.n_qubits != self.n_qubits:
            raise ValueError("circuit and objective disagree on qubit count")
        params = np.asarray(params, dtype=float)
        if params.ndim != 3 or params.shape[1:] != (circuit.n_params, self.width):
            raise ValueError(
                f"expected params of shape (R, {circuit.n_params}, {self.width}), got {params.shape}"
            )
        return params

    def _run(self, circuit, rows, noise, ledger, tag, hamiltonian):
        if ledger is not None:
            ledger.add(tag, self.circuit_time(circuit), rows.shape[0])
        states = simulate(circuit, rows, noise, self._initial())
        return expect_rows(states, hamiltonian)

    def losses(
        self, circuit, params, noise=NOISELESS, ledger=None, tag="experiment",
        heads=None, batch=None,
    ) -> np.ndarray:
        """Loss of each parameter set ``params[r]``; one ledger entry per circuit execution."""
        params = self._check(circuit, params)
        r = params.shape[0]
        if self.kind == VQE:
            return self._run(circuit, params[:, :, 0], noise, ledger, tag, self.hamiltonian)
        if self.kind == MAXCUT:
            total = np.zeros(r)
            for g, (ham, cmax) in enumerate(zip(self._cut_hams, self._cut_max)):
                total += self._run(circuit, params[:, :, g], noise, ledger, tag, ham) / cmax
            return -total / self.width
        z = self._qnn_z(circuit, params[:, :, 0], noise, ledger, tag, batch)
        labels = self.train_set.labels[self._batch(batch)]
        return np.array([
            self.head(heads[k]).loss_and_grads(z[:, k], labels)[0] for k in range(r)
        ])

    def losses_and_grads(
        self, circuit, params, noise=NOISELESS, ledger=None, tag="experiment",
        heads=None, batch=None,
    ):
        """Return ``(loss (R,), grad (R, P, W), head_grad (R, H))`` via parameter shift."""
        params = self._check(circuit, params)
        r, p, w = params.shape
        grads = np.zeros_like(params)
        head_grads = np.zeros((r, self.head_size))
        if self.kind == VQE:
            values = self._run(circuit, shift_rows(params[:, :, 0]).reshape(r * (1 + 2 * p), p), noise, ledger, tag,
                               self.hamiltonian)
            loss, grads[:, :, 0] = shift_gradient(values.reshape(r, 1 + 2 * p))
            return loss, grads, head_grads
        if self.kind == MAXCUT:
            loss = np.zeros(r)
            for g, (ham, cmax) in enumerate(zip(self._cut_hams, self._cut_max)):
                values = self._run(circuit, shift_rows(params[:, :, g]).reshape(r * (1 + 2 * p), p), noise, ledger,
                                   tag, ham)
                f, grad = shift_gradient(values.reshape(r, 1 + 2 * p))
                loss -= f / (cmax * w)
                grads[:, :, g] = -grad / (cmax * w)
            return loss, grads, head_grads
        shifted = shift_rows(params[:, :, 0]).reshape(r * (1 + 2 * p), p)
        z = self._qnn_z(circuit, shifted, noise, ledger, tag, batch)
        z = z.reshape(z.shape[0], r, 1 + 2 * p, self.n_qubits)
        z0, dz = z[:, :, 0], (z[:, :, 1::2] - z[:, :, 2::2]) / 2
        labels = self.train_set.labels[self._batch(batch)]
        loss = np.zeros(r)
        for k in range(r):
            loss[k], dl_dz, head_grads[k] = self.head(heads[k]).loss_and_grads(z0[:, k], labels)
            grads[k, :, 0] = np.einsum("bq,bjq->j", dl_dz, dz[:, k])
        return loss, grads, head_grads

    def _batch(self, batch):
        return self.score_batch() if batch is None else np.asarray(batch)

    def _qnn_z(self, circuit, param_rows, noise, ledger, tag, batch, dataset=None):
        dataset = self.train_set if dataset is None else dataset
        features = dataset.features[self._batch(batch)]
        rows = qnn_rows(features, param_rows)
        if ledger is not None:
            ledger.add(tag, self.circuit_time(circuit), rows.shape[0])
        states = simulate(qnn_circuit(circuit), rows, noise)
        z = z_expectations(states, self.n_qubits)
        return z.reshape(features.shape[0], param_rows.shape[0], self.n_qubits)

    def accuracy(self, circuit, params, head, noise=NOISELESS, ledger=None, tag="experiment",
                 dataset: Optional[Dataset] = None) -> float:
        """Fraction of ``dataset`` (default: test set) classified correctly at threshold 0.5."""
        dataset = self.test_set if dataset is None else dataset
        params = np.asarray(params, dtype=float).reshape(1, -1)
        z = self._qnn_z(circuit, params, noise, ledger, tag, np.arange(len(dataset)), dataset)[:, 0]
        predicted = (self.head(head)(z) >= 0.5).astype(int)
        return float(np.mean(predicted == dataset.labels))

    def metric(self, circuit, params, loss, head=None, noise=NOISELESS, ledger=None, tag="experiment"):
        """Task metric reported in tables: energy, mean approximation ratio, or test accuracy."""
        if self.kind == VQE:
            return float(loss)
        if self.kind == MAXCUT:
            return float(-loss)
        return self.accuracy(circuit, np.asarray(params)[:, 0], head, noise, ledger, tag)


def evaluate(objective: Objective, circuit: Circuit, params, noise=NOISELESS, ledger=None,
             tag="experiment", head=None) -> float:
    """Objective value of one parameter set; ``params`` may be ``(P,)`` when the width is 1.

    Returns energy (vqe), mean approximation ratio in [0, 1] (maxcut), or mean
    BCE over the scoring batch (classification).
    """
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    heads = None if head is None else np.asarray(head)[None]
    loss = float(objective.losses(circuit, params[None], noise, ledger, tag, heads)[0])
    return -loss if objective.kind == MAXCUT else loss


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: np.ndarray  # (P, W)
    value: float  # final loss of the chosen restart
    head: np.ndarray  # head vector (empty unless classification)
    restart: int
    restart_values: np.ndarray

    def __iter__(self):
        yield self.params
        yield self.value


def initial_params(objective, circuit, config: TrainConfig, restart: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(restart_seed(config.seed, restart))
    params = rng.uniform(-config.init_scale, config.init_scale, (circuit.n_params, objective.width))
    return params, objective.init_head(rng)


def _check_finite(loss, circuit):
    if not np.all(np.isfinite(loss)):
        raise FloatingPointError(f"non-finite loss {loss} while training {circuit.n_gates}-gate circuit")


def train(
    objective: Objective,
    circuit: Circuit,
    config: TrainConfig = TrainConfig(),
    noise: NoiseConfig = NOISELESS,
    ledger: Optional[CostLedger] = None,
    tag: str = "experiment",
    init: Optional[np.ndarray] = None,
    init_head: Optional[np.ndarray] = None,
) -> TrainResult:
    """Best of ``config.restarts`` gradient runs, all restarts batched in one simulation.

    ``init`` (shape ``(P, W)``) replaces restart 0's random start, for warm
    starts from inherited parameters.
    """
    starts = [initial_params(objective, circuit, config, r) for r in range(config.restarts)]
    params = np.array([s[0] for s in starts]).reshape(config.restarts, circuit.n_params, objective.width)
    heads = np.array([s[1] for s in starts]).reshape(config.restarts, objective.head_size)
    if init is not None:
        params[0] = np.asarray(init, dtype=float).reshape(circuit.n_params, objective.width)
    if init_head is not None:
        heads[0] = init_head
    opt = make_optimizer(config.optimizer, params.shape, config.learning_rate)
    head_opt = make_optimizer(config.optimizer, heads.shape, config.learning_rate)

    if objective.kind == CLASSIFY:
        order_rng = np.random.default_rng(derive_seed(config.seed, 104729))
        n = len(objective.train_set)
        for _ in range(config.max_iters):
            order = order_rng.permutation(n)
            for s in range(0, n, config.batch_size):
                loss, grads, head_grads = objective.losses_and_grads(
                    circuit, params, noise, ledger, tag, heads, order[s : s + config.batch_size]
                )
                _check_finite(loss, circuit)
                params = opt.step(params, grads)
                heads = head_opt.step(heads, head_grads)
        final = objective.losses(circuit, params, noise, ledger, tag, heads, np.arange(n))
    else:
        if circuit.n_params == 0:
            final = objective.losses(circuit, params, noise, ledger, tag, heads)
        else:
            for _ in range(config.max_iters):
                loss, grads, _ = objective.losses_and_grads(circuit, params, noise, ledger, tag)
                _check_finite(loss, circuit)
                params = opt.step(params, grads)
            final = objective.losses(circuit, params, noise, ledger, tag, heads)
    _check_finite(final, circuit)
    best = int(np.argmin(final))
    return TrainResult(params[best], float(final[best]), heads[best], best, final)


def train_qnn(
    train_set: Dataset,
    test_set: Dataset,
    circuit: Circuit,
    config: TrainConfig = TrainConfig(max_iters=50),
    noise: NoiseConfig = NOISELESS,
    ledger: Optional[CostLedger] = None,
    tag: str = "experiment",
    head: Optional[MlpHead] = None,
) -> tuple[np.ndarray, MlpHead, float]:
    """Jointly train circuit angles and MLP head; returns ``(params, head, test accuracy)``."""
    objective = Objective.classification(train_set, test_set)
    result = train(
        objective, circuit, config, noise, ledger, tag,
        init_head=None if head is None else head.to_vector(),
    )
    accuracy = objective.accuracy(circuit, result.params[:, 0], result.head, noise, ledger, tag)
    return result.params[:, 0], objective.head(result.head), accuracy
