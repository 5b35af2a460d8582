"""Benchmark tasks: spin-chain and molecular Hamiltonians, MaxCut on random
graphs, and a synthetic entanglement-classification dataset with its QNN head."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .circuitspace import Circuit, GateElement, GateKind
from .paulisim import (
    NOISELESS,
    NoiseConfig,
    PauliSum,
    exact_min_eigenvalue,
    compile_circuit,
    simulate,
    z_expectations,
)

H2_FILE = "h2_sto3g_0.70A.txt"
H2_GROUND_ENERGY = -1.13618
HEISENBERG5_GROUND_ENERGY = -8.47213


def _string(n: int, ops: dict[int, str]) -> str:
    return "".join(ops.get(q, "I") for q in range(n))


def tfim(n: int) -> PauliSum:
    """Periodic transverse-field Ising chain ``-sum Z_i Z_{i+1} - sum X_i``."""
    if n < 2:
        raise ValueError("tfim needs n >= 2")
    terms = [(-1.0, _string(n, {i: "Z", (i + 1) % n: "Z"})) for i in range(n)]
    terms += [(-1.0, _string(n, {i: "X"})) for i in range(n)]
    return PauliSum(n, tuple(terms)).simplify()


def heisenberg(n: int) -> PauliSum:
    """Periodic Heisenberg ring with unit couplings and a unit Z field."""
    if n < 2:
        raise ValueError("heisenberg needs n >= 2")
    terms = []
    for i in range(n):
        j = (i + 1) % n
        terms += [(1.0, _string(n, {i: p, j: p})) for p in "XYZ"]
    terms += [(1.0, _string(n, {i: "Z"})) for i in range(n)]
    return PauliSum(n, tuple(terms))


def hydrogen(path: Optional[str] = None, validate: bool = True) -> PauliSum:
    """The shipped 4-qubit H2 Hamiltonian (STO-3G, Jordan-Wigner).

    The file is checked on load: its lowest eigenvalue must be within 1 mHa
    of the reference ground energy.
    """
    if path is None:
        text = resources.files("tdqas.data").joinpath(H2_FILE).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    ham = PauliSum.from_text(text)
    if validate:
        energy, _ = exact_min_eigenvalue(ham)
        if abs(energy - H2_GROUND_ENERGY) > 1e-3:
            raise ValueError(f"H2 file ground energy {energy:.6f} differs from {H2_GROUND_ENERGY}")
    return ham


# --------------------------------------------------------------------------
# MaxCut


@dataclass(frozen=True)
class Graph:
    n_nodes: int
    edges: frozenset

    def __post_init__(self):
        edges = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError("self-loops are not allowed")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range")
            edge = (min(i, j), max(i, j))
            if edge in edges:
                raise ValueError(f"duplicate edge {edge}")
            edges.add(edge)
        object.__setattr__(self, "edges", frozenset(edges))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_text(self) -> str:
        lines = [f"# nodes {self.n_nodes}"] + [f"{i} {j}" for i, j in self.sorted_edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, n_nodes: Optional[int] = None) -> "Graph":
        edges = []
        for line in text.splitlines():
            stripped = line.strip()
            if stripped.startswith("#"):
                parts = stripped[1:].split()
                if len(parts) == 2 and parts[0] == "nodes" and n_nodes is None:
                    n_nodes = int(parts[1])
                continue
            if stripped:
                i, j = stripped.split()
                edges.append((int(i), int(j)))
        if n_nodes is None:
            n_nodes = 1 + max((max(e) for e in edges), default=-1)
        return cls(n_nodes, frozenset(edges))


def er_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    if not 0 <= p <= 1:
        raise ValueError("edge probability must lie in [0, 1]")
    pairs = list(itertools.combinations(range(n), 2))
    keep = rng.random(len(pairs)) < p
    return Graph(n, frozenset(e for e, k in zip(pairs, keep) if k))


def maxcut_hamiltonian(graph: Graph) -> PauliSum:
    """``H_C = 1/2 sum_(i,j) (I - Z_i Z_j)`` with the constant kept as an identity term."""
    n = graph.n_nodes
    terms = [(0.5 * len(graph.edges), "I" * n)]
    terms += [(-0.5, _string(n, {i: "Z", j: "Z"})) for i, j in graph.sorted_edges()]
    return PauliSum(n, tuple(terms))


def cut_value(graph: Graph, z: Sequence[int]) -> int:
    """Cut size of a +-1 assignment ``z``."""
    return sum(1 for i, j in graph.edges if z[i] != z[j])


def maxcut_brute_force(graph: Graph) -> int:
    n = graph.n_nodes
    if n > 24:
        raise ValueError("brute force limited to 24 nodes")
    if not graph.edges:
        return 0
    best = 0
    chunk = 1 << min(n, 16)
    for start in range(0, 1 << n, chunk):
        z = np.arange(start, min(start + chunk, 1 << n))
        cut = np.zeros(z.shape, dtype=np.int64)
        for i, j in graph.edges:
            cut += ((z >> i) ^ (z >> j)) & 1
        best = max(best, int(cut.max()))
    return best


# --------------------------------------------------------------------------
# entanglement dataset


@lru_cache(maxsize=16)
def _cnot_ring_perm(n: int) -> np.ndarray:
    ring = Circuit(n, tuple(GateElement(GateKind.CNOT, q) for q in range(n)))
    perm = np.arange(2**n)
    for op, _, _ in compile_circuit(ring).ops:
        perm = perm[op[1]]
    return perm


def entangler_states(features: np.ndarray) -> np.ndarray:
    """Real amplitudes of ``[Ry(v_q) for all q] then [CNOT(q, q+1 mod n) for all q]``."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    b, n = features.shape
    amps = np.ones((b, 1))
    for q in range(n):
        local = np.stack([np.cos(features[:, q] / 2), np.sin(features[:, q] / 2)], axis=1)
        amps = (amps[:, :, None] * local[:, None, :]).reshape(b, -1)
    if n > 1:
        amps = amps[:, _cnot_ring_perm(n)]
    return amps


def meyer_wallach(amplitudes: np.ndarray, n_qubits: int) -> np.ndarray:
    """Meyer-Wallach ``Q = 2 (1 - mean_q Tr rho_q^2)`` for each row of amplitudes."""
    amplitudes = np.atleast_2d(amplitudes)
    if not np.iscomplexobj(amplitudes) or not np.any(amplitudes.imag):
        amplitudes = amplitudes.real
    b = amplitudes.shape[0]
    probs = (amplitudes * amplitudes.conj()).real
    purity = np.zeros(b)
    for q in range(n_qubits):
        m = amplitudes.reshape(b, 2**q, 2, -1)
        # Tr rho^2 of the 2x2 reduced state: p0^2 + p1^2 + 2 |rho_01|^2
        diag = probs.reshape(b, 2**q, 2, -1).sum(axis=(1, 3))
        off = (m[:, :, 0, :] * m[:, :, 1, :].conj()).sum(axis=(1, 2))
        purity += (diag**2).sum(axis=1) + 2 * np.abs(off) ** 2
    return 2.0 * (1.0 - purity / n_qubits)


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: int
    entanglement: float


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (N, n_qubits), angles in [0, 2 pi)
    labels: np.ndarray  # (N,) of {0, 1}
    entanglement: np.ndarray  # (N,) Meyer-Wallach Q

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_qubits(self) -> int:
        return self.features.shape[1]

    def samples(self) -> list[LabeledSample]:
        return [
            LabeledSample(f, int(y), float(q))
            for f, y, q in zip(self.features, self.labels, self.entanglement)
        ]

    def subset(self, index) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.entanglement[index])

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([f"f{i + 1}" for i in range(self.n_qubits)] + ["label", "Q"])
        for f, y, q in zip(self.features, self.labels, self.entanglement):
            writer.writerow([repr(float(v)) for v in f] + [int(y), repr(float(q))])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        n = len(header) - 2
        data = np.array(body, dtype=float).reshape(-1, n + 2)
        return cls(data[:, :n], data[:, n].astype(int), data[:, n + 1])


def generate_entanglement_dataset(
    n_qubits: int = 8,
    n_train: int = 400,
    n_test: int = 100,
    band_low: tuple[float, float] = (0.10, 0.20),
    band_high: tuple[float, float] = (0.40, 0.50),
    rng: Optional[np.random.Generator] = None,
    max_draws: int = 10**6,
    chunk: int = 8192,
) -> tuple[Dataset, Dataset]:
    """Rejection-sample feature vectors whose entangler state falls in one of two Q bands.

    Label 0 marks the low band, 1 the high band. Both splits are exactly
    balanced.
    """
    rng = np.random.default_rng() if rng is None else rng
    lo_min, lo_max = band_low
    hi_min, hi_max = band_high
    if not (0 <= lo_min < lo_max <= hi_min < hi_max <= 1):
        raise ValueError("bands must satisfy 0 <= low.min < low.max <= high.min < high.max <= 1")
    if n_train % 2 or n_test % 2:
        raise ValueError("n_train and n_test must be even for exact class balance")
    need = (n_train + n_test) // 2
    found: list[list] = [[], []]
    draws = 0
    while min(len(found[0]), len(found[1])) < need:
        if draws >= max_draws:
            raise RuntimeError(
                f"bands unattainable: {len(found[0])} low / {len(found[1])} high after {draws} draws"
            )
        size = min(chunk, max_draws - draws)
        v = rng.uniform(0.0, 2 * np.pi, size=(size, n_qubits))
        q = meyer_wallach(entangler_states(v), n_qubits)
        draws += size
        for label, (lo, hi) in enumerate((band_low, band_high)):
            hit = np.nonzero((q >= lo) & (q <= hi))[0]
            room = need - len(found[label])
            found[label].extend((v[i], q[i]) for i in hit[: max(room, 0)])

    def split(start, count):
        feats, labels, ents = [], [], []
        for label in (0, 1):
            for v, q in found[label][start : start + count]:
                feats.append(v)
                labels.append(label)
                ents.append(q)
        order = rng.permutation(len(labels))
        return Dataset(np.array(feats)[order], np.array(labels)[order], np.array(ents)[order])

    return split(0, n_train // 2), split(n_train // 2, n_test // 2)


# --------------------------------------------------------------------------
# QNN


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(eq=False)
class MlpHead:
    """``n -> hidden (tanh) -> 1 (sigmoid)`` classifier on measured <Z> values."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    @classmethod
    def init(cls, n_inputs: int, rng: np.random.Generator, hidden: int = 8) -> "MlpHead":
        lim1 = math.sqrt(6.0 / (n_inputs + hidden))
        lim2 = math.sqrt(6.0 / (hidden + 1))
        return cls(
            rng.uniform(-lim1, lim1, (hidden, n_inputs)),
            np.zeros(hidden),
            rng.uniform(-lim2, lim2, hidden),
            0.0,
        )

    @classmethod
    def zeros(cls, n_inputs: int, hidden: int = 8) -> "MlpHead":
        return cls(np.zeros((hidden, n_inputs)), np.zeros(hidden), np.zeros(hidden), 0.0)

    def copy(self) -> "MlpHead":
        return MlpHead(self.w1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    def with_vector(self, vec: np.ndarray) -> "MlpHead":
        h, n = self.w1.shape
        vec = np.asarray(vec, dtype=float)
        return MlpHead(
            vec[: h * n].reshape(h, n).copy(),
            vec[h * n : h * n + h].copy(),
            vec[h * n + h : h * n + 2 * h].copy(),
            float(vec[-1]),
        )

    def logits(self, z: np.ndarray) -> np.ndarray:
        hidden = np.tanh(np.atleast_2d(z) @ self.w1.T + self.b1)
        return hidden @ self.w2 + self.b2

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(z))

    def loss_and_grads(self, z: np.ndarray, labels: np.ndarray):
        """Mean binary cross-entropy with gradients w.r.t. the inputs and the head.

        Returns ``(loss, dL/dz of shape (B, n), head gradient vector)``.
        """
        z = np.atleast_2d(z)
        labels = np.asarray(labels, dtype=float)
        b = z.shape[0]
        hidden = np.tanh(z @ self.w1.T + self.b1)
        logit = hidden @ self.w2 + self.b2
        loss = float(np.mean(np.logaddexp(0.0, logit) - labels * logit))
        delta = (_sigmoid(logit) - labels) / b
        d_pre = np.outer(delta, self.w2) * (1.0 - hidden**2)
        grad = np.concatenate([(d_pre.T @ z).ravel(), d_pre.sum(0), hidden.T @ delta, [delta.sum()]])
        return loss, d_pre @ self.w1, grad


def bce_loss(probabilities: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(probabilities, 1e-12, 1 - 1e-12)
    return float(np.mean(-(labels * np.log(p) + (1 - labels) * np.log(1 - p))))


@lru_cache(maxsize=512)
def qnn_circuit(circuit: Circuit) -> Circuit:
    """Rx angle-embedding layer followed by ``circuit``."""
    n = circuit.n_qubits
    embed = tuple(GateElement(GateKind.RX, q) for q in range(n))
    return Circuit(n, embed + circuit.elements)


def qnn_rows(features: np.ndarray, param_rows: np.ndarray) -> np.ndarray:
    """Parameter rows for :func:`qnn_circuit`: every feature vector crossed with every row."""
    features = np.atleast_2d(features)
    param_rows = np.atleast_2d(param_rows)
    b, r = features.shape[0], param_rows.shape[0]
    return np.concatenate(
        [np.repeat(features, r, axis=0), np.tile(param_rows, (b, 1))], axis=1
    )


def qnn_z(features, circuit: Circuit, param_rows, noise: NoiseConfig = NOISELESS) -> np.ndarray:
    """Measured ``<Z_q>``; shape ``(n_samples, n_rows, n_qubits)``."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[1] != circuit.n_qubits:
        raise ValueError("feature length must equal the number of qubits")
    param_rows = np.atleast_2d(np.asarray(param_rows, dtype=float))
    rows = simulate(qnn_circuit(circuit), qnn_rows(features, param_rows), noise)
    z = z_expectations(rows, circuit.n_qubits)
    return z.reshape(features.shape[0], param_rows.shape[0], circuit.n_qubits)


def qnn_forward(features, circuit: Circuit, circuit_params, head: MlpHead, noise: NoiseConfig = NOISELESS):
    """Class-1 probability for one feature vector (float) or a batch (array)."""
    single = np.ndim(features) == 1
    z = qnn_z(features, circuit, np.asarray(circuit_params, dtype=float).reshape(1, -1), noise)[:, 0]
    probs = head(z)
    return float(probs[0]) if single else probs
