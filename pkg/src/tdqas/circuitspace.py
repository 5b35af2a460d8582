"""Circuit and topology data model.

A circuit is an ordered list of gate elements on a ring of qubits. Every
element sits at a ring position ``p``: single-qubit gates act on qubit ``p``,
two-qubit gates on ``(p, (p + 1) % n)``. Erasing the gate kinds of a circuit
down to their arity class gives its topology, a sequence of placeholders.

All search-space cardinalities are exact Python integers; ratios are
:class:`fractions.Fraction`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

SINGLE = "single"
DOUBLE = "double"


class GateKind(str, Enum):
    RX = "Rx"
    RY = "Ry"
    RZ = "Rz"
    XX = "XX"
    YY = "YY"
    ZZ = "ZZ"
    CNOT = "CNOT"
    I = "I"
    CI = "CI"

    @property
    def arity(self) -> str:
        return SINGLE if self in _SINGLE_KINDS else DOUBLE

    @property
    def parameterized(self) -> bool:
        return self in _PARAM_KINDS

    @property
    def is_identity(self) -> bool:
        return self in (GateKind.I, GateKind.CI)

    @property
    def n_qubits(self) -> int:
        return 1 if self.arity == SINGLE else 2

    @classmethod
    def parse(cls, name: "str | GateKind") -> "GateKind":
        if isinstance(name, GateKind):
            return name
        for kind in cls:
            if kind.value.lower() == str(name).strip().lower():
                return kind
        raise ValueError(f"unknown gate kind {name!r}")

    def __str__(self) -> str:
        return self.value


_SINGLE_KINDS = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.I})
_PARAM_KINDS = frozenset(
    {GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.XX, GateKind.YY, GateKind.ZZ}
)


def ring_qubits(arity: str, position: int, n_qubits: int) -> tuple[int, ...]:
    if arity == SINGLE:
        return (position,)
    if n_qubits < 2:
        raise ValueError("two-qubit placement needs at least 2 qubits")
    return (position, (position + 1) % n_qubits)


@dataclass(frozen=True)
class GateElement:
    kind: GateKind
    position: int

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind.parse(self.kind))

    def qubits(self, n_qubits: int) -> tuple[int, ...]:
        return ring_qubits(self.kind.arity, self.position, n_qubits)

    def __str__(self) -> str:
        return f"{self.kind.value}{self.position}"


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    elements: tuple[GateElement, ...] = ()

    def __post_init__(self):
        elements = tuple(
            e if isinstance(e, GateElement) else GateElement(*e) for e in self.elements
        )
        object.__setattr__(self, "elements", elements)
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        for e in elements:
            if not 0 <= e.position < self.n_qubits:
                raise ValueError(f"position {e.position} out of range for {self.n_qubits} qubits")
            if e.kind.arity == DOUBLE and self.n_qubits < 2:
                raise ValueError("two-qubit gate on a single-qubit register")

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[GateElement]:
        return iter(self.elements)

    @property
    def n_params(self) -> int:
        return sum(1 for e in self.elements if e.kind.parameterized)

    @property
    def n_gates(self) -> int:
        """Number of non-identity gates."""
        return sum(1 for e in self.elements if not e.kind.is_identity)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit-count mismatch")
        return Circuit(self.n_qubits, self.elements + other.elements)

    def __str__(self) -> str:
        return "[" + ", ".join(map(str, self.elements)) + "]"

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "elements": [{"kind": e.kind.value, "pos": e.position} for e in self.elements],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        return cls(
            int(data["n_qubits"]),
            tuple(GateElement(GateKind.parse(e["kind"]), int(e["pos"])) for e in data["elements"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))

    @classmethod
    def parse(cls, n_qubits: int, text: str) -> "Circuit":
        """Build from a compact string such as ``"Rx0 ZZ1 CNOT2"``."""
        elements = []
        for token in text.replace(",", " ").split():
            head = token.rstrip("0123456789")
            elements.append(GateElement(GateKind.parse(head), int(token[len(head):])))
        return cls(n_qubits, tuple(elements))


@dataclass(frozen=True)
class Placeholder:
    cls: str
    position: int

    def __post_init__(self):
        if self.cls not in (SINGLE, DOUBLE):
            raise ValueError(f"placeholder class must be single/double, got {self.cls!r}")

    def __str__(self) -> str:
        return f"{self.cls}{self.position}"


@dataclass(frozen=True)
class Topology:
    n_qubits: int
    slots: tuple[Placeholder, ...] = ()

    def __post_init__(self):
        slots = tuple(s if isinstance(s, Placeholder) else Placeholder(*s) for s in self.slots)
        object.__setattr__(self, "slots", slots)
        for s in slots:
            if not 0 <= s.position < self.n_qubits:
                raise ValueError(f"position {s.position} out of range for {self.n_qubits} qubits")

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def n_single(self) -> int:
        return sum(1 for s in self.slots if s.cls == SINGLE)

    def __str__(self) -> str:
        return "[" + ", ".join(map(str, self.slots)) + "]"

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "elements": [{"kind": s.cls, "pos": s.position} for s in self.slots],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        return cls(
            int(data["n_qubits"]),
            tuple(Placeholder(e["kind"], int(e["pos"])) for e in data["elements"]),
        )


@dataclass(frozen=True)
class GateSet:
    """Ordered pools of single- and two-qubit gate kinds."""

    singles: tuple[GateKind, ...] = ()
    doubles: tuple[GateKind, ...] = ()

    def __post_init__(self):
        singles = tuple(dict.fromkeys(GateKind.parse(k) for k in self.singles))
        doubles = tuple(dict.fromkeys(GateKind.parse(k) for k in self.doubles))
        for k in singles:
            if k.arity != SINGLE:
                raise ValueError(f"{k} is not a single-qubit kind")
        for k in doubles:
            if k.arity != DOUBLE:
                raise ValueError(f"{k} is not a two-qubit kind")
        object.__setattr__(self, "singles", singles)
        object.__setattr__(self, "doubles", doubles)

    @classmethod
    def parse(cls, text: str) -> "GateSet":
        """``"Rx,Ry,Rz|XX,YY,ZZ"`` or a flat list ``"Ry,I,CNOT,CI"``."""
        kinds = [GateKind.parse(t) for t in text.replace("|", ",").split(",") if t.strip()]
        return cls.of(kinds)

    @classmethod
    def of(cls, kinds: Iterable["GateKind | str"]) -> "GateSet":
        kinds = [GateKind.parse(k) for k in kinds]
        return cls(
            tuple(k for k in kinds if k.arity == SINGLE),
            tuple(k for k in kinds if k.arity == DOUBLE),
        )

    def pool(self, arity: str) -> tuple[GateKind, ...]:
        return self.singles if arity == SINGLE else self.doubles

    @property
    def kinds(self) -> tuple[GateKind, ...]:
        return self.singles + self.doubles

    def active(self) -> "GateSet":
        """The same set without the identity placeholders I and CI."""
        return GateSet(
            tuple(k for k in self.singles if not k.is_identity),
            tuple(k for k in self.doubles if not k.is_identity),
        )

    def __len__(self) -> int:
        return len(self.singles) + len(self.doubles)

    def __str__(self) -> str:
        return ",".join(map(str, self.singles)) + "|" + ",".join(map(str, self.doubles))


NATIVE_GATESET = GateSet.parse("Rx,Ry,Rz|XX,YY,ZZ")


def topology_of(circuit: Circuit) -> Topology:
    return Topology(
        circuit.n_qubits,
        tuple(Placeholder(e.kind.arity, e.position) for e in circuit.elements),
    )


def instantiate(topology: Topology, single_gate, double_gate) -> Circuit:
    single_gate = GateKind.parse(single_gate)
    double_gate = GateKind.parse(double_gate)
    if single_gate.arity != SINGLE or double_gate.arity != DOUBLE:
        raise ValueError(f"arity mismatch: ({single_gate}, {double_gate})")
    return Circuit(
        topology.n_qubits,
        tuple(
            GateElement(single_gate if s.cls == SINGLE else double_gate, s.position)
            for s in topology.slots
        ),
    )


def assign(topology: Topology, kinds: Sequence) -> Circuit:
    """Bind one gate kind per slot; arities must match the slot classes."""
    if len(kinds) != len(topology.slots):
        raise ValueError("one kind per slot required")
    elements = []
    for slot, kind in zip(topology.slots, kinds):
        kind = GateKind.parse(kind)
        if kind.arity != slot.cls:
            raise ValueError(f"{kind} cannot fill a {slot.cls} placeholder")
        elements.append(GateElement(kind, slot.position))
    return Circuit(topology.n_qubits, tuple(elements))


def mutate_gate_types(
    circuit: Circuit,
    fraction: float,
    rng: np.random.Generator,
    gateset: GateSet = NATIVE_GATESET,
) -> Circuit:
    """Swap the kinds of ``ceil(fraction * len)`` elements for a different kind of equal arity."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    n = len(circuit.elements)
    n_change = math.ceil(fraction * n - 1e-12)
    chosen = rng.choice(n, size=n_change, replace=False) if n_change else []
    elements = list(circuit.elements)
    for i in sorted(int(c) for c in chosen):
        e = elements[i]
        alternatives = [k for k in gateset.pool(e.kind.arity) if k != e.kind]
        if not alternatives:
            raise ValueError(f"no alternative {e.kind.arity} kind for {e.kind} in {gateset}")
        elements[i] = GateElement(alternatives[rng.integers(len(alternatives))], e.position)
    return Circuit(circuit.n_qubits, tuple(elements))


def random_circuit(
    gateset: GateSet, n_qubits: int, n_gates: int, rng: np.random.Generator
) -> Circuit:
    if n_gates < 0:
        raise ValueError("n_gates must be >= 0")
    kinds = gateset.kinds
    if not kinds:
        raise ValueError("empty gate set")
    k_idx = rng.integers(len(kinds), size=n_gates)
    p_idx = rng.integers(n_qubits, size=n_gates)
    return Circuit(
        n_qubits, tuple(GateElement(kinds[k], int(p)) for k, p in zip(k_idx, p_idx))
    )


def random_topology(n_qubits: int, n_gates: int, rng: np.random.Generator) -> Topology:
    classes = rng.integers(2, size=n_gates)
    positions = rng.integers(n_qubits, size=n_gates)
    return Topology(
        n_qubits,
        tuple(Placeholder((SINGLE, DOUBLE)[c], int(p)) for c, p in zip(classes, positions)),
    )


def random_assignment(topology: Topology, gateset: GateSet, rng: np.random.Generator) -> Circuit:
    kinds = []
    for slot in topology.slots:
        pool = gateset.pool(slot.cls)
        kinds.append(pool[rng.integers(len(pool))])
    return assign(topology, kinds)


def enumerate_topologies(n_qubits: int, n_gates: int) -> Iterator[Topology]:
    cells = [Placeholder(c, p) for c in (SINGLE, DOUBLE) for p in range(n_qubits)]
    for combo in itertools.product(cells, repeat=n_gates):
        yield Topology(n_qubits, combo)


def gate_space_size(topology: Topology, gateset: GateSet) -> int:
    x = topology.n_single
    return len(gateset.singles) ** x * len(gateset.doubles) ** (len(topology) - x)


@dataclass(frozen=True)
class SearchSpaceReport:
    joint_size: int
    topo_size: int
    gate_size_min: int
    gate_size_max: int
    x: Optional[int]
    R: Fraction
    compression_factor: Fraction

    def to_dict(self) -> dict:
        return {
            "joint": self.joint_size,
            "topo": self.topo_size,
            "gate_min": self.gate_size_min,
            "gate_max": self.gate_size_max,
            "compression": float(self.compression_factor),
        }


def space_report(joint: int, topo: int, gmin: int, gmax: int, x: Optional[int] = None) -> SearchSpaceReport:
    """Combine sizes into a report; the proposed size is ``topo + gmax`` (worst case)."""
    R = Fraction(topo + gmax, joint)
    return SearchSpaceReport(joint, topo, gmin, gmax, x, R, 1 / R)


def sequence_space_sizes(
    gateset: GateSet, n_qubits: int, n_gates: int, topology: Optional[Topology] = None
) -> SearchSpaceReport:
    """Space sizes for free-placement (sequence-style) search.

    Without a topology, the proposed size uses the largest gate-type space
    over the number of single placeholders (worst case).
    """
    n_s, n_d = len(gateset.singles), len(gateset.doubles)
    joint = (n_qubits * (n_s + n_d)) ** n_gates
    topo = (2 * n_qubits) ** n_gates
    if topology is not None:
        if len(topology) != n_gates:
            raise ValueError("topology length differs from n_gates")
        size = gate_space_size(topology, gateset)
        return space_report(joint, topo, size, size, topology.n_single)
    sizes = [n_s**x * n_d ** (n_gates - x) for x in range(n_gates + 1)]
    return space_report(joint, topo, min(sizes), max(sizes), None)


@dataclass(frozen=True)
class LayeredTopology:
    """Active-slot grid of a layered supernet: ``single[l][q]``, ``double[l][q]``."""

    n_qubits: int
    single: tuple[tuple[bool, ...], ...]
    double: tuple[tuple[bool, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "single", tuple(tuple(bool(b) for b in row) for row in self.single))
        object.__setattr__(self, "double", tuple(tuple(bool(b) for b in row) for row in self.double))
        if len(self.single) != len(self.double):
            raise ValueError("single/double grids need the same number of layers")
        for row in self.single + self.double:
            if len(row) != self.n_qubits:
                raise ValueError("grid rows must have n_qubits entries")

    @property
    def n_layers(self) -> int:
        return len(self.single)

    @property
    def n_active_single(self) -> int:
        return sum(map(sum, self.single))

    @property
    def n_active_double(self) -> int:
        return sum(map(sum, self.double))

    def active_slots(self) -> list[tuple[int, str, int]]:
        """Active ``(layer, class, qubit)`` slots in induced-circuit order."""
        slots = []
        for layer in range(self.n_layers):
            slots += [(layer, SINGLE, q) for q in range(self.n_qubits) if self.single[layer][q]]
            slots += [(layer, DOUBLE, q) for q in range(self.n_qubits) if self.double[layer][q]]
        return slots

    def to_topology(self) -> Topology:
        return Topology(self.n_qubits, tuple(Placeholder(c, q) for _, c, q in self.active_slots()))

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "single": [list(r) for r in self.single],
            "double": [list(r) for r in self.double],
        }


def enumerate_layered_topologies(n_qubits: int, n_layers: int) -> Iterator[LayeredTopology]:
    n_slots = 2 * n_qubits * n_layers
    for bits in itertools.product((False, True), repeat=n_slots):
        grid = np.array(bits).reshape(n_layers, 2, n_qubits)
        yield LayeredTopology(n_qubits, grid[:, 0].tolist(), grid[:, 1].tolist())


def layered_space_sizes(
    gateset: GateSet, n_qubits: int, n_layers: int, topology: Optional[LayeredTopology] = None
) -> SearchSpaceReport:
    """Space sizes for the layered supernet, where every slot holds exactly one choice.

    Gate-type sizes count only active slots and only the non-identity kinds
    of ``gateset``; the topology space has two choices (active or not) per slot.
    """
    joint = (len(gateset.singles) ** n_qubits * len(gateset.doubles) ** n_qubits) ** n_layers
    topo = (2**n_qubits * 2**n_qubits) ** n_layers
    active = gateset.active()
    a_s, a_d = len(active.singles), len(active.doubles)
    if topology is not None:
        if topology.n_layers != n_layers or topology.n_qubits != n_qubits:
            raise ValueError("topology grid does not match (n_qubits, n_layers)")
        size = a_s**topology.n_active_single * a_d**topology.n_active_double
        return space_report(joint, topo, size, size, topology.n_active_single)
    n_slots = n_qubits * n_layers
    gmax = max(a_s, 1) ** n_slots * max(a_d, 1) ** n_slots
    # the all-inactive grid is always a member, so the minimum is 1
    return space_report(joint, topo, 1, gmax, None)
