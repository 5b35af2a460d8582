import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdqas.circuitspace import (
    NATIVE_GATESET,
    Circuit,
    GateElement,
    GateKind,
    GateSet,
    LayeredTopology,
    Placeholder,
    Topology,
    assign,
    enumerate_layered_topologies,
    enumerate_topologies,
    gate_space_size,
    instantiate,
    layered_space_sizes,
    mutate_gate_types,
    random_assignment,
    random_circuit,
    random_topology,
    sequence_space_sizes,
    topology_of,
)

seeds = st.integers(0, 2**32 - 1)


def topo(n, text):
    out = []
    for tok in text.split():
        cls = "single" if tok.startswith("s") else "double"
        out.append(Placeholder(cls, int(tok[1:])))
    return Topology(n, tuple(out))


# -- erasure / instantiation ------------------------------------------------


def test_topology_of_simple():
    assert topology_of(Circuit.parse(3, "Rx0 ZZ1")) == topo(3, "s0 d1")


def test_topology_of_seven_gate_example():
    c = Circuit.parse(3, "Rx0 Rz2 YY0 XX1 Ry1 ZZ0 Rz2")
    assert topology_of(c) == topo(3, "s0 s2 d0 d1 s1 d0 s2")


def test_instantiate_examples():
    t = topo(3, "s0 d1")
    assert instantiate(t, "Rx", "XX") == Circuit.parse(3, "Rx0 XX1")
    assert instantiate(t, "Ry", "YY") == Circuit.parse(3, "Ry0 YY1")
    assert instantiate(Topology(3, ()), "Rx", "XX") == Circuit(3, ())
    with pytest.raises(ValueError):
        instantiate(t, "XX", "Rx")


def test_round_trip_1000_random_topologies():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        t = random_topology(n, int(rng.integers(0, 20)), rng)
        assert topology_of(instantiate(t, GateKind.RX, GateKind.XX)) == t


def test_assign_checks_arity():
    t = topo(2, "s0 d0")
    assert assign(t, ["Rz", "CNOT"]) == Circuit.parse(2, "Rz0 CNOT0")
    with pytest.raises(ValueError):
        assign(t, ["XX", "Rz"])
    with pytest.raises(ValueError):
        assign(t, ["Rz"])


def test_ring_pairs_wrap():
    assert GateElement(GateKind.XX, 2).qubits(3) == (2, 0)
    assert GateElement(GateKind.RX, 2).qubits(3) == (2,)


def test_circuit_json_round_trip():
    c = Circuit.parse(4, "Rx0 CNOT3 I2 CI1 ZZ2")
    assert Circuit.from_json(c.to_json()) == c
    assert c.n_params == 2 and c.n_gates == 3


def test_circuit_rejects_out_of_range_position():
    with pytest.raises(ValueError):
        Circuit.parse(2, "Rx2")


def test_gateset_parsing():
    g = GateSet.parse("Ry,I|CNOT,CI")
    assert g.singles == (GateKind.RY, GateKind.I)
    assert g.doubles == (GateKind.CNOT, GateKind.CI)
    assert g.active() == GateSet.parse("Ry|CNOT")
    with pytest.raises(ValueError):
        GateSet.parse("Rq")


# -- mutation ---------------------------------------------------------------


def test_mutation_changes_exactly_seven_of_35():
    rng = np.random.default_rng(5)
    c = random_circuit(NATIVE_GATESET, 6, 35, rng)
    m = mutate_gate_types(c, 0.2, rng)
    assert sum(a.kind != b.kind for a, b in zip(c.elements, m.elements)) == 7
    assert topology_of(m) == topology_of(c)


def test_two_qubit_gate_needs_two_qubits():
    with pytest.raises(ValueError):
        Circuit.parse(1, "XX0")


def test_forced_swap():
    m = mutate_gate_types(Circuit.parse(1, "Rx0"), 1.0, np.random.default_rng(0), GateSet.parse("Rx,Ry|XX"))
    assert m == Circuit.parse(1, "Ry0")


def test_mutation_without_alternative_raises():
    with pytest.raises(ValueError):
        mutate_gate_types(Circuit.parse(1, "Rx0"), 1.0, np.random.default_rng(0), GateSet.parse("Rx|XX"))


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(2, 6), st.integers(0, 40), st.floats(0.01, 1.0))
def test_mutation_property(seed, n, g, fraction):
    rng = np.random.default_rng(seed)
    c = random_circuit(NATIVE_GATESET, n, g, rng)
    m = mutate_gate_types(c, fraction, rng)
    assert topology_of(m) == topology_of(c)
    changed = sum(a.kind != b.kind for a, b in zip(c.elements, m.elements))
    assert changed == math.ceil(fraction * g - 1e-12)


# -- random generators --------------------------------------------------------


def test_random_circuit_degenerate_cases():
    rng = np.random.default_rng(0)
    assert random_circuit(NATIVE_GATESET, 3, 0, rng) == Circuit(3, ())
    c = random_circuit(GateSet.parse("Rx"), 4, 50, rng)
    assert all(e.kind == GateKind.RX for e in c.elements)


def test_random_circuit_kind_frequencies_uniform():
    rng = np.random.default_rng(1)
    draws = 100_000
    c = random_circuit(NATIVE_GATESET, 3, draws, rng)
    counts = Counter(e.kind for e in c.elements)
    k = len(NATIVE_GATESET.kinds)
    expected = draws / k
    sigma = math.sqrt(draws * (1 / k) * (1 - 1 / k))
    for kind in NATIVE_GATESET.kinds:
        assert abs(counts[kind] - expected) < 3 * sigma
    chi2 = sum((counts[kind] - expected) ** 2 / expected for kind in NATIVE_GATESET.kinds)
    assert chi2 < 20.5  # 99.9th percentile of chi-square with 5 dof


def test_random_assignment_preserves_topology():
    rng = np.random.default_rng(2)
    t = random_topology(5, 30, rng)
    assert topology_of(random_assignment(t, NATIVE_GATESET, rng)) == t


# -- search-space arithmetic -------------------------------------------------


def test_three_qubit_seven_gate_example():
    r = sequence_space_sizes(NATIVE_GATESET, 3, 7)
    assert r.joint_size == 18**7 == 612_220_032
    assert r.topo_size == 6**7 == 279_936
    assert r.gate_size_min == r.gate_size_max == 3**7 == 2_187
    assert r.compression_factor == Fraction(612_220_032, 279_936 + 2_187)
    assert 2.0e3 <= float(r.compression_factor) <= 2.3e3
    assert round(float(r.compression_factor)) == 2170


def test_zero_gates_degenerate():
    r = sequence_space_sizes(NATIVE_GATESET, 3, 0)
    assert (r.joint_size, r.topo_size, r.gate_size_min, r.gate_size_max) == (1, 1, 1, 1)
    assert r.R == 2


@pytest.mark.parametrize("gateset", ["Rx,Ry,Rz|XX,YY,ZZ", "Rx|XX,YY", "Rx,Ry,Rz,I|CNOT"])
def test_partition_identity_sequence(gateset):
    gs = GateSet.parse(gateset)
    for n in range(1, 4):
        for g in range(0, 5):
            total = sum(gate_space_size(t, gs) for t in enumerate_topologies(n, g))
            assert total == sequence_space_sizes(gs, n, g).joint_size


@pytest.mark.parametrize("gateset", ["I,Ry,Rz|CNOT,CI", "Ry,I|CNOT,CI", "I,Rx,Ry,Rz|CNOT,CI"])
def test_partition_identity_layered(gateset):
    gs = GateSet.parse(gateset)
    for n, layers in [(1, 1), (2, 1), (2, 2), (3, 1)]:
        total = sum(layered_space_sizes(gs, n, layers, t).gate_size_min
                    for t in enumerate_layered_topologies(n, layers))
        assert total == layered_space_sizes(gs, n, layers).joint_size


def test_h2_layered_sizes():
    joint = layered_space_sizes(GateSet.parse("I,Ry,Rz|CNOT,CI"), 4, 3)
    assert joint.joint_size == (3**4 * 2**4) ** 3 == 1296**3
    td = layered_space_sizes(GateSet.parse("Ry,I|CNOT,CI"), 4, 3)
    assert td.topo_size == (2**4 * 2**4) ** 3 == 2**24


def test_all_inactive_layered_topology_has_gate_size_one():
    empty = LayeredTopology(4, [[False] * 4] * 3, [[False] * 4] * 3)
    assert layered_space_sizes(GateSet.parse("I,Ry,Rz|CNOT,CI"), 4, 3, empty).gate_size_min == 1
    assert empty.to_topology() == Topology(4, ())


def test_big_integer_sizes_exact():
    r = layered_space_sizes(GateSet.parse("I,Rx,Ry,Rz|CNOT,CI"), 5, 6)
    assert r.joint_size == 2**90
    assert isinstance(r.joint_size, int)


def test_layered_active_slot_order():
    lt = LayeredTopology(3, [[True, False, True]], [[False, True, False]])
    assert lt.active_slots() == [(0, "single", 0), (0, "single", 2), (0, "double", 1)]
    assert lt.n_active_single == 2 and lt.n_active_double == 1


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_enumerated_topologies_are_distinct_and_complete(seed):
    n = seed % 3 + 1
    g = seed % 4
    tops = list(enumerate_topologies(n, g))
    assert len(tops) == (2 * n) ** g == len(set(tops))


def test_topology_dict_round_trip():
    t = topo(4, "s0 d3 s2")
    assert Topology.from_dict(t.to_dict()) == t


def test_all_kind_pairs_distinct():
    pairs = list(itertools.product(NATIVE_GATESET.singles, NATIVE_GATESET.doubles))
    assert len(pairs) == 9
