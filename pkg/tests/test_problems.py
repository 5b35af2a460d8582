import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdqas.circuitspace import Circuit
from tdqas.paulisim import QuantumState, exact_min_eigenvalue, expectation
from tdqas.problems import (
    Dataset,
    Graph,
    MlpHead,
    bce_loss,
    cut_value,
    entangler_states,
    er_graph,
    generate_entanglement_dataset,
    heisenberg,
    hydrogen,
    maxcut_brute_force,
    maxcut_hamiltonian,
    meyer_wallach,
    qnn_forward,
    qnn_z,
    tfim,
)

TFIM6_GROUND = -7.727406610312549


def basis_state(bits):
    n = len(bits)
    v = np.zeros(2**n, dtype=complex)
    v[int("".join(map(str, bits)), 2) if n else 0] = 1
    return QuantumState.from_amplitudes(v)


def meyer_wallach_oracle(psi, n):
    """Reduced density matrices by explicit partial trace."""
    t = psi.reshape((2,) * n)
    total = 0.0
    for q in range(n):
        m = np.moveaxis(t, q, 0).reshape(2, -1)
        rho = m @ m.conj().T
        total += np.trace(rho @ rho).real
    return 2 * (1 - total / n)


# -- Hamiltonians ---------------------------------------------------------------


def test_tfim_two_sites():
    h = tfim(2)
    assert dict((p, c) for c, p in h.terms) == {"ZZ": -2.0, "XI": -1.0, "IX": -1.0}
    assert exact_min_eigenvalue(h)[0] == pytest.approx(-2 * math.sqrt(2), abs=1e-12)


def test_tfim_six_sites_pinned():
    assert exact_min_eigenvalue(tfim(6))[0] == pytest.approx(TFIM6_GROUND, abs=1e-10)
    assert all(c < 0 for c, _ in tfim(6).terms)


def test_heisenberg():
    h = heisenberg(5)
    assert len(h.terms) == 20
    assert all(isinstance(c, float) for c, _ in h.terms)
    assert abs(exact_min_eigenvalue(h)[0] - (-8.47213)) < 5e-4


def test_hydrogen():
    h = hydrogen()
    assert h.n_qubits == 4
    m = h.to_matrix()
    assert np.max(np.abs(m - m.conj().T)) < 1e-12
    assert abs(exact_min_eigenvalue(h)[0] - (-1.13618)) < 1e-3


def test_hydrogen_validation_rejects_wrong_file(tmp_path):
    bad = tmp_path / "h.txt"
    bad.write_text("1.0 ZIII\n")
    with pytest.raises(ValueError):
        hydrogen(str(bad))
    assert hydrogen(str(bad), validate=False).n_qubits == 4


# -- graphs ---------------------------------------------------------------------


def test_er_graph_extremes():
    rng = np.random.default_rng(0)
    assert len(er_graph(10, 0.0, rng).edges) == 0
    assert len(er_graph(10, 1.0, rng).edges) == 45


def test_er_graph_mean_edge_count():
    rng = np.random.default_rng(1)
    counts = np.array([len(er_graph(10, 0.5, rng).edges) for _ in range(10_000)])
    sigma_mean = math.sqrt(45 * 0.25 / 10_000)
    assert abs(counts.mean() - 22.5) < 3 * sigma_mean


def test_graph_validation():
    with pytest.raises(ValueError):
        Graph(3, ((0, 0),))
    with pytest.raises(ValueError):
        Graph(3, ((0, 3),))
    with pytest.raises(ValueError):
        Graph(3, ((0, 1), (1, 0)))
    g = Graph(4, ((2, 1), (0, 3)))
    assert Graph.from_text(g.to_text()) == g


def test_single_edge_hamiltonian():
    h = maxcut_hamiltonian(Graph(2, ((0, 1),)))
    assert expectation(basis_state([0, 1]), h) == pytest.approx(1.0)
    assert expectation(basis_state([0, 0]), h) == pytest.approx(0.0)


@pytest.mark.parametrize(
    "graph,value",
    [
        (Graph(3, ((0, 1), (1, 2), (0, 2))), 2),
        (Graph(4, ((0, 1), (1, 2), (2, 3), (0, 3))), 4),
        (Graph(10, tuple(itertools.combinations(range(10), 2))), 25),
    ],
)
def test_brute_force_examples(graph, value):
    assert maxcut_brute_force(graph) == value


def test_complete_graph_closed_form():
    for n in range(2, 12):
        g = Graph(n, tuple(itertools.combinations(range(n), 2)))
        assert maxcut_brute_force(g) == n * n // 4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 7))
def test_hamiltonian_diagonal_is_cut_value(seed, n):
    rng = np.random.default_rng(seed)
    g = er_graph(n, 0.6, rng)
    diag = maxcut_hamiltonian(g).diagonal()
    for k, bits in enumerate(itertools.product((0, 1), repeat=n)):
        assert diag[k] == cut_value(g, bits)
    assert max(diag) == maxcut_brute_force(g)


# -- entanglement dataset ---------------------------------------------------------


def test_zero_features_give_product_state():
    psi = entangler_states(np.zeros((1, 6)))
    assert meyer_wallach(psi, 6)[0] == pytest.approx(0.0, abs=1e-14)


def test_meyer_wallach_matches_partial_trace_oracle():
    rng = np.random.default_rng(4)
    for n in (2, 3, 5, 8):
        feats = rng.uniform(0, 2 * np.pi, (5, n))
        psi = entangler_states(feats)
        fast = meyer_wallach(psi, n)
        for row, value in zip(psi, fast):
            assert value == pytest.approx(meyer_wallach_oracle(row, n), abs=1e-12)
        z = rng.normal(size=(3, 2**n)) + 1j * rng.normal(size=(3, 2**n))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        for row, value in zip(z, meyer_wallach(z, n)):
            assert value == pytest.approx(meyer_wallach_oracle(row, n), abs=1e-12)


def test_ghz_state_is_maximally_entangled():
    psi = np.zeros(8)
    psi[[0, 7]] = 1 / math.sqrt(2)
    assert meyer_wallach(psi, 3)[0] == pytest.approx(1.0)


@pytest.fixture(scope="module")
def small_dataset():
    return generate_entanglement_dataset(6, 60, 20, rng=np.random.default_rng(7))


def test_dataset_balance_and_labels(small_dataset):
    train, test = small_dataset
    assert len(train) == 60 and len(test) == 20
    assert train.labels.sum() == 30 and test.labels.sum() == 10
    for ds in small_dataset:
        assert np.all((ds.entanglement >= 0) & (ds.entanglement <= 1))
        low = (ds.entanglement >= 0.1) & (ds.entanglement <= 0.2)
        high = (ds.entanglement >= 0.4) & (ds.entanglement <= 0.5)
        assert np.array_equal(ds.labels == 0, low) and np.array_equal(ds.labels == 1, high)
        recomputed = meyer_wallach(entangler_states(ds.features), ds.n_qubits)
        assert np.allclose(recomputed, ds.entanglement, atol=1e-12)


def test_dataset_deterministic(small_dataset):
    again = generate_entanglement_dataset(6, 60, 20, rng=np.random.default_rng(7))
    for a, b in zip(small_dataset, again):
        assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)


def test_dataset_csv_round_trip(small_dataset):
    train = small_dataset[0]
    back = Dataset.from_csv(train.to_csv())
    assert np.array_equal(back.features, train.features)
    assert np.array_equal(back.labels, train.labels)
    assert train.to_csv().splitlines()[0] == "f1,f2,f3,f4,f5,f6,label,Q"


def test_default_split_is_balanced():
    train, test = generate_entanglement_dataset(rng=np.random.default_rng(2024))
    assert (len(train), int(train.labels.sum())) == (400, 200)
    assert (len(test), int(test.labels.sum())) == (100, 50)


def test_dataset_argument_validation():
    with pytest.raises(ValueError):
        generate_entanglement_dataset(4, 10, 10, band_low=(0.3, 0.5), band_high=(0.4, 0.6))
    with pytest.raises(ValueError):
        generate_entanglement_dataset(4, 11, 10)
    with pytest.raises(RuntimeError):
        generate_entanglement_dataset(4, 10, 10, band_high=(0.99, 1.0), max_draws=1000,
                                      rng=np.random.default_rng(0))


# -- QNN pieces ---------------------------------------------------------------------


def test_zero_head_outputs_half():
    head = MlpHead.zeros(4)
    feats = np.random.default_rng(0).uniform(0, 6, (7, 4))
    assert np.allclose(qnn_forward(feats, Circuit.parse(4, "Ry0 XX1"), [0.3, 0.2], head), 0.5)


def test_empty_circuit_zero_features_measure_plus_one():
    z = qnn_z(np.zeros((1, 5)), Circuit(5, ()), np.zeros((1, 0)))
    assert np.allclose(z, 1.0)


def test_head_gradient_matches_finite_difference():
    rng = np.random.default_rng(3)
    head = MlpHead.init(5, rng)
    z = rng.uniform(-1, 1, (9, 5))
    labels = rng.integers(0, 2, 9)
    loss, dz, dhead = head.loss_and_grads(z, labels)
    vec = head.to_vector()
    eps = 1e-6
    for i in range(vec.size):
        up, dn = vec.copy(), vec.copy()
        up[i] += eps
        dn[i] -= eps
        fd = (bce_loss(head.with_vector(up)(z), labels) - bce_loss(head.with_vector(dn)(z), labels)) / (2 * eps)
        assert dhead[i] == pytest.approx(fd, abs=1e-8)
    for b in range(z.shape[0]):
        for q in range(z.shape[1]):
            up, dn = z.copy(), z.copy()
            up[b, q] += eps
            dn[b, q] -= eps
            fd = (bce_loss(head(up), labels) - bce_loss(head(dn), labels)) / (2 * eps)
            assert dz[b, q] == pytest.approx(fd, abs=1e-8)
    assert loss == pytest.approx(bce_loss(head(z), labels))


def test_circuit_parameter_gradient_through_pipeline():
    rng = np.random.default_rng(11)
    n = 4
    circuit = Circuit.parse(n, "Ry0 XX1 Rz2 YY3 Rx1")
    params = rng.uniform(-2, 2, circuit.n_params)
    head = MlpHead.init(n, rng)
    feats = rng.uniform(0, 2 * np.pi, (6, n))
    labels = rng.integers(0, 2, 6)

    def loss(p):
        return bce_loss(qnn_forward(feats, circuit, p, head), labels)

    from tdqas.paulisim import shift_gradient, shift_rows

    z_rows = qnn_z(feats, circuit, shift_rows(params))  # (B, 1+2P, n)
    _, dz, _ = head.loss_and_grads(z_rows[:, 0], labels)
    _, dz_dtheta = shift_gradient(np.moveaxis(z_rows, 1, -1))  # (B, n, P)
    analytic = np.einsum("bq,bqp->p", dz, dz_dtheta)
    h = 1e-4
    for i in range(params.size):
        up, dn = params.copy(), params.copy()
        up[i] += h
        dn[i] -= h
        assert analytic[i] == pytest.approx((loss(up) - loss(dn)) / (2 * h), abs=1e-5)
