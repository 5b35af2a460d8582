import math
from collections import Counter

import numpy as np
import pytest

from tdqas.circuitspace import DOUBLE, GateKind, GateSet, layered_space_sizes
from tdqas.paulisim import circuit_depth
from tdqas.problems import heisenberg, hydrogen
from tdqas.supernet_engine import (
    SharedParamTable,
    SupernetConfig,
    check_td_gateset,
    gt_assignments,
    inherit_table,
    retrain_td,
    run_gt_phase,
    run_supernet,
    run_td_phase,
    sample_uniform,
    search,
    warmup_and_train,
)
from tdqas.trainer import CostLedger, Objective, TrainConfig

TD_SET = GateSet.parse("Ry,I|CNOT,CI")
GT_SET = GateSet.parse("Ry,Rz|CNOT")


class RecordingObjective(Objective):
    """Counts the parameter sizes of every gradient evaluation."""

    def __init__(self, base):
        super().__init__(**{k: getattr(base, k) for k in base.__dataclass_fields__})
        self.grad_sizes = []

    def losses_and_grads(self, circuit, params, *args, **kw):
        self.grad_sizes.append(circuit.n_params)
        return super().losses_and_grads(circuit, params, *args, **kw)


class PlantedObjective(Objective):
    """Returns a sentinel loss on the ``planted``-th call to ``losses``."""

    def __init__(self, base, planted):
        super().__init__(**{k: getattr(base, k) for k in base.__dataclass_fields__})
        self.calls, self.planted = 0, planted

    def losses(self, circuit, params, *args, **kw):
        out = super().losses(circuit, params, *args, **kw)
        if self.calls == self.planted:
            out = np.full_like(out, -1e300)
        self.calls += 1
        return out


def config(gateset=TD_SET, **kw):
    base = dict(n_qubits=3, n_layers=2, gateset=gateset, T_total=10, T_warm=5, N_search=10,
                train=TrainConfig(max_iters=20))
    base.update(kw)
    return SupernetConfig(**base)


def test_singleton_single_pool():
    cfg = config(GateSet.parse("Ry|CNOT,CI"))
    s = sample_uniform(cfg, np.random.default_rng(0))
    assert all(k == GateKind.RY for row in s.singles for k in row)


def test_identity_fraction_is_uniform():
    cfg = config(GateSet.parse("Ry,Rz,I|CNOT,CI"), n_layers=1, n_qubits=2)
    rng = np.random.default_rng(1)
    draws = 10_000
    counts = Counter(sample_uniform(cfg, rng).singles[0][0] for _ in range(draws))
    sigma = math.sqrt(draws / 3 * (2 / 3))
    assert abs(counts[GateKind.I] - draws / 3) < 3 * sigma


def test_all_identity_sample_gives_empty_circuit():
    cfg = config(GateSet.parse("I|CI"))
    s = sample_uniform(cfg, np.random.default_rng(0))
    assert s.circuit().n_gates == 0 and circuit_depth(s.circuit()) == 0


def test_induced_circuit_respects_layer_grid():
    cfg = config(GateSet.parse("I,Ry,Rz|CNOT,CI"), n_qubits=4, n_layers=3)
    rng = np.random.default_rng(2)
    for _ in range(50):
        s = sample_uniform(cfg, rng)
        slots = s.slots()
        assert [(l, c) for l, c, _, _ in slots] == sorted(
            [(l, c) for l, c, _, _ in slots], key=lambda x: (x[0], x[1] == DOUBLE)
        )
        per = Counter((l, c) for l, c, _, _ in slots)
        assert all(v <= 4 for v in per.values())


@pytest.mark.parametrize("experts", [1, 3])
def test_training_ledger_count(experts):
    obj = RecordingObjective(Objective.vqe(heisenberg(3)))
    cfg = config(GateSet.parse("I,Ry,Rz|CNOT,CI"), n_experts=experts, T_total=12, T_warm=4)
    ledger = CostLedger()
    warmup_and_train(cfg, obj, ledger, "baseline")
    expected = sum(1 + 2 * p for p in obj.grad_sizes) + (cfg.T_total - cfg.T_warm) * experts
    assert len(obj.grad_sizes) == cfg.T_total
    assert ledger.n_entries("baseline") == expected


def test_single_expert_matches_pure_warmup():
    obj = Objective.vqe(heisenberg(3))
    a = warmup_and_train(config(T_total=8, T_warm=8), obj, rng=np.random.default_rng(4))
    b = warmup_and_train(config(T_total=8, T_warm=0), obj, rng=np.random.default_rng(4))
    assert a.values.shape[0] == 1
    assert np.allclose(a.values, b.values, atol=1e-12)


def test_training_reduces_probe_loss():
    obj = Objective.vqe(heisenberg(3))
    improvements = []
    for seed in range(5):
        cfg = config(GateSet.parse("Ry|CNOT"), T_total=60, T_warm=30, seed=seed, learning_rate=0.1)
        rng = np.random.default_rng(seed)
        probe = sample_uniform(cfg, np.random.default_rng(99))
        table = SharedParamTable.for_grid(cfg, obj, rng)
        before = obj.losses(probe.circuit(), table.gather(probe.param_keys()))[0]
        warmup_and_train(cfg, obj, rng=rng, table=table)
        after = obj.losses(probe.circuit(), table.gather(probe.param_keys()))[0]
        improvements.append(before - after)
    assert np.median(improvements) > 0


def test_search_single_draw_and_argmin():
    obj = Objective.vqe(heisenberg(3))
    table = warmup_and_train(config(), obj)
    one = search(config(N_search=1), table, obj, rng=np.random.default_rng(5))
    assert len(one.scores) == 1 and one.score == one.scores[0]
    many = search(config(N_search=20), table, obj, rng=np.random.default_rng(5))
    assert many.score == many.scores.min()
    assert one.sample == sample_uniform(config(), np.random.default_rng(5))
    assert many.score <= one.score
    with pytest.raises(ValueError):
        search(config(N_search=0), table, obj)


def test_search_finds_planted_optimum():
    base = Objective.vqe(heisenberg(3))
    cfg = config(N_search=15)
    table = warmup_and_train(cfg, base)
    found = search(cfg, table, PlantedObjective(base, 7), rng=np.random.default_rng(6))
    replay = np.random.default_rng(6)
    expected = [sample_uniform(cfg, replay) for _ in range(8)][7]
    assert found.sample == expected and found.score == -1e300


def test_td_gateset_check():
    check_td_gateset(TD_SET)
    with pytest.raises(ValueError):
        check_td_gateset(GateSet.parse("Ry,Rz,I|CNOT,CI"))


@pytest.fixture(scope="module")
def h2_td():
    obj = Objective.vqe(hydrogen())
    cfg = SupernetConfig(4, 3, TD_SET, T_total=40, T_warm=20, N_search=30, train=TrainConfig(max_iters=100))
    ledger = CostLedger()
    td = run_td_phase(cfg, obj, ledger)
    return obj, cfg, td, ledger


def test_td_topology_lies_on_grid(h2_td):
    _, cfg, td, _ = h2_td
    assert td.layered.n_layers == cfg.n_layers and td.layered.n_qubits == cfg.n_qubits
    assert len(td.topology) == td.layered.n_active_single + td.layered.n_active_double
    report = layered_space_sizes(cfg.gateset, 4, 3)
    assert report.topo_size == 2**24


def test_inheritance_copies_td_angles(h2_td):
    obj, _, td, _ = h2_td
    table = inherit_table(td, GT_SET, obj)
    td_kind = {(l, c, q): k for l, c, q, k in td.sample.slots()}
    for i, (layer, arity, q, kind) in enumerate(table.keys):
        source = td_kind[(layer, arity, q)]
        if source.parameterized:
            assert np.array_equal(table.values[0, i], td.table.get(td.expert, (layer, arity, q, source)))
        else:
            assert np.all(table.values[0, i] == 0)


def test_inherited_td_instantiation_reproduces_td_score(h2_td):
    obj, _, td, _ = h2_td
    table = inherit_table(td, GateSet.parse("Ry,Rz|CNOT"), obj)
    keys = [(l, c, q, k) for l, c, q, k in td.sample.slots() if k.parameterized]
    score = obj.losses(td.circuit, table.gather(keys))[0]
    assert score == pytest.approx(td.score, abs=1e-12)


def test_degenerate_gt_space_returns_instantiation(h2_td):
    obj, _, td, _ = h2_td
    cands, exhaustive = gt_assignments(td, GateSet.parse("Ry|CNOT"), 10, np.random.default_rng(0))
    assert exhaustive and len(cands) == 1
    gt = run_gt_phase(td, SupernetConfig(4, 3, GateSet.parse("Ry|CNOT"), train=TrainConfig(max_iters=10)), obj)
    assert gt.circuit == td.circuit


def test_sampled_gt_candidates_start_with_td_kinds(h2_td):
    _, _, td, _ = h2_td
    cands, exhaustive = gt_assignments(td, GateSet.parse("Rx,Ry,Rz|CNOT"), 3, np.random.default_rng(0))
    if not exhaustive:
        assert list(cands[0]) == [k for *_, k in td.sample.slots()]


def test_gt_refines_td_on_h2(h2_td):
    obj, cfg, td, ledger = h2_td
    td_fit = retrain_td(td, cfg, obj, ledger)
    gt = run_gt_phase(td, SupernetConfig(4, 3, GT_SET, N_search=4096, train=TrainConfig(max_iters=100)), obj, ledger)
    assert gt.exhaustive
    assert gt.value <= td_fit.value + 1e-6
    assert ledger.total("GT") < ledger.total("TD")


def test_gt_rejects_identity_kinds(h2_td):
    obj, _, td, _ = h2_td
    with pytest.raises(ValueError):
        run_gt_phase(td, SupernetConfig(4, 3, TD_SET), obj)


def test_run_supernet_deterministic_and_logged():
    obj = Objective.vqe(heisenberg(3))
    cfg = config(GateSet.parse("I,Ry,Rz|CNOT,CI"), n_experts=2)
    l1, l2 = CostLedger(), CostLedger()
    a, b = run_supernet(cfg, obj, l1), run_supernet(cfg, obj, l2)
    assert a.value == b.value and a.circuit == b.circuit
    assert l1.totals() == l2.totals()
    assert l1.n_entries("baseline") > 0 and l1.n_entries("retrain") > 0
