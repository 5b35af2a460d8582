"""Dense statevector / density-matrix simulator for ring circuits.

Basis index convention: qubit 0 is the most significant bit, so a Pauli
string ``"XZI"`` is the Kronecker product ``X (x) Z (x) I``.

Every gate of the alphabet is either a Pauli rotation
``exp(-i theta P / 2)`` (Rx, Ry, Rz, XX, YY, ZZ), a basis permutation
(CNOT), or an exact identity (I, CI). A Pauli string acts on basis
amplitudes as ``(P psi)[k] = phase[k] * psi[k ^ xmask]``; the simulator
stores ``(perm, phase)`` pairs for each string and applies rotations as
``cos(theta/2) psi - i sin(theta/2) P psi``.

The batched entry points (:func:`simulate`, :func:`expect_rows`) evaluate
many parameter vectors of one circuit at once. They are what the trainer
uses; the single-state functions wrap them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .circuitspace import Circuit, GateKind

PURE = "pure"
MIXED = "mixed"

MAX_DENSE_QUBITS = 12
# rows of a mixed-mode batch are processed in chunks of at most this many bytes
_MIXED_CHUNK_BYTES = 1 << 28


@dataclass(frozen=True)
class NoiseConfig:
    p_single_depol: float = 0.01
    p_double_depol: float = 0.001
    p_bitflip: float = 0.01
    enabled: bool = False

    def __post_init__(self):
        for name in ("p_single_depol", "p_double_depol", "p_bitflip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")

    @classmethod
    def noisy(cls, **kwargs) -> "NoiseConfig":
        return cls(enabled=True, **kwargs)


NOISELESS = NoiseConfig(enabled=False)


@dataclass(frozen=True)
class ExecTimeModel:
    """Per-circuit execution time, in microseconds."""

    t_prep_plus_measure: float = 1.0
    t_gate: float = 0.01

    def __post_init__(self):
        if self.t_prep_plus_measure < 0 or self.t_gate < 0:
            raise ValueError("execution times must be nonnegative")


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A pure (``data`` is a length-2^n vector) or mixed (2^n x 2^n) state."""

    n_qubits: int
    data: np.ndarray
    mode: str = PURE

    def __post_init__(self):
        d = 2**self.n_qubits
        expected = (d,) if self.mode == PURE else (d, d)
        if self.mode not in (PURE, MIXED):
            raise ValueError(f"mode must be pure or mixed, got {self.mode!r}")
        if self.data.shape != expected:
            raise ValueError(f"{self.mode} state on {self.n_qubits} qubits needs shape {expected}")

    @classmethod
    def zero(cls, n_qubits: int, mode: str = PURE) -> "QuantumState":
        d = 2**n_qubits
        if mode == PURE:
            data = np.zeros(d, dtype=complex)
            data[0] = 1.0
        else:
            data = np.zeros((d, d), dtype=complex)
            data[0, 0] = 1.0
        return cls(n_qubits, data, mode)

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "QuantumState":
        amps = np.asarray(amplitudes, dtype=complex)
        n = int(round(math.log2(amps.shape[0])))
        return cls(n, amps.copy(), PURE)

    @property
    def amplitudes(self) -> np.ndarray:
        if self.mode != PURE:
            raise ValueError("mixed state has no amplitude vector")
        return self.data

    @property
    def density(self) -> np.ndarray:
        if self.mode == PURE:
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_mixed(self) -> "QuantumState":
        return self if self.mode == MIXED else QuantumState(self.n_qubits, self.density, MIXED)

    def check(self, atol: float = 1e-10) -> None:
        """Raise if the normalization/Hermiticity/positivity invariants fail."""
        if self.mode == PURE:
            norm = float(np.vdot(self.data, self.data).real)
            if abs(norm - 1) > atol:
                raise ValueError(f"state norm {norm} != 1")
            return
        rho = self.data
        if abs(np.trace(rho) - 1) > atol:
            raise ValueError("density trace != 1")
        if np.max(np.abs(rho - rho.conj().T)) > atol:
            raise ValueError("density is not Hermitian")
        if np.linalg.eigvalsh(rho).min() < -1e-8:
            raise ValueError("density has a negative eigenvalue")


# --------------------------------------------------------------------------
# Pauli strings


def _masks(n_qubits: int, ops: Sequence[tuple[int, str]]) -> tuple[int, int, int]:
    xmask = zmask = n_y = 0
    for q, p in ops:
        bit = 1 << (n_qubits - 1 - q)
        if p in "XY":
            xmask |= bit
        if p in "ZY":
            zmask |= bit
        n_y += p == "Y"
    return xmask, zmask, n_y


@lru_cache(maxsize=4096)
def pauli_action(n_qubits: int, ops: tuple[tuple[int, str], ...]) -> tuple[np.ndarray, np.ndarray, bool]:
    """``(perm, phase, diagonal)`` with ``(P psi)[k] = phase[k] * psi[perm[k]]``.

    ``ops`` lists ``(qubit, letter)`` pairs; identity letters may be omitted.
    """
    ops = tuple((q, p) for q, p in ops if p != "I")
    if len({q for q, _ in ops}) != len(ops):
        raise ValueError("repeated qubit in Pauli operator")
    xmask, zmask, n_y = _masks(n_qubits, ops)
    k = np.arange(2**n_qubits)
    perm = k ^ xmask
    parity = np.zeros(k.shape, dtype=np.int64)
    bits = perm & zmask
    while np.any(bits):
        parity ^= bits & 1
        bits = bits >> 1
    phase = (1j**n_y) * (1 - 2 * parity)
    phase.setflags(write=False)
    perm.setflags(write=False)
    return perm, phase.astype(complex), xmask == 0


def _string_ops(pauli: str) -> tuple[tuple[int, str], ...]:
    return tuple((q, p) for q, p in enumerate(pauli) if p != "I")


@dataclass(frozen=True, eq=False)
class PauliSum:
    """Real-weighted sum of Pauli strings; ``terms`` holds ``(coefficient, string)``."""

    n_qubits: int
    terms: tuple[tuple[float, str], ...] = ()
    _groups: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        terms = []
        for coef, pauli in self.terms:
            pauli = pauli.strip().upper()
            if len(pauli) != self.n_qubits or set(pauli) - set("IXYZ"):
                raise ValueError(f"bad Pauli string {pauli!r} for {self.n_qubits} qubits")
            if isinstance(coef, complex) or not math.isfinite(float(coef)):
                raise ValueError(f"coefficient must be a finite real, got {coef!r}")
            terms.append((float(coef), pauli))
        object.__setattr__(self, "terms", tuple(terms))

    def __len__(self) -> int:
        return len(self.terms)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit-count mismatch")
        return PauliSum(self.n_qubits, self.terms + other.terms)

    def scaled(self, factor: float) -> "PauliSum":
        return PauliSum(self.n_qubits, tuple((factor * c, p) for c, p in self.terms))

    def simplify(self, atol: float = 0.0) -> "PauliSum":
        """Merge repeated strings (first-occurrence order) and drop zero terms."""
        merged: dict[str, float] = {}
        for c, p in self.terms:
            merged[p] = merged.get(p, 0.0) + c
        return PauliSum(self.n_qubits, tuple((c, p) for p, c in merged.items() if abs(c) > atol))

    @classmethod
    def from_text(cls, text: str) -> "PauliSum":
        """Parse ``<coefficient> <pauli_string>`` lines; ``#`` starts a comment."""
        terms = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected '<coefficient> <pauli_string>'")
            terms.append((float(parts[0]), parts[1]))
        if not terms:
            raise ValueError("no terms found")
        return cls(len(terms[0][1]), tuple(terms))

    def to_text(self) -> str:
        return "".join(f"{c!r} {p}\n" for c, p in self.terms)

    def groups(self) -> list[tuple[np.ndarray, np.ndarray, bool]]:
        """Terms grouped by X-mask: ``[(perm, weights, diagonal), ...]``."""
        if self._groups is None:
            by_mask: dict[int, list] = {}
            for coef, pauli in self.terms:
                perm, phase, diag = pauli_action(self.n_qubits, _string_ops(pauli))
                key = int(perm[0])
                if key in by_mask:
                    by_mask[key][1] = by_mask[key][1] + coef * phase
                else:
                    by_mask[key] = [perm, coef * phase, diag]
            object.__setattr__(self, "_groups", [tuple(g) for g in by_mask.values()])
        return self._groups

    def to_matrix(self) -> np.ndarray:
        if self.n_qubits > MAX_DENSE_QUBITS:
            raise ValueError(f"dense matrix limited to {MAX_DENSE_QUBITS} qubits")
        d = 2**self.n_qubits
        mat = np.zeros((d, d), dtype=complex)
        rows = np.arange(d)
        for perm, weights, _ in self.groups():
            mat[rows, perm] += weights
        return mat

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(2**self.n_qubits, dtype=complex)
        for _, weights, is_diag in self.groups():
            if is_diag:
                diag += weights
        return diag.real

    @property
    def is_diagonal(self) -> bool:
        return all(diag for _, _, diag in self.groups())


# --------------------------------------------------------------------------
# batched kernels; pure rows have shape (B, D), mixed rows (B, D, D)


def _rotate(rows, axis, perm, phase, diagonal, angles, conj):
    """Apply exp(-i angle P / 2) (or its complex conjugate) along ``axis``."""
    shape = [1] * rows.ndim
    shape[0] = -1
    half = np.asarray(angles, dtype=float).reshape(shape) / 2
    pshape = [1] * rows.ndim
    pshape[axis] = -1
    ph = phase.reshape(pshape)
    if conj:
        ph = ph.conj()
        half = -half
    if diagonal:
        # phase is real (+-1) for diagonal strings
        return rows * np.exp(-1j * half * ph.real)
    gathered = np.take(rows, perm, axis=axis)
    return np.cos(half) * rows - 1j * np.sin(half) * (ph * gathered)


def _depolarize(rows, n_qubits, qubits, p):
    """Pauli-twirl depolarizing channel on ``qubits`` of mixed rows."""
    if p == 0:
        return rows
    k = len(qubits)
    d_sub = 2**k
    n_paulis = 4**k - 1
    b = rows.shape[0]
    t = rows.reshape((b,) + (2,) * (2 * n_qubits))
    row_axes = list(range(1, n_qubits + 1))
    col_axes = list(range(n_qubits + 1, 2 * n_qubits + 1))
    traced_cols = list(col_axes)
    for q in qubits:
        traced_cols[q] = row_axes[q]
    out_axes = [0] + [a for a in row_axes if a - 1 not in qubits] + [
        a for i, a in enumerate(col_axes) if i not in qubits
    ]
    reduced = np.einsum(t, [0] + row_axes + traced_cols, out_axes)
    # identity on the traced qubits: I (x) Tr_Q(rho)
    eye_labels = []
    operands = [reduced, out_axes]
    for q in qubits:
        operands += [np.eye(2), [row_axes[q], col_axes[q]]]
        eye_labels += [row_axes[q], col_axes[q]]
    full = np.einsum(*operands, [0] + row_axes + col_axes).reshape(rows.shape)
    # sum over the non-identity Paulis P rho P = d_sub * I (x) Tr_Q(rho) - rho
    keep = 1 - p - p / n_paulis
    return keep * rows + (p / n_paulis) * d_sub * full


def _bitflip(rows, n_qubits, qubit, p):
    if p == 0:
        return rows
    b = rows.shape[0]
    t = rows.reshape((b,) + (2,) * (2 * n_qubits))
    flipped = np.flip(t, axis=(1 + qubit, 1 + n_qubits + qubit)).reshape(rows.shape)
    return (1 - p) * rows + p * flipped


_PAULI_OF = {
    GateKind.RX: "X",
    GateKind.RY: "Y",
    GateKind.RZ: "Z",
    GateKind.XX: "XX",
    GateKind.YY: "YY",
    GateKind.ZZ: "ZZ",
}


def _gate_op(n_qubits: int, kind: GateKind, qubits: tuple[int, ...]):
    """Compiled op: ('rot', perm, phase, diagonal) | ('perm', perm) | ('id',)."""
    if kind.is_identity:
        return ("id",)
    if kind == GateKind.CNOT:
        c, t = qubits
        k = np.arange(2**n_qubits)
        cbit = (k >> (n_qubits - 1 - c)) & 1
        return ("perm", k ^ (cbit << (n_qubits - 1 - t)))
    letters = _PAULI_OF[kind]
    perm, phase, diag = pauli_action(n_qubits, tuple(zip(qubits, letters)))
    return ("rot", perm, phase, diag)


def _check_gate_args(n_qubits, kind, qubits, angle):
    if len(qubits) != kind.n_qubits:
        raise ValueError(f"{kind} acts on {kind.n_qubits} qubit(s), got {qubits}")
    if any(not 0 <= q < n_qubits for q in qubits):
        raise ValueError(f"qubit index out of range in {qubits} for {n_qubits} qubits")
    if len(set(qubits)) != len(qubits):
        raise ValueError("two-qubit gate needs distinct qubits")
    if kind.parameterized and angle is None:
        raise ValueError(f"{kind} requires an angle")
    if not kind.parameterized and angle is not None:
        raise ValueError(f"{kind} takes no angle")


@dataclass(frozen=True, eq=False)
class _CompiledCircuit:
    n_qubits: int
    ops: tuple  # (op, param_index or -1, qubits) per non-identity element
    n_params: int
    # flat tables for the fused pure-state kernel
    kinds: np.ndarray  # 0 rotation, 1 diagonal rotation, 2 permutation
    param_index: np.ndarray
    table_index: np.ndarray
    perms: np.ndarray
    phases: np.ndarray


@lru_cache(maxsize=2048)
def compile_circuit(circuit: Circuit) -> _CompiledCircuit:
    n = circuit.n_qubits
    d = 2**n
    ops, kinds, pidx, tidx, perms, phases = [], [], [], [], [], []
    j = 0
    for e in circuit.elements:
        qubits = e.qubits(n)
        op = _gate_op(n, e.kind, qubits)
        index = -1
        if e.kind.parameterized:
            index = j
            j += 1
        if op[0] == "id":
            continue
        ops.append((op, index, qubits))
        if op[0] == "perm":
            kinds.append(2)
            perms.append(op[1])
            phases.append(np.ones(d, dtype=complex))
        else:
            kinds.append(1 if op[3] else 0)
            perms.append(op[1])
            phases.append(op[2])
        pidx.append(max(index, 0))
        tidx.append(len(perms) - 1)
    return _CompiledCircuit(
        n,
        tuple(ops),
        j,
        np.array(kinds, dtype=np.int64),
        np.array(pidx, dtype=np.int64),
        np.array(tidx, dtype=np.int64),
        np.array(perms, dtype=np.int64).reshape(len(perms), d),
        np.array(phases, dtype=complex).reshape(len(phases), d),
    )


def _run_pure_numpy(rows, params, kinds, param_index, table_index, perms, phases):
    for g in range(kinds.shape[0]):
        t = table_index[g]
        if kinds[g] == 2:
            rows = rows[:, perms[t]]
        else:
            rows = _rotate(rows, 1, perms[t], phases[t], kinds[g] == 1, params[:, param_index[g]], False)
    return rows


try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional
    _run_pure = _run_pure_numpy
else:

    @njit(cache=True)
    def _run_pure(rows, params, kinds, param_index, table_index, perms, phases):
        n_rows, d = rows.shape
        out = rows.copy()
        tmp = np.empty(d, dtype=np.complex128)
        for b in range(n_rows):
            psi = out[b]
            for g in range(kinds.shape[0]):
                t = table_index[g]
                if kinds[g] == 2:
                    for k in range(d):
                        tmp[k] = psi[perms[t, k]]
                    for k in range(d):
                        psi[k] = tmp[k]
                    continue
                half = 0.5 * params[b, param_index[g]]
                c = np.cos(half)
                s = np.sin(half)
                if kinds[g] == 1:
                    plus = complex(c, -s)
                    minus = complex(c, s)
                    for k in range(d):
                        if phases[t, k].real > 0:
                            psi[k] = psi[k] * plus
                        else:
                            psi[k] = psi[k] * minus
                else:
                    ms = complex(0.0, -s)
                    for k in range(d):
                        tmp[k] = c * psi[k] + ms * phases[t, k] * psi[perms[t, k]]
                    for k in range(d):
                        psi[k] = tmp[k]
        return out


def _apply_op(rows, op, angles, mixed):
    tag = op[0]
    if tag == "id":
        return rows
    if tag == "perm":
        perm = op[1]
        rows = np.take(rows, perm, axis=1)
        return np.take(rows, perm, axis=2) if mixed else rows
    _, perm, phase, diag = op
    rows = _rotate(rows, 1, perm, phase, diag, angles, conj=False)
    if mixed:
        rows = _rotate(rows, 2, perm, phase, diag, angles, conj=True)
    return rows


def _initial_rows(n_qubits, batch, initial, mixed):
    d = 2**n_qubits
    if initial is None:
        shape = (batch, d, d) if mixed else (batch, d)
        rows = np.zeros(shape, dtype=complex)
        if mixed:
            rows[:, 0, 0] = 1.0
        else:
            rows[:, 0] = 1.0
        return rows
    if isinstance(initial, QuantumState):
        if initial.n_qubits != n_qubits:
            raise ValueError("qubit-count mismatch between circuit and initial state")
        data = initial.density if mixed else initial.data
        if not mixed and initial.mode == MIXED:
            raise ValueError("mixed initial state requires noisy (mixed-mode) simulation")
        return np.broadcast_to(data, (batch,) + data.shape).copy()
    data = np.asarray(initial, dtype=complex)
    if data.ndim == 1:
        data = np.broadcast_to(data, (batch,) + data.shape)
    if data.shape[0] != batch or data.shape[1] != d:
        raise ValueError("initial rows do not match batch/qubit count")
    if mixed and data.ndim == 2:
        data = data[:, :, None] * data[:, None, :].conj()
    return np.array(data, dtype=complex)


def simulate(
    circuit: Circuit,
    param_rows,
    noise: NoiseConfig = NOISELESS,
    initial=None,
) -> np.ndarray:
    """Run ``circuit`` once per row of ``param_rows`` (shape ``(B, n_params)``).

    ``initial`` may be None (|0...0>), a :class:`QuantumState`, a single
    amplitude vector, or per-row amplitude vectors of shape ``(B, D)``.
    Returns ``(B, D)`` amplitudes (noise disabled) or ``(B, D, D)``
    densities (noise enabled).
    """
    compiled = compile_circuit(circuit)
    param_rows = np.asarray(param_rows, dtype=float)
    if param_rows.ndim == 1:
        param_rows = param_rows[None, :]
    if param_rows.shape[1] != compiled.n_params:
        raise ValueError(
            f"circuit has {compiled.n_params} parameterized gates, got {param_rows.shape[1]} parameters"
        )
    mixed = bool(noise.enabled)
    n = compiled.n_qubits
    batch = param_rows.shape[0]
    if mixed:
        chunk = max(1, _MIXED_CHUNK_BYTES // (16 * 4**n))
        if batch > chunk:
            init = initial
            if initial is not None and not isinstance(initial, QuantumState):
                init = np.asarray(initial)
            parts = []
            for s in range(0, batch, chunk):
                sub_init = init
                if isinstance(init, np.ndarray) and init.ndim >= 2 and init.shape[0] == batch:
                    sub_init = init[s : s + chunk]
                parts.append(simulate(circuit, param_rows[s : s + chunk], noise, sub_init))
            return np.concatenate(parts)
    rows = _initial_rows(n, batch, initial, mixed)
    if not mixed:
        if not compiled.ops:
            return rows
        c = compiled
        return _run_pure(
            rows, param_rows if c.n_params else np.zeros((batch, 1)),
            c.kinds, c.param_index, c.table_index, c.perms, c.phases,
        )
    for op, j, qubits in compiled.ops:
        angles = param_rows[:, j] if j >= 0 else None
        rows = _apply_op(rows, op, angles, mixed)
        p = noise.p_single_depol if len(qubits) == 1 else noise.p_double_depol
        rows = _depolarize(rows, n, qubits, p)
    for q in range(n):
        rows = _bitflip(rows, n, q, noise.p_bitflip)
    return rows


def expect_rows(rows: np.ndarray, observable: PauliSum) -> np.ndarray:
    """Expectation of ``observable`` for every pure/mixed row; returns reals."""
    mixed = rows.ndim == 3
    d = rows.shape[1]
    if d != 2**observable.n_qubits:
        raise ValueError("qubit-count mismatch between state and observable")
    total = np.zeros(rows.shape[0], dtype=complex)
    if mixed:
        cols = np.arange(d)
        for perm, weights, diag in observable.groups():
            if diag:
                total += np.einsum("bkk->bk", rows) @ weights
            else:
                total += rows[:, perm, cols] @ weights
    else:
        conj = rows.conj()
        for perm, weights, diag in observable.groups():
            if diag:
                total += (conj * rows).real @ weights
            else:
                total += np.einsum("bk,bk->b", conj * weights, rows[:, perm])
    residue = np.max(np.abs(total.imag)) if total.size else 0.0
    scale = max(1.0, sum(abs(c) for c, _ in observable.terms))
    if residue > 1e-8 * scale:
        raise ArithmeticError(f"expectation has imaginary residue {residue:.3e}")
    return total.real


@lru_cache(maxsize=32)
def _z_signs(n_qubits: int) -> np.ndarray:
    k = np.arange(2**n_qubits)[:, None]
    q = np.arange(n_qubits)[None, :]
    return 1.0 - 2.0 * ((k >> (n_qubits - 1 - q)) & 1)


def z_expectations(rows: np.ndarray, n_qubits: int) -> np.ndarray:
    """``<Z_q>`` for every qubit; shape ``(B, n_qubits)``."""
    if rows.ndim == 3:
        probs = np.einsum("bkk->bk", rows).real
    else:
        probs = rows.real**2 + rows.imag**2
    return probs @ _z_signs(n_qubits)


def shift_rows(params: np.ndarray) -> np.ndarray:
    """Stack ``[theta, theta + pi/2 e_0, theta - pi/2 e_0, ...]`` (1 + 2P rows)."""
    params = np.asarray(params, dtype=float)
    p = params.shape[-1]
    rows = np.repeat(params[..., None, :], 1 + 2 * p, axis=-2)
    idx = np.arange(p)
    rows[..., 1 + 2 * idx, idx] += np.pi / 2
    rows[..., 2 + 2 * idx, idx] -= np.pi / 2
    return rows


def shift_gradient(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split shift-row values ``(..., 1 + 2P)`` into ``(f(theta), grad)``."""
    return values[..., 0], (values[..., 1::2] - values[..., 2::2]) / 2


# --------------------------------------------------------------------------
# single-state operations


def apply_gate(state: QuantumState, kind, qubits, angle: Optional[float] = None) -> QuantumState:
    kind = GateKind.parse(kind)
    qubits = (qubits,) if isinstance(qubits, (int, np.integer)) else tuple(int(q) for q in qubits)
    _check_gate_args(state.n_qubits, kind, qubits, angle)
    op = _gate_op(state.n_qubits, kind, qubits)
    mixed = state.mode == MIXED
    rows = _apply_op(state.data[None], op, None if angle is None else [angle], mixed)
    return QuantumState(state.n_qubits, rows[0], state.mode)


def apply_noise_channel(state: QuantumState, channel: str, qubits, p: float) -> QuantumState:
    """Apply ``depol1``, ``depol2`` or ``bitflip`` to a mixed state."""
    if state.mode != MIXED:
        raise ValueError("noise channels need a mixed-mode state")
    if not 0 <= p <= 1:
        raise ValueError("probability must lie in [0, 1]")
    qubits = (qubits,) if isinstance(qubits, (int, np.integer)) else tuple(int(q) for q in qubits)
    if any(not 0 <= q < state.n_qubits for q in qubits):
        raise ValueError("qubit index out of range")
    rows = state.data[None]
    if channel == "depol1":
        if len(qubits) != 1:
            raise ValueError("depol1 acts on one qubit")
        rows = _depolarize(rows, state.n_qubits, qubits, p)
    elif channel == "depol2":
        if len(qubits) != 2 or qubits[0] == qubits[1]:
            raise ValueError("depol2 acts on two distinct qubits")
        rows = _depolarize(rows, state.n_qubits, qubits, p)
    elif channel == "bitflip":
        for q in qubits:
            rows = _bitflip(rows, state.n_qubits, q, p)
    else:
        raise ValueError(f"unknown channel {channel!r}")
    return QuantumState(state.n_qubits, rows[0], MIXED)


def run_circuit(
    circuit: Circuit,
    params=(),
    noise: NoiseConfig = NOISELESS,
    initial: Optional[QuantumState] = None,
) -> QuantumState:
    params = np.asarray(params, dtype=float).reshape(-1)
    if initial is not None and initial.n_qubits != circuit.n_qubits:
        raise ValueError("qubit-count mismatch between circuit and initial state")
    rows = simulate(circuit, params[None, :], noise, initial)
    return QuantumState(circuit.n_qubits, rows[0], MIXED if noise.enabled else PURE)


def expectation(state: QuantumState, observable: PauliSum) -> float:
    if state.n_qubits != observable.n_qubits:
        raise ValueError("qubit-count mismatch between state and observable")
    return float(expect_rows(state.data[None], observable)[0])


def parameter_shift_grad(
    circuit: Circuit,
    params,
    observable: PauliSum,
    noise: NoiseConfig = NOISELESS,
    initial: Optional[QuantumState] = None,
) -> np.ndarray:
    params = np.asarray(params, dtype=float).reshape(-1)
    rows = simulate(circuit, shift_rows(params), noise, initial)
    _, grad = shift_gradient(expect_rows(rows, observable))
    return grad


def exact_min_eigenvalue(observable: PauliSum) -> tuple[float, QuantumState]:
    if observable.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"exact diagonalization limited to {MAX_DENSE_QUBITS} qubits")
    if observable.is_diagonal:
        diag = observable.diagonal()
        k = int(np.argmin(diag))
        vec = np.zeros(diag.shape[0], dtype=complex)
        vec[k] = 1.0
        return float(diag[k]), QuantumState(observable.n_qubits, vec)
    values, vectors = np.linalg.eigh(observable.to_matrix())
    return float(values[0]), QuantumState(observable.n_qubits, vectors[:, 0].astype(complex))


def circuit_depth(circuit: Circuit) -> int:
    """ASAP layer count; identity placeholders occupy no layer."""
    frontier = [0] * circuit.n_qubits
    depth = 0
    for e in circuit.elements:
        if e.kind.is_identity:
            continue
        qubits = e.qubits(circuit.n_qubits)
        level = 1 + max(frontier[q] for q in qubits)
        for q in qubits:
            frontier[q] = level
        depth = max(depth, level)
    return depth


def exec_time(circuit: Circuit, model: ExecTimeModel = ExecTimeModel(), extra_layers: int = 0) -> float:
    """Execution time in microseconds: preparation + measurement + depth * gate time.

    ``extra_layers`` adds fixed layers executed with the circuit (e.g. a data
    embedding layer).
    """
    return model.t_prep_plus_measure + (circuit_depth(circuit) + extra_layers) * model.t_gate
