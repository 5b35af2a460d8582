"""Generate the 4-qubit Jordan-Wigner Hamiltonian of H2 in the STO-3G basis.

Closed-form s-Gaussian integrals (overlap, kinetic, nuclear attraction,
electron repulsion) -> RHF molecular orbitals -> spin-orbital second
quantization -> Jordan-Wigner matrices -> Pauli-basis coefficients.

Spin orbitals are interleaved (qubit 2p + s holds spatial orbital p with
spin s), the usual ordering for this molecule.

Usage:
    python scripts/gen_h2_hamiltonian.py [--bond-angstrom 0.7] [--out FILE]
"""

import argparse
import itertools
from functools import reduce
from math import erf, exp, pi, sqrt

import numpy as np

BOHR_PER_ANGSTROM = 1.0 / 0.52917721092
STO3G_H_EXPONENTS = (3.42525091, 0.62391373, 0.16885540)
STO3G_H_COEFFS = (0.15432897, 0.53532814, 0.44463454)


def boys0(t):
    return 1.0 if t < 1e-12 else 0.5 * sqrt(pi / t) * erf(sqrt(t))


def primitives():
    return [(a, d * (2 * a / pi) ** 0.75) for a, d in zip(STO3G_H_EXPONENTS, STO3G_H_COEFFS)]


def one_electron(centers):
    n = len(centers)
    S = np.zeros((n, n))
    T = np.zeros((n, n))
    V = np.zeros((n, n))
    for i, j in itertools.product(range(n), repeat=2):
        A, B = centers[i], centers[j]
        rab2 = float(np.sum((A - B) ** 2))
        for (a, ca), (b, cb) in itertools.product(primitives(), repeat=2):
            p = a + b
            mu = a * b / p
            pre = ca * cb * (pi / p) ** 1.5 * exp(-mu * rab2)
            S[i, j] += pre
            T[i, j] += pre * mu * (3 - 2 * mu * rab2)
            P = (a * A + b * B) / p
            for C in centers:
                rpc2 = float(np.sum((P - C) ** 2))
                V[i, j] -= ca * cb * 2 * pi / p * exp(-mu * rab2) * boys0(p * rpc2)
    return S, T, V


def two_electron(centers):
    n = len(centers)
    eri = np.zeros((n, n, n, n))
    prims = primitives()
    for i, j, k, l in itertools.product(range(n), repeat=4):
        A, B, C, D = centers[i], centers[j], centers[k], centers[l]
        for (a, ca), (b, cb), (c, cc), (d, cd) in itertools.product(prims, repeat=4):
            p, q = a + b, c + d
            P = (a * A + b * B) / p
            Q = (c * C + d * D) / q
            val = 2 * pi**2.5 / (p * q * sqrt(p + q))
            val *= exp(-a * b / p * np.sum((A - B) ** 2) - c * d / q * np.sum((C - D) ** 2))
            val *= boys0(p * q / (p + q) * np.sum((P - Q) ** 2))
            eri[i, j, k, l] += ca * cb * cc * cd * val
    return eri


def molecular_integrals(bond_bohr):
    centers = [np.zeros(3), np.array([0.0, 0.0, bond_bohr])]
    S, T, V = one_electron(centers)
    eri = two_electron(centers)
    # minimal-basis H2: the RHF orbitals are fixed by symmetry
    C = np.column_stack([
        np.array([1.0, 1.0]) / sqrt(2 * (1 + S[0, 1])),
        np.array([1.0, -1.0]) / sqrt(2 * (1 - S[0, 1])),
    ])
    h = C.T @ (T + V) @ C
    g = np.einsum("pi,qj,rk,sl,pqrs->ijkl", C, C, C, C, eri)
    return h, g, 1.0 / bond_bohr


def jordan_wigner_hamiltonian(h, g, e_nuc):
    n_spatial = h.shape[0]
    n_so = 2 * n_spatial
    I2 = np.eye(2)
    Z = np.diag([1.0, -1.0])
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])  # |0><1| removes an electron

    def annihilate(j):
        return reduce(np.kron, [Z] * j + [lower] + [I2] * (n_so - j - 1))

    a = [annihilate(j) for j in range(n_so)]
    ad = [m.T.conj() for m in a]
    H = e_nuc * np.eye(2**n_so)
    for p, q in itertools.product(range(n_spatial), repeat=2):
        for s in range(2):
            H = H + h[p, q] * ad[2 * p + s] @ a[2 * q + s]
    for p, q, r, t in itertools.product(range(n_spatial), repeat=4):
        for s, u in itertools.product(range(2), repeat=2):
            # chemist-notation (pq|rt) a+_{p s} a+_{r u} a_{t u} a_{q s}
            H = H + 0.5 * g[p, q, r, t] * (
                ad[2 * p + s] @ ad[2 * r + u] @ a[2 * t + u] @ a[2 * q + s]
            )
    return H


def pauli_decompose(H, atol=1e-10):
    n = int(np.log2(H.shape[0]))
    mats = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, -1j], [1j, 0]]),
            "Z": np.diag([1, -1])}
    terms = []
    for letters in itertools.product("IXYZ", repeat=n):
        P = reduce(np.kron, [mats[c] for c in letters])
        coef = np.trace(P @ H) / 2**n
        if abs(coef) > atol:
            assert abs(coef.imag) < 1e-12
            terms.append((coef.real, "".join(letters)))
    return terms


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--bond-angstrom", type=float, default=0.7)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    h, g, e_nuc = molecular_integrals(args.bond_angstrom * BOHR_PER_ANGSTROM)
    H = jordan_wigner_hamiltonian(h, g, e_nuc)
    terms = pauli_decompose(H)
    ground = np.linalg.eigvalsh(H)[0]
    lines = [
        f"# H2, STO-3G, bond length {args.bond_angstrom} angstrom, Jordan-Wigner, interleaved spin",
        f"# ground-state energy {ground:.8f} Hartree (includes nuclear repulsion)",
    ]
    lines += [f"{c:+.12f} {p}" for c, p in terms]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")


if __name__ == "__main__":
    main()
