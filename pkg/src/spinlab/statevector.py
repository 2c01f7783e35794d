"""Dense state-vector emulation for short spin chains.

Provides circuit layers for the transverse-field Ising chain, expectation
values of Pauli sums, projective Z-basis sampling, exact diagonalization,
and real-time evolution.  Everything is capped at desk scale: 26 qubits for
vectors, 12 for dense matrices.

Spin encoding: basis index bit k = 0 means spin +1 on site k, bit 1 means
spin -1 (qubit k <-> spin k).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .pauli import PauliString, PauliSum

MAX_STATE_QUBITS = 26
MAX_DENSE_QUBITS = 12

NORM_TOL = 1e-10


class CapacityError(RuntimeError):
    """Requested register exceeds the desk-scale memory ceiling."""


@dataclass(frozen=True)
class StateVector:
    """Normalized complex amplitudes over the 2^n computational basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        n = amps.size.bit_length() - 1
        if amps.size != 2 ** n:
            raise ValueError("amplitude vector length must be a power of two")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class SpinConfiguration:
    """Length-L sequence of +-1 spins with the canonical bit encoding."""

    spins: tuple[int, ...]

    def __post_init__(self):
        if any(s not in (1, -1) for s in self.spins):
            raise ValueError("spins must be +1 or -1")

    @property
    def length(self) -> int:
        return len(self.spins)

    def to_index(self) -> int:
        idx = 0
        for k, s in enumerate(self.spins):
            if s == -1:
                idx |= 1 << k
        return idx

    @classmethod
    def from_index(cls, idx: int, length: int) -> "SpinConfiguration":
        return cls(tuple(1 - 2 * ((idx >> k) & 1) for k in range(length)))


def all_spin_values(L: int) -> np.ndarray:
    """(2^L, L) array of spin values, row i = configuration with index i."""
    idx = np.arange(2 ** L, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(L)[None, :]) & 1
    return (1 - 2 * bits).astype(np.int64)


@dataclass(frozen=True)
class TFIMModel:
    """Transverse-field Ising chain -J sum Z_k Z_{k+1} - Gamma sum X_k."""

    L: int
    J: float = 1.0
    Gamma: float = 1.0
    periodic: bool = True

    def bonds(self) -> list[tuple[int, int]]:
        if self.periodic:
            return [(k, (k + 1) % self.L) for k in range(self.L)]
        return [(k, k + 1) for k in range(self.L - 1)]

    def as_pauli_sum(self) -> PauliSum:
        terms = []
        for i, j in self.bonds():
            letters = ["I"] * self.L
            letters[i] = "Z"
            letters[j] = "Z"
            if i == j:  # L=1 periodic: Z_k Z_k = identity
                letters[i] = "I"
            terms.append((-self.J + 0j, PauliString("".join(letters))))
        for k in range(self.L):
            terms.append((-self.Gamma + 0j, PauliString.single(self.L, k, "X")))
        return PauliSum.from_terms(self.L, terms)

    def zz_sum_table(self) -> np.ndarray:
        """sum_k s_k s_{k+1} for every basis index (diagonal of the ZZ part)."""
        spins = all_spin_values(self.L)
        total = np.zeros(2 ** self.L, dtype=np.int64)
        for i, j in self.bonds():
            total += spins[:, i] * spins[:, j]
        return total


def init_plus(n: int) -> StateVector:
    """Uniform superposition |+>^n (Hadamard on every qubit of |0...0>)."""
    if n < 1:
        raise ValueError("need at least one qubit")
    if n > MAX_STATE_QUBITS:
        raise CapacityError(f"n={n} exceeds the {MAX_STATE_QUBITS}-qubit ceiling")
    amps = np.full(2 ** n, 2.0 ** (-n / 2), dtype=complex)
    return StateVector(amps)


def basis_state(n: int, index: int) -> StateVector:
    amps = np.zeros(2 ** n, dtype=complex)
    amps[index] = 1.0
    return StateVector(amps)


def apply_exp_zz(s: StateVector, theta: float, model: TFIMModel) -> StateVector:
    """exp(i theta H_1) with H_1 = -J sum Z_k Z_{k+1}: a diagonal phase layer."""
    if s.n_qubits != model.L:
        raise ValueError("state size does not match model")
    phases = np.exp(1j * theta * (-model.J) * model.zz_sum_table())
    return StateVector(s.amplitudes * phases)


def _apply_single_qubit(amps: np.ndarray, n: int, k: int,
                        gate: np.ndarray) -> np.ndarray:
    """Apply a 2x2 gate on qubit k of a length-2^n amplitude array."""
    tensor = amps.reshape(2 ** (n - 1 - k), 2, 2 ** k)
    return np.einsum("ab,ibk->iak", gate, tensor).reshape(amps.size)


def apply_exp_x(s: StateVector, theta: float, model: TFIMModel) -> StateVector:
    """exp(i theta H_2) with H_2 = -Gamma sum X_k, one rotation per qubit."""
    if s.n_qubits != model.L:
        raise ValueError("state size does not match model")
    a = theta * model.Gamma
    gate = np.array([[np.cos(a), -1j * np.sin(a)],
                     [-1j * np.sin(a), np.cos(a)]])
    amps = s.amplitudes
    for k in range(model.L):
        amps = _apply_single_qubit(amps, model.L, k, gate)
    return StateVector(amps)


def apply_pauli_string(s: StateVector, p: PauliString) -> np.ndarray:
    """Raw amplitudes of P|psi>.  Uses the bit action of each letter."""
    if p.n_qubits != s.n_qubits:
        raise ValueError("operator size does not match state")
    n = s.n_qubits
    flip = 0
    sign_mask = 0
    ny = 0
    for k, c in enumerate(p.letters):
        if c in "XY":
            flip |= 1 << k
        if c in "ZY":
            sign_mask |= 1 << k
        if c == "Y":
            ny += 1
    idx = np.arange(2 ** n, dtype=np.uint64)
    src = idx ^ np.uint64(flip)
    parity = np.bitwise_count(src & np.uint64(sign_mask)) & 1
    phase = (1j ** ny) * np.where(parity, -1.0, 1.0)
    return phase * s.amplitudes[src]


def expectation(s: StateVector, h: PauliSum) -> float:
    """<psi|H|psi> for a Hermitian Pauli sum."""
    if h.n_qubits != s.n_qubits:
        raise ValueError("operator size does not match state")
    val = 0j
    for coeff, string in h.terms:
        val += coeff * np.vdot(s.amplitudes, apply_pauli_string(s, string))
    if abs(val.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary residue {val.imag:.3e}; "
                         "operator is not Hermitian on this state")
    return float(val.real)


def apply_pauli_sum(s: StateVector, h: PauliSum) -> np.ndarray:
    """Raw amplitudes of H|psi> (not normalized)."""
    out = np.zeros_like(s.amplitudes)
    for coeff, string in h.terms:
        out += coeff * apply_pauli_string(s, string)
    return out


def sample_indices(s: StateVector, M: int, rng: np.random.Generator) -> np.ndarray:
    """M basis-index draws from |amplitude|^2 via inverse CDF, one uniform each."""
    if M < 1:
        raise ValueError("need at least one shot")
    cum = np.cumsum(s.probabilities())
    cum /= cum[-1]
    return np.searchsorted(cum, rng.random(M), side="right")


def sample_z(s: StateVector, M: int, rng: np.random.Generator) -> list[SpinConfiguration]:
    """M independent Z-basis measurement outcomes as spin configurations."""
    n = s.n_qubits
    return [SpinConfiguration.from_index(int(i), n) for i in sample_indices(s, M, rng)]


def rotate_to_x_basis(s: StateVector) -> StateVector:
    """Hadamard on every qubit; Z-sampling the result measures X."""
    n = s.n_qubits
    amps = s.amplitudes
    for k in range(n):
        tensor = amps.reshape(2 ** (n - 1 - k), 2, 2 ** k)
        plus = (tensor[:, 0, :] + tensor[:, 1, :]) / np.sqrt(2.0)
        minus = (tensor[:, 0, :] - tensor[:, 1, :]) / np.sqrt(2.0)
        amps = np.stack([plus, minus], axis=1).reshape(amps.size)
    return StateVector(amps)


_BASIS_ROT = {
    "Z": np.eye(2, dtype=complex),
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0),
    # S^dagger then Hadamard maps Y-eigenstates onto the Z basis
    "Y": (np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0))
         @ np.diag([1.0, -1.0j]),
}


def rotate_to_basis(s: StateVector, basis: str) -> StateVector:
    """Per-qubit basis rotation; basis[k] in ZXY names qubit k's measurement."""
    if len(basis) != s.n_qubits:
        raise ValueError("basis string must cover every qubit")
    amps = s.amplitudes
    for k, b in enumerate(basis):
        if b == "Z":
            continue
        amps = _apply_single_qubit(amps, s.n_qubits, k, _BASIS_ROT[b])
    return StateVector(amps)


def exact_spectrum(h: PauliSum, k: int = 1) -> list[tuple[float, StateVector]]:
    """k lowest eigenpairs of the dense Hermitian matrix, ascending.

    Eigenvector signs are fixed so the first amplitude above 1e-8 in
    magnitude is positive real.
    """
    if h.n_qubits > MAX_DENSE_QUBITS:
        raise CapacityError(f"dense spectrum capped at {MAX_DENSE_QUBITS} qubits")
    mat = h.dense()
    if not np.allclose(mat, mat.conj().T, atol=1e-10):
        raise ValueError("sum is not Hermitian")
    vals, vecs = np.linalg.eigh(mat)
    pairs = []
    for i in range(min(k, vals.size)):
        v = vecs[:, i]
        nz = np.flatnonzero(np.abs(v) > 1e-8)[0]
        v = v * (np.abs(v[nz]) / v[nz])
        pairs.append((float(vals[i]), StateVector(v)))
    return pairs


def ground_state(h: PauliSum) -> tuple[float, StateVector]:
    return exact_spectrum(h, 1)[0]


def _split_diagonal_x(h: PauliSum) -> tuple[PauliSum, PauliSum]:
    """Split into a Z/I-diagonal part and a sum of single-qubit X terms."""
    diag, xpart = [], []
    for coeff, string in h.terms:
        if set(string.letters) <= {"I", "Z"}:
            diag.append((coeff, string))
        elif (len(string.support()) == 1
              and string.letters[string.support()[0]] == "X"):
            xpart.append((coeff, string))
        else:
            raise ValueError("trotter split needs diagonal + single-X terms only")
    return (PauliSum.from_terms(h.n_qubits, diag),
            PauliSum.from_terms(h.n_qubits, xpart))


def diagonal_values(h: PauliSum) -> np.ndarray:
    """Diagonal of a Z/I-only sum as a real vector over basis indices."""
    n = h.n_qubits
    idx = np.arange(2 ** n, dtype=np.uint64)
    out = np.zeros(2 ** n, dtype=float)
    for coeff, string in h.terms:
        if not set(string.letters) <= {"I", "Z"}:
            raise ValueError("sum is not diagonal")
        parity = np.bitwise_count(idx & np.uint64(string.mask())) & 1
        out += coeff.real * np.where(parity, -1.0, 1.0)
    return out


def evolve(s: StateVector, h: PauliSum, t: float, method: str = "exact",
           steps: int = 1) -> StateVector:
    """exp(-i H t)|psi> by dense exponential or first-order splitting.

    ``method="trotter"`` alternates exp(-i H_1 t/steps) exp(-i H_2 t/steps)
    where H_1 is the Z-diagonal part and H_2 the transverse-X part; the sum
    must decompose that way.
    """
    if method == "exact":
        if s.n_qubits > MAX_DENSE_QUBITS:
            raise CapacityError(
                f"exact evolution capped at {MAX_DENSE_QUBITS} qubits")
        vals, vecs = np.linalg.eigh(h.dense())
        amps = vecs @ (np.exp(-1j * vals * t) * (vecs.conj().T @ s.amplitudes))
        return StateVector(amps)
    if method == "trotter":
        if steps < 1:
            raise ValueError("steps must be positive")
        diag, xpart = _split_diagonal_x(h)
        dt = t / steps
        dphase = np.exp(-1j * dt * diagonal_values(diag))
        gates = []
        for coeff, string in xpart.terms:
            a = coeff.real * dt
            gates.append((string.support()[0],
                          np.array([[np.cos(a), -1j * np.sin(a)],
                                    [-1j * np.sin(a), np.cos(a)]])))
        amps = s.amplitudes
        for _ in range(steps):
            amps = amps * dphase
            for k, gate in gates:
                amps = _apply_single_qubit(amps, s.n_qubits, k, gate)
        return StateVector(amps)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Debug dump format: u64 little-endian qubit count + little-endian complex128
# ---------------------------------------------------------------------------

def dump_state(s: StateVector, fh: BinaryIO) -> None:
    fh.write(struct.pack("<Q", s.n_qubits))
    fh.write(s.amplitudes.astype("<c16").tobytes())


def load_state(fh: BinaryIO) -> StateVector:
    (n,) = struct.unpack("<Q", fh.read(8))
    amps = np.frombuffer(fh.read(16 * 2 ** n), dtype="<c16")
    return StateVector(amps.astype(complex))
