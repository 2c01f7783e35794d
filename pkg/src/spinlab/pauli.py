"""Pauli-string algebra, fermion-to-qubit mapping, and measurement grouping.

Conventions used throughout:

* A Pauli string is stored as a plain python string over ``IXYZ`` where
  character ``k`` acts on qubit ``k`` (qubit 0 first).  Serialized labels
  use the opposite, human-readable order (qubit ``n-1`` leftmost); see
  :func:`pauli_sum_to_json`.
* Dense matrices follow the usual binary ordering: basis index
  ``i = sum_k b_k 2^k`` with ``b_k`` the bit of qubit ``k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

COEFF_CUTOFF = 1e-12

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

# Single-qubit products a*b -> (phase, result).
_MUL = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis; ``letters[k]`` acts on qubit k."""

    letters: str

    def __post_init__(self):
        if not self.letters or any(c not in "IXYZ" for c in self.letters):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {"I"}

    def support(self) -> tuple[int, ...]:
        """Qubit indices carrying a non-identity letter."""
        return tuple(k for k, c in enumerate(self.letters) if c != "I")

    def mask(self) -> int:
        """Bit mask of the non-identity support."""
        m = 0
        for k, c in enumerate(self.letters):
            if c != "I":
                m |= 1 << k
        return m

    def label(self) -> str:
        """Human-readable label with qubit n-1 leftmost (file convention)."""
        return self.letters[::-1]

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        return cls(label[::-1])

    @classmethod
    def single(cls, n: int, k: int, letter: str) -> "PauliString":
        """One non-identity letter on qubit k of an n-qubit register."""
        if not 0 <= k < n:
            raise IndexError(f"qubit {k} out of range for n={n}")
        return cls("I" * k + letter + "I" * (n - k - 1))

    def dense(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix (qubit 0 = least significant bit)."""
        mats = [_PAULI_MATS[c] for c in reversed(self.letters)]
        return reduce(np.kron, mats)


def multiply(a: PauliString, b: PauliString) -> tuple[complex, PauliString]:
    """Product a*b as (phase, string) with phase in {1, -1, i, -i}."""
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"size mismatch: {a.n_qubits} vs {b.n_qubits}")
    phase = 1 + 0j
    out = []
    for ca, cb in zip(a.letters, b.letters):
        ph, c = _MUL[(ca, cb)]
        phase *= ph
        out.append(c)
    return phase, PauliString("".join(out))


def qubitwise_commute(a: PauliString, b: PauliString) -> bool:
    """True when at every qubit the letters agree or one is identity."""
    return all(ca == "I" or cb == "I" or ca == cb
               for ca, cb in zip(a.letters, b.letters))


@dataclass(frozen=True)
class PauliSum:
    """Weighted sum of Pauli strings on a shared register, kept canonical.

    Canonical means: duplicate strings merged, coefficients below
    ``COEFF_CUTOFF`` dropped, terms sorted by string.  Use
    :meth:`from_terms` to build one.
    """

    n_qubits: int
    terms: tuple[tuple[complex, PauliString], ...]

    @classmethod
    def from_terms(cls, n_qubits: int,
                   terms: Iterable[tuple[complex, PauliString]]) -> "PauliSum":
        acc: dict[str, complex] = {}
        for coeff, string in terms:
            if string.n_qubits != n_qubits:
                raise ValueError("term size does not match register size")
            acc[string.letters] = acc.get(string.letters, 0j) + complex(coeff)
        kept = sorted((s, c) for s, c in acc.items() if abs(c) >= COEFF_CUTOFF)
        return cls(n_qubits, tuple((c, PauliString(s)) for s, c in kept))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def identity_coefficient(self) -> complex:
        for coeff, string in self.terms:
            if string.is_identity:
                return coeff
        return 0j

    def non_identity_terms(self) -> list[tuple[complex, PauliString]]:
        return [(c, s) for c, s in self.terms if not s.is_identity]

    def coefficients_real(self, tol: float = 1e-10) -> bool:
        return all(abs(c.imag) <= tol for c, _ in self.terms)

    def scaled(self, factor: complex) -> "PauliSum":
        return PauliSum.from_terms(self.n_qubits,
                                   [(factor * c, s) for c, s in self.terms])

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if self.n_qubits != other.n_qubits:
            raise ValueError("cannot add sums on different registers")
        return PauliSum.from_terms(self.n_qubits,
                                   list(self.terms) + list(other.terms))

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        """Operator product of two sums (term-by-term Pauli products)."""
        if self.n_qubits != other.n_qubits:
            raise ValueError("cannot multiply sums on different registers")
        out = []
        for ca, sa in self.terms:
            for cb, sb in other.terms:
                ph, s = multiply(sa, sb)
                out.append((ca * cb * ph, s))
        return PauliSum.from_terms(self.n_qubits, out)

    def dense(self) -> np.ndarray:
        dim = 2 ** self.n_qubits
        mat = np.zeros((dim, dim), dtype=complex)
        for coeff, string in self.terms:
            mat += coeff * string.dense()
        return mat


def one_norm(h: PauliSum) -> float:
    """Sum of |coefficient| over the non-identity terms."""
    return float(sum(abs(c) for c, _ in h.non_identity_terms()))


# ---------------------------------------------------------------------------
# Jordan-Wigner mapping
# ---------------------------------------------------------------------------

def _jw_ladder(p: int, n: int, sign: complex) -> PauliSum:
    if not 0 <= p < n:
        raise IndexError(f"mode {p} out of range for n={n}")
    z_tail = "Z" * p
    x_str = PauliString(z_tail + "X" + "I" * (n - p - 1))
    y_str = PauliString(z_tail + "Y" + "I" * (n - p - 1))
    return PauliSum.from_terms(n, [(0.5, x_str), (sign * 0.5j, y_str)])


def jw_annihilation(p: int, n: int) -> PauliSum:
    """Mode-p annihilation operator: (X + iY)_p/2 times the Z parity tail."""
    return _jw_ladder(p, n, +1)


def jw_creation(p: int, n: int) -> PauliSum:
    """Mode-p creation operator: (X - iY)_p/2 times the Z parity tail."""
    return _jw_ladder(p, n, -1)


@dataclass(frozen=True)
class FermionHamiltonian:
    """Second-quantized Hamiltonian given by dense coefficient tables.

    ``one_body[p, q]`` multiplies ``c_p^dag c_q`` and ``two_body[p, q, r, s]``
    multiplies ``c_p^dag c_q^dag c_r c_s`` (operators in that literal order).
    Coefficients are in Hartree; ``one_body`` must be symmetric.
    """

    n_modes: int
    one_body: np.ndarray
    two_body: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.one_body, dtype=float)
        u = np.asarray(self.two_body, dtype=float)
        n = self.n_modes
        if t.shape != (n, n):
            raise ValueError(f"one_body must be {n}x{n}, got {t.shape}")
        if u.shape != (n, n, n, n):
            raise ValueError(f"two_body must be {n}^4, got {u.shape}")
        if not np.allclose(t, t.T, atol=1e-12):
            raise ValueError("one_body table must be symmetric")
        object.__setattr__(self, "one_body", t)
        object.__setattr__(self, "two_body", u)


def map_fermionic(h: FermionHamiltonian) -> PauliSum:
    """Jordan-Wigner image of the full second-quantized Hamiltonian."""
    n = h.n_modes
    create = [jw_creation(p, n) for p in range(n)]
    destroy = [jw_annihilation(p, n) for p in range(n)]
    acc: list[tuple[complex, PauliString]] = []
    for p in range(n):
        for q in range(n):
            t = h.one_body[p, q]
            if t == 0.0:
                continue
            acc.extend((t * c, s) for c, s in (create[p] @ destroy[q]).terms)
    for p in range(n):
        for q in range(n):
            if not np.any(h.two_body[p, q]):
                continue
            pq = create[p] @ create[q]
            if not pq.terms:
                continue
            for r in range(n):
                if not np.any(h.two_body[p, q, r]):
                    continue
                pqr = pq @ destroy[r]
                for s in range(n):
                    u = h.two_body[p, q, r, s]
                    if u == 0.0:
                        continue
                    acc.extend((u * c, st) for c, st in (pqr @ destroy[s]).terms)
    return PauliSum.from_terms(n, acc)


# ---------------------------------------------------------------------------
# Qubit-wise commuting measurement groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementGroups:
    """Partition of the non-identity terms of a sum into co-measurable sets.

    ``groups[g]`` lists term indices into the parent sum; ``bases[g]`` is a
    per-qubit measurement basis string over ``ZXY`` (qubit k at position k,
    defaulting to Z where the group has no support).
    """

    groups: tuple[tuple[int, ...], ...]
    bases: tuple[str, ...]

    @property
    def n_groups(self) -> int:
        return len(self.groups)


def group_qubitwise(h: PauliSum) -> MeasurementGroups:
    """Greedy first-fit grouping over terms sorted by descending |coeff|.

    Every pair inside a group commutes qubit-wise, so one shot record in the
    group's basis measures all its members simultaneously.
    """
    n = h.n_qubits
    indexed = [(i, c, s) for i, (c, s) in enumerate(h.terms) if not s.is_identity]
    order = sorted(indexed, key=lambda t: (-abs(t[1]), t[2].letters))
    group_members: list[list[int]] = []
    group_basis: list[list[str | None]] = []
    for idx, _, string in order:
        placed = False
        for members, basis in zip(group_members, group_basis):
            if all(c == "I" or basis[k] is None or basis[k] == c
                   for k, c in enumerate(string.letters)):
                members.append(idx)
                for k, c in enumerate(string.letters):
                    if c != "I":
                        basis[k] = c
                placed = True
                break
        if not placed:
            basis = [None] * n
            for k, c in enumerate(string.letters):
                if c != "I":
                    basis[k] = c
            group_members.append([idx])
            group_basis.append(basis)
    bases = tuple("".join(c or "Z" for c in basis) for basis in group_basis)
    return MeasurementGroups(tuple(tuple(m) for m in group_members), bases)


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

ORDERING_NOTE = "string[0] is qubit n-1 (leftmost character = highest qubit index)"


class ParseError(ValueError):
    """Malformed input document, with field context in the message."""


def pauli_sum_to_json(h: PauliSum) -> str:
    doc = {
        "ordering": ORDERING_NOTE,
        "n_qubits": h.n_qubits,
        "terms": [{"coeff": [c.real, c.imag], "string": s.label()}
                  for c, s in h.terms],
    }
    return json.dumps(doc, indent=2)


def pauli_sum_from_json(text: str) -> PauliSum:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    try:
        n = int(doc["n_qubits"])
        terms = [(complex(t["coeff"][0], t["coeff"][1]),
                  PauliString.from_label(t["string"]))
                 for t in doc["terms"]]
        return PauliSum.from_terms(n, terms)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ParseError(f"missing or malformed field: {exc}") from exc


def fermion_hamiltonian_to_json(h: FermionHamiltonian) -> str:
    doc = {
        "n_modes": h.n_modes,
        "one_body": h.one_body.tolist(),
        "two_body": h.two_body.tolist(),
    }
    return json.dumps(doc, indent=2)


def fermion_hamiltonian_from_json(text: str) -> FermionHamiltonian:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    for field in ("n_modes", "one_body", "two_body"):
        if field not in doc:
            raise ParseError(f"missing field {field!r}")
    try:
        return FermionHamiltonian(int(doc["n_modes"]),
                                  np.asarray(doc["one_body"], dtype=float),
                                  np.asarray(doc["two_body"], dtype=float))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
