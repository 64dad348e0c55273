"""Dense pure-state register: gates, tensor products, projective measurement, discard.

Conventions used throughout the package:

* Qubit ``k`` addresses bit ``k`` of the amplitude index, with qubit 0 the
  least-significant bit.  ``tensor(a, b)`` therefore places ``a``'s qubits at
  the low indices.
* Gate phase conventions: ``S = diag(1, i)``, ``T = diag(1, e^{i pi/4})``.
* X-basis measurement is a Hadamard followed by a Z-basis measurement, so a
  single projector code path exists.

The module-level functions operating on raw ``(batch, 2**n)`` arrays are the
engine-facing hot path; :class:`PureState` wraps a single normalized register
for the public API.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT_HALF = 1.0 / np.sqrt(2.0)

GATE_MATRICES: dict[str, np.ndarray] = {
    "H": np.array([[SQRT_HALF, SQRT_HALF], [SQRT_HALF, -SQRT_HALF]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "S_adj": np.array([[1, 0], [0, -1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

SINGLE_QUBIT_GATES = tuple(GATE_MATRICES)
GATE_NAMES = SINGLE_QUBIT_GATES + ("CNOT",)

ADJOINT_NAME = {
    "H": "H", "S": "S_adj", "S_adj": "S", "X": "X", "Y": "Y", "Z": "Z",
    "CNOT": "CNOT",
}
# T has no named adjoint gate here; its inverse is handled via matrices in tests.

_ZERO_MASS = 1e-15


class SimulationError(Exception):
    """Raised on misuse of the register API (bad qubit index, size mismatch)."""


def _check_qubit(n: int, q: int) -> None:
    if not 0 <= q < n:
        raise SimulationError(f"qubit index {q} out of range for {n}-qubit register")


# ---------------------------------------------------------------------------
# Raw batched kernels.  `a` has shape (batch, 2**n); operations are in-place.
# ---------------------------------------------------------------------------

def apply_1q(a: np.ndarray, n: int, name: str, q: int) -> None:
    """Apply a named single-qubit gate to qubit ``q`` of every batch column."""
    view = a.reshape(a.shape[0], 1 << (n - q - 1), 2, 1 << q)
    if name == "X":
        view[:, :, [0, 1], :] = view[:, :, [1, 0], :]
        return
    if name == "Z":
        view[:, :, 1, :] *= -1.0
        return
    if name in ("S", "S_adj", "T"):
        view[:, :, 1, :] *= GATE_MATRICES[name][1, 1]
        return
    m = GATE_MATRICES[name]
    x0 = view[:, :, 0, :]
    x1 = view[:, :, 1, :]
    t0 = m[0, 0] * x0 + m[0, 1] * x1
    t1 = m[1, 0] * x0 + m[1, 1] * x1
    view[:, :, 0, :] = t0
    view[:, :, 1, :] = t1


@lru_cache(maxsize=4096)
def _cnot_index_pairs(n: int, control: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(1 << n)
    sel = (idx >> control) & 1 == 1
    i0 = idx[sel & (((idx >> target) & 1) == 0)]
    return i0, i0 | (1 << target)


def apply_cnot(a: np.ndarray, n: int, control: int, target: int) -> None:
    i0, i1 = _cnot_index_pairs(n, control, target)
    a[:, np.concatenate([i0, i1])] = a[:, np.concatenate([i1, i0])]


def apply_named(a: np.ndarray, n: int, name: str, qubits: tuple[int, ...]) -> None:
    if name == "CNOT":
        apply_cnot(a, n, qubits[0], qubits[1])
    else:
        apply_1q(a, n, name, qubits[0])


def append_qubit(a: np.ndarray, basis: str) -> np.ndarray:
    """Attach one fresh qubit at the top index, prepared in |0> or |+>."""
    if basis == "0":
        v = np.array([1.0, 0.0], dtype=complex)
    elif basis == "+":
        v = np.array([SQRT_HALF, SQRT_HALF], dtype=complex)
    else:
        raise SimulationError(f"unknown init basis {basis!r}")
    return np.einsum("mi,j->mji", a, v).reshape(a.shape[0], -1)


def attach_register(a: np.ndarray, sub: np.ndarray) -> np.ndarray:
    """Tensor a single sub-register state (1D) onto every batch column, high side."""
    return np.einsum("mi,j->mji", a, sub).reshape(a.shape[0], -1)


def project_z_discard(a: np.ndarray, n: int, q: int, outcome: int) -> np.ndarray:
    """Project qubit ``q`` onto ``outcome`` in the Z basis and drop the qubit.

    Returns the unnormalized collapsed array of width ``n - 1``.
    """
    view = a.reshape(a.shape[0], 1 << (n - q - 1), 2, 1 << q)
    return np.ascontiguousarray(view[:, :, outcome, :]).reshape(a.shape[0], -1)


def batch_mass(a: np.ndarray) -> float:
    return float(np.sum(np.abs(a) ** 2))


# ---------------------------------------------------------------------------
# Public single-state API
# ---------------------------------------------------------------------------

@dataclass
class PureState:
    """A normalized pure state over ``num_qubits`` qubits."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise SimulationError(
                f"amplitude vector of length {self.amplitudes.shape} does not match "
                f"{self.num_qubits} qubits"
            )

    @classmethod
    def zero(cls, num_qubits: int) -> "PureState":
        amps = np.zeros(1 << num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def from_amplitudes(cls, amps) -> "PureState":
        amps = np.asarray(amps, dtype=complex)
        n = int(round(np.log2(amps.size)))
        if 1 << n != amps.size:
            raise SimulationError("amplitude vector length is not a power of two")
        return cls(n, amps.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        return PureState(self.num_qubits, self.amplitudes / self.norm())

    def copy(self) -> "PureState":
        return PureState(self.num_qubits, self.amplitudes.copy())


def apply_gate(state: PureState, name: str, *qubits: int) -> PureState:
    """Return ``state`` transformed by the named gate.

    ``CNOT`` takes (control, target); all other gates take one qubit index.
    """
    if name not in GATE_NAMES:
        raise SimulationError(f"unknown gate {name!r}")
    if name == "CNOT":
        if len(qubits) != 2 or qubits[0] == qubits[1]:
            raise SimulationError("CNOT needs two distinct qubits")
    elif len(qubits) != 1:
        raise SimulationError(f"{name} takes exactly one qubit")
    for q in qubits:
        _check_qubit(state.num_qubits, q)
    a = state.amplitudes[None, :].copy()
    apply_named(a, state.num_qubits, name, tuple(qubits))
    return PureState(state.num_qubits, a[0])


def tensor(a: PureState, b: PureState) -> PureState:
    """Kronecker product with ``a``'s qubits at the low amplitude indices."""
    return PureState(a.num_qubits + b.num_qubits, np.kron(b.amplitudes, a.amplitudes))


def project(state: PureState, qubit: int, basis: str, outcome: int):
    """Born-rule projection of one qubit.

    Returns ``(prob, post_state)``; ``post_state`` is None when the outcome
    probability is below 1e-15 (flagged-empty branch).
    """
    _check_qubit(state.num_qubits, qubit)
    if basis not in ("Z", "X"):
        raise SimulationError(f"unknown measurement basis {basis!r}")
    work = state.copy()
    if basis == "X":
        work = apply_gate(work, "H", qubit)
    n = work.num_qubits
    view = work.amplitudes.reshape(1 << (n - qubit - 1), 2, 1 << qubit)
    keep = view[:, outcome, :].copy()
    prob = float(np.sum(np.abs(keep) ** 2))
    if prob < _ZERO_MASS:
        return 0.0, None
    view[:, 1 - outcome, :] = 0.0
    post = PureState(n, work.amplitudes / np.sqrt(prob))
    if basis == "X":
        post = apply_gate(post, "H", qubit)
    return prob, post


def discard(state: PureState, qubit: int) -> PureState:
    """Remove a qubit that is in a computational product state.

    Aborts (raises) when the qubit is entangled or in superposition, since
    discarding it would not leave a pure state.
    """
    _check_qubit(state.num_qubits, qubit)
    n = state.num_qubits
    view = state.amplitudes.reshape(1 << (n - qubit - 1), 2, 1 << qubit)
    m0 = float(np.sum(np.abs(view[:, 0, :]) ** 2))
    m1 = float(np.sum(np.abs(view[:, 1, :]) ** 2))
    if min(m0, m1) > 1e-20:
        raise SimulationError(f"discarding entangled/superposed qubit {qubit}")
    keep = view[:, 0 if m0 >= m1 else 1, :]
    return PureState(n - 1, np.ascontiguousarray(keep).reshape(-1))


def overlap_sq(a: PureState, b: PureState) -> float:
    """|<a|b>|^2 for equal-width registers."""
    if a.num_qubits != b.num_qubits:
        raise SimulationError("overlap of registers with different widths")
    return float(np.abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def pauli_string_indices(n: int, xmask: int, zmask: int):
    """Index permutation and sign vector of the Pauli Z^z X^x on n qubits.

    Acting on basis state ``|i>`` gives ``(-1)^{z.(i^x)} |i ^ x>`` (Y phases
    are dropped; only used where global phase per branch is irrelevant).
    """
    idx = np.arange(1 << n)
    src = idx ^ xmask
    signs = 1 - 2 * (np.bitwise_count(idx & zmask) & 1).astype(np.int64)
    return src, signs.astype(float)


def apply_pauli_mask(a: np.ndarray, n: int, xmask: int, zmask: int) -> np.ndarray:
    """Apply Z^zmask X^xmask to batched amplitudes (global phase dropped)."""
    if xmask == 0 and zmask == 0:
        return a
    src, signs = pauli_string_indices(n, xmask, zmask)
    return a[:, src] * signs
