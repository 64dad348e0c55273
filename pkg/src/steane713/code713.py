"""The [[7,1,3]] code: generators, encoder, decode table, logical operations.

Qubit indices are 0-based register positions.  The stabilizer supports are the
classic Hamming parity checks; the decode table and the choice of bitwise
phase gate are derived at import time by explicit computation rather than
assumed, so permuting the support list cannot silently break decoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import sim
from .circuits import Program
from .sim import PureState

N_DATA = 7

# Z-type and X-type generator supports (identical sets for this CSS code).
STABILIZER_SUPPORTS: tuple[tuple[int, ...], ...] = (
    (3, 4, 5, 6),
    (1, 2, 5, 6),
    (0, 2, 4, 6),
)
LOGICAL_SUPPORT: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class CodeSpec:
    """Support sets defining the code; both generator types share supports."""

    x_stabilizer_supports: tuple[tuple[int, ...], ...] = STABILIZER_SUPPORTS
    z_stabilizer_supports: tuple[tuple[int, ...], ...] = STABILIZER_SUPPORTS
    logical_x_support: tuple[int, ...] = LOGICAL_SUPPORT
    logical_z_support: tuple[int, ...] = LOGICAL_SUPPORT

    def support_masks(self, kind: str) -> tuple[int, ...]:
        supports = (
            self.z_stabilizer_supports if kind == "bitflip"
            else self.x_stabilizer_supports
        )
        return tuple(sum(1 << q for q in s) for s in supports)


CODE = CodeSpec()

_SUPPORT_MASKS = CODE.support_masks("bitflip")
_LOGICAL_MASK = sum(1 << q for q in LOGICAL_SUPPORT)


def syndrome_of_bits(bits: tuple[int, ...], kind: str = "bitflip") -> tuple[int, int, int]:
    """Three parity bits of a 7-bit readout over the generator supports.

    A Z-basis readout checked against the Z-generator supports exposes X
    errors (kind='bitflip'); an X-basis readout against the X-generator
    supports exposes Z errors (kind='phaseflip').  The supports coincide for
    this code but both paths are kept explicit.
    """
    supports = (
        CODE.z_stabilizer_supports if kind == "bitflip"
        else CODE.x_stabilizer_supports
    )
    return tuple(sum(bits[q] for q in s) & 1 for s in supports)  # type: ignore[return-value]


@lru_cache(maxsize=None)
def decode_table(kind: str = "bitflip") -> dict[tuple[int, int, int], int | None]:
    """Map a 3-bit syndrome to the single faulty qubit (None for trivial).

    Built by brute force: inject each single-qubit error into a classical
    7-bit frame and read the syndrome it produces.
    """
    table: dict[tuple[int, int, int], int | None] = {(0, 0, 0): None}
    for q in range(N_DATA):
        bits = tuple(1 if i == q else 0 for i in range(N_DATA))
        s = syndrome_of_bits(bits, kind)
        if s in table:
            raise RuntimeError("degenerate decode table; supports are invalid")
        table[s] = q
    return table


def decode_syndrome(s: tuple[int, int, int], kind: str):
    """Return the recovery ``(pauli, qubit)`` for a syndrome, or None.

    kind='bitflip' syndromes decode to X corrections, kind='phaseflip' to Z.
    """
    q = decode_table(kind).get(tuple(s))
    if q is None:
        return None
    return ("X" if kind == "bitflip" else "Z", q)


def logical_measure_z(bits) -> int:
    """Error-corrected logical value of a 7-bit Z-basis readout.

    Computes the bit-flip syndrome classically, flips the decode-indicated
    bit when nontrivial, and returns the parity of the corrected string over
    the logical support.
    """
    bits = tuple(int(b) for b in bits)
    corrected = list(bits)
    hit = decode_table("bitflip")[syndrome_of_bits(bits, "bitflip")]
    if hit is not None:
        corrected[hit] ^= 1
    return sum(corrected[q] for q in LOGICAL_SUPPORT) & 1


def logical_measure_x(bits) -> int:
    """Same as :func:`logical_measure_z` for an X-basis readout."""
    bits = tuple(int(b) for b in bits)
    corrected = list(bits)
    hit = decode_table("phaseflip")[syndrome_of_bits(bits, "phaseflip")]
    if hit is not None:
        corrected[hit] ^= 1
    return sum(corrected[q] for q in LOGICAL_SUPPORT) & 1


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------

# Pivot qubit per generator and the fanout pattern, chosen so the circuit is
# the standard 3-Hadamard / 11-CNOT encoder with the input on qubit 0.  The
# input's logical-X representative is {0, 5, 6} = logical_support xor the
# first two generator supports, which avoids every pivot.
_INPUT_FANOUT = (5, 6)
_GENERATOR_PIVOTS = (
    ((0, 2, 4, 6), 2),   # applied first; pivot 2
    ((1, 2, 5, 6), 1),   # pivot 1
    ((3, 4, 5, 6), 3),   # pivot 3
)


def encoder_steps(prog: Program, offset: int = 0) -> None:
    """Append the encoding circuit for one block starting at ``offset``.

    Expects qubit ``offset`` to hold the state to encode and the remaining six
    block qubits to be freshly initialized to |0>.
    """
    for t in _INPUT_FANOUT:
        prog.gate("CNOT", offset + 0, offset + t)
    for support, pivot in _GENERATOR_PIVOTS:
        prog.gate("H", offset + pivot)
        for t in support:
            if t != pivot:
                prog.gate("CNOT", offset + pivot, offset + t)


def encoder_circuit() -> Program:
    """Stand-alone encoder program over a fresh 7-qubit register.

    The caller is expected to have placed the 1-qubit input on qubit 0; when
    run from scratch it encodes |0>.
    """
    prog = Program(start_width=7, name="encoder")
    encoder_steps(prog)
    return prog


def _encode_vector(one_qubit: np.ndarray) -> PureState:
    amps = np.zeros(1 << N_DATA, dtype=complex)
    amps[0] = one_qubit[0]
    amps[1] = one_qubit[1]
    batch = amps[None, :].copy()
    prog = encoder_circuit()
    for step in prog.steps:
        sim.apply_named(batch, N_DATA, step.name, step.qubits)
    return PureState(N_DATA, batch[0])


def encode_one_qubit(state: PureState) -> PureState:
    """Noiseless logical encoding of an arbitrary 1-qubit state."""
    if state.num_qubits != 1:
        raise sim.SimulationError("encode_one_qubit expects a single qubit")
    return _encode_vector(state.amplitudes)


@lru_cache(maxsize=None)
def logical_state(name: str) -> PureState:
    """Reference copies of |0_L>, |1_L>, |+_L>, |-_L> and the T-gate resource.

    'theta' is the encoded (|0> + e^{i pi/4} |1>)/sqrt(2) state.
    """
    vectors = {
        "0": np.array([1.0, 0.0]),
        "1": np.array([0.0, 1.0]),
        "+": np.array([sim.SQRT_HALF, sim.SQRT_HALF]),
        "-": np.array([sim.SQRT_HALF, -sim.SQRT_HALF]),
        "theta": np.array([sim.SQRT_HALF, sim.SQRT_HALF * np.exp(1j * np.pi / 4)]),
    }
    if name not in vectors:
        raise KeyError(f"unknown logical state {name!r}")
    return _encode_vector(np.asarray(vectors[name], dtype=complex))


# ---------------------------------------------------------------------------
# Transversal layers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1)
def phase_gate_name() -> str:
    """Bitwise gate realizing the logical phase gate, picked by self-test.

    Whether S or S_adj applied bitwise implements logical S depends on the
    code's sign conventions, so the choice is measured against the encoded
    1-qubit reference at startup instead of assumed.
    """
    target = encode_one_qubit(
        PureState(1, np.array([sim.SQRT_HALF, 1j * sim.SQRT_HALF]))
    )
    for candidate in ("S", "S_adj"):
        st = logical_state("+").copy()
        batch = st.amplitudes[None, :].copy()
        for q in range(N_DATA):
            sim.apply_1q(batch, N_DATA, candidate, q)
        if abs(np.vdot(target.amplitudes, batch[0])) ** 2 > 1.0 - 1e-9:
            return candidate
    raise RuntimeError("no bitwise phase gate reproduces the logical S")


def transversal(name: str) -> list[tuple[str, tuple[int, ...]]]:
    """Bitwise op list for a logical gate: 'H', 'S_L', or 'CNOT_L'.

    CNOT_L couples block qubits q -> q+7 (control block at the low indices).
    """
    if name == "H":
        return [("H", (q,)) for q in range(N_DATA)]
    if name == "S_L":
        g = phase_gate_name()
        return [(g, (q,)) for q in range(N_DATA)]
    if name == "CNOT_L":
        return [("CNOT", (q, q + N_DATA)) for q in range(N_DATA)]
    raise KeyError(f"unknown transversal gate {name!r}")


def recovery(pauli: str, qubit: int) -> list[tuple[str, tuple[int, ...]]]:
    """Single-Pauli recovery op list."""
    if pauli not in ("X", "Y", "Z"):
        raise ValueError(f"recovery pauli must be X, Y or Z, got {pauli!r}")
    if not 0 <= qubit < N_DATA:
        raise ValueError(f"recovery qubit {qubit} outside the data block")
    return [(pauli, (qubit,))]


def accept_trivial_syndrome(kind: str):
    """Predicate: 7-bit readout has trivial syndrome for the given kind."""
    supports = (
        CODE.z_stabilizer_supports if kind == "bitflip"
        else CODE.x_stabilizer_supports
    )

    def accept(bits: tuple[int, ...]) -> bool:
        return all(sum(bits[q] for q in s) & 1 == 0 for s in supports)

    return accept


def accept_verification(kind: str):
    """Predicate for ancilla verification readouts.

    Requires a trivial syndrome and logical parity 0; valid for both the
    Z-basis check of a |0_L> pair and the X-basis check of a |+_L> pair.
    """
    trivial = accept_trivial_syndrome(kind)

    def accept(bits: tuple[int, ...]) -> bool:
        return trivial(bits) and (sum(bits) & 1) == 0

    return accept


def accept_logical_zero(bits: tuple[int, ...]) -> bool:
    """Error-corrected logical readout equals 0 (T-gate postselection)."""
    return logical_measure_z(bits) == 0
