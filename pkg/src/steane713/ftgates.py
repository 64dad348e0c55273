"""Fault-tolerant logical gate layer: bitwise Cliffords and injected T gates.

Composite letters expand left to right in temporal order: A applies H, then
the phase gate, then T; B applies H then T.  The T gate consumes an encoded
theta resource block: a transversal CNOT with the resource as control writes
the data onto it, the original data block is measured out in the Z basis, and
the branch with error-corrected logical outcome 0 carries T applied to the
logical state on the surviving (relabeled) block.
"""

from __future__ import annotations

import numpy as np

from . import ancilla, code713, sim
from .circuits import Branch, Program, run_program
from .sim import PureState

COMPOSITE_GATES = {"A": ("H_L", "S_L", "T_L"), "B": ("H_L", "T_L")}
FULL_SEQUENCE = "ABBBAAAABBABABABBBAA"
DEFAULT_SEQUENCE = "ABBB"

IDEAL_1Q = {
    "H_L": sim.GATE_MATRICES["H"],
    "S_L": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T_L": sim.GATE_MATRICES["T"],
}


def expand_sequence(seq: str) -> list[str]:
    """Primitive logical gates of a composite-letter sequence."""
    out: list[str] = []
    for letter in seq:
        if letter not in COMPOSITE_GATES:
            raise ValueError(
                f"unknown composite letter {letter!r}; sequences use A and B only"
            )
        out.extend(COMPOSITE_GATES[letter])
    return out


def clifford_program(which: str) -> Program:
    """Bitwise logical Clifford layer as a unit program."""
    if which not in ("H_L", "S_L"):
        raise ValueError(f"unknown bitwise logical gate {which!r}")
    prog = Program(start_width=7, name=which)
    for name, qubits in code713.transversal("H" if which == "H_L" else "S_L"):
        prog.gate(name, *qubits)
    return prog


def t_program(postselect: bool = True) -> Program:
    """T-gate unit: theta preparation, coupling, data readout, relabel.

    After the data qubits are measured out, the surviving resource block
    shifts down into the data positions; the relabeling is pure bookkeeping.
    """
    prog = Program(start_width=7, name="T_L")
    prog.prep(ancilla.theta_circuit(), note="theta")
    for q in range(7):
        prog.gate("CNOT", q + 7, q)
    accept = code713.accept_logical_zero if postselect else None
    prog.measure(tuple(range(7)), accept, label="tmeas")
    return prog


def apply_clifford(state: PureState, which: str) -> PureState:
    """Noiseless bitwise logical Clifford on a 7-qubit block."""
    prog = clifford_program(which)
    batch = state.amplitudes[None, :].copy()
    for step in prog.steps:
        sim.apply_named(batch, 7, step.name, step.qubits)
    return PureState(7, batch[0])


def apply_t(
    state: PureState,
    theta: ancilla.VerifiedAncilla | None = None,
    *,
    postselect: bool = True,
):
    """Inject a T gate; returns (probability, state, logical outcome) branches.

    With postselection only the outcome-0 branch survives.  Without it the
    outcome-1 branch is also returned, uncorrected; applying the logical X
    then the logical phase gate to it reproduces the T-gate result.
    """
    if theta is None:
        theta = ancilla.theta_state()
    joint = sim.tensor(state, theta.state)
    prog = Program(start_width=14, name="T_L_functional")
    for q in range(7):
        prog.gate("CNOT", q + 7, q)
    prog.measure(tuple(range(7)), None, label="tmeas")
    merged: list[list] = []   # [outcome, prob, unit_direction]
    for br in run_program(prog, joint.amplitudes[None, :], record=True):
        bits = dict(br.records)["tmeas"]
        outcome = code713.logical_measure_z(bits)
        if postselect and outcome != 0:
            continue
        prob = br.mass()
        direction = br.amps[0] / np.sqrt(prob)
        for entry in merged:
            if entry[0] == outcome and abs(np.vdot(entry[2], direction)) ** 2 > 1 - 1e-10:
                entry[1] += prob
                break
        else:
            merged.append([outcome, prob, direction])
    return [(prob, PureState(7, vec), outcome) for outcome, prob, vec in merged]


def t_outcome1_correction(state: PureState) -> PureState:
    """Logical fixup turning the outcome-1 branch into the T-gate result."""
    fixed = state
    for q in range(7):
        fixed = sim.apply_gate(fixed, "X", q)
    return apply_clifford(fixed, "S_L")


def ideal_shadow(gates: list[str], initial: np.ndarray) -> np.ndarray:
    """Ideal 1-qubit state after a primitive gate list."""
    v = np.asarray(initial, dtype=complex).copy()
    for g in gates:
        v = IDEAL_1Q[g] @ v
    return v
