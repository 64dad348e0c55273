"""Noisy ancilla construction and verification.

Shor states are 4-qubit GHZ states built by a CNOT chain and checked by a
parity measurement between the two chain ends; the chain layout matters, since
it is what lets the end-to-end parity check catch every mid-construction X
fault that would otherwise inject a multi-qubit error into the data block.
Steane ancillae are verified pairwise: two encoded copies, a transversal CNOT,
and a full readout of the copy that the dangerous error type propagates onto.
The theta resource for T gates is encoded without verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import code713, sim
from .circuits import Branch, Program, run_program
from .sim import PureState

SHOR_WIDTH = 4


@dataclass
class VerifiedAncilla:
    """Accepted-branch ancilla state with its acceptance probability."""

    state: PureState
    accept_prob: float
    log: dict = field(default_factory=dict)


def shor_circuit() -> Program:
    """GHZ chain on qubits 0-3 plus a parity-check qubit, measured and kept.

    Acceptance is outcome 0 on the check qubit; the four GHZ qubits survive.
    The Hadamards that turn the GHZ state into the measurement-basis form are
    deferred to the syndrome block that consumes the ancilla.
    """
    prog = Program(start_width=0, name="shor")
    for _ in range(5):
        prog.init("0")
    prog.gate("H", 0)
    for q in range(SHOR_WIDTH - 1):
        prog.gate("CNOT", q, q + 1)
    prog.gate("CNOT", 0, 4)
    prog.gate("CNOT", 3, 4)
    prog.measure((4,), lambda bits: bits == (0,), label="shor_verify")
    return prog


def encoded_copy_circuit(basis: str) -> Program:
    """One freshly encoded block: seven inits and the encoder."""
    prog = Program(start_width=0, name=f"copy_{basis}")
    prog.init(basis)
    for _ in range(6):
        prog.init("0")
    code713.encoder_steps(prog)
    return prog


def steane_circuit(kind: str) -> Program:
    """Two encoded copies, transversal CNOT, full readout of one copy.

    kind='zero' builds |0_L>: the kept copy is the CNOT control and the
    verification copy is read in the Z basis, catching the X-type errors that
    would spread into the data block when the ancilla later acts as a CNOT
    control.  kind='plus' builds |+_L>: the verification copy is the control
    and is read in the X basis, catching the Z-type errors that would spread
    into the data when the kept copy later serves as a CNOT target.
    """
    if kind not in ("zero", "plus"):
        raise ValueError(f"unknown steane ancilla kind {kind!r}")
    basis = "0" if kind == "zero" else "+"
    prog = Program(start_width=0, name=f"steane_{kind}")
    prog.prep(encoded_copy_circuit(basis), note="kept")
    prog.prep(encoded_copy_circuit(basis), note="verify")
    if kind == "zero":
        for q in range(7):
            prog.gate("CNOT", q, q + 7)          # kept copy controls
        accept = code713.accept_verification("bitflip")
    else:
        for q in range(7):
            prog.gate("CNOT", q + 7, q)          # verification copy controls
        for q in range(7, 14):
            prog.gate("H", q)                    # X-basis readout
        accept = code713.accept_verification("phaseflip")
    prog.measure(tuple(range(7, 14)), accept, label=f"steane_{kind}_verify")
    return prog


def theta_circuit() -> Program:
    """Encode (|0> + e^{i pi/4} |1>)/sqrt(2); no verification stage."""
    prog = Program(start_width=0, name="theta")
    for _ in range(7):
        prog.init("0")
    prog.gate("H", 0)
    prog.gate("T", 0)
    code713.encoder_steps(prog)
    return prog


def ancilla_program(kind: str) -> Program:
    if kind == "shor":
        return shor_circuit()
    if kind in ("steane_zero", "steane_plus"):
        return steane_circuit(kind.removeprefix("steane_"))
    if kind == "theta":
        return theta_circuit()
    raise ValueError(f"unknown ancilla kind {kind!r}")


def prepare_branches(kind: str, faults=None) -> list[Branch]:
    """Accepted unnormalized branches of a (possibly faulted) preparation."""
    return run_program(ancilla_program(kind), None, faults)


def _single_branch(kind: str) -> VerifiedAncilla:
    branches = prepare_branches(kind)
    assert len(branches) == 1, "noiseless preparation must not branch"
    br = branches[0]
    prob = br.mass()
    state = PureState(br.width, br.amps[0] / np.sqrt(prob))
    return VerifiedAncilla(state, prob, {"kind": kind})


def shor_state() -> VerifiedAncilla:
    """Noiseless verified 4-qubit GHZ state (acceptance probability 1)."""
    return _single_branch("shor")


def steane_ancilla(kind: str) -> VerifiedAncilla:
    """Noiseless verified |0_L> or |+_L> block (kind 'zero' | 'plus')."""
    return _single_branch(f"steane_{kind}")


def theta_state() -> VerifiedAncilla:
    """Noiseless encoded T-gate resource state."""
    return _single_branch("theta")


def weight1_verification_report(kind: str) -> list[dict]:
    """Exhaustive single-fault sweep of an ancilla preparation.

    For every (site, pauli): whether verification accepted the branch and, if
    accepted, whether the surviving state still matches the ideal ancilla.
    The accepted-but-corrupted entries are the verification's blind spots and
    are emitted as a report artifact for regression pinning.
    """
    prog = ancilla_program(kind)
    ideal = _single_branch(kind).state
    report = []
    for pos, qubit in prog.fault_sites():
        for pauli in ("X", "Y", "Z"):
            branches = run_program(prog, None, {pos: [(qubit, pauli)]})
            accept_prob = sum(br.mass() for br in branches)
            entry = {
                "site": pos,
                "qubit": qubit,
                "pauli": pauli,
                "accept_prob": round(accept_prob, 12),
                "detected": accept_prob < 1e-12,
            }
            if branches:
                worst = min(
                    sim.overlap_sq(
                        PureState(br.width, br.amps[0] / np.sqrt(br.mass())), ideal
                    )
                    for br in branches
                )
                entry["ideal_overlap"] = round(worst, 12)
                entry["corrupted"] = worst < 1.0 - 1e-9
            report.append(entry)
    return report


def undetected_weight1_faults(kind: str) -> list[tuple[int, int, str]]:
    """(site, qubit, pauli) triples accepted by verification yet corrupting."""
    return [
        (e["site"], e["qubit"], e["pauli"])
        for e in weight1_verification_report(kind)
        if not e["detected"] and e.get("corrupted", False)
    ]
