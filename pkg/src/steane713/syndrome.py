"""Syndrome-measurement blocks, order scheduling, and QEC rounds.

Order letters name the error type a block detects: X blocks read the bit-flip
syndrome (Z-type generators), Z blocks the phase-flip syndrome (X-type
generators).  Shor blocks extract one generator at a time with a fresh
verified cat state per generator; Steane blocks read a whole syndrome set
through one fresh verified logical ancilla.  In the headline experiment every
readout is postselected on the trivial syndrome; the non-postselected mode
records syndromes and routes them through decode + recovery instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ancilla, code713, sim
from .circuits import Branch, Measure, Program, run_program
from .sim import PureState

SYNDROME_ORDERS = ("XZXZ", "XZZX", "ZXXZ", "ZXZX")
SMETHODS = ("shor", "steane")

_KIND_OF_LETTER = {"X": "bitflip", "Z": "phaseflip"}


def order_kinds(order: str) -> tuple[str, ...]:
    """Block kinds of a syndrome order, e.g. ZXXZ -> phaseflip, bitflip, ..."""
    order = order.upper()
    if order not in SYNDROME_ORDERS:
        raise ValueError(
            f"unknown syndrome order {order!r}; valid orders: "
            + ", ".join(SYNDROME_ORDERS)
        )
    return tuple(_KIND_OF_LETTER[c] for c in order)


@dataclass(frozen=True)
class SyndromeOutcome:
    kind: str                     # 'bitflip' | 'phaseflip'
    bits: tuple[int, int, int]
    accept: bool


def _parity_accept(bits: tuple[int, ...]) -> bool:
    return sum(bits) & 1 == 0


def shor_generator_program(kind: str, gen_index: int, postselect: bool = True) -> Program:
    """One generator readout via a verified cat state.

    Bit-flip readout: Hadamards put the cat into the even-weight basis, data
    qubits control CNOTs into the cat, and the Z-readout parity is the Z-type
    generator eigenvalue.  Phase-flip readout: cat qubits control CNOTs into
    the data and are read in the X basis.  Either way no cat qubit touches
    more than one data qubit.
    """
    supports = (
        code713.CODE.z_stabilizer_supports if kind == "bitflip"
        else code713.CODE.x_stabilizer_supports
    )
    support = supports[gen_index]
    prog = Program(start_width=7, name=f"shor_{kind}_{gen_index}")
    prog.prep(ancilla.shor_circuit(), note="cat")
    cat = tuple(range(7, 7 + ancilla.SHOR_WIDTH))
    if kind == "bitflip":
        for c in cat:
            prog.gate("H", c)
        for i, q in enumerate(support):
            prog.gate("CNOT", q, cat[i])
    else:
        for i, q in enumerate(support):
            prog.gate("CNOT", cat[i], q)
        for c in cat:
            prog.gate("H", c)
    accept = _parity_accept if postselect else None
    prog.measure(cat, accept, label=f"{kind}:{gen_index}",
                 classify=lambda bits: sum(bits) & 1)
    return prog


def steane_block_program(kind: str, postselect: bool = True) -> Program:
    """One full syndrome set via a verified logical ancilla.

    Bit-flip blocks consume a |+_L> ancilla as the transversal CNOT target;
    X errors on the data copy onto it and show up in the Z readout.  Phase-flip
    blocks consume a |0_L> ancilla as the control; Z errors on the data copy
    back onto it and show up in the X readout.  Both leave any logical data
    state untouched.
    """
    prog = Program(start_width=7, name=f"steane_{kind}")
    if kind == "bitflip":
        prog.prep(ancilla.steane_circuit("plus"), note="plus")
        for q in range(7):
            prog.gate("CNOT", q, q + 7)
        accept = code713.accept_trivial_syndrome("bitflip") if postselect else None
    else:
        prog.prep(ancilla.steane_circuit("zero"), note="zero")
        for q in range(7):
            prog.gate("CNOT", q + 7, q)
        for q in range(7, 14):
            prog.gate("H", q)
        accept = code713.accept_trivial_syndrome("phaseflip") if postselect else None
    prog.measure(tuple(range(7, 14)), accept, label=kind,
                 classify=lambda bits, k=kind: code713.syndrome_of_bits(bits, k))
    return prog


def block_programs(kind: str, method: str, postselect: bool = True) -> list[Program]:
    """The unit programs making up one syndrome block."""
    if method == "shor":
        return [shor_generator_program(kind, g, postselect) for g in range(3)]
    if method == "steane":
        return [steane_block_program(kind, postselect)]
    raise ValueError(f"unknown syndrome method {method!r}; valid: shor, steane")


def _bits_to_syndrome(kind: str, method: str, records: tuple) -> tuple[int, int, int]:
    by_label = dict(records)
    if method == "shor":
        return tuple(by_label[f"{kind}:{g}"] for g in range(3))  # type: ignore[return-value]
    return by_label[kind]


def _run_block(
    state: PureState, kind: str, method: str, postselect: bool, faults=None
):
    """Run one block; returns (prob, state, SyndromeOutcome) branches."""
    work = [Branch(state.amplitudes[None, :].copy(), 7)]
    programs = block_programs(kind, method, postselect)
    offset = 0
    for prog in programs:
        n_ops = prog.op_count()
        local_faults = None
        if faults:
            local_faults = {
                p - offset: entries
                for p, entries in faults.items()
                if offset <= p < offset + n_ops
            }
        nxt: list[Branch] = []
        for br in work:
            for b in run_program(prog, br.amps, local_faults, record=not postselect):
                nxt.append(Branch(b.amps, b.width, br.records + b.records))
        work = nxt
        offset += n_ops
    results = []
    for br in work:
        prob = br.mass()
        st = PureState(7, br.amps[0] / np.sqrt(prob))
        if postselect:
            outcome = SyndromeOutcome(kind, (0, 0, 0), True)
        else:
            bits = _bits_to_syndrome(kind, method, br.records)
            outcome = SyndromeOutcome(kind, bits, bits == (0, 0, 0))
        results.append((prob, st, outcome))
    return results


def shor_sm_block(state: PureState, kind: str, *, postselect: bool = True, faults=None):
    """Functional Shor-method block on a 7-qubit data state."""
    return _run_block(state, kind, "shor", postselect, faults)


def steane_sm_block(state: PureState, kind: str, *, postselect: bool = True, faults=None):
    """Functional Steane-method block on a 7-qubit data state."""
    return _run_block(state, kind, "steane", postselect, faults)


def qec_round(
    state: PureState,
    order: str,
    method: str,
    *,
    postselect: bool = True,
    recover: bool = False,
):
    """Run the four blocks of a syndrome order on a noiseless footing.

    With ``postselect`` every readout is conditioned on the trivial syndrome.
    With ``postselect=False`` all outcomes are kept and, when ``recover`` is
    set, each block's decoded correction is applied before the next block.
    Returns (probability, state, outcomes) triples over the surviving
    branches.
    """
    branches = [(1.0, state, [])]
    for kind in order_kinds(order):
        nxt = []
        for prob, st, log in branches:
            for p2, st2, outcome in _run_block(st, kind, method, postselect):
                if not postselect and recover and outcome.bits != (0, 0, 0):
                    correction = code713.decode_syndrome(outcome.bits, kind)
                    if correction is not None:
                        st2 = sim.apply_gate(st2, correction[0], correction[1])
                nxt.append((prob * p2, st2, log + [outcome]))
        branches = nxt
    return branches
