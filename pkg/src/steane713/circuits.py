"""Circuit programs and their interpreter.

A :class:`Program` is the single source of truth for a circuit fragment: the
same step list drives fault-site enumeration, flattened op-stream export, and
amplitude-level execution.  Registers grow by explicit ``Init`` steps (fresh
qubits attach at the top index) or by ``Prep`` steps that run a sub-program on
its own register and tensor the surviving qubits onto the current one.
Measurements are grouped so acceptance predicates can see all bits of a
readout at once; measured qubits are always discarded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import sim

PRUNE_MASS = 1e-30
MERGE_TOL = 1e-10


@dataclass(frozen=True)
class CircuitOp:
    """One executed operation in the flattened stream."""

    kind: str                      # 'gate' | 'init' | 'measure' | 'discard'
    name: str = ""                 # gate name when kind == 'gate'
    qubits: tuple[int, ...] = ()
    basis: str = "0"               # init basis; measurements are Z-basis
    label: str = ""


@dataclass(frozen=True)
class Init:
    basis: str = "0"


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]


@dataclass(frozen=True)
class Measure:
    """Z-measure ``qubits``, then discard them.

    ``accept`` maps the outcome bit tuple (in listed qubit order) to keep/drop.
    ``accept=None`` keeps every branch; in record mode the outcome is logged
    under ``label``, coarsened through ``classify`` when given so that
    physically equivalent readouts (e.g. same-parity cat strings) merge.
    """

    qubits: tuple[int, ...]
    accept: Callable[[tuple[int, ...]], bool] | None
    label: str = ""
    classify: Callable[[tuple[int, ...]], object] | None = None


@dataclass
class Program:
    """A register-scoped step list.  ``start_width`` qubits exist on entry."""

    start_width: int
    steps: list = field(default_factory=list)
    name: str = ""

    def init(self, basis: str = "0") -> None:
        self.steps.append(Init(basis))

    def gate(self, name: str, *qubits: int) -> None:
        self.steps.append(Gate(name, tuple(qubits)))

    def measure(self, qubits: Sequence[int], accept, label: str = "",
                classify=None) -> None:
        self.steps.append(Measure(tuple(qubits), accept, label, classify))

    def prep(self, program: "Program", note: str = "") -> None:
        self.steps.append(Prep(program, note))

    # -- static structure -------------------------------------------------

    def final_width(self) -> int:
        w = self.start_width
        for s in self.steps:
            if isinstance(s, Init):
                w += 1
            elif isinstance(s, Prep):
                w += s.program.final_width()
            elif isinstance(s, Measure):
                w -= len(s.qubits)
        return w

    def flatten(self) -> list[CircuitOp]:
        """Executed op stream, sub-programs inlined at their execution point."""
        cached = self.__dict__.get("_flat")
        if cached is None:
            ops: list[CircuitOp] = []
            w = self.start_width
            for s in self.steps:
                if isinstance(s, Init):
                    ops.append(CircuitOp("init", qubits=(w,), basis=s.basis))
                    w += 1
                elif isinstance(s, Gate):
                    ops.append(CircuitOp("gate", name=s.name, qubits=s.qubits))
                elif isinstance(s, Prep):
                    ops.extend(s.program.flatten())
                    w += s.program.final_width()
                elif isinstance(s, Measure):
                    for q in s.qubits:
                        ops.append(CircuitOp("measure", qubits=(q,), label=s.label))
                    for q in s.qubits:
                        ops.append(CircuitOp("discard", qubits=(q,)))
                    w -= len(s.qubits)
            cached = self.__dict__["_flat"] = ops
        return cached

    def op_count(self) -> int:
        """Number of fault-bearing op positions (gates, inits, measures)."""
        return sum(1 for op in self.flatten() if op.kind != "discard")

    def fault_sites(self) -> list[tuple[int, int]]:
        """(op position, register-local qubit) pairs eligible for faults.

        Positions index the fault-bearing ops of the flattened stream in
        execution order (discards carry no position).  For ops inside a Prep,
        the qubit index is local to the sub-register; the interpreter applies
        sub faults in that frame.
        """
        cached = self.__dict__.get("_sites")
        if cached is None:
            sites: list[tuple[int, int]] = []
            pos = 0
            w = self.start_width
            for s in self.steps:
                if isinstance(s, Init):
                    sites.append((pos, w))
                    pos += 1
                    w += 1
                elif isinstance(s, Gate):
                    for q in s.qubits:
                        sites.append((pos, q))
                    pos += 1
                elif isinstance(s, Prep):
                    for p, q in s.program.fault_sites():
                        sites.append((pos + p, q))
                    pos += s.program.op_count()
                    w += s.program.final_width()
                elif isinstance(s, Measure):
                    for i, q in enumerate(s.qubits):
                        sites.append((pos + i, q))
                    pos += len(s.qubits)
                    w -= len(s.qubits)
            cached = self.__dict__["_sites"] = sites
        return cached


@dataclass(frozen=True)
class Prep:
    program: Program
    note: str = ""


@dataclass
class Branch:
    """Unnormalized batched amplitudes plus recorded measurement bits."""

    amps: np.ndarray                  # shape (batch, 2**width)
    width: int
    records: tuple = ()               # ((label, bits), ...) when recording

    def mass(self) -> float:
        return sim.batch_mass(self.amps)


def _merge_branches(branches: list[Branch]) -> list[Branch]:
    """Pool branches whose states are proportional (incoherent mixture merge).

    Only branches with identical records merge.  Valid because branch weights
    are classical: pooling masses of proportional pure components leaves every
    quadratic functional of the ensemble unchanged.
    """
    merged: list[Branch] = []
    for br in branches:
        m = br.mass()
        if m < PRUNE_MASS:
            continue
        placed = False
        for kept in merged:
            if kept.records != br.records or kept.width != br.width:
                continue
            km = kept.mass()
            inner = abs(np.vdot(kept.amps, br.amps)) ** 2
            if inner > (1.0 - MERGE_TOL) * km * m:
                kept.amps *= np.sqrt(1.0 + m / km)
                placed = True
                break
        if not placed:
            merged.append(br)
    return merged


def run_program(
    program: Program,
    start: np.ndarray | None,
    faults: dict[int, list[tuple[int, str]]] | None = None,
    *,
    record: bool = False,
    merge: bool = True,
) -> list[Branch]:
    """Execute ``program`` and return the surviving branches, unnormalized.

    ``start`` is the batched entry state of shape (batch, 2**start_width); for
    ``start_width == 0`` pass None.  ``faults`` maps fault-bearing op positions
    (see :meth:`Program.fault_sites`) to ``(qubit, pauli)`` injections: after
    the op for gates and inits, before the projector for measurements.
    """
    faults = faults or {}
    if start is None:
        start = np.ones((1, 1), dtype=complex)
    branches = [Branch(np.array(start, dtype=complex, copy=True), program.start_width)]
    pos = 0

    def inject(entries: list[tuple[int, str]]) -> None:
        for br in branches:
            for q, pauli in entries:
                sim.apply_1q(br.amps, br.width, pauli, q)

    for step in program.steps:
        if isinstance(step, Init):
            for br in branches:
                br.amps = sim.append_qubit(br.amps, step.basis)
                br.width += 1
            if pos in faults:
                inject(faults[pos])
            pos += 1
        elif isinstance(step, Gate):
            for br in branches:
                sim.apply_named(br.amps, br.width, step.name, step.qubits)
            if pos in faults:
                inject(faults[pos])
            pos += 1
        elif isinstance(step, Prep):
            sub_len = step.program.op_count()
            sub_faults = {
                p - pos: entries
                for p, entries in faults.items()
                if pos <= p < pos + sub_len
            }
            sub_branches = run_program(
                step.program, None, sub_faults, record=record, merge=merge
            )
            out: list[Branch] = []
            for br in branches:
                for sb in sub_branches:
                    amps = sim.attach_register(br.amps, sb.amps[0])
                    out.append(
                        Branch(amps, br.width + sb.width, br.records + sb.records)
                    )
            branches = out
            pos += sub_len
        elif isinstance(step, Measure):
            for i, q in enumerate(step.qubits):
                if pos + i in faults:
                    inject(faults[pos + i])
            descending = sorted(step.qubits, reverse=True)
            bit_index = {q: descending.index(q) for q in step.qubits}
            out = []
            for br in branches:
                leaves = [(br.amps, br.width, ())]
                for q in descending:
                    nxt = []
                    for amps, w, bits in leaves:
                        for outcome in (0, 1):
                            sub = sim.project_z_discard(amps, w, q, outcome)
                            if sim.batch_mass(sub) > PRUNE_MASS:
                                nxt.append((sub, w - 1, bits + (outcome,)))
                    leaves = nxt
                for amps, w, bits in leaves:
                    ordered = tuple(bits[bit_index[q]] for q in step.qubits)
                    if step.accept is not None and not step.accept(ordered):
                        continue
                    rec = br.records
                    if record and step.accept is None:
                        logged = (
                            step.classify(ordered) if step.classify else ordered
                        )
                        rec = rec + ((step.label, logged),)
                    out.append(Branch(amps, w, rec))
            branches = _merge_branches(out) if merge else out
            pos += len(step.qubits)
        else:  # pragma: no cover - defensive
            raise TypeError(f"unknown step {step!r}")
        if not branches:
            return []
    return branches
