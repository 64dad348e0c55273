"""Nonequiprobable Pauli error model: fault sites, pattern weights, sampling.

Every gate, initialization, and measurement op exposes one fault site per
participating qubit (two for a CNOT); discards never fault.  Pattern weights
are exact products over sites; enumeration is truncated at a configurable
event count with the neglected probability mass reported as a residual bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .circuits import CircuitOp
from .sim import PureState, apply_gate

PAULIS = ("X", "Y", "Z")


class PatternSizeError(Exception):
    """Enumeration would exceed the configured pattern cap."""


@dataclass(frozen=True)
class ErrorProbabilities:
    """Per-site probabilities of each Pauli error."""

    px: float
    py: float
    pz: float

    def __post_init__(self) -> None:
        for name, p in (("px", self.px), ("py", self.py), ("pz", self.pz)):
            if p < 0:
                raise ValueError(f"{name} must be nonnegative, got {p}")
        if self.px + self.py + self.pz > 1.0:
            raise ValueError("px + py + pz exceeds 1")

    @property
    def quiet(self) -> float:
        """Probability that a single site stays error-free."""
        return 1.0 - self.px - self.py - self.pz

    def prob(self, pauli: str) -> float:
        return {"X": self.px, "Y": self.py, "Z": self.pz}[pauli]


@dataclass(frozen=True)
class FaultSite:
    """One (operation, participating qubit) location in an executed stream."""

    op_index: int
    qubit: int


@dataclass(frozen=True)
class ErrorPattern:
    """A set of independent Pauli events with its exact probability weight."""

    events: tuple[tuple[FaultSite, str], ...]
    weight: float

    def __post_init__(self) -> None:
        sites = [ev[0] for ev in self.events]
        if len(set(sites)) != len(sites):
            raise ValueError("at most one event per fault site")


@dataclass(frozen=True)
class TruncationConfig:
    """Pattern-resolution strategy for a run."""

    mode: str = "enumerate"          # 'enumerate' | 'montecarlo'
    max_weight: int = 2
    samples: int = 100_000
    seed: int = 0
    pattern_cap: int = 2_000_000

    def __post_init__(self) -> None:
        if self.mode not in ("enumerate", "montecarlo"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.max_weight < 0:
            raise ValueError("max_weight must be >= 0")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


def enumerate_fault_sites(ops: list[CircuitOp]) -> list[FaultSite]:
    """One site per (op, participating qubit), in execution order.

    ``op_index`` counts every stream entry, discards included, so indices map
    directly back into the stream; discards themselves contribute no site.
    """
    sites: list[FaultSite] = []
    for i, op in enumerate(ops):
        if op.kind == "gate":
            for q in op.qubits:
                sites.append(FaultSite(i, q))
        elif op.kind in ("init", "measure"):
            sites.append(FaultSite(i, op.qubits[0] if op.qubits else -1))
    return sites


def pattern_count(num_sites: int, max_weight: int) -> int:
    return sum(math.comb(num_sites, k) * 3**k for k in range(max_weight + 1))


def pattern_weight(
    events: tuple[tuple[FaultSite, str], ...],
    num_sites: int,
    probs: ErrorProbabilities,
) -> float:
    w = probs.quiet ** (num_sites - len(events))
    for _, pauli in events:
        w *= probs.prob(pauli)
    return w


def enumerate_patterns(
    sites: list[FaultSite],
    probs: ErrorProbabilities,
    max_weight: int,
    pattern_cap: int = 2_000_000,
) -> tuple[list[ErrorPattern], float]:
    """All patterns with at most ``max_weight`` events, plus the residual.

    The residual ``1 - sum(weights)`` upper-bounds the probability mass of the
    neglected higher-weight patterns.  The empty pattern is always included.
    """
    n = len(sites)
    if max_weight > n:
        raise ValueError("max_weight exceeds the number of sites")
    total = pattern_count(n, max_weight)
    if total > pattern_cap:
        raise PatternSizeError(
            f"{total} patterns at weight <= {max_weight} over {n} sites exceeds "
            f"the cap of {pattern_cap}; lower the truncation weight or restrict "
            "the noisy sites"
        )
    patterns: list[ErrorPattern] = []
    mass = 0.0
    for k in range(max_weight + 1):
        for subset in combinations(range(n), k):
            for paulis in product(PAULIS, repeat=k):
                events = tuple((sites[i], p) for i, p in zip(subset, paulis))
                w = pattern_weight(events, n, probs)
                patterns.append(ErrorPattern(events, w))
                mass += w
    return patterns, 1.0 - mass


def sample_pattern(
    sites: list[FaultSite],
    probs: ErrorProbabilities,
    rng: np.random.Generator,
) -> ErrorPattern:
    """Draw one pattern; each site independently suffers none/X/Y/Z.

    The weight field is set to 1: Monte Carlo estimates are unweighted
    averages over samples.
    """
    thresholds = np.cumsum([probs.px, probs.py, probs.pz])
    draws = rng.random(len(sites))
    events = []
    for site, u in zip(sites, draws):
        if u < thresholds[0]:
            events.append((site, "X"))
        elif u < thresholds[1]:
            events.append((site, "Y"))
        elif u < thresholds[2]:
            events.append((site, "Z"))
    return ErrorPattern(tuple(events), 1.0)


def apply_fault(state: PureState, qubit: int, pauli: str) -> PureState:
    """Apply a single Pauli fault to a register qubit."""
    if pauli not in PAULIS:
        raise ValueError(f"fault pauli must be one of {PAULIS}, got {pauli!r}")
    return apply_gate(state, pauli, qubit)
