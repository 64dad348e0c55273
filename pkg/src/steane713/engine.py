"""Run compilation and exact pattern evaluation (reference path).

A run compiles to a chain of *units*, each a self-contained program that
takes the 7-qubit data block in and hands it back out with all ancillae
measured away: one unit per bitwise Clifford layer, per Shor-method generator
readout, per Steane-method syndrome block, and per injected T gate.  Faults
are keyed by global site index; each unit knows its slice of the site table.

Two evaluation paths share this compilation.  The reference path here simply
replays whole patterns through the interpreter and is used for Monte Carlo
sampling, small-circuit oracles, and cross-validation of the fast path in
:mod:`steane713.fastpath`.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import ancilla, code713, ftgates, noise, sim, syndrome
from .circuits import Branch, Measure, Prep, Program, run_program
from .noise import ErrorPattern, ErrorProbabilities, FaultSite

DATA_WIDTH = 7
DATA_DIM = 1 << DATA_WIDTH


@dataclass
class Unit:
    """One compiled stage: optional ancilla sub-program plus a main phase."""

    name: str
    kind: str                      # 'clifford' | 'shor' | 'steane' | 'tgate'
    smkind: str | None             # 'bitflip' | 'phaseflip' for SM units
    program: Program               # full enforced program (Prep first)
    sub: Program | None
    main: Program                  # enforced main phase (width 7 + anc)
    main_open: Program             # main with acceptance deferred to caller
    accept_lookup: np.ndarray | None   # bool over 2**k readout ints
    meas_count: int
    anc_width: int
    support: tuple[int, ...] | None    # shor generator support
    site_offset: int = 0           # global index of this unit's first site
    local_sites: list[tuple[int, int]] = field(default_factory=list)
    sub_site_count: int = 0
    anc0: np.ndarray | None = None     # noiseless verified ancilla (raw branch)
    noisy_sub: bool = True

    @property
    def width(self) -> int:
        return DATA_WIDTH + self.anc_width


def _bits_to_int(bits: tuple[int, ...]) -> int:
    out = 0
    for i, b in enumerate(bits):
        out |= b << i
    return out


def _split_unit(name: str, kind: str, smkind, program: Program, support=None) -> Unit:
    sub = None
    rest = list(program.steps)
    if rest and isinstance(rest[0], Prep):
        sub = rest[0].program
        rest = rest[1:]
    anc_width = sub.final_width() if sub is not None else 0
    main = Program(DATA_WIDTH + anc_width, rest, name=f"{name}:main")
    open_steps = [
        Measure(s.qubits, None, s.label) if isinstance(s, Measure) else s
        for s in rest
    ]
    main_open = Program(DATA_WIDTH + anc_width, open_steps, name=f"{name}:open")
    accept_lookup = None
    meas_count = 0
    for s in rest:
        if isinstance(s, Measure):
            meas_count = len(s.qubits)
            if s.accept is not None:
                k = len(s.qubits)
                accept_lookup = np.array(
                    [
                        s.accept(tuple((i >> j) & 1 for j in range(k)))
                        for i in range(1 << k)
                    ],
                    dtype=bool,
                )
    unit = Unit(
        name=name, kind=kind, smkind=smkind, program=program, sub=sub,
        main=main, main_open=main_open, accept_lookup=accept_lookup,
        meas_count=meas_count, anc_width=anc_width, support=support,
    )
    if sub is not None:
        branches = run_program(sub, None)
        assert len(branches) == 1, f"noiseless {name} ancilla must not branch"
        unit.anc0 = branches[0].amps[0]
    return unit


def build_units(sequence: str, order: str, method: str) -> list[Unit]:
    units: list[Unit] = []
    kinds = syndrome.order_kinds(order)
    t_count = 0
    for g_idx, gate in enumerate(ftgates.expand_sequence(sequence)):
        if gate in ("H_L", "S_L"):
            units.append(
                _split_unit(f"g{g_idx}:{gate}", "clifford", None,
                            ftgates.clifford_program(gate))
            )
        else:
            units.append(
                _split_unit(f"g{g_idx}:T_L", "tgate", None, ftgates.t_program(True))
            )
            t_count += 1
        for b_idx, kind in enumerate(kinds):
            if method == "shor":
                supports = (
                    code713.CODE.z_stabilizer_supports if kind == "bitflip"
                    else code713.CODE.x_stabilizer_supports
                )
                for g in range(3):
                    units.append(
                        _split_unit(
                            f"g{g_idx}:r{b_idx}:{kind}:{g}", "shor", kind,
                            syndrome.shor_generator_program(kind, g, True),
                            support=supports[g],
                        )
                    )
            else:
                units.append(
                    _split_unit(
                        f"g{g_idx}:r{b_idx}:{kind}", "steane", kind,
                        syndrome.steane_block_program(kind, True),
                    )
                )
    return units


@dataclass
class CompiledRun:
    sequence: str
    order: str
    method: str
    initial_state: str
    theta_noisy: bool
    units: list[Unit]
    sites: list[FaultSite]
    noisy_mask: np.ndarray
    initial_vec: np.ndarray
    ideal_final: np.ndarray
    op_stream: list

    @property
    def site_count(self) -> int:
        return len(self.sites)

    def noisy_site_indices(self) -> np.ndarray:
        return np.flatnonzero(self.noisy_mask)

    def unit_of_site(self, global_idx: int) -> tuple[Unit, int, int]:
        """Map a global site index to (unit, local op position, qubit)."""
        for unit in self.units:
            if unit.site_offset <= global_idx < unit.site_offset + len(unit.local_sites):
                pos, qubit = unit.local_sites[global_idx - unit.site_offset]
                return unit, pos, qubit
        raise IndexError(f"site index {global_idx} out of range")


_INITIAL_VECTORS = {
    "0": np.array([1.0, 0.0], dtype=complex),
    "1": np.array([0.0, 1.0], dtype=complex),
    "+": np.array([sim.SQRT_HALF, sim.SQRT_HALF], dtype=complex),
}


def compile_run(
    sequence: str,
    order: str,
    method: str,
    *,
    initial_state: str = "0",
    theta_noisy: bool = True,
    site_filter=None,
) -> CompiledRun:
    """Compile a full run; ``site_filter`` restricts which sites are noisy.

    ``site_filter`` may be None (all sites noisy), a ``(lo, hi)`` half-open
    range of global site indices, or an explicit index collection.
    """
    if initial_state not in _INITIAL_VECTORS:
        raise ValueError(f"initial state must be one of 0, 1, +; got {initial_state!r}")
    units = build_units(sequence, order, method)
    op_stream = []
    offset = 0
    for unit in units:
        unit.site_offset = offset
        unit.local_sites = unit.program.fault_sites()
        if unit.sub is not None:
            sub_ops = unit.sub.op_count()
            unit.sub_site_count = sum(1 for p, _ in unit.local_sites if p < sub_ops)
        offset += len(unit.local_sites)
        op_stream.extend(unit.program.flatten())
    sites = noise.enumerate_fault_sites(op_stream)
    assert len(sites) == offset, "site table out of sync with op stream"

    noisy = np.ones(offset, dtype=bool)
    if not theta_noisy:
        for unit in units:
            if unit.kind == "tgate":
                unit.noisy_sub = False
                n_sub = sum(1 for p, _ in unit.local_sites if p < unit.sub.op_count())
                noisy[unit.site_offset: unit.site_offset + n_sub] = False
    if site_filter is not None:
        allowed = np.zeros(offset, dtype=bool)
        if isinstance(site_filter, tuple) and len(site_filter) == 2:
            allowed[site_filter[0]: site_filter[1]] = True
        else:
            allowed[np.asarray(list(site_filter), dtype=int)] = True
        noisy &= allowed

    shadow = ftgates.ideal_shadow(
        ftgates.expand_sequence(sequence), _INITIAL_VECTORS[initial_state]
    )
    ideal = code713.encode_one_qubit(sim.PureState(1, shadow)).amplitudes
    initial = code713.encode_one_qubit(
        sim.PureState(1, _INITIAL_VECTORS[initial_state])
    ).amplitudes
    return CompiledRun(
        sequence, order, method, initial_state, theta_noisy,
        units, sites, noisy, initial, ideal, op_stream,
    )


# ---------------------------------------------------------------------------
# Reference evaluation: replay whole patterns through the interpreter.
# ---------------------------------------------------------------------------

def _unit_faults(compiled: CompiledRun, events) -> dict[int, dict]:
    by_unit: dict[int, dict[int, list[tuple[int, str]]]] = {}
    index_of = {id(u): i for i, u in enumerate(compiled.units)}
    for site, pauli in events:
        if isinstance(site, (int, np.integer)):
            gidx = int(site)
        else:
            gidx = compiled.sites.index(site)
        unit, pos, qubit = compiled.unit_of_site(gidx)
        by_unit.setdefault(index_of[id(unit)], {}).setdefault(pos, []).append(
            (qubit, pauli)
        )
    return by_unit


def pattern_final_branches(compiled: CompiledRun, events) -> list[np.ndarray]:
    """Final-state branches (unnormalized 128-vectors) of one error pattern.

    ``events`` is an iterable of (global site index | FaultSite, pauli).
    """
    by_unit = _unit_faults(compiled, events)
    branches = [compiled.initial_vec[None, :].copy()]
    for i, unit in enumerate(compiled.units):
        faults = by_unit.get(i)
        nxt: list[np.ndarray] = []
        for amps in branches:
            if faults is None and unit.anc0 is not None:
                start = sim.attach_register(amps, unit.anc0)
                outs = run_program(unit.main, start)
            else:
                outs = run_program(unit.program, amps, faults)
            nxt.extend(br.amps for br in outs)
        branches = [b for b in nxt if sim.batch_mass(b) > 1e-28]
        if not branches:
            return []
    return [b[0] for b in branches]


def pattern_metrics(compiled: CompiledRun, events) -> tuple[float, float]:
    """(fidelity numerator, accepted mass) of one pattern, unweighted."""
    num = 0.0
    mass = 0.0
    for vec in pattern_final_branches(compiled, events):
        num += abs(np.vdot(compiled.ideal_final, vec)) ** 2
        mass += float(np.vdot(vec, vec).real)
    return num, mass


@dataclass
class EnvResult:
    fidelity: float
    accepted_mass: float
    residual: float
    extra: dict = field(default_factory=dict)


def reference_enumerate(
    compiled: CompiledRun,
    probs: ErrorProbabilities,
    max_weight: int,
    pattern_cap: int = 2_000_000,
) -> EnvResult:
    """Exact truncated enumeration by full pattern replay.

    Feasible only for small noisy-site counts; the fast path covers the
    production weight-2 regime.
    """
    idx = compiled.noisy_site_indices()
    fsites = [compiled.sites[i] for i in idx]
    patterns, residual = noise.enumerate_patterns(
        fsites, probs, max_weight, pattern_cap
    )
    back = {id(s): g for s, g in zip(fsites, idx)}
    num = 0.0
    den = 0.0
    for pat in patterns:
        events = [(back[id(site)], pauli) for site, pauli in pat.events]
        n, m = pattern_metrics(compiled, events)
        num += pat.weight * n
        den += pat.weight * m
    fid = num / den if den > 0 else 0.0
    return EnvResult(fid, den, residual, {"patterns": len(patterns)})


def monte_carlo(
    compiled: CompiledRun,
    probs: ErrorProbabilities,
    samples: int,
    seed: int,
) -> EnvResult:
    """Ratio-estimator Monte Carlo over sampled patterns.

    Patterns repeat heavily at small probabilities, so distinct patterns are
    simulated once and weighted by their sample count; the estimate and its
    standard error are identical to the naive per-sample average.
    """
    idx = compiled.noisy_site_indices()
    fsites = [compiled.sites[i] for i in idx]
    global_of = {id(site): int(g) for site, g in zip(fsites, idx)}
    rng = np.random.default_rng(seed)
    tally: Counter = Counter()
    for _ in range(samples):
        pat = noise.sample_pattern(fsites, probs, rng)
        key = tuple((global_of[id(site)], pauli) for site, pauli in pat.events)
        tally[key] += 1
    num_sum = mass_sum = 0.0
    num_sq = mass_sq = cross = 0.0
    for events, count in tally.items():
        n, m = pattern_metrics(compiled, list(events))
        num_sum += count * n
        mass_sum += count * m
        num_sq += count * n * n
        mass_sq += count * m * m
        cross += count * n * m
    fid = num_sum / mass_sum if mass_sum > 0 else 0.0
    # Delta-method standard error of the ratio estimator.
    nbar = num_sum / samples
    mbar = mass_sum / samples
    var_n = num_sq / samples - nbar**2
    var_m = mass_sq / samples - mbar**2
    cov = cross / samples - nbar * mbar
    var_f = (var_n - 2 * fid * cov + fid * fid * var_m) / (samples * mbar**2)
    se = float(np.sqrt(max(var_f, 0.0)))
    return EnvResult(
        fid, mbar, 0.0,
        {"mc_standard_error": se, "distinct_patterns": len(tally)},
    )
