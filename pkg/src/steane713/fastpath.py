"""Weight-truncated pattern evaluation in closed form over unit reductions.

Enumerating weight-2 patterns over a full run means ~10^7..10^9 circuit
replays; replaying each is hopeless.  This module exploits three exact
structural facts instead:

* Units exchange only the 7-qubit data block, so the noiseless remainder of a
  run acts on a branch through two 128x128 Heisenberg-picture matrices: the
  fidelity form B (built back from the ideal final projector) and the
  acceptance form G (built back from identity).  A branch's eventual fidelity
  numerator and accepted mass are single quadratic forms.
* Every ancilla preparation is Clifford (or Clifford after the one T in the
  theta resource), so a faulted preparation collapses to `dead`, a Pauli
  twist of the ideal ancilla, or a 2-coefficient logical combination.
* Pauli twists commute through the coupling/readout phase of a unit in closed
  form: they become readout bit flips plus a residual Pauli on the outgoing
  block.  Faulted units therefore evaluate as re-indexed lookups into the
  unit's noiseless readout-leaf table, never as fresh simulations.

Weight-1 branches that survive their unit are carried forward as weighted
direction classes and paired with later faults the same way, which makes the
whole weight-2 sum a single pass over the unit chain.  Everything here is
cross-validated against the interpreter path in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ancilla as ancilla_mod
from . import code713, sim
from .circuits import Gate, Measure, Program, run_program
from .engine import DATA_DIM, DATA_WIDTH, CompiledRun, EnvResult, Unit
from .noise import PAULIS, ErrorProbabilities

DEAD = None
PRUNE_CLASS_WEIGHT = 1e-22
THETA_DEFAULT = (1 / np.sqrt(2), np.exp(1j * np.pi / 4) / np.sqrt(2))

_X_BIT = {"X": 1, "Y": 1, "Z": 0}
_Z_BIT = {"X": 0, "Y": 1, "Z": 1}


# ---------------------------------------------------------------------------
# Pauli classification of faulted Clifford preparations
# ---------------------------------------------------------------------------

def pauli_match(ref: np.ndarray, psi: np.ndarray, n: int):
    """Find (x, z) with psi proportional to Z^z X^x ref, or None.

    Exact for stabilizer ``ref`` and Clifford-circuit ``psi``; the candidate
    X pattern comes from the support shift and the Z pattern from sign
    patterns on the support.
    """
    supp_ref = np.flatnonzero(np.abs(ref) > 1e-6)
    supp_psi = np.flatnonzero(np.abs(psi) > 1e-6)
    if supp_ref.size != supp_psi.size or supp_ref.size == 0:
        return None
    idx = np.arange(ref.size)
    psi_n = psi / np.linalg.norm(psi)
    ref_n = ref / np.linalg.norm(ref)
    for k in range(supp_ref.size):
        x = int(supp_psi[0]) ^ int(supp_ref[k])
        shifted = ref_n[idx ^ x]
        if not np.array_equal(np.flatnonzero(np.abs(shifted) > 1e-6), supp_psi):
            continue
        ratios = psi_n[supp_psi] / shifted[supp_psi]
        signs = ratios / ratios[0]
        if np.max(np.abs(np.abs(ratios) - np.abs(ratios[0]))) > 1e-7:
            continue
        if np.max(np.abs(signs.imag)) > 1e-7:
            continue
        neg = signs.real < 0
        supp64 = supp_psi.astype(np.int64)
        for z in range(1 << n):
            par = (np.bitwise_count(supp64 & z) & 1).astype(bool)
            if np.array_equal(par ^ par[0], neg):
                flips = (np.bitwise_count(idx & z) & 1).astype(np.int64)
                cand = shifted * (1 - 2 * flips)
                if abs(np.vdot(cand, psi_n)) > 1.0 - 1e-9:
                    return x, z
                break
    return None


def classify_logical(psi: np.ndarray, zero: np.ndarray, one: np.ndarray):
    """Decompose psi as Z^z X^x (a zero + b one); returns (a, b, x, z) | None."""
    codewords = np.flatnonzero((np.abs(zero) + np.abs(one)) > 1e-6)
    supp_psi = np.flatnonzero(np.abs(psi) > 1e-8)
    if supp_psi.size == 0:
        return None
    idx = np.arange(psi.size)
    seen = set()
    for c in codewords:
        x = int(supp_psi[0]) ^ int(c)
        if x in seen:
            continue
        seen.add(x)
        phi = psi[idx ^ x]
        if np.max(np.abs(phi[np.abs(zero) + np.abs(one) < 1e-6])) > 1e-8:
            continue
        for z in range(1 << DATA_WIDTH):
            signs = 1 - 2 * (np.bitwise_count(idx & z) & 1).astype(np.int64)
            w = phi * signs
            a = complex(np.vdot(zero, w))
            b = complex(np.vdot(one, w))
            if np.linalg.norm(w - a * zero - b * one) < 1e-9:
                return a, b, x, z
    return None


# ---------------------------------------------------------------------------
# Reduction entries: (a, b, readout flip mask, out-Pauli x, out-Pauli z)
# ---------------------------------------------------------------------------

def _role_entry(tag, payload, pauli):
    mask = ox = oz = 0
    if tag == "out":
        ox = _X_BIT[pauli] << payload
        oz = _Z_BIT[pauli] << payload
    elif tag == "tail":
        mask = _X_BIT[pauli] << payload
    elif tag == "mid":
        mask = _Z_BIT[pauli] << payload
    elif tag == "cat_h":
        i, data_q = payload
        mask = _X_BIT[pauli] << i
        oz = _Z_BIT[pauli] << data_q
    else:  # pragma: no cover - defensive
        raise KeyError(tag)
    return mask, ox, oz


def _anc_entry(unit: Unit, x: int, z: int):
    """Readout/output effect of a Pauli twist on the verified ancilla."""
    if unit.kind == "shor":
        mapped = 0
        for i in range(4):
            if (x >> i) & 1:
                mapped |= 1 << unit.support[i]
        if unit.smkind == "bitflip":
            return z, 0, mapped
        return z, mapped, 0
    if unit.kind == "steane":
        if unit.smkind == "bitflip":
            return x, 0, z
        return z, x, 0
    if unit.kind == "tgate":
        return x, x, z
    raise KeyError(unit.kind)


def _build_roles(unit: Unit) -> dict[tuple[int, int], tuple]:
    """Map main-phase (op position, qubit) to its commutation role."""
    roles: dict[tuple[int, int], tuple] = {}
    pos = unit.sub.op_count() if unit.sub is not None else 0
    for step in unit.main.steps:
        if isinstance(step, Gate):
            if step.name == "CNOT":
                c, t = step.qubits
                if unit.kind == "clifford":
                    raise AssertionError("clifford layers are single-qubit only")
                if unit.kind == "shor":
                    if unit.smkind == "bitflip":
                        roles[(pos, c)] = ("out", c)
                        roles[(pos, t)] = ("tail", t - DATA_WIDTH)
                    else:
                        roles[(pos, c)] = ("mid", c - DATA_WIDTH)
                        roles[(pos, t)] = ("out", t)
                elif unit.kind == "steane":
                    if unit.smkind == "bitflip":
                        roles[(pos, c)] = ("out", c)
                        roles[(pos, t)] = ("tail", t - DATA_WIDTH)
                    else:
                        roles[(pos, c)] = ("mid", c - DATA_WIDTH)
                        roles[(pos, t)] = ("out", t)
                else:  # tgate: resource block controls, data is measured out
                    roles[(pos, c)] = ("out", c - DATA_WIDTH)
                    roles[(pos, t)] = ("tail", t)
            else:
                q = step.qubits[0]
                if unit.kind == "clifford":
                    roles[(pos, q)] = ("out", q)
                elif unit.kind == "shor":
                    i = q - DATA_WIDTH
                    if unit.smkind == "bitflip":
                        roles[(pos, q)] = ("cat_h", (i, unit.support[i]))
                    else:
                        roles[(pos, q)] = ("tail", i)
                elif unit.kind == "steane":
                    roles[(pos, q)] = ("tail", q - DATA_WIDTH)
                else:  # pragma: no cover
                    raise AssertionError("unexpected 1q gate in tgate main")
            pos += 1
        elif isinstance(step, Measure):
            for i, q in enumerate(step.qubits):
                roles[(pos + i, q)] = ("tail", i)
            pos += len(step.qubits)
    return roles


# ---------------------------------------------------------------------------
# Sub-phase fault resolution (global caches across units and runs)
# ---------------------------------------------------------------------------

_SUB_CACHE: dict = {}


def _fkey(faults: dict[int, list[tuple[int, str]]]) -> tuple:
    return tuple(
        (pos, tuple(sorted(entries))) for pos, entries in sorted(faults.items())
    )


def _resim_pauli(cache_tag: str, program: Program, ref: np.ndarray,
                 faults, n: int):
    """Replay a Clifford sub-program and classify the survivor. DEAD or (x,z)."""
    key = (cache_tag, _fkey(faults))
    if key in _SUB_CACHE:
        return _SUB_CACHE[key]
    branches = run_program(program, None, faults)
    if not branches:
        result = DEAD
    else:
        assert len(branches) == 1, f"{cache_tag}: unexpected branching"
        psi = branches[0].amps[0]
        mass = float(np.vdot(psi, psi).real)
        assert abs(mass - 1.0) < 1e-9, f"{cache_tag}: fractional mass {mass}"
        result = pauli_match(ref, psi, n)
        assert result is not None, f"{cache_tag}: no Pauli classification"
    _SUB_CACHE[key] = result
    return result


def _resim_theta(faults) -> tuple:
    key = ("theta", _fkey(faults))
    if key in _SUB_CACHE:
        return _SUB_CACHE[key]
    branches = run_program(ancilla_mod.theta_circuit(), None, faults)
    assert len(branches) == 1
    psi = branches[0].amps[0]
    zero = code713.logical_state("0").amplitudes
    one = code713.logical_state("1").amplitudes
    result = classify_logical(psi, zero, one)
    assert result is not None, "theta preparation fault escaped classification"
    _SUB_CACHE[key] = result
    return result


class _SteaneSub:
    """Closed-form resolver for faults inside a Steane ancilla preparation.

    Copy preparations are Clifford, so per-copy faults reduce to Pauli twists
    of the encoded copy (classified by cheap 7-qubit replays).  The pairwise
    verification then has a coset structure: the readout flips by a fixed
    pattern and the branch is accepted exactly when that pattern is itself an
    accepted string, in which case the kept copy carries a net Pauli twist.
    """

    def __init__(self, kind: str):
        self.kind = kind
        basis = "0" if kind == "zero" else "+"
        self.copy_prog = ancilla_mod.encoded_copy_circuit(basis)
        self.copy_ops = self.copy_prog.op_count()
        self.copy_ref = code713.logical_state(basis if basis == "0" else "+").amplitudes
        self.basis = basis
        sub = ancilla_mod.steane_circuit(kind)
        for step in sub.steps:
            if isinstance(step, Measure):
                k = len(step.qubits)
                self.accept_lookup = np.array(
                    [step.accept(tuple((i >> j) & 1 for j in range(k)))
                     for i in range(1 << k)],
                    dtype=bool,
                )
        # join-phase roles, positions relative to the sub program
        self.join_roles: dict[tuple[int, int], tuple] = {}
        pos = 2 * self.copy_ops
        join_steps = sub.steps[2:]
        for step in join_steps:
            if isinstance(step, Gate):
                if step.name == "CNOT":
                    c, t = step.qubits
                    if kind == "zero":
                        self.join_roles[(pos, c)] = ("jkept", c)
                        self.join_roles[(pos, t)] = ("jtail", t - DATA_WIDTH)
                    else:
                        self.join_roles[(pos, c)] = ("jmid", c - DATA_WIDTH)
                        self.join_roles[(pos, t)] = ("jkept", t)
                else:  # Hadamard on the verification copy (plus kind)
                    q = step.qubits[0]
                    self.join_roles[(pos, q)] = ("jtail", q - DATA_WIDTH)
                pos += 1
            elif isinstance(step, Measure):
                for i, q in enumerate(step.qubits):
                    self.join_roles[(pos + i, q)] = ("jtail", i)
                pos += len(step.qubits)

    def copy_pauli(self, copy_idx: int, faults: dict):
        local = {
            pos - copy_idx * self.copy_ops: entries for pos, entries in faults.items()
        }
        return _resim_pauli(
            f"copy_{self.basis}", self.copy_prog, self.copy_ref, local, DATA_WIDTH
        )

    def resolve(self, faults: dict):
        """All-sub-fault resolution: DEAD or a kept-ancilla Pauli (x, z)."""
        groups: dict[str, dict] = {"c0": {}, "c1": {}, "join": {}}
        join_effect = [0, 0, 0]     # kept x, kept z, readout flips
        for pos, entries in faults.items():
            if pos < self.copy_ops:
                groups["c0"][pos] = entries
            elif pos < 2 * self.copy_ops:
                groups["c1"][pos] = entries
            else:
                for q, pauli in entries:
                    tag, payload = self.join_roles[(pos, q)]
                    if tag == "jkept":
                        join_effect[0] ^= _X_BIT[pauli] << payload
                        join_effect[1] ^= _Z_BIT[pauli] << payload
                    elif tag == "jtail":
                        join_effect[2] ^= _X_BIT[pauli] << payload
                    else:  # jmid
                        join_effect[2] ^= _Z_BIT[pauli] << payload
        x0 = z0 = x1 = z1 = 0
        if groups["c0"]:
            res = self.copy_pauli(0, groups["c0"])
            if res is DEAD:
                return DEAD
            x0, z0 = res
        if groups["c1"]:
            res = self.copy_pauli(1, groups["c1"])
            if res is DEAD:
                return DEAD
            x1, z1 = res
        xj, zj, flips = join_effect
        if self.kind == "zero":
            total_flip = x0 ^ x1 ^ flips
            kept = (x0 ^ xj, z0 ^ z1 ^ zj)
        else:
            total_flip = z0 ^ z1 ^ flips
            kept = (x0 ^ x1 ^ xj, z0 ^ zj)
        if not self.accept_lookup[total_flip]:
            return DEAD
        return kept


_STEANE_SUBS = {
    "zero": None,
    "plus": None,
}


def _steane_sub(kind: str) -> _SteaneSub:
    if _STEANE_SUBS[kind] is None:
        _STEANE_SUBS[kind] = _SteaneSub(kind)
    return _STEANE_SUBS[kind]


_GHZ4 = None


def _ghz4() -> np.ndarray:
    global _GHZ4
    if _GHZ4 is None:
        v = np.zeros(16, dtype=complex)
        v[0] = v[15] = sim.SQRT_HALF
        _GHZ4 = v
    return _GHZ4


def resolve_sub_faults(unit: Unit, faults: dict):
    """Entry for faults entirely inside a unit's ancilla preparation.

    Returns DEAD, or (a, b, mask, ox, oz) with a/b None for non-T units.
    """
    if unit.kind == "shor":
        res = _resim_pauli("shor", unit.sub, _ghz4(), faults, 4)
        if res is DEAD:
            return DEAD
        mask, ox, oz = _anc_entry(unit, *res)
        return (None, None, mask, ox, oz)
    if unit.kind == "steane":
        res = _steane_sub("zero" if unit.smkind == "phaseflip" else "plus").resolve(
            faults
        )
        if res is DEAD:
            return DEAD
        mask, ox, oz = _anc_entry(unit, *res)
        return (None, None, mask, ox, oz)
    if unit.kind == "tgate":
        a, b, x, z = _resim_theta(faults)
        mask, ox, oz = _anc_entry(unit, x, z)
        return (a, b, mask, ox, oz)
    raise AssertionError(f"unit {unit.name} has no sub phase")


def compose_entries(e1, e2):
    """Combine two independent reduction entries of one unit.

    At most one operand carries resource-combination coefficients (only the
    ancilla preparation of a T unit produces them); main-phase entries always
    carry None and inherit the noiseless coefficients at evaluation time.
    """
    if e1 is DEAD or e2 is DEAD:
        return DEAD
    a1, b1, m1, x1, z1 = e1
    a2, b2, m2, x2, z2 = e2
    assert a1 is None or a2 is None, "two resource-combination entries"
    a, b = (a1, b1) if a1 is not None else (a2, b2)
    return (a, b, m1 ^ m2, x1 ^ x2, z1 ^ z2)


# ---------------------------------------------------------------------------
# The evaluator
# ---------------------------------------------------------------------------

@dataclass
class _UnitLeaves:
    keys: np.ndarray                      # (n_leaves,) readout ints
    acc_rows: dict                        # mask -> row index array
    LA: np.ndarray                        # (n_leaves, C, 128)
    LB: np.ndarray | None                 # tgate only
    L0: np.ndarray                        # noiseless-ancilla leaves
    qcache: dict = field(default_factory=dict)
    nz: np.ndarray | None = None          # (n_leaves, C) support flags


class _ClassTable:
    """Weighted direction classes with proportional-direction merging."""

    def __init__(self, n_envs: int):
        self.dirs: list[np.ndarray] = []
        self.weights: list[np.ndarray] = []
        self.mat = np.zeros((0, DATA_DIM), dtype=complex)

    def __len__(self) -> int:
        return len(self.dirs)

    def insert(self, vec: np.ndarray, weights: np.ndarray,
               ref_dir: np.ndarray, ref_weights: np.ndarray) -> None:
        m = float(np.vdot(vec, vec).real)
        if m < 1e-28:
            return
        w = weights * m
        if w.max() < PRUNE_CLASS_WEIGHT:
            return
        d = vec / np.sqrt(m)
        if abs(np.vdot(ref_dir, d)) ** 2 > 1.0 - 1e-12:
            ref_weights += w
            return
        if self.dirs:
            overlaps = np.abs(self.mat @ d.conj()) ** 2
            hit = int(np.argmax(overlaps))
            if overlaps[hit] > 1.0 - 1e-12:
                self.weights[hit] += w
                return
        self.dirs.append(d)
        self.weights.append(w.copy())
        self.mat = np.vstack([self.mat, d[None, :]])


def _extract_leaves(unit: Unit, cols: np.ndarray, anc: np.ndarray | None):
    start = sim.attach_register(cols, anc) if anc is not None else cols.copy()
    branches = run_program(unit.main_open, start, record=True, merge=True)
    table: dict[int, np.ndarray] = {}
    for br in branches:
        key = 0
        if br.records:
            (_, bits), = br.records
            for i, b in enumerate(bits):
                key |= b << i
        assert key not in table, "non-unique readout branch"
        table[key] = br.amps
    keys = np.array(sorted(table), dtype=np.int64)
    stack = np.stack([table[int(k)] for k in keys], axis=0)
    return keys, stack


class FastEvaluator:
    """Single-pass weight<=2 evaluation of a compiled run over many envs."""

    def __init__(self, compiled: CompiledRun, envs: list[ErrorProbabilities],
                 max_weight: int = 2):
        if max_weight > 2:
            raise ValueError("fast path supports truncation weight <= 2")
        self.c = compiled
        self.envs = envs
        self.K = max_weight
        self.nE = len(envs)
        self.odds = np.array(
            [[p.px / p.quiet, p.py / p.quiet, p.pz / p.quiet] for p in envs]
        )
        self.hard_entries = 0
        self.classes_peak = 0

    # -- chains ------------------------------------------------------------

    def _unit_kraus(self, unit: Unit):
        eye = np.eye(DATA_DIM, dtype=complex)
        start = (
            sim.attach_register(eye, unit.anc0) if unit.anc0 is not None else eye
        )
        return [br.amps for br in run_program(unit.main, start, merge=True)]

    def _build_chains(self):
        units = self.c.units
        N = len(units)
        ideal = self.c.ideal_final
        B = np.outer(ideal, ideal.conj())
        G = np.eye(DATA_DIM, dtype=complex)
        self.B = [None] * (N + 1)
        self.G = [None] * (N + 1)
        self.B[N] = B
        self.G[N] = G
        for u in range(N - 1, -1, -1):
            Bn = np.zeros_like(B)
            Gn = np.zeros_like(G)
            for amps in self._unit_kraus(units[u]):
                ac = amps.conj()
                Bn += ac @ self.B[u + 1] @ amps.T
                Gn += ac @ self.G[u + 1] @ amps.T
            self.B[u] = Bn
            self.G[u] = Gn
        self.rhat = [None] * N
        self.past = np.ones(N + 1)
        r = self.c.initial_vec.copy()
        mass_acc = 1.0
        for u, unit in enumerate(units):
            self.rhat[u] = r.copy()
            self.past[u] = mass_acc
            start = (
                sim.attach_register(r[None, :], unit.anc0)
                if unit.anc0 is not None else r[None, :].copy()
            )
            branches = run_program(unit.main, start, merge=True)
            assert len(branches) == 1, f"noiseless run branches at {unit.name}"
            out = branches[0].amps[0]
            m = float(np.vdot(out, out).real)
            r = out / np.sqrt(m)
            mass_acc *= m
        self.past[N] = mass_acc
        self.num0 = float(np.vdot(self.c.initial_vec,
                                  self.B[0] @ self.c.initial_vec).real)
        self.mass0 = float(np.vdot(self.c.initial_vec,
                                   self.G[0] @ self.c.initial_vec).real)

    # -- per-unit machinery --------------------------------------------------

    def _leaves_for(self, unit: Unit, cols: np.ndarray) -> _UnitLeaves:
        if unit.kind == "tgate":
            zeroL = code713.logical_state("0").amplitudes
            oneL = code713.logical_state("1").amplitudes
            keys, LA = _extract_leaves(unit, cols, zeroL)
            keys_b, LB = _extract_leaves(unit, cols, oneL)
            # align the two leaf tables on the union of readout keys
            all_keys = np.union1d(keys, keys_b)
            la = np.zeros((all_keys.size,) + LA.shape[1:], dtype=complex)
            lb = np.zeros_like(la)
            la[np.searchsorted(all_keys, keys)] = LA
            lb[np.searchsorted(all_keys, keys_b)] = LB
            a0, b0 = THETA_DEFAULT
            leaves = _UnitLeaves(all_keys, {}, la, lb, a0 * la + b0 * lb)
        else:
            keys, L0 = _extract_leaves(unit, cols, unit.anc0)
            leaves = _UnitLeaves(keys, {}, L0, None, L0)
        return leaves

    def _acc_rows(self, unit: Unit, leaves: _UnitLeaves, mask: int) -> np.ndarray:
        rows = leaves.acc_rows.get(mask)
        if rows is None:
            if unit.accept_lookup is None:
                rows = np.arange(leaves.keys.size)
            else:
                rows = np.flatnonzero(unit.accept_lookup[leaves.keys ^ mask])
            leaves.acc_rows[mask] = rows
        return rows

    def _qforms(self, unit: Unit, leaves: _UnitLeaves, u: int, pkey,
                full: bool):
        """Quadratic forms of (leaf, col) pairs under out-Pauli pkey.

        ``full=False`` restricts to column 0 (the reference column), which is
        all that weight-1 terms and same-unit pairs need; the full variant is
        computed only for the singles that pair against carried classes.
        Zero-mass (leaf, col) pairs are skipped, since each class column only
        lights up the readout coset of its own error pattern.
        """
        ck = (pkey, full)
        cached = leaves.qcache.get(ck)
        if cached is not None:
            return cached
        ox, oz = pkey
        Bn, Gn = self.B[u + 1], self.G[u + 1]
        n_leaves, C, _ = leaves.LA.shape
        C_eff = C if full else 1
        if leaves.nz is None:
            leaves.nz = (
                np.abs(leaves.LA).sum(axis=2)
                + (np.abs(leaves.LB).sum(axis=2) if leaves.LB is not None else 0.0)
            ) > 1e-14
        nz = leaves.nz[:, :C_eff]
        rows_l, rows_c = np.nonzero(nz)

        def forms(V):
            flat = V[:, :C_eff, :][rows_l, rows_c]
            flat = sim.apply_pauli_mask(flat, DATA_WIDTH, ox, oz)
            wb = flat @ Bn.T
            wg = flat @ Gn.T
            qb = np.zeros((n_leaves, C_eff))
            qg = np.zeros((n_leaves, C_eff))
            qb[rows_l, rows_c] = np.einsum("ri,ri->r", flat.conj(), wb).real
            qg[rows_l, rows_c] = np.einsum("ri,ri->r", flat.conj(), wg).real
            return flat, wb, wg, qb, qg

        if unit.kind == "tgate":
            fa, _, _, qb_aa, qg_aa = forms(leaves.LA)
            fb, wb_b, wg_b, qb_bb, qg_bb = forms(leaves.LB)
            qb_ab = np.zeros((n_leaves, C_eff), dtype=complex)
            qg_ab = np.zeros((n_leaves, C_eff), dtype=complex)
            qb_ab[rows_l, rows_c] = np.einsum("ri,ri->r", fa.conj(), wb_b)
            qg_ab[rows_l, rows_c] = np.einsum("ri,ri->r", fa.conj(), wg_b)
            cached = ("t", qb_aa, qg_aa, qb_bb, qg_bb, qb_ab, qg_ab)
        else:
            _, _, _, qb, qg = forms(leaves.L0)
            cached = ("p", qb, qg)
        leaves.qcache[ck] = cached
        return cached

    def _entry_values(self, unit: Unit, leaves: _UnitLeaves, u: int, entry,
                      full: bool = True):
        """(num, mass) vectors over the column set for one reduction entry."""
        a, b, mask, ox, oz = entry
        rows = self._acc_rows(unit, leaves, mask)
        q = self._qforms(unit, leaves, u, (ox, oz), full)
        C_eff = leaves.LA.shape[1] if full else 1
        if rows.size == 0:
            return np.zeros(C_eff), np.zeros(C_eff)
        if q[0] == "p":
            return q[1][rows].sum(axis=0), q[2][rows].sum(axis=0)
        if a is None:
            a, b = THETA_DEFAULT
        _, qb_aa, qg_aa, qb_bb, qg_bb, qb_ab, qg_ab = q
        aa, bb = abs(a) ** 2, abs(b) ** 2
        cr = np.conj(a) * b
        num = (aa * qb_aa[rows] + bb * qb_bb[rows]
               + 2 * (cr * qb_ab[rows]).real).sum(axis=0)
        mass = (aa * qg_aa[rows] + bb * qg_bb[rows]
                + 2 * (cr * qg_ab[rows]).real).sum(axis=0)
        return num, mass

    def _entry_vectors(self, unit: Unit, leaves: _UnitLeaves, entry, col: int):
        """Accepted output branch vectors of a faulted unit for one column."""
        a, b, mask, ox, oz = entry
        rows = self._acc_rows(unit, leaves, mask)
        if rows.size == 0:
            return []
        if unit.kind == "tgate":
            if a is None:
                a, b = THETA_DEFAULT
            vecs = a * leaves.LA[rows, col] + b * leaves.LB[rows, col]
        else:
            vecs = leaves.L0[rows, col]
        return list(sim.apply_pauli_mask(vecs, DATA_WIDTH, ox, oz))

    def _single_entry(self, unit: Unit, pos: int, qubit: int, pauli: str,
                      roles: dict):
        sub_ops = unit.sub.op_count() if unit.sub is not None else 0
        if pos < sub_ops:
            return resolve_sub_faults(unit, {pos: [(qubit, pauli)]})
        mask, ox, oz = _role_entry(*roles[(pos, qubit)], pauli)
        return (None, None, mask, ox, oz)

    # -- main pass -----------------------------------------------------------

    def run(self) -> list[EnvResult]:
        self._build_chains()
        c = self.c
        units = c.units
        N = len(units)
        noisy = c.noisy_mask
        nE = self.nE

        w1_num = np.zeros(3)          # summed over noisy sites, per pauli
        w1_mass = np.zeros(3)
        same_num = np.zeros(nE)
        same_mass = np.zeros(nE)
        cross_num = np.zeros(nE)
        cross_mass = np.zeros(nE)

        classes = _ClassTable(nE)
        ref_weights = np.zeros(nE)

        for u, unit in enumerate(units):
            if self.K == 0:
                break
            locs = [
                (pos, q, unit.site_offset + i)
                for i, (pos, q) in enumerate(unit.local_sites)
                if noisy[unit.site_offset + i]
            ]
            if not locs and not len(classes):
                # nothing to evaluate here; the ref-class weight just scales
                # by the unit's noiseless Born mass
                ref_weights = ref_weights * (self.past[u + 1] / self.past[u])
                continue
            cols = np.vstack([self.rhat[u][None, :]] + list(classes.dirs))
            leaves = self._leaves_for(unit, cols)
            roles = _build_roles(unit)
            sub_ops = unit.sub.op_count() if unit.sub is not None else 0
            class_w = (
                np.stack(classes.weights, axis=0)
                if len(classes) else np.zeros((0, nE))
            )
            have_ref_w = bool(ref_weights.any())
            need_full = self.K >= 2 and len(classes) > 0

            # --- singles: weight-1 terms, cross pairs, new branch classes ---
            singles: dict = {}
            new_branches: list = []
            for pos, q, gsite in locs:
                for p_idx, pauli in enumerate(PAULIS):
                    entry = self._single_entry(unit, pos, q, pauli, roles)
                    singles[(pos, q, pauli)] = entry
                    if entry is DEAD:
                        continue
                    nums, masses = self._entry_values(
                        unit, leaves, u, entry, full=need_full
                    )
                    w1_num[p_idx] += self.past[u] * nums[0]
                    w1_mass[p_idx] += self.past[u] * masses[0]
                    if self.K >= 2:
                        o2 = self.odds[:, p_idx]
                        if have_ref_w:
                            cross_num += ref_weights * (o2 * nums[0])
                            cross_mass += ref_weights * (o2 * masses[0])
                        if need_full:
                            cross_num += o2 * (class_w.T @ nums[1:])
                            cross_mass += o2 * (class_w.T @ masses[1:])
                        vecs = self._entry_vectors(unit, leaves, entry, 0)
                        new_branches.append((vecs, self.odds[:, p_idx] * self.past[u]))

            # --- same-unit pairs ---
            if self.K >= 2 and len(locs) > 1:
                pair_scalar: dict = {}
                acc33_num = np.zeros((3, 3))
                acc33_mass = np.zeros((3, 3))

                def pair_eval(entry):
                    if entry is DEAD:
                        return 0.0, 0.0
                    a, b, mask, ox, oz = entry
                    ck = (mask, ox, oz) if a is None else None
                    if ck is not None and ck in pair_scalar:
                        return pair_scalar[ck]
                    nums, masses = self._entry_values(
                        unit, leaves, u, entry, full=False
                    )
                    val = (float(nums[0]), float(masses[0]))
                    if ck is not None:
                        pair_scalar[ck] = val
                    return val

                for ii in range(len(locs)):
                    pos1, q1, _ = locs[ii]
                    sub1 = pos1 < sub_ops
                    for jj in range(ii + 1, len(locs)):
                        pos2, q2, _ = locs[jj]
                        both_sub = sub1 and pos2 < sub_ops
                        for p1 in range(3):
                            e1 = singles[(pos1, q1, PAULIS[p1])]
                            if e1 is DEAD and not both_sub:
                                continue
                            for p2 in range(3):
                                if both_sub:
                                    entry = resolve_sub_faults(
                                        unit,
                                        _merge_faults(
                                            pos1, q1, PAULIS[p1],
                                            pos2, q2, PAULIS[p2],
                                        ),
                                    )
                                else:
                                    e2 = singles[(pos2, q2, PAULIS[p2])]
                                    entry = (
                                        DEAD if e2 is DEAD
                                        else compose_entries(e1, e2)
                                    )
                                if entry is DEAD:
                                    continue
                                n_, m_ = pair_eval(entry)
                                acc33_num[p1, p2] += n_
                                acc33_mass[p1, p2] += m_
                same_num += self.past[u] * np.einsum(
                    "ep,eq,pq->e", self.odds, self.odds, acc33_num
                )
                same_mass += self.past[u] * np.einsum(
                    "ep,eq,pq->e", self.odds, self.odds, acc33_mass
                )

            # --- advance classes and admit the new branches ---
            if self.K >= 2 and u + 1 < N:
                nxt = _ClassTable(nE)
                nxt_ref = ref_weights * (self.past[u + 1] / self.past[u])
                rows0 = self._acc_rows(unit, leaves, 0)
                ref_next = self.rhat[u + 1]
                for ci in range(len(classes)):
                    for row in rows0:
                        nxt.insert(leaves.L0[row, 1 + ci],
                                   classes.weights[ci], ref_next, nxt_ref)
                for vecs, w_new in new_branches:
                    for vec in vecs:
                        nxt.insert(vec, w_new, ref_next, nxt_ref)
                classes = nxt
                ref_weights = nxt_ref
                self.classes_peak = max(self.classes_peak, len(classes))

        return self._finalize(w1_num, w1_mass, same_num, same_mass,
                              cross_num, cross_mass)

    def _finalize(self, w1_num, w1_mass, same_num, same_mass,
                  cross_num, cross_mass) -> list[EnvResult]:
        results = []
        n_noisy = int(self.c.noisy_mask.sum())
        for e, probs in enumerate(self.envs):
            quiet = probs.quiet ** n_noisy
            o = self.odds[e]
            num = self.num0
            mass = self.mass0
            enum_mass = 1.0
            if self.K >= 1:
                num += float(o @ w1_num)
                mass += float(o @ w1_mass)
                s = float(o.sum())
                enum_mass += n_noisy * s
            if self.K >= 2:
                num += same_num[e] + cross_num[e]
                mass += same_mass[e] + cross_mass[e]
                enum_mass += s * s * n_noisy * (n_noisy - 1) / 2.0
            fid = num / mass if mass > 0 else 0.0
            results.append(
                EnvResult(
                    fid, quiet * mass, 1.0 - quiet * enum_mass,
                    {
                        "classes_peak": self.classes_peak,
                        "hard_entries": self.hard_entries,
                    },
                )
            )
        return results


def _merge_faults(pos1, q1, p1, pos2, q2, p2) -> dict:
    faults: dict[int, list] = {}
    faults.setdefault(pos1, []).append((q1, p1))
    faults.setdefault(pos2, []).append((q2, p2))
    return faults


def fast_enumerate(
    compiled: CompiledRun,
    envs: list[ErrorProbabilities],
    max_weight: int = 2,
) -> list[EnvResult]:
    """Weight-truncated enumeration of a compiled run for a batch of envs."""
    return FastEvaluator(compiled, envs, max_weight).run()
