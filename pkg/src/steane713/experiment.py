"""The headline experiment: environment grid, runs, comparisons, sweeps.

Every run postselects all syndrome readouts, verifications, and T-gate
logical outcomes, then reports the conditional fidelity of the final state
against the ideal sequence result, together with the accepted probability
mass and (for truncated enumeration) an upper bound on the neglected
probability mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import code713, engine, fastpath, ftgates, syndrome
from .noise import ErrorProbabilities, TruncationConfig, pattern_count

GRID_PROBS = (1e-10, 1e-8, 1e-6, 1e-4)
DEFAULT_PZ = 1e-10
LOG_INFIDELITY_CAP = 15.0


@dataclass(frozen=True)
class Environment:
    """One error environment; grid cells sweep (px, py) with px fastest."""

    probs: ErrorProbabilities
    grid_index: int = 0      # 1..16 on the standard grid, 0 off-grid


def grid_environments(pz: float = DEFAULT_PZ) -> list[Environment]:
    """The 16-cell (px, py) grid; cell 1 is px = py = 1e-10."""
    envs = []
    for iy, py in enumerate(GRID_PROBS):
        for ix, px in enumerate(GRID_PROBS):
            envs.append(
                Environment(ErrorProbabilities(px, py, pz), 1 + ix + 4 * iy)
            )
    return envs


def environment_for(px: float, py: float, pz: float) -> Environment:
    """Wrap probabilities, recovering the grid index when on-grid."""
    probs = ErrorProbabilities(px, py, pz)
    for env in grid_environments(pz):
        if (env.probs.px, env.probs.py) == (px, py):
            return Environment(probs, env.grid_index)
    return Environment(probs, 0)


@dataclass
class RunConfig:
    sequence: str = ftgates.DEFAULT_SEQUENCE
    order: str = "ZXXZ"
    method: str = "shor"
    env: Environment = field(
        default_factory=lambda: Environment(
            ErrorProbabilities(1e-10, 1e-10, DEFAULT_PZ), 1
        )
    )
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    seed: int = 0
    initial_state: str = "0"
    theta_noisy: bool = True
    site_filter: object = None
    engine_mode: str = "auto"    # 'auto' | 'fast' | 'reference'

    def validate(self) -> None:
        syndrome.order_kinds(self.order)
        if self.method not in syndrome.SMETHODS:
            raise ValueError(
                f"unknown method {self.method!r}; valid: shor, steane"
            )
        ftgates.expand_sequence(self.sequence)


@dataclass
class RunResult:
    fidelity: float
    log_infidelity: float
    accepted_mass: float
    residual_bound: float
    fault_site_count: int
    config: RunConfig
    metadata: dict = field(default_factory=dict)


def log_infidelity(fidelity: float) -> float:
    """-log10(1 - F), capped where 1 - F underflows."""
    gap = 1.0 - fidelity
    if gap < 1e-15:
        return LOG_INFIDELITY_CAP
    return min(-math.log10(gap), LOG_INFIDELITY_CAP)


def _conventions() -> dict:
    return {
        "qubit_order": "qubit 0 is the least significant amplitude index",
        "fault_timing": "after gates and initializations, before projectors",
        "phase_gate": code713.phase_gate_name(),
        "composite_order": "letters apply left to right in time (A: H,S,T)",
        "generator_order": "sequential in CodeSpec listing order",
        "shor_fanout": "CNOT chain with end-to-end parity verification",
        "steane_sm_ancilla": "bitflip uses |+_L> target, phaseflip |0_L> control",
    }


def _result_from_env(
    config: RunConfig, compiled: engine.CompiledRun, res: engine.EnvResult,
    mode: str,
) -> RunResult:
    meta = {"engine": mode, "conventions": _conventions(),
            "noisy_sites": int(compiled.noisy_mask.sum())}
    meta.update(res.extra)
    return RunResult(
        fidelity=res.fidelity,
        log_infidelity=log_infidelity(res.fidelity),
        accepted_mass=res.accepted_mass,
        residual_bound=res.residual,
        fault_site_count=compiled.site_count,
        config=config,
        metadata=meta,
    )


def run(config: RunConfig) -> RunResult:
    """Execute one configuration and report its metrics."""
    config.validate()
    compiled = engine.compile_run(
        config.sequence, config.order, config.method,
        initial_state=config.initial_state,
        theta_noisy=config.theta_noisy,
        site_filter=config.site_filter,
    )
    trunc = config.truncation
    if trunc.mode == "montecarlo":
        res = engine.monte_carlo(
            compiled, config.env.probs, trunc.samples, config.seed
        )
        return _result_from_env(config, compiled, res, "montecarlo")
    n_noisy = int(compiled.noisy_mask.sum())
    mode = config.engine_mode
    if mode == "auto":
        mode = "fast" if trunc.max_weight <= 2 else "reference"
    if mode == "fast":
        if trunc.max_weight > 2:
            raise ValueError(
                "the fast engine enumerates up to weight 2; deeper truncation "
                "needs engine_mode='reference' and a restricted noisy-site set"
            )
        res = fastpath.fast_enumerate(
            compiled, [config.env.probs], trunc.max_weight
        )[0]
    else:
        count = pattern_count(n_noisy, min(trunc.max_weight, n_noisy))
        if count > trunc.pattern_cap:
            raise engine.noise.PatternSizeError(
                f"{count} patterns over {n_noisy} noisy sites exceeds the cap "
                f"of {trunc.pattern_cap}; lower the truncation weight, shorten "
                "the sequence, or restrict the noisy sites"
            )
        res = engine.reference_enumerate(
            compiled, config.env.probs,
            min(trunc.max_weight, n_noisy), trunc.pattern_cap,
        )
    return _result_from_env(config, compiled, res, mode)


# ---------------------------------------------------------------------------
# Order and method comparisons
# ---------------------------------------------------------------------------

def _batched_runs(
    sequence: str,
    orders: list[str],
    methods: list[str],
    envs: list[Environment],
    truncation: TruncationConfig,
    seed: int = 0,
    theta_noisy: bool = True,
    progress=None,
) -> list[RunResult]:
    """Evaluate the (order, method) combos over an environment batch.

    The heavy per-combo analysis is environment-independent, so each combo is
    compiled and swept once and every environment is extracted from the same
    pass.
    """
    results = []
    for method in methods:
        for order in orders:
            compiled = engine.compile_run(
                sequence, order, method, theta_noisy=theta_noisy
            )
            env_results = fastpath.fast_enumerate(
                compiled, [e.probs for e in envs], truncation.max_weight
            )
            for env, res in zip(envs, env_results):
                config = RunConfig(
                    sequence=sequence, order=order, method=method, env=env,
                    truncation=truncation, seed=seed, theta_noisy=theta_noisy,
                )
                results.append(_result_from_env(config, compiled, res, "fast"))
            if progress is not None:
                progress(method, order)
    return results


def compare_orders(
    env: Environment,
    method: str,
    *,
    sequence: str = ftgates.DEFAULT_SEQUENCE,
    truncation: TruncationConfig | None = None,
) -> list[RunResult]:
    """All four orders on one environment, best fidelity first."""
    truncation = truncation or TruncationConfig()
    results = _batched_runs(
        sequence, list(syndrome.SYNDROME_ORDERS), [method], [env], truncation
    )
    return sorted(results, key=lambda r: -r.fidelity)


def d_metric(steane_result: RunResult, shor_result: RunResult):
    """|difference of logarithmic infidelities| and which method won."""
    d = abs(steane_result.log_infidelity - shor_result.log_infidelity)
    if steane_result.fidelity > shor_result.fidelity:
        winner = "steane"
    elif steane_result.fidelity < shor_result.fidelity:
        winner = "shor"
    else:
        winner = "tie"
    return d, winner


def sweep(
    envs: list[Environment] | None = None,
    orders: list[str] | None = None,
    methods: list[str] | None = None,
    *,
    sequence: str = ftgates.DEFAULT_SEQUENCE,
    truncation: TruncationConfig | None = None,
    pz: float = DEFAULT_PZ,
    seed: int = 0,
    theta_noisy: bool = True,
    progress=None,
) -> list[RunResult]:
    """Cross product of environments, orders, and methods.

    Rows come back sorted by (method, order, grid index) so output files are
    deterministic regardless of evaluation scheduling.
    """
    envs = envs if envs is not None else grid_environments(pz)
    orders = orders if orders is not None else list(syndrome.SYNDROME_ORDERS)
    methods = methods if methods is not None else list(syndrome.SMETHODS)
    truncation = truncation or TruncationConfig()
    results = _batched_runs(
        sequence, orders, methods, envs, truncation, seed, theta_noisy,
        progress,
    )
    results.sort(
        key=lambda r: (r.config.method, r.config.order, r.config.env.grid_index)
    )
    return results


def best_orders(results: list[RunResult]) -> dict[tuple[str, int], str]:
    """Winning order per (method, grid index) cell of a sweep table."""
    best: dict[tuple[str, int], RunResult] = {}
    for r in results:
        key = (r.config.method, r.config.env.grid_index)
        if key not in best or r.fidelity > best[key].fidelity:
            best[key] = r
    return {k: v.config.order for k, v in best.items()}
