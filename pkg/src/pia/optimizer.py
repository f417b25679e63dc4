"""Particle swarm optimization of BS antenna positions.

Two objectives are provided:

* :class:`PiaObjective` -- sample-average sum rate over random user
  drops. Each PSO iteration draws a fresh set of Q drops, shared by all
  particles of that iteration.
* :class:`MaObjective` -- sum rate for one fixed drop (the movable
  antenna benchmark, re-optimized per drop).

Both evaluate a whole batch of candidate layouts at once. Plain
callables ``positions -> float`` are accepted by :func:`pso_optimize`
as well.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from .channel import ScenarioConfig, UserDrop, channel_tensor, sample_drops
from .geometry import (ArrayLayout, GridSpec, MovementRegion,
                       make_reference_grid, region_bounds, repair_positions)
from .precoding import sum_rate_batch
from .seeding import stream

__all__ = [
    "PsoConfig",
    "TraceRow",
    "PsoResult",
    "PiaObjective",
    "MaObjective",
    "pia_objective",
    "ma_objective",
    "pso_optimize",
    "optimize_pia",
    "optimize_ma",
    "write_trace",
]

CONSTRAINT_MODES = ("repair", "penalty")


@dataclass(frozen=True)
class PsoConfig:
    """Swarm parameters.

    ``v_max`` of ``None`` means half the movement-region width.
    ``n_pso`` counts position updates; the initial swarm is always
    evaluated, so ``n_pso = 0`` returns the best random layout.
    """

    n_p: int = 150
    n_pso: int = 200
    inertia: float = 0.5
    c1: float = 1.2
    c2: float = 2.0
    v_max: Optional[float] = None
    seed: int = 0
    q: int = 1000
    constraint_mode: str = "repair"
    penalty_weight: float = 1e3
    max_repair_passes: int = 100

    def __post_init__(self):
        for name, low in (("n_p", 1), ("n_pso", 0), ("q", 1), ("max_repair_passes", 1)):
            value = getattr(self, name)
            if int(value) != value or value < low:
                raise ValueError(f"{name} must be an integer >= {low}")
            object.__setattr__(self, name, int(value))
        if not 0 <= self.inertia <= 1:
            raise ValueError("inertia must lie in [0, 1]")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")
        if self.v_max is not None and not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise ValueError(f"constraint_mode must be one of {CONSTRAINT_MODES}")
        if self.penalty_weight < 0:
            raise ValueError("penalty_weight must be non-negative")
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class TraceRow(NamedTuple):
    iter: int
    gbest_value: float
    eval_count: int
    wall_ms: float


class PsoResult(NamedTuple):
    layout: ArrayLayout
    value: float
    trace: List[TraceRow]
    initial_values: np.ndarray


class PiaObjective:
    """Average sum rate over ``q`` random drops per iteration.

    The drops of iteration ``t`` come from the seed-derived streams
    ``(seed, "pia-drops", t, j)``, one per drop index ``j``, so any
    particle evaluated at iteration ``t`` sees exactly the same users.
    """

    def __init__(self, scenario: ScenarioConfig, q: int, seed: int):
        self.scenario = scenario
        self.q = int(q)
        self.seed = int(seed)
        self._drops = lru_cache(maxsize=4)(self._make_drops)

    def _make_drops(self, t):
        return np.stack([sample_drops(self.scenario, stream(self.seed, "pia-drops", t, j))
                         for j in range(self.q)])

    def drops(self, t: int) -> np.ndarray:
        return self._drops(int(t))

    def evaluate(self, positions: np.ndarray, t: int) -> np.ndarray:
        drops = self.drops(t)
        sc = self.scenario
        out = np.empty(len(positions))
        for p, pos in enumerate(positions):
            h = channel_tensor(pos, drops, sc)
            out[p] = sum_rate_batch(h, sc.noise_power, sc.p_max).mean()
        return out


class MaObjective:
    """Sum rate of one fixed drop; deterministic."""

    def __init__(self, scenario: ScenarioConfig, drop):
        self.scenario = scenario
        self.drop = drop.positions if isinstance(drop, UserDrop) else np.asarray(drop)

    def evaluate(self, positions: np.ndarray, t: int = 0) -> np.ndarray:
        sc = self.scenario
        h = channel_tensor(np.asarray(positions), self.drop, sc)
        return sum_rate_batch(h, sc.noise_power, sc.p_max)


def _positions(layout):
    return layout.positions if isinstance(layout, ArrayLayout) else np.asarray(layout, float)


def pia_objective(layout, scenario: ScenarioConfig, q: int,
                  rng: np.random.Generator) -> float:
    """Sample-average sum rate of a layout over ``q`` drops drawn from ``rng``."""
    drops = sample_drops(scenario, rng, q)
    h = channel_tensor(_positions(layout), drops, scenario)
    return float(sum_rate_batch(h, scenario.noise_power, scenario.p_max).mean())


def ma_objective(layout, fixed_drop, scenario: ScenarioConfig) -> float:
    return float(MaObjective(scenario, fixed_drop).evaluate(_positions(layout)[None])[0])


def _separation_excess(pos, min_sep):
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.einsum("mjk,mjk->mj", diff, diff))
    short = np.triu(np.maximum(min_sep - dist, 0.0), k=1)
    return short.sum()


def _evaluator(objective):
    if hasattr(objective, "evaluate"):
        return objective.evaluate

    def per_layout(positions, t):
        return np.array([objective(x) for x in positions], dtype=float)
    return per_layout


def pso_optimize(regions: Sequence[MovementRegion], min_sep: float, objective,
                 pso: PsoConfig, rng: Optional[np.random.Generator] = None,
                 wavelength: Optional[float] = None, threads: int = 1,
                 on_iteration: Optional[Callable[[TraceRow], None]] = None) -> PsoResult:
    """Maximize ``objective`` over layouts constrained to ``regions``.

    Parameters
    ----------
    regions : sequence of MovementRegion
        One box per antenna; boxes must not overlap.
    min_sep : float
        Minimum distance between any two antennas, meters.
    objective : object with ``evaluate(positions, t)`` or callable
        Batched objective taking ``(P, M, 2)`` positions and the
        iteration index, or a plain function of one ``(M, 2)`` array.
    pso : PsoConfig
    rng : numpy Generator, optional
        Drives initialization and the swarm dynamics. Defaults to the
        stream derived from ``pso.seed``.
    wavelength : float, optional
        Stored in the returned layout; defaults to ``2 * min_sep``.
    threads : int
        Worker threads for objective evaluation. Particles are split in
        contiguous chunks; results do not depend on this value.

    Returns
    -------
    PsoResult
        Global best layout, its value, the per-iteration trace of the
        global best value and the values of the initial swarm.
    """
    lo, hi = region_bounds(regions)
    if len(regions) == 0:
        raise ValueError("need at least one region")
    if rng is None:
        rng = stream(pso.seed, "pso")
    if wavelength is None:
        wavelength = 2 * min_sep if min_sep > 0 else 1.0
    v_max = pso.v_max if pso.v_max is not None else regions[0].width / 2
    evaluate = _evaluator(objective)
    n_p = pso.n_p
    shape = (n_p,) + lo.shape

    penalty = pso.constraint_mode == "penalty"

    def constrain(cand, fallback):
        out = np.empty_like(cand)
        ok = np.ones(n_p, dtype=bool)
        for p in range(n_p):
            if penalty:
                out[p] = np.clip(cand[p], lo, hi)
                continue
            out[p], ok[p] = repair_positions(cand[p], lo, hi, min_sep,
                                             pso.max_repair_passes)
            if not ok[p] and fallback is not None:
                out[p] = fallback[p]
        return out, ok

    pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def score(x, ok, t):
        vals = np.full(n_p, -np.inf)
        idx = np.nonzero(ok)[0]
        if len(idx):
            chunks = [c for c in np.array_split(idx, min(max(threads, 1), len(idx))) if len(c)]
            if pool is None:
                parts = [evaluate(x[c], t) for c in chunks]
            else:
                parts = list(pool.map(lambda c: evaluate(x[c], t), chunks))
            vals[idx] = np.concatenate(parts)
        if penalty:
            for p in idx:
                vals[p] -= pso.penalty_weight * _separation_excess(x[p], min_sep) / max(min_sep, 1e-300)
        return vals

    trace = []
    start = time.perf_counter()
    try:
        x0 = lo + (hi - lo) * rng.random(shape)
        v = rng.uniform(-v_max, v_max, size=shape)
        x, ok = constrain(x0, None)
        vals = score(x, ok, 0)
        if not np.any(np.isfinite(vals)):
            raise RuntimeError("no feasible particle after initialization")
        initial_values = vals.copy()
        pbest, pbest_val = x.copy(), vals.copy()
        g = int(np.argmax(vals))
        gbest, gbest_val = x[g].copy(), float(vals[g])
        evals = int(ok.sum())
        row = TraceRow(0, gbest_val, evals, (time.perf_counter() - start) * 1e3)
        trace.append(row)
        if on_iteration:
            on_iteration(row)

        for t in range(1, pso.n_pso + 1):
            u1 = rng.random(n_p)[:, None, None]
            u2 = rng.random(n_p)[:, None, None]
            v = (pso.inertia * v + pso.c1 * u1 * (pbest - x)
                 + pso.c2 * u2 * (gbest - x))
            np.clip(v, -v_max, v_max, out=v)
            x, ok = constrain(x + v, x)
            vals = score(x, ok, t)
            evals += int(ok.sum())
            better = vals > pbest_val
            pbest[better] = x[better]
            pbest_val[better] = vals[better]
            g = int(np.argmax(vals))
            if vals[g] > gbest_val:
                gbest, gbest_val = x[g].copy(), float(vals[g])
            row = TraceRow(t, gbest_val, evals, (time.perf_counter() - start) * 1e3)
            trace.append(row)
            if on_iteration:
                on_iteration(row)
    finally:
        if pool is not None:
            pool.shutdown()

    return PsoResult(ArrayLayout(gbest, wavelength), gbest_val, trace, initial_values)


def optimize_pia(grid: GridSpec, scenario: ScenarioConfig, pso: PsoConfig,
                 threads: int = 1, **kwargs) -> PsoResult:
    """Pre-optimized irregular array for the scenario's coverage area."""
    _, regions = make_reference_grid(grid)
    objective = PiaObjective(scenario, pso.q, pso.seed)
    return pso_optimize(regions, grid.min_separation, objective, pso,
                        rng=stream(pso.seed, "pso", 0), wavelength=grid.wavelength,
                        threads=threads, **kwargs)


def optimize_ma(grid: GridSpec, scenario: ScenarioConfig, drop, pso: PsoConfig,
                rng: Optional[np.random.Generator] = None, threads: int = 1) -> PsoResult:
    """Positions optimized for a single drop (movable-antenna benchmark).

    Without ``rng`` the swarm uses stream ``(pso.seed, "pso-ma")``.
    """
    _, regions = make_reference_grid(grid)
    if rng is None:
        rng = stream(pso.seed, "pso-ma")
    return pso_optimize(regions, grid.min_separation, MaObjective(scenario, drop), pso,
                        rng=rng, wavelength=grid.wavelength, threads=threads)


def write_trace(path, trace: Sequence[TraceRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iter,gbest_value,eval_count,wall_ms\n")
        for row in trace:
            fh.write(f"{row.iter},{row.gbest_value!r},{row.eval_count},{row.wall_ms:.3f}\n")
