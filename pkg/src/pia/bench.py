"""Monte Carlo comparison of PIA, movable-antenna and uniform arrays.

Every scheme is scored on the same held-out drops. These come from the
``"eval"`` seed namespace, which is never used during optimization.
"""

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .channel import ScenarioConfig, channel_tensor, sample_drops
from .geometry import ArrayLayout, GridSpec, make_reference_grid, make_uniform_layout
from .optimizer import PsoConfig, ma_objective, optimize_ma, optimize_pia
from .precoding import sum_rate_batch
from .seeding import stream

__all__ = [
    "SCHEMES",
    "EvalReport",
    "Comparison",
    "SweepResult",
    "eval_drops",
    "drop_fingerprint",
    "evaluate_fixed",
    "evaluate_ma",
    "benchmark_layout",
    "compare",
    "sweep_antennas",
    "paired_bootstrap_se",
    "variability_ratio",
]

SCHEMES = ("ma", "pia", "uspa", "hwpa")


def variability_ratio(values) -> float:
    values = np.asarray(values, dtype=float)
    mean = values.mean()
    return float(values.std() / mean) if mean > 0 else math.nan


def eval_drops(scenario: ScenarioConfig, n_drops: int, seed: int) -> np.ndarray:
    """Held-out drops, shape ``(n_drops, K, 2)``; drop ``d`` uses stream ``(seed, "eval", d)``."""
    if n_drops < 1:
        raise ValueError("n_drops must be at least 1")
    return np.stack([sample_drops(scenario, stream(seed, "eval", d)) for d in range(n_drops)])


def drop_fingerprint(drops: np.ndarray) -> str:
    data = np.ascontiguousarray(drops, dtype="<f8").tobytes()
    return hashlib.sha256(data).hexdigest()[:16]


@dataclass
class EvalReport:
    """Per-drop sum rates of one scheme and their summary statistics."""

    scheme: str
    sum_rates: np.ndarray
    seed: int
    fingerprint: str
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.sum_rates = np.asarray(self.sum_rates, dtype=float)

    @property
    def n_drops(self) -> int:
        return len(self.sum_rates)

    @property
    def mean(self) -> float:
        return float(self.sum_rates.mean())

    @property
    def std(self) -> float:
        # population standard deviation, so a single drop gives 0
        return float(self.sum_rates.std())

    @property
    def variability_ratio(self) -> float:
        return self.std / self.mean if self.mean > 0 else math.nan

    def cdf(self) -> np.ndarray:
        """Empirical CDF points ``(value, probability)``, shape ``(n, 2)``."""
        values = np.sort(self.sum_rates)
        probs = np.arange(1, len(values) + 1) / len(values)
        return np.column_stack([values, probs])

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "params": self.params,
            "mean": self.mean,
            "std": self.std,
            "variability_ratio": self.variability_ratio,
            "cdf": self.cdf().tolist(),
            "drops": [{"drop_id": d, "sum_rate": float(r)}
                      for d, r in enumerate(self.sum_rates)],
            "seed": self.seed,
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        drops = sorted(data["drops"], key=lambda r: r["drop_id"])
        return cls(scheme=data["scheme"],
                   sum_rates=np.array([r["sum_rate"] for r in drops]),
                   seed=int(data["seed"]), fingerprint=data["fingerprint"],
                   params=data.get("params", {}))

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def read_json(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["scheme", "drop_id", "sum_rate"])
            for d, r in enumerate(self.sum_rates):
                writer.writerow([self.scheme, d, repr(float(r))])


def _score_layout(layout: ArrayLayout, scenario: ScenarioConfig, drops) -> np.ndarray:
    h = channel_tensor(layout.positions, drops, scenario)
    return sum_rate_batch(h, scenario.noise_power, scenario.p_max)


def evaluate_fixed(layout: ArrayLayout, scenario: ScenarioConfig, n_drops: int = 100,
                   seed: int = 0, scheme: str = "fixed",
                   params: Optional[dict] = None) -> EvalReport:
    """Score a fixed layout on ``n_drops`` held-out drops."""
    drops = eval_drops(scenario, n_drops, seed)
    rates = _score_layout(layout, scenario, drops)
    return EvalReport(scheme, rates, seed, drop_fingerprint(drops), dict(params or {}))


def evaluate_ma(grid: GridSpec, scenario: ScenarioConfig, pso: PsoConfig,
                n_drops: int = 100, seed: int = 0, threads: int = 1,
                params: Optional[dict] = None) -> EvalReport:
    """Re-optimize positions for each held-out drop and score them on it.

    The swarm for drop ``d`` uses stream ``(pso.seed, "pso-ma", d)``.
    Drops are spread over ``threads`` workers.
    """
    drops = eval_drops(scenario, n_drops, seed)

    def run(d):
        res = optimize_ma(grid, scenario, drops[d], pso,
                          rng=stream(pso.seed, "pso-ma", d))
        return ma_objective(res.layout, drops[d], scenario)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rates = list(pool.map(run, range(n_drops)))
    else:
        rates = [run(d) for d in range(n_drops)]
    return EvalReport("ma", np.array(rates), seed, drop_fingerprint(drops), dict(params or {}))


def benchmark_layout(scheme: str, grid: GridSpec) -> ArrayLayout:
    """Fixed benchmark arrays: ``uspa`` (grid pitch) or ``hwpa`` (half wavelength)."""
    if scheme == "uspa":
        return make_reference_grid(grid)[0]
    if scheme == "hwpa":
        return make_uniform_layout(grid.m_h, grid.m_v, grid.wavelength / 2,
                                   grid.center_height, grid.wavelength)
    raise ValueError(f"unknown fixed scheme {scheme!r}")


def paired_bootstrap_se(a, b, n_boot: int = 2000, seed: int = 0,
                        stat=np.mean) -> float:
    """Bootstrap standard error of ``stat(a) - stat(b)`` under paired resampling."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have the same length")
    rng = stream(seed, "bootstrap")
    idx = rng.integers(0, len(a), size=(n_boot, len(a)))
    diffs = np.array([stat(a[i]) - stat(b[i]) for i in idx])
    return float(diffs.std(ddof=1))


@dataclass
class Comparison:
    """Per-scheme summary plus pairwise mean gaps in percent.

    ``gaps[(a, b)] = (mean_a - mean_b) / mean_a * 100``.
    """

    rows: List[dict]
    gaps: Dict[tuple, float]

    def gap(self, a: str, b: str) -> float:
        return self.gaps[(a, b)]

    def to_dict(self) -> dict:
        return {"schemes": self.rows,
                "gaps_pct": [{"a": a, "b": b, "gap_pct": g} for (a, b), g in self.gaps.items()]}

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            names = [r["scheme"] for r in self.rows]
            writer.writerow(["scheme", "mean", "std", "variability_ratio", "n_drops"]
                            + [f"gap_vs_{n}_pct" for n in names])
            for r in self.rows:
                writer.writerow([r["scheme"], repr(r["mean"]), repr(r["std"]),
                                 repr(r["variability_ratio"]), r["n_drops"]]
                                + [repr(self.gaps[(r["scheme"], n)]) for n in names])


def compare(reports: Sequence[EvalReport]) -> Comparison:
    if not reports:
        raise ValueError("nothing to compare")
    prints = {r.fingerprint for r in reports}
    if len(prints) != 1:
        raise ValueError("reports were evaluated on different drop sets")
    rows = [{"scheme": r.scheme, "mean": r.mean, "std": r.std,
             "variability_ratio": r.variability_ratio, "n_drops": r.n_drops}
            for r in reports]
    gaps = {}
    for a in reports:
        for b in reports:
            gaps[(a.scheme, b.scheme)] = (a.mean - b.mean) / a.mean * 100 if a.mean else math.nan
    return Comparison(rows, gaps)


@dataclass
class SweepResult:
    reports: Dict[int, Dict[str, EvalReport]]
    layouts: Dict[int, ArrayLayout]

    def rows(self) -> List[dict]:
        out = []
        for side, by_scheme in self.reports.items():
            for scheme in SCHEMES:
                r = by_scheme[scheme]
                out.append({"m_side": side, "m": side * side, "scheme": scheme,
                            "mean": r.mean, "std": r.std,
                            "variability_ratio": r.variability_ratio})
        return out

    def gap(self, side: int, a: str = "ma", b: str = "pia") -> float:
        return compare([self.reports[side][a], self.reports[side][b]]).gap(a, b)

    def to_dict(self) -> dict:
        return {"rows": self.rows(),
                "reports": {str(s): {k: r.to_dict() for k, r in by.items()}
                            for s, by in self.reports.items()}}

    def write_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            for r in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def sweep_antennas(m_sides: Sequence[int], scenario: ScenarioConfig, pso: PsoConfig,
                   seed: int = 0, n_drops: int = 100, grid: Optional[GridSpec] = None,
                   threads: int = 1, progress=None) -> SweepResult:
    """Optimize a PIA and score all four schemes for each square array size.

    ``grid`` supplies every grid parameter except ``m_h`` and ``m_v``;
    by default it is built from the scenario wavelength.
    """
    if grid is None:
        grid = GridSpec(1, 1, scenario.wavelength)
    reports, layouts = {}, {}
    for side in m_sides:
        g = replace(grid, m_h=side, m_v=side)
        params = {"m_h": side, "m_v": side}
        if progress:
            progress(f"M={side * side}: optimizing PIA")
        pia = optimize_pia(g, scenario, pso, threads=threads).layout
        layouts[side] = pia
        by = {}
        if progress:
            progress(f"M={side * side}: evaluating MA on {n_drops} drops")
        by["ma"] = evaluate_ma(g, scenario, pso, n_drops, seed, threads, params)
        by["pia"] = evaluate_fixed(pia, scenario, n_drops, seed, "pia", params)
        for name in ("uspa", "hwpa"):
            by[name] = evaluate_fixed(benchmark_layout(name, g), scenario, n_drops,
                                      seed, name, params)
        reports[side] = by
    return SweepResult(reports, layouts)
