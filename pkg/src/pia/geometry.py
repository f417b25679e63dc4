"""Base-station array layouts, movement regions and feasibility repair.

The array lies in the yz-plane (x = 0). Positions are stored as an
``(M, 2)`` array of ``(y, z)`` pairs in meters. Antennas are numbered
row-major from the bottom-left of the grid: index ``m = row * M_h + col``.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "ArrayLayout",
    "MovementRegion",
    "GridSpec",
    "FeasibilityReport",
    "LayoutFormatError",
    "make_reference_grid",
    "make_uniform_layout",
    "region_bounds",
    "check_feasible",
    "repair",
    "repair_positions",
    "format_layout",
    "parse_layout",
    "write_layout",
    "read_layout",
]

# Tolerance on the separation constraint; repair pushes pairs to exactly
# ``min_sep`` and the result can land a few ulps short.
SEPARATION_TOL = 1e-12


class LayoutFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayLayout:
    positions: np.ndarray
    wavelength: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must have shape (M, 2)")
        if pos.shape[0] < 1:
            raise ValueError("layout needs at least one antenna")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "wavelength", float(self.wavelength))

    @property
    def num_antennas(self) -> int:
        return self.positions.shape[0]

    def coordinates(self) -> np.ndarray:
        """Full 3D coordinates ``(0, y, z)``, shape ``(M, 3)``."""
        out = np.zeros((self.num_antennas, 3))
        out[:, 1:] = self.positions
        return out

    def __eq__(self, other):
        if not isinstance(other, ArrayLayout):
            return NotImplemented
        return self.wavelength == other.wavelength and np.array_equal(
            self.positions, other.positions)

    __hash__ = None


@dataclass(frozen=True)
class MovementRegion:
    center: Tuple[float, float]
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("region width and height must be positive")
        object.__setattr__(self, "center",
                           (float(self.center[0]), float(self.center[1])))

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.center[0] - self.width / 2,
                         self.center[1] - self.height / 2])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.center[0] + self.width / 2,
                         self.center[1] + self.height / 2])

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))


@dataclass(frozen=True)
class GridSpec:
    """Reference grid of movement regions.

    Lengths left as ``None`` default to multiples of the wavelength: pitch
    and region size 5 wavelengths, center height 40 wavelengths, minimum
    separation half a wavelength.
    """

    m_h: int
    m_v: int
    wavelength: float
    pitch: Optional[float] = None
    center_height: Optional[float] = None
    region_width: Optional[float] = None
    region_height: Optional[float] = None
    min_separation: Optional[float] = None

    def __post_init__(self):
        lam = self.wavelength
        if not lam > 0:
            raise ValueError("wavelength must be positive")
        defaults = dict(pitch=5 * lam, center_height=40 * lam,
                        region_width=5 * lam, region_height=5 * lam,
                        min_separation=lam / 2)
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
            else:
                object.__setattr__(self, name, float(getattr(self, name)))
        if int(self.m_h) != self.m_h or self.m_h < 1:
            raise ValueError("m_h must be a positive integer")
        if int(self.m_v) != self.m_v or self.m_v < 1:
            raise ValueError("m_v must be a positive integer")
        object.__setattr__(self, "m_h", int(self.m_h))
        object.__setattr__(self, "m_v", int(self.m_v))
        for name in ("pitch", "region_width", "region_height"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.min_separation < 0:
            raise ValueError("min_separation must be non-negative")
        if self.pitch < max(self.region_width, self.region_height):
            raise ValueError(
                "pitch must be at least max(region_width, region_height) "
                "so that movement regions do not overlap")

    @property
    def num_antennas(self) -> int:
        return self.m_h * self.m_v


def _grid_positions(m_h, m_v, spacing, center_height):
    y = (np.arange(m_h) - (m_h - 1) / 2) * spacing
    z = center_height + (np.arange(m_v) - (m_v - 1) / 2) * spacing
    zz, yy = np.meshgrid(z, y, indexing="ij")
    return np.column_stack([yy.ravel(), zz.ravel()])


def make_reference_grid(spec: GridSpec) -> Tuple[ArrayLayout, List[MovementRegion]]:
    """Reference positions and one movement region centered on each.

    The returned layout is the reference grid itself, i.e. a sparse
    uniform array with the grid pitch.
    """
    pos = _grid_positions(spec.m_h, spec.m_v, spec.pitch, spec.center_height)
    regions = [MovementRegion((y, z), spec.region_width, spec.region_height)
               for y, z in pos]
    return ArrayLayout(pos, spec.wavelength), regions


def make_uniform_layout(m_h: int, m_v: int, spacing: float,
                        center_height: float, wavelength: float) -> ArrayLayout:
    """Regular ``m_v x m_h`` grid centered at ``(0, center_height)``.

    ``spacing = wavelength / 2`` gives the compact half-wavelength array,
    ``spacing = 5 * wavelength`` the sparse one.
    """
    if m_h < 1 or m_v < 1:
        raise ValueError("m_h and m_v must be at least 1")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    return ArrayLayout(_grid_positions(m_h, m_v, spacing, center_height),
                       wavelength)


def region_bounds(regions: Sequence[MovementRegion]) -> Tuple[np.ndarray, np.ndarray]:
    """Lower and upper box corners, each of shape ``(M, 2)``."""
    lo = np.array([r.lower for r in regions], dtype=float).reshape(-1, 2)
    hi = np.array([r.upper for r in regions], dtype=float).reshape(-1, 2)
    return lo, hi


@dataclass
class FeasibilityReport:
    """Constraint violations of a layout.

    ``outside`` lists antennas outside their (closed) region; ``pairs``
    lists ``(m, j, distance)`` with ``m < j`` for every pair closer than
    the minimum separation.
    """

    outside: List[int] = field(default_factory=list)
    pairs: List[Tuple[int, int, float]] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.outside and not self.pairs


def _as_positions(layout) -> np.ndarray:
    if isinstance(layout, ArrayLayout):
        return layout.positions
    return np.asarray(layout, dtype=float)


def _close_pairs(pos, min_sep, tol=SEPARATION_TOL):
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.einsum("mjk,mjk->mj", diff, diff))
    m, j = np.nonzero(np.triu(dist < min_sep - tol, k=1))
    return m, j, dist[m, j]


def check_feasible(layout, regions: Sequence[MovementRegion], min_sep: float,
                   tol: float = SEPARATION_TOL) -> FeasibilityReport:
    pos = _as_positions(layout)
    if pos.shape[0] != len(regions):
        raise ValueError(f"layout has {pos.shape[0]} antennas but "
                         f"{len(regions)} regions were given")
    lo, hi = region_bounds(regions)
    outside = np.nonzero(np.any((pos < lo) | (pos > hi), axis=1))[0]
    m, j, d = _close_pairs(pos, min_sep, tol)
    return FeasibilityReport(
        outside=[int(i) for i in outside],
        pairs=[(int(a), int(b), float(c)) for a, b, c in zip(m, j, d)])


def repair_positions(pos: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                     min_sep: float, max_passes: int = 100,
                     tol: float = SEPARATION_TOL) -> Tuple[np.ndarray, bool]:
    """Array-level repair used by :func:`repair` and the optimizer.

    Returns ``(positions, feasible)``. Inputs that already satisfy the
    constraints come back as the very same values.
    """
    pos = np.asarray(pos, dtype=float)
    inside = np.all((pos >= lo) & (pos <= hi))
    if inside and len(_close_pairs(pos, min_sep, tol)[0]) == 0:
        return pos.copy(), True

    out = np.clip(pos, lo, hi)
    for _ in range(max_passes):
        m_idx, j_idx, _ = _close_pairs(out, min_sep, tol)
        if len(m_idx) == 0:
            return out, True
        # Gauss-Seidel sweep in (m, j) lexicographic order.
        for m, j in zip(m_idx, j_idx):
            delta = out[j] - out[m]
            d = np.hypot(delta[0], delta[1])
            if d >= min_sep - tol:
                continue
            if d == 0.0:
                u = np.array([1.0, 0.0])
            else:
                u = delta / d
            shift = 0.5 * (min_sep - d) * u
            out[m] -= shift
            out[j] += shift
        np.clip(out, lo, hi, out=out)
    ok = len(_close_pairs(out, min_sep, tol)[0]) == 0
    return out, ok


def repair(layout: ArrayLayout, regions: Sequence[MovementRegion],
           min_sep: float, max_passes: int = 100) -> Optional[ArrayLayout]:
    """Project a layout onto the constraint set, or ``None`` if that fails.

    Coordinates are first clamped into their closed boxes; then every pair
    closer than ``min_sep`` is pushed apart symmetrically along its
    connecting line (coincident points along +y) and the boxes are
    re-applied, for at most ``max_passes`` sweeps.
    """
    if layout.num_antennas != len(regions):
        raise ValueError(f"layout has {layout.num_antennas} antennas but "
                         f"{len(regions)} regions were given")
    lo, hi = region_bounds(regions)
    if check_feasible(layout, regions, min_sep).feasible:
        return layout
    out, ok = repair_positions(layout.positions, lo, hi, min_sep, max_passes)
    if not ok:
        return None
    return ArrayLayout(out, layout.wavelength)


# -- text format ----------------------------------------------------------

_HEADER = "# array-layout v1"


def format_layout(layout: ArrayLayout) -> str:
    lines = [f"{_HEADER} M={layout.num_antennas} lambda={layout.wavelength!r}"]
    for m, (y, z) in enumerate(layout.positions):
        lines.append(f"{m} {float(y)!r} {float(z)!r}")
    return "\n".join(lines) + "\n"


def parse_layout(text: str, expected_m: Optional[int] = None) -> ArrayLayout:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(_HEADER):
        raise LayoutFormatError("missing '# array-layout v1' header")
    meta = {}
    for token in lines[0][len(_HEADER):].split():
        key, _, value = token.partition("=")
        meta[key] = value
    try:
        m_count = int(meta["M"])
        wavelength = float(meta["lambda"])
    except (KeyError, ValueError) as exc:
        raise LayoutFormatError(f"bad header: {lines[0]!r}") from exc
    if expected_m is not None and m_count != expected_m:
        raise LayoutFormatError(f"layout has M={m_count}, expected {expected_m}")
    rows = lines[1:]
    if len(rows) != m_count:
        raise LayoutFormatError(f"header says M={m_count} but found {len(rows)} rows")
    pos = np.empty((m_count, 2))
    for expected_index, row in enumerate(rows):
        parts = row.split()
        if len(parts) != 3:
            raise LayoutFormatError(f"malformed row: {row!r}")
        try:
            index = int(parts[0])
            pos[expected_index] = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise LayoutFormatError(f"malformed row: {row!r}") from exc
        if index != expected_index:
            raise LayoutFormatError(
                f"antenna indices must run 0..M-1 in order; got {index} "
                f"at row {expected_index}")
    return ArrayLayout(pos, wavelength)


def write_layout(path, layout: ArrayLayout) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_layout(layout))


def read_layout(path, expected_m: Optional[int] = None) -> ArrayLayout:
    with open(path, encoding="utf-8") as fh:
        return parse_layout(fh.read(), expected_m)
