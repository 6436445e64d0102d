"""Procedural 1-D heightfield terrains and the difficulty-graded terrain set.

All terrains in a set share the same cell size, origin and length so batched
height queries reduce to row lookups in one height matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

KINDS = ("flat", "slope-up", "slope-down", "stairs-up", "stairs-down", "rough")

DEFAULT_CELL = 0.05    # m, finer than the wheel radius so stair edges resolve
DEFAULT_LENGTH = 8.0   # m
LEAD_IN = 1.0          # m of flat spawn zone at the start of every terrain

# difficulty schedule
SLOPE_GRADE_PER_LEVEL = 0.05
SLOPE_GRADE_CAP = 0.4
STAIR_RISE_MIN = 0.05      # m at level 1
STAIR_RISE_MAX = 0.17      # m at the top level
STAIR_RUN = 0.30           # m
ROUGH_AMP_PER_LEVEL = 0.01  # m per level
ROUGH_CORRELATION = 0.3     # m, fixed spatial correlation length


@dataclass(frozen=True)
class Heightfield:
    cell_size: float
    heights: np.ndarray          # (n_cells,), heights at x = origin_x + i * cell_size
    origin_x: float
    kind: str
    difficulty_level: int = 0

    @property
    def length(self) -> float:
        return (len(self.heights) - 1) * self.cell_size

    @property
    def end_x(self) -> float:
        return self.origin_x + self.length


@dataclass(frozen=True)
class TerrainSet:
    terrains: tuple[Heightfield, ...]
    levels: int
    variations_per_level: int

    def at(self, level: int, variation: int) -> Heightfield:
        return self.terrains[level * self.variations_per_level + variation]


def height_at(hf: Heightfield, x):
    """Piecewise-linear height query; x outside the field clamps to the edge."""
    x = np.asarray(x, dtype=np.float64)
    u = (x - hf.origin_x) / hf.cell_size
    n = len(hf.heights)
    i = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
    f = np.clip(u - i, 0.0, 1.0)
    h = hf.heights[i] * (1.0 - f) + hf.heights[i + 1] * f
    return h if h.shape else float(h)


def slope_at(hf: Heightfield, x):
    """dh/dx of the piecewise-linear surface (0 outside the field)."""
    x = np.asarray(x, dtype=np.float64)
    u = (x - hf.origin_x) / hf.cell_size
    n = len(hf.heights)
    i = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
    s = (hf.heights[i + 1] - hf.heights[i]) / hf.cell_size
    inside = (u >= 0.0) & (u <= n - 1)
    s = np.where(inside, s, 0.0)
    return s if s.shape else float(s)


def _grid(length: float, cell_size: float) -> np.ndarray:
    n = int(round(length / cell_size)) + 1
    return np.arange(n, dtype=np.float64) * cell_size


def flat(height: float = 0.0, length: float = DEFAULT_LENGTH,
         cell_size: float = DEFAULT_CELL, level: int = 0) -> Heightfield:
    xs = _grid(length, cell_size)
    return Heightfield(cell_size, np.full_like(xs, height), 0.0, "flat", level)


def slope(grade: float, direction: str = "up", length: float = DEFAULT_LENGTH,
          cell_size: float = DEFAULT_CELL, level: int = 0) -> Heightfield:
    """Constant grade after the flat lead-in; 'down' mirrors 'up'."""
    xs = _grid(length, cell_size)
    h = np.maximum(xs - LEAD_IN, 0.0) * abs(grade)
    kind = "slope-up"
    if direction == "down":
        h = h[::-1].copy()
        kind = "slope-down"
    return Heightfield(cell_size, h, 0.0, kind, level)


def stairs(rise: float, run: float, n_steps: int, direction: str = "up",
           length: float = DEFAULT_LENGTH, cell_size: float = DEFAULT_CELL,
           level: int = 0) -> Heightfield:
    """Staircase with exact rise per step; total elevation n_steps * rise."""
    if rise <= 0:
        raise ValueError(f"stair rise must be > 0, got {rise}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if run <= cell_size:
        raise ValueError(
            f"stair run {run} must exceed the cell size {cell_size} to be representable"
        )
    xs = _grid(length, cell_size)
    step_idx = np.floor((xs - LEAD_IN) / run) + 1.0
    h = rise * np.clip(step_idx, 0.0, float(n_steps))
    kind = "stairs-up"
    if direction == "down":
        h = h[::-1].copy()
        kind = "stairs-down"
    return Heightfield(cell_size, h, 0.0, kind, level)


def rough(amplitude: float, seed: int, length: float = DEFAULT_LENGTH,
          cell_size: float = DEFAULT_CELL, level: int = 0,
          correlation: float = ROUGH_CORRELATION) -> Heightfield:
    """Band-limited noise: uniform knots every `correlation` metres, cosine-blended."""
    xs = _grid(length, cell_size)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n_knots = max(int(np.ceil(length / correlation)) + 2, 2)
    knots = rng.uniform(-1.0, 1.0, n_knots)
    u = xs / correlation
    i = np.clip(np.floor(u).astype(np.int64), 0, n_knots - 2)
    f = u - i
    w = 0.5 - 0.5 * np.cos(np.pi * f)          # smooth blend between knots
    h = amplitude * (knots[i] * (1.0 - w) + knots[i + 1] * w)
    h[xs < LEAD_IN] = 0.0
    return Heightfield(cell_size, h, 0.0, "rough", level)


def _stair_rise_for_level(level: int, levels: int) -> float:
    if level <= 0:
        return 0.03
    top = max(levels - 2, 1)
    return STAIR_RISE_MIN + (STAIR_RISE_MAX - STAIR_RISE_MIN) * min(level - 1, top) / top


def generate_set(seed: int, levels: int = 10, variations: int = 20,
                 length: float = DEFAULT_LENGTH, cell_size: float = DEFAULT_CELL,
                 kinds: tuple[str, ...] = KINDS) -> TerrainSet:
    """Deterministic difficulty-graded terrain set: `levels` x `variations` fields.

    Each level cycles through `kinds`; slope grade, stair rise and roughness
    amplitude scale with the level index.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if variations < 1:
        raise ValueError(f"variations must be >= 1, got {variations}")
    for k in kinds:
        if k not in KINDS:
            raise ValueError(f"unknown terrain kind {k!r}; choose from {KINDS}")

    terrains: list[Heightfield] = []
    for level in range(levels):
        for var in range(variations):
            kind = kinds[var % len(kinds)]
            sub = np.random.SeedSequence([seed, level, var])
            rng = np.random.Generator(np.random.PCG64(sub))
            jitter = rng.uniform(0.9, 1.1)
            if kind == "flat":
                hf = flat(0.0, length, cell_size, level)
            elif kind in ("slope-up", "slope-down"):
                grade = min(SLOPE_GRADE_PER_LEVEL * level * jitter, SLOPE_GRADE_CAP)
                hf = slope(grade, kind.split("-")[1], length, cell_size, level)
            elif kind in ("stairs-up", "stairs-down"):
                rise = _stair_rise_for_level(level, levels) * jitter
                n_steps = max(int((length - 2 * LEAD_IN) / STAIR_RUN), 1)
                hf = stairs(rise, STAIR_RUN, n_steps, kind.split("-")[1],
                            length, cell_size, level)
            else:
                amp = ROUGH_AMP_PER_LEVEL * level * jitter
                hf = rough(amp, int(sub.generate_state(1)[0]), length, cell_size, level)
            terrains.append(hf)
    return TerrainSet(tuple(terrains), levels, variations)


class TerrainTable:
    """Stacked heightfields with identical grids, for batched per-env queries."""

    def __init__(self, terrains):
        terrains = list(terrains)
        if not terrains:
            raise ValueError("terrain table needs at least one heightfield")
        cell = terrains[0].cell_size
        n = len(terrains[0].heights)
        origin = terrains[0].origin_x
        for hf in terrains:
            if hf.cell_size != cell or len(hf.heights) != n or hf.origin_x != origin:
                raise ValueError("all heightfields in a table must share one grid")
        self.cell_size = cell
        self.origin_x = origin
        self.heights = np.stack([hf.heights for hf in terrains])  # (T, n)
        self.levels = np.array([hf.difficulty_level for hf in terrains])
        self.n_cells = n

    @property
    def length(self) -> float:
        return (self.n_cells - 1) * self.cell_size

    def height(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        u = (x - self.origin_x) / self.cell_size
        i = np.clip(np.floor(u).astype(np.int64), 0, self.n_cells - 2)
        f = np.clip(u - i, 0.0, 1.0)
        h0 = self.heights[idx, i]
        h1 = self.heights[idx, i + 1]
        return h0 * (1.0 - f) + h1 * f

    def height_and_slope(self, idx: np.ndarray, x: np.ndarray):
        u = (x - self.origin_x) / self.cell_size
        i = np.clip(np.floor(u).astype(np.int64), 0, self.n_cells - 2)
        f = np.clip(u - i, 0.0, 1.0)
        h0 = self.heights[idx, i]
        h1 = self.heights[idx, i + 1]
        s = (h1 - h0) / self.cell_size
        inside = (u >= 0.0) & (u <= self.n_cells - 1)
        return h0 * (1.0 - f) + h1 * f, np.where(inside, s, 0.0)


def to_csv(hf: Heightfield, path: str) -> None:
    """Write (x, height) rows for external plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "height"])
        for i, h in enumerate(hf.heights):
            w.writerow([hf.origin_x + i * hf.cell_size, h])


def named_terrain(name: str, seed: int = 0, length: float = DEFAULT_LENGTH,
                  cell_size: float = DEFAULT_CELL) -> Heightfield:
    """Evaluation terrains by name; stairs use the 0.13 m rise / 0.30 m run geometry."""
    n_steps = max(int((length - 2 * LEAD_IN) / STAIR_RUN), 1)
    if name == "flat":
        return flat(0.0, length, cell_size)
    if name == "slope-up":
        return slope(0.2, "up", length, cell_size)
    if name == "slope-down":
        return slope(0.2, "down", length, cell_size)
    if name == "stairs-up":
        return stairs(0.13, STAIR_RUN, n_steps, "up", length, cell_size)
    if name == "stairs-down":
        return stairs(0.13, STAIR_RUN, n_steps, "down", length, cell_size)
    if name == "rough":
        return rough(0.04, seed or 1234, length, cell_size)
    if name == "grass":
        # rough field plus scattered shallow pits; the harness lowers friction
        hf = rough(0.03, seed or 4321, length, cell_size)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 77])))
        h = hf.heights.copy()
        n_pits = 6
        for _ in range(n_pits):
            cx = rng.uniform(LEAD_IN + 0.5, length - 0.5)
            half = rng.uniform(0.05, 0.15)
            depth = rng.uniform(0.01, 0.04)
            xs = _grid(length, cell_size)
            mask = np.abs(xs - cx) < half
            h[mask] -= depth
        return Heightfield(cell_size, h, 0.0, "rough", 0)
    raise ValueError(
        f"unknown terrain {name!r}; choose from flat, slope-up, slope-down, "
        "stairs-up, stairs-down, rough, grass"
    )


GRASS_FRICTION = 0.5
