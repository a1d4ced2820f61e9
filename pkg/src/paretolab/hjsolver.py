"""Monotone upwind solver for the limiting first-order equation

    prod_i du/dx_i = (cd/d)^d * f   on the positive orthant, u = 0 on its boundary,

discretized with backward differences on a regular grid. Each node depends only
on coordinatewise-smaller nodes, so a single lexicographic sweep is an exact
fixed point of the scheme.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Box

GROWTH_UPPER_BOUND = math.e


@dataclass(frozen=True)
class GridSpec:
    """Regular lattice on a box anchored at the origin; nodes include both ends."""

    box: Box
    nodes_per_axis: tuple[int, ...]

    def __post_init__(self):
        nodes = tuple(int(n) for n in self.nodes_per_axis)
        object.__setattr__(self, "nodes_per_axis", nodes)
        if np.any(self.box.lo != 0.0):
            raise ValueError("grid box must be anchored at the origin")
        if len(nodes) != self.box.dimension:
            raise ValueError("nodes_per_axis length must match box dimension")
        if any(n < 2 for n in nodes):
            raise ValueError("need at least 2 nodes per axis")

    @property
    def dimension(self) -> int:
        return self.box.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def spacing(self) -> np.ndarray:
        return (self.box.hi - self.box.lo) / (np.asarray(self.nodes_per_axis) - 1)

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.linspace(self.box.lo[axis], self.box.hi[axis], self.nodes_per_axis[axis])

    def to_dict(self) -> dict:
        return {
            "box": {"lo": [float(v) for v in self.box.lo], "hi": [float(v) for v in self.box.hi]},
            "nodes_per_axis": list(self.nodes_per_axis),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(Box(np.asarray(data["box"]["lo"]), np.asarray(data["box"]["hi"])),
                   tuple(data["nodes_per_axis"]))


class GridField:
    """Dense scalar field on a GridSpec, lexicographic (C) index order."""

    __slots__ = ("spec", "values")

    def __init__(self, spec: GridSpec, values: np.ndarray):
        arr = np.asarray(values, dtype=float)
        if arr.shape != spec.shape:
            raise ValueError(f"values shape {arr.shape} does not match grid {spec.shape}")
        self.spec = spec
        self.values = arr

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridField):
            return NotImplemented
        return self.spec == other.spec and bool(np.all(self.values == other.values))

    def is_nondecreasing(self) -> bool:
        """True when the field never decreases along any grid line."""
        return all(bool(np.all(np.diff(self.values, axis=a) >= 0)) for a in range(self.spec.dimension))

    def to_csv(self, path) -> None:
        if self.spec.dimension != 2:
            raise ValueError("CSV raster export is for d = 2; use binary export instead")
        with open(path, "w", newline="") as fh:
            for row in self.values:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")

    def to_binary(self, data_path, header_path) -> None:
        self.values.astype("<f8").tofile(data_path)
        header = {"spec": self.spec.to_dict(), "dtype": "float64", "order": "lexicographic"}
        with open(header_path, "w") as fh:
            json.dump(header, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_binary(cls, data_path, header_path) -> "GridField":
        with open(header_path) as fh:
            header = json.load(fh)
        spec = GridSpec.from_dict(header["spec"])
        values = np.fromfile(data_path, dtype="<f8").reshape(spec.shape)
        return cls(spec, values)


# ---------------------------------------------------------------------------
# growth constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantEntry:
    value: float
    provenance: str  # "exact" or "estimated"
    ci_halfwidth: float | None = None

    def __post_init__(self):
        if self.provenance not in ("exact", "estimated"):
            raise ValueError(f"provenance must be 'exact' or 'estimated', got {self.provenance!r}")
        if self.provenance == "estimated" and self.ci_halfwidth is None:
            raise ValueError("estimated entries must carry a confidence-interval half-width")
        if not (math.isfinite(self.value) and self.value > 0):
            raise ValueError("constant must be finite and positive")


class ConstantsTable:
    """Growth constants per dimension; d = 2 is pinned to its exact value 2."""

    def __init__(self, entries: dict[int, ConstantEntry] | None = None):
        table = {2: ConstantEntry(2.0, "exact")}
        if entries:
            table.update({int(d): e for d, e in entries.items()})
        if table[2].value != 2.0 or table[2].provenance != "exact":
            raise ValueError("the d = 2 entry must be the exact value 2")
        self._entries = table

    def get(self, dimension: int) -> ConstantEntry:
        try:
            return self._entries[dimension]
        except KeyError:
            raise KeyError(f"no growth-constant entry for d = {dimension}; "
                           f"known: {sorted(self._entries)}") from None

    def __contains__(self, dimension: int) -> bool:
        return dimension in self._entries

    def dimensions(self) -> list[int]:
        return sorted(self._entries)

    def with_estimate(self, dimension: int, value: float, ci_halfwidth: float) -> "ConstantsTable":
        if dimension == 2:
            raise ValueError("the d = 2 entry is exact and cannot be overwritten")
        entries = dict(self._entries)
        entries[dimension] = ConstantEntry(float(value), "estimated", float(ci_halfwidth))
        return ConstantsTable(entries)

    def to_json(self) -> str:
        payload = {
            str(d): {"value": e.value, "provenance": e.provenance, "ci_halfwidth": e.ci_halfwidth}
            for d, e in sorted(self._entries.items())
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ConstantsTable":
        raw = json.loads(text)
        entries = {
            int(d): ConstantEntry(v["value"], v["provenance"], v.get("ci_halfwidth"))
            for d, v in raw.items()
        }
        return cls(entries)


def cd_bounds(dimension: int) -> tuple[float, float]:
    """Proven bracket for the chain-growth constant: the classical lower bound
    d^2 / (d!^(1/d) * Gamma(1/d)) and the upper bound e."""
    if not 2 <= dimension <= 8:
        raise ValueError(f"dimension must be in [2, 8], got {dimension}")
    lower = dimension**2 / (math.factorial(dimension) ** (1.0 / dimension) * math.gamma(1.0 / dimension))
    return lower, GROWTH_UPPER_BOUND


# ---------------------------------------------------------------------------
# scheme
# ---------------------------------------------------------------------------


def local_update(neighbors: Sequence[float], h: Sequence[float], rhs: float) -> float:
    """Unique U >= max(neighbors) with prod_i max(U - neighbors[i], 0)/h[i] = rhs.

    Closed form for d = 2; Newton from an upper bracket for d >= 3 (the product
    is convex and increasing above max(neighbors), so the iteration is safe).
    """
    n = np.asarray(neighbors, dtype=float)
    hs = np.asarray(h, dtype=float)
    if n.size != hs.size:
        raise ValueError("neighbors and spacings must have equal length")
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(hs)) and math.isfinite(rhs)):
        raise ValueError("local_update requires finite inputs")
    if np.any(hs <= 0):
        raise ValueError("spacings must be positive")
    if rhs < 0:
        raise ValueError("right-hand side must be nonnegative")
    mx = float(n.max())
    if rhs == 0.0:
        return mx
    if n.size == 2:
        a, b = float(n[0]), float(n[1])
        r = rhs * float(hs[0]) * float(hs[1])
        return (a + b) / 2.0 + math.sqrt((a - b) ** 2 / 4.0 + r)
    return _newton_root(n, hs, rhs, mx)


def _newton_root(n: np.ndarray, hs: np.ndarray, rhs: float, mx: float) -> float:
    d = n.size
    hprod = float(np.prod(hs))
    u = mx + (rhs * hprod) ** (1.0 / d)  # upper bracket: every factor >= (rhs prod h)^(1/d)
    for _ in range(100):
        diffs = u - n
        p = float(np.prod(diffs / hs))
        g = p - rhs
        if abs(g) <= 1e-13 * max(rhs, 1.0):
            break
        gp = p * float(np.sum(1.0 / diffs))
        step = g / gp
        u -= step
        if u <= mx:  # safeguard; unreachable for convex g but cheap
            u = (u + step + mx) / 2.0
        if abs(step) <= 1e-16 * max(abs(u), 1.0):
            break
    return u


def _as_eval(f) -> Callable[[np.ndarray], float]:
    return f.evaluate if hasattr(f, "evaluate") else f


def solve_hj(f, cd: float, spec: GridSpec) -> GridField:
    """Single causal sweep in increasing lexicographic node order; exact zero on
    the boundary faces through the origin."""
    d = spec.dimension
    shape = spec.shape
    hs = spec.spacing
    axes = [spec.axis_coords(a) for a in range(d)]
    factor = (cd / d) ** d
    feval = _as_eval(f)
    values = np.zeros(shape)
    for idx in np.ndindex(*shape):
        if 0 in idx:
            continue
        x = np.array([axes[a][idx[a]] for a in range(d)])
        rhs = factor * float(feval(x))
        nbrs = [values[idx[:a] + (idx[a] - 1,) + idx[a + 1:]] for a in range(d)]
        values[idx] = local_update(nbrs, hs, rhs)
    return GridField(spec, values)


def resweep_drift(field: GridField, f, cd: float) -> float:
    """Max value change from re-applying the update at every node in sweep order."""
    d = field.spec.dimension
    hs = field.spec.spacing
    axes = [field.spec.axis_coords(a) for a in range(d)]
    factor = (cd / d) ** d
    feval = _as_eval(f)
    values = field.values.copy()
    drift = 0.0
    for idx in np.ndindex(*field.spec.shape):
        if 0 in idx:
            continue
        x = np.array([axes[a][idx[a]] for a in range(d)])
        rhs = factor * float(feval(x))
        nbrs = [values[idx[:a] + (idx[a] - 1,) + idx[a + 1:]] for a in range(d)]
        new = local_update(nbrs, hs, rhs)
        drift = max(drift, abs(new - values[idx]))
        values[idx] = new
    return drift


def residual_max(field: GridField, f, cd: float) -> float:
    """Max interior defect |prod_i max(backward difference, 0) - rhs| / max(1, rhs)."""
    d = field.spec.dimension
    hs = field.spec.spacing
    u = field.values
    interior = tuple(slice(1, None) for _ in range(d))
    lhs = np.ones_like(u[interior])
    for a in range(d):
        lo = tuple(slice(1, None) if b != a else slice(None, -1) for b in range(d))
        diff = (u[interior] - u[lo]) / hs[a]
        lhs *= np.maximum(diff, 0.0)
    feval = _as_eval(f)
    factor = (cd / d) ** d
    axes = [field.spec.axis_coords(a) for a in range(d)]
    rhs = np.empty_like(lhs)
    for idx in np.ndindex(*lhs.shape):
        x = np.array([axes[a][idx[a] + 1] for a in range(d)])
        rhs[idx] = factor * float(feval(x))
    return float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, rhs)))


def exact_solution_uniform(spec: GridSpec, cd: float, value: float = 1.0) -> GridField:
    """Closed-form solution for constant density: cd * (value * prod_i x_i)^(1/d)."""
    d = spec.dimension
    out = np.ones(spec.shape)
    for a in range(d):
        coords = spec.axis_coords(a) ** (1.0 / d)
        shape = [1] * d
        shape[a] = spec.shape[a]
        out = out * coords.reshape(shape)
    return GridField(spec, cd * value ** (1.0 / d) * out)


def sup_norm_diff(a: GridField, b: GridField, subbox: Box | None = None) -> float:
    """Max |a - b| over grid nodes, optionally restricted to nodes inside subbox."""
    if a.spec != b.spec:
        raise ValueError("grid specs must be identical for sup-norm comparison")
    diff = np.abs(a.values - b.values)
    if subbox is None:
        return float(diff.max()) if diff.size else 0.0
    if subbox.dimension != a.spec.dimension:
        raise ValueError("subbox dimension must match the grid")
    masks = []
    for axis in range(a.spec.dimension):
        c = a.spec.axis_coords(axis)
        masks.append(np.nonzero((c >= subbox.lo[axis]) & (c <= subbox.hi[axis]))[0])
    if any(m.size == 0 for m in masks):
        return 0.0
    return float(diff[np.ix_(*masks)].max())
