"""Points, point clouds, the coordinatewise partial order, and the geometric
regions (boxes, orthogonal-corner simplices, backward test-function sets) that
the rest of the library filters against.

All types are immutable after construction and safe to share across tasks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

MIN_DIMENSION = 2
MAX_DIMENSION = 8


class DimensionMismatchError(ValueError):
    """Operands live in different dimensions."""


class DuplicatePointError(ValueError):
    """A point cloud contains an exact duplicate and deduplication was not requested."""


class CloudFormatError(ValueError):
    """A serialized point cloud could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def as_point(coords: Sequence[float]) -> np.ndarray:
    """Validate and return a point of the positive orthant as a float array."""
    p = np.array(coords, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"a point must be a flat coordinate vector, got shape {p.shape}")
    if not MIN_DIMENSION <= p.size <= MAX_DIMENSION:
        raise ValueError(f"dimension must be in [{MIN_DIMENSION}, {MAX_DIMENSION}], got {p.size}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    if np.any(p < 0):
        raise ValueError("point coordinates must be nonnegative")
    p.flags.writeable = False
    return p


def _check_same_dim(d1: int, d2: int) -> None:
    if d1 != d2:
        raise DimensionMismatchError(f"dimension mismatch: {d1} vs {d2}")


def dominates(x: Sequence[float], y: Sequence[float]) -> bool:
    """True iff x is coordinatewise <= y (non-strict; every point dominates itself)."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    _check_same_dim(xa.size, ya.size)
    return bool(np.all(xa <= ya))


class PointCloud:
    """Immutable finite set of distinct points in [0, inf)^d, 2 <= d <= 8.

    Construction rejects exact duplicate rows unless ``dedupe=True``, in which
    case later occurrences are dropped and the order of first appearance kept.
    """

    __slots__ = ("_points",)

    def __init__(self, points: Union[np.ndarray, Iterable[Sequence[float]]], *, dedupe: bool = False):
        arr = np.array(points, dtype=float, copy=True)
        if arr.size == 0:
            arr = arr.reshape(0, MIN_DIMENSION) if arr.ndim != 2 else arr
        if arr.ndim != 2:
            raise ValueError(f"a point cloud must be a 2-d array of shape (n, d), got shape {arr.shape}")
        d = arr.shape[1]
        if not MIN_DIMENSION <= d <= MAX_DIMENSION:
            raise ValueError(f"dimension must be in [{MIN_DIMENSION}, {MAX_DIMENSION}], got {d}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("point coordinates must be finite")
        if np.any(arr < 0):
            raise ValueError("point coordinates must be nonnegative")
        dup = _first_duplicate(arr)
        if dup is not None:
            if dedupe:
                arr = _drop_duplicates(arr)
            else:
                i, j = dup
                coords = ", ".join(repr(float(v)) for v in arr[j])
                raise DuplicatePointError(
                    f"duplicate point ({coords}) at rows {i} and {j}; pass dedupe to drop repeats"
                )
        arr.flags.writeable = False
        self._points = arr

    @property
    def points(self) -> np.ndarray:
        """(n, d) read-only coordinate array."""
        return self._points

    @property
    def dimension(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return self._points.shape[0]

    def __iter__(self):
        return iter(self._points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self._points.shape == other._points.shape and bool(np.all(self._points == other._points))

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)}, d={self.dimension})"

    @classmethod
    def empty(cls, dimension: int) -> "PointCloud":
        return cls(np.empty((0, dimension)))


def _first_duplicate(arr: np.ndarray) -> tuple[int, int] | None:
    """Return (first_row, repeat_row) of the first duplicated point, or None."""
    if arr.shape[0] < 2:
        return None
    seen: dict[bytes, int] = {}
    for j in range(arr.shape[0]):
        key = arr[j].tobytes()
        if key in seen:
            return seen[key], j
        seen[key] = j
    return None


def _drop_duplicates(arr: np.ndarray) -> np.ndarray:
    seen: set[bytes] = set()
    keep = []
    for j in range(arr.shape[0]):
        key = arr[j].tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(j)
    return arr[keep]


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned interval [lo, hi] = {y : lo <= y <= hi componentwise}."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", as_point(self.lo))
        object.__setattr__(self, "hi", as_point(self.hi))
        _check_same_dim(self.lo.size, self.hi.size)
        if np.any(self.lo > self.hi):
            raise ValueError("box corners must satisfy lo <= hi componentwise")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self) -> int:
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    @property
    def dimension(self) -> int:
        return self.lo.size

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, z: Sequence[float]) -> bool:
        za = np.asarray(z, dtype=float)
        _check_same_dim(za.size, self.dimension)
        return bool(np.all(za >= self.lo) and np.all(za <= self.hi))

    def mask(self, points: np.ndarray) -> np.ndarray:
        return np.all(points >= self.lo, axis=1) & np.all(points <= self.hi, axis=1)


@dataclass(frozen=True, eq=False)
class Simplex:
    """Orthogonal-corner simplex {z : z <= corner and <corner - z, weights> <= 1}.

    Side length along axis i is 1/weights[i].
    """

    corner: np.ndarray
    weights: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, Simplex):
            return NotImplemented
        return np.array_equal(self.corner, other.corner) and np.array_equal(self.weights, other.weights)

    def __hash__(self) -> int:
        return hash((self.corner.tobytes(), self.weights.tobytes()))

    def __post_init__(self):
        object.__setattr__(self, "corner", as_point(self.corner))
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be a flat vector")
        _check_same_dim(self.corner.size, w.size)
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and strictly positive")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def dimension(self) -> int:
        return self.corner.size

    def contains(self, z: Sequence[float]) -> bool:
        za = np.asarray(z, dtype=float)
        _check_same_dim(za.size, self.dimension)
        return bool(np.all(za <= self.corner) and float((self.corner - za) @ self.weights) <= 1.0)

    def mask(self, points: np.ndarray) -> np.ndarray:
        below = np.all(points <= self.corner, axis=1)
        return below & ((self.corner - points) @ self.weights <= 1.0)

    def bounding_box(self) -> Box:
        """Smallest box containing the simplex, clipped to the positive orthant."""
        lo = np.maximum(self.corner - 1.0 / self.weights, 0.0)
        return Box(lo, self.corner)


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Smooth scalar function with an explicitly supplied gradient.

    ``check_gradient`` probes random points and compares the supplied gradient
    against central finite differences to relative tolerance 1e-5.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    name: str = "anonymous"

    def __call__(self, z: Sequence[float]) -> float:
        return float(self.value(np.asarray(z, dtype=float)))

    def grad(self, z: Sequence[float]) -> np.ndarray:
        return np.asarray(self.gradient(np.asarray(z, dtype=float)), dtype=float)

    def check_gradient(self, dimension: int, *, probes: int = 32, seed: int = 0,
                       rtol: float = 1e-5, step: float = 1e-6) -> None:
        rng = np.random.default_rng(seed)
        for _ in range(probes):
            z = rng.uniform(0.1, 2.0, size=dimension)
            g = self.grad(z)
            fd = np.empty(dimension)
            for i in range(dimension):
                e = np.zeros(dimension)
                e[i] = step
                fd[i] = (self(z + e) - self(z - e)) / (2 * step)
            scale = max(float(np.max(np.abs(g))), 1.0)
            if np.any(np.abs(g - fd) > rtol * scale + 1e-8):
                raise ValueError(
                    f"gradient of {self.name!r} disagrees with finite differences at {z}: {g} vs {fd}"
                )

    @classmethod
    def linear(cls, coeffs: Sequence[float]) -> "TestFunction":
        c = np.asarray(coeffs, dtype=float)
        label = "linear:" + ",".join(repr(float(v)) for v in c)
        return cls(value=lambda z: float(z @ c), gradient=lambda z: c.copy(), name=label)


def make_test_function(spec: str) -> TestFunction:
    """Build a test function from a config string such as ``"linear:1,1"``."""
    kind, _, args = spec.partition(":")
    if kind == "linear":
        if not args:
            raise ValueError("linear test function needs coefficients, e.g. 'linear:1,1'")
        coeffs = [float(v) for v in args.split(",")]
        return TestFunction.linear(coeffs)
    raise ValueError(f"unknown test function {spec!r}; known kinds: linear")


@dataclass(frozen=True, eq=False)
class BackwardSet:
    """Points within sqrt(epsilon) of the anchor (strictly), dominated by it,
    whose test-function value is within epsilon of the anchor's value."""

    anchor: np.ndarray
    epsilon: float
    testfn: TestFunction
    _anchor_value: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "anchor", as_point(self.anchor))
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError("epsilon must be finite and positive")
        object.__setattr__(self, "_anchor_value", self.testfn(self.anchor))

    @property
    def dimension(self) -> int:
        return self.anchor.size

    def contains(self, z: Sequence[float]) -> bool:
        za = np.asarray(z, dtype=float)
        _check_same_dim(za.size, self.dimension)
        if float(np.linalg.norm(za - self.anchor)) >= math.sqrt(self.epsilon):
            return False
        if not np.all(za <= self.anchor):
            return False
        return self.testfn(za) >= self._anchor_value - self.epsilon

    def mask(self, points: np.ndarray) -> np.ndarray:
        inside_ball = np.linalg.norm(points - self.anchor, axis=1) < math.sqrt(self.epsilon)
        below = np.all(points <= self.anchor, axis=1)
        out = inside_ball & below
        if np.any(out):
            idx = np.nonzero(out)[0]
            vals = np.array([self.testfn(points[i]) for i in idx])
            out[idx] &= vals >= self._anchor_value - self.epsilon
        return out

    def bounding_box(self) -> Box:
        r = math.sqrt(self.epsilon)
        lo = np.maximum(self.anchor - r, 0.0)
        return Box(lo, self.anchor)


Region = Union[Box, Simplex, BackwardSet]


def region_contains(region: Region, z: Sequence[float]) -> bool:
    """Membership per the region's defining inequalities; boundaries are members
    except the backward set's ball, which is open."""
    return region.contains(z)


def filter_points(cloud: PointCloud, region: Region) -> PointCloud:
    """Members of the cloud inside the region, original order preserved."""
    if len(cloud) == 0:
        return cloud
    _check_same_dim(cloud.dimension, region.dimension)
    return PointCloud(cloud.points[region.mask(cloud.points)])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CSV_HEADER_PREFIX = "x1"


def cloud_to_csv(cloud: PointCloud, path, *, header: bool = False) -> None:
    """Write one point per row, d columns, shortest round-trip floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{i + 1}" for i in range(cloud.dimension)])
        for row in cloud.points:
            w.writerow([repr(float(v)) for v in row])


def cloud_from_csv(path, *, dedupe: bool = False) -> PointCloud:
    """Parse a point-cloud CSV; raises CloudFormatError with the offending line."""
    with open(path, "r", newline="") as fh:
        return _parse_cloud_csv(fh, dedupe=dedupe)


def _parse_cloud_csv(fh, *, dedupe: bool) -> PointCloud:
    rows: list[list[float]] = []
    width: int | None = None
    reader = csv.reader(fh)
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if lineno == 1 and row[0].strip().lower() == _CSV_HEADER_PREFIX:
            continue
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise CloudFormatError(f"non-numeric value in {row!r}", line=lineno) from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise CloudFormatError(f"expected {width} columns, got {len(vals)}", line=lineno)
        rows.append(vals)
    if not rows:
        raise CloudFormatError("no points found")
    try:
        return PointCloud(np.array(rows), dedupe=dedupe)
    except (ValueError, DuplicatePointError) as exc:
        if isinstance(exc, DuplicatePointError):
            raise
        raise CloudFormatError(str(exc)) from None


def cloud_to_json(cloud: PointCloud) -> str:
    return json.dumps([[float(v) for v in row] for row in cloud.points])


def cloud_from_json(text: str, *, dedupe: bool = False) -> PointCloud:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CloudFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
        raise CloudFormatError("expected a JSON array of coordinate arrays")
    if not data:
        raise CloudFormatError("no points found")
    return PointCloud(np.array(data, dtype=float), dedupe=dedupe)


def region_to_json(region: Region) -> str:
    if isinstance(region, Box):
        payload = {"type": "box", "lo": list(map(float, region.lo)), "hi": list(map(float, region.hi))}
    elif isinstance(region, Simplex):
        payload = {
            "type": "simplex",
            "corner": list(map(float, region.corner)),
            "weights": list(map(float, region.weights)),
        }
    elif isinstance(region, BackwardSet):
        payload = {
            "type": "backward",
            "anchor": list(map(float, region.anchor)),
            "epsilon": float(region.epsilon),
            "testfn": region.testfn.name,
        }
    else:
        raise TypeError(f"not a region: {region!r}")
    return json.dumps(payload)


def region_from_json(text: str) -> Region:
    data = json.loads(text)
    kind = data.get("type")
    if kind == "box":
        return Box(np.asarray(data["lo"]), np.asarray(data["hi"]))
    if kind == "simplex":
        return Simplex(np.asarray(data["corner"]), np.asarray(data["weights"]))
    if kind == "backward":
        return BackwardSet(np.asarray(data["anchor"]), float(data["epsilon"]),
                           make_test_function(data["testfn"]))
    raise ValueError(f"unknown region type {kind!r}; expected box, simplex or backward")
