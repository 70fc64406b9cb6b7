"""Finite metric measure spaces.

A space is a finite set of points carrying a metric and a probability
measure (per-point positive weights summing to 1), with the diameter
normalized to 1.  Points are integer ids 0..m-1.  All built-in spaces are
coordinate-backed: the distance is the Euclidean distance of stored
coordinates raised to a snowflake exponent eps in (0, 1] (eps = 1 for the
plain metric).  Distances are evaluated on demand in row blocks instead
of storing the full m x m matrix, so spaces up to ~2^14 points fit in a
few MB.

Generators (``make_space``) accept descriptor strings:

    interval_grid(1024)           uniform grid on a segment
    square_grid(64x64)            uniform grid on a square (also: square_grid(64))
    circle_grid(256)              equispaced points on a circle, chord metric
    snowflake_interval(512, 0.5)  interval with metric |x - y|^eps
    sierpinski_carpet(4)          centers of the level-k carpet cells

``load_space`` ingests point-cloud text files (see the module docstring of
``_parse_cloud`` for the format).  ``ball`` uses the open-ball convention
d(center, y) < r everywhere.  ``estimate_regularity`` fits log |B(x, r)|
against log r to estimate the volume-growth exponent Q of the space
(|B| ~ r^Q for an Ahlfors Q-regular measure).
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MetricMeasureSpace",
    "RegularityEstimate",
    "make_space",
    "load_space",
    "save_space",
    "ball",
    "estimate_regularity",
]

# Full-pairwise scans are done in row blocks of this many points to keep
# peak memory around block * m doubles.
_BLOCK = 1024


@dataclass
class MetricMeasureSpace:
    """Finite metric measure space with unit diameter.

    coords are pre-scaled so the maximum pairwise Euclidean distance is 1;
    the metric is then euclidean**snowflake, which keeps the diameter at 1
    for any snowflake exponent in (0, 1].
    """

    coords: np.ndarray          # (m, dim) float
    weight: np.ndarray          # (m,) positive, sums to 1
    label: str
    snowflake: float = 1.0
    resolution: float = field(default=0.0)   # min positive pairwise distance
    _sqnorm: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n_points)

    @property
    def diameter(self) -> float:
        return 1.0

    def dist_block(self, idx) -> np.ndarray:
        """Distances from points idx (array of ids) to all points, shape (len(idx), m).

        Computed as sqrt(|a|^2 + |b|^2 - 2 a.b) through one matrix product;
        squared distances below 1e-12 of the coordinate scale are snapped
        to 0 to absorb the cancellation error of this formula.
        """
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        if self._sqnorm is None:
            self._sqnorm = np.einsum("ij,ij->i", self.coords, self.coords)
        sq = self._sqnorm[idx, None] + self._sqnorm[None, :]
        sq -= 2.0 * (self.coords[idx] @ self.coords.T)
        np.maximum(sq, 0.0, out=sq)
        sq[sq < 1e-12 * max(1.0, float(self._sqnorm.max()))] = 0.0
        d = np.sqrt(sq, out=sq)
        if self.snowflake != 1.0:
            d **= self.snowflake
        return d

    def dist_row(self, i: int) -> np.ndarray:
        return self.dist_block([int(i)])[0]

    def dist(self, i: int, j: int) -> float:
        d = float(np.linalg.norm(self.coords[int(i)] - self.coords[int(j)]))
        return d ** self.snowflake if self.snowflake != 1.0 else d

    def validate(self, rng_seed: int = 0, scan: bool = True) -> None:
        """Spot-check metric axioms and normalization; raises on failure.

        scan=False skips the full pairwise diameter re-scan (construction
        already normalized from a complete scan).
        """
        if np.any(self.weight <= 0):
            raise ValueError("all weights must be positive")
        if abs(float(self.weight.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if scan:
            lo, hi = _pairwise_extremes(self)
            if abs(hi - 1.0) > 1e-9:
                raise ValueError(f"diameter must be 1 after normalization, got {hi}")
        rng = np.random.default_rng(rng_seed)
        m = self.n_points
        tri = rng.integers(0, m, size=(min(200, m * m), 3))
        for a, b, c in tri:
            if self.dist(a, b) > self.dist(a, c) + self.dist(c, b) + 1e-9:
                raise ValueError(f"triangle inequality fails on ({a},{b},{c})")


@dataclass
class RegularityEstimate:
    """Result of a log-log volume-growth fit |B(x,r)| ~ const * r^Q."""

    Q: float
    lower_const: float
    upper_const: float
    fit_range: tuple[float, float]


def _pairwise_extremes(space: MetricMeasureSpace) -> tuple[float, float]:
    """(min positive, max) pairwise distance, scanned in row blocks."""
    m = space.n_points
    lo, hi = np.inf, 0.0
    for start in range(0, m, _BLOCK):
        idx = np.arange(start, min(start + _BLOCK, m))
        d = space.dist_block(idx)
        d[np.arange(len(idx)), idx] = np.inf       # ignore the diagonal
        hi = max(hi, float(np.max(np.where(np.isinf(d), -np.inf, d))))
        pos = d[d > 0]
        if pos.size:
            lo = min(lo, float(np.min(pos)))
    return lo, hi


def _finalize(coords, weight, label, snowflake=1.0) -> MetricMeasureSpace:
    """Normalize diameter to 1, compute the resolution, and validate."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    weight = np.asarray(weight, dtype=float)
    if coords.shape[0] < 2:
        raise ValueError("a space needs at least 2 points")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    # scan the Euclidean extremes once, scale coordinates so the Euclidean
    # diameter is 1 (hence metric diameter 1 for any snowflake exponent),
    # and derive the resolution from the same scan
    space = MetricMeasureSpace(coords, weight / weight.sum(), label, snowflake=1.0)
    lo, hi = _pairwise_extremes(space)
    if hi <= 0:
        raise ValueError("all points coincide; diameter cannot be normalized")
    space.coords = coords / hi
    space._sqnorm = None
    space.snowflake = snowflake
    space.resolution = (lo / hi) ** snowflake
    space.validate(scan=False)
    return space


# ---------------------------------------------------------------------------
# generators


def _gen_interval(m: int) -> np.ndarray:
    if m < 2:
        raise ValueError("interval_grid needs m >= 2")
    return np.linspace(0.0, 1.0, m)[:, None]


def _gen_square(m: int) -> np.ndarray:
    if m < 2:
        raise ValueError("square_grid needs m >= 2 points per axis")
    axis = np.linspace(0.0, 1.0, m)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _gen_circle(m: int) -> np.ndarray:
    if m < 2:
        raise ValueError("circle_grid needs m >= 2")
    theta = 2.0 * np.pi * np.arange(m) / m
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _gen_carpet(k: int) -> np.ndarray:
    if k < 1:
        raise ValueError("sierpinski_carpet needs level k >= 1")
    # cells surviving k subdivisions: drop the middle ninth each round
    cells = np.array([[0.0, 0.0]])
    for _ in range(k):
        offs = np.array([[i, j] for i in range(3) for j in range(3)
                         if not (i == 1 and j == 1)], dtype=float)
        cells = (cells[:, None, :] * 3.0 + offs[None, :, :]).reshape(-1, 2)
    side = 3.0 ** k
    return (cells + 0.5) / side     # cell centers in the unit square


_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*\(\s*([^()]*)\s*\)\s*$")


def make_space(spec: str) -> MetricMeasureSpace:
    """Build a space from a descriptor string; deterministic per descriptor.

    Recognized: interval_grid(m), square_grid(m) or square_grid(mxm),
    circle_grid(m), snowflake_interval(m, eps), sierpinski_carpet(k).
    """
    match = _SPEC_RE.match(spec)
    if not match:
        raise ValueError(f"cannot parse space descriptor {spec!r}")
    name, argstr = match.group(1), match.group(2)
    args = [a.strip() for a in argstr.split(",") if a.strip()] if argstr.strip() else []

    def int_arg(i):
        try:
            return int(args[i])
        except (IndexError, ValueError):
            raise ValueError(f"descriptor {spec!r}: expected integer argument {i}")

    if name == "interval_grid":
        return _finalize(_gen_interval(int_arg(0)), np.ones(int_arg(0)), spec)
    if name == "square_grid":
        raw = args[0] if args else ""
        m = int(raw.split("x")[0]) if "x" in raw else int_arg(0)
        if "x" in raw and raw.split("x")[0] != raw.split("x")[1]:
            raise ValueError("square_grid requires equal axis counts")
        coords = _gen_square(m)
        return _finalize(coords, np.ones(len(coords)), spec)
    if name == "circle_grid":
        coords = _gen_circle(int_arg(0))
        return _finalize(coords, np.ones(len(coords)), spec)
    if name == "snowflake_interval":
        m = int_arg(0)
        try:
            eps = float(args[1])
        except (IndexError, ValueError):
            raise ValueError(f"descriptor {spec!r}: expected snowflake exponent")
        if not 0.0 < eps <= 1.0:
            raise ValueError("snowflake exponent must lie in (0, 1]")
        return _finalize(_gen_interval(m), np.ones(m), spec, snowflake=eps)
    if name == "sierpinski_carpet":
        coords = _gen_carpet(int_arg(0))
        return _finalize(coords, np.ones(len(coords)), spec)
    raise ValueError(f"unknown space generator {name!r}")


# ---------------------------------------------------------------------------
# ingestion


def load_space(path) -> MetricMeasureSpace:
    """Load a point cloud from a text file.

    One point per line: whitespace-separated coordinates, optionally a
    trailing ``w=<weight>`` token; ``#`` starts a comment.  Distances are
    Euclidean, the diameter is normalized to 1, and weights (uniform when
    absent) are renormalized to sum to 1.
    """
    coords, weights = [], []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            w = 1.0
            if tokens[-1].startswith("w="):
                try:
                    w = float(tokens[-1][2:])
                except ValueError:
                    raise ValueError(f"{path}: line {lineno}: bad weight token {tokens[-1]!r}")
                if w <= 0:
                    raise ValueError(f"{path}: line {lineno}: weight must be positive")
                tokens = tokens[:-1]
            try:
                point = [float(t) for t in tokens]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric coordinate in {line!r}")
            if not point:
                raise ValueError(f"{path}: line {lineno}: no coordinates")
            if dim is None:
                dim = len(point)
            elif len(point) != dim:
                raise ValueError(
                    f"{path}: line {lineno}: expected {dim} coordinates, got {len(point)}")
            coords.append(point)
            weights.append(w)
    if len(coords) < 2:
        raise ValueError(f"{path}: need at least 2 points")
    coords = np.asarray(coords, dtype=float)
    if len(np.unique(coords, axis=0)) < len(coords):
        warnings.warn(f"{path}: duplicate points present; nets will ignore copies")
    return _finalize(coords, np.asarray(weights), f"cloud:{path}")


def save_space(space: MetricMeasureSpace, path) -> None:
    """Write the point cloud in the text format that ``load_space`` reads.

    Only coordinates and weights travel; a snowflake exponent is not part
    of the cloud format, so reloading yields the Euclidean metric on the
    same points.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# exported from {space.label}: {space.n_points} points\n")
        for point, w in zip(space.coords, space.weight):
            cols = " ".join(repr(float(c)) for c in point)
            fh.write(f"{cols} w={float(w)!r}\n")


# ---------------------------------------------------------------------------
# balls and regularity


def ball(space: MetricMeasureSpace, center: int, r: float):
    """Open ball {y : d(center, y) < r} as (member ids, total weight)."""
    members = np.flatnonzero(space.dist_row(center) < r)
    return members, float(space.weight[members].sum())


def estimate_regularity(
    space: MetricMeasureSpace,
    n_centers: int = 256,
    n_radii: int = 12,
    fit_range: tuple[float, float] | None = None,
    seed: int = 0,
) -> RegularityEstimate:
    """Estimate the volume-growth exponent Q from a log-log fit.

    Samples up to n_centers points, measures open balls over a geometric
    radius grid inside fit_range, and fits log(mean measure) against
    log r by least squares.  The reported constants are the min/max of
    |B|/r^Q over all sampled (center, radius) pairs.
    """
    m = space.n_points
    if m < 16:
        raise ValueError("regularity estimation needs at least 16 points")
    if fit_range is None:
        # stop short of the diameter: large balls clip at the boundary and
        # bias the slope down
        hi = 0.15
        lo = max(2.0 * space.resolution, 0.015)
        if lo > hi / 1.5:
            lo = hi / 2.5
        fit_range = (lo, hi)
    r_min, r_max = fit_range
    if not 0 < r_min < r_max:
        raise ValueError(f"invalid fit range {fit_range}")
    rng = np.random.default_rng(seed)
    centers = np.sort(rng.choice(m, size=min(m, n_centers), replace=False))
    radii = np.geomspace(r_min, r_max, n_radii)
    d = space.dist_block(centers)
    measures = np.empty((len(centers), n_radii))
    for j, r in enumerate(radii):
        measures[:, j] = (d < r) @ space.weight
    mean_meas = measures.mean(axis=0)
    if np.ptp(measures) == 0:
        raise ValueError("all sampled balls are identical; no growth slope to fit")
    slope, intercept = np.polyfit(np.log(radii), np.log(mean_meas), 1)
    ratios = measures / radii[None, :] ** slope
    return RegularityEstimate(
        Q=float(slope),
        lower_const=float(ratios.min()),
        upper_const=float(ratios.max()),
        fit_range=(float(r_min), float(r_max)),
    )
