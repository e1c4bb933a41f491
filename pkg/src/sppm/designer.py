"""Generation of a single valid unit cell at a target porosity.

The search runs in two stages.  A linear pore-count model (porosity against
number of interior pores) picks ``n``; then the band depth ``d`` separating
the face band from the interior sampling cube is bisected until the measured
porosity is within tolerance.  Porosity falls as ``d`` grows because the
interior pores are squeezed into a smaller cube and overlap more.

Interior pores are thrown once per attempt in normalised coordinates
``u in [0, 1]^3`` and mapped to ``d + u (L - 2d)``.  The map is a uniform
scaling, so the interior network is the same for every ``d`` and pairwise
spacing only grows as ``d`` shrinks; the porosity curve is continuous apart
from the occasional bridge re-targeting.
"""
from __future__ import annotations

import dataclasses
import functools
import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from sppm.connectivity import (
    PoreGraph,
    as_tunnels,
    bridge_surface_to_interior,
    build_degree_bounded_network,
)
from sppm.field import CombinedField, Pore, Region, Tunnel, pore_radius
from sppm.sampling import (
    CellPartition,
    FaceCollision,
    FacePattern,
    SamplingConfig,
    SamplingInfeasible,
    instantiate_cell_pores,
    sample_face_pattern,
    sample_interior,
)
from sppm.seeds import derive_seed, mix_seed
from sppm.voxel import EmptySolid, ValidationReport, face_mismatch, validate_solid, voxelize

log = logging.getLogger(__name__)

POROSITY_RANGE = (0.2, 0.8)


class GenerationExhausted(RuntimeError):
    pass


class DegenerateFit(ValueError):
    pass


class TargetUnreachable(ValueError):
    """Both ends of the band-depth interval miss the target on the same side.

    ``need_more_void`` is true when even the most porous end is below target.
    """

    def __init__(self, message, need_more_void: bool, porosity_range=(math.nan, math.nan)):
        super().__init__(message)
        self.need_more_void = need_more_void
        self.porosity_range = porosity_range


@dataclass(frozen=True)
class DesignSpec:
    """Parameters of one unit-cell design.

    ``cell_side`` defaults to 2 (the ``[-1, 1]^3`` modelling box) so that with
    ``omega = mu = 30`` a porosity of 0.5 takes on the order of a hundred pores.
    """

    target_porosity: float = 0.5
    omega: float = 30.0
    mu: float = 30.0
    level: float = 0.25
    cell_side: float = 2.0
    seed: int = 0
    tolerance: float = 0.001
    max_attempts: int = 40
    resolution: int = 64
    degree_bounds: tuple = (3, 5)
    cutoff_epsilon: float = 1e-4
    face_resolution: int = 32
    face_tolerance: float = 0.01
    n_face_per_axis: Optional[int] = None
    min_distance: Optional[float] = None
    edge_margin: Optional[float] = None
    max_attempts_per_pore: int = 10_000

    def __post_init__(self):
        lo, hi = POROSITY_RANGE
        if not lo <= self.target_porosity <= hi:
            raise ValueError(
                f"target porosity {self.target_porosity} outside the supported range [{lo}, {hi}]"
            )
        for name in ("omega", "mu", "level", "cell_side", "tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        a, b = self.degree_bounds
        if not 1 <= a <= b:
            raise ValueError(f"bad degree bounds {self.degree_bounds}")
        object.__setattr__(self, "degree_bounds", (int(a), int(b)))
        d_lo, d_hi = self.band_window
        if not d_lo < d_hi:
            raise ValueError(
                f"cell side {self.cell_side} too small for pore weight {self.omega}: "
                f"band-depth window [{d_lo:.3f}, {d_hi:.3f}] is empty"
            )

    def replace(self, **changes) -> "DesignSpec":
        return dataclasses.replace(self, **changes)

    @property
    def pore_radius(self) -> float:
        return pore_radius(self.omega, self.level)

    @property
    def base_edge_margin(self) -> float:
        """Face pores stay where their kernel is below ``C/8`` on the neighbouring faces."""
        if self.edge_margin is not None:
            return self.edge_margin
        return math.sqrt(math.log(8.0 / self.level) / self.omega)

    @property
    def band_window(self) -> tuple:
        """Search interval for the band depth.

        The lower end keeps a lone interior pore's kernel below ``C/8`` on the
        cell faces, which keeps opposite outer voxel layers in agreement.
        """
        d_lo = math.sqrt(math.log(8.0 / self.level) / self.omega)
        return d_lo, self.cell_side / 2 - self.base_edge_margin

    @property
    def reference_depth(self) -> float:
        d_lo, d_hi = self.band_window
        return d_lo + 0.25 * (d_hi - d_lo)


@dataclass(frozen=True)
class PoreCountModel:
    """Least-squares line ``porosity = slope * n + intercept`` over interior pore counts."""

    slope: float
    intercept: float
    samples: tuple = ()

    def predict(self, n) -> float:
        return self.slope * n + self.intercept

    def invert(self, porosity: float) -> int:
        if self.slope == 0:
            raise DegenerateFit("flat pore-count model cannot be inverted")
        return max(1, int(round((porosity - self.intercept) / self.slope)))


def fit_pore_count_model(samples) -> PoreCountModel:
    """Ordinary least squares over ``(n, porosity)`` records.

    Repeated ``n`` values are averaged first, so the line goes through the mean
    porosity of each pore count.
    """
    by_n = {}
    for n, rho in samples:
        by_n.setdefault(float(n), []).append(float(rho))
    if len(by_n) < 2:
        raise DegenerateFit("need samples at two or more distinct pore counts")
    x = np.array(sorted(by_n))
    y = np.array([np.mean(by_n[k]) for k in x])
    xm, ym = x.mean(), y.mean()
    slope = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    intercept = float(ym - slope * xm)
    return PoreCountModel(slope, intercept, tuple(zip(x.tolist(), y.tolist())))


def tune_band_depth(
    porosity_of: Callable[[float], float],
    target: float,
    interval,
    tolerance: float = 1e-3,
    cell_side: float = 1.0,
) -> float:
    """Bisect ``d`` on a porosity curve that is monotone in ``d`` (normally decreasing).

    Stops once ``|porosity(d) - target| <= tolerance`` or the bracket is
    narrower than ``1e-6 * cell_side`` and returns the best ``d`` seen.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError(f"empty band-depth interval {interval}")
    p_lo, p_hi = porosity_of(lo), porosity_of(hi)
    best = min(((abs(p_lo - target), lo), (abs(p_hi - target), hi)))
    if best[0] <= tolerance:
        return best[1]
    if p_lo < target and p_hi < target:
        raise TargetUnreachable(
            f"porosity {p_lo:.4f}..{p_hi:.4f} over d in [{lo:.4g}, {hi:.4g}] stays below {target}",
            True, (p_hi, p_lo),
        )
    if p_lo > target and p_hi > target:
        raise TargetUnreachable(
            f"porosity {p_hi:.4f}..{p_lo:.4f} over d in [{lo:.4g}, {hi:.4g}] stays above {target}",
            False, (p_hi, p_lo),
        )
    # usually decreasing; a sparse interior next to dense faces can reverse it
    decreasing = p_lo > p_hi
    width = 1e-6 * cell_side
    while hi - lo >= width:
        mid = 0.5 * (lo + hi)
        p = porosity_of(mid)
        err = abs(p - target)
        # ties go to the newest point, which sits inside the narrowest bracket
        if err <= best[0]:
            best = (err, mid)
        if err <= tolerance:
            break
        if (p > target) == decreasing:
            lo = mid
        else:
            hi = mid
    return best[1]


def face_count_for(spec: DesignSpec, n_interior: int) -> int:
    """Face pores per axis matching the interior number density at the reference depth."""
    if spec.n_face_per_axis is not None:
        return spec.n_face_per_axis
    L = spec.cell_side
    lam = n_interior / (L - 2 * spec.reference_depth) ** 3
    usable = (L - 2 * spec.base_edge_margin) ** 2
    return max(1, int(round(0.5 * lam ** (2.0 / 3.0) * usable)))


def sample_face_patterns(spec: DesignSpec, n_face: int, colors: Sequence[int], seed: int) -> list:
    """One dart-thrown, network-wired face pattern per colour."""
    L = spec.cell_side
    out = []
    for color in colors:
        m = spec.base_edge_margin
        if spec.min_distance is not None:
            l = spec.min_distance
        else:
            l = 0.7 * math.sqrt((L - 2 * m) ** 2 / max(n_face, 1))
        for _ in range(60):
            # adjacent-face pores near a shared edge must stay l apart
            margin = max(m, l / math.sqrt(2.0))
            cfg = SamplingConfig(0, n_face, l, margin, derive_seed(seed, f"facepattern:{color}"),
                                 spec.max_attempts_per_pore, L)
            try:
                pat = sample_face_pattern(cfg, color)
                break
            except SamplingInfeasible:
                if spec.min_distance is not None:
                    raise
                l *= 0.9
        else:
            raise SamplingInfeasible(f"could not place {n_face} face pores")
        a, b = spec.degree_bounds
        edges = build_degree_bounded_network(PoreGraph(pat.positions, a, b)) if len(pat) > 1 else []
        out.append(pat.with_tunnels(edges))
    return out


class CellLayout:
    """Face pores fixed, interior pores parameterised by the band depth."""

    def __init__(self, spec: DesignSpec, patterns: Sequence[FacePattern], n_interior: int, seed: int):
        self.spec = spec
        self.patterns = list(patterns)
        L = spec.cell_side
        self.face = instantiate_cell_pores(self.patterns, [], L, spec.omega, spec.mu)
        self.n_face_pores = len(self.face.pores)
        d_lo, d_hi = spec.band_window
        self.window = (d_lo, d_hi)
        side_hi = L - 2 * d_hi
        n = max(1, int(n_interior))
        if spec.min_distance is not None:
            l = spec.min_distance
        else:
            l = min(0.7 * (side_hi ** 3 / n) ** (1.0 / 3.0), d_lo)
        for _ in range(60):
            cfg = SamplingConfig(n, 0, l, 0.0, seed, spec.max_attempts_per_pore, L)
            try:
                pts = sample_interior(cfg, CellPartition(L, d_hi), self.face.pores)
                break
            except SamplingInfeasible:
                if spec.min_distance is not None:
                    raise
                l *= 0.9
        else:
            raise SamplingInfeasible(f"could not place {n} interior pores")
        self.interior_distance = l
        self.unit = (np.array([p.center for p in pts]) - d_hi) / side_hi
        a, b = spec.degree_bounds
        # uniform scaling keeps the edge-length order, so the network is d-independent
        self.interior_edges = build_degree_bounded_network(PoreGraph(self.unit, a, b))
        face_l = [p.min_distance for p in self.patterns if len(p)]
        self.min_distance = min([l] + face_l)

    @property
    def n_interior(self) -> int:
        return len(self.unit)

    def interior_points(self, d: float) -> np.ndarray:
        L = self.spec.cell_side
        return d + self.unit * (L - 2 * d)

    def build(self, d: float):
        """Pores and tunnels of the cell at band depth ``d``."""
        spec = self.spec
        inner = self.interior_points(d)
        pores = list(self.face.pores)
        pores += [Pore(tuple(c), spec.omega, Region.INTERIOR) for c in inner]
        nf = self.n_face_pores
        tunnels = list(self.face.face_tunnels)
        tunnels += as_tunnels(self.interior_edges, spec.mu, nf, nf)
        if nf:
            face_pts = np.array([p.center for p in self.face.pores])
            tunnels += as_tunnels(bridge_surface_to_interior(face_pts, inner), spec.mu, 0, nf)
        return pores, tunnels

    def field(self, d: float) -> CombinedField:
        pores, tunnels = self.build(d)
        return CombinedField(pores, tunnels, self.spec.cutoff_epsilon, self.spec.cell_side)


def measure_cell(fld: CombinedField, level: float, resolution: int):
    """Validated porosity of a field; an empty solid counts as fully porous and invalid."""
    grid = voxelize(fld, level, resolution)
    try:
        grid, report = validate_solid(grid)
    except EmptySolid:
        return 1.0, ValidationReport(False, 0, True, 0)
    return grid.porosity, report


@dataclass(frozen=True, eq=False)
class UnitCell:
    pores: tuple
    tunnels: tuple
    spec: DesignSpec
    band_depth: float
    porosity: float
    face_colors: tuple = (0, 1, 2)
    seed: int = 0
    n_interior: int = 0
    n_face_per_axis: int = 0
    min_distance: float = 0.0
    edge_margin: float = 0.0
    removed_components: int = 0
    face_mismatch: tuple = (0.0, 0.0, 0.0)
    attempts: int = 1
    # face patterns used, kept in memory only so siblings can share the boundary
    patterns: tuple = dataclasses.field(default=(), repr=False)

    @functools.cached_property
    def field(self) -> CombinedField:
        return CombinedField(self.pores, self.tunnels, self.spec.cutoff_epsilon, self.spec.cell_side)

    @property
    def n_pores(self) -> int:
        return len(self.pores)

    @property
    def n_tunnels(self) -> int:
        return len(self.tunnels)

    def voxelize(self, resolution: Optional[int] = None):
        """Validated voxel grid (largest solid component only)."""
        grid = voxelize(self.field, self.spec.level, resolution or self.spec.resolution)
        return validate_solid(grid)[0]


_MODEL_CACHE: dict = {}


def calibrate_pore_count_model(
    spec: DesignSpec,
    resolution: int = 32,
    seeds: int = 2,
    ladder: Sequence[int] = (4, 8, 16, 32, 64, 128, 256, 384, 512),
) -> PoreCountModel:
    """Fit the pore-count line around the target from cells at the reference depth.

    Cells are generated along ``ladder``; the line is fitted on the rungs that
    bracket the target plus one neighbour on each side.  Results are cached
    per geometry, so repeated calls are cheap.
    """
    key = (spec.omega, spec.mu, spec.level, spec.cell_side, spec.cutoff_epsilon,
           spec.degree_bounds, spec.n_face_per_axis, spec.min_distance, spec.edge_margin,
           resolution, seeds, tuple(ladder))
    curve = _MODEL_CACHE.get(key)
    if curve is None:
        curve = []
        d_ref = spec.reference_depth
        for n in ladder:
            rhos = []
            for s in range(seeds):
                seed = derive_seed(0, f"calibration:{n}:{s}")
                pats = sample_face_patterns(spec, face_count_for(spec, n), (0, 1, 2), seed)
                layout = CellLayout(spec, pats, n, mix_seed(seed, 0))
                rhos.append(measure_cell(layout.field(d_ref), spec.level, resolution)[0])
            curve.append((n, float(np.mean(rhos))))
        _MODEL_CACHE[key] = curve
    rho = spec.target_porosity
    k = next((i for i, (_, r) in enumerate(curve) if r >= rho), len(curve) - 1)
    lo, hi = max(0, k - 2), min(len(curve), k + 2)
    return fit_pore_count_model(curve[lo:hi])


def generate_unit(
    spec: DesignSpec,
    face_patterns: Optional[Sequence[FacePattern]] = None,
    face_colors: Optional[Sequence[int]] = None,
    model: Optional[PoreCountModel] = None,
    n_interior: Optional[int] = None,
) -> UnitCell:
    """Generate a valid unit cell within ``spec.tolerance`` of the target porosity.

    Each attempt throws a fresh interior with seed ``mix_seed(spec.seed, k)``,
    bisects the band depth, then checks solid validity and opposite-face
    agreement.  A target outside the reachable porosity range moves the pore
    count along the model slope before the next attempt.
    """
    model = model or calibrate_pore_count_model(spec)
    n = n_interior or model.invert(spec.target_porosity)
    own_patterns = face_patterns is None
    if own_patterns:
        colors = tuple(face_colors) if face_colors is not None else (0, 1, 2)
        face_patterns = sample_face_patterns(spec, face_count_for(spec, n), colors, spec.seed)
    else:
        colors = tuple(face_colors) if face_colors is not None else tuple(p.color for p in face_patterns)
    if len(face_patterns) != 3:
        raise ValueError("need one face pattern per axis")
    slope = max(model.slope, 1e-4)
    target = spec.target_porosity
    for attempt in range(spec.max_attempts):
        seed = mix_seed(spec.seed, attempt)
        try:
            layout = CellLayout(spec, face_patterns, n, seed)
        except SamplingInfeasible as exc:
            log.debug("attempt %d: %s", attempt, exc)
            n = max(1, int(n * 0.9))
            continue
        cache = {}

        def porosity_of(d):
            if d not in cache:
                cache[d] = measure_cell(layout.field(d), spec.level, spec.resolution)
            return cache[d][0]

        try:
            d = tune_band_depth(porosity_of, target, layout.window, spec.tolerance, spec.cell_side)
        except TargetUnreachable as exc:
            lo_rho, hi_rho = exc.porosity_range
            gap = target - (hi_rho if exc.need_more_void else lo_rho)
            step = int(round(gap / slope))
            step = max(1, min(abs(step), max(1, n // 2)))
            n = n + step if exc.need_more_void else max(1, n - step)
            log.debug("attempt %d: %s; retrying with n=%d", attempt, exc, n)
            continue
        rho, report = cache[d]
        if not report.valid:
            log.debug("attempt %d: removed solid touches the boundary", attempt)
            continue
        if abs(rho - target) > spec.tolerance:
            log.debug("attempt %d: bisection stalled at porosity %.4f", attempt, rho)
            continue
        fld = layout.field(d)
        mismatch = face_mismatch(voxelize(fld, spec.level, spec.face_resolution))
        if max(mismatch) > spec.face_tolerance:
            # more pores push the tuned depth inward, away from the faces
            log.debug("attempt %d: face mismatch %s", attempt, mismatch)
            n = n + max(1, n // 10)
            if own_patterns:
                face_patterns = sample_face_patterns(
                    spec, len(face_patterns[0]), colors, mix_seed(spec.seed, attempt + 1000))
            continue
        try:
            instantiate_cell_pores(face_patterns, layout.interior_points(d), spec.cell_side,
                                   spec.omega, None, layout.min_distance)
        except FaceCollision as exc:
            log.debug("attempt %d: %s", attempt, exc)
            continue
        return UnitCell(
            tuple(fld.pores), tuple(fld.tunnels), spec, float(d), float(rho), colors, seed,
            layout.n_interior, len(face_patterns[0]), layout.min_distance,
            max(p.edge_margin for p in face_patterns), report.removed_components,
            mismatch, attempt + 1, tuple(face_patterns),
        )
    raise GenerationExhausted(
        f"no valid cell at porosity {target} after {spec.max_attempts} attempts"
    )


@dataclass(frozen=True)
class RepeatabilityStats:
    n_interior: int
    band_depth: float
    porosities: tuple
    seeds: tuple

    @property
    def mean(self) -> float:
        return float(np.mean(self.porosities))

    @property
    def std(self) -> float:
        return float(np.std(self.porosities))

    @property
    def min(self) -> float:
        return float(np.min(self.porosities))

    @property
    def max(self) -> float:
        return float(np.max(self.porosities))

    @property
    def deviation(self) -> float:
        """Largest absolute distance of a sample from the mean."""
        return float(np.max(np.abs(np.asarray(self.porosities) - self.mean)))

    def fraction_within(self, band: float) -> float:
        p = np.asarray(self.porosities)
        return float(np.mean(np.abs(p - self.mean) <= band))


def porosity_repeatability_study(
    spec: DesignSpec,
    n_interior: int,
    k: int,
    seeds: Optional[Sequence[int]] = None,
    band_depth: Optional[float] = None,
    resolution: Optional[int] = None,
    sampler: Optional[Callable[[int], float]] = None,
) -> RepeatabilityStats:
    """Porosity spread of ``k`` cells with a fixed interior pore count.

    Every sample draws fresh face patterns and interior pores; the band depth
    is held at ``band_depth`` (default: the reference depth).  ``sampler``
    replaces the cell pipeline with any ``seed -> porosity`` callable.
    """
    if k < 2:
        raise ValueError("need at least two samples")
    if seeds is None:
        seeds = [mix_seed(spec.seed, i) for i in range(k)]
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) != k:
        raise ValueError(f"expected {k} seeds, got {len(seeds)}")
    d = spec.reference_depth if band_depth is None else float(band_depth)
    res = resolution or spec.resolution

    if sampler is None:
        def sampler(seed):
            pats = sample_face_patterns(spec, face_count_for(spec, n_interior), (0, 1, 2), seed)
            layout = CellLayout(spec, pats, n_interior, mix_seed(seed, 0))
            return measure_cell(layout.field(d), spec.level, res)[0]

    return RepeatabilityStats(int(n_interior), d, tuple(float(sampler(s)) for s in seeds), seeds)


DESIGN_FORMAT = "sppm-unit/1"


def unit_to_dict(cell: UnitCell) -> dict:
    """Plain-JSON description of a cell; floats survive a round trip exactly."""
    return {
        "format": DESIGN_FORMAT,
        "spec": dataclasses.asdict(cell.spec),
        "band_depth": cell.band_depth,
        "porosity": cell.porosity,
        "face_colors": list(cell.face_colors),
        "seed": cell.seed,
        "n_interior": cell.n_interior,
        "n_face_per_axis": cell.n_face_per_axis,
        "min_distance": cell.min_distance,
        "edge_margin": cell.edge_margin,
        "removed_components": cell.removed_components,
        "face_mismatch": list(cell.face_mismatch),
        "attempts": cell.attempts,
        "pores": [
            {"center": list(p.center), "weight": p.weight, "region": p.region.name.lower(),
             "axis": p.axis, "side": p.side}
            for p in cell.pores
        ],
        "tunnels": [[t.i, t.j, t.weight] for t in cell.tunnels],
    }


def unit_from_dict(data: dict) -> UnitCell:
    if data.get("format") != DESIGN_FORMAT:
        raise ValueError(f"unsupported design format {data.get('format')!r}")
    spec_d = dict(data["spec"])
    spec_d["degree_bounds"] = tuple(spec_d["degree_bounds"])
    spec = DesignSpec(**spec_d)
    pores = tuple(
        Pore(tuple(p["center"]), p["weight"], Region[p["region"].upper()], p["axis"], p["side"])
        for p in data["pores"]
    )
    tunnels = tuple(Tunnel(int(i), int(j), w) for i, j, w in data["tunnels"])
    return UnitCell(
        pores, tunnels, spec, data["band_depth"], data["porosity"], tuple(data["face_colors"]),
        data["seed"], data["n_interior"], data["n_face_per_axis"], data["min_distance"],
        data["edge_margin"], data["removed_components"], tuple(data["face_mismatch"]),
        data["attempts"],
    )


def save_unit(cell: UnitCell, path) -> None:
    with open(path, "w") as fh:
        json.dump(unit_to_dict(cell), fh, indent=1)
        fh.write("\n")


def load_unit(path) -> UnitCell:
    with open(path) as fh:
        return unit_from_dict(json.load(fh))
