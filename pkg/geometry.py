"""Benchmark space-time domains, Latin hypercube collocation sets and slab partitions."""
import math
from dataclasses import dataclass, field
from typing import ClassVar, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import qmc

from errors import ConfigurationError, EmptySampleError, OutOfDomainError, PartitionError
from utils import get_logger

logger = get_logger(__name__)

SeedLike = Union[int, np.random.Generator, None]
POINT_COLUMNS = ["x", "y", "t", "target_u", "target_v", "target_p"]
INTERFACE_TOLERANCE = 1e-12


def pulsatile_factor(t, final_time: float):
    """sin(pi t / T + 3 pi / 2) + 1, written as 1 - cos(pi t / T) so it is exactly 0 at t = 0."""
    return 1.0 - np.cos(np.pi * np.asarray(t, dtype=float) / final_time)


def parabolic_profile(s, width: float, u_max: float):
    s = np.asarray(s, dtype=float)
    return 4.0 * u_max * s * (width - s) / width ** 2


def sample_lhs(n: int, bounds: Sequence[Tuple[float, float]], seed: SeedLike = None) -> np.ndarray:
    """n points, one per stratum in every dimension, scaled to the given intervals."""
    if n < 1:
        raise EmptySampleError(f"Latin hypercube sample needs n >= 1, got {n}")
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    lower, upper = bounds[:, 0], bounds[:, 1]
    if np.any(~(upper > lower)):
        raise ConfigurationError(f"degenerate sampling interval in {bounds.tolist()}")
    sampler = qmc.LatinHypercube(d=bounds.shape[0], seed=seed)
    return qmc.scale(sampler.random(n), lower, upper)


@dataclass(frozen=True)
class FlowConfig:
    density: float = 1.0
    viscosity: float = 0.01
    u_max: float = 0.5

    def __post_init__(self):
        errors = []
        if not self.density > 0:
            errors.append(f"density must be > 0, got {self.density}")
        if not self.viscosity > 0:
            errors.append(f"viscosity must be > 0, got {self.viscosity}")
        if not self.u_max >= 0:
            errors.append(f"u_max must be >= 0, got {self.u_max}")
        if errors:
            raise ConfigurationError("; ".join(errors))


RECTANGLE_FLOW = FlowConfig(density=1.0, viscosity=0.01, u_max=0.5)
SEMICIRCLE_FLOW = FlowConfig(density=1.0, viscosity=0.4, u_max=0.75)


@dataclass
class CollocationCounts:
    """Point budget. n_initial defaults to min(n_boundary, remaining // 4)."""
    n_total: int
    n_boundary: int
    n_inout: int
    n_initial: Optional[int] = None

    def resolved(self) -> Tuple[int, int, int, int]:
        """(n_interior, n_wall, n_inout, n_initial)."""
        if min(self.n_total, self.n_boundary, self.n_inout) < 0:
            raise ConfigurationError(f"point counts must be non-negative: {self}")
        remaining = self.n_total - self.n_boundary - self.n_inout
        if remaining < 0:
            raise ConfigurationError(
                f"n_total={self.n_total} is smaller than n_boundary + n_inout = {self.n_boundary + self.n_inout}"
            )
        n_initial = self.n_initial if self.n_initial is not None else min(self.n_boundary, remaining // 4)
        n_interior = remaining - n_initial
        if n_initial < 0 or n_interior < 1:
            raise ConfigurationError(
                f"counts leave {n_interior} interior points (total {self.n_total}, boundary {self.n_boundary}, "
                f"inlet/outlet {self.n_inout}, initial {n_initial})"
            )
        return n_interior, self.n_boundary, self.n_inout, n_initial


@dataclass
class CollocationSet:
    """Interior, boundary (targets with NaN = absent) and initial points; rows are (x, y, t)."""
    interior: np.ndarray
    boundary: np.ndarray
    boundary_targets: np.ndarray
    initial: np.ndarray
    initial_targets: np.ndarray
    boundary_kind: np.ndarray = field(default=None)

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=float).reshape(-1, 3)
        self.boundary = np.asarray(self.boundary, dtype=float).reshape(-1, 3)
        self.boundary_targets = np.asarray(self.boundary_targets, dtype=float).reshape(-1, 3)
        self.initial = np.asarray(self.initial, dtype=float).reshape(-1, 3)
        self.initial_targets = np.asarray(self.initial_targets, dtype=float).reshape(-1, 3)
        if self.boundary_kind is None:
            self.boundary_kind = np.full(len(self.boundary), "boundary", dtype=object)
        if len(self.boundary) != len(self.boundary_targets) or len(self.boundary) != len(self.boundary_kind):
            raise ConfigurationError("boundary points, targets and kinds differ in length")
        if len(self.initial) != len(self.initial_targets):
            raise ConfigurationError("initial points and targets differ in length")
        if len(self.boundary) and np.isnan(self.boundary_targets).all(axis=1).any():
            raise ConfigurationError("every boundary point needs at least one target")

    @property
    def n_g(self) -> int:
        return len(self.interior)

    @property
    def n_bc(self) -> int:
        return len(self.boundary)

    @property
    def n_ic(self) -> int:
        return len(self.initial)

    @property
    def n_total(self) -> int:
        return self.n_g + self.n_bc + self.n_ic

    @property
    def initial_xy(self) -> np.ndarray:
        return self.initial[:, :2]

    def spatial_points(self) -> np.ndarray:
        return np.vstack([self.interior[:, :2], self.boundary[:, :2], self.initial[:, :2]])

    def subset(self, interior_mask, boundary_mask, initial_mask) -> "CollocationSet":
        return CollocationSet(
            self.interior[interior_mask],
            self.boundary[boundary_mask],
            self.boundary_targets[boundary_mask],
            self.initial[initial_mask],
            self.initial_targets[initial_mask],
            self.boundary_kind[boundary_mask],
        )

    def to_frame(self) -> pd.DataFrame:
        """Rows in interior, boundary, initial order; NaN targets become empty CSV fields."""
        interior = np.hstack([self.interior, np.full((self.n_g, 3), np.nan)])
        boundary = np.hstack([self.boundary, self.boundary_targets])
        initial = np.hstack([self.initial, self.initial_targets])
        return pd.DataFrame(np.vstack([interior, boundary, initial]), columns=POINT_COLUMNS)


def points_frame(points: np.ndarray) -> pd.DataFrame:
    """Point table without targets (interface sets)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return pd.DataFrame(np.hstack([points, np.full((len(points), 3), np.nan)]), columns=POINT_COLUMNS)


@dataclass(frozen=True)
class BoundarySegment:
    """Straight open boundary: sample points, unit streamwise direction, segment length."""
    points: np.ndarray
    direction: np.ndarray
    length: float


class _Domain:
    """Shared sampling logic; subclasses provide the geometry."""
    kind: ClassVar[str] = ""
    final_time: float
    time_step: float

    def _validate_time(self, errors: List[str]):
        if not self.final_time > 0:
            errors.append(f"final_time must be > 0, got {self.final_time}")
        if not (0 < self.time_step <= self.final_time):
            errors.append(f"time_step must satisfy 0 < dt <= T, got {self.time_step}")

    def check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.final_time + 1e-12):
            raise OutOfDomainError(f"time outside [0, {self.final_time}]")

    def interior_points(self, n: int, seed: SeedLike, t_fixed: Optional[float] = None) -> np.ndarray:
        """Rejection sampling on the bounding box, redrawing Latin hypercube batches until n points fit."""
        if n == 0:
            return np.empty((0, 3))
        (x0, x1), (y0, y1) = self.bounding_box()
        rng = np.random.default_rng(seed)
        kept: List[np.ndarray] = []
        found = 0
        rounds = 0
        while found < n:
            need = n - found
            batch = need if rounds == 0 else max(2 * need, 16)
            if t_fixed is None:
                draw = sample_lhs(batch, [(x0, x1), (y0, y1), (0.0, self.final_time)], rng)
            else:
                draw = sample_lhs(batch, [(x0, x1), (y0, y1)], rng)
                draw = np.hstack([draw, np.full((batch, 1), t_fixed)])
            inside = draw[self.strictly_inside(draw[:, 0], draw[:, 1])]
            kept.append(inside[:need])
            found += min(len(inside), need)
            rounds += 1
            if rounds > 1000:
                raise ConfigurationError(f"could not place {n} interior points in {self.kind} domain")
        return np.vstack(kept)

    def snapshot_times(self, max_count: int = 6) -> np.ndarray:
        """Multiples of dt covering [0, T], thinned to at most max_count evenly spaced times."""
        steps = int(round(self.final_time / self.time_step))
        times = np.arange(steps + 1) * self.time_step
        times[-1] = min(times[-1], self.final_time)
        if len(times) <= max_count:
            return times
        picks = np.unique(np.linspace(0, len(times) - 1, max_count).round().astype(int))
        return times[picks]


@dataclass(frozen=True)
class RectangleDomain(_Domain):
    length: float = 1.1
    height: float = 0.41
    final_time: float = 0.5
    time_step: float = 0.01
    kind: ClassVar[str] = "rectangle"

    def __post_init__(self):
        errors = []
        if not self.length > 0:
            errors.append(f"length must be > 0, got {self.length}")
        if not self.height > 0:
            errors.append(f"height must be > 0, got {self.height}")
        self._validate_time(errors)
        if errors:
            raise ConfigurationError("; ".join(errors))

    def bounding_box(self):
        return (0.0, self.length), (0.0, self.height)

    def contains(self, x, y, tol: float = 1e-12):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return (x >= -tol) & (x <= self.length + tol) & (y >= -tol) & (y <= self.height + tol)

    def strictly_inside(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return (x > 0) & (x < self.length) & (y > 0) & (y < self.height)

    def wall_residual(self, x, y):
        """Distance to the nearest no-slip wall (y = 0 or y = H)."""
        y = np.asarray(y, dtype=float)
        return np.minimum(np.abs(y), np.abs(y - self.height))

    def wall_points(self, n: int, seed: SeedLike) -> np.ndarray:
        st = sample_lhs(n, [(0.0, self.length), (0.0, self.final_time)], seed)
        y = np.where(np.arange(n) < (n + 1) // 2, 0.0, self.height)
        return np.column_stack([st[:, 0], y, st[:, 1]])

    def inlet_points(self, n: int, seed: SeedLike) -> np.ndarray:
        yt = sample_lhs(n, [(0.0, self.height), (0.0, self.final_time)], seed)
        return np.column_stack([np.zeros(n), yt[:, 0], yt[:, 1]])

    def outlet_points(self, n: int, seed: SeedLike) -> np.ndarray:
        yt = sample_lhs(n, [(0.0, self.height), (0.0, self.final_time)], seed)
        return np.column_stack([np.full(n, self.length), yt[:, 0], yt[:, 1]])

    def inlet_velocity(self, points: np.ndarray, flow: FlowConfig) -> np.ndarray:
        u, v = rectangle_inlet_velocity(points[:, 1], points[:, 2], self, flow)
        return np.column_stack([u, v])

    # slab partition along x
    @property
    def slab_extent(self) -> float:
        return self.length

    def slab_coordinate(self, x, y):
        return np.asarray(x, dtype=float)

    def interface_points(self, k: int, m: int, n: int, seed: SeedLike) -> np.ndarray:
        x_k = k * self.length / m
        yt = sample_lhs(n, [(0.0, self.height), (0.0, self.final_time)], seed)
        return np.column_stack([np.full(n, x_k), yt[:, 0], yt[:, 1]])

    def interface_normal(self, k: int, m: int) -> np.ndarray:
        return np.array([1.0, 0.0])

    def interface_distance(self, x, y, k: int, m: int):
        return np.abs(np.asarray(x, dtype=float) - k * self.length / m)

    def inlet_segment(self, n: int) -> BoundarySegment:
        y = np.linspace(0.0, self.height, n)
        return BoundarySegment(np.column_stack([np.zeros(n), y]), np.array([1.0, 0.0]), self.height)

    def outlet_segment(self, n: int) -> BoundarySegment:
        y = np.linspace(0.0, self.height, n)
        return BoundarySegment(np.column_stack([np.full(n, self.length), y]), np.array([1.0, 0.0]), self.height)


@dataclass(frozen=True)
class SemiCircularDomain(_Domain):
    """Upper half annulus around the origin, optionally narrowed by a Gaussian outer-wall stenosis.

    Inlet is the straight segment at theta = pi (flow enters along +y), outlet the segment at
    theta = 0 (flow leaves along -y).
    """
    cross_radius: float = 1.6
    curvature_radius: float = 2.9
    final_time: float = 6.0
    time_step: float = 0.01
    stenosis_amplitude: float = 0.0
    stenosis_width: float = 0.2
    stenosis_center: float = math.pi / 2
    kind: ClassVar[str] = "semicircle"

    def __post_init__(self):
        errors = []
        if not self.cross_radius > 0:
            errors.append(f"cross_radius must be > 0, got {self.cross_radius}")
        if not self.curvature_radius - self.cross_radius > 0:
            errors.append("curvature_radius - cross_radius must be > 0 (inner wall radius)")
        if not self.stenosis_amplitude >= 0:
            errors.append(f"stenosis_amplitude must be >= 0, got {self.stenosis_amplitude}")
        if not self.stenosis_amplitude < 2 * self.cross_radius:
            errors.append("stenosis_amplitude must be smaller than the vessel diameter")
        if not self.stenosis_width > 0:
            errors.append(f"stenosis_width must be > 0, got {self.stenosis_width}")
        self._validate_time(errors)
        if errors:
            raise ConfigurationError("; ".join(errors))

    @property
    def inner_radius(self) -> float:
        return self.curvature_radius - self.cross_radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.cross_radius

    def outer_radius(self, theta):
        theta = np.asarray(theta, dtype=float)
        bump = np.exp(-((theta - self.stenosis_center) ** 2) / (2.0 * self.stenosis_width ** 2))
        return self.curvature_radius + self.cross_radius - self.stenosis_amplitude * bump

    @staticmethod
    def polar(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return np.hypot(x, y), np.arctan2(y, x)

    def bounding_box(self):
        r = self.curvature_radius + self.cross_radius
        return (-r, r), (0.0, r)

    def contains(self, x, y, tol: float = 1e-12):
        r, theta = self.polar(x, y)
        y = np.asarray(y, dtype=float)
        theta = np.abs(theta)  # y = -0.0 on the axis gives -pi or -0.0
        return (y >= -tol) & (r >= self.inner_radius - tol) & (r <= self.outer_radius(theta) + tol)

    def strictly_inside(self, x, y):
        r, theta = self.polar(x, y)
        y = np.asarray(y, dtype=float)
        return (y > 0) & (r > self.inner_radius) & (r < self.outer_radius(theta))

    def wall_residual(self, x, y):
        """Distance in radius to the nearest curved wall."""
        r, theta = self.polar(x, y)
        return np.minimum(np.abs(r - self.inner_radius), np.abs(r - self.outer_radius(theta)))

    def wall_points(self, n: int, seed: SeedLike) -> np.ndarray:
        tt = sample_lhs(n, [(0.0, math.pi), (0.0, self.final_time)], seed)
        theta = tt[:, 0]
        r = np.where(np.arange(n) < (n + 1) // 2, self.inner_radius, self.outer_radius(theta))
        return np.column_stack([r * np.cos(theta), r * np.sin(theta), tt[:, 1]])

    def _radial_segment(self, theta: float, n: int, seed: SeedLike) -> np.ndarray:
        rt = sample_lhs(n, [(0.0, 1.0), (0.0, self.final_time)], seed)
        r = self.inner_radius + rt[:, 0] * (self.outer_radius(theta) - self.inner_radius)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta), rt[:, 1]])

    def inlet_points(self, n: int, seed: SeedLike) -> np.ndarray:
        points = self._radial_segment(math.pi, n, seed)
        points[:, 1] = 0.0  # sin(pi) is not exactly zero
        return points

    def outlet_points(self, n: int, seed: SeedLike) -> np.ndarray:
        return self._radial_segment(0.0, n, seed)

    def inlet_coordinate(self, x) -> np.ndarray:
        """Cross-section coordinate s in [0, D] measured from the inner wall along the inlet."""
        return -np.asarray(x, dtype=float) - self.inner_radius

    def inlet_velocity(self, points: np.ndarray, flow: FlowConfig) -> np.ndarray:
        s = np.clip(self.inlet_coordinate(points[:, 0]), 0.0, self.diameter)
        u, v = semicircle_inlet_velocity(s, points[:, 2], self, flow)
        return np.column_stack([u, v])

    # slab partition along the centreline angle, measured from the inlet
    @property
    def slab_extent(self) -> float:
        return math.pi

    def slab_coordinate(self, x, y):
        _, theta = self.polar(x, y)
        return math.pi - np.clip(np.abs(theta), 0.0, math.pi)

    def interface_angle(self, k: int, m: int) -> float:
        return math.pi - k * math.pi / m

    def interface_points(self, k: int, m: int, n: int, seed: SeedLike) -> np.ndarray:
        return self._radial_segment(self.interface_angle(k, m), n, seed)

    def interface_normal(self, k: int, m: int) -> np.ndarray:
        theta = self.interface_angle(k, m)
        return np.array([math.sin(theta), -math.cos(theta)])

    def interface_distance(self, x, y, k: int, m: int):
        r, theta = self.polar(x, y)
        return np.abs(r * np.sin(theta - self.interface_angle(k, m)))

    def inlet_segment(self, n: int) -> BoundarySegment:
        r = np.linspace(self.inner_radius, float(self.outer_radius(math.pi)), n)
        return BoundarySegment(np.column_stack([-r, np.zeros(n)]), np.array([0.0, 1.0]),
                               float(self.outer_radius(math.pi)) - self.inner_radius)

    def outlet_segment(self, n: int) -> BoundarySegment:
        r = np.linspace(self.inner_radius, float(self.outer_radius(0.0)), n)
        return BoundarySegment(np.column_stack([r, np.zeros(n)]), np.array([0.0, -1.0]),
                               float(self.outer_radius(0.0)) - self.inner_radius)


Domain = Union[RectangleDomain, SemiCircularDomain]


def rectangle_inlet_velocity(y, t, domain: RectangleDomain, flow: FlowConfig):
    """Pulsatile parabolic inflow at x = 0; returns (u, v)."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y > domain.height):
        raise OutOfDomainError(f"inlet coordinate y outside [0, {domain.height}]")
    domain.check_time(t)
    u = parabolic_profile(y, domain.height, flow.u_max) * pulsatile_factor(t, domain.final_time)
    return u, np.zeros_like(u)


def semicircle_inlet_velocity(s, t, domain: SemiCircularDomain, flow: FlowConfig):
    """Pulsatile parabolic inflow across the inlet segment (width D = 2a), rotated to global (u, v).

    The inlet lies on the negative x-axis and its axial direction is +y.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s > domain.diameter):
        raise OutOfDomainError(f"inlet coordinate s outside [0, {domain.diameter}]")
    domain.check_time(t)
    axial = parabolic_profile(s, domain.diameter, flow.u_max) * pulsatile_factor(t, domain.final_time)
    return np.zeros_like(axial), axial


def generate_collocation(domain: Domain, counts: CollocationCounts, flow: FlowConfig,
                         seed: Optional[int] = None) -> CollocationSet:
    """Interior, wall, inlet/outlet and initial points with their targets.

    Walls carry u = v = 0, inlet points the pulsatile profile, outlet points p = 0 and initial
    points (0, 0, 0). Inlet/outlet budget is split with the extra point going to the inlet.
    """
    n_interior, n_wall, n_inout, n_initial = counts.resolved()
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]

    interior = domain.interior_points(n_interior, rngs[0])

    boundary_parts, target_parts, kind_parts = [], [], []
    if n_wall:
        walls = domain.wall_points(n_wall, rngs[1])
        boundary_parts.append(walls)
        target_parts.append(np.column_stack([np.zeros(n_wall), np.zeros(n_wall), np.full(n_wall, np.nan)]))
        kind_parts.append(np.full(n_wall, "wall", dtype=object))
    n_inlet = (n_inout + 1) // 2
    n_outlet = n_inout - n_inlet
    if n_inlet:
        inlet = domain.inlet_points(n_inlet, rngs[2])
        uv = domain.inlet_velocity(inlet, flow)
        boundary_parts.append(inlet)
        target_parts.append(np.column_stack([uv, np.full(n_inlet, np.nan)]))
        kind_parts.append(np.full(n_inlet, "inlet", dtype=object))
    if n_outlet:
        outlet = domain.outlet_points(n_outlet, rngs[3])
        boundary_parts.append(outlet)
        target_parts.append(np.column_stack([np.full((n_outlet, 2), np.nan), np.zeros(n_outlet)]))
        kind_parts.append(np.full(n_outlet, "outlet", dtype=object))

    initial = domain.interior_points(n_initial, rngs[4], t_fixed=0.0)

    collocation = CollocationSet(
        interior,
        np.vstack(boundary_parts) if boundary_parts else np.empty((0, 3)),
        np.vstack(target_parts) if target_parts else np.empty((0, 3)),
        initial,
        np.zeros((n_initial, 3)),
        np.concatenate(kind_parts) if kind_parts else np.empty(0, dtype=object),
    )
    logger.debug(
        f"Generated {domain.kind} collocation: N_g={collocation.n_g}, N_bc={collocation.n_bc}, "
        f"N_ic={collocation.n_ic}"
    )
    return collocation


@dataclass
class InterfaceSet:
    """Points on the interface with `neighbor`; `normal` points from this subdomain toward it."""
    neighbor: int
    points: np.ndarray
    normal: np.ndarray

    @property
    def count(self) -> int:
        return len(self.points)


@dataclass
class SubdomainSpec:
    index: int
    region: Tuple[float, float]
    collocation: CollocationSet
    neighbors: List[int]
    interfaces: Dict[int, InterfaceSet]


def assign_subdomains(domain: Domain, m: int, x, y) -> np.ndarray:
    """Owning slab index of each point (slab coordinate measured from the inlet)."""
    width = domain.slab_extent / m
    coord = domain.slab_coordinate(x, y)
    return np.clip(np.floor(coord / width).astype(int), 0, m - 1)


def slab_region(domain: Domain, i: int, m: int) -> Tuple[float, float]:
    """x-interval for the rectangle, angular interval for the semi-circle."""
    if isinstance(domain, SemiCircularDomain):
        return domain.interface_angle(i + 1, m), domain.interface_angle(i, m)
    return i * domain.length / m, (i + 1) * domain.length / m


def partition_domain(domain: Domain, m: int, collocation: CollocationSet, n_interface: int = 400,
                     seed: Optional[int] = None) -> List[SubdomainSpec]:
    """Split into m equal slabs; interface point arrays are shared objects between both sides."""
    if m < 1:
        raise PartitionError(f"subdomain count must be >= 1, got {m}")
    if m > 1 and n_interface < 1:
        raise PartitionError(f"each interface needs at least one point, got {n_interface}")

    owner_interior = assign_subdomains(domain, m, collocation.interior[:, 0], collocation.interior[:, 1])
    owner_boundary = assign_subdomains(domain, m, collocation.boundary[:, 0], collocation.boundary[:, 1])
    owner_initial = assign_subdomains(domain, m, collocation.initial[:, 0], collocation.initial[:, 1])

    subdomains = []
    for i in range(m):
        local = collocation.subset(owner_interior == i, owner_boundary == i, owner_initial == i)
        if local.n_g == 0:
            raise PartitionError(f"subdomain {i} of {m} holds no interior points; use fewer subdomains")
        neighbors = [j for j in (i - 1, i + 1) if 0 <= j < m]
        subdomains.append(SubdomainSpec(i, slab_region(domain, i, m), local, neighbors, {}))

    if m > 1:
        interface_seeds = np.random.SeedSequence(seed).spawn(m - 1)
        for k in range(1, m):
            points = domain.interface_points(k, m, n_interface, np.random.default_rng(interface_seeds[k - 1]))
            normal = domain.interface_normal(k, m)
            subdomains[k - 1].interfaces[k] = InterfaceSet(k, points, normal)
            subdomains[k].interfaces[k - 1] = InterfaceSet(k - 1, points, -normal)

    logger.debug(f"Partitioned {domain.kind} domain into {m} subdomains")
    return subdomains


def prediction_grid(domain: Domain, counts: CollocationCounts, flow: FlowConfig, seed: Optional[int] = None) -> CollocationSet:
    """Collocation set used only for its spatial positions at prediction time."""
    return generate_collocation(domain, counts, flow, seed)
