"""Domains, equal-area partitions and piecewise-constant maps on them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geom2d import cell_moments, diameter, regular_polygon, signed_area


class PartitionError(ValueError):
    """Raised when N is not admissible for a partition scheme."""

    def __init__(self, message, admissible=()):
        super().__init__(message)
        self.admissible = list(admissible)


@dataclass(frozen=True)
class Domain:
    shape: str
    polygon: np.ndarray
    total_area: float
    metadata: dict = field(default_factory=dict)

    @property
    def diameter(self) -> float:
        return diameter(self.polygon)


def unit_square() -> Domain:
    """The square [-1/2, 1/2]^2."""
    poly = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    return Domain("unit_square", poly, 1.0)


def unit_disk(M: int = 256) -> Domain:
    """Regular M-gon standing in for the unit disk.

    The circumradius is enlarged so that the polygon area equals pi; the
    factor is kept in ``metadata["area_correction"]``.
    """
    r = np.sqrt(2 * np.pi / (M * np.sin(2 * np.pi / M)))
    poly = regular_polygon(M, r)
    area = signed_area(poly)
    return Domain("unit_disk", poly, area, {"M": M, "area_correction": float(r)})


def make_domain(shape: str, M: int = 256) -> Domain:
    if shape in ("unit_square", "square"):
        return unit_square()
    if shape in ("unit_disk", "disk"):
        return unit_disk(M)
    raise ValueError(f"unknown domain shape {shape!r}")


# ---------------------------------------------------------------------------
# Star-shaped parameterization of the regular M-gon by swept area.


class _PolarGon:
    """Regular M-gon parameterized by the area swept from angle 0."""

    def __init__(self, polygon: np.ndarray):
        self.poly = polygon
        self.M = len(polygon)
        self.r = float(np.hypot(*polygon[0]))
        self.half = np.pi / self.M
        self.apothem = self.r * np.cos(self.half)
        self.edge_area = self.apothem ** 2 * np.tan(self.half)
        self.total = self.M * self.edge_area

    def angle_of_area(self, A):
        """Ray angle at which the swept area reaches A (vectorized)."""
        A = np.asarray(A, dtype=float)
        m = np.clip(np.floor(A / self.edge_area), 0, self.M - 1)
        rem = A - m * self.edge_area
        psi = np.arctan(rem / (0.5 * self.apothem ** 2) - np.tan(self.half))
        return 2 * self.half * m + self.half + psi

    def boundary(self, phi):
        """Boundary point on the ray at angle phi."""
        phi = np.asarray(phi, dtype=float)
        m = np.floor(phi / (2 * self.half))
        psi = phi - (2 * m + 1) * self.half
        rad = self.apothem / np.cos(psi)
        return np.stack([rad * np.cos(phi), rad * np.sin(phi)], axis=-1)

    def point(self, u, v):
        """Map (squared scale u, swept area v) to the plane; area-preserving."""
        return np.sqrt(u)[..., None] * self.boundary(self.angle_of_area(v))

    def vertices_between(self, phi_a, phi_b):
        step = 2 * self.half
        k0 = int(np.floor(phi_a / step)) + 1
        k1 = int(np.ceil(phi_b / step)) - 1
        ks = [k for k in range(k0, k1 + 1) if phi_a < k * step < phi_b]
        return np.array([self.r * np.array([np.cos(k * step), np.sin(k * step)])
                         for k in ks]).reshape(-1, 2)


# ---------------------------------------------------------------------------


@dataclass
class Partition:
    """N equal-area regions of a domain.

    ``boxes`` are the regions in area-preserving coordinates (u0, u1, v0, v1),
    used for quadrature; ``scheme`` records how the regions were laid out.
    """

    domain: Domain
    regions: list
    barycenters: np.ndarray
    boxes: np.ndarray
    scheme: dict

    @property
    def N(self) -> int:
        return len(self.regions)

    @property
    def areas(self) -> np.ndarray:
        return np.array([signed_area(r) for r in self.regions])

    @property
    def diameter_constant(self) -> float:
        """C_P such that every region diameter is at most C_P N^(-1/2)."""
        return max(diameter(r) for r in self.regions) * np.sqrt(self.N)

    @property
    def ident(self) -> str:
        return f"{self.domain.shape}:{self.scheme['name']}:{self.N}"

    def quadrature(self, order: int = 4):
        """Tensor Gauss-Legendre nodes (N, order^2, 2) and per-cell weights summing to 1.

        Disk cells are integrated in (radius scale, swept area), which is exact
        in the radial direction for polynomial integrands.
        """
        t, wt = np.polynomial.legendre.leggauss(order)
        t = (t + 1) / 2
        wt = wt / 2
        b = self.boxes
        if self.domain.shape == "unit_square":
            a = b[:, 0:1] + (b[:, 1:2] - b[:, 0:1]) * t
            wa = np.broadcast_to(wt, a.shape)
        else:
            r0, r1 = np.sqrt(b[:, 0:1]), np.sqrt(b[:, 1:2])
            rho = r0 + (r1 - r0) * t
            wa = wt * 2 * rho * (r1 - r0) / (b[:, 1:2] - b[:, 0:1])
            a = rho
        c = b[:, 2:3] + (b[:, 3:4] - b[:, 2:3]) * t
        A = np.repeat(a, order, axis=1)
        C = np.tile(c, (1, order))
        W = np.repeat(wa, order, axis=1) * np.tile(wt, (1, order))
        if self.domain.shape == "unit_square":
            pts = np.stack([A, C], axis=-1)
        else:
            pg = _PolarGon(self.domain.polygon)
            pts = A[..., None] * pg.boundary(pg.angle_of_area(C))
        return pts, W

    def to_json(self) -> str:
        return json.dumps({
            "domain": self.domain.shape,
            "domain_metadata": self.domain.metadata,
            "N": self.N,
            "scheme": self.scheme,
            "diameter_constant": self.diameter_constant,
            "regions": [r.tolist() for r in self.regions],
        })


def _nearby_squares(N):
    k = int(round(np.sqrt(N)))
    return sorted({max(1, k - 1) ** 2, k ** 2, (k + 1) ** 2})


def _square_partition(domain: Domain, N: int) -> Partition:
    k = int(round(np.sqrt(N)))
    if k * k != N or N < 1:
        raise PartitionError(
            f"N={N} is not a perfect square; nearby admissible N: {_nearby_squares(N)}",
            _nearby_squares(N))
    h = 1.0 / k
    regions, boxes = [], []
    for iy in range(k):
        for ix in range(k):
            x0, y0 = -0.5 + ix * h, -0.5 + iy * h
            regions.append(np.array([[x0, y0], [x0 + h, y0], [x0 + h, y0 + h], [x0, y0 + h]]))
            boxes.append([x0, x0 + h, y0, y0 + h])
    bary = np.array([r.mean(axis=0) for r in regions])
    return Partition(domain, regions, bary, np.array(boxes), {"name": "grid", "k": k})


def _ring_counts_isotropic(N: int) -> list[int]:
    # ring k holds about (2k-1)/K^2 of the cells: equal widths, near-square cells
    K = max(1, int(round(np.sqrt(N / np.pi))))
    cum = [int(round(N * k * k / K ** 2)) for k in range(K + 1)]
    counts = [b - a for a, b in zip(cum[:-1], cum[1:])]
    return [c for c in counts if c > 0]


def _disk_partition(domain: Domain, N: int, rings: int | None) -> Partition:
    if N < 1:
        raise PartitionError(f"N={N} must be positive", [1])
    if rings is None:
        counts = _ring_counts_isotropic(N)
        name = "isotropic_rings"
    else:
        if rings < 1 or N % rings:
            near = sorted({rings * max(1, N // rings), rings * (N // rings + 1)})
            raise PartitionError(
                f"N={N} is not divisible into {rings} rings; nearby admissible N: {near}", near)
        counts = [N // rings] * rings
        name = "uniform_rings"
    if any(c < 2 for c in counts[1:]):
        raise PartitionError(f"N={N}: outer rings need at least 2 sectors", [])
    pg = _PolarGon(domain.polygon)
    scale = domain.total_area / pg.total  # 1 for polygons built by unit_disk
    regions, boxes = [], []
    done = 0
    for n in counts:
        u0, u1 = scale * done / N, scale * (done + n) / N
        ro, ri = np.sqrt(u1), np.sqrt(u0)
        for s in range(n):
            v0, v1 = pg.total * s / n, pg.total * (s + 1) / n
            boxes.append([u0, u1, v0, v1])
            if n == 1:
                regions.append(ro * domain.polygon / np.sqrt(scale))
                continue
            pa, pb = pg.angle_of_area(v0), pg.angle_of_area(v1)
            arc = np.vstack([pg.boundary(pa)[None], pg.vertices_between(pa, pb),
                             pg.boundary(pb)[None]])
            if ri == 0.0:
                poly = np.vstack([ro * arc, [[0.0, 0.0]]])
            else:
                poly = np.vstack([ro * arc, ri * arc[::-1]])
            regions.append(poly)
        done += n
    bary = np.array([cell_moments(r).barycenter for r in regions])
    return Partition(domain, regions, bary, np.array(boxes),
                     {"name": name, "ring_counts": counts, "M": len(domain.polygon)})


def build_partition(domain: Domain, N: int, rings: int | None = None) -> Partition:
    """Equal-area partition of the domain into N regions.

    Square: uniform k x k grid (N = k^2).  Disk: concentric rings of equal
    area per cell; by default ring counts grow like 2k-1 so cells are nearly
    isotropic, or pass ``rings`` for a rings x sectors layout.
    """
    if domain.shape == "unit_square":
        return _square_partition(domain, N)
    return _disk_partition(domain, N, rings)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteMap:
    """Piecewise-constant map: one value per partition region."""

    values: np.ndarray
    partition_ref: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("values must have shape (N, 2)")
        if not np.all(np.isfinite(v)):
            raise ValueError("map values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return len(self.values)


def sample_map(s, partition: Partition, mode: str = "barycenter") -> DiscreteMap:
    """Sample a vectorized map ``s: (..., 2) -> (..., 2)`` on the partition.

    "barycenter" evaluates at region barycenters; "mean" averages over each
    region with 16-point quadrature (the L2 projection onto the partition).
    """
    if mode == "barycenter":
        vals = np.asarray(s(partition.barycenters), dtype=float)
    elif mode == "mean":
        pts, wts = partition.quadrature(4)
        fv = np.asarray(s(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape)
        vals = np.einsum("nqd,nq->nd", fv, wts)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    bad = np.flatnonzero(~np.all(np.isfinite(vals), axis=1))
    if len(bad):
        raise ValueError(f"map is not finite on cell {bad[0]}")
    return DiscreteMap(vals, partition.ident)


def pushforward(m: DiscreteMap):
    """Image measure m#Leb: the map values with uniform masses 1/N."""
    return m.values, np.full(m.N, 1.0 / m.N)
