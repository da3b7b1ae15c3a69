"""Planar domains made of a bounded junction and several straight strips.

Cells are squares of side ``h`` with centers ``((i + 1/2) h, (j + 1/2) h)``.
A domain keeps a dense index map over its bounding box (``-1`` outside) and
flat per-cell arrays for the active cells.  Neighbor order is
``(west, east, south, north)``; a missing neighbor is stored as ``-1`` and is
mirrored by the stepper to realize the homogeneous Neumann condition.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import ConvexHull, QhullError, cKDTree

INTERIOR, BOUNDARY = 0, 1


class GeometryError(ValueError):
    pass


class NotConnected(GeometryError):
    pass


@dataclass(frozen=True)
class BranchSpec:
    direction: tuple[float, float]
    width: float
    length: float
    anchor: tuple[float, float] | None = None  # None: minimal disjoint offset along direction

    def __post_init__(self):
        n = math.hypot(*self.direction)
        if abs(n - 1.0) > 1e-12:
            raise GeometryError(f"branch direction must be a unit vector, |e| = {n!r}")
        if self.width <= 0:
            raise GeometryError("branch width must be positive")
        if self.length <= 0:
            raise GeometryError("branch length must be positive")

    @classmethod
    def from_angle(cls, angle_deg: float, width: float, length: float, anchor=None) -> "BranchSpec":
        a = math.radians(angle_deg)
        return cls((math.cos(a), math.sin(a)), width, length,
                   None if anchor is None else (float(anchor[0]), float(anchor[1])))

    @property
    def angle_deg(self) -> float:
        return math.degrees(math.atan2(self.direction[1], self.direction[0]))

    @property
    def normal(self) -> tuple[float, float]:
        return (-self.direction[1], self.direction[0])


@dataclass(frozen=True)
class PathSpec:
    waypoints: np.ndarray

    def resample(self, spacing: float) -> np.ndarray:
        w = np.asarray(self.waypoints, dtype=float)
        pts = [w[:1]]
        for a, b in zip(w[:-1], w[1:]):
            n = max(int(math.ceil(np.linalg.norm(b - a) / spacing)), 1)
            t = np.arange(1, n + 1)[:, None] / n
            pts.append(a + t * (b - a))
        return np.concatenate(pts)


@dataclass
class BranchedDomain:
    branches: list[BranchSpec]
    anchors: np.ndarray  # (m, 2) resolved anchor points x_i
    L: float  # every cell with x.e_i > L in some branch belongs only to that branch
    h: float
    junction_blend: float
    ball: float
    center: np.ndarray
    i0: int
    j0: int
    index: np.ndarray  # (ny, nx) int32, -1 outside
    ci: np.ndarray  # column of each active cell in the dense box
    cj: np.ndarray
    x: np.ndarray
    y: np.ndarray
    nbr: np.ndarray  # (n, 4) int64, -1 across the boundary
    cell_kind: np.ndarray  # INTERIOR or BOUNDARY
    owner: np.ndarray  # branch index or -1 for the junction
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return len(self.branches)

    @property
    def n_cells(self) -> int:
        return self.x.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.index.shape

    @property
    def mask(self) -> np.ndarray:
        return self.index >= 0

    @property
    def area(self) -> float:
        return self.n_cells * self.h * self.h

    def centroid(self) -> np.ndarray:
        return np.array([self.x.mean(), self.y.mean()])

    def coord(self, i: int) -> np.ndarray:
        """Branch coordinate (x - x_i).e_i of every cell."""
        key = ("coord", i)
        if key not in self._cache:
            e = self.branches[i].direction
            a = self.anchors[i]
            self._cache[key] = (self.x - a[0]) * e[0] + (self.y - a[1]) * e[1]
        return self._cache[key]

    def transverse(self, i: int) -> np.ndarray:
        n = self.branches[i].normal
        a = self.anchors[i]
        return (self.x - a[0]) * n[0] + (self.y - a[1]) * n[1]

    def in_branch(self, i: int) -> np.ndarray:
        """Cells inside the half-strip H_i (including its part inside the junction ball)."""
        key = ("inb", i)
        if key not in self._cache:
            b = self.branches[i]
            s = self.coord(i)
            self._cache[key] = (s > 0) & (np.abs(self.transverse(i)) < 0.5 * b.width)
        return self._cache[key]

    def branch_cells(self, i: int, s_min: float | None = None) -> np.ndarray:
        """Indices of cells of branch i with branch coordinate above s_min (default L)."""
        s_min = self.L if s_min is None else s_min
        return np.flatnonzero(self.in_branch(i) & (self.coord(i) > s_min))

    def cell_of(self, px, py) -> np.ndarray:
        """Active-cell index containing each point, -1 if outside."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        ii = np.floor(px / self.h).astype(np.int64) - self.i0
        jj = np.floor(py / self.h).astype(np.int64) - self.j0
        ny, nx = self.index.shape
        ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
        out = np.full(px.shape, -1, dtype=np.int64)
        out[ok] = self.index[jj[ok], ii[ok]]
        return out

    def contains(self, px, py) -> np.ndarray:
        return self.cell_of(px, py) >= 0

    def far_point(self, i: int, depth: float | None = None) -> np.ndarray:
        b = self.branches[i]
        s = b.length - 2 * self.h if depth is None else depth
        return self.anchors[i] + s * np.asarray(b.direction)

    def to_config(self) -> dict:
        br = []
        for b, a in zip(self.branches, self.anchors):
            d = {"angle_deg": b.angle_deg, "width": b.width, "length": b.length}
            if b.anchor is not None:
                d["anchor"] = list(b.anchor)
            br.append(d)
        return {"L": self.L, "h": self.h, "blend": self.junction_blend, "ball": self.ball,
                "center": [float(self.center[0]), float(self.center[1])], "branches": br}

    def write_pgm(self, path) -> None:
        img = np.where(self.mask, 255, 0).astype(np.uint8)[::-1]
        ny, nx = img.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{nx} {ny}\n255\n".encode())
            fh.write(img.tobytes())


# ---------------------------------------------------------------- building

def _auto_offsets(specs: list[BranchSpec]) -> list[float]:
    """Smallest offsets along e_i making all half-strips pairwise disjoint."""
    offs = []
    for i, bi in enumerate(specs):
        a = 0.0
        for j, bj in enumerate(specs):
            if i == j:
                continue
            cosang = float(np.clip(np.dot(bi.direction, bj.direction), -1.0, 1.0))
            ang = math.acos(cosang)
            if ang >= math.pi - 1e-12:
                continue
            if ang < 1e-12:
                raise GeometryError("branches not disjoint: two branches share a direction")
            a = max(a, 0.5 * max(bi.width, bj.width) / math.tan(0.5 * ang))
        offs.append(a)
    return offs


def _mouth_corners(spec: BranchSpec, anchor: np.ndarray) -> np.ndarray:
    n = np.asarray(spec.normal)
    return np.array([anchor + 0.5 * spec.width * n, anchor - 0.5 * spec.width * n])


def _rect(spec: BranchSpec, anchor: np.ndarray) -> np.ndarray:
    e = np.asarray(spec.direction)
    n = np.asarray(spec.normal)
    w = 0.5 * spec.width
    return np.array([anchor - w * n, anchor + spec.length * e - w * n,
                     anchor + spec.length * e + w * n, anchor + w * n])


def _fill_convex(mask: np.ndarray, verts: np.ndarray, h: float, i0: int, j0: int) -> None:
    """Set cells whose centers lie strictly inside the convex polygon."""
    ny, nx = mask.shape
    ymin, ymax = verts[:, 1].min(), verts[:, 1].max()
    jlo = max(int(math.floor(ymin / h - 0.5)) - j0, 0)
    jhi = min(int(math.ceil(ymax / h - 0.5)) - j0, ny - 1)
    if jhi < jlo:
        return
    rows = np.arange(jlo, jhi + 1)
    yc = (rows + j0 + 0.5) * h
    xl = np.full(rows.size, -np.inf)
    xr = np.full(rows.size, np.inf)
    # polygon as intersection of half-planes n.(p - v) < 0 with outward normals
    cw = np.roll(verts, -1, axis=0)
    area2 = np.sum(verts[:, 0] * cw[:, 1] - cw[:, 0] * verts[:, 1])
    sgn = 1.0 if area2 > 0 else -1.0
    for v, w in zip(verts, cw):
        ex, ey = w - v
        nxv, nyv = sgn * ey, -sgn * ex  # outward normal
        # nxv * (x - vx) + nyv * (y - vy) < 0
        rhs = -nyv * (yc - v[1])
        if abs(nxv) < 1e-15:
            bad = rhs <= 0
            xl[bad] = np.inf
            continue
        bound = v[0] + rhs / nxv
        if nxv > 0:
            xr = np.minimum(xr, bound)
        else:
            xl = np.maximum(xl, bound)
    for r, a, b in zip(rows, xl, xr):
        if not a < b:
            continue
        ilo = max(int(math.floor(a / h - 0.5)) + 1 - i0, 0)
        ihi = min(int(math.ceil(b / h - 0.5)) - 1 - i0, nx - 1)
        if ilo <= ihi:
            mask[r, ilo:ihi + 1] = True


def build_domain(specs, L: float | None = None, h: float = 0.25, blend: float = 0.0,
                 ball: float = 0.0, center=(0.0, 0.0)) -> BranchedDomain:
    """Rasterize a junction plus m straight branches.

    The junction core is the convex hull of the branch mouths and the
    center, united with the ball of radius ``ball``.  Concave corners near
    the junction are rounded by a morphological closing of radius ``blend``.
    ``L`` is raised, if necessary, so that every cell outside B(center, L)
    belongs to exactly one branch.
    """
    specs = list(specs)
    if len(specs) < 2:
        raise GeometryError("need at least two branches")
    if h <= 0:
        raise GeometryError("grid spacing must be positive")
    center = np.asarray(center, dtype=float)
    offs = _auto_offsets(specs) if any(b.anchor is None for b in specs) else [0.0] * len(specs)
    anchors = np.array([center + (np.asarray(b.anchor) if b.anchor is not None
                                  else o * np.asarray(b.direction))
                        for b, o in zip(specs, offs)])
    corners = np.concatenate([_mouth_corners(b, a) for b, a in zip(specs, anchors)])
    core_r = max(float(np.max(np.linalg.norm(corners - center, axis=1))), ball)
    if L is not None and core_r > L + 1e-9:
        if any(b.anchor is None for b in specs):
            raise GeometryError(
                f"branches not disjoint: separating them needs mouths at radius {core_r:.3g} > L = {L:.3g}")
        raise GeometryError(f"branch mouths lie outside B(0, L): {core_r:.3g} > {L:.3g}")
    for b in specs:
        if L is not None and b.length <= L:
            raise GeometryError("branch length must exceed the junction radius L")

    pts = np.concatenate([np.concatenate([_rect(b, a) for b, a in zip(specs, anchors)]),
                          center[None] + core_r * np.array([[1, 1], [-1, -1]])])
    pad = 2 * h + 2 * blend
    i0 = int(math.floor((pts[:, 0].min() - pad) / h)) - 2
    j0 = int(math.floor((pts[:, 1].min() - pad) / h)) - 2
    i1 = int(math.ceil((pts[:, 0].max() + pad) / h)) + 2
    j1 = int(math.ceil((pts[:, 1].max() + pad) / h)) + 2
    nx, ny = i1 - i0, j1 - j0
    if nx * ny > 60_000_000:
        raise GeometryError(f"bounding box too large ({nx} x {ny} cells)")
    mask = np.zeros((ny, nx), dtype=bool)
    for b, a in zip(specs, anchors):
        _fill_convex(mask, _rect(b, a), h, i0, j0)
    hull_pts = np.concatenate([corners, center[None]])
    try:
        hull = ConvexHull(hull_pts)
        _fill_convex(mask, hull_pts[hull.vertices], h, i0, j0)
    except QhullError:
        pass  # degenerate hull (collinear mouths): nothing to add
    xs = (np.arange(nx) + i0 + 0.5) * h
    ysv = (np.arange(ny) + j0 + 0.5) * h
    if ball > 0:
        X, Y = np.meshgrid(xs, ysv)
        mask |= (X - center[0]) ** 2 + (Y - center[1]) ** 2 < ball * ball
    if blend > 0:
        _fillet(mask, xs, ysv, center, core_r, blend, h)

    lab, nlab = ndimage.label(mask)
    if nlab != 1:
        raise NotConnected(f"domain not connected ({nlab} components)")

    index = np.full((ny, nx), -1, dtype=np.int64)
    cj, ci = np.nonzero(mask)
    n = ci.size
    index[cj, ci] = np.arange(n)
    x = xs[ci]
    y = ysv[cj]
    nbr = np.full((n, 4), -1, dtype=np.int64)
    nbr[:, 0] = np.where(ci > 0, index[cj, np.maximum(ci - 1, 0)], -1)
    nbr[:, 1] = np.where(ci < nx - 1, index[cj, np.minimum(ci + 1, nx - 1)], -1)
    nbr[:, 2] = np.where(cj > 0, index[np.maximum(cj - 1, 0), ci], -1)
    nbr[:, 3] = np.where(cj < ny - 1, index[np.minimum(cj + 1, ny - 1), ci], -1)
    kind = np.where(np.all(nbr >= 0, axis=1), INTERIOR, BOUNDARY).astype(np.int8)

    dom = BranchedDomain(branches=specs, anchors=anchors, L=float(L if L is not None else core_r),
                         h=h, junction_blend=blend, ball=ball, center=center, i0=i0, j0=j0,
                         index=index, ci=ci, cj=cj, x=x, y=y, nbr=nbr, cell_kind=kind,
                         owner=np.full(n, -1, dtype=np.int64))
    member = np.array([dom.in_branch(i) for i in range(len(specs))])
    if np.any(member.sum(axis=0) > 1):
        raise GeometryError("branches not disjoint")
    owner = np.where(member.any(axis=0), member.argmax(axis=0), -1)
    dom.owner = owner
    # L must cover every cell that is not a plain branch cell
    r = np.hypot(x - center[0], y - center[1])
    extra = r[owner < 0]
    L_eff = max(dom.L, float(extra.max()) + h if extra.size else 0.0)
    dom.L = L_eff
    _validate(dom)
    return dom


def _fillet(mask, xs, ys, center, core_r, r, h):
    """Morphological closing of radius r, restricted to a zone around the junction."""
    zone = core_r + 2.0 * r
    ilo = max(int(np.searchsorted(xs, center[0] - zone - 3 * r)) - 2, 0)
    ihi = min(int(np.searchsorted(xs, center[0] + zone + 3 * r)) + 2, xs.size)
    jlo = max(int(np.searchsorted(ys, center[1] - zone - 3 * r)) - 2, 0)
    jhi = min(int(np.searchsorted(ys, center[1] + zone + 3 * r)) + 2, ys.size)
    win = mask[jlo:jhi, ilo:ihi]
    d_out = ndimage.distance_transform_edt(~win, sampling=h)
    dil = d_out <= r + 1e-9
    d_in = ndimage.distance_transform_edt(dil, sampling=h)
    closed = d_in > r + 1e-9
    X, Y = np.meshgrid(xs[ilo:ihi], ys[jlo:jhi])
    near = (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= zone * zone
    win |= closed & near


def _validate(dom: BranchedDomain) -> None:
    """Each branch piece beyond L must be one connected component."""
    for i in range(dom.m):
        cells = dom.branch_cells(i)
        if cells.size == 0:
            raise GeometryError(f"branch {i} has no cells beyond L = {dom.L:.3g}")
        sub = np.zeros(dom.index.shape, dtype=bool)
        sub[dom.cj[cells], dom.ci[cells]] = True
        _, k = ndimage.label(sub)
        if k != 1:
            raise NotConnected(f"branch {i} is not connected beyond L")


def domain_from_config(cfg: dict) -> BranchedDomain:
    specs = []
    for b in cfg["branches"]:
        anchor = tuple(b["anchor"]) if b.get("anchor") is not None else None
        if "direction" in b:
            d = np.asarray(b["direction"], dtype=float)
            specs.append(BranchSpec(tuple(d / np.linalg.norm(d)), float(b["width"]),
                                    float(b["length"]), anchor))
        else:
            specs.append(BranchSpec.from_angle(float(b["angle_deg"]), float(b["width"]),
                                               float(b["length"]), anchor))
    return build_domain(specs, L=cfg.get("L"), h=float(cfg.get("h", 0.25)),
                        blend=float(cfg.get("blend", 0.0)), ball=float(cfg.get("ball", 0.0)),
                        center=tuple(cfg.get("center", (0.0, 0.0))))


def scale_domain(domain: BranchedDomain, R: float, x0=(0.0, 0.0), scale_length: bool = True,
                 h: float | None = None) -> BranchedDomain:
    """Rasterization of R * Omega + x0 on the same grid spacing."""
    if R <= 0:
        raise GeometryError("scale factor must be positive")
    x0 = np.asarray(x0, dtype=float)
    specs = []
    for b, a in zip(domain.branches, domain.anchors):
        anchor = tuple(R * (a - domain.center)) if b.anchor is not None else None
        specs.append(replace(b, width=R * b.width,
                             length=R * b.length if scale_length else b.length,
                             anchor=anchor))
    return build_domain(specs, L=None, h=domain.h if h is None else h,
                        blend=R * domain.junction_blend, ball=R * domain.ball,
                        center=tuple(R * domain.center + x0))


def y_junction(width=4.0, length=60.0, h=0.25, blend=None, angles=(0.0, 120.0, 240.0),
               **kw) -> BranchedDomain:
    blend = 0.5 * width if blend is None else blend
    return build_domain([BranchSpec.from_angle(a, width, length) for a in angles],
                        h=h, blend=blend, **kw)


def strip(length=60.0, width=4.0, h=0.25) -> BranchedDomain:
    """Straight strip along x through the origin, as two opposite branches."""
    half = 0.5 * length
    return build_domain([BranchSpec((1.0, 0.0), width, half), BranchSpec((-1.0, 0.0), width, half)],
                        h=h)


def u_shape(arm_length=30.0, width=4.0, gap=4.0, h=0.25) -> BranchedDomain:
    """Two parallel arms pointing along +x, joined on the left by a round elbow."""
    D = 0.5 * (gap + width)
    specs = [BranchSpec((1.0, 0.0), width, arm_length, anchor=(0.0, D)),
             BranchSpec((1.0, 0.0), width, arm_length, anchor=(0.0, -D))]
    return build_domain(specs, h=h, ball=D + 0.5 * width)


# --------------------------------------------------------- geometric tests

@numba.njit(cache=True)
def _segments_inside(index, i0, j0, h, cx, cy, px, py, spacing):
    ny, nx = index.shape
    for k in range(px.shape[0]):
        dx = px[k] - cx
        dy = py[k] - cy
        n = int(math.ceil(math.sqrt(dx * dx + dy * dy) / spacing))
        for s in range(n + 1):
            t = s / n if n > 0 else 0.0
            qx = cx + t * dx
            qy = cy + t * dy
            # accept the point if one of the four nearest cell centers is active
            a = int(math.floor(qx / h - 0.5)) - i0
            b = int(math.floor(qy / h - 0.5)) - j0
            ok = False
            for da in range(2):
                for db in range(2):
                    aa = a + da
                    bb = b + db
                    if 0 <= aa < nx and 0 <= bb < ny and index[bb, aa] >= 0:
                        ok = True
            if not ok:
                return False
    return True


def is_star_shaped(domain: BranchedDomain, center=None, spacing: float | None = None) -> bool:
    """Every segment from ``center`` to a boundary-adjacent cell stays in the mask.

    A sample point counts as inside when one of the four surrounding cell
    centers is active, which absorbs the half-cell stair-casing of slanted walls.
    """
    c = domain.center if center is None else np.asarray(center, dtype=float)
    if not domain.contains(c[0], c[1]):
        raise GeometryError("center must lie inside the domain")
    sel = domain.cell_kind == BOUNDARY
    return bool(_segments_inside(domain.index, domain.i0, domain.j0, domain.h, float(c[0]),
                                 float(c[1]), domain.x[sel], domain.y[sel],
                                 0.5 * domain.h if spacing is None else spacing))


def _outside_tree(domain: BranchedDomain, lo, hi):
    h = domain.h
    ilo = int(math.floor(lo[0] / h)) - 1
    ihi = int(math.ceil(hi[0] / h)) + 1
    jlo = int(math.floor(lo[1] / h)) - 1
    jhi = int(math.ceil(hi[1] / h)) + 1
    I, J = np.meshgrid(np.arange(ilo, ihi + 1), np.arange(jlo, jhi + 1))
    X = (I + 0.5) * h
    Y = (J + 0.5) * h
    out = ~domain.contains(X, Y)
    return cKDTree(np.column_stack([X[out], Y[out]]))


def path_min_clearance(domain: BranchedDomain, path: PathSpec) -> float:
    """Smallest distance from the resampled path to the stair-cased boundary."""
    pts = path.resample(0.5 * domain.h)
    if not np.all(domain.contains(pts[:, 0], pts[:, 1])):
        return 0.0
    span = np.ptp(pts, axis=0).max() + max(b.width for b in domain.branches) * 2 + 4 * domain.h
    lo = pts.min(axis=0) - span
    hi = pts.max(axis=0) + span
    d, _ = _outside_tree(domain, lo, hi).query(pts)
    return float(d.min() - 0.5 * domain.h)


def path_clearance(domain: BranchedDomain, path: PathSpec, R: float) -> bool:
    return path_min_clearance(domain, path) >= R


def axis_path(domain: BranchedDomain, i: int, j: int, depth: float | None = None) -> PathSpec:
    """Polyline from deep in branch i along its axis through the center into branch j."""
    d = 2.0 * domain.L if depth is None else depth
    pts = [domain.far_point(i, d), domain.anchors[i], domain.center, domain.anchors[j],
           domain.far_point(j, d)]
    return PathSpec(np.array(pts))


def branch_coordinate(domain: BranchedDomain, x, i: int):
    if not 0 <= i < domain.m:
        raise IndexError("branch index out of range")
    e = np.asarray(domain.branches[i].direction)
    x = np.asarray(x, dtype=float)
    return (x - domain.anchors[i]) @ e


# ---------------------------------------------------------- fast marching

@numba.njit(cache=True)
def _fmm(nbr, h, src, src_val, limit):
    n = nbr.shape[0]
    T = np.full(n, np.inf)
    state = np.zeros(n, np.int8)  # 0 far, 1 trial, 2 accepted
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for k in range(src.shape[0]):
        s = src[k]
        if src_val[k] < T[s]:
            T[s] = src_val[k]
            state[s] = 1
            heapq.heappush(heap, (src_val[k], s))
    while len(heap) > 0:
        t, c = heapq.heappop(heap)
        if state[c] == 2 or t > T[c]:
            continue
        state[c] = 2
        if t > limit:
            break
        for d in range(4):
            q = nbr[c, d]
            if q < 0 or state[q] == 2:
                continue
            # upwind values in x and y
            a = np.inf
            for dd in range(2):
                r = nbr[q, dd]
                if r >= 0 and state[r] == 2 and T[r] < a:
                    a = T[r]
            b = np.inf
            for dd in range(2, 4):
                r = nbr[q, dd]
                if r >= 0 and state[r] == 2 and T[r] < b:
                    b = T[r]
            if a > b:
                a, b = b, a
            if b == np.inf or b - a >= h:
                val = a + h
            else:
                val = 0.5 * (a + b + math.sqrt(2.0 * h * h - (a - b) * (a - b)))
            if val < T[q]:
                T[q] = val
                state[q] = 1
                heapq.heappush(heap, (val, q))
    return T


def distance_field(domain: BranchedDomain, sources, source_values=None,
                   limit: float = np.inf) -> np.ndarray:
    """First-order fast-marching arrival times from the given source cells."""
    src = np.asarray(sources, dtype=np.int64).ravel()
    if src.size == 0:
        raise GeometryError("empty source set")
    vals = np.zeros(src.size) if source_values is None else np.asarray(source_values, float)
    return _fmm(domain.nbr, float(domain.h), src, vals, float(limit))


def _as_cells(domain: BranchedDomain, s):
    """Accept cell-index arrays or (k, 2) point arrays; return cells and offsets."""
    arr = np.asarray(s)
    if arr.ndim == 2 and arr.shape[1] == 2 and arr.dtype.kind == "f":
        cells = domain.cell_of(arr[:, 0], arr[:, 1])
        if np.any(cells < 0):
            raise GeometryError("point outside the domain")
        off = np.hypot(arr[:, 0] - domain.x[cells], arr[:, 1] - domain.y[cells])
        return cells, off
    if arr.ndim == 1 and arr.dtype.kind == "f" and arr.size == 2:
        return _as_cells(domain, arr[None, :])
    cells = arr.astype(np.int64).ravel()
    return cells, np.zeros(cells.size)


def geodesic_distance(domain: BranchedDomain, source_set, target_set) -> float:
    src, soff = _as_cells(domain, source_set)
    tgt, toff = _as_cells(domain, target_set)
    if src.size == 0 or tgt.size == 0:
        raise GeometryError("source and target sets must be nonempty")
    T = distance_field(domain, src, soff)
    vals = T[tgt] + toff
    if not np.isfinite(vals.min()):
        raise NotConnected("sets not connected in the domain")
    return float(vals.min())


def geodesic_distance_dijkstra(domain: BranchedDomain, p, q) -> float:
    """Cross-check: shortest path on the 16-neighbor graph at spacing h/2."""
    sub = np.repeat(np.repeat(domain.mask, 2, axis=0), 2, axis=1)
    hs = 0.5 * domain.h
    ny, nx = sub.shape
    idx = np.full(sub.shape, -1, dtype=np.int64)
    J, I = np.nonzero(sub)
    idx[J, I] = np.arange(I.size)
    offsets = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]
    rows, cols, wts = [], [], []
    for di, dj in offsets:
        I2, J2 = I + di, J + dj
        ok = (I2 >= 0) & (I2 < nx) & (J2 >= 0) & (J2 < ny)
        ok[ok] = idx[J2[ok], I2[ok]] >= 0
        # the midpoint cell must be active too (no corner cutting)
        Im = np.floor(I + 0.5 * di + 0.25).astype(np.int64)
        Jm = np.floor(J + 0.5 * dj + 0.25).astype(np.int64)
        okm = ok.copy()
        okm[ok] = idx[np.clip(Jm[ok], 0, ny - 1), np.clip(Im[ok], 0, nx - 1)] >= 0
        rows.append(idx[J[okm], I[okm]])
        cols.append(idx[J2[okm], I2[okm]])
        wts.append(np.full(int(okm.sum()), hs * math.hypot(di, dj)))
    g = coo_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(I.size, I.size)).tocsr()

    def node(pt):
        a = int(math.floor(pt[0] / hs)) - 2 * domain.i0
        b = int(math.floor(pt[1] / hs)) - 2 * domain.j0
        k = idx[b, a]
        if k < 0:
            raise GeometryError("point outside the domain")
        return k, (a + 0.5 + 2 * domain.i0) * hs, (b + 0.5 + 2 * domain.j0) * hs

    s, sx, sy = node(p)
    t, tx, ty = node(q)
    d = dijkstra(g, directed=False, indices=s)[t]
    if not np.isfinite(d):
        raise NotConnected("sets not connected in the domain")
    return float(d + math.hypot(p[0] - sx, p[1] - sy) + math.hypot(q[0] - tx, q[1] - ty))
