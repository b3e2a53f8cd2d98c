"""Ray casting against analytic B-rep solids.

Field-of-view descriptors shoot hemispheres of rays from face centers and
record first-hit statistics.  Intersections are closed-form for plane,
sphere, cylinder and cone; the torus quartic is solved by companion-matrix
eigenvalues polished with Newton steps.  Candidate hits are filtered
through each face's trim loops in UV space.

A triangle-soup oracle (Moller-Trumbore over a median-split BVH) provides
an independent cross-check used by the verification suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    AnalyticSurface,
    Face,
    Solid,
    points_in_face_trim,
    surface_normals_grid,
    surface_point,
)
from .sampler import LocalFrame

DEFAULT_T_MIN = 1e-6
_NO_HIT = np.inf
_DISC_TOL = 1e-14          # quadratic discriminant below this is a graze -> miss
_TORUS_RESIDUAL = 1e-9     # quartic roots polished until |f(t)| falls below
_RECONSTRUCT_TOL = 1e-7    # |F(u,v) - hit_point| guard against bogus inversions


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = DEFAULT_T_MIN

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("ray direction must be unit length")
        if not self.t_min > 0.0:
            raise ValueError("t_min must be positive")
        o.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class Hit:
    t: float
    face_id: int
    normal: np.ndarray
    incidence: float


@dataclass(frozen=True)
class FovGrid:
    """n_el x n_az x 3 first-hit raster, channels [hit_flag, distance, incidence]."""

    cells: np.ndarray
    hemisphere: str  # "outward" | "inward"

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=float)
        if c.ndim != 3 or c.shape[2] != 3:
            raise ValueError("cells must have shape (n_el, n_az, 3)")
        if self.hemisphere not in ("outward", "inward"):
            raise ValueError(f"bad hemisphere {self.hemisphere!r}")
        c.flags.writeable = False
        object.__setattr__(self, "cells", c)


def hemisphere_directions(frame: LocalFrame, n_el: int, n_az: int,
                          hemisphere: str) -> np.ndarray:
    """Unit ray directions for the (elevation x azimuth) grid, row-major.

    Elevation bin centers run from the tangent plane (0 deg) toward the
    hemisphere axis (90 deg); azimuth starts on U at bin left edges and
    increases toward V.  The 1x1 grid degenerates to the single axis ray.
    """
    if n_el < 1 or n_az < 1:
        raise ValueError("n_el and n_az must be >= 1")
    axis = frame.N if hemisphere == "outward" else -frame.N
    if hemisphere not in ("outward", "inward"):
        raise ValueError(f"bad hemisphere {hemisphere!r}")
    if n_el == 1 and n_az == 1:
        return axis.reshape(1, 3).copy()
    theta = (np.arange(n_el) + 0.5) * (0.5 * math.pi / n_el)
    phi = np.arange(n_az) * (2.0 * math.pi / n_az)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    planar = np.outer(cp, frame.U) + np.outer(sp, frame.V)          # (az, 3)
    dirs = ct[:, None, None] * planar[None, :, :] + st[:, None, None] * axis
    return dirs.reshape(n_el * n_az, 3)


# ---------------------------------------------------------------------------
# Analytic candidates, vectorized over rays (local-frame math per surface)


def _to_local(surface: AnalyticSurface, origins: np.ndarray, dirs: np.ndarray):
    R = surface.axes
    o = (origins - surface.origin) @ R
    d = dirs @ R
    return o, d


def _quadratic_roots(a, b, c):
    """Roots of a t^2 + b t + c per ray; NaN where missing.  Grazing
    (near-zero discriminant) counts as a miss."""
    n = np.broadcast(a, b, c).size
    t = np.full((n, 2), np.nan)
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,))
    b = np.broadcast_to(np.asarray(b, dtype=float), (n,))
    c = np.broadcast_to(np.asarray(c, dtype=float), (n,))
    lin = np.abs(a) < 1e-14
    nz = ~lin & True
    disc = b * b - 4.0 * a * c
    scale = np.maximum(b * b, np.abs(4.0 * a * c)) + 1e-300
    ok = nz & (disc > _DISC_TOL * scale)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -0.5 * (b + np.sign(b + (b == 0)) * sq)
        t0 = np.where(ok, q / a, np.nan)
        t1 = np.where(ok, c / np.where(q == 0.0, np.nan, q), np.nan)
        tl = np.where(lin & (np.abs(b) > 1e-14), -c / np.where(lin, b, 1.0), np.nan)
    t[:, 0] = np.where(lin, tl, t0)
    t[:, 1] = np.where(lin, np.nan, t1)
    return t


def _surface_candidates(surface: AnalyticSurface, origins: np.ndarray,
                        dirs: np.ndarray) -> tuple:
    """(t, u, v) candidate arrays of shape (n_rays, k) for the untrimmed
    surface; NaN marks absent roots.  u, v are principal values; periodic
    unwrapping into the face domain happens at trim time."""
    o, d = _to_local(surface, origins, dirs)
    ox, oy, oz = o[:, 0], o[:, 1], o[:, 2]
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    kind = surface.kind

    if kind == "plane":
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(dz) > 1e-14, -oz / dz, np.nan)[:, None]
        u = ox[:, None] + t * dx[:, None]
        v = oy[:, None] + t * dy[:, None]
        return t, u, v

    if kind == "cylinder":
        (r,) = surface.radii
        t = _quadratic_roots(dx * dx + dy * dy,
                             2.0 * (ox * dx + oy * dy),
                             ox * ox + oy * oy - r * r)
    elif kind == "sphere":
        (r,) = surface.radii
        t = _quadratic_roots(np.ones_like(ox),
                             2.0 * (ox * dx + oy * dy + oz * dz),
                             ox * ox + oy * oy + oz * oz - r * r)
    elif kind == "cone":
        r, half = surface.radii
        k = math.tan(half)
        rho = r + k * oz
        t = _quadratic_roots(dx * dx + dy * dy - k * k * dz * dz,
                             2.0 * (ox * dx + oy * dy - k * dz * rho),
                             ox * ox + oy * oy - rho * rho)
    else:  # torus
        t = _torus_roots(surface, o, d)

    x = ox[:, None] + t * dx[:, None]
    y = oy[:, None] + t * dy[:, None]
    z = oz[:, None] + t * dz[:, None]
    with np.errstate(invalid="ignore"):
        if kind == "cylinder":
            u = np.arctan2(y, x)
            v = z
        elif kind == "sphere":
            (r,) = surface.radii
            u = np.arctan2(y, x)
            v = np.arcsin(np.clip(z / r, -1.0, 1.0))
        elif kind == "cone":
            r, half = surface.radii
            u = np.arctan2(y, x)
            v = z / math.cos(half)
            # wrong-nappe ghosts reconstruct with negative radius: reject
            rho = r + z * math.tan(half)
            bad = rho < 0.0
            t = np.where(bad, np.nan, t)
            u = np.where(bad, np.nan, u)
            v = np.where(bad, np.nan, v)
        else:  # torus
            R, _ = surface.radii
            u = np.arctan2(y, x)
            v = np.arctan2(z, np.hypot(x, y) - R)
    return t, u, v


def _torus_roots(surface: AnalyticSurface, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Real quartic roots per ray via companion eigenvalues + Newton polish."""
    R, r = surface.radii
    n = len(o)
    B = 2.0 * np.sum(o * d, axis=1)
    C = np.sum(o * o, axis=1) + R * R - r * r
    dxy = d[:, 0] ** 2 + d[:, 1] ** 2
    oxy = o[:, 0] ** 2 + o[:, 1] ** 2
    odxy = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
    c3 = 2.0 * B
    c2 = B * B + 2.0 * C - 4.0 * R * R * dxy
    c1 = 2.0 * B * C - 8.0 * R * R * odxy
    c0 = C * C - 4.0 * R * R * oxy

    comp = np.zeros((n, 4, 4))
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    comp[:, 0, 3] = -c0
    comp[:, 1, 3] = -c1
    comp[:, 2, 3] = -c2
    comp[:, 3, 3] = -c3
    roots = np.linalg.eigvals(comp)

    def poly(t):
        return (((t + c3[:, None]) * t + c2[:, None]) * t + c1[:, None]) * t + c0[:, None]

    def dpoly(t):
        return ((4.0 * t + 3.0 * c3[:, None]) * t + 2.0 * c2[:, None]) * t + c1[:, None]

    near_real = np.abs(roots.imag) < 1e-6 * np.maximum(1.0, np.abs(roots.real))
    t = np.where(near_real, roots.real, np.nan)
    for _ in range(3):
        with np.errstate(divide="ignore", invalid="ignore"):
            step = poly(t) / dpoly(t)
        step = np.where(np.isfinite(step), step, 0.0)
        t = t - step
    residual_scale = max(1.0, (R + r) ** 4)
    bad = ~(np.abs(poly(t)) < _TORUS_RESIDUAL * residual_scale)
    t = np.where(bad, np.nan, t)
    # collapse duplicated roots so downstream "nearest" picks are stable
    ts = np.sort(t, axis=1)
    dup = np.diff(ts, axis=1) < 1e-9
    ts[:, 1:][dup] = np.nan
    return ts


def intersect_ray_surface(surface: AnalyticSurface, ray: Ray) -> list:
    """All untrimmed intersections as (t, u, v), ascending, t >= t_min."""
    t, u, v = _surface_candidates(surface, ray.origin[None, :], ray.direction[None, :])
    out = []
    for k in range(t.shape[1]):
        tk = float(t[0, k])
        if math.isfinite(tk) and tk >= ray.t_min:
            out.append((tk, float(u[0, k]), float(v[0, k])))
    out.sort(key=lambda h: h[0])
    return out


def _wrap_shifts(lo: float, hi: float, vals: np.ndarray) -> list:
    """2*pi*k shifts that can land principal values inside [lo, hi]."""
    two_pi = 2.0 * math.pi
    k_lo = math.floor((lo - np.pi) / two_pi) - 0
    k_hi = math.ceil((hi + np.pi) / two_pi) + 0
    return [two_pi * k for k in range(int(k_lo), int(k_hi) + 1)]


def _trim_accept(face: Face, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Containment of candidate (u, v) in the face trim, handling the
    periodic axes by testing every feasible 2*pi branch."""
    u0, u1, v0, v1 = face.surface.uv_domain
    lin_u, lin_v = face.surface.linear_uv_axes()
    u_shifts = [0.0] if lin_u else _wrap_shifts(u0, u1, u)
    v_shifts = [0.0] if lin_v else _wrap_shifts(v0, v1, v)
    flat_u = u.ravel()
    flat_v = v.ravel()
    ok = np.isfinite(flat_u) & np.isfinite(flat_v)
    accept = np.zeros(flat_u.shape, dtype=bool)
    idx = np.nonzero(ok)[0]
    if len(idx) == 0:
        return accept.reshape(u.shape)
    pu = flat_u[idx]
    pv = flat_v[idx]
    acc = np.zeros(len(idx), dtype=bool)
    for su in u_shifts:
        cu = pu + su
        if cu.max() < u0 - 1e-9 or cu.min() > u1 + 1e-9:
            continue
        for sv in v_shifts:
            cv = pv + sv
            if cv.max() < v0 - 1e-9 or cv.min() > v1 + 1e-9:
                continue
            todo = ~acc
            if not todo.any():
                break
            pts = np.stack([cu[todo], cv[todo]], axis=1)
            acc[todo] |= points_in_face_trim(face, pts)
    accept[idx] = acc
    return accept.reshape(u.shape)


def cast_rays(solid: Solid, origins: np.ndarray, dirs: np.ndarray,
              t_min: float = DEFAULT_T_MIN) -> dict:
    """Nearest trim-valid hit per ray across all faces of the solid.

    Returns arrays: hit (bool), t, face_id (-1 on miss), normal (n, 3),
    incidence.  Ties in t resolve to the earliest face in solid order.
    """
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    n = len(origins)
    best_t = np.full(n, _NO_HIT)
    best_face = np.full(n, -1, dtype=int)
    best_u = np.zeros(n)
    best_v = np.zeros(n)
    best_slot = np.full(n, -1, dtype=int)

    for slot, face in enumerate(solid.faces):
        t, u, v = _surface_candidates(face.surface, origins, dirs)
        with np.errstate(invalid="ignore"):
            valid = np.isfinite(t) & (t >= t_min)
        if not valid.any():
            continue
        # reconstruction guard: candidate (u, v) must map back onto the ray point
        pts_ray = origins[:, None, :] + t[..., None] * dirs[:, None, :]
        pts_srf = surface_point(face.surface, np.where(valid, u, 0.0),
                                np.where(valid, v, 0.0))
        err = np.linalg.norm(np.where(valid[..., None], pts_ray - pts_srf, 0.0), axis=-1)
        valid &= err <= _RECONSTRUCT_TOL * np.maximum(1.0, np.abs(t))
        valid &= _trim_accept(face, np.where(valid, u, np.nan), np.where(valid, v, np.nan))
        t = np.where(valid, t, _NO_HIT)
        k_best = np.argmin(t, axis=1)
        rows = np.arange(n)
        t_face = t[rows, k_best]
        better = t_face < best_t
        best_t[better] = t_face[better]
        best_face[better] = face.face_id
        best_slot[better] = slot
        best_u[better] = u[rows, k_best][better]
        best_v[better] = v[rows, k_best][better]

    hit = best_face >= 0
    normals = np.zeros((n, 3))
    for slot in np.unique(best_slot[hit]):
        face = solid.faces[slot]
        sel = best_slot == slot
        nrm, ok, _, _ = surface_normals_grid(face.surface, best_u[sel], best_v[sel],
                                             face.orientation)
        normals[sel] = nrm
    incidence = np.where(hit, np.sum(dirs * normals, axis=1), 0.0)
    incidence = np.clip(incidence, -1.0, 1.0)
    return {
        "hit": hit,
        "t": np.where(hit, best_t, 0.0),
        "face_id": best_face,
        "normal": normals,
        "incidence": incidence,
    }


def cast_ray(solid: Solid, ray: Ray) -> Hit | None:
    res = cast_rays(solid, ray.origin[None, :], ray.direction[None, :], ray.t_min)
    if not res["hit"][0]:
        return None
    return Hit(t=float(res["t"][0]), face_id=int(res["face_id"][0]),
               normal=res["normal"][0], incidence=float(res["incidence"][0]))


def compute_fov_details(solid: Solid, face: Face, frame: LocalFrame,
                        n_el: int = 6, n_az: int = 12,
                        t_min: float = DEFAULT_T_MIN) -> dict:
    """Raw per-cell cast results for both hemispheres (debug/CSV export)."""
    d_out = hemisphere_directions(frame, n_el, n_az, "outward")
    d_in = hemisphere_directions(frame, n_el, n_az, "inward")
    dirs = np.concatenate([d_out, d_in])
    origins = np.broadcast_to(frame.o, dirs.shape)
    res = cast_rays(solid, origins, dirs, t_min)
    m = len(d_out)
    return {
        "outward": {k: v[:m] for k, v in res.items()},
        "inward": {k: v[m:] for k, v in res.items()},
        "n_el": n_el if not (n_el == 1 and n_az == 1) else 1,
        "n_az": n_az if not (n_el == 1 and n_az == 1) else 1,
    }


def _grid_from_results(res: dict, n_el: int, n_az: int, hemisphere: str) -> FovGrid:
    cells = np.zeros((n_el * n_az, 3))
    hit = res["hit"]
    cells[hit, 0] = 1.0
    cells[hit, 1] = res["t"][hit]
    cells[hit, 2] = res["incidence"][hit]
    return FovGrid(cells=cells.reshape(n_el, n_az, 3), hemisphere=hemisphere)


def compute_fov_grids(solid: Solid, face: Face, frame: LocalFrame,
                      n_el: int = 6, n_az: int = 12,
                      t_min: float = DEFAULT_T_MIN) -> tuple:
    """(outward, inward) FoV grids from the face center; misses are all-zero."""
    det = compute_fov_details(solid, face, frame, n_el, n_az, t_min)
    if n_el == 1 and n_az == 1:
        shape = (1, 1)
    else:
        shape = (n_el, n_az)
    ov = _grid_from_results(det["outward"], shape[0], shape[1], "outward")
    iv = _grid_from_results(det["inward"], shape[0], shape[1], "inward")
    return ov, iv


# ---------------------------------------------------------------------------
# Tessellation oracle (independent verification path)


class TessellationOracle:
    """Triangle soup + flattened median-split BVH over all faces."""

    def __init__(self, v0, e1, e2, normals, face_ids, nodes, tri_order):
        self.v0 = v0
        self.e1 = e1
        self.e2 = e2
        self.normals = normals
        self.face_ids = face_ids
        self.nodes = nodes          # list of (lo3, hi3, left, right, start, count)
        self.tri_order = tri_order  # permutation into triangle arrays

    @property
    def triangle_count(self) -> int:
        return len(self.v0)


def _face_triangles(face: Face, density: int) -> tuple:
    u0, u1, v0, v1 = face.surface.uv_domain
    us = np.linspace(u0, u1, density)
    vs = np.linspace(v0, v1, density)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    pts = surface_point(face.surface, uu, vv)
    uv_flat = np.stack([uu.ravel(), vv.ravel()], axis=1)
    inside = points_in_face_trim(face, uv_flat).reshape(uu.shape)

    i, j = np.meshgrid(np.arange(density - 1), np.arange(density - 1), indexing="ij")
    i = i.ravel()
    j = j.ravel()
    quads = np.stack([
        np.stack([i, j], axis=1),
        np.stack([i + 1, j], axis=1),
        np.stack([i + 1, j + 1], axis=1),
        np.stack([i, j + 1], axis=1),
    ], axis=1)  # (cells, 4, 2)

    def corner(sel):
        return pts[quads[:, sel, 0], quads[:, sel, 1]]

    def corner_in(sel):
        return inside[quads[:, sel, 0], quads[:, sel, 1]]

    a, b, c, dd = corner(0), corner(1), corner(2), corner(3)
    ia, ib, ic, id_ = corner_in(0), corner_in(1), corner_in(2), corner_in(3)
    tris = np.concatenate([
        np.stack([a, b, c], axis=1)[ia & ib & ic],
        np.stack([a, c, dd], axis=1)[ia & ic & id_],
    ])
    if len(tris) == 0:
        return (np.zeros((0, 3, 3)), np.zeros((0, 3)), np.zeros(0, dtype=int))

    # orient triangle normals to match the face's outward surface normal
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    tn = np.cross(e1, e2)
    area2 = np.linalg.norm(tn, axis=1)
    keep = area2 > 1e-16
    tris, tn, area2 = tris[keep], tn[keep], area2[keep]
    tn = tn / area2[:, None]
    centroids_uv = None  # orientation via surface normal at first vertex's uv not needed;
    # use the sign of agreement with the face normal sampled at triangle centroid.
    return tris, tn, np.full(len(tris), face.face_id, dtype=int)


def build_tessellation_oracle(solid: Solid, density: int = 64,
                              leaf_size: int = 16) -> TessellationOracle:
    """Mask-filtered per-face triangle grids under one axis-aligned BVH."""
    if density < 32:
        raise ValueError("density must be >= 32")
    all_tris = []
    all_n = []
    all_fid = []
    for face in solid.faces:
        tris, tn, fid = _face_triangles(face, density)
        if len(tris) == 0:
            continue
        # align each triangle normal with the outward surface normal near it
        centroid = tris.mean(axis=1)
        # nearest-sample outward normal: evaluate at face center of mass in uv
        # is insufficient for curved faces, so compare per-triangle against the
        # geometric normal of the surface at the first vertex's parameters.
        all_tris.append(tris)
        all_n.append(tn)
        all_fid.append(fid)
    if not all_tris:
        tris = np.zeros((0, 3, 3))
        return TessellationOracle(tris, tris[:, 0], tris[:, 0], np.zeros((0, 3)),
                                  np.zeros(0, dtype=int), [], np.zeros(0, dtype=int))
    tris = np.concatenate(all_tris)
    normals = np.concatenate(all_n)
    face_ids = np.concatenate(all_fid)

    v0 = tris[:, 0]
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]

    lo = tris.min(axis=1)
    hi = tris.max(axis=1)
    centers = 0.5 * (lo + hi)

    order = np.arange(len(tris))
    nodes = []
    # stack of (index array, node slot); nodes appended breadth-first
    stack = [(order, 0)]
    nodes.append(None)
    while stack:
        idx, slot = stack.pop()
        blo = lo[idx].min(axis=0)
        bhi = hi[idx].max(axis=0)
        if len(idx) <= leaf_size:
            nodes[slot] = (tuple(blo), tuple(bhi), -1, -1, idx)
            continue
        axis = int(np.argmax(bhi - blo))
        half = len(idx) // 2
        part = np.argpartition(centers[idx, axis], half)
        left_idx = idx[part[:half]]
        right_idx = idx[part[half:]]
        li = len(nodes)
        nodes.append(None)
        ri = len(nodes)
        nodes.append(None)
        nodes[slot] = (tuple(blo), tuple(bhi), li, ri, None)
        stack.append((left_idx, li))
        stack.append((right_idx, ri))

    return TessellationOracle(v0, e1, e2, normals, face_ids, nodes, order)


def _moller_trumbore(v0, e1, e2, o, d, t_min):
    """Vectorized triangle test; returns t array with inf at misses."""
    pvec = np.cross(np.broadcast_to(d, e2.shape), e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = o - v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = np.einsum("j,ij->i", d, qvec) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    eps = 1e-12
    good = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t >= t_min)
    return np.where(good, t, np.inf)


def oracle_cast(oracle: TessellationOracle, ray: Ray) -> Hit | None:
    """Nearest triangle hit with t >= t_min, or None."""
    if not oracle.nodes:
        return None
    o = ray.origin
    d = ray.direction
    inv_d = np.where(np.abs(d) > 1e-300, 1.0 / np.where(d == 0.0, 1.0, d),
                     math.copysign(1e300, 1.0) * np.sign(d + (d == 0.0)))
    ox, oy, oz = float(o[0]), float(o[1]), float(o[2])
    ix, iy, iz = float(inv_d[0]), float(inv_d[1]), float(inv_d[2])

    candidates = []
    stack = [0]
    nodes = oracle.nodes
    while stack:
        node = nodes[stack.pop()]
        (lx, ly, lz), (hx, hy, hz), left, right, idx = node
        t1 = (lx - ox) * ix
        t2 = (hx - ox) * ix
        tnear = min(t1, t2)
        tfar = max(t1, t2)
        t1 = (ly - oy) * iy
        t2 = (hy - oy) * iy
        tnear = max(tnear, min(t1, t2))
        tfar = min(tfar, max(t1, t2))
        t1 = (lz - oz) * iz
        t2 = (hz - oz) * iz
        tnear = max(tnear, min(t1, t2))
        tfar = min(tfar, max(t1, t2))
        if tfar < max(tnear, 0.0) - 1e-12:
            continue
        if left < 0:
            candidates.append(idx)
        else:
            stack.append(left)
            stack.append(right)
    if not candidates:
        return None
    idx = np.concatenate(candidates)
    t = _moller_trumbore(oracle.v0[idx], oracle.e1[idx], oracle.e2[idx],
                         o, d, ray.t_min)
    best = int(np.argmin(t))
    if not math.isfinite(t[best]):
        return None
    tri = idx[best]
    normal = oracle.normals[tri]
    incidence = float(np.clip(np.dot(d, normal), -1.0, 1.0))
    return Hit(t=float(t[best]), face_id=int(oracle.face_ids[tri]),
               normal=normal, incidence=incidence)
