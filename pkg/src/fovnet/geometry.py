"""Analytic B-rep substrate: surfaces, faces, solids, rigid motions.

Surfaces are the five classic analytics (plane, cylinder, cone, sphere,
torus) with an explicit placement frame and a rectangular UV domain.
Everything downstream (sampling, ray casting, descriptors) evaluates
geometry through this module.  All evaluation functions accept scalars or
numpy arrays for (u, v) and are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

SURFACE_KINDS = ("plane", "cylinder", "cone", "sphere", "torus")

# Number of radii each kind carries in `radii` (cone stores (ref_radius,
# half_angle); the half angle is in radians and does not scale).
_RADII_COUNT = {"plane": 0, "cylinder": 1, "cone": 2, "sphere": 1, "torus": 2}

# Which uv axes measure length (scale with the model) vs angle (do not).
_LINEAR_UV = {
    "plane": (True, True),
    "cylinder": (False, True),
    "cone": (False, True),
    "sphere": (False, False),
    "torus": (False, False),
}


class DegenerateTangent(Exception):
    """Surface normal undefined: the tangent cross product vanished."""


class DegenerateBBox(Exception):
    """Solid bounding box too small to normalize."""


def _as_unit(v, name: str):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not math.isfinite(n) or abs(n - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a unit vector, |v| = {n}")
    return v


@dataclass(frozen=True)
class AnalyticSurface:
    """Parametric surface F: [u0,u1] x [v0,v1] -> R^3 with placement frame.

    `axes` holds the placement directions as columns [X Y Z], orthonormal
    and right-handed.  Angular parameters are radians, linear ones model
    units.  Parameterizations:

      plane     F = o + u X + v Y
      cylinder  F = o + r cos(u) X + r sin(u) Y + v Z
      cone      F = o + (r + v sin(a))(cos(u) X + sin(u) Y) + v cos(a) Z
      sphere    F = o + r (cos(v) cos(u) X + cos(v) sin(u) Y + sin(v) Z)
      torus     F = o + (R + r cos(v))(cos(u) X + sin(u) Y) + r sin(v) Z

    where cone radii = (r_at_v0, half_angle a) and v runs along the
    generatrix; sphere v is latitude in [-pi/2, pi/2].
    """

    kind: str
    origin: np.ndarray
    axes: np.ndarray
    radii: tuple
    uv_domain: tuple

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        axes = np.asarray(self.axes, dtype=float).reshape(3, 3)
        if np.max(np.abs(axes.T @ axes - np.eye(3))) > 1e-9:
            raise ValueError("placement axes must be orthonormal")
        if np.linalg.det(axes) < 0.0:
            raise ValueError("placement axes must be right-handed")
        radii = tuple(float(r) for r in self.radii)
        if len(radii) != _RADII_COUNT[self.kind]:
            raise ValueError(f"{self.kind} takes {_RADII_COUNT[self.kind]} radii")
        u0, u1, v0, v1 = (float(x) for x in self.uv_domain)
        if not (u1 > u0 and v1 > v0):
            raise ValueError("uv_domain must have positive measure")
        origin.flags.writeable = False
        axes.flags.writeable = False
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "uv_domain", (u0, u1, v0, v1))

    @property
    def x_axis(self) -> np.ndarray:
        return self.axes[:, 0]

    @property
    def y_axis(self) -> np.ndarray:
        return self.axes[:, 1]

    @property
    def z_axis(self) -> np.ndarray:
        return self.axes[:, 2]

    def uv_center(self) -> tuple:
        u0, u1, v0, v1 = self.uv_domain
        return (0.5 * (u0 + u1), 0.5 * (v0 + v1))

    def linear_uv_axes(self) -> tuple:
        """(u_is_length, v_is_length) for this kind."""
        return _LINEAR_UV[self.kind]


@dataclass(frozen=True)
class TrimLoop:
    """Closed UV polyline bounding a face region (outer boundary or hole)."""

    uv: np.ndarray
    is_outer: bool

    def __post_init__(self):
        uv = np.asarray(self.uv, dtype=float)
        if uv.ndim != 2 or uv.shape[1] != 2:
            raise ValueError("loop must be an (n, 2) array")
        if not np.allclose(uv[0], uv[-1], atol=1e-12):
            raise ValueError("loop must be closed (first vertex == last)")
        if len(np.unique(np.round(uv[:-1], 12), axis=0)) < 3:
            raise ValueError("loop needs at least 3 distinct vertices")
        uv.flags.writeable = False
        object.__setattr__(self, "uv", uv)


@dataclass(frozen=True)
class Face:
    """Trimmed analytic surface patch; `orientation` flips the natural
    normal (Fu x Fv) so the stored normal always points out of the solid."""

    face_id: int
    surface: AnalyticSurface
    loops: tuple
    orientation: bool = True
    label: int | None = None

    def __post_init__(self):
        loops = tuple(self.loops)
        outer = [lp for lp in loops if lp.is_outer]
        if len(outer) != 1:
            raise ValueError("face needs exactly one outer loop")
        u0, u1, v0, v1 = self.surface.uv_domain
        for lp in loops:
            uv = lp.uv
            if (uv[:, 0].min() < u0 - 1e-9 or uv[:, 0].max() > u1 + 1e-9
                    or uv[:, 1].min() < v0 - 1e-9 or uv[:, 1].max() > v1 + 1e-9):
                raise ValueError(f"face {self.face_id}: loop leaves uv_domain")
        object.__setattr__(self, "loops", loops)

    @property
    def outer_loop(self) -> TrimLoop:
        return next(lp for lp in self.loops if lp.is_outer)

    @property
    def inner_loops(self) -> tuple:
        return tuple(lp for lp in self.loops if not lp.is_outer)


@dataclass(frozen=True)
class Solid:
    """Faces plus shared-boundary-curve adjacency (undirected face pairs)."""

    faces: tuple
    edges: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        faces = tuple(self.faces)
        ids = [f.face_id for f in faces]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate face_id")
        known = set(ids)
        seen = set()
        edges = []
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-edge on face {a}")
            if a not in known or b not in known:
                raise ValueError(f"edge ({a},{b}) references unknown face")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            edges.append(key)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def face_by_id(self, face_id: int) -> Face:
        for f in self.faces:
            if f.face_id == face_id:
                return f
        raise KeyError(face_id)


class Rotation:
    """Unit quaternion rotation with axis-angle accessors."""

    __slots__ = ("q",)

    def __init__(self, q):
        q = np.asarray(q, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-12:
            q = q / n
        if abs(np.linalg.norm(q) - 1.0) > 1e-12:
            raise ValueError("quaternion norm too far from 1")
        q = q if q[0] >= 0.0 else -q  # canonical hemisphere
        q.flags.writeable = False
        self.q = q

    @classmethod
    def identity(cls) -> "Rotation":
        return cls((1.0, 0.0, 0.0, 0.0))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        h = 0.5 * float(angle)
        return cls((math.cos(h), *(math.sin(h) * axis)))

    def axis_angle(self) -> tuple:
        w = min(1.0, max(-1.0, float(self.q[0])))
        angle = 2.0 * math.acos(w)
        s = math.sqrt(max(0.0, 1.0 - w * w))
        if s < 1e-12:
            return np.array([1.0, 0.0, 0.0]), 0.0
        return self.q[1:] / s, angle

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.matrix().T

    def compose(self, other: "Rotation") -> "Rotation":
        """Rotation equal to applying `other` first, then self."""
        w1, x1, y1, z1 = self.q
        w2, x2, y2, z2 = other.q
        return Rotation((
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ))

    def __repr__(self):
        return f"Rotation(q={tuple(round(float(v), 12) for v in self.q)})"


def random_rotation(rng) -> Rotation:
    """Haar-uniform SO(3) sample; `rng` is a seed int or numpy Generator."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    q = rng.normal(size=4)
    while np.linalg.norm(q) < 1e-6:  # astronomically unlikely
        q = rng.normal(size=4)
    return Rotation(q / np.linalg.norm(q))


# ---------------------------------------------------------------------------
# Surface evaluation


def surface_point(surface: AnalyticSurface, u, v) -> np.ndarray:
    """Evaluate F(u, v); u, v broadcast, result shape (..., 3)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    o = surface.origin
    X, Y, Z = surface.x_axis, surface.y_axis, surface.z_axis
    k = surface.kind
    if k == "plane":
        p = o + np.multiply.outer(u, X) + np.multiply.outer(v, Y)
    elif k == "cylinder":
        (r,) = surface.radii
        p = (o + np.multiply.outer(r * np.cos(u), X)
             + np.multiply.outer(r * np.sin(u), Y) + np.multiply.outer(v, Z))
    elif k == "cone":
        r, a = surface.radii
        rad = r + v * math.sin(a)
        p = (o + np.multiply.outer(rad * np.cos(u), X)
             + np.multiply.outer(rad * np.sin(u), Y)
             + np.multiply.outer(v * math.cos(a), Z))
    elif k == "sphere":
        (r,) = surface.radii
        p = (o + np.multiply.outer(r * np.cos(v) * np.cos(u), X)
             + np.multiply.outer(r * np.cos(v) * np.sin(u), Y)
             + np.multiply.outer(r * np.sin(v), Z))
    else:  # torus
        R, r = surface.radii
        rad = R + r * np.cos(v)
        p = (o + np.multiply.outer(rad * np.cos(u), X)
             + np.multiply.outer(rad * np.sin(u), Y)
             + np.multiply.outer(r * np.sin(v), Z))
    return p


def surface_partials(surface: AnalyticSurface, u, v) -> tuple:
    """(dF/du, dF/dv) with shapes (..., 3)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    X, Y, Z = surface.x_axis, surface.y_axis, surface.z_axis
    k = surface.kind
    zero = np.zeros(np.broadcast(u, v).shape)
    if k == "plane":
        one = np.ones_like(zero)
        fu = np.multiply.outer(one, X)
        fv = np.multiply.outer(one, Y)
    elif k == "cylinder":
        (r,) = surface.radii
        fu = np.multiply.outer(-r * np.sin(u), X) + np.multiply.outer(r * np.cos(u), Y)
        fv = np.multiply.outer(np.ones_like(zero), Z)
    elif k == "cone":
        r, a = surface.radii
        rad = r + v * math.sin(a)
        fu = np.multiply.outer(-rad * np.sin(u), X) + np.multiply.outer(rad * np.cos(u), Y)
        fv = (np.multiply.outer(math.sin(a) * np.cos(u) + zero, X)
              + np.multiply.outer(math.sin(a) * np.sin(u) + zero, Y)
              + np.multiply.outer(math.cos(a) + zero, Z))
    elif k == "sphere":
        (r,) = surface.radii
        fu = (np.multiply.outer(-r * np.cos(v) * np.sin(u), X)
              + np.multiply.outer(r * np.cos(v) * np.cos(u), Y))
        fv = (np.multiply.outer(-r * np.sin(v) * np.cos(u), X)
              + np.multiply.outer(-r * np.sin(v) * np.sin(u), Y)
              + np.multiply.outer(r * np.cos(v) + zero, Z))
    else:  # torus
        R, r = surface.radii
        rad = R + r * np.cos(v)
        fu = np.multiply.outer(-rad * np.sin(u), X) + np.multiply.outer(rad * np.cos(u), Y)
        fv = (np.multiply.outer(-r * np.sin(v) * np.cos(u), X)
              + np.multiply.outer(-r * np.sin(v) * np.sin(u), Y)
              + np.multiply.outer(r * np.cos(v) + zero, Z))
    return fu, fv


DEGENERATE_TOL = 1e-12


def surface_normal_and_partials(surface: AnalyticSurface, u, v,
                                orientation: bool = True) -> tuple:
    """Outward unit normal plus raw partials at a single (u, v).

    `orientation` is the owning face's sense flag; False flips the natural
    normal direction Fu x Fv.  Raises DegenerateTangent at parameterization
    poles where the cross product vanishes.
    """
    fu, fv = surface_partials(surface, float(u), float(v))
    n = np.cross(fu, fv)
    norm = np.linalg.norm(n)
    if norm < DEGENERATE_TOL:
        raise DegenerateTangent(
            f"{surface.kind} tangents degenerate at (u={float(u)}, v={float(v)})")
    n = n / norm
    if not orientation:
        n = -n
    return n, fu, fv


def surface_normals_grid(surface: AnalyticSurface, u, v,
                         orientation: bool = True) -> tuple:
    """Vectorized normals: returns (normals, ok_mask, fu, fv).

    Degenerate cells get ok_mask False and a zero normal instead of an
    exception, so grid samplers can mask them out.
    """
    fu, fv = surface_partials(surface, u, v)
    n = np.cross(fu, fv)
    norm = np.linalg.norm(n, axis=-1)
    ok = norm >= DEGENERATE_TOL
    safe = np.where(ok, norm, 1.0)
    n = n / safe[..., None]
    n[~ok] = 0.0
    if not orientation:
        n = -n
    return n, ok, fu, fv


# ---------------------------------------------------------------------------
# Trim containment (even-odd polyline rule shared by sampling and ray
# filtering; boundary points count as inside for cross-platform determinism)

ON_EDGE_TOL = 1e-9


def _polygon_parity_and_edge(points: np.ndarray, polygon: np.ndarray) -> tuple:
    """(crossing parity, on-edge flag) per point for one closed polyline."""
    pts = np.asarray(points, dtype=float)
    poly = np.asarray(polygon, dtype=float)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    x0 = poly[:-1, 0][None, :]
    y0 = poly[:-1, 1][None, :]
    x1 = poly[1:, 0][None, :]
    y1 = poly[1:, 1][None, :]

    # crossing test on the half-open vertical span of each segment
    cond = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    crossing = cond & (x < x_int)
    parity = np.sum(crossing, axis=1) % 2

    ex = x1 - x0
    ey = y1 - y0
    seg_len2 = ex * ex + ey * ey
    tproj = np.clip(((x - x0) * ex + (y - y0) * ey) / np.where(seg_len2 > 0, seg_len2, 1.0),
                    0.0, 1.0)
    dx = x - (x0 + tproj * ex)
    dy = y - (y0 + tproj * ey)
    on_edge = np.any(dx * dx + dy * dy <= ON_EDGE_TOL * ON_EDGE_TOL, axis=1)
    return parity, on_edge


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd containment of (n, 2) points in a closed (m, 2) polyline.

    Points within ON_EDGE_TOL of an edge count as inside.  Vectorized over
    points; polygon vertices include the closing repeat.
    """
    parity, on_edge = _polygon_parity_and_edge(points, polygon)
    return (parity == 1) | on_edge


def points_in_face_trim(face: Face, uv: np.ndarray) -> np.ndarray:
    """Even-odd over all loops of the face; on any loop edge counts inside."""
    uv = np.asarray(uv, dtype=float)
    parity = np.zeros(len(uv), dtype=int)
    on_edge = np.zeros(len(uv), dtype=bool)
    for lp in face.loops:
        p, e = _polygon_parity_and_edge(uv, lp.uv)
        parity += p
        on_edge |= e
    return (parity % 2 == 1) | on_edge


# ---------------------------------------------------------------------------
# Solid transforms and normalization

GRID_N = 10


def uv_cell_centers(domain: tuple, n_u: int = GRID_N, n_v: int = GRID_N) -> tuple:
    """Cell-center lattice of an n_u x n_v subdivision of the domain."""
    u0, u1, v0, v1 = domain
    du = (u1 - u0) / n_u
    dv = (v1 - v0) / n_v
    us = u0 + (np.arange(n_u) + 0.5) * du
    vs = v0 + (np.arange(n_v) + 0.5) * dv
    return us, vs


def _face_sample_points(face: Face, n: int = GRID_N) -> np.ndarray:
    us, vs = uv_cell_centers(face.surface.uv_domain, n, n)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    return surface_point(face.surface, uu, vv).reshape(-1, 3)


def solid_bbox(solid: Solid) -> tuple:
    """(min, max) over every face's UV lattice samples, trim ignored."""
    pts = np.concatenate([_face_sample_points(f) for f in solid.faces])
    return pts.min(axis=0), pts.max(axis=0)


def _map_solid(solid: Solid, fn) -> Solid:
    """Rebuild the solid with fn applied to each face's surface/loops."""
    faces = []
    for f in solid.faces:
        surface, loops = fn(f)
        faces.append(Face(face_id=f.face_id, surface=surface, loops=loops,
                          orientation=f.orientation, label=f.label))
    return Solid(faces=tuple(faces), edges=solid.edges, metadata=dict(solid.metadata))


def translate_solid(solid: Solid, offset) -> Solid:
    offset = np.asarray(offset, dtype=float).reshape(3)

    def fn(face: Face):
        s = face.surface
        return replace(s, origin=s.origin + offset), face.loops

    return _map_solid(solid, fn)


def rotate_solid(solid: Solid, rot: Rotation) -> Solid:
    """Rotate every placement about the global origin; topology untouched."""
    R = rot.matrix()

    def fn(face: Face):
        s = face.surface
        return replace(s, origin=R @ s.origin, axes=R @ s.axes), face.loops

    return _map_solid(solid, fn)


def scale_solid(solid: Solid, scale: float) -> Solid:
    """Uniform scale about the origin: placements, radii, and the linear
    uv axes (and loop coordinates along them) all scale; angles do not."""
    s = float(scale)

    def fn(face: Face):
        sur = face.surface
        lin_u, lin_v = sur.linear_uv_axes()
        fu = s if lin_u else 1.0
        fv = s if lin_v else 1.0
        u0, u1, v0, v1 = sur.uv_domain
        if sur.kind == "cone":
            radii = (sur.radii[0] * s, sur.radii[1])
        else:
            radii = tuple(r * s for r in sur.radii)
        new_sur = replace(sur, origin=sur.origin * s, radii=radii,
                          uv_domain=(u0 * fu, u1 * fu, v0 * fv, v1 * fv))
        loops = tuple(TrimLoop(uv=lp.uv * np.array([fu, fv]), is_outer=lp.is_outer)
                      for lp in face.loops)
        return new_sur, loops

    return _map_solid(solid, fn)


def normalize_solid(solid: Solid) -> tuple:
    """Center the sample bbox at the origin and scale its diagonal to 1.

    Returns (normalized_solid, scale, translation) with
    new_point = (old_point + translation) * scale.
    """
    if not solid.faces:
        raise ValueError("solid has no faces")
    lo, hi = solid_bbox(solid)
    diag = float(np.linalg.norm(hi - lo))
    if diag < 1e-12:
        raise DegenerateBBox(f"bbox diagonal {diag} below 1e-12")
    center = 0.5 * (lo + hi)
    scale = 1.0 / diag
    moved = translate_solid(solid, -center)
    return scale_solid(moved, scale), scale, -center


def face_area(face: Face, quadrature_n: int = 64) -> float:
    """Trimmed area by midpoint quadrature on a quadrature_n^2 lattice."""
    if quadrature_n < 16:
        raise ValueError("quadrature_n must be >= 16")
    u0, u1, v0, v1 = face.surface.uv_domain
    us, vs = uv_cell_centers(face.surface.uv_domain, quadrature_n, quadrature_n)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    fu, fv = surface_partials(face.surface, uu, vv)
    jac = np.linalg.norm(np.cross(fu, fv), axis=-1)
    uv = np.stack([uu.ravel(), vv.ravel()], axis=1)
    mask = points_in_face_trim(face, uv).reshape(uu.shape)
    cell = ((u1 - u0) / quadrature_n) * ((v1 - v0) / quadrature_n)
    return float(np.sum(jac * mask) * cell)


def rectangle_loop(u0: float, u1: float, v0: float, v1: float,
                   is_outer: bool = True) -> TrimLoop:
    """Axis-aligned rectangular loop covering [u0,u1] x [v0,v1]."""
    uv = np.array([[u0, v0], [u1, v0], [u1, v1], [u0, v1], [u0, v0]], dtype=float)
    return TrimLoop(uv=uv, is_outer=is_outer)


def circle_loop(cu: float, cv: float, radius: float, n: int = 128,
                is_outer: bool = False) -> TrimLoop:
    """Closed n-gon inscribed in a circle in UV space."""
    t = np.linspace(0.0, 2.0 * math.pi, n + 1)
    uv = np.stack([cu + radius * np.cos(t), cv + radius * np.sin(t)], axis=1)
    uv[-1] = uv[0]
    return TrimLoop(uv=uv, is_outer=is_outer)


def untrimmed_face(face_id: int, surface: AnalyticSurface,
                   orientation: bool = True, label: int | None = None) -> Face:
    """Face whose outer loop is the full UV domain rectangle."""
    u0, u1, v0, v1 = surface.uv_domain
    return Face(face_id=face_id, surface=surface,
                loops=(rectangle_loop(u0, u1, v0, v1),),
                orientation=orientation, label=label)
