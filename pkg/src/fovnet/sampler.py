"""Per-face descriptors in parameter space: UV sample grids and the
local reference frame that makes them pose-free.

A UV grid rasterizes the face domain on a 10x10 cell-center lattice with
channels [x, y, z, nx, ny, nz, mask].  Expressed in the face's local frame
(origin at the face center, axes [U V N]) the grid is invariant to rigid
motions of the solid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    GRID_N,
    Face,
    points_in_face_trim,
    surface_normals_grid,
    surface_normal_and_partials,
    surface_partials,
    surface_point,
    uv_cell_centers,
    DegenerateTangent,
)

FRAME_TOL = 1e-9


@dataclass(frozen=True)
class LocalFrame:
    """Face center o and right-handed orthonormal axes U, V, N."""

    o: np.ndarray
    U: np.ndarray
    V: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        for name in ("o", "U", "V", "N"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        R = self.matrix
        if np.max(np.abs(R.T @ R - np.eye(3))) > FRAME_TOL:
            raise ValueError("frame axes not orthonormal")
        if np.linalg.det(R) < 0.0:
            raise ValueError("frame must be right-handed")

    @property
    def matrix(self) -> np.ndarray:
        """Columns [U V N]."""
        return np.stack([self.U, self.V, self.N], axis=1)

    def to_local_points(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.o) @ self.matrix

    def to_local_vectors(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix


@dataclass(frozen=True)
class UvGrid:
    """n_u x n_v x 7 sample tensor, channels [x y z nx ny nz mask]."""

    samples: np.ndarray
    frame_tag: str  # "global" | "lrf"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 3 or s.shape[2] != 7:
            raise ValueError("samples must have shape (n_u, n_v, 7)")
        if self.frame_tag not in ("global", "lrf"):
            raise ValueError(f"bad frame_tag {self.frame_tag!r}")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def positions(self) -> np.ndarray:
        return self.samples[:, :, 0:3]

    @property
    def normals(self) -> np.ndarray:
        return self.samples[:, :, 3:6]

    @property
    def mask(self) -> np.ndarray:
        return self.samples[:, :, 6]


def trim_test(face: Face, u: float, v: float) -> bool:
    """Even-odd point-in-trim test; loop-boundary points count inside."""
    return bool(points_in_face_trim(face, np.array([[u, v]], dtype=float))[0])


def sample_uv_grid(face: Face, n_u: int = GRID_N, n_v: int = GRID_N) -> UvGrid:
    """Global-frame UV grid on the cell-center lattice of the face domain.

    Trimmed-away cells keep their geometric channels and carry mask 0; the
    mask is also zeroed at parameterization poles where no normal exists.
    """
    us, vs = uv_cell_centers(face.surface.uv_domain, n_u, n_v)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    pts = surface_point(face.surface, uu, vv)
    normals, ok, _, _ = surface_normals_grid(face.surface, uu, vv, face.orientation)
    uv_flat = np.stack([uu.ravel(), vv.ravel()], axis=1)
    mask = points_in_face_trim(face, uv_flat).reshape(uu.shape)
    mask = mask & ok
    samples = np.concatenate(
        [pts, normals, mask[..., None].astype(float)], axis=2)
    return UvGrid(samples=samples, frame_tag="global")


def _project_tangent(vec: np.ndarray, normal: np.ndarray) -> np.ndarray | None:
    t = vec - np.dot(vec, normal) * normal
    n = np.linalg.norm(t)
    if n < 1e-12:
        return None
    return t / n


def compute_local_frame(face: Face) -> LocalFrame:
    """Frame at the surface point of the UV-domain center.

    N is the outward normal there; U projects the u-direction tangent onto
    the tangent plane; V = N x U.  When the u tangent degenerates (poles)
    the v tangent is tried, then the lowest-index world axis not parallel
    to N; every branch stays deterministic.
    """
    uc, vc = face.surface.uv_center()
    o = surface_point(face.surface, uc, vc)
    try:
        n, fu, fv = surface_normal_and_partials(face.surface, uc, vc, face.orientation)
    except DegenerateTangent:
        # Center sits on a pole; the only analytic case is the sphere, whose
        # limit normal is +-Z.  Other kinds keep Z as a deterministic stand-in.
        s = face.surface
        zn = s.z_axis if (s.kind != "sphere" or np.sin(vc) > 0) else -s.z_axis
        n = zn if face.orientation else -zn
        fu, fv = surface_partials(face.surface, uc, vc)
    u_dir = _project_tangent(fu, n)
    if u_dir is None:
        u_dir = _project_tangent(fv, n)
    if u_dir is None:
        for k in range(3):
            cand = np.zeros(3)
            cand[k] = 1.0
            u_dir = _project_tangent(cand, n)
            if u_dir is not None:
                break
    v_dir = np.cross(n, u_dir)
    return LocalFrame(o=o, U=u_dir, V=v_dir, N=n)


def to_lrf_grid(grid: UvGrid, frame: LocalFrame) -> UvGrid:
    """Re-express a global grid in the frame: p' = R^T (p - o), n' = R^T n."""
    if grid.frame_tag != "global":
        raise ValueError("expected a global-frame grid")
    samples = np.array(grid.samples)
    samples[:, :, 0:3] = frame.to_local_points(grid.positions.reshape(-1, 3)).reshape(
        grid.positions.shape)
    samples[:, :, 3:6] = frame.to_local_vectors(grid.normals.reshape(-1, 3)).reshape(
        grid.normals.shape)
    return UvGrid(samples=samples, frame_tag="lrf")
