"""Ellipsoid geometry: representations, MVEE fitting, intersection oracle.

An ellipsoid is carried as (center, semi_axes, rotation).  Two world-frame
matrix views are derived from it:

* ``shape_matrix``     S = R diag(a) R^T, maps the unit sphere onto the
                       ellipsoid surface (p = S s + c, ||s|| = 1);
* ``quadratic_matrix`` M = R diag(1/a^2) R^T = S^-2, membership test
                       (x - c)^T M (x - c) <= 1.

Semi-axis lengths are stored explicitly so both conventions stay exact.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DegenerateInput, NonConvergence

# Point clouds are plain (n, 3) float64 arrays in the world frame.
PointCloud = np.ndarray

# Symmetric positive definite 3x3 matrices are plain (3, 3) float64 arrays.
SymMat3 = np.ndarray

_ORTHO_TOL = 1e-9


def _as_matrix(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Ellipsoid:
    """A solid ellipsoid in the world frame.

    center     (3,) meters
    semi_axes  (3,) strictly positive lengths, meters
    rotation   (3, 3) orthonormal, det +1
    """

    center: np.ndarray
    semi_axes: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "center", _as_matrix(self.center, (3,)))
        object.__setattr__(self, "semi_axes", _as_matrix(self.semi_axes, (3,)))
        object.__setattr__(self, "rotation", _as_matrix(self.rotation, (3, 3)))
        if not np.all(np.isfinite(self.center)):
            raise ValueError("ellipsoid center must be finite")
        if not np.all(self.semi_axes > 0.0):
            raise ValueError(f"semi-axes must be strictly positive, got {self.semi_axes}")
        R = self.rotation
        if float(np.abs(R.T @ R - np.eye(3)).max()) > _ORTHO_TOL:
            raise ValueError("rotation must be orthonormal within 1e-9")
        if abs(float(np.linalg.det(R)) - 1.0) > _ORTHO_TOL * 10:
            raise ValueError("rotation must have determinant +1")

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * float(np.prod(self.semi_axes))

    def contains(self, x, tol: float = 0.0) -> bool:
        """Membership test (x - c)^T M (x - c) <= 1 + tol."""
        d = np.asarray(x, dtype=np.float64) - self.center
        return float(d @ quadratic_matrix(self) @ d) <= 1.0 + tol

    def inflated(self, margin: float) -> "Ellipsoid":
        """Same pose with every semi-axis grown by ``margin`` meters."""
        return Ellipsoid(self.center, self.semi_axes + margin, self.rotation)


def validate_sym_mat3(m: SymMat3, *, sym_tol: float = 1e-12) -> None:
    """Raise if m is not symmetric (within tol) positive definite."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected 3x3 matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, atol=sym_tol, rtol=0.0):
        raise ValueError("matrix is not symmetric within 1e-12")
    if np.any(np.linalg.eigvalsh(m) <= 0.0):
        raise ValueError("matrix is not positive definite")


def shape_matrix(e: Ellipsoid) -> SymMat3:
    """World-frame shape matrix S = R diag(a) R^T.

    Maps the unit sphere onto the ellipsoid surface; its eigenvalues are the
    semi-axis lengths.
    """
    return e.rotation @ np.diag(e.semi_axes) @ e.rotation.T


def quadratic_matrix(e: Ellipsoid) -> SymMat3:
    """World-frame quadratic form M = R diag(1/a^2) R^T = shape_matrix(e)^-2.

    x is inside the ellipsoid iff (x - c)^T M (x - c) <= 1.
    """
    return e.rotation @ np.diag(1.0 / e.semi_axes**2) @ e.rotation.T


def ellipsoid_from_quadratic(center, m: SymMat3) -> Ellipsoid:
    """Recover (semi_axes, rotation) from a quadratic-form matrix.

    Deterministic eigendecomposition cleanup: semi-axes sorted descending,
    each eigenvector's first nonzero component made positive, and the last
    column negated if the determinant comes out -1.
    """
    m = 0.5 * (np.asarray(m, dtype=np.float64) + np.asarray(m, dtype=np.float64).T)
    w, v = np.linalg.eigh(m)  # ascending eigenvalues of M == descending axes
    if np.any(w <= 0.0):
        raise DegenerateInput("quadratic form is not positive definite")
    semi_axes = 1.0 / np.sqrt(w)
    for j in range(3):
        col = v[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0.0:
            v[:, j] = -col
    if np.linalg.det(v) < 0.0:
        v[:, 2] = -v[:, 2]
    return Ellipsoid(center, semi_axes, v)


# ---------------------------------------------------------------------------
# Minimum-volume enclosing ellipsoid (Khachiyan barycentric ascent)
# ---------------------------------------------------------------------------

def _khachiyan_weights(q: np.ndarray, d: int, tolerance: float, max_iter: int) -> np.ndarray:
    """Barycentric coordinate ascent on the lifted MVEE dual.

    Uses the standard drop (away) step on the worst over-weighted point when
    it violates more than the best under-weighted one, which removes the slow
    tail of the plain add-only iteration.  Stops when the duality gap
    max_i g_i - (d+1) falls below eps*(d+1) with eps = tolerance*d/(d+1),
    which bounds every point residual by 1 + tolerance exactly.
    """
    n = q.shape[0]
    u = np.full(n, 1.0 / n)
    eps = tolerance * d / (d + 1.0)
    target = (1.0 + eps) * (d + 1.0)
    for _ in range(max_iter):
        x = q.T @ (u[:, None] * q)
        try:
            sol = np.linalg.solve(x, q.T)
        except np.linalg.LinAlgError:
            raise DegenerateInput("weighted scatter matrix is singular") from None
        g = np.einsum("ij,ji->i", q, sol)
        j_up = int(np.argmax(g))
        g_up = float(g[j_up])
        if g_up <= target:
            break
        support = u > 0.0
        g_masked = np.where(support, g, np.inf)
        j_dn = int(np.argmin(g_masked))
        g_dn = float(g_masked[j_dn])
        if g_up - (d + 1.0) >= (d + 1.0) - g_dn:
            step = (g_up - d - 1.0) / ((d + 1.0) * (g_up - 1.0))
            j = j_up
        else:
            step = (g_dn - d - 1.0) / ((d + 1.0) * (g_dn - 1.0))
            step = max(step, -u[j_dn] / (1.0 - u[j_dn]))
            j = j_dn
        u *= 1.0 - step
        u[j] += step
        u = np.maximum(u, 0.0)
    else:
        raise NonConvergence(
            f"MVEE did not reach duality gap {tolerance:g} in {max_iter} iterations"
        )
    return u


def _khachiyan(points: np.ndarray, tolerance: float, max_iter: int):
    """Returns (center, quadratic matrix) for the full-dimensional fit."""
    n, d = points.shape
    q = np.column_stack([points, np.ones(n)])  # lifted points, (n, d+1)
    u = _khachiyan_weights(q, d, tolerance, max_iter)
    center = points.T @ u
    cov = points.T @ (u[:, None] * points) - np.outer(center, center)
    try:
        m = np.linalg.inv(cov) / d
    except np.linalg.LinAlgError:
        raise DegenerateInput("point set spans fewer than the full dimension") from None
    return center, 0.5 * (m + m.T)


def fit_mvee(
    points: PointCloud,
    tolerance: float = 1e-7,
    *,
    max_iter: int = 10_000,
    inflate: bool = False,
    floor: float = 0.005,
) -> Ellipsoid:
    """Fit the minimum-volume enclosing ellipsoid of a 3-D point cloud.

    Every input point ends up with quadratic-form residual <= 1 + tolerance
    and the volume is within the solver's convergence tolerance of minimal.

    Degenerate clouds (rank < 3 after centering) raise DegenerateInput unless
    ``inflate`` is set, in which case the fit runs in the spanned subspace and
    missing/thin directions are padded up to ``floor`` meters so the result is
    always a valid 3-D volume.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0 or not np.all(np.isfinite(pts)):
        raise DegenerateInput("need at least one finite point")
    if tolerance <= 0.0:
        raise ValueError("tolerance must be positive")

    centroid = pts.mean(axis=0)
    centered = pts - centroid
    # Rank of the affine span decides whether the full 3-D fit is possible.
    _, s_svd, vt_svd = np.linalg.svd(centered, full_matrices=True)
    scale = max(float(s_svd[0]), 1.0)
    rank = int(np.sum(s_svd > 1e-9 * scale)) if pts.shape[0] > 1 else 0

    if rank == 3:
        work = pts
        if pts.shape[0] > 64:
            # The MVEE depends only on hull vertices; pruning interior points
            # collapses the ascent's early phase on dense sensor clouds.
            try:
                from scipy.spatial import ConvexHull

                work = pts[np.unique(ConvexHull(pts).vertices)]
            except Exception:
                work = pts
        center, m = _khachiyan(work, tolerance, max_iter)
        ell = ellipsoid_from_quadratic(center, m)
        if inflate and np.any(ell.semi_axes < floor):
            return Ellipsoid(ell.center, np.maximum(ell.semi_axes, floor), ell.rotation)
        return ell

    if not inflate:
        raise DegenerateInput(
            f"point set spans only {rank} dimensions; enable inflation to fit anyway"
        )

    # Subspace fit: solve the MVEE in the spanned coordinates, pad the rest.
    basis = vt_svd  # rows: subspace directions first, then the null space
    axes = np.full(3, floor)
    if rank == 0:
        return Ellipsoid(centroid, axes, np.eye(3))
    coords = centered @ basis[:rank].T  # (n, rank)
    if rank == 1:
        lo, hi = float(coords.min()), float(coords.max())
        sub_center = np.array([(lo + hi) / 2.0])
        sub_axes = np.array([max((hi - lo) / 2.0, floor)])
        rot_cols = basis.T  # columns are the subspace then padding directions
    else:  # rank == 2
        c2, m2 = _khachiyan2d(coords, tolerance, max_iter)
        w2, v2 = np.linalg.eigh(m2)
        if np.any(w2 <= 0.0):
            raise DegenerateInput("planar fit produced a non-definite form")
        sub_center = c2
        sub_axes = np.maximum(1.0 / np.sqrt(w2), floor)
        rot_cols = np.column_stack([basis[:2].T @ v2, basis[2]])
    axes[:rank] = sub_axes
    center = centroid + basis[:rank].T @ sub_center
    # Orthonormalize column signs / handedness deterministically.
    q = rot_cols
    for j in range(3):
        nz = np.nonzero(np.abs(q[:, j]) > 1e-12)[0]
        if nz.size and q[nz[0], j] < 0.0:
            q[:, j] = -q[:, j]
    if np.linalg.det(q) < 0.0:
        q[:, 2] = -q[:, 2]
    order = np.argsort(-axes)
    axes_sorted = axes[order]
    q_sorted = q[:, order]
    if np.linalg.det(q_sorted) < 0.0:
        q_sorted[:, 2] = -q_sorted[:, 2]
    return Ellipsoid(center, axes_sorted, q_sorted)


def _khachiyan2d(points: np.ndarray, tolerance: float, max_iter: int):
    """Khachiyan ascent for the planar case (d = 2)."""
    n, d = points.shape
    q = np.column_stack([points, np.ones(n)])
    u = _khachiyan_weights(q, d, tolerance, max_iter)
    center = points.T @ u
    cov = points.T @ (u[:, None] * points) - np.outer(center, center)
    m = np.linalg.inv(cov) / d
    return center, 0.5 * (m + m.T)


# ---------------------------------------------------------------------------
# Exact intersection test
# ---------------------------------------------------------------------------

def ellipsoids_intersect(a: Ellipsoid, b: Ellipsoid) -> bool:
    """True iff the closed ellipsoids share at least one point.

    b is mapped into coordinates where a becomes the unit ball; the minimum
    of b's quadratic form over that ball is found with a bounded 1-D root
    search on the parametric distance function, and compared against 1.
    Tangency counts as intersecting.
    """
    inv_axes = 1.0 / a.semi_axes
    # y = diag(1/a) R_a^T (x - c_a) sends a to the unit ball.
    to_ball = inv_axes[:, None] * a.rotation.T
    c = to_ball @ (b.center - a.center)
    c_norm2 = float(c @ c)
    if c_norm2 <= 1.0:
        return True  # b's center already inside a
    back = a.rotation * a.semi_axes[None, :]  # inverse map x = c_a + back @ y
    m = back.T @ quadratic_matrix(b) @ back
    s, v = np.linalg.eigh(0.5 * (m + m.T))
    z = v.T @ c
    s0, s1, s2 = float(s[0]), float(s[1]), float(s[2])
    z0, z1, z2 = float(z[0]), float(z[1]), float(z[2])
    q0 = s0 * z0 * z0 + s1 * z1 * z1 + s2 * z2 * z2
    if q0 <= 1.0:
        return True  # f(0) <= 1: the ball's center lies inside b
    # Otherwise the minimum of f(y) = (y-c)^T M (y-c) over ||y|| <= 1 is
    # attained on the sphere (the unconstrained minimizer c is outside).
    # KKT: y(L) = (M + L I)^-1 M c; in the eigenbasis the squared norm is
    #   phi(L) = sum (s_i z_i / (s_i + L))^2,
    # which decreases monotonically from phi(0) = ||c||^2 > 1 to 0.
    a0, a1, a2 = s0 * z0, s1 * z1, s2 * z2

    def phi(lam: float) -> float:
        t0 = a0 / (s0 + lam)
        t1 = a1 / (s1 + lam)
        t2 = a2 / (s2 + lam)
        return t0 * t0 + t1 * t1 + t2 * t2

    lo = 0.0
    hi = max(s0, s1, s2) * math.sqrt(c_norm2)
    while phi(hi) > 1.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if phi(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    f_min = lam * lam * (
        a0 * z0 / (s0 + lam) ** 2 + a1 * z1 / (s1 + lam) ** 2 + a2 * z2 / (s2 + lam) ** 2
    )
    return f_min <= 1.0 + 1e-9


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def ellipsoid_to_record(e: Ellipsoid) -> np.ndarray:
    """Flat record {center[3], semi_axes[3], rotation[9] row-major}."""
    return np.concatenate([e.center, e.semi_axes, e.rotation.reshape(9)])


def ellipsoid_from_record(record) -> Ellipsoid:
    rec = np.asarray(record, dtype=np.float64).reshape(15)
    return Ellipsoid(rec[:3], rec[3:6], rec[6:].reshape(3, 3))


def save_ellipsoid(path: Union[str, Path], e: Ellipsoid) -> None:
    rec = ellipsoid_to_record(e)
    Path(path).write_text(" ".join(repr(float(v)) for v in rec) + "\n")


def load_ellipsoid(path: Union[str, Path]) -> Ellipsoid:
    values = [float(tok) for tok in Path(path).read_text().split()]
    if len(values) != 15:
        raise ValueError(f"ellipsoid record needs 15 values, got {len(values)}")
    return ellipsoid_from_record(values)


def save_cloud_text(path: Union[str, Path], cloud: PointCloud) -> None:
    """Whitespace-separated ``x y z`` lines."""
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    with open(path, "w") as fh:
        for x, y, z in pts:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def load_cloud_text(path: Union[str, Path]) -> PointCloud:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"expected 'x y z' per line, got: {line!r}")
            rows.append([float(p) for p in parts])
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def save_cloud_bin(path: Union[str, Path], cloud: PointCloud) -> None:
    """Little-endian float32 xyz triples."""
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<" + "f" * pts.size, *pts.reshape(-1)))


def load_cloud_bin(path: Union[str, Path]) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % 12 != 0:
        raise ValueError("binary cloud length is not a multiple of 12 bytes")
    flat = struct.unpack("<" + "f" * (len(raw) // 4), raw)
    return np.array(flat, dtype=np.float64).reshape(-1, 3)
