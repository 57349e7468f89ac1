"""Numerical SO(3)/O(3) representation theory.

Real spherical harmonics in the orthonormal (quantum) convention with m
ordered -l..l, Wigner-D blocks acting on them, Clebsch-Gordan coupling
arrays, and Haar-random rotations.  Everything is double precision and
deterministic.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

LMAX_SUPPORTED = 8

_ROTATION_ORTHO_TOL = 1e-12
_WIGNER_ORTHO_TOL = 1e-10


class SO3Error(ValueError):
    pass


@dataclass(frozen=True)
class Rotation:
    """A proper rotation: 3x3 orthogonal matrix with determinant +1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise SO3Error(f"rotation matrix must be 3x3, got shape {m.shape}")
        if np.max(np.abs(m.T @ m - np.eye(3))) >= _ROTATION_ORTHO_TOL:
            raise SO3Error("rotation matrix is not orthonormal")
        if np.linalg.det(m) < 0:
            raise SO3Error("rotation matrix has determinant -1 (improper)")
        object.__setattr__(self, "matrix", m)

    def compose(self, other: "Rotation") -> "Rotation":
        return Rotation(self.matrix @ other.matrix)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.eye(3))


@dataclass(frozen=True)
class WignerBlock:
    """(2l+1)x(2l+1) orthogonal matrix representing a rotation on the l space."""

    l: int
    matrix: np.ndarray

    def __post_init__(self):
        d = 2 * self.l + 1
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (d, d):
            raise SO3Error(f"Wigner block for l={self.l} must be {d}x{d}, got {m.shape}")
        if np.max(np.abs(m.T @ m - np.eye(d))) >= _WIGNER_ORTHO_TOL:
            raise SO3Error(f"Wigner block for l={self.l} is not orthogonal")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class CGArray:
    """Coupling array for l1 (x) l2 -> l3 in the real basis.

    Zero iff the selection rule |l1-l2| <= l3 <= l1+l2 is violated; otherwise
    normalized so the sum of squared entries equals 2*l3+1, sign fixed by the
    first nonzero entry in lexicographic (m1, m2, m3) order being positive.
    """

    l1: int
    l2: int
    l3: int
    values: np.ndarray


def _double_factorial(n: int) -> float:
    out = 1.0
    while n > 1:
        out *= n
        n -= 2
    return out


def solid_harmonics(lmax: int, xyz: np.ndarray) -> list[np.ndarray]:
    """r^l Y_lm(x/r) for l = 0..lmax, as polynomials in x, y, z.

    ``xyz`` has shape (..., 3) and need not be normalized; the result is a
    list of arrays of shape (..., 2l+1), smooth everywhere including the
    origin.  On unit vectors this evaluates the spherical harmonics
    themselves.
    """
    if lmax < 0 or lmax > LMAX_SUPPORTED:
        raise SO3Error(f"lmax must be in [0, {LMAX_SUPPORTED}], got {lmax}")
    xyz = np.asarray(xyz, dtype=float)
    if xyz.shape[-1] != 3:
        raise SO3Error(f"xyz must have a trailing dimension of 3, got shape {xyz.shape}")
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    r2 = x * x + y * y + z * z

    # A_m + i B_m = (x + i y)^m
    cos_part = [np.ones_like(x)]
    sin_part = [np.zeros_like(x)]
    for m in range(1, lmax + 1):
        cos_part.append(x * cos_part[m - 1] - y * sin_part[m - 1])
        sin_part.append(x * sin_part[m - 1] + y * cos_part[m - 1])

    # legendre[l][m] = r^(l-m) P_l^m(z/r) / sin(theta)^m, a polynomial in z and r^2
    # (associated Legendre without the Condon-Shortley phase).
    legendre: list[list[np.ndarray | None]] = [
        [None] * (lmax + 1) for _ in range(lmax + 1)
    ]
    for m in range(lmax + 1):
        start = np.full_like(x, _double_factorial(2 * m - 1))
        legendre[m][m] = start
        if m + 1 <= lmax:
            legendre[m + 1][m] = (2 * m + 1) * z * start
        for l in range(m + 2, lmax + 1):
            legendre[l][m] = (
                (2 * l - 1) * z * legendre[l - 1][m]
                - (l - 1 + m) * r2 * legendre[l - 2][m]
            ) / (l - m)

    out = []
    for l in range(lmax + 1):
        block = np.empty(x.shape + (2 * l + 1,))
        for m in range(l + 1):
            norm = math.sqrt(
                (2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m)
            )
            if m == 0:
                block[..., l] = norm * legendre[l][0]
            else:
                scaled = math.sqrt(2.0) * norm * legendre[l][m]
                block[..., l + m] = scaled * cos_part[m]
                block[..., l - m] = scaled * sin_part[m]
        out.append(block)
    return out


def real_sph_harm(lmax: int, direction: np.ndarray) -> list[np.ndarray]:
    """Orthonormal real spherical harmonics of a unit vector, per l.

    Raises if the direction is not normalized within 1e-9; no silent
    renormalization.
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (3,):
        raise SO3Error(f"direction must be a 3-vector, got shape {direction.shape}")
    norm = float(np.linalg.norm(direction))
    if abs(norm - 1.0) > 1e-9:
        raise SO3Error(f"direction must be a unit vector, got norm {norm!r}")
    return solid_harmonics(lmax, direction)


_WIGNER_FRAME_SEED = 7_102_331
_wigner_frames: dict[int, tuple[np.ndarray, np.ndarray]] = {}
_wigner_lock = threading.Lock()


def _wigner_frame(l: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed generic direction set and the pseudoinverse of its Y_l matrix."""
    with _wigner_lock:
        if l not in _wigner_frames:
            rng = np.random.default_rng(_WIGNER_FRAME_SEED + l)
            n = 2 * (2 * l + 1) + 8
            dirs = rng.standard_normal((n, 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            ymat = solid_harmonics(l, dirs)[l]  # (n, 2l+1)
            _wigner_frames[l] = (dirs, np.linalg.pinv(ymat))
        return _wigner_frames[l]


def wigner_d(l: int, r: Rotation) -> WignerBlock:
    """The matrix D with Y_l(R n) = D Y_l(n) for all unit vectors n."""
    if l < 0 or l > LMAX_SUPPORTED:
        raise SO3Error(f"l must be in [0, {LMAX_SUPPORTED}], got {l}")
    dirs, pinv = _wigner_frame(l)
    rotated = dirs @ r.matrix.T
    y_rot = solid_harmonics(l, rotated)[l]  # (n, 2l+1)
    # Y_rot = Y @ D^T  =>  D = (pinv(Y) @ Y_rot)^T
    return WignerBlock(l, (pinv @ y_rot).T)


_CG_SEED = 9_417_203
_CG_NUM_ROTATIONS = 3
_cg_cache: dict[tuple[int, int, int], CGArray] = {}
_cg_lock = threading.Lock()


def clebsch_gordan(l1: int, l2: int, l3: int) -> CGArray:
    """Real-basis coupling array, cached per (l1, l2, l3).

    Computed as the normalized null space of equivariance constraints
    stacked over a fixed set of seeded random rotations; the constraint is
    sum_{m1 m2} D1[m1,i] D2[m2,j] C[m1,m2,k] = sum_c D3[k,c] C[i,j,c].
    """
    for l in (l1, l2, l3):
        if l < 0 or l > LMAX_SUPPORTED:
            raise SO3Error(f"angular momenta must be in [0, {LMAX_SUPPORTED}], got {l}")
    key = (l1, l2, l3)
    with _cg_lock:
        if key in _cg_cache:
            return _cg_cache[key]
        d1, d2, d3 = 2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1
        if not abs(l1 - l2) <= l3 <= l1 + l2:
            arr = CGArray(l1, l2, l3, np.zeros((d1, d2, d3)))
            _cg_cache[key] = arr
            return arr
        n = d1 * d2 * d3
        blocks = []
        for k in range(_CG_NUM_ROTATIONS):
            rot = random_rotation(_CG_SEED + 17 * k)
            m1 = wigner_d(l1, rot).matrix
            m2 = wigner_d(l2, rot).matrix
            m3 = wigner_d(l3, rot).matrix
            blocks.append(
                np.kron(np.kron(m1.T, m2.T), np.eye(d3))
                - np.kron(np.eye(d1 * d2), m3)
            )
        stacked = np.concatenate(blocks, axis=0)
        _, sigma, vt = np.linalg.svd(stacked, full_matrices=True)
        if n > 1 and sigma[-2] < 1e-6:
            raise SO3Error(f"CG null space for {key} is not one-dimensional")
        vec = vt[-1]
        if n > 1 and sigma[-1] > 1e-8:
            raise SO3Error(f"no CG null space found for {key}")
        vec = vec / np.linalg.norm(vec) * math.sqrt(d3)
        nonzero = np.nonzero(np.abs(vec) > 1e-8 * np.max(np.abs(vec)))[0]
        if vec[nonzero[0]] < 0:
            vec = -vec
        arr = CGArray(l1, l2, l3, vec.reshape(d1, d2, d3))
        _cg_cache[key] = arr
        return arr


def rotation_from_quaternion(q) -> Rotation:
    """Rotation encoded by the quaternion (w, x, y, z); q is normalized first."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise SO3Error(f"quaternion must have shape (4,), got {q.shape}")
    norm = np.linalg.norm(q)
    if norm == 0 or not np.isfinite(norm):
        raise SO3Error("quaternion must be finite and nonzero")
    w, x, y, z = q / norm
    matrix = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return Rotation(matrix)


def random_rotation(seed: int) -> Rotation:
    """Haar-uniform rotation, deterministic for a given seed (unit quaternion)."""
    rng = np.random.default_rng(seed)
    return rotation_from_quaternion(rng.standard_normal(4))
