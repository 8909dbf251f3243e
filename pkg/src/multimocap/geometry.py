"""Camera model, perspective projection, Procrustes alignment and PnP
camera refinement.

Conventions: world points map to the camera frame as ``Xc = R @ X + T``; the
pinhole projection is ``focal * (x/z, y/z) + principal_point``.  Point sets
are 3xK matrices (points as columns) in the public operations; batched
helpers use trailing (..., 3) layouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body import rodrigues, skew
from .errors import (CheiralityError, DegeneracyError,
                     InsufficientConstraintsError, ParameterError)
from .robust import geman_values, geman_weights

# weak-perspective default when intrinsics are unknown: large focal for a
# nominal 1000-px image
DEFAULT_FOCAL = 5000.0
DEFAULT_PRINCIPAL_POINT = (500.0, 500.0)


@dataclass
class CameraModel:
    """Pinhole camera: orthonormal rotation, translation, focal length in
    pixels and principal point."""

    rotation: np.ndarray
    translation: np.ndarray
    focal: float = DEFAULT_FOCAL
    principal_point: np.ndarray = field(
        default_factory=lambda: np.array(DEFAULT_PRINCIPAL_POINT))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        T = np.asarray(self.translation, dtype=float).ravel()
        pp = np.asarray(self.principal_point, dtype=float).ravel()
        if R.shape != (3, 3) or T.shape != (3,) or pp.shape != (2,):
            raise ParameterError("camera needs a 3x3 rotation, 3-vector translation "
                                 "and 2-vector principal point")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ParameterError("rotation must be orthonormal with determinant +1")
        if not self.focal > 0:
            raise ParameterError("focal length must be positive")
        self.rotation = R
        self.translation = T
        self.focal = float(self.focal)
        self.principal_point = pp

    @classmethod
    def identity(cls, focal: float = DEFAULT_FOCAL,
                 principal_point=DEFAULT_PRINCIPAL_POINT) -> "CameraModel":
        return cls(np.eye(3), np.zeros(3), focal, np.asarray(principal_point, float))

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.ravel().tolist(),
            "translation": self.translation.tolist(),
            "focal": self.focal,
            "principal_point": self.principal_point.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraModel":
        return cls(
            rotation=np.asarray(data["rotation"], dtype=float).reshape(3, 3),
            translation=np.asarray(data["translation"], dtype=float),
            focal=float(data["focal"]),
            principal_point=np.asarray(data["principal_point"], dtype=float),
        )


def project(camera: CameraModel, points: np.ndarray) -> np.ndarray:
    """Project a 3xK matrix of world points to a 2xK matrix of pixels.

    Raises ``CheiralityError`` naming the first column whose camera-frame
    depth is not positive.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] != 3:
        raise ParameterError(f"points must be 3xK, got {points.shape}")
    Xc = camera.rotation @ points + camera.translation[:, None]
    z = Xc[2]
    bad = np.flatnonzero(z <= 0)
    if bad.size:
        raise CheiralityError(
            f"point {bad[0]} has non-positive depth {z[bad[0]]:.6g}", column=int(bad[0]))
    uv = camera.focal * Xc[:2] / z + camera.principal_point[:, None]
    return uv


def project_points(camera: CameraModel, points: np.ndarray):
    """Batched projection of (..., 3) world points.

    Returns ``(pixels, depths)`` with shapes (..., 2) and (...,); depths are
    not checked, callers decide how to treat non-positive values.
    """
    points = np.asarray(points, dtype=float)
    Xc = points @ camera.rotation.T + camera.translation
    z = Xc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = camera.focal * Xc[..., :2] / z[..., None] + camera.principal_point
    return uv, z


# ---------------------------------------------------------------------------
# Procrustes alignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProcrustesResult:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    residual_rmse: float


def _centered(points: np.ndarray):
    mean = points.mean(axis=1, keepdims=True)
    return points - mean, mean[:, 0]


def procrustes_align(source: np.ndarray, target: np.ndarray,
                     with_scale: bool = True) -> ProcrustesResult:
    """Similarity (or rigid, ``with_scale=False``) transform minimizing
    ``|target - (s * R @ source + t)|_F``.

    ``residual_rmse`` is the per-point RMS of the remaining error, measured
    in the target frame.  Note the value is asymmetric in its arguments when
    scale is free; with ``with_scale=False`` it is symmetric.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape or source.ndim != 2 or source.shape[0] != 3:
        raise ParameterError("source and target must be matching 3xJ matrices")
    n = source.shape[1]
    if n < 3:
        raise ParameterError("at least 3 points required")
    src_c, src_mean = _centered(source)
    tgt_c, tgt_mean = _centered(target)
    sv = np.linalg.svd(src_c, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise DegeneracyError("centered source has rank < 2")

    cov = tgt_c @ src_c.T
    U, D, Vt = np.linalg.svd(cov)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = U @ np.diag(S) @ Vt
    if with_scale:
        scale = float(np.sum(D * S) / np.sum(src_c * src_c))
    else:
        scale = 1.0
    t = tgt_mean - scale * R @ src_mean
    err = target - (scale * R @ source + t[:, None])
    residual = float(np.sqrt(np.sum(err * err) / n))
    return ProcrustesResult(scale=scale, rotation=R, translation=t,
                            residual_rmse=residual)


def procrustes_residual_matrix(poses_a: np.ndarray, poses_b: np.ndarray,
                               with_scale: bool = True) -> np.ndarray:
    """All-pairs Procrustes residual RMS between two stacks of 3xJ poses.

    Args:
        poses_a: (Na, 3, J) stack.
        poses_b: (Nb, 3, J) stack.

    Returns:
        (Na, Nb) matrix of ``procrustes_align(a_p, b_q).residual_rmse``,
        computed from the closed-form optimum (no explicit transforms).
    """
    A = np.asarray(poses_a, dtype=float)
    B = np.asarray(poses_b, dtype=float)
    if A.ndim != 3 or B.ndim != 3 or A.shape[1] != 3 or B.shape[1] != 3 or A.shape[2] != B.shape[2]:
        raise ParameterError("pose stacks must be (N, 3, J) with matching J")
    n = A.shape[2]
    Ac = A - A.mean(axis=2, keepdims=True)
    Bc = B - B.mean(axis=2, keepdims=True)
    a2 = np.einsum("pij,pij->p", Ac, Ac)
    b2 = np.einsum("qij,qij->q", Bc, Bc)
    cov = np.einsum("qcj,pdj->pqcd", Bc, Ac)
    U, D, Vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(U) * np.linalg.det(Vt))
    tds = D[..., 0] + D[..., 1] + sign * D[..., 2]
    if with_scale:
        denom = np.where(a2 > 0, a2, 1.0)
        err2 = b2[None, :] - tds ** 2 / denom[:, None]
    else:
        err2 = a2[:, None] + b2[None, :] - 2.0 * tds
    return np.sqrt(np.clip(err2, 0.0, None) / n)


def rigid_init_relative_camera(ref_poses, other_poses):
    """Rigid (R, T) mapping the reference-frame joint clouds onto the other
    video's clouds, from corresponding synchronized frames.

    Minimizes the summed squared distance ``|other - (R @ ref + T)|`` over the
    concatenated point sets; no scale.  Used only as a camera starting point.
    """
    ref = np.concatenate([np.asarray(p, dtype=float) for p in ref_poses], axis=1)
    other = np.concatenate([np.asarray(p, dtype=float) for p in other_poses], axis=1)
    if ref.shape != other.shape or ref.shape[0] != 3:
        raise ParameterError("pose lists must stack to matching 3xK matrices")
    ref_c, ref_mean = _centered(ref)
    sv = np.linalg.svd(ref_c, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise DegeneracyError("stacked reference cloud has rank < 2")
    other_c, other_mean = _centered(other)
    cov = other_c @ ref_c.T
    U, D, Vt = np.linalg.svd(cov)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = U @ np.diag(S) @ Vt
    T = other_mean - R @ ref_mean
    return R, T


# ---------------------------------------------------------------------------
# PnP refinement
# ---------------------------------------------------------------------------

def _pnp_cost(points, W, conf, R, T, focal, pp, sigma):
    Xc = points @ R.T + T
    z = Xc[..., 2]
    if np.any(z <= 0):
        return np.inf
    uv = focal * Xc[..., :2] / z[..., None] + pp
    res = W - uv
    u2 = np.einsum("...i,...i->...", res, res)
    return float(np.sum(conf * geman_values(u2, sigma)))


def pnp_refine(camera_init: CameraModel, joints_per_frame, detections,
               sigma: float = 10.0, max_iters: int = 50,
               tol: float = 1e-14) -> CameraModel:
    """Refine camera rotation/translation against 2D detections.

    Damped Gauss-Newton with backtracking on the confidence-weighted
    Geman-McClure reprojection cost over all frames.  The accepted cost never
    increases; the rotation is re-projected to SO(3) after every step.

    Args:
        joints_per_frame: list of 3xJ world joint matrices, one per frame.
        detections: (F, J, 3) array of (x, y, confidence) rows per frame.

    Raises:
        InsufficientConstraintsError: fewer than 3 observations with nonzero
            confidence.
    """
    det = np.asarray(detections, dtype=float)
    frames = [np.asarray(p, dtype=float) for p in joints_per_frame]
    if det.ndim != 3 or det.shape[2] != 3 or det.shape[0] != len(frames):
        raise ParameterError("detections must be (F, J, 3) matching joints_per_frame")
    points = np.stack([p.T for p in frames]).reshape(-1, 3)
    W = det[..., :2].reshape(-1, 2)
    conf = det[..., 2].reshape(-1)
    keep = conf > 0
    if np.count_nonzero(keep) < 3:
        raise InsufficientConstraintsError(
            f"only {np.count_nonzero(keep)} detections with nonzero confidence")
    points, W, conf = points[keep], W[keep], conf[keep]

    R = camera_init.rotation.copy()
    T = camera_init.translation.copy()
    focal, pp = camera_init.focal, camera_init.principal_point
    cost = _pnp_cost(points, W, conf, R, T, focal, pp, sigma)
    damping = 1e-6

    for _ in range(max_iters):
        Xc = points @ R.T + T
        z = Xc[..., 2]
        uv = focal * Xc[..., :2] / z[..., None] + pp
        res = W - uv
        u2 = np.einsum("ni,ni->n", res, res)
        w = conf * geman_weights(u2, sigma)

        # du/dXc, then chain to the 6-vector (rotation increment, translation)
        n = points.shape[0]
        Jp = np.zeros((n, 2, 3))
        Jp[:, 0, 0] = focal / z
        Jp[:, 0, 2] = -focal * Xc[:, 0] / z ** 2
        Jp[:, 1, 1] = focal / z
        Jp[:, 1, 2] = -focal * Xc[:, 1] / z ** 2
        Ju = np.concatenate([Jp @ (-skew(Xc - T)), Jp], axis=2)  # (n, 2, 6)

        H = np.einsum("n,nic,nid->cd", w, Ju, Ju)
        g = np.einsum("n,nic,ni->c", w, Ju, res)
        try:
            delta = np.linalg.solve(H + damping * np.eye(6), g)
        except np.linalg.LinAlgError:
            damping *= 10.0
            continue

        step = 1.0
        accepted = False
        for _ in range(24):
            Rc = rodrigues(step * delta[:3]) @ R
            # keep the iterate exactly orthonormal
            U, _, Vt = np.linalg.svd(Rc)
            Rc = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt
            Tc = T + step * delta[3:]
            c = _pnp_cost(points, W, conf, Rc, Tc, focal, pp, sigma)
            if c < cost:
                improvement = cost - c
                R, T, cost = Rc, Tc, c
                accepted = True
                break
            step *= 0.5
        if not accepted:
            damping *= 10.0
            if damping > 1e8:
                break
            continue
        damping = max(damping * 0.5, 1e-9)
        if improvement <= tol * max(1.0, cost):
            break

    return CameraModel(R, T, focal, pp)
