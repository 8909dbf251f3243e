"""Joint optimization of per-video body motion and cameras against 2D
keypoint detections.

The objective couples a confidence-weighted robust reprojection error, a
temporal smoothing term and low-rank coupling of the per-video pose and
root-trajectory stacks through auxiliary variables:

    L_2d + lambda_t * L_temp
         + lambda_r1 * sum_i |theta_i - Z_i|_F^2
         + lambda_r2 * |gamma - Y|_F^2,
    rank(Z_i) <= s,  rank(Y) <= s.

Minimization alternates (1) gradient descent with backtracking on the body
parameters, (2) exact SVD updates of Z_i and Y, and (3) per-video PnP camera
refinement, so the objective trace is non-increasing by construction.

``L_2d`` is normalized by the total detection confidence, which makes the
default weights independent of scene size.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import body as body_mod
from .body import SkeletonSpec, fk_jacobian_batch, forward_kinematics_batch
from .errors import (CheiralityError, InsufficientConstraintsError,
                     ParameterError)
from .geometry import CameraModel, pnp_refine, rigid_init_relative_camera
from .robust import geman_values, geman_weights
from .sync import CommonTimeline

ARMIJO_C = 1e-4
MIN_STEP = 1e-14


@dataclass
class SolverConfig:
    """Weights and iteration limits for the alternating solve.

    ``s`` bounds the rank of both the pose and trajectory stacks;
    ``s_pose``/``s_traj`` override it individually.  ``share_motion`` forces
    one motion for all videos (auxiliary stacks projected to identical rows)
    instead of the rank-``s`` subspace.
    """

    s: int = 1
    s_pose: int | None = None
    s_traj: int | None = None
    lambda_t: float = 1.0
    lambda_r1: float = 10.0
    lambda_r2: float = 10.0
    geman_sigma: float = 10.0
    step_size: float = 0.1
    max_outer_iters: int = 50
    max_inner_iters: int = 20
    convergence_tol: float = 1e-6
    share_motion: bool = False
    optimize_focal: bool = False

    def __post_init__(self):
        if self.s < 1:
            raise ParameterError("rank bound s must be >= 1")
        if min(self.lambda_t, self.lambda_r1, self.lambda_r2) < 0:
            raise ParameterError("weights must be nonnegative")
        if not self.geman_sigma > 0:
            raise ParameterError("geman_sigma must be positive")

    @property
    def rank_pose(self) -> int:
        return self.s_pose if self.s_pose is not None else self.s

    @property
    def rank_traj(self) -> int:
        return self.s_traj if self.s_traj is not None else self.s


@dataclass
class DetectionSet:
    """Per-video, per-frame 2D keypoints with confidences.

    ``videos[j]`` has shape (N_j, J, 3) with columns (x, y, confidence).
    """

    videos: list[np.ndarray]

    def __post_init__(self):
        vids = []
        for j, v in enumerate(self.videos):
            arr = np.asarray(v, dtype=float)
            if arr.ndim != 3 or arr.shape[2] != 3:
                raise ParameterError(f"video {j} detections must be (N, J, 3)")
            if not np.all(np.isfinite(arr[..., :2])):
                raise ParameterError(f"video {j} has non-finite coordinates")
            if np.any(arr[..., 2] < 0) or np.any(arr[..., 2] > 1):
                raise ParameterError(f"video {j} confidences must lie in [0, 1]")
            vids.append(arr)
        if len({v.shape[1] for v in vids}) > 1:
            raise ParameterError("all videos must share the same joint count")
        self.videos = vids

    @property
    def video_count(self) -> int:
        return len(self.videos)

    @property
    def joint_count(self) -> int:
        return self.videos[0].shape[1]

    @property
    def frame_counts(self) -> list[int]:
        return [v.shape[0] for v in self.videos]


@dataclass
class PoseTrack:
    """Per-frame body parameters of one video (its own frame count)."""

    theta: np.ndarray  # (N_j, 3J)
    beta: np.ndarray   # (J,)
    gamma: np.ndarray  # (N_j, 3)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)


@dataclass
class MotionParams:
    """Pose, shape and translation parameters on the common timeline.

    ``theta``: (M, N, 3J); ``beta``: (M, J), one shape per video; ``gamma``:
    (M, N, 3).
    """

    theta: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        m, n, threej = self.theta.shape
        if self.beta.shape != (m, threej // 3):
            raise ParameterError(f"beta must be (M, J) = ({m}, {threej // 3})")
        if self.gamma.shape != (m, n, 3):
            raise ParameterError(f"gamma must be (M, N, 3) = ({m}, {n}, 3)")

    @property
    def video_count(self) -> int:
        return self.theta.shape[0]

    @property
    def frame_count(self) -> int:
        return self.theta.shape[1]

    def pose_stack(self, i: int) -> np.ndarray:
        """The M x 3J matrix of all videos' poses at timeline frame i."""
        return self.theta[:, i, :]

    def trajectory_stack(self) -> np.ndarray:
        """The M x 3N matrix of all videos' root trajectories."""
        m = self.theta.shape[0]
        return self.gamma.reshape(m, -1)

    def copy(self) -> "MotionParams":
        return MotionParams(self.theta.copy(), self.beta.copy(), self.gamma.copy())


@dataclass
class ParamGradients:
    theta: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray


@dataclass
class AuxiliaryVars:
    """Low-rank auxiliary stacks: Z (N, M, 3J) per frame, Y (M, 3N)."""

    Z: np.ndarray
    Y: np.ndarray


@dataclass
class MotionSolution:
    params: MotionParams
    cameras: list[CameraModel]
    objective_trace: list[float] = field(default_factory=list)
    converged: bool = True
    warning: str | None = None


# ---------------------------------------------------------------------------
# Objective terms
# ---------------------------------------------------------------------------

def geman_mcclure(residual, sigma: float) -> float:
    """Robust penalty ``sigma^2 |r|^2 / (|r|^2 + sigma^2)``; bounded by
    ``sigma^2`` and equal to ``sigma^2 / 2`` at ``|r| = sigma``."""
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    r = np.asarray(residual, dtype=float).ravel()
    return float(geman_values(np.dot(r, r), sigma))


def _gather_detections(detections: DetectionSet, timeline: CommonTimeline):
    """Per-video detections re-indexed onto the common timeline: (M, N, J, 3)."""
    gathered = np.stack([detections.videos[j][timeline.maps[j]]
                         for j in range(detections.video_count)])
    return gathered


def _reprojection(skeleton: SkeletonSpec, params: MotionParams, cameras,
                  det_tl: np.ndarray, sigma: float, conf_total: float,
                  want_grad: bool, strict: bool = False):
    """Normalized robust reprojection loss over all videos and timeline frames.

    Returns ``(value, grads | None)``; in non-strict mode a cheirality
    violation yields ``(inf, None)`` instead of raising.
    """
    m, n, _ = params.theta.shape
    J = skeleton.joint_count
    if conf_total <= 0:
        if want_grad:
            return 0.0, ParamGradients(np.zeros_like(params.theta),
                                       np.zeros_like(params.beta),
                                       np.zeros_like(params.gamma))
        return 0.0, None

    thetas = params.theta.reshape(m * n, 3 * J)
    betas = np.repeat(params.beta, n, axis=0)
    gammas = params.gamma.reshape(m * n, 3)
    if want_grad:
        pos, jac = fk_jacobian_batch(skeleton, thetas, betas, gammas)
    else:
        pos = forward_kinematics_batch(skeleton, thetas, betas, gammas)
        jac = None
    pos = pos.reshape(m, n, J, 3)

    total = 0.0
    gtheta = np.zeros_like(params.theta) if want_grad else None
    gbeta = np.zeros_like(params.beta) if want_grad else None
    ggamma = np.zeros_like(params.gamma) if want_grad else None
    for j in range(m):
        cam = cameras[j]
        Xc = pos[j] @ cam.rotation.T + cam.translation  # (N, J, 3)
        z = Xc[..., 2]
        conf = det_tl[j, ..., 2]
        # only observed joints constrain the camera side of the cheirality
        bad = (z <= 0) & (conf > 0)
        if np.any(bad):
            if strict:
                where = np.argwhere(bad)[0]
                raise CheiralityError(
                    f"video {j}, timeline frame {where[0]}: joint {where[1]} "
                    f"has non-positive depth", video=j, frame=int(where[0]))
            return np.inf, None
        z = np.where(z > 0, z, 1.0)  # unobserved joints carry zero weight
        uv = cam.focal * Xc[..., :2] / z[..., None] + cam.principal_point
        res = det_tl[j, ..., :2] - uv
        u2 = np.einsum("nji,nji->nj", res, res)
        total += float(np.sum(conf * geman_values(u2, sigma)))
        if want_grad:
            w2 = 2.0 * conf * geman_weights(u2, sigma)
            guv = -w2[..., None] * res  # dL/duv
            g_xc = np.empty_like(Xc)
            g_xc[..., 0] = cam.focal / z * guv[..., 0]
            g_xc[..., 1] = cam.focal / z * guv[..., 1]
            g_xc[..., 2] = -cam.focal / z ** 2 * (
                Xc[..., 0] * guv[..., 0] + Xc[..., 1] * guv[..., 1])
            g_pos = g_xc @ cam.rotation  # (N, J, 3)
            gparams = np.einsum("nr,nrp->np", g_pos.reshape(n, 3 * J),
                                jac[j * n:(j + 1) * n])
            gtheta[j] = gparams[:, :3 * J]
            gbeta[j] = gparams[:, 3 * J:4 * J].sum(axis=0)
            ggamma[j] = gparams[:, 4 * J:]
    total /= conf_total
    if want_grad:
        gtheta /= conf_total
        gbeta /= conf_total
        ggamma /= conf_total
        return total, ParamGradients(gtheta, gbeta, ggamma)
    return total, None


def reprojection_loss(params: MotionParams, cameras, detections: DetectionSet,
                      timeline: CommonTimeline, config: SolverConfig,
                      skeleton: SkeletonSpec):
    """Confidence-weighted robust reprojection loss and its gradient.

    Normalized by the total detection confidence on the timeline.  Raises
    ``CheiralityError`` naming (video, frame) when a body point falls behind
    its camera.
    """
    det_tl = _gather_detections(detections, timeline)
    conf_total = float(det_tl[..., 2].sum())
    value, grads = _reprojection(skeleton, params, cameras, det_tl,
                                 config.geman_sigma, conf_total,
                                 want_grad=True, strict=True)
    return value, grads


def temporal_loss(params: MotionParams):
    """Sum of squared consecutive stacked-pose differences, with gradient."""
    theta = params.theta
    diff = theta[:, :-1, :] - theta[:, 1:, :]  # (M, N-1, 3J)
    value = float(np.sum(diff * diff))
    grad = np.zeros_like(theta)
    grad[:, :-1, :] += 2.0 * diff
    grad[:, 1:, :] -= 2.0 * diff
    return value, grad


def lowrank_project(matrix: np.ndarray, s: int) -> np.ndarray:
    """Best rank-``s`` approximation by truncated SVD (identity when
    ``s >= min(shape)``); idempotent."""
    if s < 1:
        raise ParameterError("rank bound s must be >= 1")
    matrix = np.asarray(matrix, dtype=float)
    if s >= min(matrix.shape):
        return matrix.copy()
    U, sv, Vt = np.linalg.svd(matrix, full_matrices=False)
    return (U[:, :s] * sv[:s]) @ Vt[:s]


def _rows_mean_project(matrix: np.ndarray) -> np.ndarray:
    """Least-squares projection onto matrices with identical rows."""
    mean = matrix.mean(axis=0, keepdims=True)
    return np.repeat(mean, matrix.shape[0], axis=0)


def _aux_from_params(params: MotionParams, config: SolverConfig) -> AuxiliaryVars:
    m, n, p = params.theta.shape
    Z = np.empty((n, m, p))
    for i in range(n):
        stack = params.pose_stack(i)
        Z[i] = _rows_mean_project(stack) if config.share_motion \
            else lowrank_project(stack, config.rank_pose)
    traj = params.trajectory_stack()
    Y = _rows_mean_project(traj) if config.share_motion \
        else lowrank_project(traj, config.rank_traj)
    return AuxiliaryVars(Z=Z, Y=Y)


def _coupling(params: MotionParams, aux: AuxiliaryVars, want_grad: bool):
    dz = np.transpose(params.theta, (1, 0, 2)) - aux.Z  # (N, M, 3J)
    dy = params.trajectory_stack() - aux.Y
    v1 = float(np.sum(dz * dz))
    v2 = float(np.sum(dy * dy))
    if not want_grad:
        return v1, v2, None, None
    g_theta = 2.0 * np.transpose(dz, (1, 0, 2))
    g_gamma = (2.0 * dy).reshape(params.gamma.shape)
    return v1, v2, g_theta, g_gamma


def total_objective(params: MotionParams, cameras, aux: AuxiliaryVars,
                    detections: DetectionSet, timeline: CommonTimeline,
                    config: SolverConfig, skeleton: SkeletonSpec) -> float:
    """Full objective: reprojection + temporal + auxiliary coupling terms."""
    det_tl = _gather_detections(detections, timeline)
    conf_total = float(det_tl[..., 2].sum())
    l2d, _ = _reprojection(skeleton, params, cameras, det_tl,
                           config.geman_sigma, conf_total,
                           want_grad=False, strict=True)
    lt, _ = temporal_loss(params)
    c1, c2, _, _ = _coupling(params, aux, want_grad=False)
    return l2d + config.lambda_t * lt + config.lambda_r1 * c1 + config.lambda_r2 * c2


# ---------------------------------------------------------------------------
# Alternating minimization
# ---------------------------------------------------------------------------

def _params_objective(skeleton, params, cameras, aux, det_tl, conf_total,
                      config, want_grad: bool):
    """Objective over the body parameters (cameras, aux fixed); non-strict."""
    l2d, g2d = _reprojection(skeleton, params, cameras, det_tl,
                             config.geman_sigma, conf_total, want_grad)
    if not np.isfinite(l2d):
        return np.inf, None
    lt, gt = temporal_loss(params)
    c1, c2, gc_theta, gc_gamma = _coupling(params, aux, want_grad)
    value = l2d + config.lambda_t * lt + config.lambda_r1 * c1 + config.lambda_r2 * c2
    if not want_grad:
        return value, None
    grads = ParamGradients(
        theta=g2d.theta + config.lambda_t * gt + config.lambda_r1 * gc_theta,
        beta=g2d.beta.copy(),
        gamma=g2d.gamma + config.lambda_r2 * gc_gamma,
    )
    return value, grads


def _descend_params(skeleton, params, cameras, aux, det_tl, conf_total, config,
                    alpha: float):
    """Backtracking gradient descent on (theta, beta, gamma); monotone."""
    value, grads = _params_objective(skeleton, params, cameras, aux, det_tl,
                                     conf_total, config, want_grad=True)
    underflow = False
    for _ in range(config.max_inner_iters):
        gnorm2 = (np.sum(grads.theta ** 2) + np.sum(grads.beta ** 2)
                  + np.sum(grads.gamma ** 2))
        if gnorm2 <= 1e-24:
            break
        accepted = False
        while alpha >= MIN_STEP:
            cand = MotionParams(params.theta - alpha * grads.theta,
                                params.beta - alpha * grads.beta,
                                params.gamma - alpha * grads.gamma)
            cval, _ = _params_objective(skeleton, cand, cameras, aux, det_tl,
                                        conf_total, config, want_grad=False)
            if cval <= value - ARMIJO_C * alpha * gnorm2:
                params, value = cand, cval
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            underflow = True
            break
        alpha = min(alpha * 2.0, 1e6)
        value, grads = _params_objective(skeleton, params, cameras, aux, det_tl,
                                         conf_total, config, want_grad=True)
    return params, value, alpha, underflow


def _refine_cameras(skeleton, params, cameras, det_tl, config):
    m, n, _ = params.theta.shape
    J = skeleton.joint_count
    pos = forward_kinematics_batch(
        skeleton, params.theta.reshape(m * n, -1),
        np.repeat(params.beta, n, axis=0),
        params.gamma.reshape(m * n, 3)).reshape(m, n, J, 3)
    out = []
    for j in range(m):
        if np.count_nonzero(det_tl[j, ..., 2] > 0) < 3:
            out.append(cameras[j])
            continue
        joints = [pos[j, i].T for i in range(n)]
        out.append(pnp_refine(cameras[j], joints, det_tl[j],
                              sigma=config.geman_sigma))
    return out


def alternating_solve(init: MotionSolution, detections: DetectionSet,
                      timeline: CommonTimeline, config: SolverConfig,
                      skeleton: SkeletonSpec) -> MotionSolution:
    """Alternate gradient steps, SVD auxiliary updates and PnP until the
    objective stalls.

    Every block is individually non-increasing, so the recorded objective
    trace is monotone within round-off.  A line-search underflow ends the
    solve early with a warning instead of an error.
    """
    params = init.params.copy()
    cameras = list(init.cameras)
    det_tl = _gather_detections(detections, timeline)
    conf_total = float(det_tl[..., 2].sum())

    aux = _aux_from_params(params, config)
    obj = total_objective(params, cameras, aux, detections, timeline, config,
                          skeleton)
    trace = [obj]
    alpha = config.step_size
    warning = None
    for _ in range(config.max_outer_iters):
        params, _, alpha, underflow = _descend_params(
            skeleton, params, cameras, aux, det_tl, conf_total, config, alpha)
        aux = _aux_from_params(params, config)
        cameras = _refine_cameras(skeleton, params, cameras, det_tl, config)
        new_obj = total_objective(params, cameras, aux, detections, timeline,
                                  config, skeleton)
        trace.append(new_obj)
        done = abs(obj - new_obj) <= config.convergence_tol * max(1.0, abs(obj))
        obj = new_obj
        if underflow and not done:
            warning = "line search underflow; returning best iterate"
            break
        if done:
            break
    return MotionSolution(params=params, cameras=cameras, objective_trace=trace,
                          converged=warning is None, warning=warning)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _frame_losses(skeleton, cam, thetas, betas, gammas, W, conf, sigma,
                  want_grad: bool):
    """Per-frame robust losses (and grads w.r.t. (theta, gamma)) for one video.

    All arrays are batched over frames; losses are normalized by each frame's
    total confidence.  Frames with a cheirality violation get an inf loss.
    """
    B = thetas.shape[0]
    J = skeleton.joint_count
    if want_grad:
        pos, jac = fk_jacobian_batch(skeleton, thetas, betas, gammas)
    else:
        pos = forward_kinematics_batch(skeleton, thetas, betas, gammas)
    Xc = pos @ cam.rotation.T + cam.translation
    z = Xc[..., 2]
    denom = np.maximum(conf.sum(axis=1), 1e-12)
    bad = np.any((z <= 0) & (conf > 0), axis=1)
    z = np.where(z > 0, z, 1.0)  # masked/zero-weight below; keep math finite
    uv = cam.focal * Xc[..., :2] / z[..., None] + cam.principal_point
    res = W - uv
    u2 = np.einsum("bji,bji->bj", res, res)
    values = np.einsum("bj,bj->b", conf, geman_values(u2, sigma)) / denom
    values[bad] = np.inf
    if not want_grad:
        return values, None
    w2 = 2.0 * conf * geman_weights(u2, sigma)
    guv = -w2[..., None] * res
    g_xc = np.empty_like(Xc)
    g_xc[..., 0] = cam.focal / z * guv[..., 0]
    g_xc[..., 1] = cam.focal / z * guv[..., 1]
    g_xc[..., 2] = -cam.focal / z ** 2 * (Xc[..., 0] * guv[..., 0]
                                          + Xc[..., 1] * guv[..., 1])
    g_pos = (g_xc @ cam.rotation).reshape(B, 3 * J)
    gall = np.einsum("br,brp->bp", g_pos, jac) / denom[:, None]
    grad = np.concatenate([gall[:, :3 * J], gall[:, 4 * J:]], axis=1)
    grad[bad] = 0.0
    return values, grad


def refine_track_monocular(skeleton: SkeletonSpec, track: PoseTrack,
                           detections: np.ndarray, camera: CameraModel,
                           sigma: float = 10.0, steps: int = 20,
                           step_size: float = 0.05) -> PoseTrack:
    """Per-frame refinement of (theta, gamma) against one video's detections.

    Independent backtracking gradient descent per frame (shape stays fixed),
    capped at ``steps`` iterations.
    """
    det = np.asarray(detections, dtype=float)
    B = det.shape[0]
    J = skeleton.joint_count
    thetas = track.theta.copy()
    gammas = track.gamma.copy()
    betas = np.repeat(track.beta[None], B, axis=0)
    W, conf = det[..., :2], det[..., 2]

    values, grads = _frame_losses(skeleton, camera, thetas, betas, gammas, W,
                                  conf, sigma, want_grad=True)
    alpha = np.full(B, step_size)
    for _ in range(steps):
        gnorm2 = np.einsum("bp,bp->b", grads, grads)
        live = (gnorm2 > 1e-24) & np.isfinite(values)
        if not np.any(live):
            break
        pending = live.copy()
        for _ in range(40):
            ct = thetas.copy()
            cg = gammas.copy()
            ct[pending] -= alpha[pending, None] * grads[pending, :3 * J]
            cg[pending] -= alpha[pending, None] * grads[pending, 3 * J:]
            cvals, _ = _frame_losses(skeleton, camera, ct, betas, cg, W, conf,
                                     sigma, want_grad=False)
            ok = pending & (cvals <= values - ARMIJO_C * alpha * gnorm2)
            thetas[ok] = ct[ok]
            gammas[ok] = cg[ok]
            values[ok] = cvals[ok]
            alpha[ok] = alpha[ok] * 2.0
            pending = pending & ~ok
            alpha[pending] *= 0.5
            pending &= alpha >= MIN_STEP
            if not np.any(pending):
                break
        values, grads = _frame_losses(skeleton, camera, thetas, betas, gammas,
                                      W, conf, sigma, want_grad=True)
    return PoseTrack(theta=thetas, beta=track.beta.copy(), gamma=gammas)


def _track_joints(skeleton, track: PoseTrack, frames) -> list[np.ndarray]:
    idx = np.asarray(frames, dtype=int)
    pos = forward_kinematics_batch(
        skeleton, track.theta[idx],
        np.repeat(track.beta[None], idx.size, axis=0), track.gamma[idx])
    return [pos[k].T for k in range(idx.size)]


def initialize(initial_poses: list[PoseTrack], detections: DetectionSet,
               timeline: CommonTimeline, config: SolverConfig,
               skeleton: SkeletonSpec,
               intrinsics: list[tuple[float, np.ndarray]] | None = None) -> MotionSolution:
    """Build the starting solution from per-video initial pose tracks.

    The reference camera is the identity (its frame is the world frame).
    Each track is refined monocularly per frame, relative cameras come from
    rigidly aligning the synchronized joint clouds to the reference, and the
    per-video parameters are re-expressed in the world frame.

    ``initial_poses[j]`` is expressed in video j's own camera frame, as a
    monocular estimator would produce.
    """
    m = detections.video_count
    if len(initial_poses) != m:
        raise ParameterError("one initial pose track per video required")
    if intrinsics is None:
        intrinsics = [(CameraModel.identity().focal,
                       CameraModel.identity().principal_point)] * m

    ref = timeline.reference
    cams = [CameraModel.identity(focal=f, principal_point=pp)
            for f, pp in intrinsics]
    tracks = [refine_track_monocular(skeleton, initial_poses[j],
                                     detections.videos[j], cams[j],
                                     sigma=config.geman_sigma)
              for j in range(m)]

    ref_joints = _track_joints(skeleton, tracks[ref], timeline.maps[ref])
    cameras: list[CameraModel] = list(cams)
    for j in range(m):
        if j == ref:
            continue
        other_joints = _track_joints(skeleton, tracks[j], timeline.maps[j])
        try:
            R, T = rigid_init_relative_camera(ref_joints, other_joints)
        except Exception as exc:
            raise type(exc)(f"camera initialization failed for video {j}: {exc}")
        cameras[j] = CameraModel(R, T, intrinsics[j][0], intrinsics[j][1])
        # re-express the track in the world (reference-camera) frame
        theta = tracks[j].theta.copy()
        for f in range(theta.shape[0]):
            theta[f] = body_mod.rotate_root(theta[f], R.T)
        gamma = (tracks[j].gamma - T) @ R
        tracks[j] = PoseTrack(theta=theta, beta=tracks[j].beta, gamma=gamma)

    n = timeline.length
    J = skeleton.joint_count
    theta = np.zeros((m, n, 3 * J))
    beta = np.zeros((m, J))
    gamma = np.zeros((m, n, 3))
    for j in range(m):
        sel = timeline.maps[j]
        theta[j] = tracks[j].theta[sel]
        beta[j] = tracks[j].beta
        gamma[j] = tracks[j].gamma[sel]
    params = MotionParams(theta=theta, beta=beta, gamma=gamma)
    return MotionSolution(params=params, cameras=cameras, objective_trace=[])
