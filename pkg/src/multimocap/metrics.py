"""Evaluation metrics: MPJPE, P-MPJPE, synchronization error and solution
scoring against ground truth.

The reconstruction lives in the reference camera's frame (a rigid gauge), so
``evaluate_solution`` reports MPJPE after a single global rigid alignment to
the ground truth, P-MPJPE (per-frame similarity alignment) and the RMS error
of the root trajectory under the same global alignment.
"""

from __future__ import annotations

import numpy as np

from .body import forward_kinematics_batch
from .errors import ParameterError
from .geometry import procrustes_align, rigid_init_relative_camera
from .sync import CommonTimeline

MM = 1000.0


def _as_stack(poses) -> np.ndarray:
    arr = np.asarray(poses, dtype=float)
    if arr.ndim != 3 or arr.shape[1] != 3:
        raise ParameterError("poses must stack to (N, 3, J)")
    return arr


def mpjpe(pred, truth, root_relative: bool = True) -> float:
    """Mean per-joint position error in millimeters.

    With ``root_relative`` (the default convention) each frame's root joint
    offset is removed before measuring, so a constant whole-body translation
    costs nothing.
    """
    p = _as_stack(pred)
    t = _as_stack(truth)
    if p.shape != t.shape:
        raise ParameterError(f"shape mismatch: {p.shape} vs {t.shape}")
    if root_relative:
        p = p - p[:, :, :1]
        t = t - t[:, :, :1]
    err = np.linalg.norm(p - t, axis=1)
    return float(err.mean()) * MM


def p_mpjpe(pred, truth) -> float:
    """MPJPE after per-frame similarity Procrustes alignment of the
    prediction onto the ground truth, in millimeters."""
    p = _as_stack(pred)
    t = _as_stack(truth)
    if p.shape != t.shape:
        raise ParameterError(f"shape mismatch: {p.shape} vs {t.shape}")
    total = 0.0
    for f in range(p.shape[0]):
        res = procrustes_align(p[f], t[f], with_scale=True)
        aligned = res.scale * res.rotation @ p[f] + res.translation[:, None]
        total += float(np.linalg.norm(aligned - t[f], axis=0).mean())
    return total / p.shape[0] * MM


def sync_error(timeline: CommonTimeline, truth_timeline: CommonTimeline,
               clip_length: int) -> float:
    """Mean frame distance between matched and true frames, normalized by the
    clip length; averaged over non-reference videos."""
    if timeline.reference != truth_timeline.reference:
        raise ParameterError("timelines must share the reference video")
    if timeline.maps.shape != truth_timeline.maps.shape:
        raise ParameterError("timeline shapes differ")
    if clip_length <= 0:
        raise ParameterError("clip_length must be positive")
    m = timeline.maps.shape[0]
    if m == 1:
        return 0.0
    diff = np.abs(timeline.maps - truth_timeline.maps).astype(float)
    mask = np.ones(m, dtype=bool)
    mask[timeline.reference] = False
    return float(diff[mask].mean()) / clip_length


def align_rigid_global(pred_stacks: np.ndarray, truth_stacks: np.ndarray):
    """Single rigid transform taking all predicted joints onto the truth.

    Both inputs are (N, 3, J) stacks; returns the aligned prediction.
    """
    R, T = rigid_init_relative_camera(list(pred_stacks), list(truth_stacks))
    return np.einsum("xy,nyj->nxj", R, pred_stacks) + T[None, :, None]


def evaluate_solution(params, cameras, timeline: CommonTimeline, truth,
                      skeleton, root_relative: bool = True) -> dict:
    """Score a solution against a synthetic scene's ground truth.

    The prediction for video j at timeline frame i is compared with the truth
    at video j's matched frame ``timeline.maps[j, i]`` (reconstruction and
    synchronization quality are reported separately).
    """
    m, n, _ = params.theta.shape
    J = skeleton.joint_count
    pred = forward_kinematics_batch(
        skeleton, params.theta.reshape(m * n, -1),
        np.repeat(params.beta, n, axis=0),
        params.gamma.reshape(m * n, 3)).reshape(m, n, J, 3)
    tru = np.stack([truth.joints[j][timeline.maps[j]] for j in range(m)])

    pred_stacks = pred.reshape(m * n, J, 3).transpose(0, 2, 1)
    truth_stacks = tru.reshape(m * n, J, 3).transpose(0, 2, 1)
    aligned = align_rigid_global(pred_stacks, truth_stacks)

    truth_tl = truth.timeline(reference=timeline.reference)
    result = {
        "mpjpe_mm": mpjpe(aligned, truth_stacks, root_relative=root_relative),
        "p_mpjpe_mm": p_mpjpe(pred_stacks, truth_stacks),
        "sync_error_fraction": sync_error(timeline, truth_tl, timeline.length),
        "trajectory_rmse_mm": float(np.sqrt(np.mean(
            np.sum((aligned[:, :, 0] - truth_stacks[:, :, 0]) ** 2, axis=1)))) * MM,
        "per_video": [],
    }
    for j in range(m):
        sl = slice(j * n, (j + 1) * n)
        result["per_video"].append({
            "mpjpe_mm": mpjpe(aligned[sl], truth_stacks[sl],
                              root_relative=root_relative),
            "p_mpjpe_mm": p_mpjpe(pred_stacks[sl], truth_stacks[sl]),
        })
    return result
