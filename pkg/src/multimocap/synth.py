"""Synthetic scene generator: procedural low-rank motions, a camera ring,
noisy 2D detections and a desynchronization protocol, with full ground truth.

Per-video motions are mixtures of a shared base field and ``s_true - 1``
deviation fields, so the stacked per-frame pose matrices have rank at most
``s_true`` by construction (verified on the anchor-aligned stacks at
generation time).  The desynchronizer keeps a common set of equal-interval
anchor frames and adds per-video random in-between frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body import (SkeletonSpec, default_skeleton, forward_kinematics_batch,
                   rotate_root)
from .errors import NumericalError, ParameterError
from .geometry import CameraModel
from .solver import DetectionSet, PoseTrack
from .sync import CommonTimeline


@dataclass
class SceneConfig:
    videos: int = 4
    base_frames: int = 150
    s_true: int = 1
    motion_amp_rad: float = 0.4
    perturbation_deg: float = 0.0
    traj_perturbation_m: float = 0.0
    traj_radius_m: float = 0.3
    camera_radius_m: float = 4.0
    camera_height_m: float = 0.3
    camera_angle0_rad: float = 0.4
    focal_px: float = 1000.0
    principal_point_px: tuple[float, float] = (500.0, 500.0)
    noise_px: float = 0.0
    occlusion_rate: float = 0.0
    desync: bool = True
    n_s1: int = 30
    n_s2: int = 10
    init_perturbation_deg: float = 0.0
    seed: int = 0
    skeleton: SkeletonSpec | None = None

    def __post_init__(self):
        if self.videos < 1:
            raise ParameterError("need at least one video")
        if self.s_true < 1:
            raise ParameterError("s_true must be >= 1")
        if self.noise_px < 0 or not 0 <= self.occlusion_rate < 1:
            raise ParameterError("noise must be >= 0 and occlusion in [0, 1)")
        if self.desync and self.base_frames < self.n_s1:
            raise ParameterError("base_frames must be >= n_s1")

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "skeleton"}
        out["principal_point_px"] = list(self.principal_point_px)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        data = dict(data)
        if "principal_point_px" in data:
            data["principal_point_px"] = tuple(data["principal_point_px"])
        return cls(**data)


@dataclass
class GroundTruth:
    """Everything the generator knows: world-frame motion, cameras, the true
    frame correspondence and clean 3D joints."""

    tracks: list[PoseTrack]
    cameras: list[CameraModel]
    base_indices: list[np.ndarray]
    joints: list[np.ndarray]  # per video, (N_j, J, 3) world frame
    base_frames: int
    s_true: int

    def timeline(self, reference: int = 0) -> CommonTimeline:
        """Ground-truth index maps against the given reference video."""
        ref_idx = self.base_indices[reference]
        maps = np.zeros((len(self.base_indices), ref_idx.size), dtype=int)
        for j, idx in enumerate(self.base_indices):
            # nearest base index, ties to the lower frame
            pos = np.searchsorted(idx, ref_idx)
            lo = np.clip(pos - 1, 0, idx.size - 1)
            hi = np.clip(pos, 0, idx.size - 1)
            pick_hi = np.abs(idx[hi] - ref_idx) < np.abs(idx[lo] - ref_idx)
            maps[j] = np.where(pick_hi, hi, lo)
        maps[reference] = np.arange(ref_idx.size)
        return CommonTimeline(reference=reference, maps=maps)


@dataclass
class Scene:
    config: SceneConfig
    skeleton: SkeletonSpec
    detections: DetectionSet
    init_tracks: list[PoseTrack]
    intrinsics: list[tuple[float, np.ndarray]]
    truth: GroundTruth


# ---------------------------------------------------------------------------
# Desynchronization protocol
# ---------------------------------------------------------------------------

def desynchronize(frames, n_s1: int, n_s2: int, seed) -> np.ndarray:
    """Resample a frame sequence: equal-interval anchors plus random frames.

    ``n_s1`` anchor frames at equal intervals define ``n_s1 - 1`` segments;
    from ``n_s2`` randomly chosen segments, a uniformly random number of
    interior frames is sampled without replacement.  Returns the sorted,
    strictly increasing selection (a subset of the input).

    ``frames`` may be a sequence (its entries are returned) or an int length
    (indices are returned).  ``seed`` may be an int or a Generator.
    """
    values = None
    if np.isscalar(frames):
        length = int(frames)
    else:
        values = np.asarray(frames)
        length = values.shape[0]
    if n_s1 < 2:
        raise ParameterError("n_s1 must be >= 2")
    if not 0 <= n_s2 <= n_s1 - 1:
        raise ParameterError("n_s2 must be in [0, n_s1 - 1]")
    if length < n_s1:
        raise ParameterError("sequence must have at least n_s1 frames")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    anchors = np.round(np.linspace(0, length - 1, n_s1)).astype(int)
    chosen = np.sort(rng.choice(n_s1 - 1, size=n_s2, replace=False))
    picks = [anchors]
    for k in chosen:
        interior = np.arange(anchors[k] + 1, anchors[k + 1])
        if interior.size == 0:
            continue
        n_s3 = int(rng.integers(1, interior.size + 1))
        picks.append(np.sort(rng.choice(interior, size=n_s3, replace=False)))
    idx = np.unique(np.concatenate(picks))
    return values[idx] if values is not None else idx


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------

def _sinusoid_field(rng: np.random.Generator, dim: int, amp: float):
    """Smooth random field [0, 1] -> R^dim as a mixture of low-frequency
    sinusoids."""
    freqs = rng.integers(1, 4, size=dim).astype(float)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=dim)
    amps = amp * rng.uniform(0.3, 1.0, size=dim)

    def field(tau: np.ndarray) -> np.ndarray:
        return amps * np.sin(2.0 * np.pi * freqs * tau[:, None] + phases)

    return field


def _look_at_camera(position: np.ndarray, target: np.ndarray, focal: float,
                    pp) -> CameraModel:
    fwd = target - position
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 1.0, 0.0])
    x = np.cross(up, fwd)
    x = x / np.linalg.norm(x)
    y = np.cross(fwd, x)
    R = np.stack([x, y, fwd])
    return CameraModel(R, -R @ position, focal, np.asarray(pp, dtype=float))


def _perturb_rotations(rng: np.random.Generator, theta: np.ndarray,
                       magnitude_rad: float) -> np.ndarray:
    """Add a random-axis rotation of the given magnitude to every joint."""
    if magnitude_rad == 0:
        return theta.copy()
    axes = rng.normal(size=theta.shape).reshape(-1, 3)
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    return theta + (magnitude_rad * axes).reshape(theta.shape)


def generate_scene(config: SceneConfig) -> Scene:
    """Build a full synthetic scene with ground truth.

    Deterministic per seed.  With zero noise the detections reproject the
    clean joints exactly; the anchor-aligned stacked pose matrices have rank
    at most ``s_true`` (both verified before returning).
    """
    skeleton = config.skeleton or default_skeleton()
    J = skeleton.joint_count
    m = config.videos
    ss = np.random.SeedSequence(config.seed)
    rng_motion, rng_mix, rng_desync, rng_obs, rng_init = \
        [np.random.default_rng(s) for s in ss.spawn(5)]

    base_pose = _sinusoid_field(rng_motion, 3 * J, config.motion_amp_rad)
    base_traj = _sinusoid_field(rng_motion, 3, config.traj_radius_m)
    dev_pose = [_sinusoid_field(rng_mix, 3 * J, np.deg2rad(config.perturbation_deg))
                for _ in range(config.s_true - 1)]
    dev_traj = [_sinusoid_field(rng_mix, 3, config.traj_perturbation_m)
                for _ in range(config.s_true - 1)]
    weights = rng_mix.uniform(-1.0, 1.0, size=(m, config.s_true - 1))

    def video_motion(j: int, base_idx: np.ndarray):
        tau = base_idx / config.base_frames
        theta = base_pose(tau)
        gamma = base_traj(tau)
        for k in range(config.s_true - 1):
            theta = theta + weights[j, k] * dev_pose[k](tau)
            gamma = gamma + weights[j, k] * dev_traj[k](tau)
        return theta, gamma

    if config.desync:
        base_indices = [desynchronize(config.base_frames, config.n_s1,
                                      config.n_s2, rng)
                        for rng in [np.random.default_rng(s)
                                    for s in rng_desync.spawn(m)]]
    else:
        base_indices = [np.arange(config.base_frames) for _ in range(m)]

    cameras = []
    for j in range(m):
        angle = config.camera_angle0_rad + 2.0 * np.pi * j / m
        position = np.array([config.camera_radius_m * np.sin(angle),
                             config.camera_height_m,
                             config.camera_radius_m * np.cos(angle)])
        cameras.append(_look_at_camera(position, np.zeros(3), config.focal_px,
                                       config.principal_point_px))

    tracks, joints, detections, init_tracks = [], [], [], []
    beta = np.zeros(J)
    for j in range(m):
        theta, gamma = video_motion(j, base_indices[j])
        tracks.append(PoseTrack(theta=theta, beta=beta.copy(), gamma=gamma))
        n = theta.shape[0]
        pos = forward_kinematics_batch(skeleton, theta,
                                       np.repeat(beta[None], n, axis=0), gamma)
        joints.append(pos)

        cam = cameras[j]
        Xc = pos @ cam.rotation.T + cam.translation
        z = Xc[..., 2]
        if np.any(z <= 0):
            raise NumericalError("camera ring too close: body behind a camera")
        uv = cam.focal * Xc[..., :2] / z[..., None] + cam.principal_point
        uv = uv + rng_obs.normal(0.0, config.noise_px, size=uv.shape) \
            if config.noise_px > 0 else uv
        conf = np.ones((n, J))
        if config.occlusion_rate > 0:
            conf[rng_obs.uniform(size=(n, J)) < config.occlusion_rate] = 0.0
        detections.append(np.concatenate([uv, conf[..., None]], axis=2))

        # initial estimates live in the camera frame, like a monocular net's
        cam_theta = np.stack([rotate_root(theta[f], cam.rotation)
                              for f in range(n)])
        cam_gamma = gamma @ cam.rotation.T + cam.translation
        cam_theta = _perturb_rotations(rng_init, cam_theta,
                                       np.deg2rad(config.init_perturbation_deg))
        init_tracks.append(PoseTrack(theta=cam_theta, beta=beta.copy(),
                                     gamma=cam_gamma))

    truth = GroundTruth(tracks=tracks, cameras=cameras,
                        base_indices=base_indices, joints=joints,
                        base_frames=config.base_frames, s_true=config.s_true)
    _verify_scene(config, skeleton, truth, detections)
    intrinsics = [(config.focal_px, np.asarray(config.principal_point_px, float))
                  for _ in range(m)]
    return Scene(config=config, skeleton=skeleton,
                 detections=DetectionSet(detections), init_tracks=init_tracks,
                 intrinsics=intrinsics, truth=truth)


def _verify_scene(config, skeleton, truth: GroundTruth, detections) -> None:
    # rank bound on the anchor-aligned pose stacks
    anchors = np.round(np.linspace(0, config.base_frames - 1, config.n_s1)).astype(int) \
        if config.desync else np.arange(config.base_frames)
    stacks = []
    for a in anchors:
        rows = []
        for j, idx in enumerate(truth.base_indices):
            f = int(np.flatnonzero(idx == a)[0])
            rows.append(truth.tracks[j].theta[f])
        stacks.append(np.stack(rows))
    for stack in stacks:
        sv = np.linalg.svd(stack, compute_uv=False)
        if sv.size > config.s_true and sv[config.s_true] > 1e-9 * max(sv[0], 1.0):
            raise NumericalError("generated pose stack exceeds the rank bound")
    if config.noise_px == 0:
        for j, cam in enumerate(truth.cameras):
            Xc = truth.joints[j] @ cam.rotation.T + cam.translation
            uv = cam.focal * Xc[..., :2] / Xc[..., 2:3] + cam.principal_point
            err = np.abs(uv - detections[j][..., :2]).max()
            if err > 1e-10:
                raise NumericalError(f"zero-noise reprojection mismatch: {err}")
