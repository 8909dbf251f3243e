"""Articulated body model: a kinematic skeleton mapping pose/shape/translation
parameters to 3D joint positions.

Parameters follow the usual per-joint layout:

- ``theta``: axis-angle rotation per joint, flattened to shape (3J,).
- ``beta``: per-bone log-scale factors, shape (J,). ``beta = 0`` reproduces the
  rest bone lengths exactly; bone ``k`` length scales by ``exp(beta[k])``.
- ``gamma``: world position of the root joint, shape (3,).

Joint positions are returned as a 3xJ matrix (points are columns).  Batched
helpers (``forward_kinematics_batch``) use (B, J, 3) layouts and back every
per-frame computation in the solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ParameterError

_EYE3 = np.eye(3)


@dataclass(frozen=True)
class SkeletonSpec:
    """Kinematic tree: parent indices and rest-pose bone offsets.

    ``parents[0]`` must be -1 (single root) and ``parents[k] < k`` for k > 0,
    i.e. joints are stored in topological order.
    """

    parents: np.ndarray
    rest_offsets: np.ndarray
    names: tuple[str, ...] | None = None
    _children: list[list[int]] = field(init=False, repr=False, compare=False)
    _descendants: list[list[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=int)
        offsets = np.asarray(self.rest_offsets, dtype=float)
        if parents.ndim != 1 or parents.size == 0:
            raise ParameterError("parents must be a nonempty 1-D integer array")
        if offsets.shape != (parents.size, 3):
            raise ParameterError(
                f"rest_offsets must have shape ({parents.size}, 3), got {offsets.shape}"
            )
        if parents[0] != -1 or np.any(parents[1:] < 0):
            raise ParameterError("joint 0 must be the single root (parent -1)")
        if np.any(parents[1:] >= np.arange(1, parents.size)):
            raise ParameterError("parents[k] < k required (topological order)")
        if not np.all(np.isfinite(offsets)):
            raise ParameterError("rest_offsets must be finite")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "rest_offsets", offsets)

        children: list[list[int]] = [[] for _ in range(parents.size)]
        for k in range(1, parents.size):
            children[parents[k]].append(k)
        # strict descendants, deepest-last
        descendants: list[list[int]] = [[] for _ in range(parents.size)]
        for k in range(parents.size - 1, -1, -1):
            acc: list[int] = []
            for c in children[k]:
                acc.append(c)
                acc.extend(descendants[c])
            descendants[k] = sorted(acc)
        object.__setattr__(self, "_children", children)
        object.__setattr__(self, "_descendants", descendants)

    @property
    def joint_count(self) -> int:
        return self.parents.size

    def descendants(self, joint: int) -> list[int]:
        """Strict descendants of ``joint`` in index order."""
        return self._descendants[joint]

    @classmethod
    def from_dict(cls, data: dict) -> "SkeletonSpec":
        names = tuple(data["names"]) if "names" in data else None
        return cls(
            parents=np.asarray(data["parents"], dtype=int),
            rest_offsets=np.asarray(data["rest_offsets"], dtype=float),
            names=names,
        )

    def to_dict(self) -> dict:
        out = {
            "parents": self.parents.tolist(),
            "rest_offsets": self.rest_offsets.tolist(),
        }
        if self.names is not None:
            out["names"] = list(self.names)
        return out


def load_skeleton(path) -> SkeletonSpec:
    """Load a skeleton from a JSON file with ``parents`` and ``rest_offsets``."""
    with open(path) as fh:
        return SkeletonSpec.from_dict(json.load(fh))


def default_skeleton() -> SkeletonSpec:
    """The bundled 24-joint humanoid skeleton."""
    text = resources.files("multimocap.data").joinpath("skeleton24.json").read_text()
    return SkeletonSpec.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Rotation utilities
# ---------------------------------------------------------------------------

def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrices: (..., 3) -> (..., 3, 3)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rodrigues(v: np.ndarray) -> np.ndarray:
    """Axis-angle vectors (..., 3) -> rotation matrices (..., 3, 3).

    Uses series expansions of sin(t)/t and (1-cos(t))/t^2 below t ~ 1e-4 so
    the map stays smooth through the identity.
    """
    v = np.asarray(v, dtype=float)
    t2 = np.einsum("...i,...i->...", v, v)
    t = np.sqrt(t2)
    small = t < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - t2 / 6.0, np.sin(t) / np.where(small, 1.0, t))
        b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(t)) / np.where(small, 1.0, t2))
    K = skew(v)
    return _EYE3 + a[..., None, None] * K + b[..., None, None] * (K @ K)


def rotation_gradients(v: np.ndarray) -> np.ndarray:
    """Derivative of ``rodrigues`` w.r.t. each axis-angle component.

    Returns (..., 3, 3, 3) where ``out[..., i]`` is dR/dv_i, via the compact
    exponential-coordinate formula

        dR/dv_i = (v_i [v]x + [v x (I - R) e_i]x) / |v|^2 . R

    with the limit [e_i]x at v = 0.
    """
    v = np.asarray(v, dtype=float)
    R = rodrigues(v)
    t2 = np.einsum("...i,...i->...", v, v)
    small = t2 < 1e-14
    safe = np.where(small, 1.0, t2)
    Vx = skew(v)
    ImR = _EYE3 - R
    out = np.empty(v.shape[:-1] + (3, 3, 3))
    for i in range(3):
        wi = np.cross(v, ImR[..., :, i])
        Gi = (v[..., i, None, None] * Vx + skew(wi)) / safe[..., None, None]
        out[..., i, :, :] = Gi @ R
    if np.any(small):
        limit = np.stack([skew(_EYE3[i]) for i in range(3)])
        out[small] = limit
    return out


def so3_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a single rotation matrix (inverse of rodrigues)."""
    R = np.asarray(R, dtype=float)
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    if angle < 1e-10:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # near pi the skew part vanishes; recover the axis from (R + I)/2,
        # which approaches axis . axis^T
        A = (R + _EYE3) / 2.0
        k = int(np.argmax(np.diag(A)))
        axis = A[:, k] / np.sqrt(max(A[k, k], 1e-12))
        axis /= np.linalg.norm(axis)
        return axis * angle
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * (angle / (2.0 * np.sin(angle)))


def canonicalize_axis_angle(theta: np.ndarray) -> np.ndarray:
    """Wrap each per-joint axis-angle rotation to magnitude in [0, pi]."""
    theta = np.asarray(theta, dtype=float)
    if theta.size % 3:
        raise ParameterError("theta length must be a multiple of 3")
    v = theta.reshape(-1, 3).copy()
    norm = np.linalg.norm(v, axis=1)
    nz = norm > 0
    wrapped = np.mod(norm[nz], 2.0 * np.pi)
    flip = wrapped > np.pi
    wrapped = np.where(flip, 2.0 * np.pi - wrapped, wrapped)
    sign = np.where(flip, -1.0, 1.0)
    v[nz] = v[nz] / norm[nz, None] * (sign * wrapped)[:, None]
    return v.reshape(theta.shape)


def rotate_root(theta: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Pre-compose the root joint rotation with ``R`` (world-frame change)."""
    out = np.array(theta, dtype=float, copy=True)
    out[:3] = so3_log(np.asarray(R, dtype=float) @ rodrigues(out[:3]))
    return out


# ---------------------------------------------------------------------------
# Forward kinematics
# ---------------------------------------------------------------------------

def _check_dims(skeleton: SkeletonSpec, thetas: np.ndarray, betas: np.ndarray,
                gammas: np.ndarray) -> None:
    J = skeleton.joint_count
    if thetas.shape[-1] != 3 * J:
        raise ParameterError(f"theta must have {3 * J} entries, got {thetas.shape[-1]}")
    if betas.shape[-1] != J:
        raise ParameterError(f"beta must have {J} entries, got {betas.shape[-1]}")
    if gammas.shape[-1] != 3:
        raise ParameterError(f"gamma must have 3 entries, got {gammas.shape[-1]}")


def _fk_core(skeleton: SkeletonSpec, thetas: np.ndarray, betas: np.ndarray,
             gammas: np.ndarray):
    """Positions (B, J, 3), world rotations (B, J, 3, 3), scaled offsets (B, J, 3)."""
    B = thetas.shape[0]
    J = skeleton.joint_count
    rots = rodrigues(thetas.reshape(B, J, 3))
    off = skeleton.rest_offsets[None] * np.exp(betas)[..., None]
    pos = np.empty((B, J, 3))
    Rw = np.empty((B, J, 3, 3))
    pos[:, 0] = gammas + off[:, 0]
    Rw[:, 0] = rots[:, 0]
    parents = skeleton.parents
    for k in range(1, J):
        p = parents[k]
        pos[:, k] = pos[:, p] + np.einsum("bxy,by->bx", Rw[:, p], off[:, k])
        Rw[:, k] = Rw[:, p] @ rots[:, k]
    return pos, Rw, off


def forward_kinematics_batch(skeleton: SkeletonSpec, thetas: np.ndarray,
                             betas: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """Joint positions for a batch of parameter sets.

    Args:
        thetas: (B, 3J) axis-angle poses.
        betas: (B, J) log bone scales.
        gammas: (B, 3) root translations.

    Returns:
        (B, J, 3) joint positions.
    """
    thetas = np.asarray(thetas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    _check_dims(skeleton, thetas, betas, gammas)
    pos, _, _ = _fk_core(skeleton, thetas, betas, gammas)
    return pos


def forward_kinematics(skeleton: SkeletonSpec, theta: np.ndarray, beta: np.ndarray,
                       gamma: np.ndarray) -> np.ndarray:
    """3D joint positions as a 3xJ matrix.

    Joint k sits at the chain composition of its ancestors' rotations applied
    to ``exp(beta[k]) * rest_offset[k]``, translated by ``gamma`` at the root.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    gamma = np.asarray(gamma, dtype=float).ravel()
    _check_dims(skeleton, theta, beta, gamma)
    pos, _, _ = _fk_core(skeleton, theta[None], beta[None], gamma[None])
    return pos[0].T


def fk_jacobian_batch(skeleton: SkeletonSpec, thetas: np.ndarray, betas: np.ndarray,
                      gammas: np.ndarray):
    """Jacobians of all joint coordinates w.r.t. (theta, beta, gamma).

    Returns ``(positions, jac)`` where ``positions`` is (B, J, 3) and ``jac``
    is (B, 3J, 4J + 3).  Rows are joint coordinates in (joint, xyz) order;
    columns are theta (3J), then beta (J), then gamma (3).
    """
    thetas = np.asarray(thetas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    _check_dims(skeleton, thetas, betas, gammas)
    B = thetas.shape[0]
    J = skeleton.joint_count
    parents = skeleton.parents
    pos, Rw, off = _fk_core(skeleton, thetas, betas, gammas)
    dR = rotation_gradients(thetas.reshape(B, J, 3))

    jac = np.zeros((B, 3 * J, 4 * J + 3))
    view = jac.reshape(B, J, 3, 4 * J + 3)

    # gamma moves every joint uniformly
    view[:, :, :, 4 * J:] = _EYE3

    # world bone vectors: d pos_k / d beta_j for k at or below j
    bone = np.empty((B, J, 3))
    bone[:, 0] = off[:, 0]
    for k in range(1, J):
        bone[:, k] = pos[:, k] - pos[:, parents[k]]
    for j in range(J):
        affected = [j] + skeleton.descendants(j)
        view[:, affected, :, 3 * J + j] = bone[:, j, None, :]

    # theta of joint j rotates the subtree below j about pos_j
    for j in range(J):
        below = skeleton.descendants(j)
        if not below:
            continue
        Rpre = Rw[:, parents[j]] if parents[j] >= 0 else np.broadcast_to(_EYE3, (B, 3, 3))
        rel = pos[:, below] - pos[:, j, None]
        local = np.einsum("bcd,bkc->bkd", Rw[:, j], rel)
        cols = np.einsum("bxy,biyz,bkz->bkxi", Rpre, dR[:, j], local)
        view[:, below, :, 3 * j:3 * j + 3] = cols
    return pos, jac


def fk_jacobian(skeleton: SkeletonSpec, theta: np.ndarray, beta: np.ndarray,
                gamma: np.ndarray) -> np.ndarray:
    """Single-pose Jacobian, shape (3J, 4J + 3); see ``fk_jacobian_batch``."""
    theta = np.asarray(theta, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    gamma = np.asarray(gamma, dtype=float).ravel()
    _, jac = fk_jacobian_batch(skeleton, theta[None], beta[None], gamma[None])
    return jac[0]
