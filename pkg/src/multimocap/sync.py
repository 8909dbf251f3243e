"""Pose-based multi-video synchronization.

Pipeline: pairwise frame affinities from Procrustes-aligned 3D poses, joint
denoising of the stacked affinity matrix under a nuclear-norm (cycle
consistency) penalty, and dynamic-time-warping decoding of frame-to-frame
correspondences against a reference video.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, ParameterError
from .geometry import procrustes_align, procrustes_residual_matrix

DEGENERACY_TOL = 1e-9


@dataclass
class SyncConfig:
    """Knobs for the synchronization stage.

    ``lam`` overrides the auto weight ``lam_scale * N_a / nuclear_norm(A)``
    of the low-rank penalty.  ``denoise=False`` decodes the raw affinities
    (the no-cycle-consistency ablation).
    """

    lam: float | None = None
    lam_scale: float = 50.0
    max_iter: int = 200
    tol: float = 1e-6
    step: float = 0.25
    kernel: str = "reciprocal"
    procrustes_scale: bool = True
    denoise: bool = True


@dataclass(frozen=True)
class AffinityBlock:
    """Frame-to-frame affinities in [0, 1] between two videos."""

    values: np.ndarray
    video_pair: tuple[int, int]


@dataclass
class StackedCorrespondence:
    """Relaxed correspondence matrix over all frames of all videos.

    ``matrix`` is the N_a x N_a stacked block grid with identity diagonal
    blocks and entries in [0, 1]; ``offsets[j]`` is the first row/column of
    video j's block.
    """

    matrix: np.ndarray
    frame_counts: list[int]
    objective_trace: list[float] = field(default_factory=list)
    converged: bool = True

    @property
    def total_frames(self) -> int:
        return self.matrix.shape[0]

    @property
    def offsets(self) -> list[int]:
        out = [0]
        for n in self.frame_counts[:-1]:
            out.append(out[-1] + n)
        return out

    def block(self, j1: int, j2: int) -> np.ndarray:
        off = self.offsets
        r, c = off[j1], off[j2]
        return self.matrix[r:r + self.frame_counts[j1], c:c + self.frame_counts[j2]]


@dataclass(frozen=True)
class WarpingPath:
    """Monotonic frame correspondence between two videos.

    Starts at (0, 0), ends at (N1-1, N2-1); every step increments one or both
    indices by exactly 1.  ``scores`` carries the affinity at each pair.
    """

    pairs: np.ndarray
    scores: np.ndarray

    @property
    def total_score(self) -> float:
        return float(self.scores.sum())


@dataclass(frozen=True)
class CommonTimeline:
    """Per-video frame index maps against a reference video.

    ``maps[j, i]`` is the frame of video j matched to reference frame i; the
    reference maps to itself and every row is monotone non-decreasing.
    """

    reference: int
    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=int)
        if maps.ndim != 2:
            raise ParameterError("maps must be (M, N)")
        if not np.array_equal(maps[self.reference], np.arange(maps.shape[1])):
            raise ParameterError("reference row must map to itself")
        if np.any(np.diff(maps, axis=1) < 0):
            raise ParameterError("index maps must be monotone non-decreasing")
        object.__setattr__(self, "maps", maps)

    @property
    def length(self) -> int:
        return self.maps.shape[1]


# ---------------------------------------------------------------------------
# Affinities
# ---------------------------------------------------------------------------

def pose_distance(pose_a: np.ndarray, pose_b: np.ndarray,
                  with_scale: bool = True) -> float:
    """Procrustes-aligned RMS distance between two 3xJ poses."""
    return procrustes_align(pose_a, pose_b, with_scale=with_scale).residual_rmse


def _as_stack(poses) -> np.ndarray:
    arr = np.asarray(poses, dtype=float)
    if arr.ndim != 3 or arr.shape[1] != 3:
        raise ParameterError("poses must stack to (N, 3, J)")
    return arr


def _degenerate_mask(stack: np.ndarray) -> np.ndarray:
    centered = stack - stack.mean(axis=2, keepdims=True)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[:, 1] <= DEGENERACY_TOL * np.maximum(sv[:, 0], 1.0)


def affinity_matrix(poses_a, poses_b, video_pair: tuple[int, int] = (0, 1),
                    with_scale: bool = True, kernel: str = "reciprocal") -> AffinityBlock:
    """Affinity block between two videos' per-frame 3D poses.

    Distances are mapped to (0, 1] by ``1 / (1 + d / sigma)`` with sigma the
    median distance over the block (``kernel="gaussian"`` uses
    ``exp(-d^2 / (2 sigma^2))`` instead), so a zero distance scores 1 and the
    median distance scores 0.5.
    """
    A = _as_stack(poses_a)
    B = _as_stack(poses_b)
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ParameterError("pose lists must be nonempty")
    if np.all(_degenerate_mask(A)) or np.all(_degenerate_mask(B)):
        raise DegeneracyError("all poses on one side are degenerate")
    dist = procrustes_residual_matrix(A, B, with_scale=with_scale)
    values = _affinity_from_distance(dist, kernel)
    return AffinityBlock(values=values, video_pair=video_pair)


def _affinity_from_distance(dist: np.ndarray, kernel: str) -> np.ndarray:
    sigma = max(float(np.median(dist)), 1e-12)
    if kernel == "reciprocal":
        return 1.0 / (1.0 + dist / sigma)
    if kernel == "gaussian":
        return np.exp(-dist ** 2 / (2.0 * sigma ** 2))
    raise ParameterError(f"unknown affinity kernel {kernel!r}")


def build_affinity_grid(pose_stacks, with_scale: bool = True,
                        kernel: str = "reciprocal", threads: int = 1):
    """Complete symmetric M x M grid of affinity blocks; identity diagonals.

    ``pose_stacks[j]`` is the (N_j, 3, J) per-frame pose stack of video j.
    Off-diagonal blocks are computed once per unordered pair and mirrored by
    transposition, so the grid is exactly symmetric.
    """
    stacks = [_as_stack(p) for p in pose_stacks]
    m = len(stacks)
    grid: list[list[np.ndarray | None]] = [[None] * m for _ in range(m)]
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]

    def compute(pair):
        a, b = pair
        return affinity_matrix(stacks[a], stacks[b], video_pair=(a, b),
                               with_scale=with_scale, kernel=kernel).values

    if threads > 1 and len(pairs) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(compute, pairs))
    else:
        results = [compute(p) for p in pairs]
    for (a, b), values in zip(pairs, results):
        grid[a][b] = values
        grid[b][a] = values.T.copy()
    for a in range(m):
        grid[a][a] = np.eye(stacks[a].shape[0])
    return grid


# ---------------------------------------------------------------------------
# Cycle-consistent denoising
# ---------------------------------------------------------------------------

def _stack_grid(grid) -> tuple[np.ndarray, list[int]]:
    m = len(grid)
    counts = [np.asarray(grid[j][j]).shape[0] for j in range(m)]
    for a in range(m):
        if len(grid[a]) != m:
            raise ParameterError("affinity grid must be a complete M x M grid")
        for b in range(m):
            blk = np.asarray(grid[a][b], dtype=float)
            if blk.shape != (counts[a], counts[b]):
                raise ParameterError(f"block ({a}, {b}) has shape {blk.shape}, "
                                     f"expected {(counts[a], counts[b])}")
            if not np.allclose(blk, np.asarray(grid[b][a]).T, atol=1e-12):
                raise ParameterError(f"grid is not symmetric at block ({a}, {b})")
    rows = [np.concatenate([np.asarray(grid[a][b], dtype=float) for b in range(m)], axis=1)
            for a in range(m)]
    return np.concatenate(rows, axis=0), counts


def _project_feasible(X: np.ndarray, counts: list[int]) -> np.ndarray:
    out = np.clip(X, 0.0, 1.0)
    off = 0
    for n in counts:
        out[off:off + n, off:off + n] = np.eye(n)
        off += n
    return out


def consistent_denoise(grid, lam: float | None = None, lam_scale: float = 50.0,
                       max_iter: int = 200, tol: float = 1e-6,
                       step: float = 0.25) -> StackedCorrespondence:
    """Denoise the stacked affinity grid under a cycle-consistency prior.

    Approximately minimizes ``|A - X|_F^2 + lam * |X|_*`` subject to entries
    in [0, 1] and identity diagonal blocks, by proximal gradient steps
    (singular-value soft-thresholding alternated with box projection).  Steps
    are only accepted when the objective does not increase, so the recorded
    objective trace is non-increasing; if no acceptable step remains before
    ``max_iter``, the best iterate is returned with ``converged=False``.

    ``lam`` defaults to ``lam_scale * N_a / |proj(A)|_*`` which makes the
    penalty weight independent of problem size.
    """
    A, counts = _stack_grid(grid)
    X = _project_feasible(A, counts)

    def objective(M, nuc=None):
        if nuc is None:
            nuc = float(np.linalg.svd(M, compute_uv=False).sum())
        return float(np.sum((A - M) ** 2)) + lam * nuc, nuc

    if lam is None:
        lam = lam_scale * A.shape[0] / max(np.linalg.svd(X, compute_uv=False).sum(), 1e-12)
    if lam <= 0:
        raise ParameterError("lam must be positive")

    obj, _ = objective(X)
    trace = [obj]
    eta = step
    converged = False
    for _ in range(max_iter):
        G = X - eta * 2.0 * (X - A)
        U, s, Vt = np.linalg.svd(G, full_matrices=False)
        s = np.maximum(s - eta * lam, 0.0)
        cand = _project_feasible((U * s) @ Vt, counts)
        cand_obj, _ = objective(cand)
        if cand_obj <= obj + 1e-12:
            drop = obj - cand_obj
            X, obj = cand, cand_obj
            trace.append(obj)
            if drop <= tol * max(1.0, abs(obj)):
                converged = True
                break
        else:
            eta *= 0.5
            if eta < 1e-12:
                break
    return StackedCorrespondence(matrix=X, frame_counts=counts,
                                 objective_trace=trace, converged=converged)


# ---------------------------------------------------------------------------
# DTW decoding
# ---------------------------------------------------------------------------

def dtw_align(block: np.ndarray) -> WarpingPath:
    """Monotonic path from (0, 0) to (N1-1, N2-1) maximizing summed affinity.

    Steps are (1, 1), (1, 0), (0, 1); ties prefer (1, 1) then (1, 0), making
    the decode deterministic.
    """
    a = np.asarray(block, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ParameterError("affinity block must be a nonempty 2-D matrix")
    n1, n2 = a.shape
    score = np.full((n1, n2), -np.inf)
    move = np.zeros((n1, n2), dtype=np.uint8)  # 0 diag, 1 up, 2 left
    score[0, 0] = a[0, 0]
    for i in range(n1):
        row = score[i]
        prev = score[i - 1] if i > 0 else None
        for j in range(n2):
            if i == 0 and j == 0:
                continue
            best = -np.inf
            which = 0
            if i > 0 and j > 0 and prev[j - 1] > best:
                best, which = prev[j - 1], 0
            if i > 0 and prev[j] > best:
                best, which = prev[j], 1
            if j > 0 and row[j - 1] > best:
                best, which = row[j - 1], 2
            row[j] = best + a[i, j]
            move[i, j] = which
    i, j = n1 - 1, n2 - 1
    pairs = [(i, j)]
    while i > 0 or j > 0:
        which = move[i, j]
        if which == 0:
            i, j = i - 1, j - 1
        elif which == 1:
            i -= 1
        else:
            j -= 1
        pairs.append((i, j))
    pairs.reverse()
    idx = np.asarray(pairs, dtype=int)
    return WarpingPath(pairs=idx, scores=a[idx[:, 0], idx[:, 1]])


def build_common_timeline(paths: dict[int, WarpingPath], reference: int,
                          frame_counts: list[int]) -> CommonTimeline:
    """Collapse per-pair warping paths into per-video frame index maps.

    When a reference frame matches several frames of video j, the one with
    the highest affinity wins (ties to the lowest index).
    """
    n_ref = frame_counts[reference]
    m = len(frame_counts)
    maps = np.zeros((m, n_ref), dtype=int)
    maps[reference] = np.arange(n_ref)
    for j in range(m):
        if j == reference:
            continue
        if j not in paths:
            raise ParameterError(f"missing warping path for video {j}")
        path = paths[j]
        last = path.pairs[-1]
        if last[0] != n_ref - 1 or last[1] != frame_counts[j] - 1:
            raise ParameterError(
                f"path for video {j} ends at {tuple(last)}, expected "
                f"{(n_ref - 1, frame_counts[j] - 1)}")
        best = np.full(n_ref, -np.inf)
        for (i, f), s in zip(path.pairs, path.scores):
            if s > best[i]:
                best[i] = s
                maps[j, i] = f
    return CommonTimeline(reference=reference, maps=maps)


def select_reference(grid) -> int:
    """Index of the video with the largest total affinity mass to all others
    (ties to the lowest index)."""
    m = len(grid)
    mass = np.zeros(m)
    for a in range(m):
        for b in range(m):
            if a != b:
                mass[a] += float(np.sum(grid[a][b]))
    return int(np.argmax(mass))


@dataclass
class SyncResult:
    timeline: CommonTimeline
    reference: int
    affinity: list[list[np.ndarray]]
    denoised: StackedCorrespondence | None


def synchronize(pose_stacks, config: SyncConfig | None = None,
                reference: int | None = None, threads: int = 1) -> SyncResult:
    """Affinities, optional cycle-consistent denoising, DTW decode, timeline.

    ``pose_stacks[j]`` is the (N_j, 3, J) pose stack of video j.  With a
    single video the timeline is the video itself.
    """
    cfg = config or SyncConfig()
    stacks = [_as_stack(p) for p in pose_stacks]
    counts = [s.shape[0] for s in stacks]
    if len(stacks) == 1:
        timeline = CommonTimeline(reference=0, maps=np.arange(counts[0])[None, :])
        return SyncResult(timeline=timeline, reference=0,
                          affinity=[[np.eye(counts[0])]], denoised=None)
    grid = build_affinity_grid(stacks, with_scale=cfg.procrustes_scale,
                               kernel=cfg.kernel, threads=threads)
    if reference is None:
        reference = select_reference(grid)
    denoised = None
    if cfg.denoise:
        denoised = consistent_denoise(grid, lam=cfg.lam, lam_scale=cfg.lam_scale,
                                      max_iter=cfg.max_iter, tol=cfg.tol,
                                      step=cfg.step)
        decode = denoised.block
    else:
        def decode(a, b):
            return grid[a][b]
    paths = {j: dtw_align(decode(reference, j))
             for j in range(len(stacks)) if j != reference}
    timeline = build_common_timeline(paths, reference, counts)
    return SyncResult(timeline=timeline, reference=reference,
                      affinity=grid, denoised=denoised)
