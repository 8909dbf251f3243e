"""Outer loop alternating synchronization and reconstruction.

Round 1 synchronizes on the initial per-frame 3D pose estimates, initializes
cameras and body parameters, and solves.  Later rounds recompute affinities
from the optimized poses (frames never placed on a timeline keep their
refined initial estimate), re-decode the timeline and continue the solve from
the previous solution re-indexed onto the new timeline.  The round with the
lowest final objective wins, so a later round can never worsen the result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .body import SkeletonSpec, forward_kinematics_batch
from .errors import ParameterError
from .metrics import evaluate_solution
from .solver import (DetectionSet, MotionParams, MotionSolution, PoseTrack,
                     SolverConfig, alternating_solve, initialize)
from .sync import CommonTimeline, SyncConfig, synchronize


@dataclass
class PipelineConfig:
    sync: SyncConfig = field(default_factory=SyncConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    outer_rounds: int = 2
    seed: int = 0
    mpjpe_root_relative: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.outer_rounds < 1:
            raise ParameterError("outer_rounds must be >= 1")


@dataclass
class RoundDiagnostics:
    round: int
    final_objective: float
    objective_trace: list[float]
    duration_s: float
    sync_error: float | None = None
    mpjpe_mm: float | None = None
    p_mpjpe_mm: float | None = None


@dataclass
class PipelineResult:
    solution: MotionSolution
    timeline: CommonTimeline
    rounds: list[RoundDiagnostics]
    best_round: int
    warning: str | None = None


def _track_pose_stacks(skeleton: SkeletonSpec, tracks: list[PoseTrack]):
    stacks = []
    for t in tracks:
        n = t.theta.shape[0]
        pos = forward_kinematics_batch(skeleton, t.theta,
                                       np.repeat(t.beta[None], n, axis=0),
                                       t.gamma)
        stacks.append(pos.transpose(0, 2, 1))  # (N, 3, J)
    return stacks


def _write_back(tracks: list[PoseTrack], solution: MotionSolution,
                timeline: CommonTimeline) -> list[PoseTrack]:
    """Overwrite track frames covered by the timeline with solved values."""
    out = []
    for j, t in enumerate(tracks):
        theta = t.theta.copy()
        gamma = t.gamma.copy()
        theta[timeline.maps[j]] = solution.params.theta[j]
        gamma[timeline.maps[j]] = solution.params.gamma[j]
        out.append(PoseTrack(theta=theta, beta=solution.params.beta[j].copy(),
                             gamma=gamma))
    return out


def _reindex(solution: MotionSolution, old: CommonTimeline,
             new: CommonTimeline) -> MotionSolution:
    """Warm start: previous solution carried to the new timeline by nearest
    old frame, per video."""
    m = old.maps.shape[0]
    n_new = new.length
    theta = np.empty((m, n_new, solution.params.theta.shape[2]))
    gamma = np.empty((m, n_new, 3))
    for j in range(m):
        nearest = np.abs(old.maps[j][None, :] - new.maps[j][:, None]).argmin(axis=1)
        theta[j] = solution.params.theta[j][nearest]
        gamma[j] = solution.params.gamma[j][nearest]
    params = MotionParams(theta=theta, beta=solution.params.beta.copy(),
                          gamma=gamma)
    return MotionSolution(params=params, cameras=list(solution.cameras),
                          objective_trace=[])


def run_iterative(detections: DetectionSet, initial_poses: list[PoseTrack],
                  config: PipelineConfig, skeleton: SkeletonSpec,
                  intrinsics=None, truth=None) -> PipelineResult:
    """Alternate synchronization and reconstruction for ``outer_rounds``.

    ``truth`` (a synth ``GroundTruth``) only feeds the per-round diagnostics.
    A round that fails after the first returns the best earlier result with a
    warning instead of raising.
    """
    tracks = [PoseTrack(t.theta.copy(), t.beta.copy(), t.gamma.copy())
              for t in initial_poses]
    reference: int | None = None
    best: tuple[float, MotionSolution, CommonTimeline, int] | None = None
    prev: tuple[MotionSolution, CommonTimeline] | None = None
    rounds: list[RoundDiagnostics] = []
    warning = None

    for r in range(1, config.outer_rounds + 1):
        start = time.perf_counter()
        try:
            stacks = _track_pose_stacks(skeleton, tracks)
            sync_result = synchronize(stacks, config.sync, reference=reference,
                                      threads=config.threads)
            reference = sync_result.reference
            timeline = sync_result.timeline
            if prev is None:
                init = initialize(tracks, detections, timeline, config.solver,
                                  skeleton, intrinsics=intrinsics)
            else:
                init = _reindex(prev[0], prev[1], timeline)
            solution = alternating_solve(init, detections, timeline,
                                         config.solver, skeleton)
        except Exception as exc:
            if best is None:
                raise
            warning = f"round {r} failed ({exc}); keeping round {rounds[-1].round}"
            break
        tracks = _write_back(tracks, solution, timeline)
        prev = (solution, timeline)

        diag = RoundDiagnostics(
            round=r,
            final_objective=solution.objective_trace[-1],
            objective_trace=list(solution.objective_trace),
            duration_s=time.perf_counter() - start,
        )
        if truth is not None:
            scores = evaluate_solution(solution.params, solution.cameras,
                                       timeline, truth, skeleton,
                                       root_relative=config.mpjpe_root_relative)
            diag.sync_error = scores["sync_error_fraction"]
            diag.mpjpe_mm = scores["mpjpe_mm"]
            diag.p_mpjpe_mm = scores["p_mpjpe_mm"]
        rounds.append(diag)
        if best is None or diag.final_objective <= best[0]:
            best = (diag.final_objective, solution, timeline, r)

    assert best is not None
    return PipelineResult(solution=best[1], timeline=best[2], rounds=rounds,
                          best_round=best[3], warning=warning)
