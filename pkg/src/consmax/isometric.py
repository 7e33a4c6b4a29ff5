"""Shape-to-shape outlier removal under the isometry prior.

Matches are clustered with k-means on the source coordinates; inside each
cluster every match pair becomes a graph edge whose agreement compares the
two geodesic distances. Violated edges compile into two-variable covering
constraints solved exactly (or via the LP relaxation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import (
    ConsensusGraph,
    LabelVector,
    MatchSet,
    aggregate_labels,
    build_covering_program,
    kmeans_partition,
)
from .errors import EmptyMatches, GeodesicFailure, InvalidArgument
from .mesh import TriMesh, geodesic_distances
from .solver import SolverConfig, SolverResult, solve_exact, solve_relaxed

ShapeLike = Union[TriMesh, np.ndarray]

DEFAULT_EPS_REL = 0.20
SMALL_PROBLEM_CLUSTER_THRESHOLD = 200


@dataclass(frozen=True)
class IsometryConfig:
    """Thresholds and solver settings for isometric matching.

    ``eps_rel`` is the allowed geodesic deviation relative to the source
    (template) geodesic; ``eps_abs_frac`` sets an absolute floor as a
    fraction of the source diameter so near-coincident points do not get a
    zero threshold. ``clusters=None`` picks 1 below 200 matches, 5 above.
    """

    eps_rel: float = DEFAULT_EPS_REL
    eps_abs_frac: float = 0.01
    clusters: Optional[int] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    mode: str = "exact"
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.eps_rel < 1.0):
            raise InvalidArgument("eps_rel must lie in (0, 1)")
        if not (0.0 <= self.eps_abs_frac <= 0.1):
            raise InvalidArgument("eps_abs_frac must lie in [0, 0.1]")
        if self.clusters is not None and self.clusters < 1:
            raise InvalidArgument("clusters must be >= 1")
        if self.mode not in ("exact", "relaxed"):
            raise InvalidArgument("mode must be 'exact' or 'relaxed'")

    def effective_clusters(self, p: int) -> int:
        if self.clusters is not None:
            return min(self.clusters, p)
        return 1 if p < SMALL_PROBLEM_CLUSTER_THRESHOLD else 5


def isometry_agreement(g_source: float, g_target: float, eps_rel: float, eps_abs: float) -> int:
    """1 when |g_source - g_target| <= max(eps_rel * g_source, eps_abs)."""
    return int(abs(g_source - g_target) <= max(eps_rel * g_source, eps_abs))


@dataclass
class ClusterReport:
    indices: np.ndarray
    result: Optional[SolverResult]
    num_edges: int
    num_constraints: int


@dataclass
class ShapeRegistrationDetail:
    labels: LabelVector
    cluster_results: list
    constrained: np.ndarray  # per match: appears in at least one constraint
    eps_abs: float


def _num_points(shape: ShapeLike) -> int:
    if isinstance(shape, TriMesh):
        return shape.num_vertices
    return len(np.asarray(shape))


def shape_registration(
    source: ShapeLike,
    target: ShapeLike,
    matches: MatchSet,
    config: IsometryConfig = IsometryConfig(),
) -> tuple[LabelVector, list]:
    """Label every match inlier/outlier; returns per-cluster solver results.

    ``source``/``target`` may be triangle meshes or raw point clouds (a
    symmetric k-NN graph substitutes for missing connectivity).
    """
    detail = shape_registration_detailed(source, target, matches, config)
    return detail.labels, detail.cluster_results


def shape_registration_detailed(
    source: ShapeLike,
    target: ShapeLike,
    matches: MatchSet,
    config: IsometryConfig = IsometryConfig(),
) -> ShapeRegistrationDetail:
    p = len(matches)
    if p == 0:
        raise EmptyMatches("match set is empty")
    if matches.pairs[:, 0].max() >= _num_points(source) or matches.pairs[:, 1].max() >= _num_points(target):
        raise EmptyMatches("matches reference points outside the given shapes")

    src_ids = matches.pairs[:, 0]
    tgt_ids = matches.pairs[:, 1]
    src_unique = np.unique(src_ids)
    tgt_unique = np.unique(tgt_ids)
    src_table = geodesic_distances(source, src_unique)
    tgt_table = geodesic_distances(target, tgt_unique)
    src_row = np.searchsorted(src_unique, src_ids)
    tgt_row = np.searchsorted(tgt_unique, tgt_ids)
    gs_full = src_table.distances[np.ix_(src_row, src_row)]
    gt_full = tgt_table.distances[np.ix_(tgt_row, tgt_row)]

    finite_src = src_table.distances[np.isfinite(src_table.distances)]
    diameter = float(finite_src.max()) if finite_src.size else 0.0
    eps_abs = config.eps_abs_frac * diameter

    src_coords = matches.matched_source
    m = config.effective_clusters(p)
    partition = kmeans_partition(src_coords, m, config.seed)

    solve = solve_exact if config.mode == "exact" else solve_relaxed
    per_cluster = []
    cluster_results: list[SolverResult] = []
    cluster_reports: list[ClusterReport] = []
    constrained = np.zeros(p, dtype=bool)
    for c in range(m):
        idx = partition.members(c)
        k = len(idx)
        gs = gs_full[np.ix_(idx, idx)]
        gt = gt_full[np.ix_(idx, idx)]
        iu, ju = np.triu_indices(k, 1)
        if k >= 2:
            src_ok = np.isfinite(gs[iu, ju])
            tgt_ok = np.isfinite(gt[iu, ju])
            if not src_ok.any():
                raise GeodesicFailure(f"cluster {c}: matched points disconnected on the source shape")
            if not tgt_ok.any():
                raise GeodesicFailure(f"cluster {c}: matched points disconnected on the target shape")
            valid = src_ok & tgt_ok
        else:
            valid = np.zeros(0, dtype=bool)
        gsv = gs[iu, ju][valid]
        gtv = gt[iu, ju][valid]
        theta = (
            np.abs(gsv - gtv) <= np.maximum(config.eps_rel * gsv, eps_abs)
        ).astype(np.uint8)
        graph = ConsensusGraph(
            vertices=np.arange(k, dtype=np.int64).reshape(-1, 1),
            edges=np.column_stack([iu[valid], ju[valid]]),
            theta=theta,
            s=1,
        )
        program = build_covering_program(graph)
        # graph vertices are cluster-local; translate constraints to global ids
        for cons in program.constraints:
            constrained[idx[list(cons)]] = True
        result = solve(program, config.solver)
        per_cluster.append((idx, result.labels))
        cluster_results.append(result)
        cluster_reports.append(
            ClusterReport(
                indices=idx,
                result=result,
                num_edges=graph.num_edges,
                num_constraints=program.num_constraints,
            )
        )
    labels = aggregate_labels(per_cluster, p)
    return ShapeRegistrationDetail(
        labels=labels,
        cluster_results=cluster_results,
        constrained=constrained,
        eps_abs=eps_abs,
    )
