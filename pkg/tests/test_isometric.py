import numpy as np
import pytest

from consmax.core import LabelVector, MatchSet
from consmax.errors import EmptyMatches, GeodesicFailure, InvalidArgument
from consmax.isometric import (
    IsometryConfig,
    isometry_agreement,
    shape_registration,
    shape_registration_detailed,
)
from consmax.mesh import TriMesh
from consmax.synth import SynthSpec, grid_mesh, synth_isometric_instance


def identity_matchset(mesh, n=None):
    n = n or mesh.num_vertices
    pairs = np.column_stack([np.arange(n)] * 2)
    return MatchSet(mesh.vertices, mesh.vertices, pairs)


class TestIsometryAgreement:
    def test_equal_distances(self):
        assert isometry_agreement(1.0, 1.0, 0.2, 0.0) == 1

    def test_within_relative_threshold(self):
        assert isometry_agreement(1.0, 1.15, 0.2, 0.0) == 1

    def test_beyond_relative_threshold(self):
        assert isometry_agreement(1.0, 1.30, 0.2, 0.0) == 0

    def test_absolute_floor(self):
        assert isometry_agreement(0.0, 0.05, 0.2, 0.1) == 1
        assert isometry_agreement(0.0, 0.5, 0.2, 0.1) == 0


class TestConfig:
    def test_validation(self):
        with pytest.raises(InvalidArgument):
            IsometryConfig(eps_rel=0.0)
        with pytest.raises(InvalidArgument):
            IsometryConfig(eps_abs_frac=0.5)
        with pytest.raises(InvalidArgument):
            IsometryConfig(mode="magic")

    def test_default_cluster_rule(self):
        assert IsometryConfig().effective_clusters(100) == 1
        assert IsometryConfig().effective_clusters(400) == 5
        assert IsometryConfig(clusters=3).effective_clusters(400) == 3


class TestShapeRegistration:
    def test_identity_self_match_all_inliers(self):
        mesh = grid_mesh(64)
        labels, results = shape_registration(mesh, mesh, identity_matchset(mesh))
        assert labels.num_outliers == 0
        assert all(r.objective == 0 and r.optimal for r in results)

    def test_half_reassigned_grid_recovered_exactly(self):
        spec = SynthSpec(kind="isometric-grid", n_points=100, outlier_ratio=0.5, seed=7)
        source, target, matches = synth_isometric_instance(spec)
        labels, _ = shape_registration(source, target, matches)
        assert labels == matches.gt_labels

    def test_out_of_range_matches(self):
        mesh = grid_mesh(9)
        other = grid_mesh(4)
        ms = identity_matchset(mesh)
        with pytest.raises(EmptyMatches):
            shape_registration(mesh, other, ms)

    def test_empty_matches(self):
        mesh = grid_mesh(9)
        ms = MatchSet(mesh.vertices, mesh.vertices, np.empty((0, 2), dtype=np.int64))
        with pytest.raises(EmptyMatches):
            shape_registration(mesh, mesh, ms)

    def test_zero_outliers_generates_no_constraints(self):
        spec = SynthSpec(kind="isometric-grid", n_points=49, outlier_ratio=0.0, seed=3)
        source, target, matches = synth_isometric_instance(spec)
        detail = shape_registration_detailed(source, target, matches)
        assert detail.labels.num_outliers == 0
        assert not detail.constrained.any()

    def test_objective_invariant_to_match_ordering(self):
        spec = SynthSpec(kind="isometric-grid", n_points=64, outlier_ratio=0.3, seed=5)
        source, target, matches = synth_isometric_instance(spec)
        base_labels, base_results = shape_registration(source, target, matches)
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(matches))
        permuted = MatchSet(
            matches.source_points,
            matches.target_points,
            matches.pairs[perm],
            LabelVector(matches.gt_labels.z[perm]),
        )
        labels_p, results_p = shape_registration(source, target, permuted)
        assert sum(r.objective for r in results_p) == sum(r.objective for r in base_results)
        assert np.array_equal(labels_p.z, base_labels.z[perm])

    def test_multi_cluster_matches_gt(self):
        spec = SynthSpec(kind="isometric-grid", n_points=100, outlier_ratio=0.4, seed=2)
        source, target, matches = synth_isometric_instance(spec)
        config = IsometryConfig(clusters=4, seed=1)
        labels, results = shape_registration(source, target, matches, config)
        assert len(results) == 4
        # per-cluster full connectivity still pins every reassigned match
        assert labels == matches.gt_labels

    def test_relaxed_mode_low_ratio(self):
        spec = SynthSpec(kind="isometric-grid", n_points=81, outlier_ratio=0.2, seed=4)
        source, target, matches = synth_isometric_instance(spec)
        labels, results = shape_registration(
            source, target, matches, IsometryConfig(mode="relaxed")
        )
        gt = matches.gt_labels
        kept = int(((labels.z == 0) & (gt.z == 0)).sum())
        assert kept / (gt.z == 0).sum() >= 0.95

    def test_disconnected_cluster_raises(self):
        verts = np.array(
            [[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [50, 50, 0], [51, 50, 0], [50, 51, 0]]
        )
        tris = np.array([[0, 1, 2], [3, 4, 5]])
        mesh = TriMesh(verts, tris)
        pairs = np.column_stack([np.arange(6)] * 2)
        ms = MatchSet(verts, verts, pairs)
        # single cluster spans both components: every cross pair is non-finite,
        # but within-component pairs exist, so no failure
        labels, _ = shape_registration(mesh, mesh, ms)
        assert labels.num_outliers == 0
        # clusters that isolate one component per cluster also work; a failure
        # needs a cluster whose matches are pairwise disconnected
        lonely = MatchSet(verts, verts, np.array([[0, 0], [3, 3]]))
        with pytest.raises(GeodesicFailure):
            shape_registration(mesh, mesh, lonely)

    def test_point_cloud_inputs(self):
        spec = SynthSpec(kind="isometric-grid", n_points=49, outlier_ratio=0.3, seed=9)
        source, target, matches = synth_isometric_instance(spec)
        # strip connectivity: geodesics fall back to the k-NN graph
        labels, _ = shape_registration(source.vertices, target.vertices, matches)
        gt = matches.gt_labels
        missed = int(((labels.z == 0) & (gt.z == 1)).sum())
        assert missed == 0
