import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from rops3d.experiments import evaluate_recognition, rotation_angle_deg
from rops3d.hypotheses import (HypothesisCluster, TransformHypothesis, cluster_hypotheses, euler_distance,
                               from_euler, hypothesize, to_euler)
from rops3d.icp import best_rigid_transform, icp_refine
from rops3d.lrf import compute_lrf
from rops3d.mesh import GroundTruthPose, compose_scene, crop_local_surface, random_rotation
from rops3d.matching import FeatureCorrespondence
from rops3d.pipeline import (BACKGROUND, RecognitionParams, detect_scene_features, occlusion, rank_candidates,
                             recognize, seed_vertices, verify_and_segment, visible_proportion)
from rops3d.shapes import bundled_model


def _hyp(R, t, src, model="m", d=1.0):
    return TransformHypothesis(model, np.asarray(R), np.asarray(t, float), src, d)


class TestHypothesize:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_exact_recovery(self, seed):
        rng = np.random.default_rng(seed)
        F_m, R = random_rotation(rng), random_rotation(rng)
        p_m, t = rng.normal(size=3), rng.normal(size=3) * 10
        h = hypothesize(p_m @ R + t, F_m @ R, p_m, F_m)
        np.testing.assert_allclose(h.R, R, atol=1e-12)
        np.testing.assert_allclose(h.t, t, atol=1e-9 * max(1, np.linalg.norm(t)))

    def test_from_mesh_frames(self, small_blob, rng):
        R, t = random_rotation(rng), rng.normal(size=3)
        m2 = small_blob.transformed(R, t)
        s1 = crop_local_surface(small_blob, small_blob.vertices[7], 0.5)
        s2 = crop_local_surface(m2, m2.vertices[7], 0.5)
        h = hypothesize(m2.vertices[7], compute_lrf(s2), small_blob.vertices[7], compute_lrf(s1))
        assert rotation_angle_deg(h.R, R) < 1e-6

    def test_model_frame_maps_onto_scene_frame(self, blob_a, rng):
        R, t = random_rotation(rng), rng.normal(size=3)
        moved = blob_a.transformed(R, t)
        r = 15 * blob_a.resolution
        for v in (5, 500, 5000):
            Fm = compute_lrf(crop_local_surface(blob_a, blob_a.vertices[v], r)).axes
            Fs = compute_lrf(crop_local_surface(moved, moved.vertices[v], r)).axes
            h = hypothesize(moved.vertices[v], Fs, blob_a.vertices[v], Fm)
            assert np.linalg.norm(Fm @ h.R - Fs) < 1e-9


class TestEuler:
    def test_round_trip(self, rng):
        Rs = np.stack([random_rotation(rng) for _ in range(20)])
        np.testing.assert_allclose(from_euler(to_euler(Rs)), Rs, atol=1e-10)

    def test_wraps_across_pi(self):
        assert euler_distance([np.pi - 0.01, 0, 0], [-np.pi + 0.01, 0, 0]) == pytest.approx(0.02)


class TestClustering:
    def _near(self, rng, R, t, n, start, spread=0.01):
        out = []
        for k in range(n):
            dR = from_euler(rng.normal(scale=spread, size=3))
            out.append(_hyp(R @ dR, t + rng.normal(scale=spread, size=3), (start + k, 0)))
        return out

    def test_dominant_cluster_first_and_weak_pruned(self, rng):
        A, B = random_rotation(rng), random_rotation(rng)
        hyps = self._near(rng, A, np.zeros(3), 10, 0) + self._near(rng, B, np.full(3, 50.0), 3, 100)
        cl = cluster_hypotheses(hyps, 0.2, 5.0)
        assert len(cl) == 1
        assert cl[0].n_f == 10
        assert rotation_angle_deg(cl[0].R, A) < 2.0

    def test_two_instances_survive(self, rng):
        A, B = random_rotation(rng), random_rotation(rng)
        hyps = self._near(rng, A, np.zeros(3), 10, 0) + self._near(rng, B, np.full(3, 50.0), 8, 100)
        cl = cluster_hypotheses(hyps, 0.2, 5.0)
        assert [c.n_f for c in cl] == [10, 8]

    def test_score_uses_distance(self, rng):
        A = random_rotation(rng)
        hyps = self._near(rng, A, np.zeros(3), 4, 0)
        cl = cluster_hypotheses(hyps, 0.2, 5.0, distances=[2.0] * 4)
        assert cl[0].score == pytest.approx(4 / 2.0)

    def test_input_order_irrelevant(self, rng):
        hyps = [_hyp(random_rotation(rng), rng.normal(size=3), (k, 0)) for k in range(30)]
        a = cluster_hypotheses(hyps, 0.5, 2.0)
        b = cluster_hypotheses(hyps[::-1], 0.5, 2.0)
        assert [c.members for c in a] == [c.members for c in b]

    def test_empty(self):
        assert cluster_hypotheses([]) == []

    def test_perturbations_within_bounds_form_one_cluster(self, rng):
        R, t = random_rotation(rng), rng.normal(size=3) * 100
        u = to_euler(R[None])[0]
        hyps = []
        for k in range(25):
            du = rng.normal(size=3)
            du *= rng.uniform(0, 0.09) / np.linalg.norm(du)
            dt = rng.normal(size=3)
            dt *= rng.uniform(0, 14.0) / np.linalg.norm(dt)
            hyps.append(_hyp(from_euler(u + du), t + dt, (k, 0)))
        cl = cluster_hypotheses(hyps, 0.2, 30.0)
        assert len(cl) == 1 and cl[0].n_f == 25


class TestIcp:
    def test_best_rigid_transform_exact(self, rng):
        P = rng.normal(size=(50, 3))
        R, t = random_rotation(rng), rng.normal(size=3)
        R2, t2 = best_rigid_transform(P, P @ R + t)
        np.testing.assert_allclose(R2, R, atol=1e-12)
        np.testing.assert_allclose(t2, t, atol=1e-12)

    def test_never_returns_reflection(self, rng):
        P = rng.normal(size=(30, 3))
        R, _ = best_rigid_transform(P, P * [1, 1, -1])
        assert np.linalg.det(R) == pytest.approx(1.0)

    def test_converges_from_perturbation(self, medium_blob, rng):
        R, t = random_rotation(rng), rng.normal(size=3)
        scene = medium_blob.transformed(R, t)
        mr = medium_blob.resolution
        R0 = R @ from_euler([0.03, -0.02, 0.02])
        res = icp_refine(scene, medium_blob, R0, t + mr, mr)
        assert rotation_angle_deg(res.R, R) < 0.1
        assert res.epsilon < 0.05

    def test_basin_of_convergence(self):
        # point-to-point ICP slides along smooth surfaces; from 1 deg / 1 mr every start converges
        model = bundled_model("blob_a", 4)
        mr = model.resolution
        rng = np.random.default_rng(7)
        for _ in range(20):
            R, t = random_rotation(rng), rng.normal(size=3)
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            dR = Rotation.from_rotvec(np.radians(1.0) * axis).as_matrix()
            dt = rng.normal(size=3)
            dt *= mr / np.linalg.norm(dt)
            res = icp_refine(model.transformed(R, t), model, R @ dR, t + dt, mr)
            assert rotation_angle_deg(res.R, R) < 0.5
            assert np.linalg.norm(res.t - t) < 0.5 * mr

    def test_no_overlap(self, small_blob):
        res = icp_refine(small_blob, small_blob, np.eye(3), np.full(3, 100.0), small_blob.resolution)
        assert res.epsilon == float("inf")


class TestVerification:
    @pytest.mark.parametrize("eps,alpha,ok", [(0.5, 0.05, True), (0.5, 0.03, False), (1.0, 0.1, False),
                                              (1.0, 0.25, True), (1.6, 0.9, False)])
    def test_acceptance_branches(self, eps, alpha, ok):
        assert RecognitionParams().accepts(eps, alpha) is ok

    @pytest.mark.parametrize("kw", [{"tau_f": 0.0}, {"eps1": -1.0}, {"seed_fraction": 1.5}])
    def test_invalid_params(self, kw):
        with pytest.raises(ValueError):
            RecognitionParams(**kw)

    def test_visible_proportion(self):
        scene = np.array([[0.0, 0, 0], [1, 0, 0], [10, 0, 0], [20, 0, 0]])
        a, mask = visible_proportion(scene, np.array([[0.1, 0, 0], [1, 0, 0]]), 0.5)
        assert a == 0.5 and mask.tolist() == [True, True, False, False]

    def test_rank_candidates(self):
        cs = [FeatureCorrespondence(i, m, 0, 0.0, 0.1) for i, m in enumerate("baab")]
        cs.append(FeatureCorrespondence(9, "c", 0, 0.0, 0.1))
        assert rank_candidates(cs) == [("a", 2), ("b", 2), ("c", 1)]


class TestOcclusion:
    def test_full_half_absent(self, medium_blob):
        pose = GroundTruthPose("m", np.eye(3), np.zeros(3))
        assert occlusion(medium_blob, medium_blob, pose)[0] == pytest.approx(0.0)
        x = medium_blob.vertices[:, 0]
        half = medium_blob.submesh(x > np.median(x))
        occ, vis = occlusion(medium_blob, half, pose)
        assert occ == pytest.approx(0.5, abs=0.05)
        assert occ + vis == pytest.approx(1.0)
        far = GroundTruthPose("m", np.eye(3), np.full(3, 100.0))
        assert occlusion(medium_blob, medium_blob, far)[0] == pytest.approx(1.0)


class TestPipeline:
    def test_seed_vertices_are_distinct_scene_vertices(self, medium_blob):
        s = seed_vertices(medium_blob, 1 / 8)
        assert len(set(s.tolist())) == len(s)
        assert abs(len(s) - medium_blob.n_vertices / 8) < 0.05 * medium_blob.n_vertices / 8

    def test_recognizes_two_instances(self, small_library):
        meshes = [m.mesh for m in small_library.models]
        scene, poses = compose_scene(meshes, 2, seed=0, names=small_library.names, min_k=1)
        res = recognize(scene, small_library)
        ev = evaluate_recognition(res, poses, small_library.unit)
        assert ev.recognized == 2 and ev.false_positives == 0
        # segmentation labels must agree with the scene provenance
        seg = res.segmentation
        claimed = seg != BACKGROUND
        assert claimed.mean() > 0.9
        names = [small_library.names[k] for k in seg[claimed]]
        truth = [small_library.names[k] for k in scene.labels[claimed]]
        assert np.mean([a == b for a, b in zip(names, truth)]) > 0.99

    def test_distractor_is_not_recognized(self, small_library):
        meshes = [m.mesh for m in small_library.models] + [bundled_model("blob_e", 4)]
        scene, poses = compose_scene(meshes, 3, seed=2, names=small_library.names + ["other"])
        res = recognize(scene, small_library)
        ev = evaluate_recognition(res, [p for p in poses if p.model_id != "other"], small_library.unit)
        assert ev.recognized == 2 and ev.false_positives == 0

    def test_feature_count_matches_filter_cascade(self, medium_blob):
        x = medium_blob.vertices[:, 0]
        scene = medium_blob.submesh(x > np.percentile(x, 30))
        unit = medium_blob.resolution
        params = RecognitionParams()
        feats = detect_scene_features(scene, unit, params, describe=False)
        # independent cascade: brute-force suppression, explicit boundary edges, eigen-ratio
        seeds = seed_vertices(scene, params.seed_fraction)
        kept = []
        for v in seeds:
            if all(np.linalg.norm(scene.vertices[v] - scene.vertices[k]) > params.rho * unit for k in kept):
                kept.append(v)
        edges = {}
        for tri in scene.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                edges[key] = edges.get(key, 0) + 1
        border = {v for e, n in edges.items() if n == 1 for v in e}
        count = 0
        for v in kept:
            surf = crop_local_surface(scene, scene.vertices[v], 15 * unit)
            if border & set(surf.vertex_indices.tolist()):
                continue
            if compute_lrf(surf).eigen_ratio > params.tau_lambda:
                count += 1
        assert 0 < count < len(kept)
        assert len(feats) == count

    def test_verify_with_true_clusters(self, small_library):
        meshes = [m.mesh for m in small_library.models]
        scene, poses = compose_scene(meshes, 2, seed=3, names=small_library.names, min_k=1)
        rng = np.random.default_rng(0)
        cands = []
        for p in poses:
            R = p.R @ from_euler(rng.normal(scale=0.005, size=3))
            cands.append((p.model_id, [HypothesisCluster(p.model_id, [], R, p.t, to_euler(R[None])[0],
                                                         1, 1.0, 1.0)]))
        res = verify_and_segment(scene, small_library, cands)
        assert [i.model for i in res.instances] == [p.model_id for p in poses]
        for k, name in enumerate(small_library.names):
            own = scene.labels == k
            assert (res.segmentation[own] == k).mean() > 0.95

    def test_result_json(self, small_library):
        meshes = [m.mesh for m in small_library.models]
        scene, _ = compose_scene(meshes[:1], 1, seed=5, names=small_library.names[:1], min_k=1)
        d = recognize(scene, small_library).to_json()
        assert set(d) >= {"instances", "segmentation"}
        assert len(d["segmentation"]) == scene.n_vertices
        inst = d["instances"][0]
        assert set(inst) == {"model", "R", "t", "epsilon_mr", "alpha"} and len(inst["R"]) == 9
