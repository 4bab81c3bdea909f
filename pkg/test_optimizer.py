import math

import numpy as np
import pytest
from scipy.optimize import minimize

from errors import GaugeError
from geometry import Point2, Pose2, compose
from optimizer import OptimizerConfig, Termination, check_gauge, optimize
from pose_graph import (
    AnchorPriorEdge,
    GpsPriorEdge,
    LandmarkObsEdge,
    PoseGraph,
    RelPoseEdge,
    attach_anchor_priors,
    isotropic_information,
)


def random_graph(rng, n_poses, n_landmarks, noise=1.0, anchored=True):
    """Odometry chain with landmark sightings and noisy initial guesses.

    `anchored` fixes the first pose and adds a GPS prior on the last one.
    """
    g = PoseGraph()
    truth = [Pose2(0, 0, 0)]
    for _ in range(n_poses - 1):
        truth.append(compose(truth[-1], Pose2(rng.uniform(1, 3), rng.uniform(-0.5, 0.5), rng.uniform(-0.4, 0.4))))
    for i, p in enumerate(truth):
        guess = p if i == 0 else Pose2(p.x + rng.normal(0, 0.3), p.y + rng.normal(0, 0.3), p.theta + rng.normal(0, 0.05))
        g.add_pose(i, guess, fixed=(anchored and i == 0))
    for i in range(n_poses - 1):
        meas = truth[i].inverse().compose(truth[i + 1])
        noisy = Pose2(meas.x + noise * rng.normal(0, 0.1), meas.y + noise * rng.normal(0, 0.1),
                      meas.theta + noise * rng.normal(0, 0.02))
        g.add_edge(RelPoseEdge(i, i + 1, noisy, np.diag([25.0, 25.0, 400.0])))
    for k in range(n_landmarks):
        lm = Point2(rng.uniform(-2, 10), rng.uniform(-4, 4))
        g.add_landmark(100 + k, Point2(lm.x + rng.normal(0, 0.3), lm.y + rng.normal(0, 0.3)))
        for i in rng.choice(n_poses, size=min(2, n_poses), replace=False):
            obs = truth[int(i)].inverse_transform_point(lm)
            g.add_edge(LandmarkObsEdge(int(i), 100 + k, Point2(obs.x + noise * rng.normal(0, 0.05), obs.y + noise * rng.normal(0, 0.05)),
                                       np.eye(2) * 100.0))
    if not anchored:
        return g
    last = truth[-1]
    g.add_edge(GpsPriorEdge(n_poses - 1, Point2(last.x + rng.normal(0, 0.5), last.y + rng.normal(0, 0.5)),
                            isotropic_information(1.0)))
    return g


def oracle_chi2(graph):
    """Multi-start derivative-free minimum of total chi2 over every free parameter."""
    free_poses = [v.id for v in graph.poses() if not v.fixed]
    landmarks = graph.landmark_ids()
    work = graph.copy()

    def cost(x):
        k = 0
        for vid in free_poses:
            work.set_estimate(vid, Pose2(x[k], x[k + 1], x[k + 2]))
            k += 3
        for vid in landmarks:
            work.set_estimate(vid, Point2(x[k], x[k + 1]))
            k += 2
        return work.chi2()

    x0 = np.concatenate([graph.vertex_estimate(v).as_array() for v in free_poses + landmarks])
    best = math.inf
    rng = np.random.default_rng(0)
    for start in range(2):
        guess = x0 if start == 0 else x0 + rng.normal(0, 0.05, size=x0.shape)
        res = minimize(cost, guess, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxfev": 20000, "adaptive": True})
        res = minimize(cost, res.x, method="Powell", options={"xtol": 1e-10, "ftol": 1e-14})
        best = min(best, float(res.fun))
    return best


class TestGauge:

    def test_no_fix_no_prior_rejected(self):
        g = PoseGraph()
        g.add_pose(0, Pose2())
        g.add_pose(1, Pose2(1, 0, 0))
        g.add_edge(RelPoseEdge(0, 1, Pose2(1, 0, 0), np.eye(3)))
        with pytest.raises(GaugeError):
            optimize(g)

    def test_unanchored_component_named(self):
        g = PoseGraph()
        g.add_pose(0, Pose2(), fixed=True)
        g.add_pose(1, Pose2(1, 0, 0))
        g.add_pose(5, Pose2(10, 0, 0))
        g.add_pose(6, Pose2(11, 0, 0))
        g.add_edge(RelPoseEdge(0, 1, Pose2(1, 0, 0), np.eye(3)))
        g.add_edge(RelPoseEdge(5, 6, Pose2(1, 0, 0), np.eye(3)))
        with pytest.raises(GaugeError) as exc:
            check_gauge(g)
        assert exc.value.details["vertex_id"] == 5

    def test_prior_provides_gauge(self):
        g = PoseGraph()
        g.add_landmark(1, Point2(0, 0))
        g.add_edge(AnchorPriorEdge(1, Point2(2, 3), np.eye(2)))
        check_gauge(g)


class TestOptimize:

    def test_single_edge_chain_is_exact(self):
        g = PoseGraph()
        g.add_pose(0, Pose2(1, 1, 0.2), fixed=True)
        g.add_pose(1, Pose2(0, 0, 0))
        meas = Pose2(2, -1, 0.5)
        g.add_edge(RelPoseEdge(0, 1, meas, np.eye(3)))
        report = optimize(g)
        expected = compose(Pose2(1, 1, 0.2), meas)
        got = g.pose(1).estimate
        assert got.x == pytest.approx(expected.x, abs=1e-9)
        assert got.y == pytest.approx(expected.y, abs=1e-9)
        assert got.theta == pytest.approx(expected.theta, abs=1e-9)
        assert report.final_chi2 == pytest.approx(0.0, abs=1e-12)
        assert report.converged

    def test_two_gps_priors_average(self):
        g = PoseGraph()
        g.add_pose(0, Pose2(), fixed=True)
        g.add_pose(1, Pose2(5, 5, 0))
        g.add_edge(GpsPriorEdge(1, Point2(0, 0), np.eye(2)))
        g.add_edge(GpsPriorEdge(1, Point2(2, 0), np.eye(2)))
        optimize(g)
        assert g.pose(1).estimate.x == pytest.approx(1.0, abs=1e-9)
        assert g.pose(1).estimate.y == pytest.approx(0.0, abs=1e-9)

    def test_chi2_history_non_increasing(self):
        g = random_graph(np.random.default_rng(3), 6, 3)
        report = optimize(g)
        history = report.chi2_history
        assert all(b <= a for a, b in zip(history, history[1:]))
        assert report.final_chi2 <= report.initial_chi2

    def test_deterministic(self):
        a = random_graph(np.random.default_rng(9), 5, 2)
        b = random_graph(np.random.default_rng(9), 5, 2)
        optimize(a)
        optimize(b)
        for va, vb in zip(a.poses(), b.poses()):
            assert va.estimate == vb.estimate

    def test_max_iter_termination(self):
        g = random_graph(np.random.default_rng(4), 6, 3)
        report = optimize(g, OptimizerConfig(max_iter=1, chi2_rel_tol=0.0))
        assert report.iterations == 1
        assert report.termination == Termination.MAX_ITER and not report.converged

    def test_only_fixed_vertices(self):
        g = PoseGraph()
        g.add_pose(0, Pose2(), fixed=True)
        report = optimize(g)
        assert report.iterations == 0 and report.converged

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_derivative_free_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        g = random_graph(rng, int(rng.integers(2, 9)), int(rng.integers(0, 5)))
        reference = oracle_chi2(g)
        report = optimize(g, OptimizerConfig(chi2_rel_tol=1e-14))
        assert report.final_chi2 <= reference + 1e-6

    def test_five_poses_three_landmarks_match_oracle(self):
        g = random_graph(np.random.default_rng(55), 5, 3)
        assert len(g.poses()) == 5 and len(g.landmarks()) == 3
        reference = oracle_chi2(g)
        report = optimize(g, OptimizerConfig(chi2_rel_tol=1e-14))
        assert report.final_chi2 <= reference + 1e-6
        assert report.converged

    def test_gauge_invariance_of_structure(self):
        relative = random_graph(np.random.default_rng(21), 5, 2, anchored=False)
        relative.fix(0)
        moved = relative.copy()
        transform = Pose2(5.0, -3.0, 0.7)
        for v in moved.poses():
            moved.set_estimate(v.id, compose(transform, v.estimate))
        for v in moved.landmarks():
            moved.set_estimate(v.id, transform.transform_point(v.estimate))
        first = optimize(relative, OptimizerConfig(chi2_rel_tol=1e-14)).final_chi2
        second = optimize(moved, OptimizerConfig(chi2_rel_tol=1e-14)).final_chi2
        assert first == pytest.approx(second, abs=1e-8)

    def test_strong_anchors_dominate(self):
        rng = np.random.default_rng(7)
        g = random_graph(rng, 4, 3, noise=0.0, anchored=False)
        # exact measurements: the labels are the landmark positions the edges imply
        reference = g.copy()
        reference.fix(0)
        reference.set_estimate(0, Pose2(0, 0, 0))
        optimize(reference, OptimizerConfig(chi2_rel_tol=1e-14))
        labels = [(vid, reference.landmark(vid).estimate) for vid in g.landmark_ids()]
        attach_anchor_priors(g, labels, sigma=0.01)
        optimize(g, OptimizerConfig(chi2_rel_tol=1e-14))
        for vid, label in labels:
            assert g.landmark(vid).estimate.distance_to(label) < 1e-3

    def test_anchor_information_monotone(self):
        distances = []
        for sigma in (1.0, 0.3, 0.1, 0.03):
            g = random_graph(np.random.default_rng(8), 4, 1)
            vid = g.landmark_ids()[0]
            label = Point2(3.0, 3.0)
            attach_anchor_priors(g, [(vid, label)], sigma=sigma)
            optimize(g, OptimizerConfig(chi2_rel_tol=1e-14))
            distances.append(g.landmark(vid).estimate.distance_to(label))
        assert all(b <= a + 1e-9 for a, b in zip(distances, distances[1:]))
