import numpy as np
import pytest

from errors import InputError
from geometry import Pose2
from gps_filter import FilterConfig, FilterState
from pipeline import align_rigid, filter_gps, register_anchors, register_loose
from pose_graph import AnchorPriorEdge, GpsPriorEdge, PoseGraph, RelPoseEdge
from simulator import (
    AerialConfig,
    GpsSimConfig,
    LandmarkObsConfig,
    OdomNoiseConfig,
    SimConfig,
    generate,
)


def pose_errors(graph, truth):
    return np.array([p.estimate.translation.distance_to(q.translation) for p, q in zip(graph.poses(), truth)])


def landmark_errors(graph, truth):
    return np.array([graph.landmark(vid).estimate.distance_to(p) for vid, p in truth.items()])


class TestZeroNoise:

    @pytest.fixture(scope="class")
    def sim(self):
        return generate(SimConfig(
            seed=0, preset="campus",
            odom_noise=OdomNoiseConfig(sigma_v=0.0, sigma_omega=0.0),
            gps=GpsSimConfig(sigma=0.0, bias_walk_sigma=0.0, outlier_rate=0.0, outage_windows=[]),
            aerial=AerialConfig(tile_bias_range=(0.0, 0.0)),
            landmark_obs=LandmarkObsConfig(sigma=0.0),
        ))

    def test_every_stage_recovers_truth(self, sim):
        start = sim.world.truth_path[0][1]
        init = FilterState(sim.odom[0].t, start.as_array(), np.eye(3) * 1e-12)
        path, decisions = filter_gps(sim.odom, sim.gps, sim.origin,
                                     FilterConfig(sigma_v=1e-6, sigma_omega=1e-6), init)
        assert all(d.accepted for d in decisions)

        rigid = sim.initial_graph.copy()
        align_rigid(rigid, sim.pose_times, sim.gps, sim.origin)
        assert pose_errors(rigid, sim.truth_keyframes()).max() < 1e-6

        graph = sim.initial_graph.copy()
        register_loose(graph, path, sim.pose_times)
        assert pose_errors(graph, sim.truth_keyframes()).max() < 1e-6
        assert graph.fixed_ids() == []

        matches, report = register_anchors(graph, [p for _, p in sim.world.labels], sim.origin, sigma=1e-3)
        assert len(matches) == len(sim.world.labels)
        assert landmark_errors(graph, sim.truth_landmarks()).max() < 1e-6
        assert report.converged


class TestNoisyLoop:

    @pytest.fixture(scope="class")
    def run(self):
        sim = generate(SimConfig(seed=21, preset="loop",
                                 odom_noise=OdomNoiseConfig(sigma_v=0.1, sigma_omega=0.05),
                                 gps=GpsSimConfig(sigma=2.0)))
        path, decisions = filter_gps(sim.odom, sim.gps, sim.origin)

        rigid = sim.initial_graph.copy()
        align_rigid(rigid, sim.pose_times, sim.gps, sim.origin, decisions=decisions)
        loose = sim.initial_graph.copy()
        register_loose(loose, path, sim.pose_times)
        anchored = loose.copy()
        register_anchors(anchored, [p for _, p in sim.world.labels], sim.origin)
        return sim, rigid, loose, anchored

    def test_priors_beat_rigid_alignment(self, run):
        sim, rigid, loose, _ = run
        truth = sim.truth_keyframes()
        assert pose_errors(loose, truth).mean() < pose_errors(rigid, truth).mean()

    def test_anchors_beat_priors(self, run):
        sim, _, loose, anchored = run
        truth = sim.truth_landmarks()
        assert landmark_errors(anchored, truth).mean() < landmark_errors(loose, truth).mean()
        assert anchored.edges_of_type(AnchorPriorEdge)

    def test_input_graph_left_alone(self, run):
        sim = run[0]
        assert sim.initial_graph.fixed_ids() == [0]
        assert sim.initial_graph.edges_of_type(GpsPriorEdge) == []


class TestLooseEdgeCases:

    def test_collinear_map_skips_rigid_init(self):
        g = PoseGraph()
        for i in range(3):
            g.add_pose(i, Pose2(10.0 * i, 0.0, 0.0), fixed=(i == 0))
            if i:
                g.add_edge(RelPoseEdge(i - 1, i, Pose2(10.0, 0.0, 0.0), np.eye(3) * 100.0))
        pose_times = [(i, float(i)) for i in range(3)]
        path = [(float(i), Pose2(100.0 + 10.0 * i, 50.0, 0.0)) for i in range(3)]
        register_loose(g, path, pose_times)
        for i in range(3):
            assert g.pose(i).estimate.x == pytest.approx(100.0 + 10.0 * i, abs=1e-6)
            assert g.pose(i).estimate.y == pytest.approx(50.0, abs=1e-6)

    def test_keep_fixed(self):
        g = PoseGraph()
        g.add_pose(0, Pose2(), fixed=True)
        g.add_pose(1, Pose2(10.0, 0.0, 0.0))
        g.add_edge(RelPoseEdge(0, 1, Pose2(10.0, 0.0, 0.0), np.eye(3)))
        path = [(0.0, Pose2(0.0, 0.0, 0.0)), (1.0, Pose2(10.0, 0.0, 0.0))]
        register_loose(g, path, [(0, 0.0), (1, 1.0)], keep_fixed=True, rigid_init=False)
        assert g.fixed_ids() == [0]

    def test_requires_pose_times(self):
        with pytest.raises(InputError):
            register_loose(PoseGraph(), [(0.0, Pose2())], [])

    def test_filter_requires_odometry(self):
        with pytest.raises(InputError):
            filter_gps([], [], None)


def end_error(graph, truth):
    return pose_errors(graph, truth)[-1]


@pytest.mark.slow
class TestAcrossSeeds:
    """Default sensor noise over 50 simulated worlds per check."""

    SEEDS = range(50)

    def test_campus_loose_landmark_error(self):
        means = []
        for seed in self.SEEDS:
            sim = generate(SimConfig(seed=seed, preset="campus"))
            path, _ = filter_gps(sim.odom, sim.gps, sim.origin)
            graph = sim.initial_graph.copy()
            register_loose(graph, path, sim.pose_times)
            means.append(landmark_errors(graph, sim.truth_landmarks()).mean())
        means = np.array(means)
        assert 0.5 <= means.mean() <= 3.0
        assert means.max() < 10.0

    def test_gps_priors_hold_the_end_of_the_path(self):
        better = 0
        for seed in self.SEEDS:
            sim = generate(SimConfig(seed=seed, preset="line", pole_density=0.0,
                                     odom_noise=OdomNoiseConfig(sigma_v=0.1, sigma_omega=0.2),
                                     gps=GpsSimConfig(sigma=3.0)))
            truth = sim.truth_keyframes()
            path, decisions = filter_gps(sim.odom, sim.gps, sim.origin,
                                         FilterConfig(sigma_v=0.1, sigma_omega=0.1, gps_sigma=3.0))
            rigid = sim.initial_graph.copy()
            align_rigid(rigid, sim.pose_times, sim.gps, sim.origin, decisions=decisions, gps_sigma=3.0)
            loose = sim.initial_graph.copy()
            register_loose(loose, path, sim.pose_times, sigma=3.0)
            better += end_error(loose, truth) < end_error(rigid, truth)
        assert better >= 45
