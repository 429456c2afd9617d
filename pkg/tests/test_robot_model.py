import numpy as np
import pytest

from wheelquad.robot_model import (ConfigError, LEG_SIDE, RobotConfig,
                                   WorkspaceError, forward_kinematics,
                                   inverse_kinematics,
                                   inverse_kinematics_clamped,
                                   leg_forward_kinematics,
                                   leg_inverse_kinematics, leg_jacobians,
                                   load_config, neutral_stance_targets,
                                   wheel_center_from_contact)

from oracles import fk_homogeneous


@pytest.fixture(scope="module")
def cfg():
    return RobotConfig.default()


def random_joint_angles(rng, cfg, n):
    """(n, 4, 3) samples uniform inside the joint limits."""
    lims = cfg.leg_joint_limits.reshape(4, 3, 2)
    lo, hi = lims[..., 0], lims[..., 1]
    return lo + (hi - lo) * rng.random((n, 4, 3))


class TestForwardKinematics:
    def test_zero_pose(self, cfg):
        p = forward_kinematics(0, np.zeros(3), cfg)
        assert np.allclose(p, [0.0, -0.08, -0.426], atol=1e-12)
        p = forward_kinematics(1, np.zeros(3), cfg)
        assert np.allclose(p, [0.0, 0.08, -0.426], atol=1e-12)

    def test_pure_abduction(self, cfg):
        # rolling the leg plane 90 degrees swings the links into the y axis
        p = forward_kinematics(1, [np.pi / 2, 0.0, 0.0], cfg)
        assert np.allclose(p, [0.0, 0.426, 0.08], atol=1e-12)

    def test_matches_transform_oracle(self, cfg):
        rng = np.random.default_rng(7)
        q = random_joint_angles(rng, cfg, 300)
        got = leg_forward_kinematics(q, cfg)
        for i in range(q.shape[0]):
            for leg in range(4):
                ref = fk_homogeneous(leg, q[i, leg], cfg.link_lengths)
                assert np.allclose(got[i, leg], ref, atol=1e-12)

    def test_rejects_nonfinite(self, cfg):
        with pytest.raises(ValueError):
            forward_kinematics(0, [np.nan, 0.0, 0.0], cfg)


class TestJacobians:
    def test_matches_finite_differences(self, cfg):
        rng = np.random.default_rng(3)
        q = random_joint_angles(rng, cfg, 20)
        jac = leg_jacobians(q, cfg)
        eps = 1e-7
        for i in range(q.shape[0]):
            for leg in range(4):
                for j in range(3):
                    dq = np.zeros(3)
                    dq[j] = eps
                    hi = forward_kinematics(leg, q[i, leg] + dq, cfg)
                    lo = forward_kinematics(leg, q[i, leg] - dq, cfg)
                    fd = (hi - lo) / (2 * eps)
                    assert np.allclose(jac[i, leg, :, j], fd, atol=1e-6)


class TestInverseKinematics:
    def test_round_trip_10k_per_leg(self, cfg):
        rng = np.random.default_rng(11)
        q = random_joint_angles(rng, cfg, 10_000)
        targets = leg_forward_kinematics(q, cfg)
        solved, clamped = leg_inverse_kinematics(targets, cfg)
        assert not clamped.any()
        back = leg_forward_kinematics(solved, cfg)
        err = np.linalg.norm(back - targets, axis=-1)
        assert err.max() <= 1e-9

    def test_scalar_round_trip(self, cfg):
        rng = np.random.default_rng(5)
        q = random_joint_angles(rng, cfg, 50)
        for i in range(50):
            for leg in range(4):
                target = forward_kinematics(leg, q[i, leg], cfg)
                sol = inverse_kinematics(leg, target, cfg)
                back = forward_kinematics(leg, sol.as_array(), cfg) \
                    if hasattr(sol, "as_array") else forward_kinematics(
                        leg, [sol.abduction, sol.hip, sol.knee], cfg)
                assert np.linalg.norm(back - target) <= 1e-9

    def test_unreachable_raises_with_clamp(self, cfg):
        far = np.array([0.0, -0.08, -2.0])
        with pytest.raises(WorkspaceError) as exc:
            inverse_kinematics(0, far, cfg)
        clamped = exc.value.clamped_target
        # the clamp lands on a reachable point
        sol = inverse_kinematics(0, clamped, cfg)
        back = forward_kinematics(0, [sol.abduction, sol.hip, sol.knee], cfg)
        assert np.linalg.norm(back - clamped) <= 1e-9

    def test_clamped_variant_never_raises(self, cfg):
        rng = np.random.default_rng(13)
        targets = rng.uniform(-2.0, 2.0, size=(200, 3))
        for target in targets:
            sol, was_clamped = inverse_kinematics_clamped(0, target, cfg)
            p = forward_kinematics(
                0, [sol.abduction, sol.hip, sol.knee], cfg)
            assert np.all(np.isfinite(p))
            if not was_clamped:
                assert np.linalg.norm(p - target) <= 1e-9

    def test_mirror_symmetry(self, cfg):
        # whenever the solver's canonical branch for the right leg equals
        # the sampled angles, the left-leg solution must be its y mirror
        rng = np.random.default_rng(17)
        q = random_joint_angles(rng, cfg, 100)[:, 0, :]
        checked = 0
        for qi in q:
            p_fr = forward_kinematics(0, qi, cfg)
            canon = inverse_kinematics(0, p_fr, cfg)
            qc = np.array([canon.abduction, canon.hip, canon.knee])
            if np.abs(qc - qi).max() > 1e-9:
                continue
            mirrored = p_fr * np.array([1.0, -1.0, 1.0])
            sol = inverse_kinematics(1, mirrored, cfg)
            assert abs(sol.abduction + qi[0]) < 1e-9
            assert abs(sol.hip - qi[1]) < 1e-9
            assert abs(sol.knee - qi[2]) < 1e-9
            checked += 1
        assert checked > 50

    def test_branch_continuity_on_short_segments(self, cfg):
        # solutions along a 1 mm segment must not hop branches
        rng = np.random.default_rng(19)
        q = random_joint_angles(rng, cfg, 200)
        targets = leg_forward_kinematics(q, cfg)
        for i in range(q.shape[0]):
            for leg in range(4):
                a = targets[i, leg]
                # conditioning blows up near the abduction axis; a branch
                # hop would show as a pi scale jump, so test away from it
                if np.hypot(a[1], a[2]) < 0.05:
                    continue
                step = rng.normal(size=3)
                b = a + 1e-3 * step / np.linalg.norm(step)
                qa, _ = inverse_kinematics_clamped(leg, a, cfg)
                qb, _ = inverse_kinematics_clamped(leg, b, cfg)
                va = np.array([qa.abduction, qa.hip, qa.knee])
                vb = np.array([qb.abduction, qb.hip, qb.knee])
                assert np.abs(va - vb).max() < 0.5

    def test_batched_matches_scalar(self, cfg):
        rng = np.random.default_rng(23)
        q = random_joint_angles(rng, cfg, 40)
        targets = leg_forward_kinematics(q, cfg)
        batched, _ = leg_inverse_kinematics(targets, cfg)
        for i in range(40):
            for leg in range(4):
                sol = inverse_kinematics(leg, targets[i, leg], cfg)
                assert np.allclose(
                    batched[i, leg],
                    [sol.abduction, sol.hip, sol.knee], atol=1e-9)


class TestStanceHelpers:
    def test_neutral_stance_geometry(self, cfg):
        targets = neutral_stance_targets(cfg)
        assert targets.shape == (4, 3)
        assert np.allclose(targets[:, 0], 0.0)
        assert np.allclose(targets[:, 1],
                           np.asarray(LEG_SIDE) * cfg.link_lengths[0])
        assert np.allclose(targets[:, 2], -cfg.nominal_body_height)

    def test_wheel_center_offset(self, cfg):
        contact = np.array([0.1, -0.2, -0.3])
        center = wheel_center_from_contact(contact, cfg)
        assert np.allclose(center, [0.1, -0.2, -0.3 + cfg.wheel_radius])


class TestConfigLoading:
    def test_missing_field_named(self):
        data = {"link_lengths": [0.08, 0.213, 0.213]}
        with pytest.raises(ConfigError, match="hip_offsets"):
            load_config(data)

    def test_unknown_field_rejected(self, cfg):
        data = json_dict(cfg)
        data["wheel_diameter"] = 0.1
        with pytest.raises(ConfigError, match="wheel_diameter"):
            load_config(data)

    def test_envelope_key(self, cfg):
        data = {"robot": json_dict(cfg)}
        loaded = load_config(data)
        assert loaded.base_mass == cfg.base_mass

    def test_json_text_and_path(self, cfg, tmp_path):
        import json
        text = json.dumps(json_dict(cfg))
        assert load_config(text).wheel_radius == cfg.wheel_radius
        p = tmp_path / "robot.json"
        p.write_text(text)
        assert load_config(str(p)).wheel_radius == cfg.wheel_radius

    def test_bad_limit_ordering(self, cfg):
        data = json_dict(cfg)
        data["leg_joint_limits"][0] = [0.9, -0.9]
        with pytest.raises(ConfigError):
            load_config(data)

    def test_negative_mass(self, cfg):
        data = json_dict(cfg)
        data["base_mass"] = -1.0
        with pytest.raises(ConfigError):
            load_config(data)

    def test_body_height_beyond_reach(self, cfg):
        data = json_dict(cfg)
        data["nominal_body_height"] = 1.0
        with pytest.raises(ConfigError):
            load_config(data)


def json_dict(cfg) -> dict:
    import dataclasses
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = v.tolist() if hasattr(v, "tolist") else v
    return out
