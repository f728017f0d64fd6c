import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactile_svae.errors import ConfigError, DomainError, FormatError
from tactile_svae.plant import (
    FORCE_LIMIT_N,
    TORQUE_LIMIT_NMM,
    ContactPose,
    DeformationState,
    DomainTag,
    FingerPlantConfig,
    ThresholdBand,
    color_threshold,
    deform,
    encode_pgm,
    plant_wrench,
    read_pgm,
    render,
    wrench_at_base,
    write_pgm,
)

CFG = FingerPlantConfig()


def random_poses(n, seed=0):
    rng = np.random.default_rng(seed)
    return [ContactPose(rng.uniform(0, 5), rng.uniform(-5, 5), rng.uniform(-math.pi, math.pi)) for _ in range(n)]


@pytest.fixture(scope="module")
def sweep():
    return np.array([plant_wrench(p, CFG) for p in random_poses(10_000)])


class TestDeform:
    def test_no_contact_is_zero(self):
        s = deform(ContactPose(0, 0, 0), CFG)
        assert not s.displacements.any()
        assert not s.contact_mask.any()

    def test_mirror_symmetry(self):
        a = deform(ContactPose(3.0, 2.0, 0.7), CFG).displacements
        b = deform(ContactPose(3.0, -2.0, -0.7), CFG).displacements
        flipped = b[:, ::-1].copy()
        flipped[..., 0] *= -1
        np.testing.assert_allclose(a, flipped, atol=1e-12)

    def test_deeper_contact_moves_further(self):
        shallow = np.abs(deform(ContactPose(1.0, 0, 0), CFG).displacements).max()
        deep = np.abs(deform(ContactPose(2.5, 0, 0), CFG).displacements).max()
        assert deep > shallow

    @pytest.mark.parametrize("pose", [ContactPose(5.1, 0, 0), ContactPose(-0.1, 0, 0),
                                      ContactPose(1, 5.5, 0), ContactPose(1, 0, 3.2)])
    def test_out_of_range_pose(self, pose):
        with pytest.raises(DomainError):
            deform(pose, CFG)


class TestWrench:
    def test_zero_state(self):
        zero = DeformationState(np.zeros((10, 7, 2)), np.zeros((10, 7), bool))
        assert wrench_at_base(zero, CFG).as_array().tolist() == [0.0] * 6

    def test_doubling_displacements_doubles_wrench(self):
        s = deform(ContactPose(2.0, 1.0, 0.3), CFG)
        np.testing.assert_allclose(wrench_at_base(s.scaled(2.0), CFG).as_array(),
                                   2.0 * wrench_at_base(s, CFG).as_array(), rtol=1e-12)

    def test_calibrated_sweep_maxima(self, sweep):
        assert 8.0 <= np.abs(sweep[:, :3]).max() <= 10.0
        assert 480.0 <= np.abs(sweep[:, 3:]).max() <= 600.0

    def test_every_wrench_in_range(self, sweep):
        assert np.all(np.abs(sweep[:, :3]) <= FORCE_LIMIT_N)
        assert np.all(np.abs(sweep[:, 3:]) <= TORQUE_LIMIT_NMM)

    def test_grip_force_monotone_in_depth(self):
        for z, theta in [(0, 0), (2.5, 1.0), (-4, -2.5)]:
            fy = [plant_wrench(ContactPose(x, z, theta), CFG)[1] for x in np.linspace(0, 5, 50)]
            assert np.all(np.diff(fy) >= 0)

    def test_mirrored_pose_negates_lateral_channels(self):
        for p in random_poses(20, seed=3):
            w = plant_wrench(p, CFG)
            m = plant_wrench(p.mirrored(), CFG)
            sign = np.array([-1, 1, 1, 1, -1, -1])
            np.testing.assert_allclose(m, sign * w, atol=1e-9)

    def test_all_channels_active(self, sweep):
        assert np.all(sweep.std(axis=0) > 0)

    def test_determinism(self):
        p = ContactPose(4.2, -1.3, 2.2)
        assert plant_wrench(p, CFG).tobytes() == plant_wrench(p, CFG).tobytes()

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 5.0), st.floats(-5.0, 5.0), st.floats(-math.pi, math.pi), st.floats(0.1, 4.0))
    def test_linearity(self, x, z, th, k):
        s = deform(ContactPose(x, z, th), CFG)
        np.testing.assert_allclose(wrench_at_base(s.scaled(k), CFG).as_array(),
                                   k * wrench_at_base(s, CFG).as_array(), rtol=1e-9, atol=1e-9)


class TestConfig:
    def test_round_trip(self):
        assert FingerPlantConfig.from_dict(CFG.to_dict()) == CFG

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            FingerPlantConfig.from_dict({**CFG.to_dict(), "stiffness": 1.0})

    @pytest.mark.parametrize("bad", [dict(grid_rows=3), dict(tip_taper=0.0), dict(tip_taper=1.2),
                                     dict(node_stiffness=-1.0), dict(cross_section="star")])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            FingerPlantConfig(**bad)

    @pytest.mark.parametrize("section", ["circle", "square", "hexagon", "oval"])
    def test_cross_sections_give_finite_wrenches(self, section):
        cfg = FingerPlantConfig(cross_section=section)
        assert np.all(np.isfinite(plant_wrench(ContactPose(3, 1, 0.4), cfg)))

    def test_domain_validation(self):
        with pytest.raises(ConfigError):
            DomainTag("land", brightness_shift=0.1)
        with pytest.raises(ConfigError):
            DomainTag.water(brightness_shift=0.5)
        with pytest.raises(ConfigError):
            DomainTag.water(noise_std=0.3)
        with pytest.raises(ConfigError):
            DomainTag.water(blur_radius_px=-1)
        with pytest.raises(ConfigError):
            DomainTag.water(caustic_amplitude=0.31)


class TestRender:
    def test_template_is_stable(self):
        zero = deform(ContactPose(0, 0, 0), CFG)
        a = render(zero, DomainTag.land(), False, 1)
        b = render(zero, DomainTag.land(), False, 99)
        assert a.tobytes() == b.tobytes()
        assert a.shape == (64, 64) and a.min() >= 0 and a.max() <= 1

    def test_null_water_equals_land(self):
        s = deform(ContactPose(2, 1, 0.5), CFG)
        null = DomainTag("water", 0.0, 0.0, 0.0, 0.0)
        assert render(s, null, True, 5).tobytes() == render(s, DomainTag.land(), True, 5).tobytes()

    def test_seed_determinism(self):
        s = deform(ContactPose(2, 1, 0.5), CFG)
        w = DomainTag.water()
        assert render(s, w, True, 7).tobytes() == render(s, w, True, 7).tobytes()
        assert not np.array_equal(render(s, w, True, 7), render(s, w, True, 8))

    def test_deformation_changes_image(self):
        a = render(deform(ContactPose(0, 0, 0), CFG), DomainTag.land(), False, 0)
        b = render(deform(ContactPose(4, 0, 0), CFG), DomainTag.land(), False, 0)
        assert np.abs(a - b).mean() > 0.005

    def test_land_clutter_off_is_noise_free(self):
        s = deform(ContactPose(2, 1, 0.5), CFG)
        assert render(s, DomainTag.land(), False, 1).tobytes() == render(s, DomainTag.land(), False, 2).tobytes()


class TestThreshold:
    def test_clean_render_preserved_on_foreground(self):
        s = deform(ContactPose(3, -1, 1.0), CFG)
        img = render(s, DomainTag.land(), False, 0)
        out = color_threshold(img)
        fg = img >= 0.45
        assert np.array_equal(out[fg], img[fg])

    def test_removes_clutter(self):
        for i, p in enumerate(random_poses(20, seed=11)):
            s = deform(p, CFG)
            clean = render(s, DomainTag.land(), False, i)
            cluttered = color_threshold(render(s, DomainTag.land(), True, i))
            assert np.abs(cluttered - clean).mean() <= 0.02

    def test_all_background(self):
        assert not color_threshold(np.full((8, 8), 0.3)).any()

    def test_idempotent(self):
        img = render(deform(ContactPose(2, 2, 2), CFG), DomainTag.water(), True, 3)
        once = color_threshold(img)
        assert np.array_equal(color_threshold(once), once)

    def test_empty_band(self):
        with pytest.raises(ConfigError):
            ThresholdBand(0.8, 0.2)


class TestPGM:
    def test_round_trip(self, tmp_path):
        img = np.random.default_rng(0).random((5, 7))
        write_pgm(tmp_path / "a.pgm", img)
        back = read_pgm(tmp_path / "a.pgm")
        assert back.shape == (5, 7)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12

    def test_header_layout(self):
        assert encode_pgm(np.zeros((2, 3))).startswith(b"P5\n3 2\n255\n")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(FormatError, match="offset 0"):
            read_pgm(tmp_path / "x.pgm")

    def test_truncated(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(encode_pgm(np.zeros((4, 4)))[:-3])
        with pytest.raises(FormatError):
            read_pgm(tmp_path / "x.pgm")
