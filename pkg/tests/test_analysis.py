import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactile_svae import analysis, svae
from tactile_svae.errors import ConfigError, DataError, UndefinedMetricError

MICRO = svae.SVAEArchitecture(height=16, width=16, latent_dim=4, stem_channels=2, channels=(2, 3),
                              regressor_hidden=(5,))


@pytest.fixture
def ckpt():
    return svae.Checkpoint(MICRO, svae.SVAENetwork(MICRO).init_params(0),
                           {"label_mean": [0.0] * 6, "label_std": [1.0] * 6})


class TestR2:
    def test_perfect(self):
        assert analysis.r2([1, 2, 3], [1, 2, 3]) == 1.0

    def test_half(self):
        # SS_res = 1, SS_tot = 2
        assert analysis.r2([1, 2, 2], [1, 2, 3]) == pytest.approx(0.5)

    def test_mean_predictor_is_zero(self):
        t = np.array([1.0, 4.0, 7.0])
        assert analysis.r2(np.full(3, t.mean()), t) == pytest.approx(0.0)

    def test_can_go_negative(self):
        assert analysis.r2([3, 2, 1], [1, 2, 3]) < 0

    def test_constant_truth(self):
        with pytest.raises(UndefinedMetricError):
            analysis.r2([1, 2], [5, 5])

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            analysis.r2([1, 2], [1, 2, 3])

    def test_wrench_metrics(self):
        rng = np.random.default_rng(0)
        truth = rng.standard_normal((40, 6))
        rep = analysis.wrench_metrics(truth + 0.1, truth)
        assert len(rep.r2) == 6 and rep.count == 40
        np.testing.assert_allclose(rep.mse, 0.01)
        assert rep.mean_r2 == pytest.approx(np.mean(rep.r2))


class TestHistograms:
    def test_default_bins(self):
        assert analysis.DEFAULT_FORCE_BINS[0] == (0.0, 2.0) and analysis.DEFAULT_FORCE_BINS[-1] == (8.0, 10.0)
        assert len(analysis.DEFAULT_TORQUE_BINS) == 5 and analysis.DEFAULT_TORQUE_BINS[-1] == (480.0, 600.0)

    def test_half_open_edges(self):
        truth = np.array([0.0, 2.0, 1.999, -2.0, 9.5])
        h = analysis.error_histogram(truth + 1.0, truth)
        assert [b.count for b in h] == [2, 2, 0, 0, 1]
        assert h[0].mean == pytest.approx(1.0) and h[0].std == pytest.approx(0.0)
        assert math.isnan(h[2].mean) and h[2].count == 0

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-9.99, 9.99), min_size=1, max_size=60))
    def test_counts_conserved(self, truth):
        h = analysis.error_histogram(np.zeros(len(truth)), truth)
        assert sum(b.count for b in h) == len(truth)

    @pytest.mark.parametrize("bins", [[(0, 2), (1, 3)], [(0, 2), (3, 4)], [(2, 2)], []])
    def test_bad_bins(self, bins):
        with pytest.raises(ConfigError):
            analysis.error_histogram([1.0], [1.0], bins)

    def test_per_axis(self):
        rng = np.random.default_rng(1)
        truth = np.hstack([rng.uniform(-9, 9, (30, 3)), rng.uniform(-590, 590, (30, 3))])
        hists = analysis.wrench_error_histograms(truth, truth)
        assert list(hists) == list(analysis.AXES)
        assert all(sum(b.count for b in hists[a]) == 30 for a in analysis.AXES)
        assert hists["tx"][-1].upper == 600.0


class TestCorrelation:
    def test_independent_codes(self):
        codes = np.random.default_rng(0).standard_normal((5000, 4))
        cm = analysis.correlation_of_codes(codes)
        np.testing.assert_allclose(np.diag(cm.values), 1.0)
        np.testing.assert_array_equal(cm.values, cm.values.T)
        assert cm.mean_abs_offdiag() < 0.05

    def test_injected_duplicate(self):
        codes = np.random.default_rng(0).standard_normal((500, 3))
        codes[:, 2] = codes[:, 1]
        cm = analysis.correlation_of_codes(codes)
        assert cm.values[1, 2] == pytest.approx(1.0)
        codes[:, 2] = -codes[:, 1]
        assert analysis.correlation_of_codes(codes).values[1, 2] == pytest.approx(-1.0)

    def test_constant_dimension_flagged(self):
        codes = np.random.default_rng(0).standard_normal((100, 3))
        codes[:, 0] = 0.7
        cm = analysis.correlation_of_codes(codes)
        assert cm.flagged[0].all() and cm.flagged[:, 0].all() and not cm.flagged[1, 2]
        assert np.isnan(cm.values[0, 1])
        assert np.isfinite(cm.mean_abs_offdiag())

    def test_values_bounded(self):
        codes = np.random.default_rng(3).standard_normal((7, 5)) * 1e6
        assert np.nanmax(np.abs(analysis.correlation_of_codes(codes).values)) <= 1.0

    def test_latent_wrench_shape(self, ckpt):
        rng = np.random.default_rng(0)
        split = type("S", (), {"images": rng.random((12, 16, 16)), "wrenches": rng.standard_normal((12, 6))})
        assert analysis.latent_wrench_correlation(ckpt, split).values.shape == (4, 6)
        assert analysis.latent_correlation(ckpt, split).values.shape == (4, 4)


class TestTraversal:
    def test_shape_and_sweep_values(self, ckpt, monkeypatch):
        seen = []
        real = svae.decode_image

        def spy(c, z):
            seen.append(np.array(z))
            return real(c, z)

        monkeypatch.setattr(svae, "decode_image", spy)
        grid = analysis.latent_traversal(ckpt, [1, 3], (-5, 5), 11)
        assert grid.shape == (2, 11, 16, 16)
        codes = seen[0].reshape(2, 11, 4)
        np.testing.assert_allclose(codes[0, :, 1], np.linspace(-5, 5, 11))
        assert not codes[0, :, [0, 2, 3]].any()
        np.testing.assert_allclose(codes[1, :, 3], np.linspace(-5, 5, 11))

    def test_deterministic_and_in_range(self, ckpt):
        a = analysis.latent_traversal(ckpt, [0], steps=5)
        assert a.tobytes() == analysis.latent_traversal(ckpt, [0], steps=5).tobytes()
        assert a.min() >= 0 and a.max() <= 1

    @pytest.mark.parametrize("dims,steps", [([], 11), ([4], 11), ([-1], 11), ([0], 1)])
    def test_invalid(self, ckpt, dims, steps):
        with pytest.raises(ConfigError):
            analysis.latent_traversal(ckpt, dims, steps=steps)

    def test_collapsed_dimension_is_flat(self, ckpt):
        ckpt.params["dec.fc.W"][:, 2] = 0
        assert analysis.collapsed_dims(ckpt) == [2]
        row = analysis.latent_traversal(ckpt, [2], steps=6)[0]
        assert all(np.array_equal(row[0], r) for r in row)

    def test_mosaic(self):
        grid = np.ones((2, 3, 4, 5))
        m = analysis.mosaic(grid, pad=1)
        assert m.shape == (2 * 5 - 1, 3 * 6 - 1)
        assert m.sum() == grid.sum()


class TestDomainShift:
    def test_identical_inputs(self, ckpt):
        rng = np.random.default_rng(0)
        imgs = rng.random((6, 16, 16))
        rep = analysis.domain_shift_report(ckpt, imgs, imgs.copy(), rng.standard_normal((6, 6)))
        assert rep["cosine_similarity"] == [1.0] * 6
        assert rep["mean_r2_gap"] == 0.0

    def test_zero_codes_count_as_identical(self):
        z = np.zeros((3, 4))
        assert analysis.cosine_similarity_rows(z, z).tolist() == [1.0, 1.0, 1.0]

    def test_shuffled_negative_control(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((200, 8))
        paired = analysis.cosine_similarity_rows(a, a + 0.1 * rng.standard_normal(a.shape)).mean()
        shuffled = analysis.cosine_similarity_rows(a, a[rng.permutation(200)]).mean()
        assert paired > 0.95 and abs(shuffled) < 0.2

    def test_unpaired(self, ckpt):
        with pytest.raises(DataError):
            analysis.domain_shift_report(ckpt, np.zeros((3, 16, 16)), np.zeros((2, 16, 16)), np.zeros((3, 6)))
        with pytest.raises(DataError):
            analysis.domain_shift_report(ckpt, np.zeros((2, 16, 16)), np.zeros((2, 16, 16)),
                                         np.zeros((2, 6)), np.ones((2, 6)))


class TestSweepsAndWriters:
    def test_sweep_needs_two_points(self):
        with pytest.raises(ConfigError):
            analysis.alpha_sweep(None, alphas=[1.0])
        with pytest.raises(ConfigError):
            analysis.latent_dim_sweep(None, dims=[8])

    def test_tiny_alpha_sweep(self):
        rng = np.random.default_rng(0)

        def split(n):
            return type("S", (), {"images": rng.random((n, 16, 16)), "wrenches": rng.standard_normal((n, 6))})

        ds = type("D", (), {"train": split(12), "val": split(4), "test": split(6)})
        rows = analysis.alpha_sweep(ds, [0.1, 10.0], MICRO, hyper=svae.TrainConfig(epochs=1, batch_size=6))
        assert [r["model"] for r in rows] == ["svae", "svae", "convnet", "vae"]
        assert all(len(r["r2"]) == 6 for r in rows)

    def test_writers(self, tmp_path):
        rep = analysis.wrench_metrics(np.eye(6) + 0.1, np.eye(6))
        analysis.write_json(tmp_path / "m.json", {"report": rep, "arr": np.arange(3)})
        assert json.loads((tmp_path / "m.json").read_text())["arr"] == [0, 1, 2]
        analysis.write_csv(tmp_path / "m.csv", analysis.metrics_rows(rep))
        rows = list(csv.DictReader(open(tmp_path / "m.csv")))
        assert [r["axis"] for r in rows if r["metric"] == "r2"] == list(analysis.AXES)
        assert {r["metric"] for r in rows} == {"r2", "mse", "mean_r2", "recon_mse", "count"}
