import numpy as np
import pytest

from ibs import (ConfigurationError, DataFormatError, DegenerateDataError, Dataset, NetworkSpec,
                 TrainConfig, generate_hypercube, generate_spiral, make_dataset, read_dataset_csv,
                 split_indices, train, write_dataset_csv)
from ibs.datagen import (BRAIN_FEATURES, BrainLayout, ellipse_mask, load_layout, read_pgm,
                         save_layout, smooth_features, write_pgm)


@pytest.fixture(scope="module")
def brain_small():
    return make_dataset("brain", 0, n_samples=200)


class TestHypercube:
    def test_custom_preset_shape(self):
        ds, layout = make_dataset("custom", 0)
        assert layout is None
        assert ds.features.shape == (2000, 2)
        assert np.bincount(ds.labels).tolist() == [1000, 1000]

    def test_three_feature_preset(self):
        ds, _ = make_dataset("three-feature", 0)
        assert ds.features.shape == (2000, 3)
        assert ds.informative_indices == (0, 1, 2)

    def test_four_clusters_on_vertices(self):
        ds = generate_hypercube(4000, 2, 2, 2, class_sep=5.0, seed=1)
        quadrant = (ds.features > 0).astype(int) @ [1, 2]
        # every class owns two opposite or adjacent corners of the square
        for c in (0, 1):
            counts = np.bincount(quadrant[ds.labels == c], minlength=4)
            assert np.sum(counts > 0.2 * counts.sum()) == 2

    def test_one_dimensional_separation(self):
        ds = generate_hypercube(4000, 1, 1, 1, class_sep=5.0, seed=0)
        m0 = ds.features[ds.labels == 0, 0].mean()
        m1 = ds.features[ds.labels == 1, 0].mean()
        assert abs(abs(m1 - m0) - 10.0) <= 0.5

    def test_noise_features_are_uninformative(self):
        ds = generate_hypercube(4000, 6, 2, 1, class_sep=3.0, seed=2)
        noise = [i for i in range(6) if i not in ds.informative_indices]
        diff = np.abs(ds.features[ds.labels == 1].mean(0) - ds.features[ds.labels == 0].mean(0))
        assert diff[noise].max() < 0.2
        assert diff[list(ds.informative_indices)].max() > 1.0

    def test_deterministic(self):
        a = generate_hypercube(300, 3, 2, 1, 1.0, seed=5)
        b = generate_hypercube(300, 3, 2, 1, 1.0, seed=5)
        np.testing.assert_array_equal(a.features, b.features)
        c = generate_hypercube(300, 3, 2, 1, 1.0, seed=6)
        assert not np.array_equal(a.features, c.features)

    def test_odd_count_balanced(self):
        ds = generate_hypercube(301, 2, 2, 1, 1.0, seed=0)
        assert abs(int(ds.labels.sum()) - 150.5) <= 0.5

    def test_too_many_clusters(self):
        with pytest.raises(ConfigurationError):
            generate_hypercube(100, 2, 1, 2, 1.0)

    def test_unknown_preset_and_override(self):
        with pytest.raises(ConfigurationError):
            make_dataset("moons")
        with pytest.raises(ConfigurationError):
            make_dataset("custom", bogus=1)

    def test_linear_probe_on_separable_case(self):
        ds = generate_hypercube(1000, 4, 2, 1, class_sep=3.0, seed=3)
        _, m = train(NetworkSpec.linear(4), ds, TrainConfig(epochs=30, learning_rate=1e-2))
        assert m["accuracy"] >= 0.95


class TestSpiral:
    def test_preset(self):
        ds, _ = make_dataset("spiral", 0)
        assert ds.features.shape == (10000, 2)

    def test_arms_are_pi_rotations(self):
        ds = generate_spiral(400, noise_sigma=0.0, seed=0)
        np.testing.assert_allclose(ds.features[1::2], -ds.features[0::2], atol=1e-15)
        np.testing.assert_array_equal(ds.labels[:4], [0, 1, 0, 1])

    def test_radius_grows_with_angle(self):
        ds = generate_spiral(400, noise_sigma=0.0, seed=0)
        r = np.linalg.norm(ds.features[0::2], axis=1)
        assert np.all(np.diff(r) > 0)
        assert r.max() == pytest.approx(1.0)

    def test_noise_level(self):
        a = generate_spiral(4000, noise_sigma=0.0, seed=0)
        b = generate_spiral(4000, noise_sigma=0.05, seed=0)
        assert np.std(b.features - a.features) == pytest.approx(0.05, rel=0.05)

    def test_odd_count_rejected(self):
        with pytest.raises(ConfigurationError):
            generate_spiral(101)


class TestBrain:
    def test_mask_size(self):
        mask = ellipse_mask()
        assert mask.shape == (109, 91)
        assert mask.sum() == BRAIN_FEATURES

    def test_mask_is_convex_in_rows(self):
        mask = ellipse_mask()
        for row in mask:
            on = np.flatnonzero(row)
            if on.size:
                assert on[-1] - on[0] + 1 == on.size

    def test_dataset_layout(self, brain_small):
        ds, layout = brain_small
        assert ds.features.shape == (200, BRAIN_FEATURES)
        assert len(layout.informative_pixels) == 53
        flat = layout.mask.ravel()
        assert all(flat[p] for p in layout.informative_pixels)
        assert layout.informative_features == ds.informative_indices

    def test_image_round_trip(self, brain_small):
        ds, layout = brain_small
        imgs = layout.to_images(ds.features[:3])
        assert imgs.shape == (3, 109, 91)
        assert np.all(imgs[:, ~layout.mask] == 0)
        np.testing.assert_array_equal(layout.from_images(imgs), ds.features[:3])

    def test_sigma_zero_is_identity(self, brain_small):
        ds, layout = brain_small
        np.testing.assert_array_equal(smooth_features(layout, ds.features[:5], 0.0), ds.features[:5])

    def test_signal_concentrates_near_informative_pixels(self, brain_small):
        ds, layout = brain_small
        diff = np.abs(ds.features[ds.labels == 1].mean(0) - ds.features[ds.labels == 0].mean(0))
        img = layout.to_images(diff)
        peak = np.unravel_index(np.argmax(img), img.shape)
        inf = np.array([np.unravel_index(p, img.shape) for p in layout.informative_pixels])
        # sigma=2 smoothing keeps the peak within a few pixels of a signal pixel
        assert np.min(np.linalg.norm(inf - np.array(peak), axis=1)) <= 4.0

    def test_layout_files_round_trip(self, brain_small, tmp_path):
        _, layout = brain_small
        pgm, side = save_layout(layout, tmp_path / "layout")
        back = load_layout(side)
        np.testing.assert_array_equal(back.mask, layout.mask)
        assert back.informative_pixels == layout.informative_pixels

    def test_pgm_round_trip(self, tmp_path):
        img = np.arange(12).reshape(3, 4) * 20
        np.testing.assert_array_equal(read_pgm(write_pgm(img, tmp_path / "a.pgm")), img)

    def test_informative_pixel_outside_mask(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[1:3, 1:3] = True
        with pytest.raises(ConfigurationError):
            BrainLayout(4, 4, mask, (0,))


class TestSplit:
    def test_partition(self):
        tr, te = split_indices(100, 0.85, 3)
        assert len(tr) == 85 and len(te) == 15
        np.testing.assert_array_equal(np.sort(np.concatenate([tr, te])), np.arange(100))

    def test_seeded(self):
        np.testing.assert_array_equal(split_indices(50, 0.5, 1)[0], split_indices(50, 0.5, 1)[0])


class TestDatasetFiles:
    def test_csv_round_trip_bitwise(self, tmp_path):
        ds, _ = make_dataset("three-feature", 4, n_samples=300)
        path = write_dataset_csv(ds, tmp_path / "d.csv")
        back = read_dataset_csv(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.informative_indices == ds.informative_indices
        assert back.params == ds.params

    def test_byte_identical_rewrite(self, tmp_path):
        ds, _ = make_dataset("custom", 0, n_samples=100)
        a = write_dataset_csv(ds, tmp_path / "a.csv").read_bytes()
        b = write_dataset_csv(make_dataset("custom", 0, n_samples=100)[0], tmp_path / "b.csv").read_bytes()
        assert a == b

    def test_corrupt_row_reports_line(self, tmp_path):
        ds, _ = make_dataset("custom", 0, n_samples=20)
        path = write_dataset_csv(ds, tmp_path / "d.csv")
        lines = path.read_text().splitlines()
        lines[6] = "1.0,abc,0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match=r"d.csv:7:"):
            read_dataset_csv(path)

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f0,f1,label\n1,2,0\n3,1\n")
        with pytest.raises(DataFormatError, match=r":3:"):
            read_dataset_csv(p)

    def test_single_class_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("f0,label\n1,0\n2,0\n")
        with pytest.raises(DataFormatError):
            read_dataset_csv(p)

    def test_nan_rejected(self):
        with pytest.raises(DegenerateDataError):
            Dataset(np.array([[np.nan], [1.0]]), np.array([0, 1]))
