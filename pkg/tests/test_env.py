import numpy as np
import pytest
from PIL import Image

from recolor.coloring import decode_instances
from recolor.env import (
    EnvConfig,
    Episode,
    generate_synthetic,
    load_dataset,
    reset,
    save_dataset,
    step,
)
from recolor.pngio import (
    load_image,
    load_labels,
    save_image,
    save_label_overlay,
    save_labels,
)
from recolor.reward import reward_total

TOY_CFG = EnvConfig(steps=3, radii=(2, 4), alphas=((0.8, 4),))


def toy_pair():
    gt = np.zeros((8, 8), dtype=np.uint16)
    gt[1:4, 1:4] = 1
    gt[4:7, 5:8] = 2
    image = gt.astype(np.float64) / 4 + 0.1
    return image, gt


class TestEnvConfig:
    def test_defaults(self):
        cfg = EnvConfig()
        assert cfg.steps == 5 and cfg.radii == (12, 28)
        assert cfg.alphas == ((0.8, 16),)
        assert (cfg.w_s, cfg.w_m, cfg.gamma) == (1.5, 1.0, 1.0)

    def test_json_round_trip(self):
        cfg = EnvConfig(steps=4, radii=(3,), alphas=((0.5, 2), (0.8, 4)),
                        gamma=0.9, seed=7)
        assert EnvConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            EnvConfig.from_dict({"steps": 3, "stepz": 1})

    def test_validation(self):
        with pytest.raises(ValueError):
            EnvConfig(steps=0)
        with pytest.raises(ValueError):
            EnvConfig(gamma=1.5)
        with pytest.raises(ValueError):
            EnvConfig(connectivity=6)


class TestEpisode:
    def test_reset_observation_layout(self):
        image, gt = toy_pair()
        ep, obs = reset(image, gt, TOY_CFG)
        assert obs.shape == (8, 8, 1 + 3)
        np.testing.assert_array_equal(obs[:, :, 0], image)
        assert not obs[:, :, 1:].any()

    def test_full_size_observation(self):
        gt = np.zeros((176, 176), dtype=np.uint16)
        gt[10:60, 10:60] = 1
        gt[100:150, 90:170] = 2
        ep, obs = reset(gt / 2.0 * 0.5, gt, EnvConfig())
        assert obs.shape == (176, 176, 6)

    def test_step_matches_reward_total(self):
        image, gt = toy_pair()
        ep, _ = reset(image, gt, TOY_CFG)
        rng = np.random.default_rng(5)
        pre = ep.state
        action = rng.integers(0, 2, gt.shape)
        obs, rmap, done = step(ep, action)
        want = reward_total(pre.colors, ep.state.colors, gt, 0,
                            ep.split_systems, ep.merge_systems, ep.reward_cfg)
        np.testing.assert_array_equal(rmap.total, want.total)
        assert not done and ep.t == 1
        np.testing.assert_array_equal(obs[:, :, 1:], ep.state.planes)

    def test_one_step_episode(self):
        image, gt = toy_pair()
        ep, _ = reset(image, gt, EnvConfig(steps=1, radii=(2,), alphas=((0.8, 4),)))
        _, rmap, done = ep.step(np.ones(gt.shape, dtype=np.uint8))
        assert done
        np.testing.assert_array_equal(rmap.total, rmap.bf)
        with pytest.raises(ValueError):
            ep.step(np.zeros(gt.shape, dtype=np.uint8))

    def test_scripted_ground_truth_coloring(self):
        image, gt = toy_pair()
        ep, _ = reset(image, gt, TOY_CFG)
        for t in range(TOY_CFG.steps):
            ep.step((gt.astype(np.uint32) >> t) & 1)
        decoded = decode_instances(ep.state)
        assert set(np.unique(decoded)) == {0, 1, 2}
        np.testing.assert_array_equal(decoded > 0, gt > 0)
        for a in (1, 2):
            vals = np.unique(gt[decoded == a])
            assert vals.size == 1  # each decoded instance covers one gt segment

    def test_trajectory_log_grows(self):
        image, gt = toy_pair()
        ep, _ = reset(image, gt, TOY_CFG)
        rng = np.random.default_rng(0)
        for k in range(TOY_CFG.steps):
            ep.step(rng.integers(0, 2, gt.shape))
            assert len(ep.observations) == k + 2
            assert len(ep.actions) == len(ep.rewards) == k + 1

    def test_systems_static_within_episode(self):
        image, gt = toy_pair()
        ep, _ = reset(image, gt, TOY_CFG)
        ep.step(np.ones(gt.shape, dtype=np.uint8))
        fresh = Episode(image, gt, TOY_CFG)
        for a, b in zip(ep.split_systems, fresh.split_systems):
            np.testing.assert_array_equal(a.degree, b.degree)
        for a, b in zip(ep.merge_systems, fresh.merge_systems):
            np.testing.assert_array_equal(a.in_inner, b.in_inner)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Episode(np.zeros((4, 4)), np.zeros((5, 4), dtype=np.uint16), TOY_CFG)


class TestGenerator:
    def test_single_object(self):
        (pair,) = generate_synthetic(1, 16, 16, max_objects=1, noise_level=0.0,
                                     seed=3)
        assert set(np.unique(pair.labels)) == {0, 1}
        assert pair.image.shape == (16, 16, 1)
        assert 0.0 <= pair.image.min() and pair.image.max() <= 1.0

    def test_seed_determinism(self):
        a = generate_synthetic(3, 20, 18, max_objects=5, seed=11)
        b = generate_synthetic(3, 20, 18, max_objects=5, seed=11)
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.image, pb.image)
            np.testing.assert_array_equal(pa.labels, pb.labels)

    def test_object_count_spread(self):
        pairs = generate_synthetic(100, 32, 32, max_objects=8, seed=0)
        counts = {int(p.labels.max()) for p in pairs}
        assert len(counts) >= 3

    def test_labels_survive_occlusion_renumbering(self):
        pairs = generate_synthetic(20, 24, 24, max_objects=6, seed=5)
        for p in pairs:
            present = np.unique(p.labels)
            present = present[present > 0]
            np.testing.assert_array_equal(
                present, np.arange(1, present.size + 1))

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_synthetic(1, 16, 16, max_objects=0)
        with pytest.raises(ValueError):
            generate_synthetic(1, 16, 16, shape_kinds=("triangle",))


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        pairs = generate_synthetic(3, 12, 14, max_objects=3, seed=2)
        save_dataset(pairs, tmp_path, manifest={"seed": 2})
        back = load_dataset(tmp_path)
        assert [p.sample_id for p in back] == [p.sample_id for p in pairs]
        for orig, loaded in zip(pairs, back):
            np.testing.assert_array_equal(orig.labels, loaded.labels)
            assert np.abs(orig.image - loaded.image).max() <= 0.5 / 255 + 1e-12
        assert (tmp_path / "manifest.json").exists()

    def test_quantized_image_exact(self, tmp_path):
        img = (np.arange(30).reshape(5, 6) % 256) / 255.0
        save_image(tmp_path / "q.png", img)
        np.testing.assert_array_equal(load_image(tmp_path / "q.png")[:, :, 0], img)

    def test_empty_directory(self, tmp_path):
        assert load_dataset(tmp_path) == []

    def test_missing_label_names_id(self, tmp_path):
        save_image(tmp_path / "abc.png", np.zeros((4, 4)))
        with pytest.raises(ValueError, match="abc"):
            load_dataset(tmp_path)

    def test_orphan_label_names_id(self, tmp_path):
        save_labels(tmp_path / "xyz_label.png", np.zeros((4, 4), dtype=np.uint16))
        with pytest.raises(ValueError, match="xyz"):
            load_dataset(tmp_path)

    def test_size_mismatch_names_id(self, tmp_path):
        save_image(tmp_path / "p.png", np.zeros((4, 4)))
        save_labels(tmp_path / "p_label.png", np.zeros((5, 4), dtype=np.uint16))
        with pytest.raises(ValueError, match="p"):
            load_dataset(tmp_path)


class TestPngIO:
    def test_labels_16bit_round_trip(self, tmp_path):
        labels = np.array([[0, 1], [300, 65535]], dtype=np.uint16)
        save_labels(tmp_path / "l.png", labels)
        np.testing.assert_array_equal(load_labels(tmp_path / "l.png"), labels)

    def test_8bit_labels_widened(self, tmp_path):
        Image.fromarray(np.array([[0, 9]], dtype=np.uint8)).save(tmp_path / "l.png")
        out = load_labels(tmp_path / "l.png")
        assert out.dtype == np.uint16 and out.tolist() == [[0, 9]]

    def test_rgb_image_round_trip(self, tmp_path):
        img = np.linspace(0, 1, 24).round(2).reshape(2, 4, 3)
        save_image(tmp_path / "c.png", img)
        back = load_image(tmp_path / "c.png")
        assert back.shape == (2, 4, 3)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12

    def test_unsupported_modes_rejected(self, tmp_path):
        Image.fromarray(np.zeros((2, 2, 4), dtype=np.uint8)).save(tmp_path / "a.png")
        with pytest.raises(ValueError, match="mode"):
            load_image(tmp_path / "a.png")
        with pytest.raises(ValueError, match="mode"):
            load_labels(tmp_path / "a.png")

    def test_overlay_palette(self, tmp_path):
        labels = np.array([[0, 1], [2, 1]], dtype=np.uint16)
        save_label_overlay(tmp_path / "v.png", labels)
        with Image.open(tmp_path / "v.png") as im:
            arr = np.asarray(im)
        assert arr.shape == (2, 2, 3)
        assert not arr[0, 0].any()  # background stays black
        np.testing.assert_array_equal(arr[0, 1], arr[1, 1])
        assert (arr[0, 1] != arr[1, 0]).any()
