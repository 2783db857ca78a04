import numpy as np
import pytest

from groundtex import nn, pipeline, scenes
from groundtex.descriptor import DescriptorParams, TextureMap, texture_map
from groundtex.imaging import CameraModel, DisparityMap, save_disparity, save_mask, save_rgb
from groundtex.models import build_fusion_net, build_small_ground_like, normalize_rgb, normalize_texture
from groundtex.pipeline import (GroundSample, RoadSample, TrainConfig,
                                TrainingDivergedError, TrainingSet,
                                balance_samples, clamp_patch_origin,
                                detect_ground, extract_ground_samples,
                                extract_road_samples, load_ground_samples,
                                load_manifest_images, load_road_samples,
                                read_manifest, reflect_pad_for_grid,
                                region_majority_labels, road_grid_shape,
                                save_ground_samples, save_road_samples,
                                segment_road, to_training_set, train,
                                write_metrics_csv)
from groundtex.superpixel import SlicParams

from conftest import make_scene_frame


class TestPatchGeometry:
    def test_clamp_interior(self):
        assert clamp_patch_origin((50, 60), 32, 128, 256) == (34, 44)

    def test_clamp_at_borders(self):
        assert clamp_patch_origin((0, 0), 32, 128, 256) == (0, 0)
        assert clamp_patch_origin((127, 255), 32, 128, 256) == (96, 224)

    def test_image_smaller_than_patch(self):
        with pytest.raises(ValueError):
            clamp_patch_origin((5, 5), 32, 20, 40)

    def test_road_grid_kitti_size(self):
        assert road_grid_shape(375, 1242) == (94, 311)

    def test_reflect_pad_shapes(self):
        arr = np.zeros((3, 64, 128), dtype=np.float32)
        padded = reflect_pad_for_grid(arr, 30)
        assert padded.shape == (3, 64 + 26, 128 + 26)
        ragged = reflect_pad_for_grid(np.zeros((50, 70)), 30)
        assert ragged.shape == (50 + 26 + 2, 70 + 26 + 2)

    def test_reflect_pad_too_small(self):
        with pytest.raises(ValueError):
            reflect_pad_for_grid(np.zeros((10, 10)), 30)


class TestRegionMajority:
    def test_unanimous_region(self):
        labels = np.zeros((4, 4), dtype=np.int32)
        assert region_majority_labels(labels, np.ones((4, 4), bool)).tolist() == [1]

    def test_fifty_fifty_tie_is_negative(self):
        labels = np.zeros((4, 4), dtype=np.int32)
        mask = np.zeros((4, 4), bool)
        mask[:2] = True
        assert region_majority_labels(labels, mask).tolist() == [0]

    def test_strict_majority_wins(self):
        labels = np.repeat(np.array([[0, 1]], dtype=np.int32), 3, axis=0)
        mask = np.array([[True, False]] * 3)
        mask[0, 1] = True  # region 1: 1 of 3 positive
        assert region_majority_labels(labels, mask).tolist() == [1, 0]


class TestBalance:
    def test_sixty_forty_becomes_parity(self):
        samples = [GroundSample(np.zeros((1, 2, 2), np.float32), 1, (0, i)) for i in range(40)]
        samples += [GroundSample(np.zeros((1, 2, 2), np.float32), 0, (0, 40 + i)) for i in range(60)]
        balanced = balance_samples(samples, seed=3)
        labels = np.array([s.label for s in balanced])
        assert (labels == 1).sum() == 40
        assert (labels == 0).sum() == 40

    def test_balance_deterministic(self):
        samples = [GroundSample(np.zeros((1, 2, 2), np.float32), i % 3 == 0, (0, i)) for i in range(30)]
        a = [s.provenance for s in balance_samples(samples, seed=7)]
        b = [s.provenance for s in balance_samples(samples, seed=7)]
        assert a == b

    def test_single_class_passthrough(self):
        samples = [GroundSample(np.zeros((1, 2, 2), np.float32), 1, (0, i)) for i in range(5)]
        assert len(balance_samples(samples, seed=0)) == 5


class TestExtractGroundSamples:
    def test_balanced_output_and_provenance(self):
        frames = [make_scene_frame(s) for s in (0, 1)]
        samples = extract_ground_samples(
            frames, SlicParams(region_count=60, iterations=4), DescriptorParams(), seed=0)
        labels = np.array([s.label for s in samples])
        assert (labels == 1).sum() == (labels == 0).sum() > 0
        assert all(s.patch.shape == (1, 32, 32) for s in samples)
        assert {s.provenance[0] for s in samples} == {0, 1}

    def test_mask_shape_checked(self):
        rgb, disp, mask = make_scene_frame(0)
        with pytest.raises(ValueError):
            extract_ground_samples([(rgb, disp, mask[:-1])], SlicParams(region_count=10))


class TestExtractRoadSamples:
    def test_all_road_count(self):
        rgb = np.zeros((32, 32, 3), dtype=np.uint8)
        tex = TextureMap(np.zeros((32, 32), dtype=np.float32))
        mask = np.ones((32, 32), bool)
        samples = extract_road_samples([(rgb, tex, mask)])
        assert len(samples) == 64  # 8 x 8 grid of 4x4 regions
        assert all(s.label == 1 for s in samples)
        assert all(s.rgb_patch.shape == (3, 30, 30) for s in samples)
        assert all(s.texture_patch.shape == (1, 30, 30) for s in samples)

    def test_mixed_regions_skipped(self):
        rgb = np.zeros((32, 32, 3), dtype=np.uint8)
        tex = TextureMap(np.zeros((32, 32), dtype=np.float32))
        mask = np.triu(np.ones((32, 32), bool))  # diagonal boundary
        samples = extract_road_samples([(rgb, tex, mask)])
        centers = {s.center for s in samples}
        for i in range(8):
            assert (4 * i, 4 * i) not in centers  # regions on the diagonal are mixed
        assert (0, 28) in centers and (28, 0) in centers

    def test_corner_patch_mirrors_interior(self):
        h = w = 32
        grad = np.tile(np.arange(h, dtype=np.float32)[:, None], (1, w))
        rgb = np.zeros((h, w, 3), dtype=np.uint8)
        samples = extract_road_samples([(rgb, TextureMap(grad / h), np.ones((h, w), bool))])
        corner = next(s for s in samples if s.center == (0, 0))
        patch = corner.texture_patch[0]
        pad = 13
        for i in range(pad):
            assert patch[pad - 1 - i, 0] == patch[pad + 1 + i, 0]  # mirror around row 0

    def test_max_samples_subsampling(self):
        rgb = np.zeros((32, 32, 3), dtype=np.uint8)
        tex = TextureMap(np.zeros((32, 32), dtype=np.float32))
        mask = np.ones((32, 32), bool)
        samples = extract_road_samples([(rgb, tex, mask)], max_samples=10, seed=1)
        assert len(samples) == 10


def separable_set(n=200, seed=0):
    rng = np.random.default_rng(seed)
    ys = rng.integers(0, 2, n)
    xs = np.where(ys[:, None, None, None] == 1, 0.5, -0.5)
    xs = (xs + rng.normal(0, 0.05, (n, 1, 4, 4))).astype(np.float32)
    return TrainingSet(xs, ys)


def tiny_net(seed=0):
    return nn.Network([nn.Dense(16, 2, rng=np.random.default_rng(seed))],
                      input_shapes=((1, 4, 4),))


class TestTrain:
    def test_separable_set_reaches_high_accuracy(self):
        net, hist = train(tiny_net(), separable_set(),
                          TrainConfig(lr=0.1, momentum=0.9, batch_size=16, epochs=5, seed=0))
        assert hist[-1].val_acc >= 0.99

    def test_zero_lr_keeps_params_and_loss_constant(self):
        net = tiny_net(3)
        before = {k: v.copy() for k, v in net.named_params().items()}
        _, hist = train(net, separable_set(), TrainConfig(lr=0.0, epochs=4, batch_size=32, seed=1))
        for k, v in net.named_params().items():
            assert np.array_equal(v, before[k])
        losses = [h.train_loss for h in hist]
        assert max(losses) - min(losses) < 1e-12

    def test_same_seed_same_trace(self):
        cfg = TrainConfig(lr=0.05, epochs=3, batch_size=16, seed=5)
        _, h1 = train(tiny_net(1), separable_set(seed=2), cfg)
        _, h2 = train(tiny_net(1), separable_set(seed=2), cfg)
        assert h1 == h2

    def test_divergence_guard(self):
        net = tiny_net(0)
        net.layers[0].weight[0, 0] = np.nan
        with pytest.raises(TrainingDivergedError):
            train(net, separable_set(), TrainConfig(epochs=1, seed=0))

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            train(tiny_net(), TrainingSet(np.zeros((1, 1, 4, 4), np.float32), np.zeros(1, np.int64)),
                  TrainConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(validation_fraction=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


@pytest.fixture(scope="module")
def quick_ground_net():
    """Ground net trained briefly on two synthetic frames."""
    frames = [make_scene_frame(s) for s in (0, 1, 2)]
    slic_params = SlicParams(region_count=60, iterations=4)
    samples = extract_ground_samples(frames, slic_params, DescriptorParams(), seed=0)
    from groundtex.models import build_ground_net
    net = build_ground_net(seed=0)
    net, _ = train(net, to_training_set(samples),
                   TrainConfig(lr=0.01, momentum=0.9, batch_size=32, epochs=4, seed=0))
    return net, slic_params


class TestDetectGround:
    def test_all_invalid_disparity_all_negative(self, quick_ground_net):
        net, slic_params = quick_ground_net
        rgb, disp, mask = make_scene_frame(4)
        pred = detect_ground(rgb, DisparityMap.all_invalid(128, 256), net, slic_params)
        assert pred.shape == (128, 256)
        assert not pred.any()

    def test_output_shape_and_determinism(self, quick_ground_net):
        net, slic_params = quick_ground_net
        rgb, disp, mask = make_scene_frame(5)
        a = detect_ground(rgb, disp, net, slic_params)
        b = detect_ground(rgb, disp, net, slic_params)
        assert a.shape == mask.shape
        assert np.array_equal(a, b)
        assert (a == mask).mean() > 0.8  # sanity on exactly generated data


@pytest.fixture(scope="module")
def quick_fusion_net():
    cam = CameraModel.default(96, 48)
    spec = scenes.random_scene(3, 96, 48)
    disp, mask = scenes.synth_scene(spec, cam)
    rgb = scenes.render_rgb(spec, seed=3)
    tex = texture_map(disp)
    samples = extract_road_samples([(rgb, tex, mask)])
    net = build_fusion_net(seed=0)
    net, _ = train(net, to_training_set(samples),
                   TrainConfig(lr=0.01, momentum=0.9, batch_size=32, epochs=2, seed=0))
    return net


class TestSegmentRoad:
    def test_matches_exhaustive_patchwise(self, quick_fusion_net):
        net = quick_fusion_net
        rgb, disp, mask = make_scene_frame(9, width=96, height=48)
        tex = texture_map(disp)
        pred = segment_road(rgb, tex, net)
        assert pred.shape == (48, 96)
        rgb_p = reflect_pad_for_grid(normalize_rgb(rgb), 30)
        tex_p = reflect_pad_for_grid(normalize_texture(tex.data)[None], 30)
        gh, gw = road_grid_shape(48, 96)
        pa = np.stack([rgb_p[:, 4 * i:4 * i + 30, 4 * j:4 * j + 30]
                       for i in range(gh) for j in range(gw)])
        pb = np.stack([tex_p[:, 4 * i:4 * i + 30, 4 * j:4 * j + 30]
                       for i in range(gh) for j in range(gw)])
        labels = np.argmax(net.forward((pa, pb)), axis=1).reshape(gh, gw)
        expect = np.repeat(np.repeat(labels.astype(bool), 4, 0), 4, 1)[:48, :96]
        assert np.array_equal(pred, expect)

    def test_non_multiple_of_stride_size(self, quick_fusion_net):
        rgb = np.zeros((50, 70, 3), dtype=np.uint8)
        tex = TextureMap(np.zeros((50, 70), dtype=np.float32))
        pred = segment_road(rgb, tex, quick_fusion_net)
        assert pred.shape == (50, 70)

    def test_constant_input_uniform_labels(self, quick_fusion_net):
        rgb = np.full((48, 64, 3), 90, dtype=np.uint8)
        tex = TextureMap(np.full((48, 64), 0.2, dtype=np.float32))
        pred = segment_road(rgb, tex, quick_fusion_net)
        assert len(np.unique(pred)) == 1

    def test_accepts_preconverted_fcn(self, quick_fusion_net):
        from groundtex.models import fcn_convert
        rgb, disp, _ = make_scene_frame(9, width=96, height=48)
        tex = texture_map(disp)
        a = segment_road(rgb, tex, quick_fusion_net)
        b = segment_road(rgb, tex, fcn_convert(quick_fusion_net))
        assert np.array_equal(a, b)

    def test_texture_shape_checked(self, quick_fusion_net):
        with pytest.raises(ValueError):
            segment_road(np.zeros((48, 64, 3), np.uint8),
                         TextureMap(np.zeros((40, 64), np.float32)), quick_fusion_net)


class TestManifest:
    def test_roundtrip_with_relative_paths(self, tmp_path):
        rgb, disp, mask = make_scene_frame(0, width=64, height=48)
        (tmp_path / "frames").mkdir()
        save_rgb(tmp_path / "frames" / "rgb.png", rgb)
        save_disparity(tmp_path / "frames" / "d.png", disp)
        save_mask(tmp_path / "frames" / "m.png", mask)
        manifest = tmp_path / "list.txt"
        manifest.write_text("# comment\nframes/rgb.png frames/d.png frames/m.png\n")
        entries = read_manifest(manifest)
        assert len(entries) == 1
        assert entries[0][0].name == "rgb.png"
        images = load_manifest_images(manifest)
        assert np.array_equal(images[0][0], rgb)
        assert np.array_equal(images[0][2], mask)

    def test_malformed_line_rejected(self, tmp_path):
        manifest = tmp_path / "bad.txt"
        manifest.write_text("a.png b.png\n")
        with pytest.raises(ValueError, match="expected 3"):
            read_manifest(manifest)


class TestSampleCaches:
    def test_ground_cache_roundtrip(self, tmp_path):
        samples = [GroundSample(np.full((1, 4, 4), 0.25, np.float32), 1, (2, 7)),
                   GroundSample(np.zeros((1, 4, 4), np.float32), 0, (3, 1))]
        save_ground_samples(tmp_path / "s.gtx", samples)
        back = load_ground_samples(tmp_path / "s.gtx")
        assert len(back) == 2
        assert np.array_equal(back[0].patch, samples[0].patch)
        assert back[0].label == 1 and back[0].provenance == (2, 7)

    def test_road_cache_roundtrip(self, tmp_path):
        samples = [RoadSample(np.ones((3, 6, 6), np.float32), np.zeros((1, 6, 6), np.float32), 0, (4, 8))]
        save_road_samples(tmp_path / "r.gtx", samples)
        back = load_road_samples(tmp_path / "r.gtx")
        assert back[0].center == (4, 8)
        assert np.array_equal(back[0].rgb_patch, samples[0].rgb_patch)

    def test_wrong_cache_kind_rejected(self, tmp_path):
        save_ground_samples(tmp_path / "s.gtx", [GroundSample(np.zeros((1, 2, 2), np.float32), 0, (0, 0))])
        with pytest.raises(ValueError):
            load_road_samples(tmp_path / "s.gtx")


def test_metrics_csv_format(tmp_path):
    from groundtex.pipeline import EpochStats
    write_metrics_csv(tmp_path / "m.csv", [EpochStats(0, 0.5, 0.75, 0.4, 0.8)])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
    assert lines[1] == "0,0.500000,0.750000,0.400000,0.800000"
