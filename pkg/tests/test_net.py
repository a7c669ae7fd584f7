import numpy as np
import pytest
import torch

from petroseg.errors import InputError, InternalError
from petroseg.net import (
    Batch,
    IDENTITY_JITTER,
    JitterParams,
    SegNet,
    TrainConfig,
    apply_jitter,
    backward_and_step,
    build_net,
    combined_loss,
    forward,
    jitter,
    load_checkpoint,
    predict_tiled,
    retrain_with_predictions,
    sample_crops,
    save_checkpoint,
    tile_origins,
    train,
)
from petroseg.phantom import generate_phantom
from petroseg.raster import PhaseLabel, PhaseMask, Scan


def toy_pair(width=64, height=64, seed=0, scan_id="toy"):
    ph = generate_phantom(
        width, height, seed=seed, plant_probes=False,
        void_radius=(3, 8), aggregate_radius=(5, 14), scan_id=scan_id,
    )
    return (ph.scan, ph.mask)


def params_equal(a: SegNet, b: SegNet) -> bool:
    return all(torch.equal(p, q) for (_, p), (_, q) in zip(a.named_parameters(), b.named_parameters()))


class TestSampleCrops:
    def test_exact_size_yields_identity_crop(self, rng):
        pixels = rng.integers(0, 256, size=(800, 800, 3), dtype=np.uint8)
        labels = rng.integers(0, 3, size=(800, 800)).astype(np.uint8)
        pair = (Scan(id="a", pitch_um=1.0, pixels=pixels), PhaseMask(pitch_um=1.0, labels=labels))
        batch = sample_crops([pair], n=3, crop=800, rng=np.random.default_rng(0))
        for k in range(3):
            assert np.array_equal(batch.labels[k], labels)
            assert np.array_equal(batch.images[k], pixels.astype(np.float32) / 255.0)

    def test_seeded_determinism(self):
        pairs = [toy_pair(seed=1), toy_pair(seed=2, scan_id="toy2")]
        b1 = sample_crops(pairs, 8, 32, np.random.default_rng(99))
        b2 = sample_crops(pairs, 8, 32, np.random.default_rng(99))
        assert np.array_equal(b1.images, b2.images) and np.array_equal(b1.labels, b2.labels)

    def test_pair_selection_within_binomial_bound(self):
        all0 = PhaseMask(pitch_um=1.0, labels=np.zeros((16, 16), dtype=np.uint8))
        all1 = PhaseMask(pitch_um=1.0, labels=np.ones((16, 16), dtype=np.uint8))
        scan = Scan(id="s", pitch_um=1.0, pixels=np.zeros((16, 16, 3), dtype=np.uint8))
        batch = sample_crops([(scan, all0), (scan, all1)], 10_000, 16, np.random.default_rng(5))
        picks = batch.labels[:, 0, 0].astype(np.int64).sum()
        sigma = np.sqrt(10_000 * 0.25)
        assert abs(picks - 5000) <= 3 * sigma

    def test_crop_larger_than_smallest_image(self):
        with pytest.raises(InputError, match="larger than smallest"):
            sample_crops([toy_pair()], 1, 128, np.random.default_rng(0))

    def test_empty_pairs(self):
        with pytest.raises(InputError, match="no training pairs"):
            sample_crops([], 1, 16, np.random.default_rng(0))


class TestJitter:
    def test_identity_params_leave_crop_unchanged(self, rng):
        image = rng.random((32, 32, 3)).astype(np.float32)
        label = rng.integers(0, 3, size=(32, 32)).astype(np.uint8)
        out_img, out_lab = apply_jitter(image, label, IDENTITY_JITTER)
        assert np.array_equal(out_img, image) and np.array_equal(out_lab, label)

    def test_double_horizontal_flip_is_identity(self, rng):
        image = rng.random((16, 16, 3)).astype(np.float32)
        label = rng.integers(0, 3, size=(16, 16)).astype(np.uint8)
        p = JitterParams(flip_h=True, flip_v=False, quarter_turns=0, scale=1.0)
        i1, l1 = apply_jitter(image, label, p)
        i2, l2 = apply_jitter(i1, l1, p)
        assert np.array_equal(i2, image) and np.array_equal(l2, label)

    def test_rotation_preserves_label_histogram(self, rng):
        label = rng.integers(0, 3, size=(20, 20)).astype(np.uint8)
        image = rng.random((20, 20, 3)).astype(np.float32)
        p = JitterParams(flip_h=False, flip_v=False, quarter_turns=1, scale=1.0)
        _, rotated = apply_jitter(image, label, p)
        assert np.array_equal(np.bincount(rotated.ravel(), minlength=256), np.bincount(label.ravel(), minlength=256))

    @pytest.mark.parametrize("scale", [0.75, 0.9, 1.1, 1.25])
    def test_scale_preserves_dimensions(self, rng, scale):
        image = rng.random((24, 24, 3)).astype(np.float32)
        label = rng.integers(0, 3, size=(24, 24)).astype(np.uint8)
        p = JitterParams(flip_h=False, flip_v=False, quarter_turns=0, scale=scale)
        out_img, out_lab = apply_jitter(image, label, p)
        assert out_img.shape == image.shape and out_lab.shape == label.shape

    def test_shrink_pads_with_unlabeled(self, rng):
        image = rng.random((24, 24, 3)).astype(np.float32)
        label = rng.integers(0, 3, size=(24, 24)).astype(np.uint8)
        p = JitterParams(flip_h=False, flip_v=False, quarter_turns=0, scale=0.75)
        _, out_lab = apply_jitter(image, label, p)
        assert out_lab[0, 0] == int(PhaseLabel.UNLABELED)

    def test_labels_never_invented(self, rng):
        label = np.full((24, 24), 255, dtype=np.uint8)
        label[8:16, 8:16] = 2
        image = rng.random((24, 24, 3)).astype(np.float32)
        for seed in range(10):
            g = np.random.default_rng(seed)
            batch = jitter(Batch(images=image[None], labels=label[None]), g)
            assert set(np.unique(batch.labels)) <= {2, 255}

    def test_batch_jitter_deterministic(self, rng):
        images = rng.random((4, 16, 16, 3)).astype(np.float32)
        labels = rng.integers(0, 3, size=(4, 16, 16)).astype(np.uint8)
        b1 = jitter(Batch(images=images.copy(), labels=labels.copy()), np.random.default_rng(3))
        b2 = jitter(Batch(images=images.copy(), labels=labels.copy()), np.random.default_rng(3))
        assert np.array_equal(b1.images, b2.images) and np.array_equal(b1.labels, b2.labels)


class TestForward:
    def test_zeroed_head_gives_uniform_probabilities(self):
        net = build_net(0)
        with torch.no_grad():
            net.head.weight.zero_()
            net.head.bias.zero_()
            probs = forward(net, torch.rand(1, 3, 16, 16))
        assert torch.allclose(probs, torch.full_like(probs, 1 / 3))

    def test_probabilities_sum_to_one(self):
        net = build_net(1)
        with torch.no_grad():
            probs = forward(net, torch.rand(2, 3, 16, 16))
        assert float((probs.sum(dim=1) - 1.0).abs().max()) < 1e-6
        assert float(probs.min()) > 0.0

    def test_doubling_scores_sharpens_but_keeps_argmax(self):
        net = build_net(2)
        x = torch.rand(1, 3, 16, 16)
        with torch.no_grad():
            probs = forward(net, x)
            net.head.weight.mul_(2.0)
            net.head.bias.mul_(2.0)
            sharper = forward(net, x)
        assert torch.equal(probs.argmax(dim=1), sharper.argmax(dim=1))
        assert float((sharper.max(dim=1).values - probs.max(dim=1).values).min()) >= 0.0

    def test_shape_validation(self):
        net = build_net(0)
        with pytest.raises(ValueError, match="multiple"):
            net(torch.rand(1, 3, 18, 18))
        with pytest.raises(ValueError, match="batch, 3"):
            net(torch.rand(1, 1, 16, 16))

    def test_output_spatial_size_matches_input(self):
        net = build_net(0)
        out = net(torch.rand(1, 3, 24, 40))
        assert out.shape == (1, 3, 24, 40)


class TestBackwardAndStep:
    def _batch(self, rng, size=16):
        images = rng.random((2, size, size, 3)).astype(np.float32)
        labels = rng.integers(0, 3, size=(2, size, size)).astype(np.uint8)
        return Batch(images=images, labels=labels)

    def test_zero_learning_rate_keeps_parameters(self, rng):
        net = build_net(0)
        before = [p.detach().clone() for p in net.parameters()]
        config = TrainConfig(iterations=1, batch=2, crop=16, learning_rate=0.0)
        backward_and_step(net, self._batch(rng), config, {})
        assert all(torch.equal(b, p.detach()) for b, p in zip(before, net.parameters()))

    def test_identical_nets_make_identical_updates(self, rng):
        batch = self._batch(rng)
        config = TrainConfig(iterations=1, batch=2, crop=16, learning_rate=0.05)
        net1, net2 = build_net(7), build_net(7)
        assert params_equal(net1, net2)
        l1 = backward_and_step(net1, batch, config, {})
        l2 = backward_and_step(net2, batch, config, {})
        assert l1 == l2
        assert params_equal(net1, net2)

    def test_momentum_update_rule(self, rng):
        # two steps with constant gradient g: v1 = -lr*g, v2 = mu*v1 - lr*g
        net = build_net(3)
        config = TrainConfig(iterations=1, batch=2, crop=16, learning_rate=0.1, momentum=0.5)
        batch = self._batch(rng)
        start = {n: p.detach().clone() for n, p in net.named_parameters()}
        velocities = {}
        backward_and_step(net, batch, config, velocities)
        for name, p in net.named_parameters():
            assert torch.equal(p.detach(), start[name] + velocities[name])

    def test_non_finite_gradient_names_layer(self, rng):
        net = build_net(0)
        with torch.no_grad():
            net.stem.weight.fill_(float("inf"))
        config = TrainConfig(iterations=1, batch=2, crop=16)
        with pytest.raises(InternalError, match="layer"):
            backward_and_step(net, self._batch(rng), config, {})

    def test_gradients_match_finite_differences_through_net(self):
        torch.manual_seed(11)
        net = SegNet(channels=(4, 6, 8)).double()
        with torch.no_grad():
            for p in net.parameters():
                p.add_(torch.randn_like(p) * 0.05)
        images = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        labels = torch.randint(0, 3, (1, 8, 8))

        def loss_value():
            with torch.no_grad():
                total, _, _ = combined_loss(forward(net, images), labels)
            return total

        total, _, _ = combined_loss(forward(net, images), labels)
        net.zero_grad()
        total.backward()
        checked = 0
        for name, p in net.named_parameters():
            grad = p.grad.reshape(-1)
            flat = p.data.reshape(-1)
            for i in torch.argsort(grad.abs(), descending=True)[:2]:
                g = float(grad[i])
                if abs(g) <= 1e-4:
                    continue
                h = 1e-6 * max(1.0, abs(float(flat[i])))
                old = float(flat[i])
                flat[i] = old + h
                up = float(loss_value())
                flat[i] = old - h
                down = float(loss_value())
                flat[i] = old
                assert (up - down) / (2 * h) == pytest.approx(g, rel=1e-3)
                checked += 1
        assert checked >= 10


class TestTrain:
    def test_single_iteration_trace(self):
        pairs = [toy_pair()]
        config = TrainConfig(iterations=1, batch=1, crop=32, snapshot_period=10)
        net, trace = train(pairs, config)
        assert trace.iterations == [1]
        assert len(trace.loss) == 1
        assert trace.snapshots and trace.snapshots[-1][0] == 1
        assert 0.0 <= trace.final_miou <= 1.0

    def test_bit_reproducible(self):
        pairs = [toy_pair(seed=4)]
        config = TrainConfig(iterations=4, batch=2, crop=32, snapshot_period=2, seed=9)
        net1, trace1 = train(pairs, config)
        net2, trace2 = train(pairs, config)
        assert trace1.loss == trace2.loss
        assert trace1.snapshots == trace2.snapshots
        assert params_equal(net1, net2)

    def test_trace_csv_headers(self):
        pairs = [toy_pair()]
        config = TrainConfig(iterations=2, batch=1, crop=32, snapshot_period=1)
        _, trace = train(pairs, config)
        assert trace.loss_csv().splitlines()[0] == "iter,loss,ce,lovasz"
        assert trace.miou_csv().splitlines()[0] == "iter,miou"
        assert len(trace.loss_csv().splitlines()) == 3


class TestPredictTiled:
    def test_tile_origins_cover_with_overlap(self):
        origins = tile_origins(100, 40, 10)
        assert origins[0] == 0 and origins[-1] == 60
        assert all(b - a <= 30 for a, b in zip(origins, origins[1:]))

    def test_single_tile_equals_plain_forward(self):
        scan, _ = toy_pair(width=64, height=64, seed=6)
        net = build_net(0)
        mask = predict_tiled(net, scan, tile=64, overlap=8)
        images = torch.from_numpy(scan.pixels.astype(np.float32) / 255.0).permute(2, 0, 1).unsqueeze(0)
        with torch.no_grad():
            expected = forward(net, images).squeeze(0).numpy().argmax(axis=0).astype(np.uint8)
        assert np.array_equal(mask.labels, expected)

    def test_constant_scan_gives_constant_label(self):
        pixels = np.full((96, 96, 3), 130, dtype=np.uint8)
        scan = Scan(id="c", pitch_um=1.0, pixels=pixels)
        net = build_net(1)
        mask = predict_tiled(net, scan, tile=48, overlap=8)
        interior = mask.labels[20:76, 20:76]
        assert len(np.unique(interior)) == 1

    def test_tiled_matches_whole_image_away_from_seams(self):
        scan, phantom_mask = toy_pair(width=96, height=96, seed=8)
        pairs = [(scan, phantom_mask)]
        net, _ = train(pairs, TrainConfig(iterations=30, batch=2, crop=48, snapshot_period=30, seed=0))
        whole = predict_tiled(net, scan, tile=96, overlap=8).labels
        tiled = predict_tiled(net, scan, tile=64, overlap=16).labels  # origins 0 and 32
        # seam band: pixels within the overlap region or near interior tile edges
        band = np.zeros((96, 96), dtype=bool)
        reach = 16  # receptive-field allowance around the tile cut at x/y = 32..64
        band[:, 32 - reach : 64 + reach] = True
        band[32 - reach : 64 + reach, :] = True
        assert np.array_equal(whole[~band], tiled[~band])
        disagreement = float((whole[band] != tiled[band]).mean())
        assert disagreement < 0.005

    def test_scan_smaller_than_tile_padded(self, rng):
        pixels = rng.integers(0, 256, size=(24, 40, 3), dtype=np.uint8)
        scan = Scan(id="tiny", pitch_um=1.0, pixels=pixels)
        net = build_net(0)
        mask = predict_tiled(net, scan, tile=64, overlap=8)
        assert (mask.height, mask.width) == (24, 40)
        assert set(np.unique(mask.labels)) <= {0, 1, 2}

    def test_tile_must_exceed_twice_overlap(self, rng):
        pixels = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        scan = Scan(id="tiny", pitch_um=1.0, pixels=pixels)
        with pytest.raises(ValueError, match="twice the overlap"):
            predict_tiled(build_net(0), scan, tile=32, overlap=16)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = build_net(13)
        path = tmp_path / "model.ckpt"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        assert params_equal(net, loaded)
        again = tmp_path / "again.ckpt"
        save_checkpoint(loaded, again)
        assert path.read_bytes() == again.read_bytes()

    def test_truncated_rejected(self, tmp_path):
        net = build_net(0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(net, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 100])
        with pytest.raises(InputError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
        with pytest.raises(InputError, match="magic"):
            load_checkpoint(path)

    def test_wrong_version_rejected(self, tmp_path):
        net = build_net(0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(net, path)
        data = bytearray(path.read_bytes())
        data[8] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(InputError, match="version"):
            load_checkpoint(path)


class TestRetrain:
    def test_empty_replacement_equals_plain_train(self):
        pairs = [toy_pair(seed=4)]
        config = TrainConfig(iterations=3, batch=1, crop=32, snapshot_period=3, seed=2)
        base_net, base_trace = train(pairs, config)
        retrain_net, retrain_trace = retrain_with_predictions(pairs, [], base_net, config)
        assert base_trace.loss == retrain_trace.loss
        assert params_equal(base_net, retrain_net)

    def test_replace_all_completes(self):
        pairs = [toy_pair(seed=4), toy_pair(seed=5, scan_id="toy5")]
        config = TrainConfig(iterations=2, batch=1, crop=32, snapshot_period=2, seed=2)
        net, _ = train(pairs, config)
        net2, trace2 = retrain_with_predictions(pairs, ["toy", "toy5"], net, config, tile=64, overlap=8)
        assert len(trace2.loss) == 2

    def test_unknown_id_rejected(self):
        pairs = [toy_pair()]
        config = TrainConfig(iterations=1, batch=1, crop=32)
        net, _ = train(pairs, config)
        with pytest.raises(InputError, match="unknown pair ids"):
            retrain_with_predictions(pairs, ["nope"], net, config)
