"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. Criteria 4 and 5 share
one full desk-scale experiment (64 synthetic pairs at 32x32, seed 42,
defaults) and together take a few minutes on one CPU core; everything
else is fast.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

import attngan
from attngan import (CheckpointFormatError, CloudRemovalModel, ImagePair,
                     ModelConfig, LossWeights, Tensor, TrainConfig, augment,
                     evaluate, fuse, load_checkpoint, load_dataset, mse, psnr,
                     select_pairs, split, ssim, synth_dataset, train)
from attngan.data import apply_augment
from attngan.gradcheck import (DEFAULT_TOLERANCE, OP_CASES, gradcheck,
                               gradcheck_scalar)
from attngan import tensor as T

from test_metrics import ssim_oracle


def announce(criterion, detail):
    print(f"\n[criterion {criterion}] PASS — {detail}")


# ---------------------------------------------------------------------------
# criterion 1: gradcheck suite over every op and every network


class TestCriterion1Gradchecks:
    def test_criterion_1_gradcheck_suite(self):
        t0 = time.perf_counter()
        worst_op, worst_err = None, 0.0

        for name in OP_CASES:
            report = gradcheck(name, trials=6, seed=42)
            assert report.points >= 100, f"{name}: only {report.points} points"
            assert report.max_rel_error <= DEFAULT_TOLERANCE, \
                f"{name}: {report.max_rel_error:.3e}"
            if report.max_rel_error > worst_err:
                worst_op, worst_err = name, report.max_rel_error

        cfg = ModelConfig(image_size=16, residual_blocks=2, base_channels=6)
        model = CloudRemovalModel(cfg, dtype=np.dtype(np.float64)).init(42)
        rng = np.random.default_rng(42)
        x = Tensor(rng.uniform(-1, 1, (1, 3, 16, 16)), dtype=np.float64)
        proj_f = Tensor(rng.standard_normal((1, 3, 16, 16)), dtype=np.float64)
        proj_a = Tensor(rng.standard_normal((1, cfg.n_masks, 16, 16)), dtype=np.float64)
        proj_c = Tensor(rng.standard_normal((1, 3 * (cfg.n_masks - 1), 16, 16)), dtype=np.float64)

        gen_params = [model.registry[n] for n in model.registry.names()
                      if n.startswith("gen_xy.")]

        def gen_loss():
            out = model.gen_xy(x)
            return T.add(T.mean(T.mul(out.fused, proj_f)),
                         T.add(T.mean(T.mul(out.attention, proj_a)),
                               T.mean(T.mul(out.content, proj_c))))

        report = gradcheck_scalar(gen_loss, gen_params, n_points=110, seed=1)
        assert report.max_rel_error <= DEFAULT_TOLERANCE, \
            f"generator: {report.max_rel_error:.3e}"
        nets = [("generator", report.max_rel_error)]

        logits_probe = model.disc_y(x)
        proj_d = Tensor(rng.standard_normal(logits_probe.shape), dtype=np.float64)
        disc_params = [model.registry[n] for n in model.registry.names()
                       if n.startswith("disc_y.")]

        def disc_loss():
            return T.mean(T.mul(model.disc_y(x), proj_d))

        report = gradcheck_scalar(disc_loss, disc_params, n_points=110, seed=2)
        assert report.max_rel_error <= DEFAULT_TOLERANCE, \
            f"discriminator: {report.max_rel_error:.3e}"
        nets.append(("discriminator", report.max_rel_error))

        mask = Tensor(rng.uniform(0, 1, (1, 1, 16, 16)), dtype=np.float64)
        att_probe = model.discriminate_attended(model.disc_ya, x, mask)
        proj_da = Tensor(rng.standard_normal(att_probe.shape), dtype=np.float64)
        att_params = [model.registry[n] for n in model.registry.names()
                      if n.startswith("disc_ya.")]

        def att_disc_loss():
            return T.mean(T.mul(model.discriminate_attended(model.disc_ya, x, mask), proj_da))

        report = gradcheck_scalar(att_disc_loss, att_params, n_points=110, seed=3)
        assert report.max_rel_error <= DEFAULT_TOLERANCE, \
            f"attended discriminator: {report.max_rel_error:.3e}"
        nets.append(("attended discriminator", report.max_rel_error))

        elapsed = time.perf_counter() - t0
        assert elapsed < 120, f"gradcheck suite took {elapsed:.0f}s (limit 120s)"
        net_msg = ", ".join(f"{n} {e:.1e}" for n, e in nets)
        announce(1, f"{len(OP_CASES)} ops (worst {worst_op} {worst_err:.1e}) and "
                    f"networks ({net_msg}) within 1e-4 in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: attention normalization and fusion identities


class TestCriterion2Attention:
    def test_criterion_2_attention_normalization(self):
        cfg = ModelConfig(image_size=16, residual_blocks=1, base_channels=4)
        worst = 0.0
        draws = 0
        for param_seed in range(10):
            model = CloudRemovalModel(cfg).init(param_seed)
            for input_seed in range(10):
                rng = np.random.default_rng([param_seed, input_seed])
                x = Tensor(rng.uniform(-1, 1, (1, 3, 16, 16)).astype(np.float32))
                out = model.gen_xy(x)
                a = out.attention.data
                worst = max(worst, float(np.abs(a.sum(axis=1) - 1.0).max()))
                assert a.min() >= 0.0 and a.max() <= 1.0
                draws += 1
        assert draws == 100
        assert worst <= 1e-5

        # fusion identities are exact, not approximate
        rng = np.random.default_rng(0)
        x = Tensor(rng.uniform(-1, 1, (2, 3, 8, 8)).astype(np.float32))
        content = Tensor(rng.uniform(-1, 1, (2, 3, 8, 8)).astype(np.float32))
        attention = np.zeros((2, 2, 8, 8), dtype=np.float32)
        attention[:, 1] = 1.0
        assert np.array_equal(fuse(x, Tensor(attention), content).data, x.data)
        attention = np.zeros((2, 2, 8, 8), dtype=np.float32)
        attention[:, 0] = 1.0
        assert np.array_equal(fuse(x, Tensor(attention), content).data, content.data)

        announce(2, f"100 draws: max |sum-1| = {worst:.2e} (tol 1e-5); "
                    f"fusion identities exact")


# ---------------------------------------------------------------------------
# criterion 3: metric oracles


class TestCriterion3Metrics:
    def test_criterion_3_metric_oracles(self):
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = rng.uniform(0, 255, (3, 12, 12))
            b = np.clip(a + rng.normal(0, 40, a.shape), 0, 255)
            worst = max(worst, abs(ssim(a, b) - ssim_oracle(a, b)))
        assert worst <= 1e-6

        one = np.array([[[1.0, -1.0]]])  # mse exactly 1 vs zeros
        zero = np.zeros((1, 1, 2))
        assert abs(psnr(zero, one) - 48.13) <= 0.01
        img = np.random.default_rng(1).uniform(0, 255, (3, 8, 8))
        assert psnr(img, img) == 99.0
        assert mse(img, img) == 0.0

        announce(3, f"ssim vs direct oracle max diff {worst:.2e} over 20 pairs; "
                    f"psnr closed forms (48.13 dB, cap 99.0) hold")


# ---------------------------------------------------------------------------
# criteria 4 + 5: desk-scale experiment, 30 vs 3 epochs


@pytest.fixture(scope="module")
def desk_experiment(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    data_root = str(base / "data")
    t0 = time.perf_counter()

    manifest = synth_dataset(64, 32, seed=42, out=data_root)
    manifest = split(manifest, attngan.default_train_count(64), seed=42)
    manifest.save()
    _, pairs = load_dataset(data_root, 32)
    train_pairs = select_pairs(pairs, manifest.train_ids)
    test_pairs = select_pairs(pairs, manifest.test_ids)

    state30 = train(train_pairs,
                    TrainConfig(epochs=30, seed=42, model=ModelConfig(image_size=32)),
                    str(base / "run30"))
    report30 = evaluate(state30, test_pairs,
                        str(base / "run30" / "report.json"),
                        str(base / "run30" / "grid.png"))

    state3 = train(train_pairs,
                   TrainConfig(epochs=3, seed=42, model=ModelConfig(image_size=32)),
                   str(base / "run3"))
    report3 = evaluate(state3, test_pairs)

    return {
        "report30": report30,
        "report3": report3,
        "elapsed": time.perf_counter() - t0,
        "n_train": len(train_pairs),
        "n_test": len(test_pairs),
        "steps30": state30.step,
    }


class TestCriterion4DeskTraining:
    def test_criterion_4_training_efficacy(self, desk_experiment):
        report = desk_experiment["report30"]
        psnr_gen = report.summary["psnr_db_mean"]
        psnr_base = report.baseline["psnr_db_mean"]
        ssim_gen = report.summary["ssim_mean"]
        ssim_base = report.baseline["ssim_mean"]

        assert desk_experiment["steps30"] == 30 * desk_experiment["n_train"]
        assert psnr_gen >= psnr_base + 1.0, \
            f"psnr {psnr_gen:.2f} vs baseline {psnr_base:.2f}: gain < 1.0 dB"
        assert ssim_gen > ssim_base, \
            f"ssim {ssim_gen:.4f} did not improve over baseline {ssim_base:.4f}"
        assert desk_experiment["elapsed"] <= 1800, \
            f"experiment took {desk_experiment['elapsed']:.0f}s (target 1800s)"

        announce(4, f"30-epoch psnr {psnr_gen:.2f} dB vs baseline {psnr_base:.2f} "
                    f"(+{psnr_gen - psnr_base:.2f}, need >= +1.0); ssim {ssim_gen:.4f} "
                    f"vs {ssim_base:.4f}; total {desk_experiment['elapsed']:.0f}s "
                    f"(target 1800s)")


class TestCriterion5EpochContrast:
    def test_criterion_5_thirty_beats_three_epochs(self, desk_experiment):
        p30 = desk_experiment["report30"].summary["psnr_db_mean"]
        p3 = desk_experiment["report3"].summary["psnr_db_mean"]
        assert p30 > p3, f"30-epoch psnr {p30:.2f} not above 3-epoch {p3:.2f}"
        announce(5, f"psnr 30-epoch {p30:.2f} dB > 3-epoch {p3:.2f} dB (strict)")


# ---------------------------------------------------------------------------
# criterion 6: augmentation count and group structure


class TestCriterion6Augmentation:
    def test_criterion_6_augmentation_count(self):
        rng = np.random.default_rng(6)
        pairs = []
        for i in range(450):
            cloudy = rng.uniform(-1, 1, (3, 8, 8)).astype(np.float32)
            clean = rng.uniform(-1, 1, (3, 8, 8)).astype(np.float32)
            pairs.append(ImagePair(f"p{i:03d}", cloudy, clean))

        expanded, _ = augment(pairs, ["rot90", "flip_h", "flip_v"], seed=0)
        assert len(expanded) == 1800
        assert len({p.id for p in expanded}) == 1800
        for p in expanded:
            assert p.cloudy.shape == p.clean.shape == (3, 8, 8)

        probe = pairs[17]
        flipped, _ = apply_augment(probe, "flip_h", np.random.default_rng(0))
        restored, _ = apply_augment(flipped, "flip_h", np.random.default_rng(0))
        assert np.array_equal(restored.cloudy, probe.cloudy)
        assert np.array_equal(restored.clean, probe.clean)
        current = probe
        for _ in range(4):
            current, _ = apply_augment(current, "rot90", np.random.default_rng(0))
        assert np.array_equal(current.cloudy, probe.cloudy)
        assert np.array_equal(current.clean, probe.clean)

        announce(6, "450 pairs x {rot90, flip_h, flip_v} -> exactly 1800 aligned pairs; "
                    "involution and rotation-group restorations bitwise")


# ---------------------------------------------------------------------------
# criterion 7: determinism & persistence


class TestCriterion7Determinism:
    def test_criterion_7_determinism_and_persistence(self, tmp_path):
        data_root = str(tmp_path / "data")
        synth_dataset(4, 16, seed=9, out=data_root)

        env_cmd = [sys.executable, "-m", "attngan.cli", "train",
                   "--data", data_root, "--size", "16", "--epochs", "2", "--seed", "9"]
        for sub in ("a", "b"):
            result = subprocess.run(env_cmd + ["--out", str(tmp_path / sub)],
                                    capture_output=True, text=True)
            assert result.returncode == 0, result.stderr
        bytes_a = (tmp_path / "a" / "checkpoint_final.agcr").read_bytes()
        bytes_b = (tmp_path / "b" / "checkpoint_final.agcr").read_bytes()
        assert bytes_a == bytes_b

        # round-trip -> bitwise-identical inference
        state = load_checkpoint(str(tmp_path / "a" / "checkpoint_final.agcr"))
        resaved = str(tmp_path / "resaved.agcr")
        attngan.save_checkpoint(state, resaved)
        assert (tmp_path / "resaved.agcr").read_bytes() == bytes_a
        reloaded = load_checkpoint(resaved)
        x = Tensor(np.random.default_rng(3).uniform(-1, 1, (1, 3, 16, 16)).astype(np.float32))
        assert np.array_equal(state.model.gen_xy(x).fused.data,
                              reloaded.model.gen_xy(x).fused.data)

        # truncation -> rejected, nothing constructed
        truncated = tmp_path / "truncated.agcr"
        truncated.write_bytes(bytes_a[:-3])
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(str(truncated))

        announce(7, "two seeded runs byte-identical; save/load/save byte-identical "
                    "with bitwise-equal inference; truncated checkpoint rejected")


# ---------------------------------------------------------------------------
# criterion 8: regression-mode smoke


class TestCriterion8RegressionSmoke:
    def test_criterion_8_pixel_only_regression(self, tmp_path):
        t0 = time.perf_counter()
        data_root = str(tmp_path / "data")
        synth_dataset(4, 32, seed=8, out=data_root)
        _, pairs = load_dataset(data_root, 32)

        cfg = TrainConfig(
            epochs=50,  # 4 pairs x 50 epochs = 200 steps
            seed=8,
            weights=LossWeights(lambda_adv=0, lambda_att_adv=0, lambda_cyc=0, lambda_pix=1),
            model=ModelConfig(image_size=32),
        )
        train(pairs, cfg, str(tmp_path / "run"))

        import json
        with open(tmp_path / "run" / "train_log.jsonl") as f:
            records = [json.loads(line) for line in f]
        assert len(records) == 200
        pix = [r["pix_xy"] + r["pix_yx"] for r in records]
        start = float(np.mean(pix[:4]))    # first epoch over the 4 pairs
        end = float(np.mean(pix[-4:]))     # last epoch
        elapsed = time.perf_counter() - t0
        assert end <= 0.5 * start, \
            f"pixel loss only fell {start:.4f} -> {end:.4f} (need >= 50% drop)"
        assert elapsed < 60, f"regression smoke took {elapsed:.0f}s (limit 60s)"

        announce(8, f"pixel loss {start:.4f} -> {end:.4f} "
                    f"({100 * (1 - end / start):.0f}% drop, need >= 50%) in {elapsed:.0f}s")
