import numpy as np
import pytest

from cginvert.drcgnet import (
    NetConfig,
    TrainConfig,
    evaluate_mae,
    forward,
    init_params,
    load_checkpoint,
    mae,
    save_checkpoint,
    train,
)
from cginvert.errors import NanLossError
from cginvert.data_metrics import gen_dataset
from cginvert.sensing import build_radon


def toy_setup(n_samples=4, seed=11):
    model = build_radon(8, 6)
    ds = gen_dataset("synthetic", model, 60.0, n_samples, seed=seed)
    cfg = NetConfig(K=2, J=2, depth=2, kernel=3, channels=(8, 1),
                    variant="ista", cov_kind="scaled_identity",
                    gamma_max=1.0, refine=True)
    return model, ds, cfg


class TestTrain:
    def test_zero_learning_rate_keeps_parameters(self):
        model, ds, cfg = toy_setup()
        tcfg = TrainConfig(lr=0.0, epochs=3, seed=0)
        before = init_params(cfg, model.n, seed=0, cov_init=0.1)
        params, _ = train(ds.pairs, model, cfg, tcfg, cov_init=0.1)
        for key in before.values:
            assert np.array_equal(params.values[key], before.values[key]), key

    def test_loss_decreases(self):
        model, ds, cfg = toy_setup()
        tcfg = TrainConfig(lr=2e-3, epochs=40, seed=0)
        init_mae = evaluate_mae(
            ds.pairs, model, init_params(cfg, model.n, seed=0, cov_init=0.1))
        _, hist = train(ds.pairs, model, cfg, tcfg, cov_init=0.1)
        assert hist["train_mae"][-1] < 0.7 * init_mae

    def test_deterministic_history(self):
        model, ds, cfg = toy_setup()
        tcfg = TrainConfig(lr=1e-3, epochs=5, seed=3)
        _, h1 = train(ds.pairs, model, cfg, tcfg, cov_init=0.1)
        _, h2 = train(ds.pairs, model, cfg, tcfg, cov_init=0.1)
        assert h1["train_mae"] == h2["train_mae"]

    def test_nan_loss_aborts_with_dump(self):
        model, ds, cfg = toy_setup()
        tcfg = TrainConfig(lr=1e12, epochs=50, seed=0)
        with pytest.raises(NanLossError) as info:
            train(ds.pairs, model, cfg, tcfg, cov_init=0.1)
        assert "epoch" in info.value.dump

    def test_early_stopping_returns_best(self):
        model, ds, cfg = toy_setup(n_samples=6)
        tcfg = TrainConfig(lr=5e-3, epochs=30, seed=0, patience=3)
        params, hist = train(ds.pairs[:4], model, cfg, tcfg,
                             val_pairs=ds.pairs[4:], cov_init=0.1)
        vm = evaluate_mae(ds.pairs[4:], model, params)
        assert vm == pytest.approx(min(hist["val_mae"]), rel=1e-12)

    def test_batching_covers_all_samples(self):
        model, ds, cfg = toy_setup(n_samples=5)
        tcfg = TrainConfig(lr=1e-3, epochs=2, batch=2, seed=0)
        _, hist = train(ds.pairs, model, cfg, tcfg, cov_init=0.1)
        assert len(hist["train_mae"]) == 2


class TestMae:
    def test_formula(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        b = np.array([1.5, 2.0, 2.0, 4.0])
        assert mae(a, b) == pytest.approx((0.5 + 1.0) / 4.0)


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        model, ds, cfg = toy_setup()
        params = init_params(cfg, model.n, seed=9, cov_init=0.1)
        tcfg = TrainConfig(lr=1e-3, epochs=1, seed=9)
        save_checkpoint(tmp_path / "ck", params, train_cfg=tcfg, epoch=1,
                        losses={"train_mae": [0.5]})
        loaded, manifest = load_checkpoint(tmp_path / "ck")
        assert manifest["net"] == cfg.to_dict()
        assert manifest["epoch"] == 1
        for key in params.values:
            assert np.array_equal(loaded.values[key], params.values[key])

    def test_blob_is_little_endian_in_declared_order(self, tmp_path):
        model, ds, cfg = toy_setup()
        params = init_params(cfg, model.n, seed=2, cov_init=0.1)
        save_checkpoint(tmp_path / "ck", params)
        import json

        manifest = json.loads((tmp_path / "ck" / "manifest.json").read_text())
        blob = np.fromfile(tmp_path / "ck" / "params.bin", dtype="<f8")
        expect = np.concatenate(
            [params.values[k].ravel() for k in manifest["order"]])
        assert np.array_equal(blob, expect)

    def test_forward_identical_after_reload(self, tmp_path):
        model, ds, cfg = toy_setup()
        params = init_params(cfg, model.n, seed=4, cov_init=0.1)
        save_checkpoint(tmp_path / "ck", params)
        loaded, _ = load_checkpoint(tmp_path / "ck")
        y = ds.pairs[0][0]
        a, _ = forward(y, model, params, want_tape=False)
        b, _ = forward(y, model, loaded, want_tape=False)
        assert np.array_equal(a, b)
