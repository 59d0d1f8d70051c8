import csv
from dataclasses import replace

import numpy as np
import pytest
import torch

from iir_edit import model as M
from iir_edit import train as T
from iir_edit.data import ShapesDataset, gen_dataset
from iir_edit.schedule import make_schedule
from iir_edit.text import tokenize


@pytest.fixture(scope="module")
def corpus16(tmp_path_factory):
    root = tmp_path_factory.mktemp("micro")
    gen_dataset(16, 16, seed=2, out_dir=root)
    return ShapesDataset(root)


@pytest.fixture(scope="module")
def sched():
    return make_schedule(1000)


def _batch(dataset, n):
    out = []
    for i in range(n):
        img, mask, caption = dataset.load(i % len(dataset))
        out.append((img, mask, tokenize(caption)))
    return out


def _cfg(dataset_root="", **kw):
    base = dict(dataset=str(dataset_root), out_dir="", image_size=16,
                total_steps=5, batch_size=4, ckpt_every=100,
                canny_low=30.0, canny_high=45.0)
    base.update(kw)
    return T.TrainConfig(**base)


class TestTrainingLoss:
    def test_perfect_predictor_zero_loss(self, corpus16, sched, monkeypatch):
        cfg = _cfg()
        batch = _batch(corpus16, 4)
        rng = np.random.default_rng(0)
        draws = T.draw_batch_noise(rng, 4, 16, cfg)
        state = M.init_state(M.ModelConfig(image_size=16), seed=0)
        captured = {}
        real = T.predict_noise

        def oracle(x_t, t, text, feats, st):
            return captured["eps"]

        eps = torch.from_numpy(np.stack(draws.eps)).permute(0, 3, 1, 2).float()
        captured["eps"] = eps
        monkeypatch.setattr(T, "predict_noise", oracle)
        loss = T.training_loss(batch, draws, state, sched, cfg)
        assert loss.item() == 0.0

    def test_zero_predictor_unit_loss(self, corpus16, sched, monkeypatch):
        cfg = _cfg(batch_size=16)
        batch = _batch(corpus16, 16)
        draws = T.draw_batch_noise(np.random.default_rng(1), 16, 16, cfg)
        state = M.init_state(M.ModelConfig(image_size=16), seed=0)
        monkeypatch.setattr(T, "predict_noise",
                            lambda x_t, t, text, feats, st: torch.zeros_like(x_t))
        loss = T.training_loss(batch, draws, state, sched, cfg)
        # 16*16*16*3 = 12288 >= 1e4 squared standard normals; mean ~ 1.
        assert abs(loss.item() - 1.0) < 0.05

    def test_empty_batch_rejected(self, sched):
        cfg = _cfg()
        with pytest.raises(ValueError):
            T.training_loss([], None, None, sched, cfg)

    def test_batch_order_permutation_invariant(self, corpus16, sched):
        cfg = _cfg(batch_size=6)
        batch = _batch(corpus16, 6)
        draws = T.draw_batch_noise(np.random.default_rng(2), 6, 16, cfg)
        state = M.init_state(M.ModelConfig(image_size=16), seed=1)
        loss_a = T.training_loss(batch, draws, state, sched, cfg).item()
        perm = [3, 1, 5, 0, 4, 2]
        pbatch = [batch[i] for i in perm]
        pdraws = T.NoiseDraws(t=draws.t[perm], k=draws.k[perm],
                              eps=draws.eps[perm], cond_seed=draws.cond_seed[perm],
                              drop_text=draws.drop_text[perm])
        loss_b = T.training_loss(pbatch, pdraws, state, sched, cfg).item()
        assert abs(loss_a - loss_b) < 1e-6

    def test_gradient_matches_finite_differences(self, corpus16, sched):
        # Central differences on a sampled 10-parameter subset, 16x16.
        cfg = _cfg(batch_size=2)
        batch = _batch(corpus16, 2)
        draws = T.draw_batch_noise(np.random.default_rng(3), 2, 16, cfg)
        state = M.init_state(M.ModelConfig(image_size=16), seed=2)
        state.model.double()

        loss = T.training_loss(batch, draws, state, sched, cfg)
        loss.backward()

        rng = np.random.default_rng(7)
        params = [p for p in state.model.parameters() if p.grad is not None
                  and p.grad.abs().max() > 1e-12]
        h = 1e-4
        checked = 0
        for _ in range(10):
            p = params[rng.integers(len(params))]
            flat_idx = int(rng.integers(p.numel()))
            with torch.no_grad():
                orig = p.view(-1)[flat_idx].item()
                p.view(-1)[flat_idx] = orig + h
                lp = T.training_loss(batch, draws, state, sched, cfg).item()
                p.view(-1)[flat_idx] = orig - h
                lm = T.training_loss(batch, draws, state, sched, cfg).item()
                p.view(-1)[flat_idx] = orig
            fd = (lp - lm) / (2 * h)
            analytic = p.grad.view(-1)[flat_idx].item()
            denom = max(abs(fd), abs(analytic), 1e-8)
            assert abs(fd - analytic) / denom <= 1e-3, (fd, analytic)
            checked += 1
        assert checked == 10


class TestTextDropout:
    def test_empirical_fraction(self):
        cfg = _cfg(text_dropout=0.1)
        draws = T.draw_batch_noise(np.random.default_rng(5), 10_000, 4, cfg)
        frac = draws.drop_text.mean()
        sigma = np.sqrt(0.1 * 0.9 / 10_000)
        assert abs(frac - 0.1) < 3 * sigma

    def test_validation(self):
        with pytest.raises(ValueError):
            _cfg(text_dropout=1.5)
        with pytest.raises(ValueError):
            _cfg(K=2000)


class TestTrainLoop:
    def test_deterministic_loss_log(self, corpus16, tmp_path):
        logs = []
        for name in ("a", "b"):
            cfg = _cfg(corpus16.root, out_dir=str(tmp_path / name),
                       total_steps=8, seed=9)
            T.train(cfg, corpus16)
            with open(tmp_path / name / "loss.csv") as f:
                rows = list(csv.reader(f))[1:]
            logs.append([(r[0], r[1]) for r in rows])
        assert logs[0] == logs[1]
        assert len(logs[0]) == 8

    def test_checkpoint_roundtrip_byte_identical(self, corpus16, tmp_path):
        from iir_edit.checkpoint import load_checkpoint, save_checkpoint
        cfg = _cfg(corpus16.root, out_dir=str(tmp_path / "run"), total_steps=3,
                   seed=4)
        T.train(cfg, corpus16)
        ckpt = tmp_path / "run" / T.LATEST_CKPT
        state, opt = load_checkpoint(
            ckpt, optimizer_factory=lambda p: torch.optim.Adam(p, lr=cfg.lr))
        save_checkpoint(tmp_path / "resaved.ckpt", state, opt)
        assert ckpt.read_bytes() == (tmp_path / "resaved.ckpt").read_bytes()

    def test_resume_continues_step_counter(self, corpus16, tmp_path):
        out_a = tmp_path / "straight"
        out_b = tmp_path / "resumed"
        T.train(_cfg(corpus16.root, out_dir=str(out_a), total_steps=6, seed=6),
                corpus16)
        T.train(_cfg(corpus16.root, out_dir=str(out_b), total_steps=3, seed=6),
                corpus16)
        T.train(_cfg(corpus16.root, out_dir=str(out_b), total_steps=6, seed=6),
                corpus16)
        with open(out_a / "loss.csv") as f:
            rows_a = [(r[0], r[1]) for r in list(csv.reader(f))[1:]]
        with open(out_b / "loss.csv") as f:
            rows_b = [(r[0], r[1]) for r in list(csv.reader(f))[1:]]
        assert [r[0] for r in rows_b] == [str(i) for i in range(1, 7)]
        assert rows_a == rows_b
