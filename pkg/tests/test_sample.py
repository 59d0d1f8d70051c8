from dataclasses import replace

import numpy as np
import pytest

from iir_edit import iirm
from iir_edit import model as M
from iir_edit import sample as S
from iir_edit.schedule import make_schedule, q_sample
from iir_edit.text import tokenize


@pytest.fixture(scope="module")
def sched():
    return make_schedule(1000)


@pytest.fixture(scope="module")
def state():
    return M.init_state(M.ModelConfig(image_size=16),
                        {"T": 1000, "canny_low": 30.0, "canny_high": 45.0},
                        seed=8)


def _request(seed=0, **kw):
    rng = np.random.default_rng(41)
    img = rng.random((16, 16, 3)).astype(np.float32)
    mask = np.zeros((16, 16), np.uint8)
    mask[4:10, 4:10] = 1
    base = dict(image=img, roi=mask, prompt=tokenize("a red circle on solid background"),
                k=0, cfg_scale=2.0, ddim_steps=4, seed=seed)
    base.update(kw)
    return S.EditRequest(**base)


class TestDdimStep:
    @pytest.mark.parametrize("t", [1, 17, 400, 1000])
    def test_inversion_identity(self, sched, t):
        # With the true noise as prediction, the clean estimate is exact.
        rng = np.random.default_rng(t)
        x0 = rng.random((8, 8, 3))
        eps = rng.standard_normal((8, 8, 3))
        x_t = q_sample(x0, t, eps, sched)
        rec = S.ddim_step(x_t, eps, t, 0, sched)
        assert np.max(np.abs(rec - x0)) < 1e-5

    def test_terminal_returns_estimate(self, sched):
        x0 = np.full((4, 4, 3), 0.3)
        eps = np.zeros_like(x0)
        x_t = q_sample(x0, 100, eps, sched)
        assert np.allclose(S.ddim_step(x_t, eps, 100, 0, sched), x0)

    def test_reprojection(self, sched):
        # Zero predicted noise: x_{t_prev} = sqrt(abar_prev) * x0_hat exactly.
        x0 = np.full((4, 4, 3), 0.5)
        eps = np.zeros_like(x0)
        x_t = q_sample(x0, 500, eps, sched)
        out = S.ddim_step(x_t, eps, 500, 100, sched)
        assert np.allclose(out, np.sqrt(sched.alpha_bar(100)) * x0)

    def test_bad_ordering(self, sched):
        x = np.zeros((4, 4, 3))
        with pytest.raises(ValueError):
            S.ddim_step(x, x, 10, 10, sched)
        with pytest.raises(ValueError):
            S.ddim_step(x, x, 10, 20, sched)


class TestTimesteps:
    def test_uniform_stride_endpoints(self):
        pairs = S.ddim_timesteps(1000, 20)
        assert pairs[0][0] == 1000
        assert pairs[-1] == (1, 0)
        assert len(pairs) == 20
        ts = [t for t, _ in pairs]
        assert ts == sorted(ts, reverse=True)

    def test_degenerate_single_step(self):
        assert S.ddim_timesteps(1000, 1) == [(1000, 0)] or \
            S.ddim_timesteps(1000, 1)[-1][1] == 0


class TestEdit:
    def test_deterministic(self, state):
        req = _request(seed=5)
        a = S.edit(req, state)
        b = S.edit(req, state)
        assert np.array_equal(a, b)

    def test_output_range_and_shape(self, state):
        out = S.edit(_request(), state)
        assert out.shape == (16, 16, 3)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_condition_assembled_once(self, state, monkeypatch):
        calls = {"n": 0}
        real = iirm.assemble_condition

        def counting(*args, **kw):
            calls["n"] += 1
            return real(*args, **kw)

        monkeypatch.setattr(iirm, "assemble_condition", counting)
        S.edit(_request(ddim_steps=6), state)
        assert calls["n"] == 1

    def test_seed_changes_output(self, state):
        a = S.edit(_request(seed=1), state)
        b = S.edit(_request(seed=2), state)
        assert not np.array_equal(a, b)

    def test_request_validation(self):
        with pytest.raises(ValueError):
            _request(ddim_steps=0)
        with pytest.raises(ValueError):
            _request(cfg_scale=-1.0)
        with pytest.raises(ValueError):
            _request(k=-2)


class TestAblateGrid:
    def test_singleton_matches_edit(self, state):
        req = _request(seed=3)
        grid = S.ablate_noise_grid(req, state, [0])
        single = S.edit(replace(req, k=0), state)
        assert len(grid) == 1
        assert grid[0][0] == 0
        assert np.array_equal(grid[0][1], single)

    def test_order_preserved(self, state):
        ks = [100, 0, 250]
        grid = S.ablate_noise_grid(_request(), state, ks)
        assert [k for k, _ in grid] == ks
