import itertools

import numpy as np
import pytest

from scenemap.diffusion import (
    DenoiserConfig,
    DiffusionTrainConfig,
    NoiseSchedule,
    ReferenceDenoiser,
    build_schedule,
    forward_marginal,
    kl_categorical,
    loss_mdm,
    one_step,
    posterior,
    sample_from,
    sample_layout,
    sample_layouts,
    train_denoiser,
)
from scenemap.diffusion.loss import Batch, noisy_sample
from scenemap.diffusion.training import write_loss_log
from scenemap.errors import CheckpointError, ConfigError, DataError, DistributionError, ModeMismatchError, StepError
from scenemap.layout import ArchMask, ConditionKind, ConditionSpec, SemanticMap, one_hot


def fixed_schedule(alpha_bars) -> NoiseSchedule:
    """Schedule with prescribed alpha_bar[1..T]."""
    ab = np.concatenate([[1.0], np.asarray(alpha_bars, float)])
    alpha = np.concatenate([[1.0], ab[1:] / ab[:-1]])
    return NoiseSchedule("fixed", 1 - alpha, alpha, ab)


def transition(alpha, K):
    return alpha * np.eye(K) + (1 - alpha) / K


class TestSchedule:
    @pytest.mark.parametrize("kind,T", [("cosine", 100), ("cosine", 5), ("linear", 1000)])
    def test_alpha_bar_start_and_monotone(self, kind, T):
        s = build_schedule(T, kind)
        assert s.alpha_bar[0] == 1.0
        assert np.all(np.diff(s.alpha_bar) < 0)
        assert np.all((s.beta[1:] > 0) & (s.beta[1:] < 1))

    def test_cosine_terminal(self):
        s = build_schedule(100)
        assert s.alpha_bar[100] < 0.01
        t = np.arange(101)
        f = np.cos((t / 100 + 0.008) / 1.008 * np.pi / 2) ** 2
        assert np.allclose(s.alpha_bar[1:-1], f[1:-1] / f[0], rtol=1e-9)

    def test_linear_range(self):
        s = build_schedule(1000, "linear")
        assert s.beta[1] == pytest.approx(1e-4) and s.beta[1000] == pytest.approx(0.02)

    def test_linear_short_schedule_is_rejected(self):
        # 100 linear steps from 1e-4 to 0.02 leave alpha_bar near 0.36
        with pytest.raises(ConfigError):
            build_schedule(100, "linear")

    def test_errors(self):
        with pytest.raises(ConfigError):
            build_schedule(1)
        with pytest.raises(ConfigError):
            build_schedule(10, "sigmoid")
        with pytest.raises(StepError):
            build_schedule(10).check_step(11)


class TestForward:
    def test_identity_and_uniform(self):
        x0 = one_hot(np.array([[2, 0]]), 4)
        s = fixed_schedule([1.0, 0.0])
        assert np.array_equal(forward_marginal(x0, 1, s), x0)
        assert np.allclose(forward_marginal(x0, 2, s), 0.25)

    def test_mixture_value(self):
        s = fixed_schedule([0.5])
        out = forward_marginal(one_hot(np.array([2]), 4), 1, s)
        assert np.allclose(out, [[0.125, 0.125, 0.625, 0.125]])

    def test_step_range(self):
        s = build_schedule(5)
        with pytest.raises(StepError):
            forward_marginal(np.eye(3), 0, s)
        with pytest.raises(StepError):
            forward_marginal(np.eye(3), 6, s)

    def test_empirical_frequencies(self):
        rng = np.random.default_rng(0)
        s = build_schedule(20)
        K = 4
        x0 = one_hot(np.full(100_000, 1), K)
        probs = forward_marginal(x0, 7, s)
        draws = sample_from(probs, rng).mean(axis=0)
        assert np.abs(draws - probs[0]).sum() < 0.01

    def test_marginal_consistency(self):
        rng = np.random.default_rng(1)
        s = build_schedule(10)
        K, n, t = 5, 100_000, 6
        x = one_hot(np.full(n, 3), K)
        for tau in range(1, t + 1):
            x = sample_from(one_step(x, tau, s), rng)
        target = forward_marginal(one_hot(np.array([3]), K), t, s)[0]
        assert np.abs(x.mean(axis=0) - target).sum() < 0.02


class TestSampling:
    def test_degenerate(self, rng):
        p = np.zeros((50, 3))
        p[:, 2] = 1
        assert np.all(sample_from(p, rng).argmax(-1) == 2)

    def test_uniform_binary(self):
        draws = sample_from(np.full((100_000, 2), 0.5), np.random.default_rng(2))
        assert abs(draws[:, 0].mean() - 0.5) < 0.01

    def test_seeded(self):
        p = np.random.default_rng(3).dirichlet(np.ones(6), size=(8, 8))
        a = sample_from(p, np.random.default_rng(9))
        b = sample_from(p, np.random.default_rng(9))
        assert np.array_equal(a, b)


class TestPosterior:
    @pytest.mark.parametrize("K,T", [(2, 5), (3, 5), (4, 4)])
    def test_bayes_enumeration(self, K, T):
        s = build_schedule(T)
        worst = 0.0
        for t in range(2, T + 1):
            Qt = transition(s.alpha[t], K)
            Qbar = transition(s.alpha_bar[t - 1], K)
            for xt, x0 in itertools.product(range(K), range(K)):
                # q(x_{t-1} = j | x_t, x0) proportional to q(x_t | j) q(j | x0)
                joint = np.array([Qt[j, xt] * Qbar[x0, j] for j in range(K)])
                oracle = joint / joint.sum()
                got = posterior(np.eye(K)[xt], np.eye(K)[x0], t, s)
                worst = max(worst, np.abs(got - oracle).max())
        assert worst < 1e-10

    def test_rows_normalized(self, rng):
        s = build_schedule(50)
        K = 6
        xt = np.eye(K)[rng.integers(0, K, size=(5, 7))]
        x0 = rng.dirichlet(np.ones(K), size=(5, 7))
        for t in (1, 2, 17, 50):
            assert np.allclose(posterior(xt, x0, t, s).sum(-1), 1.0, atol=1e-9)

    def test_t1_returns_x0(self, rng):
        s = build_schedule(10)
        x0 = rng.dirichlet(np.ones(4), size=3)
        assert np.array_equal(posterior(np.eye(4)[[0, 1, 2]], x0, 1, s), x0)

    def test_batched_t(self, rng):
        s = build_schedule(10)
        xt = np.eye(3)[rng.integers(0, 3, size=(3, 2, 2))]
        x0 = rng.dirichlet(np.ones(3), size=(3, 2, 2))
        t = np.array([1, 4, 9])
        out = posterior(xt, x0, t, s)
        for b in range(3):
            assert np.allclose(out[b], posterior(xt[b], x0[b], int(t[b]), s))

    def test_no_noise_step_keeps_xt(self):
        s = fixed_schedule([0.6, 0.6])  # alpha_2 = 1
        out = posterior(np.eye(4)[[1]], np.eye(4)[[3]], 2, s)
        assert np.allclose(out, np.eye(4)[[1]])

    def test_uniform_case(self):
        s = fixed_schedule([1e-9, 1e-21])
        out = posterior(np.eye(5)[[2]], np.full((1, 5), 0.2), 2, s)
        assert np.allclose(out, 0.2, atol=1e-6)

    def test_step_errors(self):
        with pytest.raises(StepError):
            posterior(np.eye(3), np.eye(3), 0, build_schedule(5))


class TestKL:
    def test_identity(self, rng):
        p = rng.dirichlet(np.ones(5))
        assert kl_categorical(p, p) == pytest.approx(0.0, abs=1e-15)

    def test_closed_form(self):
        assert kl_categorical([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2))

    def test_nonnegative(self, rng):
        p = rng.dirichlet(np.ones(6), size=1000)
        q = rng.dirichlet(np.ones(6), size=1000)
        assert np.all(kl_categorical(p, q) >= 0)

    def test_floor_on_zero_q(self):
        assert kl_categorical([1.0, 0.0], [0.0, 1.0]) == pytest.approx(np.log(1e12))

    def test_rejects_unnormalized(self):
        with pytest.raises(DistributionError):
            kl_categorical([0.5, 0.2], [0.5, 0.5])


# -- denoiser ---------------------------------------------------------------


class OracleDenoiser:
    """Always returns the one-hot of a fixed map."""

    def __init__(self, target: SemanticMap, K: int):
        self.config = DenoiserConfig(K=K)
        self.target = target.cells

    def check_kind(self, kind):
        pass

    def forward(self, x_idx, t, mask, room, kind):
        B = np.asarray(x_idx).shape[0]
        logits = np.where(np.eye(self.config.K)[self.target], 50.0, -50.0)
        return np.broadcast_to(logits, (B,) + logits.shape).copy(), None

    def predict_indices(self, x_idx, t, mask, room, kind):
        B = np.asarray(x_idx).shape[0]
        return np.broadcast_to(np.eye(self.config.K)[self.target], (B,) + self.target.shape + (self.config.K,))


def small_model(dtype="float64", **kw):
    cfg = dict(K=12, d=4, radius=1, hidden=8, T=20, dtype=dtype, pool=4, coarse_radius=1)
    cfg.update(kw)
    return ReferenceDenoiser(DenoiserConfig(**cfg), seed=3)


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


class TestLoss:
    def test_oracle_loss_is_zero(self, corpus):
        sc = corpus[0]
        s = build_schedule(100)
        oracle = OracleDenoiser(sc.layout.map, 12)
        cond = ConditionSpec.from_arch(sc.arch, "arch", sc.room_type)
        for t in (2, 10, 50, 100):
            loss, _ = loss_mdm(oracle, sc.layout.map, t, cond, s, np.random.default_rng(t), need_grad=False)
            assert loss == 0.0

    def test_t1_is_nll(self, corpus):
        sc = corpus[0]
        s = build_schedule(10)
        m = small_model(T=10)
        cond = ConditionSpec.from_arch(sc.arch, "arch", sc.room_type)
        x_t = sc.layout.map.cells
        loss, _ = loss_mdm(m, sc.layout.map, 1, cond, s, x_t=x_t, need_grad=False)
        probs = m.predict(np.eye(12)[x_t], 1, cond)
        nll = -np.log(np.take_along_axis(probs, x_t[..., None], -1)).mean()
        assert loss == pytest.approx(nll, rel=1e-10)

    def test_matches_pixel_kl(self, corpus):
        sc = corpus[1]
        s = build_schedule(20)
        m = small_model()
        cond = ConditionSpec.from_arch(sc.arch, "floor", sc.room_type)
        x_t = noisy_sample(sc.layout.map.cells[None], np.array([7]), 12, s, np.random.default_rng(0))[0]
        loss, _ = loss_mdm(m, sc.layout.map, 7, cond, s, x_t=x_t, need_grad=False)
        x0_hat = m.predict(np.eye(12)[x_t], 7, cond)
        q = posterior(np.eye(12)[x_t], np.eye(12)[sc.layout.map.cells], 7, s)
        p = posterior(np.eye(12)[x_t], x0_hat, 7, s)
        assert loss == pytest.approx(kl_categorical(q, p, validate=False).mean(), rel=1e-9)

    @pytest.mark.parametrize("aux, self_cond", [(0.0, False), (0.05, True)])
    def test_gradients_match_finite_differences(self, corpus, aux, self_cond):
        rng = np.random.default_rng(0)
        s = build_schedule(20)
        m = small_model(self_cond=self_cond)
        scenes = corpus[:4]
        conds = [ConditionSpec.from_arch(sc.arch, k, sc.room_type) for sc, k in zip(scenes, ["none", "floor", "arch", "arch"])]
        batch = Batch.from_conditions([sc.layout.map for sc in scenes], conds)
        t = np.array([1, 3, 11, 20])
        x_t = noisy_sample(batch.x0, t, 12, s, rng)
        prev = rng.dirichlet(np.ones(12), size=batch.x0.shape) if self_cond else None
        kw = dict(x_t=x_t, aux_weight=aux, x0_prev=prev)
        _, grads = loss_mdm(m, batch, t, None, s, **kw)
        names = sorted(m.params)
        worst, checked = 0.0, 0
        for i in range(120):
            name = names[i % len(names)]
            arr = m.params[name]
            idx = tuple(rng.integers(0, n) for n in arr.shape)
            if name in ("emb_room", "emb_kind") and abs(grads[name][idx]) < 1e-12:
                idx = (int(batch.room[0]) if name == "emb_room" else int(batch.kind[0]),) + idx[1:]
            old = arr[idx]
            arr[idx] = old + 1e-5
            up = loss_mdm(m, batch, t, None, s, need_grad=False, **kw)[0]
            arr[idx] = old - 1e-5
            down = loss_mdm(m, batch, t, None, s, need_grad=False, **kw)[0]
            arr[idx] = old
            worst = max(worst, relative_error((up - down) / 2e-5, grads[name][idx]))
            checked += 1
        assert checked >= 100
        assert worst < 1e-4


class TestDenoiser:
    def test_output_is_distribution_and_deterministic(self, corpus):
        sc = corpus[2]
        m = small_model(dtype="float32")
        cond = ConditionSpec.from_arch(sc.arch, "arch", sc.room_type)
        x = np.eye(12)[sc.layout.map.cells]
        a = m.predict(x, 5, cond)
        b = m.predict(x, 5, cond)
        assert np.allclose(a.sum(-1), 1.0, atol=1e-9)
        assert np.array_equal(a, b)

    def test_self_conditioning_input(self, corpus):
        m = small_model(self_cond=True)
        sc = corpus[0]
        x = sc.layout.map.cells[None]
        args = (x, [5], sc.arch.cells[None], [sc.room_type], [2])
        zeros = m.predict_indices(*args, np.zeros(x.shape + (12,)))
        assert np.array_equal(m.predict_indices(*args), zeros)
        assert not np.allclose(m.predict_indices(*args, np.eye(12)[x]), zeros)
        assert "emb_sc" not in small_model().params

    def test_mode_contract(self, corpus):
        sc = corpus[0]
        m = small_model(mode="arch")
        m.check_kind("arch")
        with pytest.raises(ModeMismatchError) as err:
            m.check_kind("floor")
        assert isinstance(err.value, ConfigError) and err.value.exit_code == 4
        cond = ConditionSpec.from_arch(sc.arch, "none", sc.room_type)
        with pytest.raises(ModeMismatchError):
            m.predict(np.eye(12)[sc.layout.map.cells], 3, cond)

    def test_mixed_serves_all_kinds(self, corpus):
        sc = corpus[0]
        m = small_model()
        outs = [m.predict(np.eye(12)[sc.layout.map.cells], 3, ConditionSpec.from_arch(sc.arch, k, sc.room_type))
                for k in ("none", "floor", "arch")]
        assert not np.allclose(outs[0], outs[2])

    def test_checkpoint_round_trip(self, tmp_path, corpus):
        m = small_model(dtype="float32")
        m.save(tmp_path / "m.json", {"kind": "cosine", "T": 20}, "abc", {"seed": 1})
        back, meta = ReferenceDenoiser.load(tmp_path / "m.json")
        assert meta["palette_hash"] == "abc" and meta["schedule"]["T"] == 20
        for k in m.params:
            assert np.array_equal(back.params[k], m.params[k]) and back.params[k].dtype == m.params[k].dtype
        m.save(tmp_path / "m2.json", {"kind": "cosine", "T": 20}, "abc", {"seed": 1})
        assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()

    def test_checkpoint_errors(self, tmp_path):
        (tmp_path / "bad.json").write_text("{}")
        with pytest.raises(CheckpointError):
            ReferenceDenoiser.load(tmp_path / "bad.json")


class TestSampler:
    def test_oracle_reproduces_target(self, corpus):
        sc = corpus[3]
        s = build_schedule(100)
        cond = ConditionSpec.from_arch(sc.arch, "arch", sc.room_type)
        out = sample_layout(OracleDenoiser(sc.layout.map, 12), cond, s, np.random.default_rng(0), 0.15)
        assert out == sc.layout.map

    @pytest.mark.parametrize("self_cond", [False, True])
    def test_seeded_and_batch_independent(self, corpus, self_cond):
        s = build_schedule(20)
        m = small_model(dtype="float32", self_cond=self_cond)
        conds = [ConditionSpec.from_arch(sc.arch, "arch", sc.room_type) for sc in corpus[:3]]
        a = sample_layouts(m, conds, s, [np.random.default_rng(i) for i in range(3)], 0.15, batch_size=3)
        b = sample_layouts(m, conds, s, [np.random.default_rng(i) for i in range(3)], 0.15, batch_size=1)
        assert all(x == y for x, y in zip(a, b))

    def test_refuses_wrong_kind(self, corpus):
        m = small_model(mode="floor")
        cond = ConditionSpec.from_arch(corpus[0].arch, "arch", 0)
        with pytest.raises(ModeMismatchError):
            sample_layout(m, cond, build_schedule(20), np.random.default_rng(0))


class TestTraining:
    def test_empty_dataset(self):
        with pytest.raises(DataError):
            train_denoiser([], DiffusionTrainConfig(steps=1), K=12)

    def test_unknown_mode(self, corpus):
        with pytest.raises(ConfigError):
            train_denoiser([(corpus[0].layout.map, 0)], DiffusionTrainConfig(steps=1, mode="both"), K=12)

    def test_loss_decreases_on_toy_corpus(self, corpus, tmp_path):
        data = [(sc.layout.map, sc.room_type) for sc in corpus[:2]]
        cfg = DiffusionTrainConfig(T=20, steps=200, batch_size=4, lr=3e-3, hidden=32, d=8, log_every=50,
                                   t_buckets=1, seed=0)
        _, _, rows = train_denoiser(data, cfg, K=12, log_path=tmp_path / "loss.csv")
        losses = [r["loss"] for r in rows]
        assert losses[-1] < 0.5 * losses[0]
        text = (tmp_path / "loss.csv").read_text().splitlines()
        assert text[0] == "step,t_bucket,loss" and len(text) == len(rows) + 1

    @pytest.mark.parametrize("self_cond", [False, True])
    def test_deterministic(self, corpus, self_cond):
        data = [(sc.layout.map, sc.room_type) for sc in corpus[:3]]
        cfg = DiffusionTrainConfig(T=20, steps=5, batch_size=2, hidden=8, d=4, self_cond=self_cond)
        a, _, _ = train_denoiser(data, cfg, K=12)
        b, _, _ = train_denoiser(data, cfg, K=12)
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)

    def test_per_masktype_mode(self, corpus):
        data = [(sc.layout.map, sc.room_type) for sc in corpus[:2]]
        m, _, _ = train_denoiser(data, DiffusionTrainConfig(T=20, steps=2, batch_size=2, hidden=8, d=4, mode="arch"), K=12)
        with pytest.raises(ModeMismatchError):
            m.check_kind(ConditionKind.FLOOR)

    @pytest.mark.slow
    def test_overfits_single_sample(self, corpus):
        sc = corpus[5]
        data = [(sc.layout.map, sc.room_type)]
        cfg = DiffusionTrainConfig(T=20, steps=2000, batch_size=2, lr=3e-3, hidden=32, d=8, mode="arch", seed=1)
        m, s, _ = train_denoiser(data, cfg, K=12)
        cond = ConditionSpec.from_arch(sc.arch, "arch", sc.room_type)
        rng = np.random.default_rng(0)
        for t in range(1, 21):
            losses = [loss_mdm(m, sc.layout.map, t, cond, s, rng, need_grad=False)[0] for _ in range(3)]
            assert np.mean(losses) < 0.05, t

    def test_write_loss_log_format(self, tmp_path):
        write_loss_log([{"step": 1, "t_bucket": 0, "loss": 0.5}], tmp_path / "l.csv")
        assert (tmp_path / "l.csv").read_text() == "step,t_bucket,loss\n1,0,0.500000\n"


def test_mask_for_kind_matches_condition_rules(corpus):
    from scenemap.diffusion.training import mask_for_kind

    arch = corpus[0].arch.cells
    assert mask_for_kind(arch, 0).sum() == 0
    assert ArchMask(mask_for_kind(arch, 1)).is_binary
    assert np.array_equal(mask_for_kind(arch, 2), arch)
