import numpy as np
import pytest

from tinyfdss import network
from tinyfdss.adaptation import LambdaTable
from tinyfdss.chain import (
    ChainConfig,
    ModScheme,
    Stage,
    SymbolBlock,
    extend,
    map_symbols,
    precode,
    receiver_chain,
    time_signal,
)
from tinyfdss.filters import taps_from_coeffs
from tinyfdss.training import (
    BatchPrep,
    Checkpoint,
    TrainConfig,
    block_rng,
    chain_loss,
    config_hash,
    generate_block,
    load_checkpoint,
    prepare_batch,
    save_checkpoint,
    train,
)

SMOKE = dict(n_blocks=500, epochs=2, batch_size=32)


@pytest.fixture(scope="module")
def table():
    return LambdaTable()


class TestGenerateBlock:
    def test_fixed_seed_reproduces_first_block(self):
        config = TrainConfig(**SMOKE, seed=5)
        a = generate_block(block_rng(5, 0, 0), config)
        b = generate_block(block_rng(5, 0, 0), config)
        np.testing.assert_array_equal(a.bits, b.bits)
        assert a.scheme == b.scheme
        assert a.snr_db == b.snr_db
        assert a.model == b.model

    def test_snr_mean_over_range(self):
        config = TrainConfig(**SMOKE, seed=6)
        snrs = [
            generate_block(block_rng(6, 0, i), config).snr_db for i in range(10_000)
        ]
        assert np.mean(snrs) == pytest.approx(10.0, abs=0.2)

    def test_pure_qpsk_mix(self):
        config = TrainConfig(**SMOKE, seed=7, mod_mix=(("qpsk", 1.0),))
        for i in range(200):
            draw = generate_block(block_rng(7, 0, i), config)
            assert draw.scheme is ModScheme.QPSK

    def test_mix_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            TrainConfig(mod_mix=(("qpsk", 0.5), ("qam16", 0.2)))

    def test_unknown_mix_entry_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(channel_mix=(("underwater", 1.0),))


class TestChainLossGradient:
    def test_coefficient_gradient_matches_fd(self, table):
        # through-chain finite differences at 1e-3 relative
        cfg = ChainConfig()
        config = TrainConfig(**SMOKE, seed=3)
        prep = prepare_batch(config, np.arange(3), table)
        rng = np.random.default_rng(0)
        coeffs = np.array([1.0, 0.0, -0.4, 0.0, 0.1]) + 0.05 * rng.standard_normal((3, 5))
        _, grad = chain_loss(coeffs, prep, cfg)
        h = 1e-6
        for b in range(3):
            for z in range(5):
                cp, cm = coeffs.copy(), coeffs.copy()
                cp[b, z] += h
                cm[b, z] -= h
                lp, _ = chain_loss(cp, prep, cfg, want_grad=False)
                lm, _ = chain_loss(cm, prep, cfg, want_grad=False)
                fd = (lp.loss - lm.loss) / (2 * h)
                denom = max(abs(fd), abs(grad[b, z]), 1e-8)
                assert abs(fd - grad[b, z]) / denom < 1e-3

    def test_loss_is_scale_invariant_in_taps(self, table):
        # power normalization means doubling the coefficients changes nothing
        cfg = ChainConfig()
        config = TrainConfig(**SMOKE, seed=4)
        prep = prepare_batch(config, np.arange(4), table)
        coeffs = np.tile([0.9, 0.0, -0.3, 0.0, 0.05], (4, 1))
        a, _ = chain_loss(coeffs, prep, cfg, want_grad=False)
        b, _ = chain_loss(2.5 * coeffs, prep, cfg, want_grad=False)
        assert a.loss == pytest.approx(b.loss, rel=1e-9)

    def test_equalized_path_matches_receiver_chain(self, table):
        # the training engine's algebra agrees with the op-level receiver
        cfg = ChainConfig()
        config = TrainConfig(**SMOKE, seed=8, channel_mix=(("awgn", 1.0),))
        prep = prepare_batch(config, np.arange(2), table)
        coeffs = np.tile([1.0, 0.0, -0.5, 0.0, 0.2], (2, 1))
        taps = taps_from_coeffs(coeffs, cfg.n_sk)
        shaped = prep.s_ext * taps
        g = np.sqrt(
            np.mean(np.abs(prep.s_ext) ** 2, axis=-1)
            / np.mean(np.abs(shaped) ** 2, axis=-1)
        )
        terms, _ = chain_loss(coeffs, prep, cfg, want_grad=False)
        for b in range(2):
            bins = g[b] * shaped[b] + prep.eta[b]
            rx = time_signal(bins, cfg, oversample=1)
            _, equalized = receiver_chain(
                SymbolBlock(Stage.RECEIVED, rx), g[b] * taps[b], cfg, ModScheme.QPSK
            )
            mse = float(np.mean(np.abs(equalized - prep.symbols[b]) ** 2))
            assert mse == pytest.approx(terms.mse[b], rel=1e-9)


class TestTrain:
    def test_zero_lr_leaves_parameters_unchanged(self):
        config = TrainConfig(n_blocks=96, epochs=1, batch_size=32, lr=0.0,
                             weight_decay=0.0, prune_mode="none", seed=9)
        ckpt = train(config)
        fresh = network.init_params(
            hidden_width=config.hidden_width,
            rng=block_rng(9, 1),
            input_dim=config.chain.n_sk + 1,
            out_scale=config.out_init_scale,
        )
        np.testing.assert_array_equal(
            ckpt.params.w1, fresh.w1.astype(np.float32).astype(np.float64)
        )
        np.testing.assert_array_equal(
            ckpt.params.b2, fresh.b2.astype(np.float32).astype(np.float64)
        )

    def test_smoke_run_reduces_loss(self):
        # deep-fade blocks make the mean heavy-tailed, so the run-to-run
        # check compares per-epoch medians of the batch losses
        config = TrainConfig(**SMOKE, seed=10)
        ckpt = train(config)
        median_col = 2
        assert ckpt.history[-1, median_col] < ckpt.history[0, median_col]

    def test_target_sparsity_leaves_492_live(self):
        config = TrainConfig(**SMOKE, seed=11, prune_mode="target", target_sparsity=0.8)
        ckpt = train(config)
        assert network.live_weight_count(ckpt.params) == 492

    def test_schedule_mode_five_epochs(self):
        config = TrainConfig(n_blocks=320, epochs=5, batch_size=32, seed=12,
                             prune_mode="schedule", prune_fraction=0.2)
        ckpt = train(config)
        assert network.live_weight_count(ckpt.params) == 805

    def test_determinism_bit_identical(self):
        config = TrainConfig(n_blocks=256, epochs=2, batch_size=32, seed=13)
        a = train(config)
        b = train(config)
        np.testing.assert_array_equal(a.params.w1, b.params.w1)
        np.testing.assert_array_equal(a.params.w2, b.params.w2)
        np.testing.assert_array_equal(a.params.mask1, b.params.mask1)
        np.testing.assert_array_equal(a.history, b.history)

    def test_checkpoint_round_trip_forward_bit_exact(self, tmp_path):
        config = TrainConfig(n_blocks=128, epochs=1, batch_size=32, seed=14)
        ckpt = train(config)
        path = tmp_path / "ckpt.bin"
        save_checkpoint(path, ckpt)
        loaded = load_checkpoint(path)
        rng = np.random.default_rng(0)
        x = rng.standard_normal(config.chain.n_sk + 1)
        np.testing.assert_array_equal(
            network.forward(loaded.params, x), network.forward(ckpt.params, x)
        )
        np.testing.assert_array_equal(
            network.forward_q(loaded.qnet, x), network.forward_q(ckpt.qnet, x)
        )
        assert loaded.config_hash == config_hash(config)
        # serialized history drops no information
        np.testing.assert_array_equal(loaded.history, ckpt.history)

    def test_perceptron_trains(self):
        config = TrainConfig(n_blocks=96, epochs=1, batch_size=32, seed=15,
                             hidden_width=0, prune_mode="none")
        ckpt = train(config)
        assert ckpt.params.hidden_width == 0
        assert np.all(np.isfinite(ckpt.params.w2))

    def test_divergence_raises_with_diagnostics(self):
        from tinyfdss.training import TrainingDivergedError

        # lr * weight_decay >> 1 makes the decay factor explosive, so the
        # parameters overflow within a few dozen steps
        config = TrainConfig(n_blocks=3200, epochs=1, batch_size=32, seed=17,
                             lr=1e12, weight_decay=1e-4, prune_mode="none")
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDivergedError, match="parameter norms"):
                train(config)

    def test_qam64_runs_through_trained_checkpoint(self):
        # train on QPSK/16-QAM, then push 64-QAM blocks through the filter
        config = TrainConfig(n_blocks=96, epochs=1, batch_size=32, seed=16)
        ckpt = train(config)
        cfg = config.chain
        rng = np.random.default_rng(1)
        bits = rng.integers(0, 2, cfg.n_data * 6)
        sym = map_symbols(bits, ModScheme.QAM64)
        s_ext = extend(precode(sym[None, :]), cfg.n_se)
        feats = network.build_input(s_ext, np.array([10.0]), expected_len=cfg.n_sk)
        coeffs = network.forward_q(ckpt.qnet, feats)
        taps = taps_from_coeffs(coeffs, cfg.n_sk)
        assert np.all(np.isfinite(taps))
