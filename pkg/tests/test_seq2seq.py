"""
Tests de l'encodeur, du décodeur, de l'attention croisée et du modèle complet.
"""

import numpy as np
import pytest

from app.core.exceptions import DomainError, ShapeError
from app.core.gradcheck import grad_check, grad_check_parameters
from app.core.rng import Rng
from app.core.tensor import Tensor, softmax
from app.models.features import prepare_inputs
from app.models.seq2seq import (
    CrossAttention,
    Decoder,
    Encoder,
    LstmStack,
    PredictionHead,
    Seq2SeqModel,
)
from app.schemas.material import Split
from app.schemas.training import TrainConfig
from app.services.material_service import build_curve_pair, compute_norm_stats, generate_dataset, sample_material
from app.services.training_service import sequence_loss


def generator(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def zero_all(module) -> None:
    for _, p in module.named_parameters():
        p.data[...] = 0.0


def toy_config(**overrides) -> TrainConfig:
    values = dict(hidden_size=8, num_layers=1, num_heads=2, dropout=0.0, seed=1)
    values.update(overrides)
    return TrainConfig(**values)


class TestEncoder:
    def test_zero_parameters_zero_states(self):
        enc = Encoder(5, 6, 2, generator())
        zero_all(enc)
        states = enc(Tensor(np.zeros((7, 5))))
        assert states.h_seq.shape == (1, 7, 6)
        np.testing.assert_array_equal(states.h_seq.data, 0.0)
        assert len(states.final) == 2

    def test_hidden_states_bounded(self):
        enc = Encoder(3, 8, 2, generator(1))
        x = Tensor(generator(2).normal(scale=10.0, size=(4, 12, 3)))
        h = enc(x).h_seq.data
        assert np.all(np.abs(h) < 1.0)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            Encoder(5, 6, 1, generator())(Tensor(np.zeros((7, 4))))

    def test_gradients_through_time(self):
        enc = Encoder(3, 4, 2, generator(3))
        x = Tensor(generator(4).normal(size=(4, 3)))
        weights = Tensor(generator(5).normal(size=(1, 4, 4)))
        errors = grad_check_parameters(lambda: (enc(x).h_seq * weights).sum(), enc.parameters())
        assert max(errors.values()) < 1e-4

    def test_dropout_only_in_training(self):
        stack = LstmStack(3, 4, 2, generator(6), dropout_rate=0.5)
        x = Tensor(generator(7).normal(size=(2, 5, 3)))
        stack.eval()
        a, _ = stack.run(x, generator=generator(8))
        b, _ = stack.run(x, generator=generator(9))
        np.testing.assert_array_equal(a.data, b.data)
        stack.train()
        c, _ = stack.run(x, generator=generator(8))
        assert not np.array_equal(a.data, c.data)


class TestDecoder:
    def test_zero_parameters(self):
        dec = Decoder(4, 2, generator())
        zero_all(dec)
        state = dec.stack.zero_state(1)
        o_t, new_state = dec.step(Tensor([0.7]), state)
        np.testing.assert_array_equal(o_t.data, 0.0)
        for h, c in new_state:
            np.testing.assert_array_equal(h.data, 0.0)
            np.testing.assert_array_equal(c.data, 0.0)

    def test_pure(self):
        dec = Decoder(4, 2, generator(1))
        state = dec.stack.zero_state(3)
        a, _ = dec.step(Tensor([0.1, 0.2, 0.3]), state)
        b, _ = dec.step(Tensor([0.1, 0.2, 0.3]), state)
        np.testing.assert_array_equal(a.data, b.data)

    def test_state_mismatch(self):
        dec = Decoder(4, 2, generator())
        with pytest.raises(ShapeError):
            dec.step(Tensor([0.0]), dec.stack.zero_state(1)[:1])
        with pytest.raises(ShapeError):
            dec.step(Tensor([0.0]), Decoder(5, 2, generator()).stack.zero_state(1))

    def test_gradients_through_three_steps(self):
        dec = Decoder(3, 2, generator(2))

        def loss():
            state = dec.stack.zero_state(1)
            prev = Tensor([0.0])
            total = Tensor(0.0)
            for _ in range(3):
                o_t, state = dec.step(prev, state)
                total = total + o_t.sum()
                prev = o_t[:, 0]
            return total

        errors = grad_check_parameters(loss, dec.parameters())
        assert max(errors.values()) < 1e-4


def direct_attention(o_t: np.ndarray, h_seq: np.ndarray):
    scores = np.array([np.dot(h, o_t) for h in h_seq])
    weights = np.exp(scores - scores.max())
    weights /= weights.sum()
    return sum(w * h for w, h in zip(weights, h_seq)), weights


class TestCrossAttention:
    def test_uniform_when_scores_equal(self):
        att = CrossAttention(4, 1, generator(), paper_exact=True)
        h_seq = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
        _, alpha = att(np.array([1.0, 0.0, 0.0, 0.0]), h_seq)
        np.testing.assert_allclose(alpha.data, np.full(3, 1.0 / 3.0), atol=1e-15)

    def test_single_position(self):
        att = CrossAttention(4, 1, generator(), paper_exact=True)
        h_seq = np.array([[0.1, -0.2, 0.3, 0.4]])
        context, alpha = att(np.array([0.5, 0.5, 0.5, 0.5]), h_seq)
        np.testing.assert_array_equal(alpha.data, [1.0])
        np.testing.assert_array_equal(context.data, h_seq[0])

    def test_matches_direct_evaluation(self):
        att = CrossAttention(6, 3, generator(), paper_exact=True)
        rng = generator(1)
        for _ in range(20):
            o_t, h_seq = rng.uniform(-1, 1, size=6), rng.uniform(-1, 1, size=(9, 6))
            context, alpha = att(o_t, h_seq)
            expected_context, expected_alpha = direct_attention(o_t, h_seq)
            np.testing.assert_allclose(context.data, expected_context, atol=1e-12)
            np.testing.assert_allclose(alpha.data, expected_alpha, atol=1e-12)

    @pytest.mark.parametrize("paper_exact", [True, False])
    def test_simplex(self, paper_exact):
        att = CrossAttention(8, 4, generator(2), paper_exact=paper_exact)
        rng = generator(3)
        for _ in range(1000):
            length = int(rng.integers(1, 10))
            context, alpha = att(rng.uniform(-1, 1, size=8), rng.uniform(-1, 1, size=(length, 8)))
            assert np.all(alpha.data >= 0.0)
            assert abs(alpha.data.sum() - 1.0) < 1e-6

    def test_convexity(self):
        att = CrossAttention(5, 1, generator(), paper_exact=True)
        rng = generator(4)
        for _ in range(200):
            h_seq = rng.uniform(-1, 1, size=(6, 5))
            context, _ = att(rng.uniform(-3, 3, size=5), h_seq)
            assert np.all(context.data >= h_seq.min(axis=0) - 1e-12)
            assert np.all(context.data <= h_seq.max(axis=0) + 1e-12)

    def test_multi_head_scaling(self):
        att = CrossAttention(8, 4, generator(5))
        assert att.head_size == 2
        names = [name for name, _ in att.named_parameters()]
        assert names == ["w_query", "w_key", "w_value", "output.weight", "output.bias"]

    def test_empty_sequence(self):
        att = CrossAttention(4, 1, generator(), paper_exact=True)
        with pytest.raises(ShapeError):
            att(np.zeros(4), np.zeros((0, 4)))

    def test_hidden_mismatch(self):
        with pytest.raises(ShapeError):
            CrossAttention(4, 2, generator())(np.zeros(4), np.zeros((3, 5)))

    def test_heads_must_divide_hidden(self):
        with pytest.raises(ShapeError):
            CrossAttention(6, 4, generator())

    def test_gradients(self):
        att = CrossAttention(4, 2, generator(6))
        rng = generator(7)
        o_t, h_seq = Tensor(rng.uniform(-1, 1, size=4)), Tensor(rng.uniform(-1, 1, size=(5, 4)))
        errors = grad_check_parameters(lambda: (att(o_t, h_seq)[0] ** 2).sum(), att.parameters())
        assert max(errors.values()) < 1e-6
        assert grad_check(lambda t: (att(t, h_seq)[0] ** 2).sum(), o_t) < 1e-6


class TestPredictionHead:
    def test_bias_only(self):
        head = PredictionHead(3, generator())
        zero_all(head)
        head.linear.bias.data[...] = 0.25
        assert head(np.zeros(3), np.ones(3)).item() == 0.25

    def test_affine_law(self):
        head = PredictionHead(3, generator(1))
        u_o, u_c = generator(2).normal(size=3), generator(3).normal(size=3)
        at = lambda k: head(k * u_o, k * u_c).item()
        assert at(2.0) - at(1.0) == pytest.approx(at(1.0) - at(0.0), abs=1e-12)

    def test_gradients(self):
        head = PredictionHead(3, generator(4))
        o_t, context = Tensor(generator(5).normal(size=(2, 3))), Tensor(generator(6).normal(size=(2, 3)))
        errors = grad_check_parameters(lambda: (head(o_t, context) ** 2).sum(), head.parameters())
        assert max(errors.values()) < 1e-6


class TestSeq2SeqModel:
    def test_parameter_order(self):
        model = Seq2SeqModel(toy_config(), Rng(0))
        names = [name for name, _ in model.named_parameters()]
        assert names[0] == "features.conv1d_k3.weight"
        assert names[-1] == "head.linear.bias"
        prefixes = [name.split(".")[0] for name in names]
        assert prefixes == sorted(prefixes, key=["features", "encoder", "decoder", "attention", "head"].index)

    def test_same_seed_same_parameters(self):
        a = Seq2SeqModel(toy_config(), Rng(0)).state_arrays()
        b = Seq2SeqModel(toy_config(), Rng(0)).state_arrays()
        assert all(np.array_equal(a[name], b[name]) for name in a)

    def test_output_shape_and_determinism(self, small_train):
        model = Seq2SeqModel(toy_config(), Rng(0)).eval()
        inputs = prepare_inputs(small_train.samples[:3], small_train.norm_stats)
        a = model.run(inputs, l_out=16)
        b = model.run(inputs, l_out=16)
        assert a.shape == (3, 16)
        np.testing.assert_array_equal(a.data, b.data)

    def test_full_forcing_uses_shifted_truth(self, small_train):
        model = Seq2SeqModel(toy_config(), Rng(0))
        inputs = prepare_inputs(small_train.samples[:2], small_train.norm_stats)
        target = small_train.norm_stats.normalize_stress(small_train.stresses()[:2])
        trace = model.run(inputs, target=target, teacher_forcing_ratio=1.0, return_trace=True)
        np.testing.assert_array_equal(trace.decoder_inputs[:, 0], 0.0)
        np.testing.assert_array_equal(trace.decoder_inputs[:, 1:], target[:, :-1])

    def test_no_forcing_ignores_target(self, small_train):
        model = Seq2SeqModel(toy_config(), Rng(0)).eval()
        inputs = prepare_inputs(small_train.samples[:2], small_train.norm_stats)
        target = small_train.norm_stats.normalize_stress(small_train.stresses()[:2])
        with_target = model.run(inputs, target=target, teacher_forcing_ratio=0.0)
        without = model.run(inputs, l_out=16)
        np.testing.assert_array_equal(with_target.data, without.data)

    def test_partial_forcing_is_reproducible(self, small_train):
        model = Seq2SeqModel(toy_config(), Rng(0))
        inputs = prepare_inputs(small_train.samples[:2], small_train.norm_stats)
        target = small_train.norm_stats.normalize_stress(small_train.stresses()[:2])
        a = model.run(inputs, target=target, teacher_forcing_ratio=0.5, rng=Rng(3))
        b = model.run(inputs, target=target, teacher_forcing_ratio=0.5, rng=Rng(3))
        np.testing.assert_array_equal(a.data, b.data)

    def test_attention_rows_are_simplex(self, small_train):
        model = Seq2SeqModel(toy_config(), Rng(0)).eval()
        trace = model.run(prepare_inputs(small_train.samples[:2], small_train.norm_stats), l_out=5,
                          return_trace=True)
        assert trace.alphas.shape == (2, 5, 16)
        np.testing.assert_allclose(trace.alphas.sum(axis=-1), 1.0, atol=1e-6)

    def test_without_attention(self, small_train):
        model = Seq2SeqModel(toy_config(attention_enabled=False), Rng(0)).eval()
        trace = model.run(prepare_inputs(small_train.samples[:1], small_train.norm_stats), l_out=4,
                          return_trace=True)
        np.testing.assert_allclose(trace.alphas, 1.0 / 16)

    def test_baseline_has_no_image_branch(self):
        model = Seq2SeqModel(toy_config(gaf_enabled=False), Rng(0))
        assert not any("conv2d" in name for name, _ in model.named_parameters())
        assert model.encoder.input_size == 26

    def test_errors(self, small_train):
        model = Seq2SeqModel(toy_config(), Rng(0)).eval()
        inputs = prepare_inputs(small_train.samples[:1], small_train.norm_stats)
        target = np.zeros((1, 16))
        with pytest.raises(DomainError):
            model.run(inputs, target=target, teacher_forcing_ratio=1.5)
        with pytest.raises(DomainError):
            model.run(inputs, teacher_forcing_ratio=0.5, l_out=16)
        with pytest.raises(DomainError):
            model.run(inputs, target=target, teacher_forcing_ratio=0.5)
        with pytest.raises(ShapeError):
            model.run(inputs)
        with pytest.raises(ShapeError):
            model.run(inputs, target=np.zeros((2, 16)))

    def test_dropout_needs_rng_in_training(self, small_train):
        model = Seq2SeqModel(toy_config(dropout=0.1, num_layers=2), Rng(0))
        inputs = prepare_inputs(small_train.samples[:1], small_train.norm_stats)
        with pytest.raises(DomainError):
            model.run(inputs, l_out=4)
        model.eval()
        assert model.run(inputs, l_out=4).shape == (1, 4)

    @pytest.mark.parametrize("paper_exact", [False, True])
    def test_end_to_end_gradients(self, paper_exact):
        config = toy_config(paper_exact=paper_exact)
        model = Seq2SeqModel(config, Rng(2))
        train, _ = _toy_data()
        inputs = prepare_inputs(train.samples[:1], train.norm_stats)
        target = train.norm_stats.normalize_stress(train.stresses()[:1])[:, :4]

        def loss():
            pred = model.run(inputs, target=target, teacher_forcing_ratio=1.0)
            return ((pred - Tensor(target)) ** 2).sum()

        errors = grad_check_parameters(loss, model.parameters(), max_coords=20, seed=1)
        assert max(errors.values()) < 1e-4

    @pytest.mark.parametrize("paper_exact", [False, True])
    @pytest.mark.parametrize("teacher_forcing", [0.0, 1.0])
    def test_every_parameter_gradient_of_training_loss(self, paper_exact, teacher_forcing):
        samples = [
            build_curve_pair(sample_material(Rng(11).split(index), Split.TRAIN), sample_id=index, l_in=4, l_out=4)
            for index in range(2)
        ]
        norm_stats = compute_norm_stats(samples)
        config = toy_config(num_heads=1, paper_exact=paper_exact)
        model = Seq2SeqModel(config, Rng(4))
        inputs = prepare_inputs(samples, norm_stats)
        target = norm_stats.normalize_stress(np.stack([s.stress for s in samples]))

        def loss():
            pred = model.run(inputs, target=target, teacher_forcing_ratio=teacher_forcing)
            return sequence_loss(pred, target, config.loss_kind)

        errors = grad_check_parameters(loss, model.parameters())
        assert set(errors) == {name for name, _ in model.named_parameters()}
        assert max(errors.values()) < 1e-4


def _toy_data():
    return generate_dataset(n_train=2, n_test=1, seed=0, l_in=8, l_out=8)


def test_softmax_used_for_alpha():
    # alpha littéral = softmax des produits scalaires
    att = CrossAttention(3, 1, generator(), paper_exact=True)
    h_seq = generator(1).normal(size=(4, 3))
    o_t = generator(2).normal(size=3)
    _, alpha = att(o_t, h_seq)
    np.testing.assert_allclose(alpha.data, softmax(Tensor(h_seq @ o_t)).data, atol=1e-15)
