import numpy as np
import pytest

from vidqa.decoder import (
    AdapterStateError, Decoder, DecoderConfig, GenerationConfig, LoraAdapter, decode_forward, generate,
    lora_linear, merge_adapter,
)
from vidqa.model import Sample
from vidqa.tensor import ShapeError, Tensor
from vidqa.training import TrainConfig, train


def _decoder(seed=0, **kw):
    base = dict(vocab_size=12, embed_dim=16, n_heads=2, ffn_dim=32, max_seq_len=16, prefix_len=6, prefix_dim=16)
    base.update(kw)
    return Decoder(DecoderConfig(**base), np.random.default_rng(seed))


def _prefix(seed=1, n=4, d=16):
    return Tensor(np.random.default_rng(seed).standard_normal((n, d)).astype(np.float32))


def test_fresh_adapter_is_transparent():
    rng = np.random.default_rng(0)
    w = Tensor(rng.standard_normal((5, 7)).astype(np.float32))
    x = Tensor(rng.standard_normal((3, 7)).astype(np.float32))
    ad = LoraAdapter(5, 7, 2, 16.0, rng)
    assert np.array_equal(lora_linear(x, w, ad).data, lora_linear(x, w, None).data)


def test_alpha_zero_is_base():
    rng = np.random.default_rng(0)
    w = Tensor(rng.standard_normal((5, 7)).astype(np.float32))
    x = Tensor(rng.standard_normal((3, 7)).astype(np.float32))
    ad = LoraAdapter(5, 7, 2, 0.0, rng)
    ad.B.data = rng.standard_normal((5, 2)).astype(np.float32)
    np.testing.assert_array_equal(lora_linear(x, w, ad).data, lora_linear(x, w, None).data)


def test_rank_one_hand_value():
    d, k = 3, 4
    w = Tensor(np.arange(12, dtype=np.float32).reshape(d, k))
    ad = LoraAdapter(d, k, 1, 1.0, np.random.default_rng(0))
    ad.A.data = np.ones((1, k), np.float32)
    ad.B.data = np.ones((d, 1), np.float32)
    x = Tensor(np.eye(k, dtype=np.float32)[2:3])
    out = lora_linear(x, w, ad).data
    np.testing.assert_allclose(out[0], w.data[:, 2] + 1.0)


def test_rank_above_min_dim_rejected():
    with pytest.raises(ValueError):
        LoraAdapter(3, 8, 4, 1.0, np.random.default_rng(0))


def test_merge_zero_b_is_exact_and_shape_checked():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((5, 7)).astype(np.float32)
    ad = LoraAdapter(5, 7, 2, 16.0, rng)
    assert np.array_equal(merge_adapter(w, ad), w)
    with pytest.raises(ShapeError):
        merge_adapter(np.zeros((7, 5), np.float32), ad)


def test_merge_matches_runtime_over_seeds():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        w = Tensor(rng.standard_normal((8, 6)).astype(np.float32))
        ad = LoraAdapter(8, 6, 3, 16.0, rng)
        ad.B.data = rng.standard_normal((8, 3)).astype(np.float32)
        x = Tensor(rng.standard_normal((4, 6)).astype(np.float32))
        merged = lora_linear(x, Tensor(merge_adapter(w.data, ad)), None).data
        np.testing.assert_allclose(merged, lora_linear(x, w, ad).data, atol=1e-5)


def test_double_merge_guard():
    dec = _decoder()
    dec.merge_adapters()
    with pytest.raises(AdapterStateError):
        dec.merge_adapters()
    dec.unmerge_adapters()
    with pytest.raises(AdapterStateError):
        dec.unmerge_adapters()


def test_lora_targets_per_style():
    gpt = _decoder()
    assert {n.rsplit(".", 1)[-1] for n, _ in gpt.lora_layers()} == {"c_attn", "c_proj"}
    qwen = _decoder(style="qwen")
    assert {n.rsplit(".", 1)[-1] for n, _ in qwen.lora_layers()} == {"q_proj", "k_proj", "v_proj", "o_proj"}


def test_causality_future_tokens_do_not_matter():
    dec = _decoder()
    p = _prefix()
    from vidqa.decoder import pad_prefix

    padded, L = pad_prefix(p, 6)
    a = dec(padded, np.array([L]), np.array([[2, 5, 6, 7]])).data
    b = dec(padded, np.array([L]), np.array([[2, 5, 9, 1]])).data
    assert np.array_equal(a[0, :2], b[0, :2])


def test_decode_forward_deterministic_and_prefix_only():
    dec = _decoder()
    p = _prefix()
    s1 = decode_forward(p, [], dec)
    s2 = decode_forward(p, [], dec)
    assert s1.shape == (12,) and np.array_equal(s1, s2)


def test_decode_forward_length_overflow():
    dec = _decoder()
    with pytest.raises(ShapeError):
        decode_forward(_prefix(), list(range(4, 14)), dec)


def test_eos_always_max_gives_empty_answer():
    dec = _decoder()
    dec.head_bias.data[3] = 1e4
    trace = generate(_prefix(), dec, GenerationConfig(max_new_tokens=5))
    assert trace.token_ids == [] and trace.steps[0][0] == 3


def test_token_cap():
    dec = _decoder()
    dec.head_bias.data[7] = 1e4
    trace = generate(_prefix(), dec, GenerationConfig(max_new_tokens=3))
    assert trace.token_ids == [7, 7, 7]


def test_zero_init_adapters_do_not_change_generation():
    dec = _decoder()
    p = _prefix()
    with_ad = generate(p, dec, GenerationConfig(max_new_tokens=6))
    dec.set_adapters_enabled(False)
    without = generate(p, dec, GenerationConfig(max_new_tokens=6))
    assert with_ad.token_ids == without.token_ids
    np.testing.assert_allclose([s for _, s in with_ad.steps], [s for _, s in without.steps], atol=1e-6)


def _frozen_snapshot(model):
    trainable = set(model.trainable_parameters())
    return {n: p.data.copy() for n, p in model.decoder.named_parameters(prefix="decoder.")
            if n not in trainable}


def test_frozen_base_bit_identical_after_training(tiny_model, tiny_data):
    _, train_ex, _, _ = tiny_data
    model = tiny_model
    samples = [e.sample for e in train_ex[:4]]
    before = _frozen_snapshot(model)
    assert before
    cfg = TrainConfig(epochs=100, lr=1e-3, batch_size=4, mask_ratio=0.5)
    result = train(samples, model, cfg)
    assert result.steps == 100
    after = _frozen_snapshot(model)
    assert all(np.array_equal(before[n], after[n]) for n in before)
    adapters = model.decoder.adapter_parameters()
    assert any(np.abs(p.data).sum() > 0 for p in adapters[1::2])


def test_single_pair_overfit_regenerates_answer(tiny_model, tiny_data):
    _, train_ex, _, _ = tiny_data
    s = train_ex[0].sample
    model = tiny_model
    train([s], model, TrainConfig(epochs=150, lr=3e-3, batch_size=1, freeze_policy="desk", mask_ratio=0.0))
    assert model.answer(s.frames, s.question) == s.answer
