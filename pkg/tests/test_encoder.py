import numpy as np
import pytest

from vidqa.encoder import EncoderConfig, TextEncoder, VideoEncoder, encode_text_fused, encode_video
from vidqa.tensor import ShapeError, Tape, Tensor, ops
from vidqa.text import UNK, Vocab, tokenize, tokenize_question
from vidqa.training import TrainConfig, batch_loss

VOCAB = Vocab("is the catheter visible ? which tool".split())


def _cfg(**kw):
    base = dict(vocab_size=len(VOCAB), embed_dim=32, n_heads=4, ffn_dim=48)
    base.update(kw)
    return EncoderConfig(**base)


def test_video_encoder_shape():
    enc = VideoEncoder(_cfg(), np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).standard_normal((16, 32)).astype(np.float32))
    assert encode_video(x, enc).shape == (16, 32)


def test_video_encoder_empty_sequence():
    enc = VideoEncoder(_cfg(), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        enc(Tensor(np.zeros((1, 0, 32), np.float32)))


def test_video_encoder_permutation_equivariance():
    enc = VideoEncoder(_cfg(), np.random.default_rng(0))
    rng = np.random.default_rng(2)
    x = rng.standard_normal((16, 32)).astype(np.float32) + enc.pos_enc[:16]
    perm = rng.permutation(16)
    a = encode_video(Tensor(x), enc).data
    b = encode_video(Tensor(x[perm]), enc).data
    np.testing.assert_allclose(b, a[perm], atol=1e-5)


def test_zero_layer_encoder_is_layer_norm():
    enc = VideoEncoder(_cfg(n_layers_video=0), np.random.default_rng(0))
    x = np.random.default_rng(3).standard_normal((5, 32)).astype(np.float32)
    out = encode_video(Tensor(x), enc).data
    ref = (x - x.mean(-1, keepdims=True)) / np.sqrt(x.var(-1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(out, ref, atol=1e-5)


def test_video_encoder_finite_over_seeds():
    enc = VideoEncoder(_cfg(), np.random.default_rng(0))
    for seed in range(100):
        x = np.random.default_rng(seed).standard_normal((16, 32)).astype(np.float32) * 3
        assert np.isfinite(np.linalg.norm(encode_video(Tensor(x), enc).data))


def test_cross_attention_rows_stochastic_and_unmasked():
    cfg = _cfg()
    txt = TextEncoder(cfg, np.random.default_rng(0))
    q = tokenize_question("Is the catheter visible in the clip ?", VOCAB)
    assert q.length == 8
    video = Tensor(np.random.default_rng(1).standard_normal((16, 32)).astype(np.float32))
    fused = encode_text_fused(q, video, txt)
    assert fused.shape == (8, 32)
    for w in txt.cross_attention_weights():
        assert w.shape == (1, cfg.n_heads, 8, 16)
        np.testing.assert_allclose(w.sum(-1), 1.0, atol=1e-6)
        # every video token gets non-zero weight from every query
        assert (w > 0).all()


def test_duplicated_video_tokens_leave_output_unchanged():
    txt = TextEncoder(_cfg(), np.random.default_rng(0))
    q = tokenize_question("which tool is visible ?", VOCAB)
    v = np.random.default_rng(4).standard_normal((6, 32)).astype(np.float32)
    a = encode_text_fused(q, Tensor(v), txt).data
    b = encode_text_fused(q, Tensor(np.concatenate([v, v])), txt).data
    np.testing.assert_allclose(a, b, atol=1e-5)


def test_single_token_single_video():
    txt = TextEncoder(_cfg(), np.random.default_rng(0))
    q = tokenize_question("tool", VOCAB)
    out = encode_text_fused(q, Tensor(np.ones((1, 32), np.float32)), txt)
    assert out.shape == (1, 32) and np.isfinite(out.data).all()


def test_question_longer_than_limit():
    txt = TextEncoder(_cfg(max_question_len=4), np.random.default_rng(0))
    q = tokenize_question("is the catheter visible ?", VOCAB)
    with pytest.raises(ShapeError):
        encode_text_fused(q, Tensor(np.ones((2, 32), np.float32)), txt)


def test_tokenizer_examples():
    assert tokenize("Is the catheter visible?") == ["is", "the", "catheter", "visible", "?"]
    q = tokenize_question("Is the bronchoscope visible?", VOCAB)
    assert q.ids[2] == VOCAB.stoi[UNK]
    again = tokenize_question("Is the bronchoscope visible?", VOCAB)
    assert np.array_equal(q.ids, again.ids)
    with pytest.raises(ValueError):
        tokenize_question("   ", VOCAB)


def test_default_freeze_policy_gradient_flow(tiny_model, tiny_data):
    _, train, _, _ = tiny_data
    model = tiny_model
    model.apply_freeze_policy("paper")
    params = model.trainable_parameters()
    ve = model.video_encoder
    assert all(not p.requires_grad for p in ve.interior_parameters())
    batch = model.make_batch([e.sample for e in train[:2]])
    with Tape() as tape:
        loss = batch_loss(model, batch, TrainConfig(mask_ratio=0.5), np.random.default_rng(0))
    tape.backward(loss, list(params.values()))
    assert np.abs(ve.patch_embed.weight.grad).sum() > 0
    assert np.abs(ve.norm.weight.grad).sum() > 0
    assert all(p.grad is None for p in ve.interior_parameters())
