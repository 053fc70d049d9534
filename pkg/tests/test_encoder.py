"""Encoder semantics against brute-force oracles, plus full gradchecks."""

import math

import numpy as np
import pytest
from mpmath import mp

from limnet.documents import Document
from limnet.encoder import (
    EncoderParams,
    Variant,
    average_pool,
    encode,
    encode_backward,
    global_shift,
    local_embed,
)
from limnet.errors import DimensionMismatch
from limnet.scorer import ScorerParams, relative_error


def make_scorer(w1, b1, w2, b2):
    return ScorerParams(
        w1=np.asarray(w1, dtype=np.float64),
        b1=np.asarray(b1, dtype=np.float64),
        w2=np.asarray(w2, dtype=np.float64),
        b2=np.asarray(float(b2)),
    )


def random_params(rng, dim, hidden, scale=1.0):
    def scorer():
        return make_scorer(
            rng.uniform(-scale, scale, size=(hidden, dim)),
            rng.uniform(-scale, scale, size=hidden),
            rng.uniform(-scale, scale, size=hidden),
            rng.uniform(-scale, scale),
        )

    return EncoderParams(local_scorer=scorer(), global_scorer=scorer())


def random_doc(rng, n=None, dim=None, max_len=4):
    n = n or int(rng.integers(1, 4))
    dim = dim or int(rng.integers(2, 7))
    return Document(
        doc_id="t",
        sentences=[rng.uniform(-1, 1, size=(int(rng.integers(1, max_len + 1)), dim)) for _ in range(n)],
    )


# -- plain-Python enumeration oracles, independent of the array code --


def scalar_score(scorer: ScorerParams, x) -> float:
    total = float(scorer.b2)
    for i in range(scorer.hidden_size):
        z = float(scorer.b1[i])
        for j in range(scorer.input_dim):
            z += float(scorer.w1[i, j]) * float(x[j])
        total += float(scorer.w2[i]) * math.tanh(z)
    return total


def scalar_softmax(scores):
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    z = sum(exps)
    return [e / z for e in exps]


def brute_local(doc: Document, scorer: ScorerParams):
    out, weights = [], []
    for sent in doc.sentences:
        a = scalar_softmax([scalar_score(scorer, tok) for tok in sent])
        weights.append(a)
        out.append([
            sum(a[j] * float(sent[j, d]) for j in range(len(a))) for d in range(doc.dim)
        ])
    return np.array(out), weights


def brute_global(doc: Document, local: np.ndarray, scorer: ScorerParams):
    toks = [tok for sent in doc.sentences for tok in sent]
    shifts, weights = [], []
    for k in range(doc.num_sentences):
        scores = [scalar_score(scorer, tok - local[k]) for tok in toks]
        a = scalar_softmax(scores)
        weights.append(a)
        shifts.append([
            sum(a[t] * float(toks[t][d]) for t in range(len(toks))) for d in range(doc.dim)
        ])
    return np.array(shifts), np.array(weights)


class TestLocalEmbed:
    def test_single_token_sentence(self):
        rng = np.random.default_rng(0)
        tok = rng.uniform(-1, 1, size=4)
        doc = Document("d", [tok.reshape(1, 4)])
        local, weights = local_embed(doc, random_params(rng, 4, 3).local_scorer)
        np.testing.assert_array_equal(local[0], tok)
        np.testing.assert_array_equal(weights[0], [1.0])

    def test_identical_tokens(self):
        rng = np.random.default_rng(1)
        tok = rng.uniform(-1, 1, size=3)
        doc = Document("d", [np.tile(tok, (5, 1))])
        local, weights = local_embed(doc, random_params(rng, 3, 2).local_scorer)
        np.testing.assert_allclose(local[0], tok, rtol=0, atol=1e-14)
        np.testing.assert_allclose(weights[0], np.full(5, 0.2), rtol=0, atol=1e-15)

    def test_zero_scorer_uniform_mean(self):
        doc = Document("d", [np.array([[1.0, 0.0], [0.0, 1.0]])])
        local, weights = local_embed(doc, ScorerParams.zeros(2, 3))
        np.testing.assert_array_equal(local[0], [0.5, 0.5])
        np.testing.assert_array_equal(weights[0], [0.5, 0.5])

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(2)
        scorer = make_scorer([[0.8, -0.3]], [0.1], [1.2], -0.4)  # d=2, h=1
        doc = Document("d", [rng.uniform(-1, 1, size=(3, 2))])
        local, weights = local_embed(doc, scorer)
        expect_local, expect_w = brute_local(doc, scorer)
        np.testing.assert_allclose(local, expect_local, rtol=0, atol=1e-12)
        np.testing.assert_allclose(weights[0], expect_w[0], rtol=0, atol=1e-12)

    def test_random_docs_vs_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            doc = random_doc(rng)
            params = random_params(rng, doc.dim, int(rng.integers(1, 4)))
            local, weights = local_embed(doc, params.local_scorer)
            expect_local, expect_w = brute_local(doc, params.local_scorer)
            np.testing.assert_allclose(local, expect_local, rtol=0, atol=1e-12)
            for got, want in zip(weights, expect_w):
                np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_dim_mismatch(self):
        doc = Document("d", [np.zeros((2, 3))])
        with pytest.raises(DimensionMismatch):
            local_embed(doc, ScorerParams.zeros(4, 2))


class TestGlobalShift:
    def test_single_token_document(self):
        rng = np.random.default_rng(4)
        tok = rng.uniform(-1, 1, size=3)
        doc = Document("d", [tok.reshape(1, 3)])
        params = random_params(rng, 3, 2)
        local, _ = local_embed(doc, params.local_scorer)
        shifts, weights = global_shift(doc, local, params.global_scorer)
        np.testing.assert_array_equal(shifts[0], tok)
        np.testing.assert_array_equal(weights, [[1.0]])

    def test_identical_tokens_everywhere(self):
        rng = np.random.default_rng(5)
        tok = rng.uniform(-1, 1, size=3)
        doc = Document("d", [np.tile(tok, (2, 1)), np.tile(tok, (3, 1))])
        params = random_params(rng, 3, 2)
        local = np.tile(tok, (2, 1))
        shifts, weights = global_shift(doc, local, params.global_scorer)
        np.testing.assert_allclose(shifts, local, rtol=0, atol=1e-14)
        np.testing.assert_allclose(weights, np.full((2, 5), 0.2), rtol=0, atol=1e-15)

    def test_zero_scorer_gives_document_mean(self):
        rng = np.random.default_rng(6)
        doc = random_doc(rng, n=3, dim=4)
        local = average_pool(doc)
        shifts, _ = global_shift(doc, local, ScorerParams.zeros(4, 2))
        mean = doc.all_tokens().mean(axis=0)
        for k in range(3):
            np.testing.assert_allclose(shifts[k], mean, rtol=0, atol=1e-14)

    def test_matches_double_sum_oracle(self):
        rng = np.random.default_rng(7)
        scorer = make_scorer([[0.5, -1.0], [0.2, 0.9]], [0.0, -0.1], [1.0, -0.7], 0.3)
        doc = Document("d", [rng.uniform(-1, 1, size=(2, 2)) for _ in range(2)])
        local, _ = local_embed(doc, scorer)
        shifts, weights = global_shift(doc, local, scorer)
        expect_shifts, expect_w = brute_global(doc, local, scorer)
        np.testing.assert_allclose(shifts, expect_shifts, rtol=0, atol=1e-12)
        np.testing.assert_allclose(weights, expect_w, rtol=0, atol=1e-12)

    def test_weighted_sum_uses_original_tokens(self):
        # shift the whole document by a constant: the differences seen by
        # the scorer are unchanged, so the weights are unchanged, and the
        # output must move by exactly that constant
        rng = np.random.default_rng(8)
        doc = random_doc(rng, n=2, dim=3)
        params = random_params(rng, 3, 2)
        local, _ = local_embed(doc, params.local_scorer)
        shifts, weights = global_shift(doc, local, params.global_scorer)
        offset = np.array([10.0, -5.0, 2.0])
        doc2 = Document("d2", [s + offset for s in doc.sentences])
        shifts2, weights2 = global_shift(doc2, local + offset, params.global_scorer)
        np.testing.assert_allclose(weights2, weights, rtol=0, atol=1e-12)
        np.testing.assert_allclose(shifts2, shifts + offset, rtol=0, atol=1e-10)

    def test_local_length_mismatch(self):
        rng = np.random.default_rng(9)
        doc = random_doc(rng, n=2, dim=3)
        with pytest.raises(DimensionMismatch):
            global_shift(doc, np.zeros((3, 3)), ScorerParams.zeros(3, 2))


class TestEncodeVariants:
    def test_full_single_token(self):
        rng = np.random.default_rng(10)
        tok = rng.uniform(-1, 1, size=3)
        doc = Document("d", [tok.reshape(1, 3)])
        out = encode(doc, random_params(rng, 3, 2), Variant.FULL)
        np.testing.assert_array_equal(out.mixed[0], 2 * tok)

    def test_no_global_mixed_equals_local(self):
        rng = np.random.default_rng(11)
        doc = random_doc(rng)
        out = encode(doc, random_params(rng, doc.dim, 2), Variant.NO_GLOBAL)
        assert np.array_equal(out.mixed, out.local)
        assert not out.shifts.any()
        assert out.global_weights is None

    def test_no_local_uses_pooled_embeddings(self):
        rng = np.random.default_rng(12)
        doc = random_doc(rng)
        params = random_params(rng, doc.dim, 2)
        out = encode(doc, params, Variant.NO_LOCAL)
        pooled = average_pool(doc)
        np.testing.assert_array_equal(out.local, pooled)
        shifts, _ = global_shift(doc, pooled, params.global_scorer)
        np.testing.assert_array_equal(out.shifts, shifts)
        np.testing.assert_array_equal(out.mixed, pooled + shifts)
        for w, l in zip(out.local_weights, doc.sentence_lengths):
            np.testing.assert_array_equal(w, np.full(l, 1.0 / l))

    def test_no_either_is_average_pooling(self):
        doc = Document("d", [np.array([[2.0, 0.0], [0.0, 2.0]])])
        out = encode(doc, random_params(np.random.default_rng(13), 2, 2), Variant.NO_EITHER)
        np.testing.assert_array_equal(out.mixed, [[1.0, 1.0]])
        assert not out.shifts.any()

    def test_mixed_is_exact_sum(self):
        rng = np.random.default_rng(14)
        for variant in Variant:
            doc = random_doc(rng)
            out = encode(doc, random_params(rng, doc.dim, 3), variant)
            assert np.array_equal(out.mixed, out.local + out.shifts)

    def test_deterministic(self):
        rng = np.random.default_rng(15)
        doc = random_doc(rng)
        params = random_params(rng, doc.dim, 3)
        a = encode(doc, params, Variant.FULL)
        b = encode(doc, params, Variant.FULL)
        assert np.array_equal(a.mixed, b.mixed)
        assert np.array_equal(a.shifts, b.shifts)
        assert a.global_weights is not None and np.array_equal(a.global_weights, b.global_weights)


class TestStructuralProperties:
    def test_weights_normalized_and_positive(self):
        rng = np.random.default_rng(16)
        for _ in range(30):
            doc = random_doc(rng)
            out = encode(doc, random_params(rng, doc.dim, 3), Variant.FULL)
            for w in out.local_weights:
                assert abs(w.sum() - 1.0) <= 1e-12
                assert (w > 0).all()
            for row in out.global_weights:
                assert abs(row.sum() - 1.0) <= 1e-12
                assert (row > 0).all()

    def test_convex_hull_reconstruction(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            doc = random_doc(rng)
            out = encode(doc, random_params(rng, doc.dim, 3), Variant.FULL)
            toks = doc.all_tokens()
            for i, sent in enumerate(doc.sentences):
                np.testing.assert_allclose(
                    out.local[i], out.local_weights[i] @ sent, rtol=0, atol=1e-12
                )
            for k in range(doc.num_sentences):
                np.testing.assert_allclose(
                    out.shifts[k], out.global_weights[k] @ toks, rtol=0, atol=1e-12
                )

    def test_linear_combination_residual(self):
        rng = np.random.default_rng(18)
        for variant in Variant:
            for _ in range(10):
                doc = random_doc(rng)
                out = encode(doc, random_params(rng, doc.dim, 3), variant)
                toks = doc.all_tokens()
                for k in range(doc.num_sentences):
                    m = out.mixed[k]
                    coef, *_ = np.linalg.lstsq(toks.T, m, rcond=None)
                    residual = np.linalg.norm(toks.T @ coef - m)
                    assert residual <= 1e-8 * max(np.linalg.norm(m), 1e-30)

    def test_token_permutation_invariance(self):
        rng = np.random.default_rng(19)
        doc = random_doc(rng, n=3, dim=4)
        params = random_params(rng, 4, 3)
        base = encode(doc, params, Variant.FULL)
        perm_sentences = [s[rng.permutation(s.shape[0])] for s in doc.sentences]
        permuted = encode(Document("p", perm_sentences), params, Variant.FULL)
        np.testing.assert_allclose(permuted.local, base.local, rtol=0, atol=1e-12)
        np.testing.assert_allclose(permuted.shifts, base.shifts, rtol=0, atol=1e-12)
        np.testing.assert_allclose(permuted.mixed, base.mixed, rtol=0, atol=1e-12)

    def test_sentence_reordering_permutes_outputs(self):
        rng = np.random.default_rng(20)
        doc = random_doc(rng, n=4, dim=3)
        params = random_params(rng, 3, 2)
        base = encode(doc, params, Variant.FULL)
        order = rng.permutation(4)
        reordered = encode(Document("r", [doc.sentences[i] for i in order]), params, Variant.FULL)
        np.testing.assert_allclose(reordered.local, base.local[order], rtol=0, atol=1e-12)
        np.testing.assert_allclose(reordered.shifts, base.shifts[order], rtol=0, atol=1e-12)
        np.testing.assert_allclose(reordered.mixed, base.mixed[order], rtol=0, atol=1e-12)


# -- gradient checks on the scalar loss sum_k ||M_k||^2 --


def mp_sum_squares(doc: Document, params: EncoderParams, variant: Variant):
    """Extended-precision forward of the encoder, loss = sum ||mixed||^2."""
    with mp.workdps(40):
        def to_mp_vec(a):
            return [mp.mpf(float(v)) for v in a]

        def mp_score(scorer, x):
            total = mp.mpf(float(scorer.b2))
            for i in range(scorer.hidden_size):
                z = mp.mpf(float(scorer.b1[i]))
                for j in range(scorer.input_dim):
                    z += mp.mpf(float(scorer.w1[i, j])) * x[j]
                total += mp.mpf(float(scorer.w2[i])) * mp.tanh(z)
            return total

        def mp_softmax(scores):
            top = max(scores)
            exps = [mp.exp(s - top) for s in scores]
            z = sum(exps)
            return [e / z for e in exps]

        sents = [[to_mp_vec(tok) for tok in s] for s in doc.sentences]
        toks = [t for s in sents for t in s]
        dim = doc.dim
        if variant.has_local_attention:
            local = []
            for s in sents:
                w = mp_softmax([mp_score(params.local_scorer, t) for t in s])
                local.append([sum(wi * t[d] for wi, t in zip(w, s)) for d in range(dim)])
        else:
            local = [[sum(t[d] for t in s) / len(s) for d in range(dim)] for s in sents]
        loss = mp.mpf(0)
        for k in range(len(sents)):
            if variant.has_global_shift:
                diffs = [[t[d] - local[k][d] for d in range(dim)] for t in toks]
                w = mp_softmax([mp_score(params.global_scorer, u) for u in diffs])
                shift = [sum(wi * t[d] for wi, t in zip(w, toks)) for d in range(dim)]
            else:
                shift = [mp.mpf(0)] * dim
            for d in range(dim):
                loss += (local[k][d] + shift[d]) ** 2
        return loss


def sum_squares_gradcheck(doc, params, variant, eps=1e-6, tol=1e-5):
    """Hybrid float64/extended-precision check; returns max relative error."""
    out = encode(doc, params, variant)
    grad = encode_backward(doc, params, variant, 2.0 * out.mixed)
    named = [(f"local.{n}", t) for n, t in grad.local_scorer.tensors()]
    named += [(f"global.{n}", t) for n, t in grad.global_scorer.tensors()]
    tensors = [(f"local.{n}", t) for n, t in params.local_scorer.tensors()]
    tensors += [(f"global.{n}", t) for n, t in params.global_scorer.tensors()]

    def f64():
        return float((encode(doc, params, variant).mixed ** 2).sum())

    worst = 0.0
    for (name, tensor), (_, g) in zip(tensors, named):
        flat_t, flat_g = tensor.reshape(-1), g.reshape(-1)
        for i in range(flat_t.size):
            orig = flat_t[i]
            flat_t[i] = orig + eps
            f_plus = f64()
            flat_t[i] = orig - eps
            f_minus = f64()
            flat_t[i] = orig
            err = relative_error(flat_g[i], (f_plus - f_minus) / (2 * eps))
            if err > tol * 0.1:
                flat_t[i] = orig + eps
                mp_plus = mp_sum_squares(doc, params, variant)
                flat_t[i] = orig - eps
                mp_minus = mp_sum_squares(doc, params, variant)
                flat_t[i] = orig
                with mp.workdps(40):
                    err = relative_error(flat_g[i], float((mp_plus - mp_minus) / (2 * eps)))
            worst = max(worst, err)
    return worst


class TestEncodeBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(21)
        doc = random_doc(rng)
        params = random_params(rng, doc.dim, 2)
        grad = encode_backward(doc, params, Variant.FULL, np.zeros((doc.num_sentences, doc.dim)))
        for _, t in grad.local_scorer.tensors():
            assert not t.any()
        for _, t in grad.global_scorer.tensors():
            assert not t.any()

    def test_no_either_gives_zero_grads(self):
        rng = np.random.default_rng(22)
        doc = random_doc(rng)
        params = random_params(rng, doc.dim, 2)
        upstream = rng.uniform(-1, 1, size=(doc.num_sentences, doc.dim))
        grad = encode_backward(doc, params, Variant.NO_EITHER, upstream)
        for _, t in grad.local_scorer.tensors():
            assert not t.any()
        for _, t in grad.global_scorer.tensors():
            assert not t.any()

    def test_upstream_shape_checked(self):
        rng = np.random.default_rng(23)
        doc = random_doc(rng, n=2, dim=3)
        with pytest.raises(DimensionMismatch):
            encode_backward(doc, random_params(rng, 3, 2), Variant.FULL, np.zeros((5, 3)))

    def test_reference_instance_sum_squares(self):
        rng = np.random.default_rng(24)
        doc = Document("g", [rng.uniform(-1, 1, size=(2, 3)) for _ in range(2)])
        params = random_params(rng, 3, 2)
        assert sum_squares_gradcheck(doc, params, Variant.FULL) <= 1e-5

    @pytest.mark.parametrize("variant", list(Variant))
    def test_fifty_random_draws_all_variants(self, variant):
        rng = np.random.default_rng(25)
        worst = 0.0
        for _ in range(50):
            doc = random_doc(rng, max_len=3)
            params = random_params(rng, doc.dim, int(rng.integers(1, 4)))
            worst = max(worst, sum_squares_gradcheck(doc, params, variant))
        assert worst <= 1e-5
