"""Analytic gradients of the selection scorer against finite differences."""

import numpy as np
import pytest

from idcm.ck import CkModel, KernelBank, ck_backward, ck_forward

from gradcheck import check_model_gradients
from test_ck import random_model


def random_instance(rng, model_kwargs=None):
    model = random_model(rng, **(model_kwargs or {}))
    q = rng.integers(2, 14, size=int(rng.integers(1, 4)))
    p_real = rng.integers(2, 14, size=int(rng.integers(1, 5)))
    p = np.concatenate([p_real, np.zeros(int(rng.integers(0, 3)), dtype=np.int64)])
    upstream = float(rng.normal())
    return model, q, p, upstream


class TestGradients:
    def test_matches_finite_differences(self, rng):
        for trial in range(12):
            kwargs = {"d_proj": 3} if trial % 4 == 3 else None
            model, q, p, upstream = random_instance(rng, kwargs)
            grads = ck_backward(model, q, p, upstream)
            check_model_gradients(
                model, lambda: ck_forward(model, q, p).value * upstream, grads
            )

    def test_zero_upstream_gives_zero_gradients(self, rng):
        model, q, p, _ = random_instance(rng)
        grads = ck_backward(model, q, p, 0.0)
        for name, grad in grads.items():
            assert (grad == 0).all(), name

    def test_duplicated_token_gradient_sums_occurrences(self, rng):
        """Embedding gradient of a repeated token equals the sum of the
        gradients of two distinct tokens given identical embeddings.  The
        split tokens stay out of the query so only passage occurrences
        contribute to their rows."""
        model, _, _, upstream = random_instance(rng)
        q = np.array([2, 3])
        token_a, token_b = 7, 8
        model.embeddings[token_b] = model.embeddings[token_a]
        p_dup = np.array([token_a, 5, token_a])
        p_split = np.array([token_a, 5, token_b])
        grads_dup = ck_backward(model, q, p_dup, upstream)
        grads_split = ck_backward(model, q, p_split, upstream)
        np.testing.assert_allclose(
            grads_dup["embeddings"][token_a],
            grads_split["embeddings"][token_a] + grads_split["embeddings"][token_b],
            rtol=1e-10,
            atol=1e-12,
        )

    def test_pad_row_gradient_is_zero(self, rng):
        model, q, _, upstream = random_instance(rng)
        p = np.array([4, 5, 0, 0])  # trailing PAD feeds the conv but stays frozen
        grads = ck_backward(model, q, p, upstream)
        assert (grads["embeddings"][0] == 0).all()

    def test_upstream_scales_linearly(self, rng):
        model, q, p, _ = random_instance(rng)
        g1 = ck_backward(model, q, p, 1.0)
        g2 = ck_backward(model, q, p, -2.5)
        for name in g1:
            np.testing.assert_allclose(g2[name], -2.5 * g1[name], rtol=1e-12, atol=0)
