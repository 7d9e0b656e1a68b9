"""Central finite-difference gradient checking helpers."""

import numpy as np

from idcm.corpus import PAD_ID


def relative_error(numeric, analytic, atol=1e-8):
    scale = max(abs(numeric), abs(analytic))
    if scale < atol:
        return abs(numeric - analytic)
    return abs(numeric - analytic) / scale


def check_vector_gradient(fn, x, analytic, eps=1e-6, tol=1e-6):
    """fn(x) -> scalar loss; analytic is d fn / d x at the given point."""
    x = np.asarray(x, dtype=np.float64)
    for idx in range(x.size):
        bumped = x.copy()
        bumped[idx] += eps
        f_plus = fn(bumped)
        bumped[idx] -= 2 * eps
        f_minus = fn(bumped)
        numeric = (f_plus - f_minus) / (2 * eps)
        err = relative_error(numeric, float(analytic[idx]))
        assert err <= tol, f"gradient mismatch at {idx}: numeric {numeric}, analytic {analytic[idx]}"


def check_model_gradients(model, scalar_fn, grads, eps=1e-5, rtol=1e-4, atol=1e-8):
    """Perturb every trainable entry of `model` and compare to `grads`.

    The PAD embedding row is pinned to zero by contract and is skipped.
    Returns the worst relative error seen.
    """
    worst = 0.0
    for name, arr in model.parameters().items():
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            if name == "embeddings" and idx[0] == PAD_ID:
                continue
            original = arr[idx]
            arr[idx] = original + eps
            f_plus = scalar_fn()
            arr[idx] = original - eps
            f_minus = scalar_fn()
            arr[idx] = original
            numeric = (f_plus - f_minus) / (2 * eps)
            analytic = float(grads[name][idx])
            err = relative_error(numeric, analytic, atol)
            worst = max(worst, err)
            assert err <= rtol, (
                f"{name}{idx}: numeric {numeric}, analytic {analytic}, rel err {err}"
            )
    return worst
