import numpy as np
import pytest


def finite_difference_check(params, build_loss, eps=1e-5, tol=1e-4):
    """Compare analytic gradients against central differences.

    build_loss must reconstruct the loss from the current parameter values
    on every call. Returns the worst relative error over all parameters.
    """
    for p in params:
        p.zero_grad()
    loss = build_loss()
    loss.backward()
    worst = 0.0
    for p in params:
        assert p.grad is not None, f"no gradient for {p.name or p}"
        analytic = p.grad.copy()
        flat = p.data.ravel()
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = build_loss().item()
            flat[i] = orig - eps
            down = build_loss().item()
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * eps)
        numeric = numeric.reshape(p.data.shape)
        rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric))
        worst = max(worst, rel.max())
        assert rel.max() < tol, (
            f"gradient mismatch for {p.name or 'param'}: worst rel err {rel.max():.3e}")
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
