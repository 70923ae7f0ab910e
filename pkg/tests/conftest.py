import numpy as np

from reslin import (
    CorrectedEstimate,
    LinearApprox,
    ResidualStats,
    SecondMomentEstimate,
    eigen_bounds,
)


def make_estimate(w_e, sigma) -> CorrectedEstimate:
    """Assemble a CorrectedEstimate around given weights and covariance."""
    w_e = np.asarray(w_e, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    d = w_e.shape[0]
    a = np.eye(d)
    sme = SecondMomentEstimate(a, "exact-analytic", 0, eigen_bounds(a))
    z = np.zeros((d + 1, d))
    rs = ResidualStats(z, np.zeros(d), np.zeros((d, d)), d + 1)
    return CorrectedEstimate(w_e, sigma, LinearApprox(w_e, "test"), rs, sme)


def random_spd(rng, d, scale=1.0):
    """Random well-conditioned symmetric positive definite matrix."""
    q = rng.standard_normal((d, d))
    return scale * (q @ q.T + d * np.eye(d))


def gradient_rel_errors(p, ds, rng, count, h=1e-5):
    """Relative errors of backprop vs central differences at random coords."""
    from reslin import MLPPredictor, mlp_gradient, mse_loss

    flat = np.concatenate([w.ravel() for w in p.weights] + [b.ravel() for b in p.biases])
    grads = mlp_gradient(p, ds)
    flat_grad = np.concatenate(
        [g.ravel() for g in grads["weights"]] + [g.ravel() for g in grads["biases"]]
    )

    def loss_at(values):
        weights, biases = [], []
        pos = 0
        for w in p.weights:
            weights.append(values[pos : pos + w.size].reshape(w.shape))
            pos += w.size
        for b in p.biases:
            biases.append(values[pos : pos + b.size].reshape(b.shape))
            pos += b.size
        bumped = MLPPredictor(tuple(weights), tuple(biases), p.activation, 0, 0.0)
        return mse_loss(bumped, ds).mean

    errors = []
    for i in rng.choice(flat.size, size=count, replace=False):
        up, down = flat.copy(), flat.copy()
        up[i] += h
        down[i] -= h
        fd = (loss_at(up) - loss_at(down)) / (2.0 * h)
        denom = max(abs(fd), abs(flat_grad[i]), 1e-8)
        errors.append(abs(fd - flat_grad[i]) / denom)
    return errors
