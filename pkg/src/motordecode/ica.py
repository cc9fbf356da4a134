"""Independent component analysis of epoched montage data.

Natural-gradient ICA in the extended-infomax family: data are sphered with
the inverse matrix square root of their covariance, then an orthogonal-ish
unmixing matrix is learned full batch with kurtosis-sign switching so both
super- and sub-Gaussian sources can be recovered. Scale, order, and sign
indeterminacies are fixed by convention so refits are reproducible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .epochs import EpochedDataset
from .errors import ConvergenceError, DataError

# Rotations inside a near-Gaussian noise subspace move the likelihood very
# slowly, so realistic montage data needs a few thousand iterations to pass
# the gradient test; the plateau rule below usually stops far earlier.
MAX_ITERATIONS = 4096
# Minimum samples per channel**2 for a usable (well-conditioned) fit; short
# post-movement datasets sit just above this.
MIN_SAMPLES_FACTOR = 5
RANK_TOL = 1e-10
GRADIENT_TOL = 1e-6  # relative natural-gradient norm at convergence
# Alternative stop: the likelihood gained over the last PLATEAU_WINDOW
# accepted steps is negligible relative to its magnitude.
PLATEAU_WINDOW = 40
PLATEAU_GAIN = 1e-4
INITIAL_LRATE = 0.08
LRATE_GROW = 1.2
LRATE_CAP = 2.0
MAX_CONDITION = 1e6
# Source-type signs (super- vs sub-Gaussian nonlinearity branch) adapt from
# EMA-smoothed kurtosis during a burn-in, then freeze so the likelihood
# being climbed stays fixed.
KURTOSIS_EMA = 0.9
SIGN_BURN_IN = 32
INIT_LAGS = 50  # lagged covariances diagonalized for the starting rotation


@dataclass(frozen=True, eq=False)
class IcaModel:
    weights: np.ndarray  # unmixing applied after sphering (components x channels)
    sphere: np.ndarray  # inverse matrix square root of data covariance
    channel_means: np.ndarray
    iterations: int
    final_grad_norm: float

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def composite(self) -> np.ndarray:
        """Full unmixing map: weights @ sphere."""
        return self.weights @ self.sphere

    def activations_of(self, data: np.ndarray) -> np.ndarray:
        if data.shape[0] != self.sphere.shape[0]:
            raise DataError(
                f"model expects {self.sphere.shape[0]} channels, got {data.shape[0]}"
            )
        return self.composite() @ (data - self.channel_means[:, None])


def _sphering(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cov = (data @ data.T) / data.shape[1]
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[-1] <= 0 or eigvals[0] <= RANK_TOL * eigvals[-1]:
        raise DataError("epoched data covariance is rank deficient; cannot sphere")
    sphere = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    return sphere, cov


def _log_cosh(u: np.ndarray) -> np.ndarray:
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _likelihood(w: np.ndarray, z: np.ndarray, k: np.ndarray):
    """Infomax log likelihood per sample (up to constants) and activations.

    Source densities: exp(-u^2/2) * sech^2-like factor, with the sign of the
    cosh term switched per component for sub-Gaussian sources.
    """
    u = w @ z
    sign, logdet = np.linalg.slogdet(w)
    if sign == 0:
        return -np.inf, u
    value = (
        logdet
        - 0.5 * float(np.mean(np.sum(u * u, axis=0)))
        - float(np.sum(k * _log_cosh(u).mean(axis=1)))
    )
    return value, u


def _climb(w: np.ndarray, z: np.ndarray, max_iterations: int, lrate: float):
    """Backtracking natural-gradient ascent on the infomax likelihood.

    A step is accepted only if it does not lower the likelihood, so the
    climb is monotone; stops on a small relative gradient or once a full
    window of accepted steps gains almost nothing.
    """
    n_ch, n_samples = z.shape
    eye = np.eye(n_ch)
    step = lrate
    kurt_ema = np.zeros(n_ch)
    k = np.ones(n_ch)
    likelihood, u = _likelihood(w, z, k)
    accepted = 0
    recent_gains: deque[float] = deque(maxlen=PLATEAU_WINDOW)
    grad_norm = np.inf
    iteration = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for iteration in range(1, max_iterations + 1):
            if accepted <= SIGN_BURN_IN:
                u2 = u * u
                kurt = (u2 * u2).mean(axis=1) / (u2.mean(axis=1) ** 2 + 1e-300) - 3.0
                kurt_ema = KURTOSIS_EMA * kurt_ema + (1.0 - KURTOSIS_EMA) * kurt
                k_new = np.where(kurt_ema >= 0, 1.0, -1.0)
                if not np.array_equal(k_new, k):
                    k = k_new
                    likelihood, u = _likelihood(w, z, k)
                    recent_gains.clear()
            grad = (eye - (k[:, None] * np.tanh(u)) @ u.T / n_samples
                    - u @ u.T / n_samples) @ w
            grad_norm = float(np.linalg.norm(grad) / np.linalg.norm(w))
            if grad_norm < GRADIENT_TOL and accepted > SIGN_BURN_IN:
                return w, iteration, grad_norm, True
            candidate = w + step * grad
            cand_likelihood, cand_u = _likelihood(candidate, z, k)
            if np.isfinite(cand_likelihood) and cand_likelihood >= likelihood:
                recent_gains.append(cand_likelihood - likelihood)
                w, likelihood, u = candidate, cand_likelihood, cand_u
                accepted += 1
                step = min(LRATE_CAP, step * LRATE_GROW)
                if (accepted > SIGN_BURN_IN
                        and len(recent_gains) == PLATEAU_WINDOW
                        and sum(recent_gains) < PLATEAU_GAIN * (1.0 + abs(likelihood))):
                    return w, iteration, grad_norm, True
            else:
                step *= 0.5
                if step < 1e-14:
                    return w, iteration, grad_norm, False
    return w, max_iterations, grad_norm, False


def fit_ica(dataset: EpochedDataset, seed: int,
            max_iterations: int = MAX_ITERATIONS,
            lrate: float = INITIAL_LRATE) -> IcaModel:
    """Fit ICA to all epochs of one dataset (concatenated in time).

    The climb starts from the rotation that jointly diagonalizes the lagged
    covariances (second-order structure separates narrowband components
    immediately); if that basin stalls, seeded random rotations are tried
    before giving up.
    """
    from .artifacts import joint_diagonalize, lagged_covariances

    x = dataset.concatenated()
    n_ch, n_samples = x.shape
    needed = MIN_SAMPLES_FACTOR * n_ch * n_ch
    if n_samples < needed:
        raise DataError(
            f"ICA needs >= {needed} samples for {n_ch} channels, got {n_samples}"
        )
    means = x.mean(axis=1)
    xc = x - means[:, None]
    sphere, _ = _sphering(xc)
    z = sphere @ xc

    rng = np.random.default_rng(seed)
    inits = [
        joint_diagonalize(lagged_covariances(z, INIT_LAGS)).T,
        np.linalg.qr(rng.normal(size=(n_ch, n_ch)))[0],
        np.linalg.qr(rng.normal(size=(n_ch, n_ch)))[0],
    ]
    attempts = []
    w = None
    grad_norm = np.inf
    iteration = 0
    converged = False
    for w0 in inits:
        w, iteration, grad_norm, converged = _climb(
            w0.copy(), z, max_iterations, lrate
        )
        attempts.append({"iterations": iteration, "grad_norm": grad_norm})
        if converged:
            break
    if not converged:
        raise ConvergenceError(
            f"ICA did not converge in {max_iterations} iterations "
            f"({len(attempts)} starts)",
            diagnostics={"attempts": attempts},
        )

    composite = w @ sphere
    # Scale convention: unit-norm mixing columns. Each activation's variance
    # then equals its back-projected contribution to channel space, so the
    # power features read directly as "how much signal this component
    # carries" instead of a whitened-space artifact.
    back = np.linalg.inv(composite)
    col_norms = np.linalg.norm(back, axis=0)
    if np.any(col_norms == 0) or not np.all(np.isfinite(col_norms)):
        raise ConvergenceError("ICA produced a degenerate mixing column")
    w = w * col_norms[:, None]
    composite = w @ sphere

    # Order components by descending back-projected variance (with the
    # scale convention above, that is simply activation variance).
    acts = composite @ xc
    order = np.argsort(-acts.var(axis=1), kind="stable")
    w = w[order, :]
    composite = composite[order, :]

    # Sign convention: dominant entry of each composite unmixing row positive.
    signs = np.sign(
        composite[np.arange(n_ch), np.argmax(np.abs(composite), axis=1)]
    )
    signs[signs == 0] = 1.0
    w = w * signs[:, None]
    composite = composite[:] * signs[:, None]

    cond = np.linalg.cond(w)
    if not np.isfinite(cond) or cond >= MAX_CONDITION:
        raise ConvergenceError(
            f"ICA weights badly conditioned (cond={cond:.3g})",
            diagnostics={"condition": cond},
        )

    return IcaModel(
        weights=w,
        sphere=sphere,
        channel_means=means,
        iterations=iteration,
        final_grad_norm=grad_norm,
    )


def activations(model: IcaModel, dataset: EpochedDataset) -> np.ndarray:
    """Component activations for all epochs of a dataset, concatenated."""
    return model.activations_of(dataset.concatenated())
