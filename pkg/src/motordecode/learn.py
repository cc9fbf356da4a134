"""Binary classifiers built from first principles.

Two models: a single-hidden-layer sigmoid network trained by full-batch
backpropagation on squared error, and a soft-margin SVM with the Anova
kernel K(x, z) = (sum_k exp(-gamma (x_k - z_k)^2))^degree trained by
sequential minimal optimization with most-violating-pair selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .edf import Side
from .errors import ConvergenceError, DataError

SVM_DEFAULT_C = 1.0
SVM_DEFAULT_TOL = 1e-3
# Coordinate-pair descent crawls on the very ill-conditioned kernels that
# near-duplicate rows produce at high degree; such grid points are treated
# as convergence failures rather than spending minutes on them.
SVM_MAX_ITER = 30_000
SMO_REFRESH_EVERY = 4096  # exact score recomputation cadence
NN_DEFAULT_LRATE = 0.1
NN_DEFAULT_EPOCHS = 2000
NN_PATIENCE = 50
NN_MIN_IMPROVEMENT = 1e-7
NN_TARGET_LO = 0.1  # Left
NN_TARGET_HI = 0.9  # Right


def encode_sides(sides) -> np.ndarray:
    """Side labels to -1 (Left) / +1 (Right)."""
    return np.array([-1.0 if s is Side.LEFT else 1.0 for s in sides])


def decode_side(value: float) -> Side:
    return Side.RIGHT if value > 0 else Side.LEFT


# ---------------------------------------------------------------------------
# Anova kernel


def anova_kernel(x: np.ndarray, z: np.ndarray, gamma: float, degree: int) -> float:
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape or x.ndim != 1:
        raise DataError(f"kernel inputs must be equal-length vectors, got {x.shape} vs {z.shape}")
    if gamma <= 0:
        raise DataError(f"gamma must be positive, got {gamma}")
    if degree < 1:
        raise DataError(f"degree must be >= 1, got {degree}")
    diff = x - z
    return float(np.sum(np.exp(-gamma * diff * diff)) ** degree)


def anova_kernel_matrix(a: np.ndarray, b: np.ndarray, gamma: float,
                        degree: int) -> np.ndarray:
    """Pairwise kernel between the rows of two sample matrices."""
    if a.shape[1] != b.shape[1]:
        raise DataError(f"kernel inputs disagree on dimension: {a.shape[1]} vs {b.shape[1]}")
    diff = a[:, None, :] - b[None, :, :]
    base = np.exp(-gamma * diff * diff).sum(axis=2)
    return base**degree


# ---------------------------------------------------------------------------
# SVM (SMO)


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_vectors: np.ndarray  # kept training rows
    coefficients: np.ndarray  # alpha_i * y_i for each kept row
    bias: float
    gamma: float
    degree: int
    box_c: float
    iterations: int
    max_kkt_violation: float

    def decision(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.support_vectors.shape[1],):
            raise DataError(
                f"model expects {self.support_vectors.shape[1]}-vectors, got {x.shape}"
            )
        k = anova_kernel_matrix(x[None, :], self.support_vectors, self.gamma, self.degree)
        return float((k @ self.coefficients)[0] + self.bias)

    def decision_batch(self, xs: np.ndarray) -> np.ndarray:
        k = anova_kernel_matrix(xs, self.support_vectors, self.gamma, self.degree)
        return k @ self.coefficients + self.bias


def smo_solve(kernel: np.ndarray, y: np.ndarray, box_c: float,
              tol: float = SVM_DEFAULT_TOL, max_iter: int = SVM_MAX_ITER,
              ) -> tuple[np.ndarray, float, int, float]:
    """SMO with second-order working-pair selection on a precomputed kernel.

    Minimizes 0.5 a'Qa - 1'a (Q = yy' * K) subject to 0 <= a <= C and
    y'a = 0. The first index is the most violating one; the partner is the
    one giving the largest second-order gain, which avoids the zigzag that
    plain most-violating-pair selection falls into on near-duplicate rows.
    Returns (alpha, bias, iterations, final KKT violation).

    The optimality score (-y * gradient) and the up/low index sets are
    maintained incrementally and refreshed exactly every few thousand steps
    to bound float drift.
    """
    n = kernel.shape[0]
    diag = np.diag(kernel).copy()
    alpha = np.zeros(n)
    y_pos = y > 0
    # score_k = -y_k * grad_k; grad starts at -1 everywhere
    score = y.copy().astype(np.float64)
    up = y_pos.copy()
    low = ~y_pos
    violation = np.inf
    iteration = 0
    for iteration in range(1, max_iter + 1):
        if iteration % SMO_REFRESH_EVERY == 0:
            score = y - kernel @ (alpha * y)
        masked_up = np.where(up, score, -np.inf)
        i = int(np.argmax(masked_up))
        m_up = masked_up[i]
        m_low = float(np.where(low, score, np.inf).min())
        violation = m_up - m_low
        if violation <= tol:
            break
        gap = m_up - score  # positive where progress with i is possible
        quad = np.maximum(diag[i] + diag - 2.0 * kernel[:, i], 1e-12)
        objective = np.where(low & (gap > 0), -(gap * gap) / quad, np.inf)
        j = int(np.argmin(objective))
        t = gap[j] / quad[j]
        # Box constraints along the feasible direction (alpha_i moves by
        # +y_i t, alpha_j by -y_j t).
        t = min(t, box_c - alpha[i] if y_pos[i] else alpha[i])
        t = min(t, box_c - alpha[j] if not y_pos[j] else alpha[j])
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        score -= t * (kernel[:, i] - kernel[:, j])
        for k in (i, j):
            interior_up = alpha[k] < box_c if y_pos[k] else alpha[k] > 0
            interior_low = alpha[k] > 0 if y_pos[k] else alpha[k] < box_c
            up[k] = interior_up
            low[k] = interior_low
    else:
        raise ConvergenceError(
            f"SMO did not converge in {max_iter} iterations",
            diagnostics={"max_kkt_violation": violation},
        )

    score = y - kernel @ (alpha * y)
    hi = score[up].max() if up.any() else 0.0
    lo = score[low].min() if low.any() else 0.0
    return alpha, float(0.5 * (hi + lo)), iteration, float(max(violation, 0.0))


def train_svm(features: np.ndarray, labels: np.ndarray, degree: int, gamma: float,
              box_c: float = SVM_DEFAULT_C, tol: float = SVM_DEFAULT_TOL,
              max_iter: int = SVM_MAX_ITER, seed: int | None = None) -> SvmModel:
    """Fit the Anova-kernel SVM by SMO.

    The working pair is always the most violating one, so the run is
    deterministic regardless of ``seed`` (accepted for interface parity).
    The dataset is small enough that the full kernel matrix is precomputed.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise DataError("labels must be -1/+1")
    if len(np.unique(y)) < 2:
        raise DataError("training needs both classes present")

    kernel = anova_kernel_matrix(x, x, gamma, degree)
    alpha, bias, iterations, violation = smo_solve(
        kernel, y, box_c, tol=tol, max_iter=max_iter
    )

    keep = alpha > 1e-12
    if not keep.any():
        keep = np.ones(x.shape[0], dtype=bool)
    return SvmModel(
        support_vectors=x[keep].copy(),
        coefficients=(alpha * y)[keep].copy(),
        bias=bias,
        gamma=float(gamma),
        degree=int(degree),
        box_c=float(box_c),
        iterations=iterations,
        max_kkt_violation=violation,
    )


# ---------------------------------------------------------------------------
# neural network


@dataclass(frozen=True, eq=False)
class MlpModel:
    w_hidden: np.ndarray  # hidden x inputs
    b_hidden: np.ndarray
    w_out: np.ndarray  # hidden
    b_out: float
    epochs_run: int
    final_loss: float
    seed: int

    @property
    def hidden_nodes(self) -> int:
        return self.w_hidden.shape[0]

    def forward(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(xs)
        if xs.shape[1] != self.w_hidden.shape[1]:
            raise DataError(
                f"model expects {self.w_hidden.shape[1]}-vectors, got {xs.shape[1]}"
            )
        hidden = expit(xs @ self.w_hidden.T + self.b_hidden)
        return expit(hidden @ self.w_out + self.b_out)


def _init_mlp(n_inputs: int, hidden_nodes: int, seed: int):
    rng = np.random.default_rng(seed)
    w_hidden = rng.uniform(-0.5, 0.5, size=(hidden_nodes, n_inputs))
    b_hidden = rng.uniform(-0.5, 0.5, size=hidden_nodes)
    w_out = rng.uniform(-0.5, 0.5, size=hidden_nodes)
    b_out = rng.uniform(-0.5, 0.5)
    return w_hidden, b_hidden, w_out, b_out


def nn_loss_and_gradients(params, xs: np.ndarray, targets: np.ndarray):
    """Mean squared error and its gradients for the 1-hidden-layer net."""
    w_hidden, b_hidden, w_out, b_out = params
    n = xs.shape[0]
    hidden = expit(xs @ w_hidden.T + b_hidden)
    out = expit(hidden @ w_out + b_out)
    err = out - targets
    loss = float(np.mean(err * err))

    d_out = (2.0 / n) * err * out * (1.0 - out)
    g_w_out = hidden.T @ d_out
    g_b_out = float(d_out.sum())
    d_hidden = np.outer(d_out, w_out) * hidden * (1.0 - hidden)
    g_w_hidden = d_hidden.T @ xs
    g_b_hidden = d_hidden.sum(axis=0)
    return loss, (g_w_hidden, g_b_hidden, g_w_out, g_b_out)


def train_nn(features: np.ndarray, sides_or_targets, hidden_nodes: int,
             learning_rate: float = NN_DEFAULT_LRATE,
             max_epochs: int = NN_DEFAULT_EPOCHS, seed: int = 0) -> MlpModel:
    """Full-batch gradient descent with backtracking, so the loss never
    increases over accepted steps."""
    if hidden_nodes < 1:
        raise DataError(f"hidden node count must be >= 1, got {hidden_nodes}")
    xs = np.asarray(features, dtype=np.float64)
    raw = list(sides_or_targets)
    if raw and isinstance(raw[0], Side):
        targets = np.array([NN_TARGET_LO if s is Side.LEFT else NN_TARGET_HI for s in raw])
    else:
        targets = np.asarray(raw, dtype=np.float64)

    params = _init_mlp(xs.shape[1], hidden_nodes, seed)
    if max_epochs == 0:
        loss, _ = nn_loss_and_gradients(params, xs, targets)
        return MlpModel(*params, epochs_run=0, final_loss=loss, seed=seed)

    loss, grads = nn_loss_and_gradients(params, xs, targets)
    lrate = learning_rate
    stall = 0
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        while True:
            candidate = tuple(p - lrate * g for p, g in zip(params, grads))
            new_loss, new_grads = nn_loss_and_gradients(candidate, xs, targets)
            if not np.isfinite(new_loss):
                raise ConvergenceError(
                    "NN training diverged (non-finite loss); lower the learning rate",
                    diagnostics={"epoch": epoch, "learning_rate": lrate},
                )
            if new_loss <= loss:
                break
            lrate *= 0.5
            if lrate < 1e-14:
                # Gradient no longer improves the loss at any step size.
                new_loss, new_grads, candidate = loss, grads, params
                break
        improvement = loss - new_loss
        params, loss, grads = candidate, new_loss, new_grads
        stall = stall + 1 if improvement < NN_MIN_IMPROVEMENT else 0
        if stall >= NN_PATIENCE:
            break

    return MlpModel(*params, epochs_run=epoch, final_loss=loss, seed=seed)


# ---------------------------------------------------------------------------
# prediction


def predict(model, x: np.ndarray) -> tuple[Side, float]:
    """Label plus raw score (SVM decision value, or NN output in [0, 1];
    exact NN score 0.5 resolves to Left)."""
    if isinstance(model, SvmModel):
        value = model.decision(x)
        return decode_side(value), value
    if isinstance(model, MlpModel):
        score = float(model.forward(np.asarray(x, dtype=np.float64)[None, :])[0])
        return (Side.RIGHT if score > 0.5 else Side.LEFT), score
    raise DataError(f"unknown model type {type(model).__name__}")


def predict_batch(model, xs: np.ndarray) -> np.ndarray:
    """Vector of -1/+1 labels for a sample matrix."""
    if isinstance(model, SvmModel):
        values = model.decision_batch(xs)
        return np.where(values > 0, 1.0, -1.0)
    if isinstance(model, MlpModel):
        scores = model.forward(xs)
        return np.where(scores > 0.5, 1.0, -1.0)
    raise DataError(f"unknown model type {type(model).__name__}")
