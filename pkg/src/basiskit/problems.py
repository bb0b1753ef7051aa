"""Regularized logistic regression split across clients, plus a quadratic
test problem with the same interface.

The objective is the mean of the per-client losses, and every client
carries its own copy of the ridge term (lam/2)||x||^2, so the mean of
the local quantities equals the global one. The `*_data` variants strip
the ridge term: the data part of the Hessian is what lies inside a
client's data subspace, and the algorithms transmit only that part --
both sides add lam*I locally.
"""

import math
from dataclasses import dataclass, field

import numpy as np


def _softplus(u):
    # log(1 + e^u), stable for large |u|
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def logistic_curvature(t):
    """Second derivative of log(1 + exp(-b t)) in t; independent of the
    label sign, equals 1/4 at t = 0."""
    t = np.asarray(t, dtype=float)
    s = _sigmoid(t)
    return s * (1.0 - s)


@dataclass
class ClientShard:
    features: np.ndarray  # m x d
    labels: np.ndarray  # entries in {-1, +1}
    client_id: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("shard needs at least one data row")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("shard features contain non-finite values")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("label count does not match feature rows")


@dataclass
class LogisticProblem:
    shards: list
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("regularization lam must be positive")
        dims = {s.features.shape[1] for s in self.shards}
        if len(dims) != 1:
            raise ValueError("all shards must share the feature dimension")

    @property
    def n(self):
        return len(self.shards)

    @property
    def d(self):
        return self.shards[0].features.shape[1]

    @property
    def mu(self):
        return self.lam

    def local_value(self, i, x):
        s = self.shards[i]
        t = s.features @ x
        loss = float(np.mean(_softplus(-s.labels * t)))
        return loss + 0.5 * self.lam * float(x @ x)

    def local_grad_data(self, i, x):
        s = self.shards[i]
        t = s.features @ x
        w = -s.labels * _sigmoid(-s.labels * t)
        return s.features.T @ w / s.labels.size

    def local_grad(self, i, x):
        return self.local_grad_data(i, x) + self.lam * x

    def local_hess_data(self, i, x):
        s = self.shards[i]
        t = s.features @ x
        w = logistic_curvature(t)
        h = s.features.T @ (w[:, None] * s.features) / s.labels.size
        return 0.5 * (h + h.T)

    def local_hess(self, i, x):
        h = self.local_hess_data(i, x)
        return h + self.lam * np.eye(self.d)

    def glm_hess_coeffs(self, i, x, subspace):
        """rank x rank coefficient block of the data Hessian in the
        client's subspace coordinates; exact when the shard's rows lie in
        the subspace."""
        s = self.shards[i]
        v = subspace.vectors
        alpha = s.features @ v
        resid = s.features - alpha @ v.T
        norms = np.linalg.norm(s.features, axis=1)
        if np.any(np.linalg.norm(resid, axis=1) > 1e-8 * np.maximum(norms, 1e-300)):
            raise ValueError("shard data falls outside the given subspace")
        w = logistic_curvature(s.features @ x)
        block = alpha.T @ (w[:, None] * alpha) / s.labels.size
        return 0.5 * (block + block.T)

    def global_value(self, x):
        return float(np.mean([self.local_value(i, x) for i in range(self.n)]))

    def global_grad(self, x):
        return np.mean([self.local_grad(i, x) for i in range(self.n)], axis=0)

    def global_hess(self, x):
        return np.mean([self.local_hess(i, x) for i in range(self.n)], axis=0)


@dataclass
class QuadraticProblem:
    """Per-client quadratics (1/2) x^T Q_i x - b_i^T x plus the shared
    ridge term; Newton converges in one step. Test hook only."""

    quads: list  # PSD matrices Q_i
    lins: list  # vectors b_i
    lam: float

    @property
    def n(self):
        return len(self.quads)

    @property
    def d(self):
        return self.quads[0].shape[0]

    @property
    def mu(self):
        return self.lam

    def local_value(self, i, x):
        q, b = self.quads[i], self.lins[i]
        return float(0.5 * x @ (q @ x) - b @ x + 0.5 * self.lam * (x @ x))

    def local_grad_data(self, i, x):
        return self.quads[i] @ x - self.lins[i]

    def local_grad(self, i, x):
        return self.local_grad_data(i, x) + self.lam * x

    def local_hess_data(self, i, x):
        return self.quads[i].copy()

    def local_hess(self, i, x):
        return self.quads[i] + self.lam * np.eye(self.d)

    def global_value(self, x):
        return float(np.mean([self.local_value(i, x) for i in range(self.n)]))

    def global_grad(self, x):
        return np.mean([self.local_grad(i, x) for i in range(self.n)], axis=0)

    def global_hess(self, x):
        return np.mean([self.local_hess(i, x) for i in range(self.n)], axis=0)


@dataclass
class Reference:
    """Solution found by full Newton steps; f_star is the value at the
    final iterate."""

    x_star: np.ndarray
    f_star: float
    newton_iters: int
    grad_norm: float


def newton_reference(problem, x0=None, iters=20, grad_tol=1e-12):
    """Run `iters` full Newton steps (stopping early once the gradient
    norm drops below grad_tol) and record the optimum."""
    x = np.zeros(problem.d) if x0 is None else np.asarray(x0, dtype=float)
    f0 = problem.global_value(x)
    steps = 0
    for _ in range(iters):
        g = problem.global_grad(x)
        if np.linalg.norm(g) <= grad_tol:
            break
        h = problem.global_hess(x)
        try:
            x = x - np.linalg.solve(h, g)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("singular Hessian in the reference solve") from exc
        steps += 1
    f_star = problem.global_value(x)
    if f_star > f0:
        raise RuntimeError("reference Newton run did not descend")
    return Reference(
        x_star=x,
        f_star=f_star,
        newton_iters=steps,
        grad_norm=float(np.linalg.norm(problem.global_grad(x))),
    )


def synth_lowdim(d, r, n, m, seed, lam=1e-3, label_noise=0.1,
                 feature_scale=1.0):
    """Logistic problem whose per-client feature rows live in a planted
    r-dimensional subspace; labels come from a planted separator with a
    fraction of random flips. `feature_scale` sharpens the margins,
    which makes the problem less quadratic around its optimum."""
    if r > d:
        raise ValueError("intrinsic dimension r cannot exceed d")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5D]))
    x_sep = rng.standard_normal(d)
    shards = []
    for i in range(n):
        gauss = rng.standard_normal((d, r))
        v, _ = np.linalg.qr(gauss)
        coef = rng.standard_normal((m, r)) / math.sqrt(r)
        feats = feature_scale * (coef @ v.T)
        labels = np.sign(feats @ x_sep)
        labels[labels == 0.0] = 1.0
        flip = rng.random(m) < label_noise
        labels[flip] *= -1.0
        shards.append(ClientShard(features=feats, labels=labels, client_id=i))
    return LogisticProblem(shards=shards, lam=lam)


def estimate_hessian_lipschitz(problem, trials=50, radius=1.0, seed=0):
    """Empirical bound on ||H(x) - H(y)|| / ||x - y|| by sampling point
    pairs; reported for diagnostics, never used by the algorithms."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        x = rng.standard_normal(problem.d) * radius
        y = x + rng.standard_normal(problem.d) * (0.1 * radius)
        num = np.linalg.norm(problem.global_hess(x) - problem.global_hess(y), 2)
        den = np.linalg.norm(x - y)
        if den > 0:
            best = max(best, num / den)
    return best
