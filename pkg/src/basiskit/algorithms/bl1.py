"""Newton-type method with learned Hessian coefficients and two-way
compression: clients send compressed coefficient-grid corrections (plus
full gradients on flagged rounds), the server sends back a compressed
model step and the next round's gradient flag.

Server and clients keep synchronized copies of each client's coefficient
grid L_i; the server's aggregate estimate equals the mean of the client
estimates by construction. The ridge term lam*I is never transmitted:
the learned grids cover only the data part of the Hessians and both
sides add lam*I locally. The received corrections are folded into the
aggregate before the model step, so with exact (identity) compression
the method takes a textbook Newton step from the current model.
"""

from dataclasses import dataclass, replace

import numpy as np

from ..linalg import project_psd_mu
from .common import RoundStats, check_finite, map_clients, stream


@dataclass(frozen=True)
class BL1State:
    k: int
    z: np.ndarray  # shared model iterate
    w: np.ndarray  # gradient anchor point
    grad_w: np.ndarray  # cached full gradient at w
    xi: int  # gradient flag for the current round
    coeff_grids: list  # per-client L_i
    hess_estimates: list  # per-client reconstruction of L_i (data part)
    hess_aggregate: np.ndarray  # server mean of the client estimates
    x: np.ndarray  # latest server iterate (metrics)


class BL1:
    def __init__(self, problem, bases, matrix_comp, model_comp, *, alpha, eta,
                 p, seed, float_bits=64, gradient_in_basis=False):
        self.problem = problem
        self.bases = bases
        self.matrix_comp = matrix_comp
        self.model_comp = model_comp
        self.alpha = alpha
        self.eta = eta
        self.p = p
        self.seed = seed
        self.float_bits = float_bits
        self.gradient_in_basis = gradient_in_basis
        self.mu = problem.mu

    def _grad_bits(self, i):
        if self.gradient_in_basis:
            return self.bases[i].gradient_coeff_count * self.float_bits
        return self.problem.d * self.float_bits

    def init_state(self, x0=None, init="exact"):
        x0 = np.zeros(self.problem.d) if x0 is None else np.asarray(x0, float)
        n = self.problem.n
        if init == "zero":
            grids = [np.zeros((self.problem.d, self.problem.d)) for _ in range(n)]
        else:
            grids = [
                self.bases[i].coeffs(self.problem.local_hess_data(i, x0))
                for i in range(n)
            ]
        ests = [self.bases[i].reconstruct(grids[i]) for i in range(n)]
        grad_w = np.mean([self.problem.local_grad(i, x0) for i in range(n)], axis=0)
        return BL1State(
            k=0, z=x0.copy(), w=x0.copy(), grad_w=grad_w, xi=1,
            coeff_grids=grids, hess_estimates=ests,
            hess_aggregate=np.mean(ests, axis=0), x=x0.copy(),
        )

    def step(self, state):
        problem, n, d = self.problem, self.problem.n, self.problem.d
        k = state.k

        def client_work(i):
            grid = self.bases[i].coeffs(problem.local_hess_data(i, state.z))
            rng = stream(self.seed, k, i, "hess").generator()
            correction, cost = self.matrix_comp.apply(
                grid - state.coeff_grids[i], rng,
                size_hint=self.bases[i].active_count,
            )
            grad = problem.local_grad(i, state.z) if state.xi == 1 else None
            return correction, cost, grad

        results = map_clients(client_work, range(n))

        new_grids, new_ests, up_bits = [], [], []
        agg_update = np.zeros((d, d))
        for i, (correction, cost, _) in enumerate(results):
            new_grids.append(state.coeff_grids[i] + self.alpha * correction)
            recon = self.bases[i].reconstruct(correction)
            new_ests.append(state.hess_estimates[i] + self.alpha * recon)
            agg_update += recon
            up_bits.append(cost.total + (self._grad_bits(i) if state.xi == 1 else 0))
        hess_aggregate = state.hess_aggregate + (self.alpha / n) * agg_update

        effective = hess_aggregate + problem.lam * np.eye(d)
        projected = project_psd_mu(effective, self.mu)

        if state.xi == 1:
            w_next = state.z.copy()
            grad_w_next = np.mean([g for (_, _, g) in results], axis=0)
            g = grad_w_next
        else:
            w_next = state.w
            grad_w_next = state.grad_w
            g = projected @ (state.z - state.w) + state.grad_w

        x_next = check_finite(state.z - np.linalg.solve(projected, g), k)

        model_rng = stream(self.seed, k, 0, "model").generator()
        v, vcost = self.model_comp.apply(x_next - state.z, model_rng)
        z_next = check_finite(state.z + self.eta * v, k)
        down_bits = [vcost.total + 1] * n

        if self.p >= 1.0:
            xi_next = 1
        else:
            bern = stream(self.seed, k, 0, "bern").generator()
            xi_next = int(bern.random() < self.p)

        lam_min = float(np.linalg.eigvalsh(effective).min())
        stats = RoundStats(
            up_bits=up_bits, down_bits=down_bits,
            diagnostics={
                "projection_active": lam_min < self.mu - 1e-12,
                "lambda_min": lam_min,
            },
        )
        next_state = BL1State(
            k=k + 1, z=z_next, w=w_next, grad_w=grad_w_next, xi=xi_next,
            coeff_grids=new_grids, hess_estimates=new_ests,
            hess_aggregate=hess_aggregate, x=x_next,
        )
        return next_state, stats

    def invariant_report(self, state):
        """Server/client consistency checks; each entry is
        (name, measured, bound, ok)."""
        mean_est = np.mean(state.hess_estimates, axis=0)
        agg_err = float(np.abs(state.hess_aggregate - mean_est).max())
        recon_err = max(
            float(np.abs(
                self.bases[i].reconstruct(state.coeff_grids[i])
                - state.hess_estimates[i]
            ).max())
            for i in range(self.problem.n)
        )
        return [
            ("aggregate-vs-client-mean", agg_err, 1e-9, agg_err <= 1e-9),
            ("estimate-vs-grid-reconstruction", recon_err, 1e-9, recon_err <= 1e-9),
        ]
