"""Partial-participation variant with per-client models and a
positive-definiteness shift.

Each client keeps its own compressed model z_i and anchor w_i. The
server's step solves with the symmetrized aggregate estimate plus the
mean Frobenius-error shift l^k, which keeps the system matrix positive
definite. Participants send the compressed coefficient correction, the
shift delta, and a one-bit flag; on flagged rounds they also send the
d-float update of the vector

    g_i = ([H_i]_s + l_i I) w_i - grad_i(w_i)

while on unflagged rounds the server reconstructs that update from the
correction itself, so server aggregates always equal the client means.
All quantities here are data parts: lam*I is added only in the solve,
where it cancels against the ridge part of the gradients.
"""

from dataclasses import dataclass

import numpy as np

from .common import RoundStats, check_finite, map_clients, sample_participants, stream


@dataclass(frozen=True)
class BL2State:
    k: int
    z: list  # per-client models
    w: list  # per-client anchors
    xi: list  # per-client flags for this round
    coeff_grids: list
    hess_estimates: list  # per-client data-part estimates
    shifts: list  # per-client l_i >= 0
    g: list  # per-client anchored Newton vectors
    agg_hess: np.ndarray
    agg_shift: float
    agg_g: np.ndarray
    x: np.ndarray


class BL2:
    def __init__(self, problem, bases, matrix_comp, model_comp, *, alpha, eta,
                 p, tau, seed, float_bits=64):
        self.problem = problem
        self.bases = bases
        self.matrix_comp = matrix_comp
        self.model_comp = model_comp
        self.alpha = alpha
        self.eta = eta
        self.p = p
        self.tau = tau
        self.seed = seed
        self.float_bits = float_bits

    def _client_g(self, i, est, shift, w):
        sym_est = 0.5 * (est + est.T)
        return (sym_est + shift * np.eye(self.problem.d)) @ w \
            - self.problem.local_grad_data(i, w)

    def init_state(self, x0=None, init="exact"):
        problem = self.problem
        x0 = np.zeros(problem.d) if x0 is None else np.asarray(x0, float)
        n = problem.n
        if init == "zero":
            grids = [np.zeros((problem.d, problem.d)) for _ in range(n)]
        else:
            grids = [
                self.bases[i].coeffs(problem.local_hess_data(i, x0))
                for i in range(n)
            ]
        ests = [self.bases[i].reconstruct(grids[i]) for i in range(n)]
        shifts = [
            float(np.linalg.norm(
                0.5 * (ests[i] + ests[i].T) - problem.local_hess_data(i, x0), "fro"
            ))
            for i in range(n)
        ]
        g = [self._client_g(i, ests[i], shifts[i], x0) for i in range(n)]
        return BL2State(
            k=0,
            z=[x0.copy() for _ in range(n)],
            w=[x0.copy() for _ in range(n)],
            xi=[1] * n,
            coeff_grids=grids, hess_estimates=ests, shifts=shifts, g=g,
            agg_hess=np.mean(ests, axis=0),
            agg_shift=float(np.mean(shifts)),
            agg_g=np.mean(g, axis=0),
            x=x0.copy(),
        )

    def solve_matrix(self, state):
        """System matrix of the server step: [H]_s + (lam + l) I."""
        d = self.problem.d
        return 0.5 * (state.agg_hess + state.agg_hess.T) \
            + (self.problem.lam + state.agg_shift) * np.eye(d)

    def step(self, state):
        problem, n, d = self.problem, self.problem.n, self.problem.d
        k = state.k

        x_next = check_finite(np.linalg.solve(self.solve_matrix(state), state.agg_g), k)

        part_rng = stream(self.seed, k, 0, "part").generator()
        participants = sample_participants(n, self.tau, part_rng)
        in_round = [False] * n
        for i in participants:
            in_round[i] = True

        def client_work(i):
            if not in_round[i]:
                return None
            model_rng = stream(self.seed, k, i, "model").generator()
            v, vcost = self.model_comp.apply(x_next - state.z[i], model_rng)
            z_new = check_finite(state.z[i] + self.eta * v, k)
            grid = self.bases[i].coeffs(problem.local_hess_data(i, z_new))
            hess_rng = stream(self.seed, k, i, "hess").generator()
            correction, ccost = self.matrix_comp.apply(
                grid - state.coeff_grids[i], hess_rng,
                size_hint=self.bases[i].active_count,
            )
            recon = self.bases[i].reconstruct(correction)
            grid_new = state.coeff_grids[i] + self.alpha * correction
            est_new = state.hess_estimates[i] + self.alpha * recon
            shift_new = float(np.linalg.norm(
                0.5 * (est_new + est_new.T) - problem.local_hess_data(i, z_new), "fro"
            ))
            bern = stream(self.seed, k, i, "bern").generator()
            xi_next = int(bern.random() < self.p) if self.p < 1.0 else 1
            w_new = z_new if state.xi[i] == 1 else state.w[i]
            g_new = self._client_g(i, est_new, shift_new, w_new)
            if state.xi[i] == 1:
                # server receives the g update directly (d floats)
                g_delta = g_new - state.g[i]
                extra_bits = d * self.float_bits
            else:
                # server rebuilds the g update from the transmitted pieces
                sym_recon = 0.5 * (recon + recon.T)
                g_delta = self.alpha * (sym_recon @ w_new) \
                    + (shift_new - state.shifts[i]) * w_new
                extra_bits = 0
            up = ccost.total + self.float_bits + 1 + extra_bits
            down = vcost.total
            return (z_new, grid_new, est_new, recon, shift_new, xi_next,
                    w_new, g_new, g_delta, up, down)

        results = map_clients(client_work, range(n))

        z, w, xi = list(state.z), list(state.w), list(state.xi)
        grids = list(state.coeff_grids)
        ests = list(state.hess_estimates)
        shifts = list(state.shifts)
        g = list(state.g)
        up_bits, down_bits = [0] * n, [0] * n
        hess_update = np.zeros((d, d))
        shift_update = 0.0
        g_update = np.zeros(d)
        for i, res in enumerate(results):
            if res is None:
                continue
            (z_new, grid_new, est_new, recon, shift_new, xi_next,
             w_new, g_new, g_delta, up, down) = res
            hess_update += self.alpha * recon
            shift_update += shift_new - shifts[i]
            g_update += g_delta
            z[i], w[i], xi[i] = z_new, w_new, xi_next
            grids[i], ests[i], shifts[i], g[i] = grid_new, est_new, shift_new, g_new
            up_bits[i], down_bits[i] = up, down

        next_state = BL2State(
            k=k + 1, z=z, w=w, xi=xi,
            coeff_grids=grids, hess_estimates=ests, shifts=shifts, g=g,
            agg_hess=state.agg_hess + hess_update / n,
            agg_shift=state.agg_shift + shift_update / n,
            agg_g=state.agg_g + g_update / n,
            x=x_next,
        )
        stats = RoundStats(
            up_bits=up_bits, down_bits=down_bits,
            diagnostics={"participants": participants},
        )
        return next_state, stats

    def invariant_report(self, state, tol=1e-8):
        """Anchored-vector relation, aggregate consistency, and the
        positive-definiteness floor of the shifted client estimates."""
        problem, n, d = self.problem, self.problem.n, self.problem.d
        g_err = 0.0
        pd_floor = np.inf
        for i in range(n):
            expected = self._client_g(
                i, state.hess_estimates[i], state.shifts[i], state.w[i]
            )
            g_err = max(g_err, float(np.abs(expected - state.g[i]).max()))
            sym_est = 0.5 * (state.hess_estimates[i] + state.hess_estimates[i].T)
            lam_min = float(np.linalg.eigvalsh(
                sym_est + (problem.lam + state.shifts[i]) * np.eye(d)
            ).min())
            pd_floor = min(pd_floor, lam_min)
        agg_err = max(
            float(np.abs(state.agg_hess - np.mean(state.hess_estimates, axis=0)).max()),
            abs(state.agg_shift - float(np.mean(state.shifts))),
            float(np.abs(state.agg_g - np.mean(state.g, axis=0)).max()),
        )
        return [
            ("anchored-vector-relation", g_err, tol, g_err <= tol),
            ("server-vs-client-mean", agg_err, tol, agg_err <= tol),
            ("shifted-estimate-pd-floor", pd_floor, problem.lam - tol,
             pd_floor >= problem.lam - tol),
        ]
