"""Partial-participation variant that keeps the Hessian estimator above
the true local Hessians through a PSD basis instead of projections or
diagonal shifts.

Requires a basis of the symmetric subspace whose elements are all PSD.
Every client tracks a coefficient floor gamma_i = max(c, max|L_i|) so
that each shifted coefficient (L_i)_jl + 2 gamma_i stays >= c > 0, and a
scale factor

    beta_i = max_jl (h_jl + 2 gamma_i) / ((L_i)_jl + 2 gamma_i),

where h is the coefficient grid of the local data Hessian (at the fresh
model for option 2, at the previous one for option 1). With
beta = max_i beta_i, the maintained matrices A_i = sum (L + 2 gamma) B
and C_i = sum 2 gamma B give the dominating estimator
beta A_i - C_i >= local data Hessian, entirely through PSD-weighted
sums. The anchored vector splits as g_i = beta g1_i - g2_i with
g1_i = A_i w_i and g2_i = C_i w_i + grad_i(w_i), so a changing beta
never invalidates frozen clients' contributions.
"""

from dataclasses import dataclass

import numpy as np

from .common import RoundStats, check_finite, map_clients, sample_participants, stream


@dataclass(frozen=True)
class BL3State:
    k: int
    z: list
    w: list
    xi: list
    coeff_grids: list  # per-client symmetric grids L_i
    gammas: list  # per-client coefficient floors
    betas: list  # per-client scale factors
    a_mats: list  # per-client sum (L + 2 gamma) B
    c_mats: list  # per-client sum 2 gamma B
    g1: list  # per-client A_i w_i
    g2: list  # per-client C_i w_i + grad_i(w_i)
    dominance_points: list  # model each client's estimator must dominate at
    agg_a: np.ndarray
    agg_c: np.ndarray
    agg_g1: np.ndarray
    agg_g2: np.ndarray
    beta: float
    x: np.ndarray


class BL3:
    def __init__(self, problem, bases, matrix_comp, model_comp, *, alpha, eta,
                 p, tau, c, option, seed, float_bits=64):
        if option not in (1, 2):
            raise ValueError("option must be 1 or 2")
        if c <= 0:
            raise ValueError("the coefficient floor c must be positive")
        for b in bases:
            if b.space != "sym" or not b.psd_elements:
                raise ValueError("this method needs a PSD symmetric-space basis")
        if not matrix_comp.preserves_symmetry:
            raise ValueError(
                "the matrix compressor must preserve symmetry "
                "(use topk_sym or wrap with sym:)"
            )
        self.problem = problem
        self.bases = bases
        self.matrix_comp = matrix_comp
        self.model_comp = model_comp
        self.alpha = alpha
        self.eta = eta
        self.p = p
        self.tau = tau
        self.c = c
        self.option = option
        self.seed = seed
        self.float_bits = float_bits
        # sum of all grid positions' elements, used by the gamma terms
        self.basis_sums = [b.reconstruct(np.ones((problem.d, problem.d)))
                           for b in bases]

    def _beta_for(self, grid_target, grid_l, gamma):
        denom = grid_l + 2.0 * gamma
        if denom.min() < self.c - 1e-12:
            raise AssertionError("coefficient floor violated: denominator below c")
        return float(np.max((grid_target + 2.0 * gamma) / denom))

    def init_state(self, x0=None, init="exact"):
        problem = self.problem
        x0 = np.zeros(problem.d) if x0 is None else np.asarray(x0, float)
        n, d = problem.n, problem.d
        target_grids = [
            self.bases[i].coeffs(problem.local_hess_data(i, x0)) for i in range(n)
        ]
        if init == "zero":
            grids = [np.zeros((d, d)) for _ in range(n)]
        else:
            grids = [g.copy() for g in target_grids]
        gammas = [max(self.c, float(np.abs(g).max())) for g in grids]
        a_mats = [
            self.bases[i].reconstruct(grids[i] + 2.0 * gammas[i] * np.ones((d, d)))
            for i in range(n)
        ]
        c_mats = [2.0 * gammas[i] * self.basis_sums[i] for i in range(n)]
        betas = [
            self._beta_for(target_grids[i], grids[i], gammas[i]) for i in range(n)
        ]
        g1 = [a_mats[i] @ x0 for i in range(n)]
        g2 = [c_mats[i] @ x0 + problem.local_grad_data(i, x0) for i in range(n)]
        return BL3State(
            k=0,
            z=[x0.copy() for _ in range(n)],
            w=[x0.copy() for _ in range(n)],
            xi=[1] * n,
            coeff_grids=grids, gammas=gammas, betas=betas,
            a_mats=a_mats, c_mats=c_mats, g1=g1, g2=g2,
            dominance_points=[x0.copy() for _ in range(n)],
            agg_a=np.mean(a_mats, axis=0),
            agg_c=np.mean(c_mats, axis=0),
            agg_g1=np.mean(g1, axis=0),
            agg_g2=np.mean(g2, axis=0),
            beta=max(betas),
            x=x0.copy(),
        )

    def estimator(self, state, i=None):
        """Data-part Hessian estimator beta A - C (client i or aggregate)."""
        if i is None:
            return state.beta * state.agg_a - state.agg_c
        return state.beta * state.a_mats[i] - state.c_mats[i]

    def step(self, state):
        problem, n, d = self.problem, self.problem.n, self.problem.d
        k = state.k

        h_eff = self.estimator(state) + problem.lam * np.eye(d)
        g_eff = state.beta * state.agg_g1 - state.agg_g2
        x_next = check_finite(np.linalg.solve(h_eff, g_eff), k)

        part_rng = stream(self.seed, k, 0, "part").generator()
        participants = sample_participants(n, self.tau, part_rng)
        in_round = [False] * n
        for i in participants:
            in_round[i] = True

        ones = np.ones((d, d))

        def client_work(i):
            if not in_round[i]:
                return None
            model_rng = stream(self.seed, k, i, "model").generator()
            v, vcost = self.model_comp.apply(x_next - state.z[i], model_rng)
            z_new = check_finite(state.z[i] + self.eta * v, k)
            grid_new_target = self.bases[i].coeffs(problem.local_hess_data(i, z_new))
            hess_rng = stream(self.seed, k, i, "hess").generator()
            correction, ccost = self.matrix_comp.apply(
                grid_new_target - state.coeff_grids[i], hess_rng,
                size_hint=self.bases[i].active_count,
            )
            grid_new = state.coeff_grids[i] + self.alpha * correction
            gamma_new = max(self.c, float(np.abs(grid_new).max()))
            if self.option == 1:
                target = self.bases[i].coeffs(problem.local_hess_data(i, state.z[i]))
                dom_point = state.z[i].copy()
            else:
                target = grid_new_target
                dom_point = z_new
            beta_new = self._beta_for(target, grid_new, gamma_new)
            dgamma = gamma_new - state.gammas[i]
            a_delta = self.bases[i].reconstruct(
                self.alpha * correction + 2.0 * dgamma * ones
            )
            c_delta = 2.0 * dgamma * self.basis_sums[i]
            bern = stream(self.seed, k, i, "bern").generator()
            xi_next = int(bern.random() < self.p) if self.p < 1.0 else 1
            w_new = z_new if state.xi[i] == 1 else state.w[i]
            a_new = state.a_mats[i] + a_delta
            c_new = state.c_mats[i] + c_delta
            g1_new = a_new @ w_new
            g2_new = c_new @ w_new + problem.local_grad_data(i, w_new)
            if state.xi[i] == 1:
                g1_delta = g1_new - state.g1[i]
                g2_delta = g2_new - state.g2[i]
                extra_bits = 2 * d * self.float_bits
            else:
                # w frozen: the server rebuilds both updates from the
                # transmitted correction and gamma delta
                g1_delta = a_delta @ w_new
                g2_delta = c_delta @ w_new
                extra_bits = 0
            up = ccost.total + 2 * self.float_bits + 1 + extra_bits
            return (z_new, grid_new, gamma_new, beta_new, a_new, c_new,
                    w_new, xi_next, g1_new, g2_new, g1_delta, g2_delta,
                    a_delta, c_delta, dom_point, up, vcost.total)

        results = map_clients(client_work, range(n))

        z, w, xi = list(state.z), list(state.w), list(state.xi)
        grids = list(state.coeff_grids)
        gammas, betas = list(state.gammas), list(state.betas)
        a_mats, c_mats = list(state.a_mats), list(state.c_mats)
        g1, g2 = list(state.g1), list(state.g2)
        dom = list(state.dominance_points)
        up_bits, down_bits = [0] * n, [0] * n
        a_update = np.zeros((d, d))
        c_update = np.zeros((d, d))
        g1_update = np.zeros(d)
        g2_update = np.zeros(d)
        for i, res in enumerate(results):
            if res is None:
                continue
            (z_new, grid_new, gamma_new, beta_new, a_new, c_new, w_new,
             xi_next, g1_new, g2_new, g1_delta, g2_delta, a_delta, c_delta,
             dom_point, up, down) = res
            z[i], w[i], xi[i] = z_new, w_new, xi_next
            grids[i], gammas[i], betas[i] = grid_new, gamma_new, beta_new
            a_mats[i], c_mats[i] = a_new, c_new
            g1[i], g2[i] = g1_new, g2_new
            dom[i] = dom_point
            a_update += a_delta
            c_update += c_delta
            g1_update += g1_delta
            g2_update += g2_delta
            up_bits[i], down_bits[i] = up, down

        next_state = BL3State(
            k=k + 1, z=z, w=w, xi=xi,
            coeff_grids=grids, gammas=gammas, betas=betas,
            a_mats=a_mats, c_mats=c_mats, g1=g1, g2=g2,
            dominance_points=dom,
            agg_a=state.agg_a + a_update / n,
            agg_c=state.agg_c + c_update / n,
            agg_g1=state.agg_g1 + g1_update / n,
            agg_g2=state.agg_g2 + g2_update / n,
            beta=max(betas),
            x=x_next,
        )
        stats = RoundStats(
            up_bits=up_bits, down_bits=down_bits,
            diagnostics={"participants": participants, "beta": max(betas)},
        )
        return next_state, stats

    def invariant_report(self, state, tol=1e-8):
        """Maintained-matrix identities, aggregate consistency, the
        coefficient floor, and estimator dominance at each client's
        tracked model point."""
        problem, n, d = self.problem, self.problem.n, self.problem.d
        ones = np.ones((d, d))
        maint_err = 0.0
        floor_min = np.inf
        dominance_min = np.inf
        for i in range(n):
            a_expect = self.bases[i].reconstruct(
                state.coeff_grids[i] + 2.0 * state.gammas[i] * ones
            )
            c_expect = 2.0 * state.gammas[i] * self.basis_sums[i]
            maint_err = max(
                maint_err,
                float(np.abs(a_expect - state.a_mats[i]).max()),
                float(np.abs(c_expect - state.c_mats[i]).max()),
            )
            floor_min = min(
                floor_min,
                float((state.coeff_grids[i] + 2.0 * state.gammas[i]).min()),
            )
            target = problem.local_hess_data(i, state.dominance_points[i])
            gap = self.estimator(state, i) - target
            dominance_min = min(dominance_min, float(np.linalg.eigvalsh(gap).min()))
        agg_err = max(
            float(np.abs(state.agg_a - np.mean(state.a_mats, axis=0)).max()),
            float(np.abs(state.agg_c - np.mean(state.c_mats, axis=0)).max()),
            float(np.abs(state.agg_g1 - np.mean(state.g1, axis=0)).max()),
            float(np.abs(state.agg_g2 - np.mean(state.g2, axis=0)).max()),
        )
        return [
            ("maintained-matrices", maint_err, tol, maint_err <= tol),
            ("server-vs-client-mean", agg_err, tol, agg_err <= tol),
            ("coefficient-floor", floor_min, self.c - 1e-12,
             floor_min >= self.c - 1e-12),
            ("estimator-dominance", dominance_min, -tol, dominance_min >= -tol),
        ]
