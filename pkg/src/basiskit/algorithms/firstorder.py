"""First-order reference methods: plain gradient descent and a
variance-reduced compressed-gradient method with per-client shifts.

Stepsizes follow the standard theory: GD uses 1/L with L the largest
eigenvalue of the Hessian at the start (power iteration); the shifted
method uses a shift rate 1/(omega+1) and a model stepsize
1/(L (1 + 6 omega / n)), the usual strongly-convex choice for this
family. Each client uploads either a full d-float gradient (GD) or one
compressed gradient difference; the server broadcasts the d-float model.
"""

from dataclasses import dataclass

import numpy as np

from ..linalg import power_iteration
from .common import RoundStats, check_finite, map_clients, stream


@dataclass(frozen=True)
class GDState:
    k: int
    x: np.ndarray


class GD:
    def __init__(self, problem, *, stepsize=None, float_bits=64, seed=0):
        self.problem = problem
        self.float_bits = float_bits
        self.seed = seed
        if stepsize is None:
            smooth = power_iteration(problem.global_hess(np.zeros(problem.d)))
            stepsize = 1.0 / smooth
        self.stepsize = stepsize

    def init_state(self, x0=None, init=None):
        x0 = np.zeros(self.problem.d) if x0 is None else np.asarray(x0, float)
        return GDState(k=0, x=x0.copy())

    def step(self, state):
        problem, n, d = self.problem, self.problem.n, self.problem.d
        grads = map_clients(lambda i: problem.local_grad(i, state.x), range(n))
        g = np.mean(grads, axis=0)
        x_next = check_finite(state.x - self.stepsize * g, state.k)
        stats = RoundStats(
            up_bits=[d * self.float_bits] * n,
            down_bits=[d * self.float_bits] * n,
        )
        return GDState(k=state.k + 1, x=x_next), stats

    def invariant_report(self, state):
        return []


@dataclass(frozen=True)
class DianaState:
    k: int
    x: np.ndarray
    shifts: list  # per-client gradient shifts h_i
    server_shift: np.ndarray


class Diana:
    def __init__(self, problem, grad_comp, *, stepsize=None, shift_rate=None,
                 float_bits=64, seed=0):
        if grad_comp.omega is None:
            raise ValueError("the gradient compressor must be unbiased")
        self.problem = problem
        self.grad_comp = grad_comp
        self.float_bits = float_bits
        self.seed = seed
        omega = grad_comp.omega
        self.shift_rate = shift_rate if shift_rate is not None else 1.0 / (omega + 1.0)
        if stepsize is None:
            smooth = power_iteration(problem.global_hess(np.zeros(problem.d)))
            stepsize = 1.0 / (smooth * (1.0 + 6.0 * omega / problem.n))
        self.stepsize = stepsize

    def init_state(self, x0=None, init=None):
        x0 = np.zeros(self.problem.d) if x0 is None else np.asarray(x0, float)
        n, d = self.problem.n, self.problem.d
        return DianaState(
            k=0, x=x0.copy(),
            shifts=[np.zeros(d) for _ in range(n)],
            server_shift=np.zeros(d),
        )

    def step(self, state):
        problem, n = self.problem, self.problem.n
        k = state.k

        def client_work(i):
            grad = problem.local_grad(i, state.x)
            rng = stream(self.seed, k, i, "grad").generator()
            delta, cost = self.grad_comp.apply(grad - state.shifts[i], rng)
            return delta, cost

        results = map_clients(client_work, range(n))
        deltas = [r[0] for r in results]
        mean_delta = np.mean(deltas, axis=0)
        g_est = state.server_shift + mean_delta
        x_next = check_finite(state.x - self.stepsize * g_est, k)
        shifts = [
            state.shifts[i] + self.shift_rate * deltas[i] for i in range(n)
        ]
        stats = RoundStats(
            up_bits=[r[1].total for r in results],
            down_bits=[problem.d * self.float_bits] * n,
        )
        next_state = DianaState(
            k=k + 1, x=x_next, shifts=shifts,
            server_shift=state.server_shift + self.shift_rate * mean_delta,
        )
        return next_state, stats

    def invariant_report(self, state, tol=1e-8):
        err = float(np.abs(
            state.server_shift - np.mean(state.shifts, axis=0)
        ).max())
        return [("server-vs-client-shift-mean", err, tol, err <= tol)]
