"""Naive distributed Newton baseline: every round each client uploads
its full Hessian (d^2 floats) and gradient (d floats)."""

from dataclasses import dataclass

import numpy as np

from .common import RoundStats, check_finite, map_clients


@dataclass(frozen=True)
class NewtonState:
    k: int
    x: np.ndarray


class NewtonMethod:
    def __init__(self, problem, *, float_bits=64, seed=0):
        self.problem = problem
        self.float_bits = float_bits
        self.seed = seed

    def init_state(self, x0=None, init=None):
        x0 = np.zeros(self.problem.d) if x0 is None else np.asarray(x0, float)
        return NewtonState(k=0, x=x0.copy())

    def step(self, state):
        problem, n, d = self.problem, self.problem.n, self.problem.d
        pairs = map_clients(
            lambda i: (problem.local_hess(i, state.x), problem.local_grad(i, state.x)),
            range(n),
        )
        h = np.mean([p[0] for p in pairs], axis=0)
        g = np.mean([p[1] for p in pairs], axis=0)
        x_next = check_finite(state.x - np.linalg.solve(h, g), state.k)
        stats = RoundStats(
            up_bits=[(d * d + d) * self.float_bits] * n,
            down_bits=[d * self.float_bits] * n,
        )
        return NewtonState(k=state.k + 1, x=x_next), stats

    def invariant_report(self, state):
        return []


def fednl_adapter(config):
    """Lower a compressed-Newton run request onto the basis-learning
    methods: the full-matrix variant is the bidirectional method with the
    standard basis and a symmetrized matrix compressor, the
    partial-participation variant maps onto the shifted method.
    Already-lowered configs pass through unchanged."""
    if config.algorithm == "fednl":
        spec = config.matrix_compressor
        if not spec.startswith("sym:") and spec != "identity":
            spec = "sym:" + spec
        return config.replace(algorithm="bl1", basis="standard",
                              matrix_compressor=spec)
    if config.algorithm == "fednl-pp":
        spec = config.matrix_compressor
        if not spec.startswith("sym:") and spec != "identity":
            spec = "sym:" + spec
        return config.replace(algorithm="bl2", basis="standard",
                              matrix_compressor=spec)
    return config
