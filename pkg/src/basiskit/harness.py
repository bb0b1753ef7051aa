"""Experiment driver: builds the problem, bases, compressors, and
algorithm from a run config, executes rounds with exact bit accounting,
and emits per-round records."""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import dataio
from .algorithms import (
    BL1, BL2, BL3, GD, Diana, DivergenceError, NewtonMethod,
    default_alpha, default_eta, fednl_adapter,
)
from .basis import build_basis
from .compressors import BitCost
from .problems import newton_reference, synth_lowdim


@dataclass
class Experiment:
    config: dataio.RunConfig
    reference: object
    records: list = field(default_factory=list)
    status: str = "running"
    setup_bits_per_node: int = 0
    final_state: object = None

    @property
    def converged(self):
        return self.status == "converged"


def build_problem(config):
    if config.dataset is None:
        d = config.d if config.d is not None else 50
        return synth_lowdim(d, config.r, config.n, config.m,
                            seed=config.seed, lam=config.lam)
    with open(config.dataset, encoding="utf-8") as fh:
        raw = dataio.parse_libsvm(fh)
    return dataio.partition(raw, config.n, d=config.d, lam=config.lam)


def build_bases(problem, config):
    return [
        build_basis(config.basis, problem.d,
                    shard_features=getattr(problem.shards[i], "features", None)
                    if hasattr(problem, "shards") else None)
        for i in range(problem.n)
    ]


def _matrix_compressor(config, d):
    return dataio.parse_compressor_spec(
        config.matrix_compressor, d * d, d=d, float_bits=config.float_bits
    )


def _model_compressor(config, d):
    return dataio.parse_compressor_spec(
        config.model_compressor, d, float_bits=config.float_bits
    )


def build_algorithm(problem, bases, config):
    config = fednl_adapter(config)
    d = problem.d
    tau = config.tau if config.tau is not None else config.n
    if config.algorithm in ("bl1", "bl2", "bl3"):
        mat = _matrix_compressor(config, d)
        mod = _model_compressor(config, d)
        alpha = config.alpha if config.alpha is not None else default_alpha(mat)
        eta = config.eta if config.eta is not None else default_eta(mod)
        if config.algorithm == "bl1":
            return BL1(problem, bases, mat, mod, alpha=alpha, eta=eta,
                       p=config.p, seed=config.seed,
                       float_bits=config.float_bits,
                       gradient_in_basis=config.gradient_in_basis)
        if config.algorithm == "bl2":
            return BL2(problem, bases, mat, mod, alpha=alpha, eta=eta,
                       p=config.p, tau=tau, seed=config.seed,
                       float_bits=config.float_bits)
        return BL3(problem, bases, mat, mod, alpha=alpha, eta=eta,
                   p=config.p, tau=tau, c=config.c, option=config.option,
                   seed=config.seed, float_bits=config.float_bits)
    if config.algorithm == "newton":
        return NewtonMethod(problem, float_bits=config.float_bits,
                            seed=config.seed)
    if config.algorithm == "gd":
        return GD(problem, stepsize=config.eta, float_bits=config.float_bits,
                  seed=config.seed)
    if config.algorithm == "diana":
        grad_comp = _model_compressor(config, d)
        if grad_comp.omega is None:
            raise ValueError("the shifted gradient method needs an unbiased "
                             "model_compressor")
        return Diana(problem, grad_comp, stepsize=config.eta,
                     float_bits=config.float_bits, seed=config.seed)
    raise ValueError(f"unknown algorithm {config.algorithm!r}")


def _setup_bits(bases, config, problem):
    """One-time cost: basis broadcast (only data-driven bases must be
    sent) plus the initial coefficient grids."""
    bits = 0
    for b in bases:
        if b.closed_form == "data_subspace":
            bits += b.rank * problem.d * config.float_bits
        if config.init_hessian == "exact" and config.algorithm != "newton" \
                and config.algorithm not in ("gd", "diana"):
            bits += b.active_count * config.float_bits
    return bits // max(1, len(bases))


def run(config, x0=None, reference=None, round_hook=None, problem=None,
        algo=None):
    """Execute a configured experiment; deterministic for a fixed seed.

    `round_hook(state, stats)` is called after every round (used by the
    verification suites to check invariants in situ). A prebuilt
    `problem`/`algo` pair can be injected; otherwise both are built from
    the config."""
    config = fednl_adapter(config)
    if problem is None:
        problem = build_problem(config)
    if algo is None:
        bases = build_bases(problem, config)
        algo = build_algorithm(problem, bases, config)
    else:
        bases = getattr(algo, "bases", None) or build_bases(problem, config)
    if reference is None:
        reference = newton_reference(problem, x0)
    exp = Experiment(config=config, reference=reference)
    exp.setup_bits_per_node = _setup_bits(bases, config, problem)

    state = algo.init_state(x0, init=config.init_hessian)
    n = problem.n
    cum_up, cum_down = 0, 0  # bit totals summed over clients

    def record(state, wall_ms):
        x = state.x
        with np.errstate(over="ignore"):  # inf here means a diverged run
            fgap = problem.global_value(x) - reference.f_star
            dist = float(np.linalg.norm(x - reference.x_star))
        exp.records.append(dataio.RunRecord(
            round=state.k, fgap=fgap, dist=dist,
            up_bits=cum_up // n, down_bits=cum_down // n,
            wall_ms=wall_ms if config.record_wall_time else 0.0,
        ))
        return fgap

    fgap = record(state, 0.0)
    if fgap <= config.fgap_target:
        exp.status = "converged"
    rounds = 0
    while exp.status == "running":
        if rounds >= config.max_rounds:
            exp.status = "budget"
            break
        if (cum_up + cum_down) // n >= config.bits_budget:
            exp.status = "budget"
            break
        t0 = time.perf_counter()
        try:
            state, stats = algo.step(state)
        except DivergenceError:
            exp.status = "diverged"
            break
        wall_ms = (time.perf_counter() - t0) * 1e3
        cum_up += sum(stats.up_bits)
        cum_down += sum(stats.down_bits)
        fgap = record(state, wall_ms)
        if round_hook is not None:
            round_hook(state, stats)
        if not math.isfinite(fgap):
            exp.status = "diverged"
            break
        if fgap <= config.fgap_target:
            exp.status = "converged"
        rounds += 1

    exp.final_state = state
    if config.csv_out:
        dataio.write_csv(exp.records, config.csv_out)
    return exp


@dataclass
class CostReport:
    """Analytic per-round communication of one participating client."""

    upload: BitCost
    download: BitCost
    setup_bits: int
    float_bits: int
    notes: dict = field(default_factory=dict)

    @property
    def upload_floats(self):
        return self.upload.total / self.float_bits

    @property
    def download_floats(self):
        return self.download.total / self.float_bits


def cost_report(config):
    """Per-round bit breakdown for the configured method; for
    deterministic-size messages this matches the counters accumulated by
    `run` exactly."""
    config = fednl_adapter(config)
    problem = build_problem(config)
    bases = build_bases(problem, config)
    d = problem.d
    fb = config.float_bits
    basis0 = bases[0]
    notes = {}
    if config.algorithm == "newton":
        up = BitCost(payload=(d * d + d) * fb)
        down = BitCost(payload=d * fb)
        notes["upload_floats"] = d * d + d
    elif config.algorithm == "gd":
        up = BitCost(payload=d * fb)
        down = BitCost(payload=d * fb)
    elif config.algorithm == "diana":
        up = _model_compressor(config, d).bit_cost()
        down = BitCost(payload=d * fb)
    else:
        mat = _matrix_compressor(config, d)
        mod = _model_compressor(config, d)
        hess_cost = mat.bit_cost(size_hint=basis0.active_count)
        grad_floats = basis0.gradient_coeff_count if config.gradient_in_basis else d
        if config.algorithm == "bl1":
            up = hess_cost + BitCost(payload=int(config.p * grad_floats * fb))
            down = mod.bit_cost() + BitCost(index=1)
        elif config.algorithm == "bl2":
            up = hess_cost + BitCost(scalar=fb, index=1,
                                     payload=int(config.p * d * fb))
            down = mod.bit_cost()
        else:  # bl3
            up = hess_cost + BitCost(scalar=2 * fb, index=1,
                                     payload=int(config.p * 2 * d * fb))
            down = mod.bit_cost()
        notes["hessian_floats"] = hess_cost.payload / fb
        notes["gradient_floats"] = config.p * grad_floats
        notes["upload_floats"] = hess_cost.payload / fb + config.p * grad_floats
    setup = _setup_bits(bases, config, problem)
    return CostReport(upload=up, download=down, setup_bits=setup,
                      float_bits=fb, notes=notes)


def plot(csv_paths, out_svg, names=None, include_downloads=True):
    """Log-scale optimality gap against cumulative bits per node, one
    series per CSV."""
    series = []
    for idx, path in enumerate(csv_paths):
        records = dataio.read_csv(path)
        name = names[idx] if names else str(path)
        xs = [
            (r.up_bits + r.down_bits) if include_downloads else r.up_bits
            for r in records
        ]
        ys = [r.fgap for r in records]
        series.append((name, xs, ys))
    dataio.write_svg(series, out_svg, ylabel="f gap",
                     xlabel="bits per node" if include_downloads
                     else "upload bits per node")
