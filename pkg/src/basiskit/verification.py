"""Built-in verification suites: compressor certification, basis
round-trips, the single-step contraction lemmas behind the convergence
analysis, exact-compression Newton equivalence, and the in-run
invariants of the partial-participation methods."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import compressors as comp
from .basis import (
    GenericBasis, PsdSymBasis, StandardBasis, TriangularSymBasis,
    build_basis, data_subspace_basis, outer_product_rank, subspace_matrix_basis,
)
from .dataio import RunConfig
from .harness import build_algorithm, build_bases, build_problem, run
from .problems import newton_reference, synth_lowdim


@dataclass
class VerifyCheck:
    name: str
    passed: bool
    measured: float
    bound: float


@dataclass
class VerifyReport:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, measured, bound, passed=None):
        if passed is None:
            passed = measured <= bound
        self.checks.append(VerifyCheck(name, bool(passed), float(measured),
                                       float(bound)))

    def extend_from(self, other):
        self.checks.extend(other.checks)


def shipped_compressors(d, float_bits=64):
    """One instance of every compressor kind, bound to dimension d."""
    n = d * d
    s = max(1, round(math.sqrt(d)))
    dith = comp.RandomDithering(s, 2, d, float_bits)
    return [
        comp.Identity(n, float_bits),
        comp.TopK(max(1, n // 4), n, float_bits),
        comp.TopKSym(max(1, d), d, float_bits),
        comp.RandK(max(1, n // 4), n, float_bits),
        comp.RankR(1, d, float_bits),
        comp.RandomDithering(s, 2, d, float_bits),
        comp.RandomDithering(s, math.inf, d, float_bits),
        comp.NaturalCompression(d, float_bits),
        comp.ComposedRankUnbiased(1, dith, dith, d, float_bits),
        comp.ComposedRankUnbiased(
            1, comp.NaturalCompression(d, float_bits),
            comp.NaturalCompression(d, float_bits), d, float_bits),
        comp.ComposedSparseUnbiased(
            max(1, n // 4),
            comp.RandomDithering(s, 2, max(1, n // 4), float_bits),
            n, float_bits),
        comp.ComposedSparseUnbiased(
            max(1, n // 4), comp.NaturalCompression(max(1, n // 4), float_bits),
            n, float_bits),
        comp.Symmetrized(comp.RankR(1, d, float_bits)),
        comp.Symmetrized(comp.TopK(max(1, n // 4), n, float_bits)),
    ]


def suite_compressors(dims=(2, 4, 8), trials=1000, draws=10000, seed=0):
    report = VerifyReport(suite="compressors")
    for d in dims:
        for c in shipped_compressors(d):
            cert = comp.certify(c, trials=trials, draws=draws, seed=seed)
            for chk in cert.checks:
                report.add(f"d={d}:{c.name}:{chk.name}", chk.measured,
                           chk.bound, chk.passed)
    return report


def suite_basis(seed=0, trials=200):
    report = VerifyReport(suite="basis")
    rng = np.random.default_rng(seed)
    for d in (2, 3, 7):
        cases = [
            ("standard", StandardBasis(d), False),
            ("triangular_sym", TriangularSymBasis(d), False),
            ("psd_sym", PsdSymBasis(d), True),
        ]
        sub = data_subspace_basis(rng.standard_normal((max(2, d - 1), d)))
        cases.append(("data_subspace", subspace_matrix_basis(sub, d), False))
        for name, b, symmetric_only in cases:
            worst = 0.0
            for _ in range(trials):
                a = rng.standard_normal((d, d))
                if symmetric_only or b.space == "sym":
                    a = 0.5 * (a + a.T)
                back = b.reconstruct(b.coeffs(a))
                scale = 1.0 + float(np.linalg.norm(a, "fro"))
                worst = max(worst, float(np.abs(back - a).max()) / scale)
            report.add(f"roundtrip:d={d}:{name}", worst, 1e-9)
    # outer products of independent vectors stay independent
    worst_rank_gap = 0
    for _ in range(20):
        d, r = 6, 3
        v, _ = np.linalg.qr(rng.standard_normal((d, r)))
        worst_rank_gap = max(worst_rank_gap, abs(outer_product_rank(v) - r * r))
    report.add("outer-product-rank", worst_rank_gap, 0)
    return report


def lemma_step_bound(q, eta, draws, seed, contractive):
    """Worst slack of the compressed-step inequality over random triples:
    E||z + eta Q(x - z) - y||^2 against
    (1-eta)||z-y||^2 + eta||x-y||^2            (unbiased, eta <= 1/(w+1))
    (1-d/4) ||z-y||^2 + (6/d - 7/2)||x-y||^2   (contraction, eta = 1)."""
    rng = np.random.default_rng(seed)
    dim = q.dim if hasattr(q, "dim") else q.size
    worst = -math.inf
    for _ in range(4):
        x = rng.standard_normal(dim)
        y = rng.standard_normal(dim)
        z = rng.standard_normal(dim)
        if contractive:
            a_coef = 1.0 - q.delta / 4.0
            b_coef = 6.0 / q.delta - 3.5
        else:
            a_coef = 1.0 - eta
            b_coef = eta
        bound = a_coef * float(np.sum((z - y) ** 2)) \
            + b_coef * float(np.sum((x - y) ** 2))
        if q.deterministic:
            out, _ = q.apply(x - z, rng)
            val = float(np.sum((z + eta * out - y) ** 2))
            slack = val - bound
        else:
            vals = np.empty(draws)
            for t in range(draws):
                out, _ = q.apply(x - z, rng)
                vals[t] = np.sum((z + eta * out - y) ** 2)
            stderr = float(vals.std(ddof=1)) / math.sqrt(draws)
            slack = float(vals.mean()) - (bound + 3.0 * stderr)
        worst = max(worst, slack)
    return worst


def suite_lemmas(draws=10000, seed=0, d=8):
    report = VerifyReport(suite="lemmas")
    randk = comp.RandK(2, d)
    dith = comp.RandomDithering(2, 2, d)
    for q in (randk, dith):
        eta = 1.0 / (q.omega + 1.0)
        slack = lemma_step_bound(q, eta, draws, seed, contractive=False)
        report.add(f"step-bound:unbiased:{q.name}", slack, 0.0)
    topk = comp.TopK(2, d)
    slack = lemma_step_bound(topk, 1.0, draws, seed, contractive=True)
    report.add(f"step-bound:contraction:{topk.name}", slack, 0.0)
    return report


def suite_newton(seed=0):
    """Exact-compression run must follow textbook Newton iterates."""
    report = VerifyReport(suite="newton")
    problem = synth_lowdim(12, 4, 3, 20, seed=seed, lam=1e-2)
    config = RunConfig(algorithm="bl1", n=3, lam=1e-2, d=12, r=4, m=20,
                       seed=seed, p=1.0, alpha=1.0, eta=1.0, max_rounds=8)
    bases = build_bases(problem, config)
    algo = build_algorithm(problem, bases, config)
    state = algo.init_state()
    x_newton = np.zeros(problem.d)
    worst = 0.0
    for _ in range(8):
        g = problem.global_grad(x_newton)
        h = problem.global_hess(x_newton)
        x_newton = x_newton - np.linalg.solve(h, g)
        state, _ = algo.step(state)
        worst = max(worst, float(np.abs(state.x - x_newton).max()))
    report.add("exact-compression-newton-match", worst, 1e-8)
    return report


def _invariant_run(config, rounds, report, prefix):
    problem = build_problem(config)
    bases = build_bases(problem, config)
    algo = build_algorithm(problem, bases, config)
    reference = newton_reference(problem)
    results = {}

    def hook(state, stats):
        for name, measured, bound, ok in algo.invariant_report(state):
            entry = results.setdefault(name, [measured, bound, True])
            entry[2] = entry[2] and ok
            if not ok:
                entry[0], entry[1] = measured, bound

    run(config.replace(max_rounds=rounds), round_hook=hook,
        reference=reference, problem=problem, algo=algo)
    for name, (measured, bound, ok) in results.items():
        report.add(f"{prefix}:{name}", measured, bound, ok)


def suite_bl2(seed=0, rounds=40):
    report = VerifyReport(suite="bl2")
    config = RunConfig(algorithm="bl2", n=4, lam=1e-2, d=16, r=5, m=25,
                       seed=seed, p=0.5, tau=2, matrix_compressor="topk:16",
                       model_compressor="topk:8", basis="standard",
                       fgap_target=0.0)
    _invariant_run(config, rounds, report, "bl2")
    return report


def suite_bl3(seed=0, rounds=40):
    report = VerifyReport(suite="bl3")
    config = RunConfig(algorithm="bl3", n=4, lam=1e-2, d=12, r=4, m=25,
                       seed=seed, p=0.5, tau=2, c=0.1, option=2,
                       matrix_compressor="topk_sym:12",
                       model_compressor="identity", basis="psd_sym",
                       fgap_target=0.0)
    _invariant_run(config, rounds, report, "bl3")
    return report


SUITES = {
    "compressors": suite_compressors,
    "basis": suite_basis,
    "lemmas": suite_lemmas,
    "newton": suite_newton,
    "bl2": suite_bl2,
    "bl3": suite_bl3,
}


def verify(selector="all", **kw):
    if selector == "all":
        if kw:
            raise ValueError("suite options require a specific suite name")
        report = VerifyReport(suite="all")
        for fn in SUITES.values():
            report.extend_from(fn())
        return report
    if selector not in SUITES:
        raise ValueError(f"unknown suite {selector!r}; "
                         f"choose from {sorted(SUITES)} or 'all'")
    return SUITES[selector](**kw)
