"""Acceptance suite: one test per shipped guarantee, each printing a
pass/fail line. Tolerances are fixed here, not configurable.

Run with `pytest tests/test_acceptance.py -v -s`.
"""

import functools
import math
import os
import time

import numpy as np
import pytest

from basiskit import harness
from basiskit.algorithms import BL1, BL2, BL3, GD, Diana
from basiskit.basis import (
    PsdSymBasis, StandardBasis, TriangularSymBasis, build_basis,
    data_subspace_basis, outer_product_rank, psd_sym_basis, standard_basis,
    subspace_matrix_basis,
)
from basiskit.compressors import Identity, RandomDithering, TopK, TopKSym
from basiskit.dataio import ParseError, RunConfig, parse_libsvm
from basiskit.linalg import frobenius_norm
from basiskit.problems import newton_reference, synth_lowdim
from basiskit.verification import suite_compressors, suite_lemmas

from conftest import BENCH_D, BENCH_LAM, BENCH_N


def criterion(num, desc):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kw):
            try:
                fn(*args, **kw)
            except BaseException:
                print(f"\nACCEPTANCE {num}: FAIL - {desc}")
                raise
            print(f"\nACCEPTANCE {num}: PASS - {desc}")
        return run
    return wrap


@criterion(1, "compressor class laws certify at d in {2,4,8} in under 60 s")
def test_compressor_laws():
    t0 = time.monotonic()
    report = suite_compressors(dims=(2, 4, 8), trials=1000, draws=10_000,
                               seed=0)
    elapsed = time.monotonic() - t0
    failures = [c for c in report.checks if not c.passed]
    assert not failures, failures
    assert elapsed < 60.0, f"certification took {elapsed:.1f}s"


@criterion(2, "basis algebra: round-trip identity and outer-product rank")
def test_basis_algebra():
    rng = np.random.default_rng(42)
    d = 20
    bases = [
        StandardBasis(d),
        TriangularSymBasis(d),
        PsdSymBasis(d),
    ]
    v, _ = np.linalg.qr(rng.standard_normal((d, 6)))
    data = rng.standard_normal((15, 6)) @ v.T
    bases.append(subspace_matrix_basis(data_subspace_basis(data), d))
    for b in bases:
        for _ in range(1000):
            a = rng.standard_normal((d, d))
            if b.space == "sym":
                a = 0.5 * (a + a.T)
            back = b.reconstruct(b.coeffs(a))
            assert frobenius_norm(back - a) <= 1e-9 * (1 + frobenius_norm(a))
    for _ in range(100):
        q, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        assert outer_product_rank(q) == 9


@criterion(3, "exact-compression run matches classic Newton for 10 rounds")
def test_newton_equivalence(bench_problem):
    problem = bench_problem
    bases = [standard_basis(problem.d) for _ in range(problem.n)]
    algo = BL1(problem, bases, Identity(problem.d**2), Identity(problem.d),
               alpha=1.0, eta=1.0, p=1.0, seed=0)
    state = algo.init_state()
    x = np.zeros(problem.d)
    for _ in range(10):
        x = x - np.linalg.solve(problem.global_hess(x), problem.global_grad(x))
        state, stats = algo.step(state)
        assert np.linalg.norm(state.x - x) <= 1e-8
        assert not stats.diagnostics["projection_active"]


@criterion(4, "subspace basis is lossless and cuts per-round floats 50x")
def test_lossless_subspace_saving():
    d, r = 100, 10
    problem = synth_lowdim(d, r, 4, 40, seed=11, lam=1e-3)
    bases = [
        build_basis("data_subspace", d, shard_features=s.features)
        for s in problem.shards
    ]
    assert all(b.rank == r for b in bases)
    algo = BL1(problem, bases, Identity(d * d), Identity(d),
               alpha=1.0, eta=1.0, p=1.0, seed=0)
    state = algo.init_state()
    x = np.zeros(d)
    for _ in range(10):
        x = x - np.linalg.solve(problem.global_hess(x), problem.global_grad(x))
        state, stats = algo.step(state)
        assert np.linalg.norm(state.x - x) <= 1e-8
        # accounting invariant: counted bits equal the analytic figure
        assert stats.up_bits == [(r * r + d) * 64] * problem.n

    subspace_cfg = RunConfig(algorithm="bl1", n=4, lam=1e-3, d=d, r=r, m=40,
                             seed=11, basis="data_subspace", p=1.0,
                             alpha=1.0, eta=1.0)
    newton_cfg = subspace_cfg.replace(algorithm="newton", basis="standard")
    rep_sub = harness.cost_report(subspace_cfg)
    rep_newton = harness.cost_report(newton_cfg)
    assert rep_sub.upload_floats == r * r + d  # 200
    assert rep_newton.upload_floats == d * d + d  # 10100
    assert rep_newton.upload_floats / rep_sub.upload_floats >= 50.0


@criterion(5, "ratio to the optimum is driven below 0.05, tail non-increasing")
def test_local_superlinearity():
    t0 = time.monotonic()
    d, r, n, m = 30, 6, 4, 30
    problem = synth_lowdim(d, r, n, m, seed=0, lam=1e-4, feature_scale=2.5)
    ref = newton_reference(problem, grad_tol=0.0)
    x = np.zeros(d)
    for _ in range(5):
        x = x - np.linalg.solve(problem.global_hess(x), problem.global_grad(x))
    bases = [
        build_basis("data_subspace", d, shard_features=s.features)
        for s in problem.shards
    ]
    algo = BL1(problem, bases, TopK(r, d * d), Identity(d),
               alpha=1.0, eta=1.0, p=1.0, seed=0)
    state = algo.init_state(x)
    floor = 1e-8  # stop recording once inside measurement noise
    dists = [float(np.linalg.norm(x - ref.x_star))]
    ratios = []
    for _ in range(30):
        state, _ = algo.step(state)
        dist = float(np.linalg.norm(state.x - ref.x_star))
        ratios.append(dist / dists[-1])
        dists.append(dist)
        if dist < floor:
            break
    first_below = next((i for i, rho in enumerate(ratios) if rho <= 0.05), None)
    assert first_below is not None and first_below < 30, ratios
    tail = ratios[-5:]
    assert len(tail) == 5, ratios
    assert all(tail[i + 1] <= tail[i] + 1e-12 for i in range(4)), tail
    assert time.monotonic() - t0 < 30.0


@criterion(6, "partial-participation invariants hold for 100 rounds")
def test_bl2_invariants(bench_problem):
    problem = bench_problem
    d = problem.d
    bases = [
        build_basis("data_subspace", d, shard_features=s.features)
        for s in problem.shards
    ]
    algo = BL2(problem, bases, TopK(120, d * d), TopK(d // 2, d),
               alpha=1.0, eta=1.0, p=0.5, tau=problem.n // 2, seed=3)
    ref = newton_reference(problem)
    state = algo.init_state()
    fgap = math.inf
    for _ in range(100):
        state, _ = algo.step(state)
        for name, measured, bound, ok in algo.invariant_report(state, tol=1e-8):
            assert ok, (name, measured, bound)
        fgap = min(fgap, problem.global_value(state.x) - ref.f_star)
    assert fgap <= 1e-6, fgap


@criterion(7, "PSD-basis estimator dominance holds and the run converges")
def test_bl3_invariants(bench_problem):
    problem = bench_problem
    d = problem.d
    ref = newton_reference(problem)

    def run_option(option):
        bases = [psd_sym_basis(d) for _ in range(problem.n)]
        algo = BL3(problem, bases, TopKSym(4 * d, d), Identity(d),
                   alpha=1.0, eta=1.0, p=1.0, tau=problem.n, c=0.1,
                   option=option, seed=4)
        state = algo.init_state()
        reached = None
        for k in range(150):
            state, _ = algo.step(state)
            for i in range(problem.n):
                gap = algo.estimator(state, i) - problem.local_hess_data(
                    i, state.dominance_points[i]
                )
                assert np.linalg.eigvalsh(gap).min() >= -1e-8, (option, k, i)
            for name, measured, bound, ok in algo.invariant_report(state):
                assert ok, (option, name, measured, bound)
            if reached is None:
                if problem.global_value(state.x) - ref.f_star <= 1e-6:
                    reached = k + 1
                    break
        return reached

    assert run_option(2) is not None  # converged within 150 rounds
    assert run_option(1) is not None


@criterion(8, "compressed-step inequalities verified at 10^4 samples")
def test_single_step_lemmas():
    report = suite_lemmas(draws=10_000, seed=0)
    failures = [c for c in report.checks if not c.passed]
    assert not failures, failures
    names = {c.name for c in report.checks}
    assert any("unbiased" in n for n in names)
    assert any("contraction" in n for n in names)


@criterion(9, "compressed second-order run beats GD and DIANA 10x on bits")
def test_first_order_gap(bench_path):
    target = 1e-6
    base = dict(n=BENCH_N, lam=BENCH_LAM, dataset=str(bench_path), d=BENCH_D,
                seed=5, fgap_target=target, bits_budget=1e12)
    bl1_cfg = RunConfig(algorithm="bl1", basis="data_subspace",
                        matrix_compressor="topk:30", p=1.0, alpha=1.0,
                        eta=1.0, max_rounds=500, **base)
    bl1 = harness.run(bl1_cfg)
    assert bl1.status == "converged"
    bl1_bits = bl1.records[-1].up_bits + bl1.records[-1].down_bits

    results = {}
    for name, cfg in (
        ("gd", RunConfig(algorithm="gd", max_rounds=100_000, **base)),
        ("diana", RunConfig(algorithm="diana", model_compressor="dither:11",
                            max_rounds=100_000, **base)),
    ):
        exp = harness.run(cfg.replace(bits_budget=40.0 * bl1_bits))
        last = exp.records[-1]
        bits = last.up_bits + last.down_bits
        if exp.status == "converged":
            assert bits >= 10.0 * bl1_bits, (name, bits, bl1_bits)
        else:
            # ran out of a 40x budget without reaching the target
            assert last.fgap > target, (name, last.fgap)
        results[name] = bits
    assert results


@criterion(10, "parser golden files and byte-identical seeded CSV output")
def test_parser_and_determinism(bench_path, tmp_path):
    golden_dir = os.path.join(os.path.dirname(__file__), "data")
    with open(os.path.join(golden_dir, "golden_basic.svm")) as fh:
        ds = parse_libsvm(fh)
    assert len(ds.rows) == 4 and ds.max_index == 5
    for bad in ("golden_bad_order.svm", "golden_bad_token.svm"):
        with open(os.path.join(golden_dir, bad)) as fh:
            with pytest.raises(ParseError, match="line 2"):
                parse_libsvm(fh)

    cfg = RunConfig(algorithm="bl2", n=BENCH_N, lam=BENCH_LAM,
                    dataset=str(bench_path), d=BENCH_D, seed=9, p=0.5,
                    tau=2, matrix_compressor="topk:246",
                    model_compressor="topk:61", max_rounds=20,
                    fgap_target=1e-12)
    outputs = []
    for threads in ("1", "8"):
        path = tmp_path / f"threads{threads}.csv"
        old = os.environ.get("BASISKIT_THREADS")
        os.environ["BASISKIT_THREADS"] = threads
        try:
            harness.run(cfg.replace(csv_out=str(path)))
            harness.run(cfg.replace(csv_out=str(tmp_path / f"again{threads}.csv")))
        finally:
            if old is None:
                os.environ.pop("BASISKIT_THREADS", None)
            else:
                os.environ["BASISKIT_THREADS"] = old
        assert path.read_bytes() == (tmp_path / f"again{threads}.csv").read_bytes()
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]
