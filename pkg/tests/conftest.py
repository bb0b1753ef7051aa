"""Shared fixtures: a realistic LibSVM-format benchmark file generated
deterministically at session start (123 features, 400 rows, 4 clients,
low per-client intrinsic dimension), exercised through the full
parse/partition path."""

import numpy as np
import pytest

from basiskit.dataio import RawDataset, parse_libsvm, partition, serialize_libsvm
from basiskit.problems import synth_lowdim

BENCH_D = 123
BENCH_R = 30
BENCH_N = 4
BENCH_M = 100
BENCH_SEED = 7
BENCH_LAM = 1e-3
BENCH_SCALE = 3.5  # row norms ~ sqrt(12), matching sparse binary data


def problem_to_raw(problem):
    rows = []
    for shard in problem.shards:
        for feats, label in zip(shard.features, shard.labels):
            entries = [(j + 1, float(v)) for j, v in enumerate(feats) if v != 0.0]
            rows.append((int(label), entries))
    return RawDataset(rows=rows, max_index=problem.d)


@pytest.fixture(scope="session")
def bench_path(tmp_path_factory):
    problem = synth_lowdim(BENCH_D, BENCH_R, BENCH_N, BENCH_M,
                           seed=BENCH_SEED, lam=BENCH_LAM,
                           feature_scale=BENCH_SCALE)
    path = tmp_path_factory.mktemp("data") / "bench400.svm"
    path.write_text(serialize_libsvm(problem_to_raw(problem)))
    return path


@pytest.fixture(scope="session")
def bench_problem(bench_path):
    with open(bench_path) as fh:
        raw = parse_libsvm(fh)
    return partition(raw, n=BENCH_N, d=BENCH_D, lam=BENCH_LAM)
