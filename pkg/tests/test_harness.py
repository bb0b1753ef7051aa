"""Experiment driver: determinism across seeds and thread counts,
status handling, accounting consistency with the analytic cost report,
plotting, the verification suites, and the CLI."""

import json
import os

import numpy as np
import pytest

from basiskit import cli, harness
from basiskit import verification as verify_mod
from basiskit.dataio import RunConfig, read_csv


def _synth_cfg(**kw):
    base = dict(algorithm="bl1", n=3, lam=1e-2, d=12, r=4, m=15, seed=1,
                max_rounds=10, fgap_target=1e-12)
    base.update(kw)
    return RunConfig(**base)


class TestRun:
    def test_converges_and_records(self):
        exp = harness.run(_synth_cfg())
        assert exp.status == "converged"
        assert [r.round for r in exp.records] == list(range(len(exp.records)))
        ups = [r.up_bits for r in exp.records]
        assert ups == sorted(ups)

    def test_zero_rounds_records_start_only(self):
        exp = harness.run(_synth_cfg(max_rounds=0))
        assert len(exp.records) == 1
        assert exp.records[0].round == 0
        assert exp.status == "budget"

    def test_same_seed_identical_csv(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        harness.run(_synth_cfg(csv_out=str(p1)))
        harness.run(_synth_cfg(csv_out=str(p2)))
        assert p1.read_bytes() == p2.read_bytes()

    def test_thread_count_does_not_change_csv(self, tmp_path):
        cfg = _synth_cfg(algorithm="bl2", tau=2, p=0.5,
                         matrix_compressor="topk:20", model_compressor="topk:6",
                         max_rounds=15)
        outs = []
        for threads in ("1", "8"):
            path = tmp_path / f"t{threads}.csv"
            old = os.environ.get("BASISKIT_THREADS")
            os.environ["BASISKIT_THREADS"] = threads
            try:
                harness.run(cfg.replace(csv_out=str(path)))
            finally:
                if old is None:
                    os.environ.pop("BASISKIT_THREADS", None)
                else:
                    os.environ["BASISKIT_THREADS"] = old
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_divergence_flagged(self):
        cfg = _synth_cfg(algorithm="gd", eta=1e12, max_rounds=500,
                         fgap_target=0.0)
        exp = harness.run(cfg)
        assert exp.status == "diverged"

    def test_bits_budget_stops_run(self):
        cfg = _synth_cfg(algorithm="gd", max_rounds=10_000, fgap_target=0.0,
                         bits_budget=20_000)
        exp = harness.run(cfg)
        assert exp.status == "budget"
        assert exp.records[-1].up_bits + exp.records[-1].down_bits >= 20_000

    def test_dataset_path_roundtrip(self, bench_path):
        cfg = RunConfig(algorithm="newton", n=4, lam=1e-3,
                        dataset=str(bench_path), d=123, seed=0, max_rounds=3,
                        fgap_target=1e-12)
        exp = harness.run(cfg)
        assert exp.records[-1].fgap < exp.records[0].fgap


class TestAccountingConsistency:
    def test_run_matches_cost_report_bl1(self):
        cfg = _synth_cfg(basis="data_subspace", matrix_compressor="topk:4",
                         max_rounds=5, fgap_target=0.0)
        exp = harness.run(cfg)
        rep = harness.cost_report(cfg)
        rounds = exp.records[-1].round
        assert exp.records[-1].up_bits == rounds * rep.upload.total
        assert exp.records[-1].down_bits == rounds * rep.download.total

    def test_run_matches_cost_report_newton(self):
        cfg = _synth_cfg(algorithm="newton", max_rounds=4, fgap_target=0.0)
        exp = harness.run(cfg)
        rep = harness.cost_report(cfg)
        rounds = exp.records[-1].round
        assert exp.records[-1].up_bits == rounds * rep.upload.total

    def test_setup_bits_for_data_basis(self):
        cfg = _synth_cfg(basis="data_subspace", max_rounds=1)
        exp = harness.run(cfg)
        rep = harness.cost_report(cfg)
        assert exp.setup_bits_per_node == rep.setup_bits
        assert rep.setup_bits >= cfg.r * 12 * 64  # basis broadcast floor


class TestPlot:
    def test_plot_two_runs(self, tmp_path):
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        harness.run(_synth_cfg(csv_out=str(p1)))
        harness.run(_synth_cfg(algorithm="gd", max_rounds=50, csv_out=str(p2)))
        out = tmp_path / "chart.svg"
        harness.plot([str(p1), str(p2)], str(out), names=["second", "first"])
        text = out.read_text()
        assert text.count("<polyline") == 2

    def test_empty_csv_rejected(self, tmp_path):
        bad = tmp_path / "empty.csv"
        bad.write_text("round,fgap,dist,up_bits,down_bits,wall_ms\n")
        with pytest.raises(ValueError):
            harness.plot([str(bad)], str(tmp_path / "x.svg"))

    def test_schema_mismatch_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("round,loss\n0,1.0\n")
        with pytest.raises(ValueError):
            harness.plot([str(bad)], str(tmp_path / "x.svg"))


class TestVerifySuites:
    def test_basis_suite_passes(self):
        report = verify_mod.verify("basis")
        assert report.passed

    def test_newton_suite_passes(self):
        report = verify_mod.verify("newton")
        assert report.passed

    def test_compressor_suite_small(self):
        report = verify_mod.verify("compressors", dims=(2, 4), trials=200,
                                   draws=2000)
        assert report.passed

    def test_lemma_suite_small(self):
        report = verify_mod.verify("lemmas", draws=4000)
        assert report.passed

    def test_bl2_bl3_suites(self):
        assert verify_mod.verify("bl2", rounds=15).passed
        assert verify_mod.verify("bl3", rounds=15).passed

    def test_deliberately_wrong_delta_fails(self):
        from basiskit.compressors import TopK, certify

        report = certify(TopK(1, 4), trials=50, draws=100, seed=0, delta=0.5)
        assert not report.passed

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            verify_mod.verify("nope")


class TestCli:
    def test_run_and_cost(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(_synth_cfg().to_dict()))
        rc = cli.main(["run", str(cfg_path), "--csv", str(tmp_path / "o.csv")])
        assert rc == 0
        assert (tmp_path / "o.csv").exists()
        rc = cli.main(["cost", str(cfg_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "upload_bits" in out

    def test_verify_subcommand(self, capsys):
        rc = cli.main(["verify", "newton"])
        assert rc == 0
        assert "pass" in capsys.readouterr().out

    def test_plot_subcommand(self, tmp_path):
        csv = tmp_path / "r.csv"
        harness.run(_synth_cfg(csv_out=str(csv)))
        rc = cli.main(["plot", str(csv), "-o", str(tmp_path / "c.svg")])
        assert rc == 0
        assert (tmp_path / "c.svg").exists()
