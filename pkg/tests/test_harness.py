"""Batch-harness tests: config parsing, seed derivation, CSV/manifest
plumbing, and small end-to-end runs of every experiment entry point.

Experiment runs here use deliberately tiny grids; the full-size claims live
in the acceptance suite.  Determinism checks compare raw CSV bytes.
"""

import hashlib
import json

import numpy as np
import pytest

from spinlab import cli
from spinlab.harness import (
    RunManifest,
    derive_seed,
    fig2_experiment,
    format_cell,
    gap_sweep,
    jw_map,
    load_config,
    parse_config_text,
    qemcmc_run,
    task_rng,
    vmc_run,
    vqe_run,
    write_csv,
)
from spinlab.pauli import (
    FermionHamiltonian,
    fermion_hamiltonian_to_json,
    group_qubitwise,
    map_fermionic,
    one_norm,
    pauli_sum_from_json,
)
from spinlab.qemcmc import save_instance, spin_glass_instance

TINY_FIG2 = {
    "L": 4,
    "depths": [1, 2],
    "shots": [50, 100],
    "repetitions": 3,
    "optimizer.restarts": 1,
    "optimizer.max_iter": 8,
    "lam1_grid": [0.220, -0.15],
    "jastrow_tail": [0.05],
}


class TestDeriveSeed:
    def test_matches_hash_oracle(self):
        digest = hashlib.sha256(b"7:fig2-pauli:3").digest()
        expect = int.from_bytes(digest[:8], "little")
        assert derive_seed(7, "fig2-pauli", 3) == expect

    def test_distinct_across_coordinates(self):
        seeds = {derive_seed(0, exp, i)
                 for exp in ("a", "b") for i in range(50)}
        assert len(seeds) == 100

    def test_range_and_rng(self):
        s = derive_seed(123, "x", 0)
        assert 0 <= s < 2 ** 64
        a = task_rng(123, "x", 0).random(4)
        b = np.random.default_rng(s).random(4)
        assert np.array_equal(a, b)


class TestConfigParsing:
    def test_scalars_and_lists(self):
        cfg = parse_config_text(
            "L = 10\n"
            "J = 1.5\n"
            "periodic = true   # trailing comment\n"
            "mode = sweep\n"
            "# full-line comment\n"
            "\n"
            "depths = 12, 16, 20\n"
            "optimizer.method = cobyla\n")
        assert cfg["L"] == 10 and isinstance(cfg["L"], int)
        assert cfg["J"] == 1.5
        assert cfg["periodic"] is True
        assert cfg["mode"] == "sweep"
        assert cfg["depths"] == [12, 16, 20]
        assert cfg["optimizer.method"] == "cobyla"

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError):
            parse_config_text("just some words\n")
        with pytest.raises(ValueError):
            parse_config_text(" = 3\n")

    def test_load_config_round_trip(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("L = 6\nbeta_list = 1.0, 2.0\n")
        cfg = load_config(path)
        assert cfg == {"L": 6, "beta_list": [1.0, 2.0]}


class TestCsvPlumbing:
    def test_format_cell(self):
        assert format_cell(True) == "true"
        assert format_cell(np.int64(4)) == "4"
        assert format_cell(0.1 + 0.2) == "0.3"
        assert format_cell(1.0 / 3.0) == "0.333333333333"
        assert format_cell("word") == "word"

    def test_write_csv_bytes(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ("a", "b"), [(1, 0.5), (2, "x")])
        assert path.read_text() == "a,b\n1,0.5\n2,x\n"

    def test_manifest_write(self, tmp_path):
        man = RunManifest(experiment="demo", master_seed=3,
                          config={"L": 2}, derived_seeds={"t": 9},
                          outputs={"csv": "demo.csv"}, duration_seconds=0.25)
        path = man.write(tmp_path)
        assert path.name == "demo_manifest.json"
        doc = json.loads(path.read_text())
        assert doc["experiment"] == "demo"
        assert doc["master_seed"] == 3
        assert doc["config"] == {"L": 2}
        assert doc["csv_schema_version"] == "1"
        # keys are sorted so the file itself is byte-stable
        assert list(doc) == sorted(doc)


class TestFig2Experiment:
    def test_scalar_jastrow_tail(self, tmp_path):
        cfg = dict(TINY_FIG2, repetitions=2, jastrow_tail=0.05)
        man = fig2_experiment(cfg, tmp_path, master_seed=5)
        assert "csv" in man.outputs

    def test_tiny_run_and_determinism(self, tmp_path):
        out_a = tmp_path / "a"
        man = fig2_experiment(dict(TINY_FIG2), out_a, master_seed=5)
        csv_a = out_a / "fig2.csv"
        lines = csv_a.read_text().splitlines()
        assert lines[0] == "estimator,ansatz,M,relative_error,std"
        assert {ln.split(",")[0] for ln in lines[1:]} == {"pauli", "vmc"}
        assert any(ln.split(",")[1] == "exact_eigenvector"
                   for ln in lines[1:])
        assert "E0" in man.outputs
        # same seed, fresh directory: identical bytes
        out_b = tmp_path / "b"
        fig2_experiment(dict(TINY_FIG2), out_b, master_seed=5)
        assert csv_a.read_bytes() == (out_b / "fig2.csv").read_bytes()
        # different master seed changes the sampled columns
        out_c = tmp_path / "c"
        fig2_experiment(dict(TINY_FIG2), out_c, master_seed=6)
        assert csv_a.read_bytes() != (out_c / "fig2.csv").read_bytes()

    def test_thread_count_does_not_change_output(self, tmp_path):
        out_a = tmp_path / "serial"
        out_b = tmp_path / "pooled"
        fig2_experiment(dict(TINY_FIG2), out_a, master_seed=5, threads=1)
        fig2_experiment(dict(TINY_FIG2), out_b, master_seed=5, threads=3)
        assert (out_a / "fig2.csv").read_bytes() == \
            (out_b / "fig2.csv").read_bytes()


class TestGapSweep:
    CFG = {"L_list": [4], "beta_list": [1.5],
           "proposals": ["quantum", "single-flip"],
           "instances": 2, "K": 8, "steps": 400}

    def test_rows_and_determinism(self, tmp_path):
        man = gap_sweep(dict(self.CFG), tmp_path / "a", master_seed=1)
        csv_a = tmp_path / "a" / "gap_sweep.csv"
        lines = csv_a.read_text().splitlines()
        assert lines[0] == \
            "instance_id,L,beta,proposal,delta,tau,acceptance_rate"
        assert len(lines) == 1 + 2 * 2   # instances x proposals
        for ln in lines[1:]:
            cells = ln.split(",")
            assert cells[1] == "4" and cells[2] == "1.5"
            assert float(cells[4]) > 0.0          # delta
            assert float(cells[5]) >= 0.5         # tau floor
            assert 0.0 < float(cells[6]) <= 1.0   # acceptance
        gap_sweep(dict(self.CFG), tmp_path / "b", master_seed=1)
        assert csv_a.read_bytes() == \
            (tmp_path / "b" / "gap_sweep.csv").read_bytes()
        assert man.experiment == "gap-sweep"


class TestVqeRun:
    CFG = {"model.L": 4, "depth": 2, "shots_per_group": 100,
           "repetitions": 4, "optimizer.restarts": 1,
           "optimizer.max_iter": 8}

    def test_rows_and_manifest(self, tmp_path):
        man = vqe_run(dict(self.CFG), tmp_path, master_seed=2)
        lines = (tmp_path / "vqe_run.csv").read_text().splitlines()
        assert lines[0] == "repetition,mean,stderr"
        assert len(lines) == 1 + 4
        for key in ("E0", "relative_error", "predicted_error", "n_groups"):
            assert key in man.outputs
        assert man.outputs["n_groups"] == 2


class TestVmcRun:
    def test_sweep_mode(self, tmp_path):
        cfg = {"L": 6, "mode": "sweep", "samples": [400],
               "lam1_grid": [0.220, -0.15], "jastrow_tail": [0.05, 0.02]}
        man = vmc_run(cfg, tmp_path, master_seed=3)
        lines = (tmp_path / man.outputs["csv"]).read_text().splitlines()
        assert lines[0] == "lam1,relative_error,stderr,M_vmc"
        assert len(lines) == 1 + 2

    def test_sr_mode(self, tmp_path):
        cfg = {"L": 4, "mode": "sr", "sr_steps": 3,
               "samples_per_step": 256}
        man = vmc_run(cfg, tmp_path, master_seed=4)
        lines = (tmp_path / man.outputs["csv"]).read_text().splitlines()
        assert lines[0] == "step,energy,relative_error"
        assert len(lines) == 1 + 3
        assert len(man.outputs["final_lam"]) == 2

    def test_scalar_list_keys_from_config_text(self, tmp_path):
        # a one-element comma list parses as a scalar; list keys must
        # still accept it
        cfg = parse_config_text("mode = sweep\nL = 4\nsamples = 200\n"
                                "lam1_grid = 0.1\njastrow_tail = 0.05\n")
        man = vmc_run(cfg, tmp_path, master_seed=3)
        lines = (tmp_path / man.outputs["csv"]).read_text().splitlines()
        assert len(lines) == 1 + 1

    def test_unknown_mode_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            vmc_run({"mode": "annealing"}, tmp_path, master_seed=0)


class TestQemcmcRun:
    def test_generated_instance(self, tmp_path):
        cfg = {"L": 4, "ensemble": "ferromagnet", "beta": 1.0,
               "steps": 400, "chains": 2,
               "proposals": ["quantum", "single-flip", "uniform"]}
        qemcmc_run(cfg, tmp_path / "a", master_seed=6)
        csv_a = tmp_path / "a" / "qemcmc_run.csv"
        lines = csv_a.read_text().splitlines()
        assert lines[0] == "proposal,acceptance_rate,tau_energy,mean_energy"
        assert [ln.split(",")[0] for ln in lines[1:]] == \
            ["quantum", "single-flip", "uniform"]
        qemcmc_run(cfg, tmp_path / "b", master_seed=6)
        assert csv_a.read_bytes() == \
            (tmp_path / "b" / "qemcmc_run.csv").read_bytes()

    def test_instance_file(self, tmp_path):
        inst = tmp_path / "inst.json"
        save_instance(spin_glass_instance(4, np.random.default_rng(7)),
                      inst, seed=7)
        cfg = {"instance": str(inst), "beta": 1.0, "steps": 300, "chains": 2}
        man = qemcmc_run(cfg, tmp_path, master_seed=8)
        assert (tmp_path / "qemcmc_run.csv").exists()
        assert man.config["instance"] == str(inst)


class TestJwMap:
    def _fermion_file(self, tmp_path):
        rng = np.random.default_rng(9)
        t = rng.normal(size=(3, 3))
        t = (t + t.T) / 2
        u = np.zeros((3, 3, 3, 3))
        u[0, 1, 1, 0] = 0.5
        u[1, 0, 0, 1] = 0.5
        ferm = FermionHamiltonian(3, t, u)
        path = tmp_path / "ferm.json"
        path.write_text(fermion_hamiltonian_to_json(ferm))
        return ferm, path

    def test_summary_matches_direct_mapping(self, tmp_path):
        ferm, path = self._fermion_file(tmp_path)
        out = tmp_path / "pauli.json"
        summary = jw_map(path, out)
        mapped = map_fermionic(ferm)
        assert summary["n_terms"] == len(mapped.terms)
        assert summary["one_norm"] == pytest.approx(one_norm(mapped))
        assert summary["n_groups"] == group_qubitwise(mapped).n_groups
        doc = json.loads(out.read_text())
        assert doc["summary"] == summary
        back = pauli_sum_from_json(out.read_text())
        assert back.n_qubits == 3
        assert len(back.terms) == len(mapped.terms)


class TestCli:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])
        assert exc.value.code == 0

    def test_vqe_run_subcommand(self, tmp_path, capsys):
        cfg = tmp_path / "vqe.cfg"
        cfg.write_text("model.L = 4\ndepth = 1\nshots_per_group = 50\n"
                       "repetitions = 2\noptimizer.restarts = 1\n"
                       "optimizer.max_iter = 5\n")
        out = tmp_path / "runs"
        rc = cli.main(["vqe-run", "--config", str(cfg), "--seed", "11",
                       "--out", str(out)])
        assert rc == 0
        assert (out / "vqe_run.csv").exists()
        assert (out / "vqe-run_manifest.json").exists()
        assert "vqe-run" in capsys.readouterr().out

    def test_jw_map_subcommand(self, tmp_path, capsys):
        rng = np.random.default_rng(10)
        t = rng.normal(size=(2, 2))
        ferm = FermionHamiltonian(2, (t + t.T) / 2, np.zeros((2, 2, 2, 2)))
        src = tmp_path / "f.json"
        src.write_text(fermion_hamiltonian_to_json(ferm))
        dst = tmp_path / "p.json"
        rc = cli.main(["jw-map", str(src), "--out", str(dst)])
        assert rc == 0
        assert dst.exists()
        assert "terms" in capsys.readouterr().out

    def test_unknown_command_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code != 0
