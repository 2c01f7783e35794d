"""Seeded experiment orchestration and table emission.

Every experiment takes a flat configuration dictionary, derives one RNG
stream per task from the master seed, and writes a CSV with a JSON manifest
beside it.  Derived seeding keeps outputs byte-identical under re-runs and
independent of worker scheduling.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .pauli import (fermion_hamiltonian_from_json, group_qubitwise, one_norm,
                    pauli_sum_to_json)
from .statevector import TFIMModel, ground_state
from .vqe import (HVAnsatz, ShotPlan, estimate_energy_pauli, exact_energy,
                  optimize_noiseless, predicted_error, prepare)
from .vmc import (AmplitudeTableAnsatz, JastrowAnsatz, estimate_energy_vmc,
                  estimate_energy_vmc_batch, rayleigh_quotient,
                  run_sr_optimization)
from .qemcmc import (ClassicalSpinModel, QuantumProposalConfig,
                     assemble_kernel, build_proposal_matrix, energy_table,
                     ferromagnetic_chain, load_instance, run_chain,
                     single_flip_matrix, spectral_gap, spin_glass_instance,
                     uniform_matrix)

CSV_SCHEMA_VERSION = "1"

# Near-optimal long-range couplings for the critical L=10 chain; the first
# slot is the swept parameter in the estimator-quality experiments.
L10_JASTROW_OPTIMUM = (0.220, 0.057, 0.030, 0.022, 0.010)

LAM1_GRID = (-0.15, -0.05, 0.05, 0.12, 0.18, 0.220)


def derive_seed(master_seed: int, experiment: str, task_index: int) -> int:
    """Stable 64-bit stream seed from (master, experiment, task)."""
    blob = f"{master_seed}:{experiment}:{task_index}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def task_rng(master_seed: int, experiment: str,
             task_index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, experiment,
                                             task_index))


# ---------------------------------------------------------------------------
# Config files: `key = value` lines, '#' comments, comma-separated lists
# ---------------------------------------------------------------------------

def _parse_scalar(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ValueError(f"config line {lineno}: empty key")
        if "," in value:
            out[key] = [_parse_scalar(v) for v in value.split(",")]
        else:
            out[key] = _parse_scalar(value)
    return out


def load_config(path: str | Path) -> dict:
    return parse_config_text(Path(path).read_text())


def _as_list(value) -> list:
    if isinstance(value, list):
        return value
    return [value]


# ---------------------------------------------------------------------------
# Manifest and CSV plumbing
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    experiment: str
    master_seed: int
    config: dict
    derived_seeds: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    csv_schema_version: str = CSV_SCHEMA_VERSION
    artifact_version: str = __version__
    duration_seconds: float = 0.0

    def write(self, out_dir: Path) -> Path:
        path = out_dir / f"{self.experiment}_manifest.json"
        doc = {
            "experiment": self.experiment,
            "master_seed": self.master_seed,
            "config": self.config,
            "derived_seeds": self.derived_seeds,
            "outputs": self.outputs,
            "csv_schema_version": self.csv_schema_version,
            "artifact_version": self.artifact_version,
            "duration_seconds": round(self.duration_seconds, 3),
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def write_csv(path: Path, header: Sequence[str],
              rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _run_tasks(fn: Callable, args_list: list, threads: int) -> list:
    """Apply fn to each argument tuple, optionally on a process pool.

    Results come back ordered by task index whatever the schedule.
    """
    if threads <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *a) for a in args_list]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Depth-sweep optimization shared by fig2 and vqe-run
# ---------------------------------------------------------------------------

def optimize_depth_sweep(model: TFIMModel, depths: Sequence[int],
                         master_seed: int, method: str = "quasi-newton",
                         restarts: int = 4, max_iter: int = 40
                         ) -> list[HVAnsatz]:
    """Optimize each depth, seeding deeper circuits with the shallower optimum.

    Padding the previous best with zero-angle blocks reproduces its state
    exactly, so the best energy can only move down along the sweep.
    """
    out: list[HVAnsatz] = []
    prev: HVAnsatz | None = None
    for i, d in enumerate(sorted(depths)):
        if prev is None:
            start = HVAnsatz.zeros(model, d)
        else:
            pad = np.concatenate([np.asarray(prev.params),
                                  np.zeros(2 * d - len(prev.params))])
            start = HVAnsatz(model, d, tuple(pad))
        rng = task_rng(master_seed, "depth-sweep", i)
        res = optimize_noiseless(start, method=method, restarts=restarts,
                                 rng=rng, max_iter=max_iter)
        prev = res.ansatz
        out.append(res.ansatz)
    return out


# ---------------------------------------------------------------------------
# fig2: estimator standard deviation vs ansatz quality
# ---------------------------------------------------------------------------

def _pauli_cell(params: tuple, depth: int, L: int, J: float, Gamma: float,
                m: int, reps: int, seed: int) -> tuple[float, float]:
    """Std and mean of repeated grouped-measurement estimates for one state."""
    model = TFIMModel(L=L, J=J, Gamma=Gamma)
    h = model.as_pauli_sum()
    groups = group_qubitwise(h)
    s = prepare(HVAnsatz(model, depth, params))
    plan = ShotPlan.uniform(groups.n_groups, m)
    rng = np.random.default_rng(seed)
    means = np.array([estimate_energy_pauli(s, h, groups, plan, rng).mean
                      for _ in range(reps)])
    return float(means.std(ddof=1)), float(means.mean())


def _vmc_cell(lam: tuple, L: int, J: float, Gamma: float, m: int, reps: int,
              seed: int) -> tuple[float, float]:
    model = TFIMModel(L=L, J=J, Gamma=Gamma)
    a = JastrowAnsatz(L, lam)
    rng = np.random.default_rng(seed)
    ests = estimate_energy_vmc_batch(a, model, m, reps, rng)
    means = np.array([e.mean for e in ests])
    return float(means.std(ddof=1)), float(means.mean())


def fig2_experiment(config: dict, out_dir: Path, master_seed: int,
                    threads: int = 1) -> RunManifest:
    """Standard deviation of both estimators against exact ansatz quality.

    Pauli branch: circuit depths with noiseless warm-started optimization,
    grouped shot-noise estimates.  VMC branch: the long-range pair ansatz
    with its leading coupling swept away from the optimum.  Both report the
    spread over independent repetitions at each sample budget.
    """
    t0 = time.time()
    out_dir.mkdir(parents=True, exist_ok=True)
    L = int(config.get("L", 10))
    J = float(config.get("J", 1.0))
    Gamma = float(config.get("Gamma", 1.0))
    depths = [int(d) for d in _as_list(config.get("depths", [12, 16, 20, 24]))]
    shots = [int(m) for m in _as_list(config.get("shots", [100, 1000, 100000]))]
    reps = int(config.get("repetitions", 100))
    method = str(config.get("optimizer.method", "quasi-newton"))
    restarts = int(config.get("optimizer.restarts", 4))
    max_iter = int(config.get("optimizer.max_iter", 40))
    lam1_grid = [float(v) for v in _as_list(config.get("lam1_grid",
                                                       list(LAM1_GRID)))]

    model = TFIMModel(L=L, J=J, Gamma=Gamma)
    h = model.as_pauli_sum()
    e0, v0 = ground_state(h)
    ansatze = optimize_depth_sweep(model, depths, master_seed, method,
                                   restarts, max_iter)

    rows = []
    seeds: dict = {}
    task = 0
    pauli_args = []
    for a in ansatze:
        for m in shots:
            seed = derive_seed(master_seed, "fig2-pauli", task)
            seeds[f"pauli/d{a.depth}/M{m}"] = seed
            pauli_args.append((a.params, a.depth, L, J, Gamma, m, reps, seed))
            task += 1
    pauli_out = _run_tasks(_pauli_cell, pauli_args, threads)
    i = 0
    for a in ansatze:
        e_var = exact_energy(a, h)
        rel = abs(e_var - e0) / abs(e0)
        for m in shots:
            std, _ = pauli_out[i]
            rows.append(("pauli", f"hv_d{a.depth}", m, rel, std))
            i += 1

    task = 0
    vmc_args = []
    tail = _as_list(config.get("jastrow_tail", list(L10_JASTROW_OPTIMUM[1:])))
    for lam1 in lam1_grid:
        lam = (float(lam1),) + tuple(float(v) for v in tail)
        for m in shots:
            seed = derive_seed(master_seed, "fig2-vmc", task)
            seeds[f"vmc/lam1={lam1}/M{m}"] = seed
            vmc_args.append((lam, L, J, Gamma, m, reps, seed))
            task += 1
    vmc_out = _run_tasks(_vmc_cell, vmc_args, threads)
    i = 0
    for lam1 in lam1_grid:
        lam = (float(lam1),) + tuple(float(v) for v in tail)
        a = JastrowAnsatz(L, lam)
        e_var = rayleigh_quotient(a, model)
        rel = abs(e_var - e0) / abs(e0)
        for m in shots:
            std, _ = vmc_out[i]
            rows.append(("vmc", f"jastrow_lam1={format_cell(lam1)}", m, rel,
                         std))
            i += 1

    # zero-variance diagnostic: the exact eigenvector as a table ansatz
    exact_a = AmplitudeTableAnsatz(L, v0.amplitudes.real)
    for m in shots:
        seed = derive_seed(master_seed, "fig2-exact", m)
        seeds[f"vmc/exact/M{m}"] = seed
        est = estimate_energy_vmc(exact_a, model, min(m, 10_000),
                                  np.random.default_rng(seed))
        rows.append(("vmc", "exact_eigenvector", m,
                     abs(est.mean - e0) / abs(e0), est.stderr))

    csv_path = out_dir / "fig2.csv"
    write_csv(csv_path, ("estimator", "ansatz", "M", "relative_error", "std"),
              rows)
    manifest = RunManifest(
        experiment="fig2", master_seed=master_seed, config=dict(config),
        derived_seeds=seeds,
        outputs={"csv": csv_path.name, "E0": e0,
                 "depth_relative_errors": {
                     f"d{a.depth}": abs(exact_energy(a, h) - e0) / abs(e0)
                     for a in ansatze},
                 "pauli_cost_note": "each Pauli estimate consumes "
                                    "n_groups * M shots",
                 "units": {"energy": "J", "J": J, "Gamma": Gamma}},
        duration_seconds=time.time() - t0)
    manifest.write(out_dir)
    return manifest


# ---------------------------------------------------------------------------
# gap-sweep: exact spectral gaps and sampled autocorrelation
# ---------------------------------------------------------------------------

def _instance_for(kind: str, L: int, seed: int) -> ClassicalSpinModel:
    if kind == "ferromagnet":
        return ferromagnetic_chain(L)
    return spin_glass_instance(L, np.random.default_rng(seed),
                               topology=kind)


def gap_sweep(config: dict, out_dir: Path, master_seed: int,
              threads: int = 1) -> RunManifest:
    """Exact kernel gaps plus sampled chain diagnostics over a grid."""
    t0 = time.time()
    out_dir.mkdir(parents=True, exist_ok=True)
    l_list = [int(v) for v in _as_list(config.get("L_list", [4, 6]))]
    betas = [float(v) for v in _as_list(config.get("beta_list", [1.0, 2.0]))]
    proposals = [str(v).strip() for v in _as_list(
        config.get("proposals", ["quantum", "single-flip"]))]
    n_inst = int(config.get("instances", 5))
    K = int(config.get("K", 32))
    steps = int(config.get("steps", 4000))
    kind = str(config.get("ensemble", "fully-connected"))

    rows = []
    seeds: dict = {}
    task = 0
    for L in l_list:
        for inst in range(n_inst):
            inst_seed = derive_seed(master_seed, "gap-instance",
                                    L * 1000 + inst)
            model = _instance_for(kind, L, inst_seed)
            cfg = QuantumProposalConfig.for_model(model)
            matrices = {}
            for name in proposals:
                if name == "quantum":
                    matrices[name] = build_proposal_matrix(
                        model, cfg, K, np.random.default_rng(
                            derive_seed(master_seed, "gap-quad",
                                        L * 1000 + inst)))
                elif name == "single-flip":
                    matrices[name] = single_flip_matrix(L)
                elif name == "uniform":
                    matrices[name] = uniform_matrix(L)
                else:
                    raise ValueError(f"unknown proposal {name!r}")
            for beta in betas:
                for name in proposals:
                    gap = spectral_gap(assemble_kernel(matrices[name], model,
                                                       beta))
                    seed = derive_seed(master_seed, "gap-chain", task)
                    seeds[f"L{L}/i{inst}/b{beta}/{name}"] = seed
                    proposal = cfg if name == "quantum" else name
                    _, diag = run_chain(model, proposal, beta, steps,
                                        np.random.default_rng(seed))
                    rows.append((f"{kind}-{L}-{inst}", L, beta, name,
                                 gap.delta, diag.tau_energy,
                                 diag.acceptance_rate))
                    task += 1
    csv_path = out_dir / "gap_sweep.csv"
    write_csv(csv_path, ("instance_id", "L", "beta", "proposal", "delta",
                         "tau", "acceptance_rate"), rows)
    manifest = RunManifest(
        experiment="gap-sweep", master_seed=master_seed, config=dict(config),
        derived_seeds=seeds, outputs={"csv": csv_path.name,
                                      "rows": len(rows)},
        duration_seconds=time.time() - t0)
    manifest.write(out_dir)
    return manifest


# ---------------------------------------------------------------------------
# vqe-run: optimize one depth and characterize its shot-noise estimator
# ---------------------------------------------------------------------------

def vqe_run(config: dict, out_dir: Path, master_seed: int,
            threads: int = 1) -> RunManifest:
    t0 = time.time()
    out_dir.mkdir(parents=True, exist_ok=True)
    L = int(config.get("model.L", 10))
    J = float(config.get("model.J", 1.0))
    Gamma = float(config.get("model.Gamma", 1.0))
    depth = int(config.get("depth", 12))
    m = int(config.get("shots_per_group", 1000))
    reps = int(config.get("repetitions", 100))
    method = str(config.get("optimizer.method", "quasi-newton"))
    restarts = int(config.get("optimizer.restarts", 4))
    max_iter = int(config.get("optimizer.max_iter", 40))

    model = TFIMModel(L=L, J=J, Gamma=Gamma)
    h = model.as_pauli_sum()
    e0, _ = ground_state(h)
    res = optimize_noiseless(HVAnsatz.zeros(model, depth), method=method,
                             restarts=restarts,
                             rng=task_rng(master_seed, "vqe-opt", 0),
                             max_iter=max_iter)
    s = prepare(res.ansatz)
    groups = group_qubitwise(h)
    plan = ShotPlan.uniform(groups.n_groups, m)
    rows = []
    seeds = {}
    for rep in range(reps):
        seed = derive_seed(master_seed, "vqe-est", rep)
        seeds[f"rep{rep}"] = seed
        est = estimate_energy_pauli(s, h, groups, plan,
                                    np.random.default_rng(seed))
        rows.append((rep, est.mean, est.stderr))
    csv_path = out_dir / "vqe_run.csv"
    write_csv(csv_path, ("repetition", "mean", "stderr"), rows)
    manifest = RunManifest(
        experiment="vqe-run", master_seed=master_seed, config=dict(config),
        derived_seeds=seeds,
        outputs={"csv": csv_path.name, "E0": e0, "E_var": res.energy,
                 "relative_error": abs(res.energy - e0) / abs(e0),
                 "converged": res.converged,
                 "predicted_error": predicted_error(s, h, plan, groups),
                 "n_groups": groups.n_groups},
        duration_seconds=time.time() - t0)
    manifest.write(out_dir)
    return manifest


# ---------------------------------------------------------------------------
# vmc-run: SR optimization or the ansatz-quality sweep
# ---------------------------------------------------------------------------

def vmc_run(config: dict, out_dir: Path, master_seed: int,
            threads: int = 1) -> RunManifest:
    t0 = time.time()
    out_dir.mkdir(parents=True, exist_ok=True)
    L = int(config.get("L", 10))
    J = float(config.get("J", 1.0))
    Gamma = float(config.get("Gamma", 1.0))
    mode = str(config.get("mode", "sweep"))
    model = TFIMModel(L=L, J=J, Gamma=Gamma)
    e0, _ = ground_state(model.as_pauli_sum())
    seeds: dict = {}
    outputs: dict = {"E0": e0}
    if mode == "sr":
        n_steps = int(config.get("sr_steps", 200))
        samples = int(config.get("samples_per_step", 4096))
        delta = float(config.get("delta", 0.05))
        seed = derive_seed(master_seed, "vmc-sr", 0)
        seeds["sr"] = seed
        run = run_sr_optimization(model, n_steps=n_steps,
                                  samples_per_step=samples, delta=delta,
                                  rng=np.random.default_rng(seed))
        rows = [(i, run.energies[i], abs(run.energies[i] - e0) / abs(e0))
                for i in range(n_steps)]
        csv_path = out_dir / "vmc_sr.csv"
        write_csv(csv_path, ("step", "energy", "relative_error"), rows)
        e_fin = rayleigh_quotient(run.ansatz, model)
        outputs.update({"csv": csv_path.name,
                        "final_lam": list(run.ansatz.lam),
                        "final_energy": e_fin,
                        "final_relative_error": abs(e_fin - e0) / abs(e0)})
    elif mode == "sweep":
        m_list = [int(v) for v in _as_list(config.get("samples",
                                                      [100, 1000, 100000]))]
        lam1_grid = [float(v) for v in _as_list(config.get("lam1_grid",
                                                           list(LAM1_GRID)))]
        tail = tuple(float(v) for v in _as_list(
            config.get("jastrow_tail", list(L10_JASTROW_OPTIMUM[1:]))))
        rows = []
        task = 0
        for lam1 in lam1_grid:
            a = JastrowAnsatz(L, (lam1,) + tail)
            rel = abs(rayleigh_quotient(a, model) - e0) / abs(e0)
            for m in m_list:
                seed = derive_seed(master_seed, "vmc-sweep", task)
                seeds[f"lam1={lam1}/M{m}"] = seed
                est = estimate_energy_vmc(a, model, m,
                                          np.random.default_rng(seed))
                rows.append((lam1, rel, est.stderr, m))
                task += 1
        csv_path = out_dir / "vmc_sweep.csv"
        write_csv(csv_path, ("lam1", "relative_error", "stderr", "M_vmc"),
                  rows)
        outputs["csv"] = csv_path.name
    else:
        raise ValueError(f"unknown mode {mode!r}")
    manifest = RunManifest(
        experiment="vmc-run", master_seed=master_seed, config=dict(config),
        derived_seeds=seeds, outputs=outputs,
        duration_seconds=time.time() - t0)
    manifest.write(out_dir)
    return manifest


# ---------------------------------------------------------------------------
# qemcmc-run: sampled chains on one model
# ---------------------------------------------------------------------------

def qemcmc_run(config: dict, out_dir: Path, master_seed: int,
               threads: int = 1) -> RunManifest:
    t0 = time.time()
    out_dir.mkdir(parents=True, exist_ok=True)
    beta = float(config.get("beta", 2.0))
    steps = int(config.get("steps", 20000))
    n_chains = int(config.get("chains", 4))
    proposals = [str(v).strip() for v in _as_list(
        config.get("proposals", ["quantum", "single-flip"]))]
    if "instance" in config:
        model = load_instance(config["instance"])
    else:
        L = int(config.get("L", 6))
        kind = str(config.get("ensemble", "ferromagnet"))
        model = _instance_for(kind, L,
                              derive_seed(master_seed, "qemcmc-inst", 0))
    cfg = QuantumProposalConfig.for_model(model)
    v = energy_table(model)
    rows = []
    seeds = {}
    for i, name in enumerate(proposals):
        seed = derive_seed(master_seed, "qemcmc-chain", i)
        seeds[name] = seed
        proposal = cfg if name == "quantum" else name
        rec, diag = run_chain(model, proposal, beta, steps,
                              np.random.default_rng(seed),
                              n_chains=n_chains)
        mean_e = float(v[rec].mean())
        rows.append((name, diag.acceptance_rate, diag.tau_energy, mean_e))
    csv_path = out_dir / "qemcmc_run.csv"
    write_csv(csv_path, ("proposal", "acceptance_rate", "tau_energy",
                         "mean_energy"), rows)
    manifest = RunManifest(
        experiment="qemcmc-run", master_seed=master_seed,
        config=dict(config), derived_seeds=seeds,
        outputs={"csv": csv_path.name, "beta": beta},
        duration_seconds=time.time() - t0)
    manifest.write(out_dir)
    return manifest


# ---------------------------------------------------------------------------
# jw-map: fermion file in, Pauli file out
# ---------------------------------------------------------------------------

def jw_map(input_path: Path, output_path: Path) -> dict:
    """Map a fermion Hamiltonian file and report size statistics."""
    from .pauli import map_fermionic

    text = Path(input_path).read_text()
    ferm = fermion_hamiltonian_from_json(text)
    mapped = map_fermionic(ferm)
    groups = group_qubitwise(mapped)
    summary = {
        "n_terms": len(mapped.terms),
        "one_norm": one_norm(mapped),
        "n_groups": groups.n_groups,
    }
    doc = json.loads(pauli_sum_to_json(mapped))
    doc["summary"] = summary
    Path(output_path).write_text(json.dumps(doc, indent=2, sort_keys=True)
                                 + "\n")
    return summary
