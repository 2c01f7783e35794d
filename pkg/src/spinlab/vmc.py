"""Variational Monte Carlo for the Ising chain, plus a continuous toy.

The estimator of interest is the local energy E_L(x) = <x|H|psi>/<x|psi>,
whose variance vanishes when the ansatz is an eigenstate.  Sampling uses
single-spin-flip Metropolis targeting psi(x)^2; many chains advance in
lockstep as rows of a numpy array, which is what makes the repetition
experiments affordable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .statevector import SpinConfiguration, TFIMModel, all_spin_values
from .vqe import EnergyEstimate

TABLE_CAP = 20  # build full 2^L lookup tables up to this many sites


@dataclass(frozen=True)
class JastrowAnsatz:
    """Pairwise log-linear ansatz log psi = sum_r lam_r sum_k s_k s_{k+r}.

    Distances run r = 1 .. L/2 with periodic indexing, so the longest
    distance counts every pair twice; the convention follows the defining
    sum literally.  psi is strictly positive for every configuration.
    """

    L: int
    lam: tuple[float, ...]

    def __post_init__(self):
        if self.L < 2 or self.L % 2:
            raise ValueError("L must be even and at least 2")
        if len(self.lam) != self.L // 2:
            raise ValueError(f"need {self.L // 2} parameters, got {len(self.lam)}")
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))

    def with_lam(self, lam) -> "JastrowAnsatz":
        return JastrowAnsatz(self.L, tuple(lam))

    def log_psi_spins(self, spins: np.ndarray) -> np.ndarray:
        """log psi for every row of an (n, L) spin matrix."""
        spins = np.atleast_2d(np.asarray(spins))
        out = np.zeros(spins.shape[0])
        for r, lam_r in enumerate(self.lam, start=1):
            out += lam_r * np.sum(spins * np.roll(spins, -r, axis=1), axis=1)
        return out

    def log_psi(self, x: SpinConfiguration) -> float:
        return float(self.log_psi_spins(np.array([x.spins]))[0])

    def amplitude_table(self) -> np.ndarray:
        """psi over all 2^L basis indices (positive reals)."""
        if self.L > TABLE_CAP:
            raise ValueError("table too large")
        return np.exp(self.log_psi_spins(all_spin_values(self.L)))


@dataclass(frozen=True)
class AmplitudeTableAnsatz:
    """Arbitrary wavefunction given by its full amplitude table.

    Exists so exact eigenvectors can be fed to the VMC estimators; amplitudes
    may carry signs or phases.  Sampling weights use |amplitude|^2.
    """

    L: int
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table)
        if t.shape != (2 ** self.L,):
            raise ValueError(f"table must have 2^{self.L} entries")
        if not np.any(t != 0):
            raise ValueError("table is identically zero")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "table", t)

    def log_psi(self, x: SpinConfiguration) -> float:
        a = abs(self.table[x.to_index()])
        return float(np.log(a)) if a > 0 else float("-inf")

    def amplitude_table(self) -> np.ndarray:
        return self.table


def _log_weight_table(a) -> np.ndarray:
    """log of the unnormalized sampling weight |psi|^2 per basis index."""
    amp = np.abs(np.asarray(a.amplitude_table(), dtype=complex))
    with np.errstate(divide="ignore"):
        return 2.0 * np.log(amp)


# ---------------------------------------------------------------------------
# Local energy
# ---------------------------------------------------------------------------

def local_energy_table(a, model: TFIMModel) -> np.ndarray:
    """E_L(x) for all 2^L configurations.

    E_L(x) = -J sum_k s_k s_{k+1} - Gamma sum_k psi(x^(k))/psi(x) with x^(k)
    the single-flip neighbor.  Entries where psi(x) = 0 come out nan.
    """
    amp = np.asarray(a.amplitude_table())
    zz = model.zz_sum_table().astype(float)
    idx = np.arange(2 ** model.L)
    ratio_sum = np.zeros(2 ** model.L, dtype=amp.dtype)
    for k in range(model.L):
        ratio_sum = ratio_sum + amp[idx ^ (1 << k)]
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = -model.J * zz - model.Gamma * np.where(
            amp != 0, ratio_sum / np.where(amp != 0, amp, 1), np.nan)
    if np.iscomplexobj(vals):
        vals = np.where(np.abs(vals.imag) < 1e-9, vals.real, np.nan)
    return np.asarray(vals, dtype=float)


def local_energy_tfim(a, x: SpinConfiguration, model: TFIMModel) -> float:
    """Single-configuration local energy; nan marks a zero-amplitude pivot."""
    spins = np.array(x.spins)
    zz = float(sum(spins[p] * spins[q] for p, q in model.bonds()))
    if isinstance(a, JastrowAnsatz):
        ratios = 0.0
        base = a.log_psi(x)
        for k in range(model.L):
            flipped = list(x.spins)
            flipped[k] = -flipped[k]
            ratios += np.exp(a.log_psi(SpinConfiguration(tuple(flipped))) - base)
        return float(-model.J * zz - model.Gamma * ratios)
    table = np.asarray(a.amplitude_table())
    i = x.to_index()
    if table[i] == 0:
        return float("nan")
    ratios = sum(table[i ^ (1 << k)] / table[i] for k in range(model.L))
    val = -model.J * zz - model.Gamma * ratios
    if isinstance(val, complex):
        if abs(val.imag) > 1e-9:
            return float("nan")
        val = val.real
    return float(val)


@dataclass(frozen=True)
class LocalEnergyRecord:
    config: SpinConfiguration
    e_local: float


def local_energy_records(a, configs: Sequence[SpinConfiguration],
                         model: TFIMModel) -> list[LocalEnergyRecord]:
    table = local_energy_table(a, model)
    return [LocalEnergyRecord(c, float(table[c.to_index()])) for c in configs]


def rayleigh_quotient(a, model: TFIMModel) -> float:
    """<psi|H|psi>/<psi|psi> by full enumeration (the exact variational energy)."""
    amp = np.asarray(a.amplitude_table(), dtype=complex)
    p = np.abs(amp) ** 2
    p = p / p.sum()
    e = local_energy_table(a, model)
    mask = p > 0
    return float(np.real(np.sum(p[mask] * e[mask])))


# ---------------------------------------------------------------------------
# Metropolis sampling (vectorized across chains)
# ---------------------------------------------------------------------------

def run_metropolis_chains(a, n_chains: int, n_records: int, burn_in: int,
                          thinning: int, rng: np.random.Generator,
                          initial: np.ndarray | None = None) -> np.ndarray:
    """(n_chains, n_records) basis indices from parallel single-flip chains.

    burn_in and thinning count single-flip attempts per chain.  Proposal
    flips one uniformly chosen spin; acceptance is min[1, psi'^2/psi^2].
    """
    L = a.L
    lw = _log_weight_table(a)
    if initial is None:
        idx = rng.integers(0, 2 ** L, size=n_chains)
        # restart any chain parked on a zero-weight configuration
        while np.any(np.isinf(lw[idx])):
            bad = np.isinf(lw[idx])
            idx[bad] = rng.integers(0, 2 ** L, size=int(bad.sum()))
    else:
        idx = np.array(initial, dtype=np.int64, copy=True)
    records = np.empty((n_chains, n_records), dtype=np.int64)
    total = burn_in + n_records * thinning
    block = 4096
    done = 0
    rec = 0
    while done < total:
        n = min(block, total - done)
        sites = rng.integers(0, L, size=(n, n_chains))
        logu = np.log(rng.random(size=(n, n_chains)))
        for t in range(n):
            prop = idx ^ (1 << sites[t])
            accept = logu[t] < lw[prop] - lw[idx]
            idx = np.where(accept, prop, idx)
            step = done + t + 1
            if step > burn_in and (step - burn_in) % thinning == 0:
                records[:, rec] = idx
                rec += 1
        done += n
    return records


def default_burn_in(L: int) -> int:
    """10 L sweeps of L attempts each."""
    return 10 * L * L


def metropolis_sample(a, M: int, burn_in: int | None = None,
                      thinning: int | None = None,
                      rng: np.random.Generator | None = None
                      ) -> list[SpinConfiguration]:
    """M thinned configurations from one chain targeting psi^2."""
    if M < 1:
        raise ValueError("need at least one sample")
    if rng is None:
        rng = np.random.default_rng(0)
    L = a.L
    if burn_in is None:
        burn_in = default_burn_in(L)
    if thinning is None:
        thinning = L
    idx = run_metropolis_chains(a, 1, M, burn_in, thinning, rng)[0]
    return [SpinConfiguration.from_index(int(i), L) for i in idx]


def estimate_energy_vmc(a, model: TFIMModel, M_vmc: int,
                        rng: np.random.Generator,
                        n_batches: int = 16) -> EnergyEstimate:
    """Sample mean of E_L with a batch-means error bar."""
    idx = run_metropolis_chains(a, 1, M_vmc, default_burn_in(a.L), a.L, rng)[0]
    e = local_energy_table(a, model)[idx]
    mean = float(e.mean())
    k = min(n_batches, M_vmc)
    batches = np.array_split(e, k)
    bm = np.array([b.mean() for b in batches])
    stderr = float(bm.std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0
    return EnergyEstimate(mean=mean, stderr=stderr, shots_used=M_vmc)


def estimate_energy_vmc_batch(a, model: TFIMModel, M_vmc: int, n_reps: int,
                              rng: np.random.Generator,
                              n_batches: int = 16) -> list[EnergyEstimate]:
    """n_reps independent repetitions run as parallel chains."""
    idx = run_metropolis_chains(a, n_reps, M_vmc, default_burn_in(a.L),
                                a.L, rng)
    table = local_energy_table(a, model)
    out = []
    for row in idx:
        e = table[row]
        k = min(n_batches, M_vmc)
        bm = np.array([b.mean() for b in np.array_split(e, k)])
        stderr = float(bm.std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0
        out.append(EnergyEstimate(mean=float(e.mean()), stderr=stderr,
                                  shots_used=M_vmc))
    return out


# ---------------------------------------------------------------------------
# Stochastic reconfiguration
# ---------------------------------------------------------------------------

def log_derivatives(a: JastrowAnsatz, x: SpinConfiguration) -> np.ndarray:
    """O_r(x) = d log psi / d lam_r = sum_k s_k s_{k+r}."""
    spins = np.array(x.spins)
    return np.array([np.sum(spins * np.roll(spins, -r))
                     for r in range(1, a.L // 2 + 1)], dtype=float)


def _log_derivative_matrix(a: JastrowAnsatz, spins: np.ndarray) -> np.ndarray:
    """(n_samples, L/2) matrix of O_r values."""
    return np.stack([np.sum(spins * np.roll(spins, -r, axis=1), axis=1)
                     for r in range(1, a.L // 2 + 1)], axis=1).astype(float)


def sr_step(a: JastrowAnsatz, samples: Sequence[LocalEnergyRecord],
            delta: float, lam_reg: float | None = None) -> JastrowAnsatz:
    """One preconditioned update lam' = lam + delta (S + reg I)^{-1} f.

    The force f_r = -2(<O_r E_L> - <O_r><E_L>) and the overlap matrix
    S_rs = <O_r O_s> - <O_r><O_s> come from the same sample set.  With
    lam_reg unset, the ridge is 1e-3 of the largest diagonal entry.
    """
    spins = np.array([rec.config.spins for rec in samples])
    e_loc = np.array([rec.e_local for rec in samples])
    o = _log_derivative_matrix(a, spins)
    return a.with_lam(_sr_update(np.asarray(a.lam), o, e_loc, delta, lam_reg))


def _sr_update(lam: np.ndarray, o: np.ndarray, e_loc: np.ndarray,
               delta: float, lam_reg: float | None) -> np.ndarray:
    o_mean = o.mean(axis=0)
    f = -2.0 * ((o * e_loc[:, None]).mean(axis=0) - o_mean * e_loc.mean())
    s = (o.T @ o) / o.shape[0] - np.outer(o_mean, o_mean)
    if lam_reg is None:
        lam_reg = 1e-3 * max(float(np.max(np.diag(s))), 1e-12)
    move = np.linalg.solve(s + lam_reg * np.eye(s.shape[0]), f)
    return lam + delta * move


@dataclass(frozen=True)
class SRRun:
    ansatz: JastrowAnsatz
    energies: np.ndarray  # exact variational energy per step
    lam_history: np.ndarray


def run_sr_optimization(model: TFIMModel, n_steps: int = 200,
                        samples_per_step: int = 4096,
                        delta: float = 0.05,
                        lam_reg: float | None = None,
                        rng: np.random.Generator | None = None,
                        n_chains: int = 64,
                        tail_fraction: float = 0.25,
                        initial: JastrowAnsatz | None = None) -> SRRun:
    """SR descent from lam = 0 with persistent parallel sampling chains.

    Each step draws samples_per_step records spread over n_chains warm
    chains, applies one sr_step, and logs the exact variational energy.
    The returned parameters average the final tail_fraction of the history
    to shave off the stochastic dither around the optimum.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    a = initial if initial is not None else JastrowAnsatz(
        model.L, (0.0,) * (model.L // 2))
    spins_all = all_spin_values(model.L)
    per_chain = max(1, samples_per_step // n_chains)
    state = rng.integers(0, 2 ** model.L, size=n_chains)
    energies = np.empty(n_steps)
    lam_hist = np.empty((n_steps, model.L // 2))
    burn = default_burn_in(model.L)
    for step in range(n_steps):
        idx = run_metropolis_chains(a, n_chains, per_chain,
                                    burn if step == 0 else 2 * model.L * model.L,
                                    model.L, rng, initial=state)
        state = idx[:, -1].copy()
        flat = idx.reshape(-1)
        e_loc = local_energy_table(a, model)[flat]
        o = _log_derivative_matrix(a, spins_all[flat])
        new_lam = _sr_update(np.asarray(a.lam), o, e_loc, delta, lam_reg)
        a = a.with_lam(new_lam)
        lam_hist[step] = new_lam
        energies[step] = rayleigh_quotient(a, model)
    tail = max(1, int(n_steps * tail_fraction))
    a_final = a.with_lam(lam_hist[-tail:].mean(axis=0))
    return SRRun(ansatz=a_final, energies=energies, lam_history=lam_hist)


# ---------------------------------------------------------------------------
# Continuous harmonic toy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianToy:
    """Gaussian trial state psi(x) = exp(-theta x^2) in a potential V."""

    theta: float
    omega: float = 1.0

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive for normalizability")
        if self.omega <= 0:
            raise ValueError("omega must be positive")


def gaussian_local_energy(g: GaussianToy, x: float,
                          potential: Callable[[float], float]) -> float:
    """E_L(x) = theta - 2 theta^2 x^2 + V(x) for the Gaussian ansatz."""
    return g.theta - 2.0 * g.theta ** 2 * x ** 2 + potential(x)


def harmonic_local_energy(g: GaussianToy, x: float) -> float:
    """Harmonic case V(x) = (omega/2) x^2: E_L = theta + x^2 (omega/2 - 2 theta^2)."""
    return g.theta + x ** 2 * (g.omega / 2.0 - 2.0 * g.theta ** 2)
