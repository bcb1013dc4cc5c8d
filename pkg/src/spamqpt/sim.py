"""Simulated single-qubit QPT experiments with SPAM noise.

The simulated gate is an ``X_pi/2`` rotation followed by depolarizing noise.
States and measurements are Pauli eigenstates; each circuit prepares one
state, optionally applies the gate, and measures one Pauli basis with two
outcomes. Calibration circuits skip the gate.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import hs, linalg, tomo
from .errors import DimensionError, NonPhysicalModelError, QPTError

PAULI_KETS = {
    "+x": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-x": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+y": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-y": np.array([1, -1j], dtype=complex) / np.sqrt(2),
    "+z": np.array([1, 0], dtype=complex),
    "-z": np.array([0, 1], dtype=complex),
}
BASIS_OUTCOMES = {"x": ("+x", "-x"), "y": ("+y", "-y"), "z": ("+z", "-z")}

PROB_TOL = 1e-12


def _fix_phase(ket):
    # first non-negligible component real and positive
    k = np.asarray(ket, dtype=complex)
    lead = k[np.flatnonzero(np.abs(k) > 1e-12)[0]]
    return k * (abs(lead) / lead)


def orthogonal_ket(ket) -> np.ndarray:
    """The qubit state orthogonal to ``ket``, phase-fixed like :func:`_fix_phase`."""
    a, b = np.asarray(ket, dtype=complex)
    return _fix_phase(np.array([-b.conjugate(), a.conjugate()]))


def density(label: str) -> np.ndarray:
    k = PAULI_KETS[label]
    return np.outer(k, k.conj())


@dataclass(frozen=True)
class NoiseModel:
    """SPAM noise plus gate depolarization.

    ``kind="depolarizing"`` depolarizes states with retention ``gamma_prep``
    and effects with ``gamma_meas``. ``kind="coherent"`` tilts every prepared
    state by ``phi`` toward its orthogonal complement and leaves measurements
    ideal.
    """

    kind: str = "depolarizing"
    gamma_prep: float = 1.0
    gamma_meas: float = 1.0
    phi: float = 0.0
    gate_gamma: float = 0.99

    def __post_init__(self):
        if self.kind not in ("depolarizing", "coherent"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        for name in ("gamma_prep", "gamma_meas", "gate_gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.phi < np.pi / 2:
            raise ValueError("phi must lie in [0, pi/2)")

    @classmethod
    def depolarizing(cls, strength: float, gate_gamma: float = 0.99):
        """Equal per-side depolarizing strength ``1 - gamma``."""
        return cls("depolarizing", 1.0 - strength, 1.0 - strength, 0.0, gate_gamma)

    @classmethod
    def coherent(cls, phi: float, gate_gamma: float = 0.99):
        return cls("coherent", 1.0, 1.0, phi, gate_gamma)

    @classmethod
    def none(cls, gate_gamma: float = 0.99):
        return cls("depolarizing", 1.0, 1.0, 0.0, gate_gamma)

    @property
    def param(self) -> float:
        if self.kind == "coherent":
            return self.phi
        return 1.0 - self.gamma_prep


@dataclass(frozen=True)
class ExperimentDesign:
    preps: tuple = ("+x", "-x", "+y", "+z")
    bases: tuple = ("x", "y", "z")
    tracked_effects: tuple = ("+x", "-x", "+y", "+z")
    shots: int | None = 5000
    include_calibration: bool = True

    def __post_init__(self):
        object.__setattr__(self, "preps", tuple(self.preps))
        object.__setattr__(self, "bases", tuple(self.bases))
        object.__setattr__(self, "tracked_effects", tuple(self.tracked_effects))
        for p in self.preps:
            if p not in PAULI_KETS:
                raise ValueError(f"unknown state label {p!r}")
        for b in self.bases:
            if b not in BASIS_OUTCOMES:
                raise ValueError(f"unknown basis label {b!r}")
        missing = set(self.tracked_effects) - set(self.outcome_labels)
        if missing:
            raise ValueError(f"tracked effects {sorted(missing)} are not outcomes of the measured bases")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")

    @property
    def outcome_labels(self) -> tuple:
        return tuple(o for b in self.bases for o in BASIS_OUTCOMES[b])

    @property
    def n_circuits(self) -> int:
        per = len(self.preps) * len(self.bases)
        return 2 * per if self.include_calibration else per

    def frame(self, basis=None, effects: Sequence[str] | None = None) -> tomo.Frame:
        """A-priori frame; ``effects`` defaults to the tracked effects."""
        basis = basis or hs.build_basis(2)
        effects = tuple(effects) if effects is not None else self.tracked_effects
        m0 = np.array([hs.vectorize(density(e), basis, "effect").coords for e in effects])
        s0 = np.array([hs.vectorize(density(p), basis).coords for p in self.preps]).T
        return tomo.Frame(m0, s0, effects, self.preps)

    def full_frame(self, basis=None) -> tomo.Frame:
        return self.frame(basis, self.outcome_labels)

    def to_dict(self):
        return {
            "preps": list(self.preps),
            "bases": list(self.bases),
            "tracked_effects": list(self.tracked_effects),
            "shots": self.shots,
            "include_calibration": self.include_calibration,
        }


MINIMAL_DESIGN = ExperimentDesign()
OVERCOMPLETE_DESIGN = ExperimentDesign(
    preps=("+x", "-x", "+y", "-y", "+z", "-z"),
    tracked_effects=("+x", "-x", "+y", "-y", "+z", "-z"),
)
DESIGNS = {"minimal": MINIMAL_DESIGN, "overcomplete": OVERCOMPLETE_DESIGN}


def true_gate(noise: NoiseModel, basis=None) -> hs.Superoperator:
    basis = basis or hs.build_basis(2)
    return hs.compose(hs.depolarizing_superop(noise.gate_gamma, basis), hs.unitary_to_superop(hs.X_PI_2, basis))


def true_frames(noise: NoiseModel, design: ExperimentDesign, basis=None):
    """Actual effect rows (every measured outcome) and state columns."""
    basis = basis or hs.build_basis(2)
    full = design.full_frame(basis)
    m0, s0 = full.m0, full.s0
    if noise.kind == "depolarizing":
        s = hs.depolarizing_superop(noise.gamma_prep, basis).mat @ s0
        m = m0 @ hs.depolarizing_superop(noise.gamma_meas, basis).mat
        return m, s
    cols = []
    for label in design.preps:
        psi = _fix_phase(PAULI_KETS[label])
        rho = hs.rotated_state(psi, orthogonal_ket(psi), noise.phi)
        cols.append(hs.vectorize(rho, basis).coords)
    return m0.copy(), np.array(cols).T


def _clamped(probs):
    if probs.min() < -PROB_TOL or probs.max() > 1 + PROB_TOL:
        raise NonPhysicalModelError(
            f"model probabilities leave [0, 1]: range [{probs.min():.3g}, {probs.max():.3g}]"
        )
    return np.clip(probs, 0.0, 1.0)


def exact_prob_matrices(M, G, S, row_labels=(), col_labels=()):
    """Exact calibration ``I = M S`` and gate ``P = M G S`` probability tables."""
    M, S = np.asarray(M, dtype=float), np.asarray(S, dtype=float)
    g = G.mat if isinstance(G, hs.Superoperator) else np.asarray(G, dtype=float)
    if M.shape[1] != g.shape[0] or g.shape[1] != S.shape[0]:
        raise DimensionError(f"shapes do not chain: M {M.shape}, G {g.shape}, S {S.shape}")
    i_mat = _clamped(M @ S)
    p_mat = _clamped(M @ g @ S)
    return (
        tomo.ProbMatrix.exact(i_mat, row_labels, col_labels),
        tomo.ProbMatrix.exact(p_mat, row_labels, col_labels),
    )


def _plus_rows(design):
    labels = design.outcome_labels
    return [labels.index(BASIS_OUTCOMES[b][0]) for b in design.bases]


def _sample_table(exact: tomo.ProbMatrix, design, shots, rng) -> tomo.ProbMatrix:
    plus = _plus_rows(design)
    p_plus = exact.values[plus, :]
    k = rng.binomial(shots, p_plus)
    freq = np.empty_like(exact.values)
    freq[plus, :] = k / shots
    freq[[r + 1 for r in plus], :] = (shots - k) / shots
    return tomo.ProbMatrix(freq, shots, exact.row_labels, exact.col_labels)


def sample_dataset(I: tomo.ProbMatrix, P: tomo.ProbMatrix, design: ExperimentDesign, seed: int,
                   shots: int | None = None) -> tomo.DataSet:
    """Binomially sample every two-outcome circuit.

    Gate and calibration circuits draw from independent child streams of
    ``seed``, so the gate data does not depend on whether calibration is run.
    ``shots=None`` (or infinite) returns the exact probabilities.
    """
    shots = design.shots if shots is None else shots
    if shots is None or (isinstance(shots, float) and math.isinf(shots)):
        return tomo.DataSet(P, I if design.include_calibration else None)
    if shots < 1:
        raise ValueError("shots must be >= 1")
    gate_ss, cal_ss = np.random.SeedSequence(seed).spawn(2)
    p_hat = _sample_table(P, design, int(shots), np.random.default_rng(gate_ss))
    i_hat = None
    if design.include_calibration:
        i_hat = _sample_table(I, design, int(shots), np.random.default_rng(cal_ss))
    return tomo.DataSet(p_hat, i_hat)


def simulate_dataset(design: ExperimentDesign, noise: NoiseModel, seed: int, basis=None) -> tomo.DataSet:
    """Sampled calibration and gate data for one simulated experiment."""
    basis = basis or hs.build_basis(2)
    M, S = true_frames(noise, design, basis)
    I, P = exact_prob_matrices(M, true_gate(noise, basis), S, design.outcome_labels, design.preps)
    return sample_dataset(I, P, design, seed)


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    gauge_p: float | None = None

    KINDS = ("standard", "corrected", "ols", "overcomplete")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}; choose from {self.KINDS}")
        if self.kind in ("corrected", "overcomplete"):
            p = 0.5 if self.gauge_p is None else float(self.gauge_p)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"gauge p must lie in [0, 1], got {p}")
            object.__setattr__(self, "gauge_p", p)
        elif self.gauge_p is not None:
            raise ValueError(f"estimator {self.kind!r} takes no gauge parameter")

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        """Parse ``"standard"``, ``"corrected:0.5"``, ``"overcomplete"`` and so on."""
        kind, _, p = text.strip().partition(":")
        return cls(kind, float(p) if p else None)

    @property
    def tag(self) -> str:
        return self.kind if self.gauge_p is None else f"{self.kind}:{self.gauge_p:g}"

    @property
    def needs_calibration(self):
        return self.kind in ("corrected", "overcomplete")

    def run(self, design: ExperimentDesign, data: tomo.DataSet, basis=None, truncate_p=True) -> tomo.Estimate:
        basis = basis or hs.build_basis(2)
        if self.kind in ("standard", "corrected"):
            frame = design.frame(basis)
        else:
            frame = design.full_frame(basis)
        if self.needs_calibration and data.i_hat is None:
            raise QPTError(f"estimator {self.tag} needs calibration data")
        if self.kind == "standard":
            return tomo.standard_qpt(frame, data.p_hat, basis)
        if self.kind == "ols":
            return tomo.ols_qpt(frame, data.p_hat, basis)
        if self.kind == "corrected":
            return tomo.spam_corrected_qpt(frame, data.i_hat, data.p_hat, self.gauge_p, basis)
        return tomo.overcomplete_spam_corrected_qpt(
            frame, data.i_hat, data.p_hat, truncate_p=truncate_p, gauge_p=self.gauge_p, basis=basis
        )


DEFAULT_ESTIMATORS = tuple(EstimatorSpec.parse(s) for s in ("standard", "corrected:0", "corrected:0.5", "corrected:1"))

METRICS = (
    "fid_err_entanglement",
    "fid_err_average",
    "abs_fid_err_entanglement",
    "abs_fid_err_average",
    "eigen_delta",
)


@dataclass(frozen=True)
class SweepRecord:
    grid_index: int
    noise_param: float
    estimator: str
    run_index: int
    seed: int
    fid_err_entanglement: float = math.nan
    fid_err_average: float = math.nan
    eigen_delta: float = math.nan
    cp_slack: float = math.nan
    tp_slack: float = math.nan
    spam_check_passed: bool | None = None
    error: str = ""

    @property
    def abs_fid_err_entanglement(self):
        return abs(self.fid_err_entanglement)

    @property
    def abs_fid_err_average(self):
        return abs(self.fid_err_average)

    def fidelity_error(self, convention="average"):
        return self.fid_err_average if convention == "average" else self.fid_err_entanglement


def _as_specs(estimators):
    return [e if isinstance(e, EstimatorSpec) else EstimatorSpec.parse(e) for e in estimators]


def run_replication(design: ExperimentDesign, noise: NoiseModel, estimators, seed: int,
                    run_index: int = 0, grid_index: int = 0, truncate_p: bool = True,
                    basis=None) -> list[SweepRecord]:
    """One simulated experiment analyzed by every estimator on the same data."""
    basis = basis or hs.build_basis(2)
    g_true = true_gate(noise, basis)
    f_true = hs.fidelities(g_true, hs.X_PI_2, basis)
    spec_true = linalg.eigenvalues(g_true.mat)
    data = simulate_dataset(design, noise, seed, basis)

    check = None
    if data.i_hat is not None:
        try:
            check = tomo.spam_consistency_check(design.frame(basis), data.i_hat).passed
        except QPTError:
            check = None

    out = []
    for spec in _as_specs(estimators):
        common = dict(grid_index=grid_index, noise_param=noise.param, estimator=spec.tag,
                      run_index=run_index, seed=seed, spam_check_passed=check)
        try:
            est = spec.run(design, data, basis, truncate_p)
        except (QPTError, ValueError, np.linalg.LinAlgError) as exc:
            out.append(SweepRecord(**common, error=f"{type(exc).__name__}: {exc}"))
            continue
        f_est = hs.fidelities(est.g_hat, hs.X_PI_2, basis)
        out.append(SweepRecord(
            **common,
            fid_err_entanglement=f_est["entanglement"] - f_true["entanglement"],
            fid_err_average=f_est["average"] - f_true["average"],
            eigen_delta=linalg.eigen_delta(spec_true, linalg.eigenvalues(est.g_hat.mat)),
            cp_slack=est.diagnostics["cp_slack"],
            tp_slack=est.diagnostics["tp_slack"],
        ))
    return out


@dataclass(frozen=True)
class Aggregate:
    grid_index: int
    noise_param: float
    estimator: str
    n: int
    mean: dict
    sigma: dict


@dataclass
class SweepResult:
    records: list
    aggregates: list = field(default_factory=list)

    def aggregate(self, estimator: str, grid_index: int | None = None):
        rows = [a for a in self.aggregates if a.estimator == estimator]
        if grid_index is not None:
            rows = [a for a in rows if a.grid_index == grid_index]
        return rows

    def series(self, estimator: str, metric: str, stat: str = "mean") -> np.ndarray:
        return np.array([getattr(a, stat)[metric] for a in self.aggregate(estimator)])


def _aggregate(records, noise_grid, specs) -> list[Aggregate]:
    out = []
    for gi, noise in enumerate(noise_grid):
        for spec in specs:
            rows = [r for r in records if r.grid_index == gi and r.estimator == spec.tag and not r.error]
            mean, sigma = {}, {}
            for m in METRICS:
                vals = np.array([getattr(r, m) for r in rows], dtype=float)
                mean[m] = float(vals.mean()) if vals.size else math.nan
                sigma[m] = float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else math.nan)
            out.append(Aggregate(gi, noise.param, spec.tag, len(rows), mean, sigma))
    return out


def _replication_task(args):
    return run_replication(*args[:4], run_index=args[4], grid_index=args[5], truncate_p=args[6])


def sweep(noise_grid: Sequence[NoiseModel], n_runs: int, design: ExperimentDesign, estimators,
          base_seed: int = 0, truncate_p: bool = True, workers: int = 1) -> SweepResult:
    """Replicate experiments over a grid of noise models.

    Run ``r`` uses seed ``base_seed + r`` at every grid point, so runs are
    paired across grid points and estimators. With ``workers > 1`` the
    replications run in a process pool; the record order is always
    (grid index, run index, estimator).
    """
    if not noise_grid:
        raise ValueError("noise grid is empty")
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    specs = _as_specs(estimators)
    tasks = [
        (design, noise, specs, base_seed + r, r, gi, truncate_p)
        for gi, noise in enumerate(noise_grid)
        for r in range(n_runs)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_replication_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        chunks = [_replication_task(t) for t in tasks]
    records = [rec for chunk in chunks for rec in chunk]
    return SweepResult(records, _aggregate(records, noise_grid, specs))


def depolarizing_grid(strengths=None, gate_gamma=0.99) -> list[NoiseModel]:
    """Per-side depolarizing strengths, default ``0, 0.005, ..., 0.04``."""
    if strengths is None:
        strengths = np.round(np.arange(9) * 0.005, 10)
    return [NoiseModel.depolarizing(float(s), gate_gamma) for s in strengths]


def coherent_grid(phis=None, gate_gamma=0.99) -> list[NoiseModel]:
    """Coherent tilt angles, default ``0, 0.0125, ..., 0.1`` rad."""
    if phis is None:
        phis = np.round(np.arange(9) * 0.0125, 10)
    return [NoiseModel.coherent(float(p), gate_gamma) for p in phis]
