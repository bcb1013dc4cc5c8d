"""Process tomography estimators.

All estimators take a :class:`Frame` holding the a-priori effect rows ``m0``
and state columns ``s0`` and tables of observed frequencies. The calibration
table ``i_hat`` comes from circuits with no gate between preparation and
measurement; ``p_hat`` comes from the gate circuits.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .errors import (
    DegenerateDataError,
    DimensionError,
    FrameError,
    MatrixPowerError,
    MissingShotsError,
    ShapeMismatchError,
    SpamCorrectionError,
)
from .hs import HermitianBasis, Superoperator, build_basis, cptp_report

COND_MAX = 1e8
FACTORIZATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Frame:
    """A-priori effects (rows of ``m0``) and states (columns of ``s0``)."""

    m0: np.ndarray
    s0: np.ndarray
    effect_labels: tuple = ()
    state_labels: tuple = ()

    def __post_init__(self):
        m0 = np.array(self.m0, dtype=float)
        s0 = np.array(self.s0, dtype=float)
        if m0.ndim != 2 or s0.ndim != 2 or m0.shape[1] != s0.shape[0]:
            raise DimensionError(f"frame shapes do not chain: m0 {m0.shape}, s0 {s0.shape}")
        n = s0.shape[0]
        d = int(round(np.sqrt(n)))
        if d * d != n:
            raise DimensionError(f"operator space size {n} is not a square")
        for name, mat, k in (("m0", m0, m0.shape[0]), ("s0", s0, s0.shape[1])):
            if k < n:
                raise FrameError(f"{name} has {k} elements, need at least d^2 = {n}", name)
            if np.linalg.matrix_rank(mat) < n:
                raise FrameError(f"{name} is not informationally complete (rank < {n})", name)
            mat.setflags(write=False)
        eff = tuple(self.effect_labels) or tuple(f"E{i}" for i in range(m0.shape[0]))
        st = tuple(self.state_labels) or tuple(f"rho{j}" for j in range(s0.shape[1]))
        if len(eff) != m0.shape[0] or len(st) != s0.shape[1]:
            raise DimensionError("label counts do not match frame shape")
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "effect_labels", eff)
        object.__setattr__(self, "state_labels", st)

    @property
    def d2(self):
        return self.s0.shape[0]

    @property
    def dim(self):
        return int(round(np.sqrt(self.d2)))

    @property
    def is_square(self):
        return self.m0.shape[0] == self.d2 and self.s0.shape[1] == self.d2

    @property
    def shape(self):
        return (self.m0.shape[0], self.s0.shape[1])


@dataclass(frozen=True, eq=False)
class ProbMatrix:
    """Outcome frequencies with their shot counts.

    ``shots`` broadcasts against ``values``; ``numpy.inf`` marks exact
    probabilities and ``None`` means the shot counts are unknown. Rows and
    columns may be labelled, in which case estimators pick the rows and
    columns named by the frame.
    """

    values: np.ndarray
    shots: object = None
    row_labels: tuple = ()
    col_labels: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError(f"probability table must be 2-D, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.shots is not None:
            s = np.broadcast_to(np.asarray(self.shots, dtype=float), v.shape).copy()
            if np.any(s < 1):
                raise ValueError("shot counts must be >= 1")
            s.setflags(write=False)
            object.__setattr__(self, "shots", s)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        if self.row_labels and len(self.row_labels) != v.shape[0]:
            raise DimensionError("row label count does not match table")
        if self.col_labels and len(self.col_labels) != v.shape[1]:
            raise DimensionError("column label count does not match table")

    @classmethod
    def exact(cls, values, row_labels=(), col_labels=()):
        return cls(values, np.inf, row_labels, col_labels)

    @property
    def is_exact(self):
        return self.shots is not None and bool(np.all(np.isinf(self.shots)))

    def restrict(self, row_labels: Sequence[str], col_labels: Sequence[str]) -> "ProbMatrix":
        """Sub-table with the given rows and columns, in that order."""
        if not self.row_labels or not self.col_labels:
            raise ShapeMismatchError("table has no labels to select from")
        try:
            ri = [self.row_labels.index(r) for r in row_labels]
            ci = [self.col_labels.index(c) for c in col_labels]
        except ValueError as exc:
            raise ShapeMismatchError(f"label missing from data table: {exc}") from None
        shots = None if self.shots is None else self.shots[np.ix_(ri, ci)]
        return ProbMatrix(self.values[np.ix_(ri, ci)], shots, tuple(row_labels), tuple(col_labels))


@dataclass(frozen=True)
class DataSet:
    p_hat: ProbMatrix
    i_hat: ProbMatrix | None = None


@dataclass(frozen=True, eq=False)
class Estimate:
    """Result of one estimator run.

    ``g0_hat`` is the uncorrected linear-inversion (or least-squares) estimate
    computed from the same data, kept so that corrected and uncorrected
    figures of merit come from one run.
    """

    g_hat: Superoperator
    g0_hat: np.ndarray
    method: str
    e_hat: Superoperator | None = None
    m_hat: np.ndarray | None = None
    s_hat: np.ndarray | None = None
    gauge_p: float | None = None
    diagnostics: dict = field(default_factory=dict)


def _table(frame: Frame, data, name: str) -> np.ndarray:
    if isinstance(data, ProbMatrix):
        if data.row_labels and data.col_labels:
            data = data.restrict(frame.effect_labels, frame.state_labels)
        values = data.values
    else:
        values = np.asarray(data, dtype=float)
    if values.shape != frame.shape:
        raise ShapeMismatchError(f"{name} has shape {values.shape}, frame expects {frame.shape}")
    return values


def _square_inverses(frame: Frame):
    if not frame.is_square:
        raise FrameError(
            f"linear inversion needs a square frame, got {frame.shape} with d^2 = {frame.d2}; "
            "use ols_qpt / overcomplete_spam_corrected_qpt",
            "m0" if frame.m0.shape[0] != frame.d2 else "s0",
        )
    out = []
    for name, mat in (("m0", frame.m0), ("s0", frame.s0)):
        cond = np.linalg.cond(mat)
        if not np.isfinite(cond) or cond > COND_MAX:
            raise FrameError(f"{name} is ill-conditioned (condition number {cond:.3g})", name)
        out.append(np.linalg.inv(mat))
    return out


def _diagnostics(g, basis: HermitianBasis) -> dict:
    rep = cptp_report(g, basis)
    return {
        "cp_slack": rep.cp_slack,
        "tp_slack": rep.tp_slack,
        "spectrum": linalg.eigenvalues(g).values,
    }


def _basis(frame, basis):
    return basis if basis is not None else build_basis(frame.dim)


def standard_qpt(frame: Frame, p_hat, basis: HermitianBasis | None = None) -> Estimate:
    """Linear-inversion estimate ``M0^-1 P S0^-1``. No constraints enforced."""
    m_inv, s_inv = _square_inverses(frame)
    g0 = m_inv @ _table(frame, p_hat, "p_hat") @ s_inv
    return Estimate(
        g_hat=Superoperator(g0),
        g0_hat=g0,
        method="standard",
        diagnostics=_diagnostics(g0, _basis(frame, basis)),
    )


def estimate_spam_error(frame: Frame, i_hat) -> Superoperator:
    """SPAM error transfer matrix ``M0^-1 I S0^-1``; need not be a physical map."""
    m_inv, s_inv = _square_inverses(frame)
    return Superoperator(m_inv @ _table(frame, i_hat, "i_hat") @ s_inv)


def _gauge_powers(e_hat, p):
    try:
        return linalg.frac_power(e_hat, p - 1.0), linalg.frac_power(e_hat, -p), linalg.frac_power(e_hat, p)
    except MatrixPowerError as exc:
        raise SpamCorrectionError(
            f"cannot split the SPAM error with gauge p={p}: {exc}. The estimated SPAM error "
            "is too far from the identity for gauge regularization; check the calibration "
            "data or the a-priori frame"
        ) from exc


def _check_p(p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"gauge split p must lie in [0, 1], got {p}")


def spam_corrected_qpt(
    frame: Frame, i_hat, p_hat, p: float = 0.5, basis: HermitianBasis | None = None
) -> Estimate:
    """SPAM-corrected linear inversion on a square frame.

    The SPAM error ``E`` is split as ``E^(1-p)`` on the measurements and
    ``E^p`` on the states, giving ``G(p) = E^(p-1) G0 E^(-p)``. The spectrum of
    ``G(p)`` does not depend on ``p``.
    """
    _check_p(p)
    m_inv, s_inv = _square_inverses(frame)
    e = m_inv @ _table(frame, i_hat, "i_hat") @ s_inv
    g0 = m_inv @ _table(frame, p_hat, "p_hat") @ s_inv
    left, right, beta = _gauge_powers(e, p)
    g = left @ g0 @ right
    diag = _diagnostics(g, _basis(frame, basis))
    return Estimate(
        g_hat=Superoperator(g),
        g0_hat=g0,
        method="corrected",
        e_hat=Superoperator(e),
        m_hat=frame.m0 @ linalg.frac_power(e, 1.0 - p),
        s_hat=beta @ frame.s0,
        gauge_p=float(p),
        diagnostics=diag,
    )


@dataclass(frozen=True)
class ConsistencyReport:
    max_abs_z: float
    n_over_3: int
    n_entries: int
    passed: bool
    z: np.ndarray

    def as_dict(self):
        return {
            "max_abs_z": self.max_abs_z,
            "n_over_3": self.n_over_3,
            "n_entries": self.n_entries,
            "passed": self.passed,
        }


def spam_consistency_check(frame: Frame, i_hat: ProbMatrix) -> ConsistencyReport:
    """Test whether calibration data agrees with ``M0 S0`` up to shot noise.

    Each entry gets a binomial z-score with the predicted probability clamped
    to ``[1/2N, 1 - 1/2N]``. The check fails if any ``|z| > 5`` or if more
    than 5% of the entries have ``|z| > 3``.
    """
    if not isinstance(i_hat, ProbMatrix) or i_hat.shots is None:
        raise MissingShotsError("consistency check needs shot counts for the calibration data")
    if i_hat.row_labels and i_hat.col_labels:
        i_hat = i_hat.restrict(frame.effect_labels, frame.state_labels)
    values = _table(frame, i_hat, "i_hat")
    n = i_hat.shots
    pred = frame.m0 @ frame.s0
    resid = values - pred
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.clip(pred, 1 / (2 * n), 1 - 1 / (2 * n))
        sigma = np.sqrt(q * (1 - q) / n)
        z = np.where(np.abs(resid) <= 1e-12, 0.0, resid / sigma)
    z = np.where(np.isnan(z), np.inf, z)
    absz = np.abs(z)
    n_over = int(np.count_nonzero(absz > 3))
    passed = not (np.any(absz > 5) or n_over > 0.05 * z.size)
    return ConsistencyReport(float(absz.max()), n_over, int(z.size), bool(passed), z)


def _check_rank(frame):
    for name, mat in (("m0", frame.m0), ("s0", frame.s0)):
        if np.linalg.matrix_rank(mat) < frame.d2:
            raise FrameError(f"{name} is rank-deficient", name)


def ols_qpt(frame: Frame, p_hat, basis: HermitianBasis | None = None) -> Estimate:
    """Least-squares estimate ``M0^+ P S0^+`` for possibly rectangular frames."""
    _check_rank(frame)
    r = frame.d2
    g0 = linalg.pinv(frame.m0, rank=r) @ _table(frame, p_hat, "p_hat") @ linalg.pinv(frame.s0, rank=r)
    return Estimate(
        g_hat=Superoperator(g0),
        g0_hat=g0,
        method="ols",
        diagnostics=_diagnostics(g0, _basis(frame, basis)),
    )


@dataclass(frozen=True, eq=False)
class _Factorization:
    i_t: np.ndarray
    p_t: np.ndarray
    m_mopt: np.ndarray
    s_mopt: np.ndarray
    m_sopt: np.ndarray
    s_sopt: np.ndarray
    e_hat: np.ndarray


def _factorize(frame: Frame, i_hat, p_hat, truncate_p: bool) -> _Factorization:
    _check_rank(frame)
    r = frame.d2
    i_raw = _table(frame, i_hat, "i_hat")
    p_raw = _table(frame, p_hat, "p_hat")
    if np.linalg.matrix_rank(i_raw) < r:
        raise DegenerateDataError(f"calibration table has rank < d^2 = {r}")
    i_t = linalg.truncate_to_rank(i_raw, r)
    p_t = linalg.truncate_to_rank(p_raw, r) if truncate_p else p_raw

    s_mopt = linalg.pinv(frame.m0, rank=r) @ i_t
    m_mopt = i_t @ linalg.pinv(s_mopt, rank=r)
    m_sopt = i_t @ linalg.pinv(frame.s0, rank=r)
    s_sopt = linalg.pinv(m_sopt, rank=r) @ i_t

    scale = max(1.0, np.linalg.norm(i_t))
    if np.linalg.norm(m_mopt @ s_mopt - i_t) > FACTORIZATION_TOL * scale:
        raise DegenerateDataError("m-opt factorization does not reproduce the truncated calibration data")

    e_hat = linalg.pinv(m_mopt, rank=r) @ i_t @ linalg.pinv(s_sopt, rank=r)
    return _Factorization(i_t, p_t, m_mopt, s_mopt, m_sopt, s_sopt, e_hat)


def overcomplete_spam_corrected_qpt(
    frame: Frame,
    i_hat,
    p_hat,
    truncate_p: bool = True,
    gauge_p: float = 0.5,
    basis: HermitianBasis | None = None,
) -> Estimate:
    """SPAM-corrected least-squares estimate for overcomplete frames.

    Steps: truncate the calibration table (and optionally the gate table) to
    rank d^2; factor it twice, once staying close to ``m0`` and once close to
    ``s0``; extract the residual SPAM error ``E`` between the two
    factorizations; split it with ``gauge_p`` as in the square case; and
    invert the gate data with pseudoinverses of the corrected frames.
    """
    _check_p(gauge_p)
    r = frame.d2
    f = _factorize(frame, i_hat, p_hat, truncate_p)
    try:
        alpha = linalg.frac_power(f.e_hat, 1.0 - gauge_p)
        beta = linalg.frac_power(f.e_hat, gauge_p)
    except MatrixPowerError as exc:
        raise SpamCorrectionError(
            f"cannot split the SPAM error with gauge p={gauge_p}: {exc}. The estimated SPAM "
            "error is too far from the identity for gauge regularization"
        ) from exc
    m_hat = f.m_mopt @ alpha
    s_hat = beta @ f.s_sopt
    g = linalg.pinv(m_hat, rank=r) @ f.p_t @ linalg.pinv(s_hat, rank=r)
    g0 = linalg.pinv(frame.m0, rank=r) @ _table(frame, p_hat, "p_hat") @ linalg.pinv(frame.s0, rank=r)

    diag = _diagnostics(g, _basis(frame, basis))
    diag["m_mopt_discrepancy"] = float(np.linalg.norm(f.m_mopt - frame.m0))
    diag["s_sopt_discrepancy"] = float(np.linalg.norm(f.s_sopt - frame.s0))
    diag["factorization_residual"] = float(np.linalg.norm(m_hat @ s_hat - f.i_t))
    return Estimate(
        g_hat=Superoperator(g),
        g0_hat=g0,
        method="overcomplete",
        e_hat=Superoperator(f.e_hat),
        m_hat=m_hat,
        s_hat=s_hat,
        gauge_p=float(gauge_p),
        diagnostics=diag,
    )


def overcomplete_approx_diagnostic(frame: Frame, i_hat, p_hat, truncate_p: bool = True) -> Superoperator:
    """Closed-form approximation of the overcomplete estimate.

    Uses ``E^-1/2 M0^+ Pc P Pr S0^+ E^-1/2`` where ``Pc`` and ``Pr`` project
    onto the column and row spaces of the truncated calibration table. Only
    meant for comparison against :func:`overcomplete_spam_corrected_qpt`.
    """
    r = frame.d2
    f = _factorize(frame, i_hat, p_hat, truncate_p)
    i_pinv = linalg.pinv(f.i_t, rank=r)
    proj_c = f.i_t @ i_pinv
    proj_r = i_pinv @ f.i_t
    try:
        half_inv = linalg.frac_power(f.e_hat, -0.5)
    except MatrixPowerError as exc:
        raise SpamCorrectionError(f"cannot take E^-1/2: {exc}") from exc
    core = linalg.pinv(frame.m0, rank=r) @ proj_c @ f.p_t @ proj_r @ linalg.pinv(frame.s0, rank=r)
    return Superoperator(half_inv @ core @ half_inv)
