"""Hilbert-Schmidt representation of states, effects and channels.

Operators on a d-dimensional Hilbert space are expanded in an orthonormal
Hermitian basis whose first element is the normalized identity. In that basis
density matrices and effects become real vectors of length d**2 and
Hermiticity-preserving maps become real d**2 x d**2 transfer matrices. A map
is trace preserving exactly when the first row of its transfer matrix is
``(1, 0, ..., 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionError, NonHermitianError, NonUnitaryError

HERMITIAN_TOL = 1e-10
IMAG_TOL = 1e-10

Kind = Literal["state", "effect"]


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HermitianBasis:
    """Orthonormal Hermitian operator basis with ``elements[0] = 1/sqrt(d)``."""

    dim: int
    elements: np.ndarray  # shape (d**2, d, d), complex

    def __post_init__(self):
        els = _frozen(self.elements, dtype=complex)
        if els.shape != (self.dim**2, self.dim, self.dim):
            raise DimensionError(
                f"basis for d={self.dim} needs shape {(self.dim**2, self.dim, self.dim)}, got {els.shape}"
            )
        object.__setattr__(self, "elements", els)

    @property
    def size(self):
        return self.dim**2

    def gram(self):
        """Matrix of Hilbert-Schmidt inner products ``Tr[B_i^dag B_j]``."""
        flat = self.elements.reshape(self.size, -1)
        return flat.conj() @ flat.T


def build_basis(d: int) -> HermitianBasis:
    """Normalized generalized Gell-Mann basis for dimension ``d``.

    The identity comes first, followed by the symmetric and antisymmetric
    off-diagonal elements and finally the traceless diagonal ones. For
    ``d = 2`` this is ``(1, X, Y, Z) / sqrt(2)``.
    """
    if int(d) != d or d < 2:
        raise DimensionError(f"basis dimension must be an integer >= 2, got {d!r}")
    d = int(d)
    els = [np.eye(d, dtype=complex) / np.sqrt(d)]
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    for j, k in pairs:
        m = np.zeros((d, d), dtype=complex)
        m[j, k] = m[k, j] = 1 / np.sqrt(2)
        els.append(m)
    for j, k in pairs:
        m = np.zeros((d, d), dtype=complex)
        m[j, k] = -1j / np.sqrt(2)
        m[k, j] = 1j / np.sqrt(2)
        els.append(m)
    for l in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        m[np.arange(l), np.arange(l)] = 1.0
        m[l, l] = -l
        els.append(m / np.sqrt(l * (l + 1)))
    return HermitianBasis(d, np.array(els))


@dataclass(frozen=True, eq=False)
class HSVector:
    """Real coordinates of a Hermitian operator, tagged as a state or an effect."""

    coords: np.ndarray
    kind: Kind = "state"

    def __post_init__(self):
        if self.kind not in ("state", "effect"):
            raise ValueError(f"kind must be 'state' or 'effect', got {self.kind!r}")
        object.__setattr__(self, "coords", _frozen(self.coords, dtype=float))

    @property
    def dim(self):
        return _dim_from_size(self.coords.shape[0])


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Transfer matrix of a linear map in a ``B0``-first Hermitian basis."""

    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat)
        if np.iscomplexobj(m):
            if np.max(np.abs(m.imag), initial=0.0) > IMAG_TOL:
                raise ValueError("superoperator has a non-negligible imaginary part")
            m = m.real
        m = _frozen(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"superoperator must be square, got shape {m.shape}")
        _dim_from_size(m.shape[0])
        object.__setattr__(self, "mat", m)

    @property
    def dim(self):
        return _dim_from_size(self.mat.shape[0])

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d * d))


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    mat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mat", _frozen(self.mat, dtype=complex))

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.mat)


@dataclass(frozen=True)
class CPTPReport:
    """Physicality diagnostics for a transfer matrix.

    ``cp_slack`` is the smallest Choi eigenvalue (negative means not CP);
    ``tp_slack`` is the largest deviation of the first row from ``e0``.
    """

    cp_slack: float
    tp_slack: float
    tol: float

    @property
    def is_cp(self):
        return self.cp_slack >= -self.tol

    @property
    def is_tp(self):
        return self.tp_slack <= self.tol

    def as_dict(self):
        return {
            "cp_slack": self.cp_slack,
            "tp_slack": self.tp_slack,
            "tol": self.tol,
            "is_cp": self.is_cp,
            "is_tp": self.is_tp,
        }


def _dim_from_size(n):
    d = int(round(np.sqrt(n)))
    if d * d != n or d < 2:
        raise DimensionError(f"length {n} is not d**2 for any d >= 2")
    return d


def _as_matrix(op):
    return op.mat if isinstance(op, Superoperator) else np.asarray(op, dtype=float)


def _check_basis(op, basis):
    op = np.asarray(op)
    if op.shape != (basis.dim, basis.dim):
        raise DimensionError(f"operator shape {op.shape} does not match basis dimension {basis.dim}")
    return op


def vectorize(op, basis: HermitianBasis, kind: Kind = "state") -> HSVector:
    """Expand a Hermitian operator as ``coords[k] = Tr[B_k^dag op]``."""
    op = _check_basis(op, basis)
    if np.max(np.abs(op - op.conj().T)) > HERMITIAN_TOL:
        raise NonHermitianError("operator is not Hermitian")
    coords = np.einsum("kij,ij->k", basis.elements.conj(), op)
    return HSVector(coords.real, kind)


def devectorize(v, basis: HermitianBasis) -> np.ndarray:
    coords = v.coords if isinstance(v, HSVector) else np.asarray(v)
    if coords.shape != (basis.size,):
        raise DimensionError(f"vector of length {coords.shape} does not match basis size {basis.size}")
    return np.einsum("k,kij->ij", coords, basis.elements)


def _complex_coords(op, basis):
    # linear extension of vectorize to arbitrary (non-Hermitian) operators
    return np.einsum("kij,ij->k", basis.elements.conj(), op)


def born_probability(effect: HSVector, state: HSVector) -> float:
    """``Tr[E rho]`` as a real inner product of coordinates. Not clamped."""
    if effect.coords.shape != state.coords.shape:
        raise DimensionError(
            f"effect length {effect.coords.shape[0]} != state length {state.coords.shape[0]}"
        )
    if effect.kind != "effect" or state.kind != "state":
        raise ValueError("born_probability expects (effect, state) vectors")
    return float(effect.coords @ state.coords)


def unitary_to_superop(U, basis: HermitianBasis) -> Superoperator:
    """Transfer matrix of ``rho -> U rho U^dag``."""
    U = _check_basis(U, basis)
    if not np.allclose(U.conj().T @ U, np.eye(basis.dim), atol=1e-10, rtol=0):
        raise NonUnitaryError("matrix is not unitary to 1e-10")
    conj = U @ basis.elements @ U.conj().T
    mat = np.einsum("iab,jab->ij", basis.elements.conj(), conj)
    return Superoperator(mat)


def depolarizing_superop(gamma: float, basis: HermitianBasis) -> Superoperator:
    """``rho -> gamma rho + (1 - gamma) 1/d``; transfer matrix ``diag(1, gamma, ...)``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"depolarizing retention must lie in [0, 1], got {gamma}")
    diag = np.full(basis.size, float(gamma))
    diag[0] = 1.0
    return Superoperator(np.diag(diag))


def compose(A, B) -> Superoperator:
    """Map that applies ``B`` first and then ``A``."""
    a, b = _as_matrix(A), _as_matrix(B)
    if a.shape != b.shape:
        raise DimensionError(f"cannot compose shapes {a.shape} and {b.shape}")
    return Superoperator(a @ b)


def apply(A, v: HSVector) -> HSVector:
    a = _as_matrix(A)
    if a.shape[1] != v.coords.shape[0]:
        raise DimensionError(f"cannot apply {a.shape} superoperator to length-{v.coords.shape[0]} vector")
    return HSVector(a @ v.coords, v.kind)


def choi_from_superop(G, basis: HermitianBasis) -> ChoiMatrix:
    """Choi matrix ``(G x 1)[|bell><bell|]`` with a normalized Bell state."""
    g = _as_matrix(G)
    d = basis.dim
    if g.shape != (basis.size, basis.size):
        raise DimensionError(f"superoperator shape {g.shape} does not match basis size {basis.size}")
    choi = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            image = np.einsum("k,kab->ab", g @ _complex_coords(unit, basis), basis.elements)
            choi += np.kron(image, unit)
    return ChoiMatrix(choi / d)


def cptp_report(G, basis: HermitianBasis, tol: float = 1e-10) -> CPTPReport:
    g = _as_matrix(G)
    choi = choi_from_superop(g, basis)
    e0 = np.zeros(basis.size)
    e0[0] = 1.0
    return CPTPReport(
        cp_slack=float(choi.eigenvalues().min()),
        tp_slack=float(np.max(np.abs(g[0] - e0))),
        tol=tol,
    )


def gate_fidelity(G, U, basis: HermitianBasis, convention: str = "average") -> float:
    """Fidelity of the channel ``G`` with the unitary ``U``.

    ``convention="entanglement"`` gives ``Tr[T_U^T G] / d**2`` and
    ``convention="average"`` gives ``(d F_e + 1) / (d + 1)``.
    """
    g = _as_matrix(G)
    target = unitary_to_superop(U, basis).mat
    if g.shape != target.shape:
        raise DimensionError(f"superoperator shape {g.shape} does not match target {target.shape}")
    d = basis.dim
    f_e = float(np.sum(target * g)) / d**2
    if convention == "entanglement":
        return f_e
    if convention == "average":
        return (d * f_e + 1) / (d + 1)
    raise ValueError(f"unknown fidelity convention {convention!r}")


def fidelities(G, U, basis: HermitianBasis) -> dict:
    f_e = gate_fidelity(G, U, basis, "entanglement")
    d = basis.dim
    return {"entanglement": f_e, "average": (d * f_e + 1) / (d + 1)}


def rotated_state(psi, psi_perp, phi: float) -> np.ndarray:
    """Density matrix of ``cos(phi)|psi> + sin(phi)|psi_perp>``."""
    psi = np.asarray(psi, dtype=complex).ravel()
    psi_perp = np.asarray(psi_perp, dtype=complex).ravel()
    if psi.shape != psi_perp.shape:
        raise DimensionError("kets have different dimensions")
    for name, k in (("psi", psi), ("psi_perp", psi_perp)):
        if abs(np.linalg.norm(k) - 1) > 1e-10:
            raise ValueError(f"{name} is not normalized")
    if abs(np.vdot(psi, psi_perp)) > 1e-10:
        raise ValueError("psi and psi_perp are not orthogonal")
    ket = np.cos(phi) * psi + np.sin(phi) * psi_perp
    return np.outer(ket, ket.conj())


def unitary_from_generator(H, angle: float) -> np.ndarray:
    """``exp(-i angle H / 2)`` for Hermitian ``H``."""
    w, v = np.linalg.eigh(np.asarray(H, dtype=complex))
    return (v * np.exp(-0.5j * angle * w)) @ v.conj().T


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# exp(-i pi X / 4)
X_PI_2 = unitary_from_generator(PAULI_X, np.pi / 2)
