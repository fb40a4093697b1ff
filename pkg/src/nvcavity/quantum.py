"""Dense complex linear algebra on a labelled composite Hilbert space.

All dynamical quantities in this package live on a tensor product of a
finite atomic manifold and one or two truncated bosonic modes.  The basis
ordering is fixed once and for all: factors appear in the order given at
:class:`HilbertSpace` construction (canonically atom, cavity, waveguide)
and composite indices are lexicographic with the *first* factor varying
slowest ("atom-major").  Keeping a single canonical layout avoids
permutation bugs between the Hamiltonian builder, the solvers and the
recorded observables.

Matrices are plain dense ``complex128`` arrays wrapped in thin dataclasses
that remember their space.  At the dimensions used here (a few tens) dense
algebra is both simpler and faster than sparse formats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HilbertSpace",
    "Operator",
    "StateVector",
    "DensityMatrix",
    "annihilator",
    "number_op",
    "transition",
    "identity",
    "kron_embed",
    "expectation",
    "basis_state",
    "projector",
    "density_matrix_checks",
]


class SpaceMismatchError(ValueError):
    """Raised when two objects defined on different spaces are combined."""


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of labelled factors.

    Args:
        factors: tuple of ``(label, dimension)`` pairs, e.g.
            ``(("atom", 11), ("cavity", 2), ("waveguide", 2))``.
    """

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = [lab for lab, _ in self.factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"factor labels must be unique, got {labels}")
        for lab, d in self.factors:
            if d < 1:
                raise ValueError(f"factor {lab!r} has non-positive dimension {d}")

    @property
    def total_dim(self) -> int:
        out = 1
        for _, d in self.factors:
            out *= d
        return out

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    def dim_of(self, label: str) -> int:
        for lab, d in self.factors:
            if lab == label:
                return d
        raise KeyError(f"no factor labelled {label!r} in {self.labels}")

    def index(self, **occupancies: int) -> int:
        """Composite basis index from per-factor indices (first factor slowest)."""
        idx = 0
        for lab, d in self.factors:
            k = occupancies.pop(lab)
            if not 0 <= k < d:
                raise ValueError(f"index {k} out of range for factor {lab!r} (dim {d})")
            idx = idx * d + k
        if occupancies:
            raise KeyError(f"unknown factor labels {sorted(occupancies)}")
        return idx


def _require_same_space(a, b):
    if a.space != b.space:
        raise SpaceMismatchError(f"space mismatch: {a.space.labels} vs {b.space.labels}")


@dataclass(frozen=True)
class Operator:
    """Square dense complex matrix acting on ``space``."""

    space: HilbertSpace
    mat: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        if m.shape != (self.space.total_dim, self.space.total_dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match space dimension {self.space.total_dim}"
            )
        object.__setattr__(self, "mat", m)

    def dag(self) -> "Operator":
        return Operator(self.space, self.mat.conj().T)

    def __matmul__(self, other: "Operator") -> "Operator":
        _require_same_space(self, other)
        return Operator(self.space, self.mat @ other.mat)

    def __add__(self, other: "Operator") -> "Operator":
        _require_same_space(self, other)
        return Operator(self.space, self.mat + other.mat)

    def __sub__(self, other: "Operator") -> "Operator":
        _require_same_space(self, other)
        return Operator(self.space, self.mat - other.mat)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.space, self.mat * scalar)

    __rmul__ = __mul__

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.mat - self.mat.conj().T)) <= tol * max(1.0, np.max(np.abs(self.mat))))


@dataclass(frozen=True)
class StateVector:
    """Pure state amplitudes on ``space``; the trajectory engine renormalizes after jumps."""

    space: HilbertSpace
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if v.shape != (self.space.total_dim,):
            raise ValueError(
                f"amplitude length {v.shape} does not match space dimension {self.space.total_dim}"
            )
        object.__setattr__(self, "amplitudes", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.space, self.amplitudes / self.norm())

    def to_density_matrix(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(self.space, np.outer(v, v.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Dense density matrix on ``space``."""

    space: HilbertSpace
    mat: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        if m.shape != (self.space.total_dim, self.space.total_dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match space dimension {self.space.total_dim}"
            )
        object.__setattr__(self, "mat", m)

    def trace(self) -> complex:
        return complex(np.trace(self.mat))


@dataclass(frozen=True)
class DensityMatrixHealth:
    """Hermiticity / trace / positivity diagnostics of one snapshot."""

    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float

    def ok(
        self,
        herm_tol: float = 1e-10,
        trace_tol: float = 1e-8,
        eig_tol: float = 1e-8,
    ) -> bool:
        return (
            self.hermiticity_defect <= herm_tol
            and self.trace_defect <= trace_tol
            and self.min_eigenvalue >= -eig_tol
        )


def density_matrix_checks(rho: DensityMatrix) -> DensityMatrixHealth:
    """Measure how far ``rho`` is from a valid state (max |rho-rho*|, |tr-1|, min eig)."""
    m = rho.mat
    herm = float(np.max(np.abs(m - m.conj().T)))
    tr = abs(np.trace(m) - 1.0)
    mineig = float(np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T))))
    return DensityMatrixHealth(herm, float(tr), mineig)


def annihilator(dim: int) -> np.ndarray:
    """Bosonic lowering operator on a Fock ladder truncated at ``dim - 1`` quanta."""
    return np.diag(np.sqrt(np.arange(1.0, dim)), 1).astype(complex)


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def transition(dim: int, a: int, b: int) -> np.ndarray:
    """Projection-style operator |a><b| on a ``dim``-level factor."""
    m = np.zeros((dim, dim), dtype=complex)
    m[a, b] = 1.0
    return m


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.total_dim, dtype=complex))


def kron_embed(factor_op: np.ndarray, factor_label: str, space: HilbertSpace) -> Operator:
    """Embed a single-factor operator into the composite space.

    The operator is padded with identities on every other factor, preserving
    the canonical ordering.  Embedding the identity yields the identity, and
    embeddings on distinct factors commute.

    Raises:
        KeyError: unknown ``factor_label``.
        ValueError: operator dimension does not match the labelled factor.
    """
    d = space.dim_of(factor_label)
    op = np.asarray(factor_op, dtype=complex)
    if op.shape != (d, d):
        raise ValueError(
            f"operator shape {op.shape} does not match factor {factor_label!r} dimension {d}"
        )
    out = np.array([[1.0 + 0.0j]])
    for lab, dim in space.factors:
        out = np.kron(out, op if lab == factor_label else np.eye(dim, dtype=complex))
    return Operator(space, out)


def basis_state(space: HilbertSpace, **occupancies: int) -> StateVector:
    v = np.zeros(space.total_dim, dtype=complex)
    v[space.index(**occupancies)] = 1.0
    return StateVector(space, v)


def projector(space: HilbertSpace, **occupancies: int) -> Operator:
    """Projector onto one composite basis state."""
    i = space.index(**occupancies)
    m = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    m[i, i] = 1.0
    return Operator(space, m)


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    """Tr(rho op); real to within round-off when ``op`` is Hermitian."""
    _require_same_space(rho, op)
    return complex(np.einsum("ij,ji->", rho.mat, op.mat))
