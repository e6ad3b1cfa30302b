r"""Dirichlet sine eigenbasis of :math:`-\Delta` on a box.

The box :math:`\prod_j (0, L_j)` has the tensor-sine eigenfunctions

.. math::

    e_k(x) = \prod_j \sqrt{2/L_j}\,\sin(k_j \pi x_j / L_j),
    \qquad \lambda_k = \pi^2 \sum_j (k_j / L_j)^2 ,

which are orthonormal in :math:`L^2`.  Nonlinear terms are evaluated on the
interior DST-I grid :math:`x_i = i L/(M+1)`, :math:`i = 1..M`.  The composite
trapezoid rule on that grid (boundary values vanish) integrates products of two
modes with wavenumber at most ``M`` exactly, so the analysis transform
``to_coeffs`` is the exact inverse of ``to_grid`` whenever ``M >= n``.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ArgumentError, ConfigurationError

__all__ = [
    "DomainSpec",
    "SpectralBasis",
    "Field",
    "build_basis",
    "project",
    "complement",
    "to_grid",
    "to_coeffs",
    "fractional_norm",
    "lq_norm",
    "grid_lq_norm",
    "field_to_json",
    "field_from_json",
]


@dataclass(frozen=True)
class DomainSpec:
    """Box ``(0, L_1) x ... x (0, L_d)`` with a quadrature resolution.

    ``quad_points_per_axis`` is the number of interior grid points per axis.
    """

    dimension: int
    lengths: tuple
    quad_points_per_axis: int = 32

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        self.validate()

    def validate(self):
        if self.dimension not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if len(self.lengths) != self.dimension:
            raise ConfigurationError(
                f"{len(self.lengths)} lengths given for a {self.dimension}D domain"
            )
        if any(not np.isfinite(L) or L <= 0 for L in self.lengths):
            raise ConfigurationError(f"box lengths must be positive, got {self.lengths}")
        if int(self.quad_points_per_axis) < 2:
            raise ConfigurationError("quad_points_per_axis must be at least 2")

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def grid_axes(self):
        M = self.quad_points_per_axis
        return [np.arange(1, M + 1) * L / (M + 1) for L in self.lengths]

    @property
    def cell_weight(self) -> float:
        M = self.quad_points_per_axis
        return float(np.prod([L / (M + 1) for L in self.lengths]))


class SpectralBasis:
    """First ``n_per_axis**d`` Dirichlet eigenpairs, sorted by eigenvalue.

    Ties are broken lexicographically on the multi-index so that the
    projection ``P_n`` is deterministic.
    """

    def __init__(self, domain: DomainSpec, n_per_axis: int):
        if int(n_per_axis) < 1:
            raise ConfigurationError("n_per_axis must be at least 1")
        domain.validate()
        self.domain = domain
        self.n_per_axis = int(n_per_axis)
        d = domain.dimension
        L = np.asarray(domain.lengths)
        idx = list(itertools.product(range(1, self.n_per_axis + 1), repeat=d))
        lam = [np.pi**2 * float(np.sum((np.asarray(k) / L) ** 2)) for k in idx]
        # Python's sort is stable on (eigenvalue, multi-index) tuples
        order = sorted(range(len(idx)), key=lambda i: (lam[i], idx[i]))
        modes = np.array([idx[i] for i in order], dtype=int).reshape(len(idx), d)
        eig = np.array([lam[i] for i in order])
        modes.setflags(write=False)
        eig.setflags(write=False)
        self.modes = modes
        self.eigenvalues = eig

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def lambda_1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def grid_shape(self):
        return (self.domain.quad_points_per_axis,) * self.domain.dimension

    @cached_property
    def basis_id(self) -> str:
        payload = json.dumps(
            {
                "dimension": self.domain.dimension,
                "lengths": [repr(x) for x in self.domain.lengths],
                "quad": self.domain.quad_points_per_axis,
                "n_per_axis": self.n_per_axis,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def __repr__(self):
        return (
            f"SpectralBasis(dim={self.dimension}, lengths={self.domain.lengths}, "
            f"n_per_axis={self.n_per_axis}, quad={self.domain.quad_points_per_axis})"
        )

    def aliasing_ok(self) -> bool:
        return self.domain.quad_points_per_axis >= 2 * self.n_per_axis

    # -- axis tables -------------------------------------------------------
    def _axis_tables(self):
        M = self.domain.quad_points_per_axis
        n = self.n_per_axis
        k = np.arange(1, n + 1)
        sines, cosines = [], []
        for L, x in zip(self.domain.lengths, self.domain.grid_axes()):
            arg = np.outer(x, k) * np.pi / L
            c = np.sqrt(2.0 / L)
            sines.append(c * np.sin(arg))
            cosines.append(c * np.cos(arg) * (k * np.pi / L))
        return sines, cosines

    def _tensor_matrix(self, tables):
        # column j is the tensor product over axes of the 1D columns of mode j
        d = self.dimension
        cols = None
        for axis in range(d):
            t = tables[axis][:, self.modes[:, axis] - 1]  # (M, N)
            if cols is None:
                cols = t
            else:
                cols = (cols[:, None, :] * t[None, :, :]).reshape(-1, self.count)
        return cols

    @cached_property
    def synthesis(self) -> np.ndarray:
        """Matrix ``E`` with ``E[g, i] = e_i(x_g)`` over the flattened grid."""
        sines, _ = self._axis_tables()
        E = self._tensor_matrix(sines)
        E.setflags(write=False)
        return E

    @cached_property
    def analysis(self) -> np.ndarray:
        """Quadrature projection ``w * E^T``."""
        A = self.domain.cell_weight * self.synthesis.T
        A = np.ascontiguousarray(A)
        A.setflags(write=False)
        return A

    @cached_property
    def gradient_synthesis(self):
        """One matrix per axis mapping coefficients to grid values of ``d/dx_j``."""
        sines, cosines = self._axis_tables()
        mats = []
        for j in range(self.dimension):
            tables = [cosines[a] if a == j else sines[a] for a in range(self.dimension)]
            D = self._tensor_matrix(tables)
            D.setflags(write=False)
            mats.append(D)
        return mats

    def mode_index(self, multi_index) -> int:
        target = tuple(int(k) for k in multi_index)
        for i, m in enumerate(self.modes):
            if tuple(m) == target:
                return i
        raise ArgumentError(f"mode {target} not in basis")

    def zero(self) -> "Field":
        return Field(self, np.zeros(self.count))

    def unit(self, i: int) -> "Field":
        c = np.zeros(self.count)
        c[i] = 1.0
        return Field(self, c)


class Field:
    """Function on the box stored by its spectral coefficients."""

    __slots__ = ("basis", "coefficients")

    def __init__(self, basis: SpectralBasis, coefficients):
        c = np.array(coefficients, dtype=float).reshape(-1)
        if c.shape[0] != basis.count:
            raise ArgumentError(
                f"coefficient vector has length {c.shape[0]}, basis has {basis.count} modes"
            )
        if not np.all(np.isfinite(c)):
            raise ArgumentError("field coefficients must be finite")
        c.setflags(write=False)
        self.basis = basis
        self.coefficients = c

    def __repr__(self):
        return f"Field(N={self.basis.count}, l2={fractional_norm(self, 0.0):.6g})"

    def __add__(self, other):
        _check_same_basis(self, other)
        return Field(self.basis, self.coefficients + other.coefficients)

    def __sub__(self, other):
        _check_same_basis(self, other)
        return Field(self.basis, self.coefficients - other.coefficients)

    def __mul__(self, scalar):
        return Field(self.basis, self.coefficients * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.basis, -self.coefficients)

    def dot(self, other) -> float:
        """L^2 inner product."""
        _check_same_basis(self, other)
        return float(self.coefficients @ other.coefficients)


def _check_same_basis(a: Field, b: Field):
    if a.basis is not b.basis and a.basis.basis_id != b.basis.basis_id:
        raise ArgumentError("fields live on different bases")


def build_basis(domain: DomainSpec, n_per_axis: int) -> SpectralBasis:
    return SpectralBasis(domain, n_per_axis)


def project(field: Field, n: int) -> Field:
    """``P_n``: keep the first ``n`` coefficients."""
    if not 0 <= int(n) <= field.basis.count:
        raise ArgumentError(f"projection index {n} outside [0, {field.basis.count}]")
    c = np.zeros(field.basis.count)
    c[: int(n)] = field.coefficients[: int(n)]
    return Field(field.basis, c)


def complement(field: Field, n: int) -> Field:
    """``Q_n = I - P_n``."""
    if not 0 <= int(n) <= field.basis.count:
        raise ArgumentError(f"projection index {n} outside [0, {field.basis.count}]")
    c = np.array(field.coefficients)
    c[: int(n)] = 0.0
    return Field(field.basis, c)


def to_grid(field: Field) -> np.ndarray:
    """Values on the interior quadrature grid, shaped ``(M,)*d``."""
    return (field.basis.synthesis @ field.coefficients).reshape(field.basis.grid_shape)


def to_coeffs(values, basis: SpectralBasis) -> Field:
    values = np.asarray(values, dtype=float)
    G = basis.synthesis.shape[0]
    if values.size != G or (values.ndim > 1 and values.shape != basis.grid_shape):
        raise ArgumentError(
            f"grid of shape {values.shape} does not match basis grid {basis.grid_shape}"
        )
    return Field(basis, basis.analysis @ values.reshape(-1))


def fractional_norm(field: Field, s: float) -> float:
    r""":math:`(\sum_i \lambda_i^s a_i^2)^{1/2}`."""
    lam = field.basis.eigenvalues
    return float(np.sqrt(np.sum(lam ** float(s) * field.coefficients**2)))


def grid_lq_norm(values, basis: SpectralBasis, q: float) -> float:
    """Trapezoid L^q norm of grid values that vanish on the boundary."""
    if q < 1:
        raise ArgumentError("q must be at least 1")
    v = np.abs(np.asarray(values, dtype=float).reshape(-1))
    w = basis.domain.cell_weight
    vmax = v.max(initial=0.0)
    if vmax == 0.0:
        return 0.0
    # scaled to avoid overflow of |v|^q for large q
    return float(vmax * (w * np.sum((v / vmax) ** q)) ** (1.0 / q))


def lq_norm(field: Field, q: float) -> float:
    return grid_lq_norm(field.basis.synthesis @ field.coefficients, field.basis, q)


def field_to_json(field: Field) -> dict:
    b = field.basis
    return {
        "basis_id": b.basis_id,
        "dimension": b.dimension,
        "lengths": [repr(x) for x in b.domain.lengths],
        "quad_points_per_axis": b.domain.quad_points_per_axis,
        "n_per_axis": b.n_per_axis,
        "modes": b.modes.tolist(),
        "coefficients": [repr(float(a)) for a in field.coefficients],
    }


def field_from_json(obj: dict, basis: SpectralBasis | None = None) -> Field:
    if basis is None:
        domain = DomainSpec(
            int(obj["dimension"]),
            tuple(float(x) for x in obj["lengths"]),
            int(obj["quad_points_per_axis"]),
        )
        basis = SpectralBasis(domain, int(obj["n_per_axis"]))
    if obj.get("basis_id") not in (None, basis.basis_id):
        raise ArgumentError("snapshot basis_id does not match the supplied basis")
    if [list(m) for m in obj["modes"]] != basis.modes.tolist():
        raise ArgumentError("snapshot mode ordering does not match the basis")
    return Field(basis, [float(a) for a in obj["coefficients"]])
