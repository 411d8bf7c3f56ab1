"""Linearized map, truncated-SVD pseudoinverse and the inverse Born series.

The linearized map takes a stacked coefficient vector (all degrees, node by
node) to the source-major data vector.  Rows for all (source, detector)
pairs across every wavenumber are stacked into one system, so a single
coefficient is reconstructed from all frequencies jointly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import DiskGrid, SensorLayout
from .errors import DegenerateRegularizerError
from .forward import (ForwardOperators, Nonlinearity, ScatteringData,
                      k_n_apply)
from .helmholtz import B_SIGN


@dataclass(frozen=True)
class LinearizedMap:
    """First-order forward operator as a dense matrix.

    Row (s, d) in source-major order; columns are grouped by degree in
    ascending order, one block of n_nodes per degree.  Column (l, j) holds
    the detector traces of the integral operator applied to the j-th nodal
    indicator times u0^l for each source.
    """

    matrix: np.ndarray
    layout: SensorLayout
    grid: DiskGrid
    degrees: tuple[int, ...]
    row_wavenumbers: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[1] // len(self.degrees)

    def apply(self, nl: Nonlinearity) -> np.ndarray:
        return self.matrix @ nl.stack()


def assemble_k1(fw: ForwardOperators) -> LinearizedMap:
    """Assemble the linearized map from the prepared forward operators."""
    layout, grid = fw.layout, fw.grid
    n_det = layout.n_detectors
    n_nodes = grid.n_nodes
    degrees = tuple(sorted(fw.degrees))
    # detector rows of the weighted Green's matrix, one block per wavenumber
    traced = {k: fw.trace @ g.g_matrix for k, g in fw.greens.items()}
    matrix = np.empty((layout.n_sources * n_det, len(degrees) * n_nodes))
    for s, src in enumerate(layout.sources):
        tg = B_SIGN * src.k ** 2 * traced[src.k]
        u0 = fw.backgrounds[s].values
        for b, l in enumerate(degrees):
            matrix[s * n_det:(s + 1) * n_det, b * n_nodes:(b + 1) * n_nodes] = tg * (u0 ** l)
    row_k = np.repeat([src.k for src in layout.sources], n_det)
    return LinearizedMap(matrix=matrix, layout=layout, grid=grid,
                         degrees=degrees, row_wavenumbers=row_k)


class Regularizer:
    """Truncated-SVD pseudoinverse keeping singular values >= rcond * largest.

    With row_normalize=True every row of the stacked system is scaled to
    unit 2-norm before the SVD (and the same scaling is applied to data
    vectors).  Off by default: equalizing the rows also promotes the weak
    rows' discretization error into the kept subspace.
    """

    def __init__(self, k1: LinearizedMap, rcond: float, row_normalize: bool = False):
        if not (0.0 < rcond < 1.0):
            raise ValueError(f"rcond must be in (0, 1), got {rcond}")
        row_norms = np.linalg.norm(k1.matrix, axis=1)
        if row_normalize:
            weights = np.where(row_norms > 0, 1.0 / np.maximum(row_norms, 1e-300), 1.0)
        else:
            weights = np.ones(k1.n_rows)
        u, s, vt = np.linalg.svd(k1.matrix * weights[:, None], full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            raise DegenerateRegularizerError("linearized map is identically zero")
        rank = int(np.sum(s >= rcond * s[0]))
        if rank == 0:
            raise DegenerateRegularizerError(
                f"rcond={rcond} removed every singular value"
            )
        self.k1 = k1
        self.rcond = rcond
        self.row_normalize = row_normalize
        self.rank = rank
        self.singular_values = s
        self._weights = weights
        self._u = u[:, :rank]
        self._s = s[:rank]
        self._vt = vt[:rank]
        self._pinv: np.ndarray | None = None

    def apply(self, data_vec: np.ndarray) -> np.ndarray:
        """Pseudoinverse applied to a source-major data vector."""
        return self._vt.T @ ((self._u.T @ (self._weights * data_vec)) / self._s)

    @property
    def matrix(self) -> np.ndarray:
        if self._pinv is None:
            self._pinv = ((self._vt.T / self._s) @ self._u.T) * self._weights[None, :]
        return self._pinv

    def kept_right_vectors(self) -> np.ndarray:
        return self._vt

    def apply_as_nonlinearity(self, data_vec: np.ndarray) -> Nonlinearity:
        return Nonlinearity.from_stack(self.apply(data_vec), self.k1.degrees, self.k1.grid)


def pseudoinverse(k1: LinearizedMap, rcond: float,
                  row_normalize: bool = False) -> Regularizer:
    return Regularizer(k1, rcond, row_normalize=row_normalize)


def operator_norm(reg: Regularizer) -> float:
    """Induced sup-to-sup norm: max absolute row sum of the pseudoinverse."""
    return float(np.max(np.sum(np.abs(reg.matrix), axis=1)))


def projection(reg: Regularizer, k1: LinearizedMap, nl_true: Nonlinearity) -> Nonlinearity:
    """Component of the true coefficient visible through the regularization."""
    return reg.apply_as_nonlinearity(k1.apply(nl_true))


@dataclass(frozen=True)
class Reconstruction:
    """Per-order corrections and cumulative sums of the inverse series."""

    corrections: tuple[Nonlinearity, ...]
    degrees: tuple[int, ...]
    diverged_at: int | None
    guard: float

    @property
    def order(self) -> int:
        return len(self.corrections)

    def cumulative(self, m: int | None = None) -> Nonlinearity:
        m = self.order if m is None else m
        if not (1 <= m <= self.order):
            raise ValueError(f"order {m} outside computed range 1..{self.order}")
        vec = np.sum([c.stack() for c in self.corrections[:m]], axis=0)
        grid = self.corrections[0].terms[0][1].grid
        return Nonlinearity.from_stack(vec, self.degrees, grid)

    @property
    def correction_norms(self) -> np.ndarray:
        return np.array([c.sup_norm for c in self.corrections])


def ibs_reconstruct(phi, reg: Regularizer, fw: ForwardOperators, m_max: int,
                    guard: float = 1e6) -> Reconstruction:
    """Inverse Born series through order m_max.

    Order 1 is the pseudoinverse applied to the data; order m sums
    -pinv(K_n(c_{i_1}, ..., c_{i_n})) over n = 2..m and ordered tuples of
    positive integers (i_1, ..., i_n) summing to m.  Orders whose sup-norm
    exceeds guard * |order 1| are not applied; the series is truncated there
    and flagged.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    data_vec = phi.flatten() if isinstance(phi, ScatteringData) else np.asarray(phi).ravel()
    if data_vec.size != reg.k1.n_rows:
        raise ValueError(
            f"data vector length {data_vec.size} does not match map rows {reg.k1.n_rows}"
        )
    corrections = [reg.apply_as_nonlinearity(data_vec)]
    scale = corrections[0].sup_norm
    diverged_at = None
    for m in range(2, m_max + 1):
        total = np.zeros((fw.layout.n_sources, fw.layout.n_detectors))
        for n in range(2, m + 1):
            for tup in _positive_compositions(m, n):
                args = [corrections[i - 1] for i in tup]
                total += k_n_apply(fw, n, args)
        c_m = reg.apply_as_nonlinearity(-total.ravel())
        if scale > 0 and c_m.sup_norm > guard * scale:
            diverged_at = m
            break
        corrections.append(c_m)
    return Reconstruction(corrections=tuple(corrections),
                          degrees=tuple(sorted(fw.degrees)),
                          diverged_at=diverged_at, guard=guard)


def _positive_compositions(total: int, parts: int):
    """Ordered tuples of `parts` positive integers summing to `total`."""
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _positive_compositions(total - first, parts - 1):
            yield (first,) + rest
