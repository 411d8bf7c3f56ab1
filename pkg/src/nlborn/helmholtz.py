"""Discrete Neumann Helmholtz operator on the polar disk grid.

Finite-volume form: integrating (Laplacian + k^2) over the annular sector
cell (i, j) couples radial neighbors with dtheta*r_{i+1/2}/dr and angular
neighbors with dr/(r_i*dtheta).  The inner face at r=0 carries no flux and
the outer face at r=1 carries the Neumann data, so the zero-flux boundary
condition is baked in and boundary data enters purely through the right
hand side.

Key identity used throughout: the weighted Green's matrix G_hat with
G_hat[i, j] ~ G(x_i, y_j) * w_j is exactly the inverse of the pointwise
system matrix, so mu = k^2 * max_i sum_j |G_hat[i, j]| and the integral
operator b(v, beta) = sign * k^2 * G_hat @ (beta * v) need no extra
quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import DiskGrid, gaussian_boundary_source  # noqa: F401  (re-export convenience)
from .errors import SingularOperatorError

# Sign of the integral operator b: the integral-equation expansion of the
# scattered field carries -k^2 int G beta u^l, and using the same sign in b
# makes the series recursion reproduce the fixed-point iterates exactly.
B_SIGN = -1.0

DEFAULT_WELLPOSED_RTOL = 1e-8


@dataclass(frozen=True)
class Field:
    """Real-valued function sampled on grid nodes."""

    values: np.ndarray
    grid: DiskGrid | None = None
    source: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.grid is not None and values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field has {values.shape} values for a grid of {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite entries")

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __add__(self, other: "Field") -> "Field":
        return Field(self.values + other.values, self.grid, self.source)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.values - other.values, self.grid, self.source)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.values * scalar, self.grid, self.source)

    __rmul__ = __mul__


class HelmholtzOperator:
    """Discrete (Laplacian + k^2) with the Neumann condition baked in."""

    def __init__(self, grid: DiskGrid, k: float, system_matrix: sp.csr_matrix,
                 lu, smallest_singular_value: float):
        self.grid = grid
        self.k = k
        self.system_matrix = system_matrix
        self._lu = lu
        self.smallest_singular_value = smallest_singular_value

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Pointwise (Laplacian + k^2) applied to nodal values."""
        return self.system_matrix @ values

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            raise SingularOperatorError(
                f"operator at k={self.k} is singular (factorization failed)",
                sigma_min=self.smallest_singular_value,
            )
        return self._lu.solve(rhs)

    def boundary_lift(self, g: np.ndarray) -> np.ndarray:
        """Right-hand-side vector carrying Neumann data g (per boundary node)."""
        grid = self.grid
        g = np.asarray(g, dtype=float)
        if g.shape != (grid.n_angular,):
            raise ValueError(
                f"boundary data has shape {g.shape}, expected ({grid.n_angular},)"
            )
        rhs = np.zeros(grid.n_nodes)
        # outer face flux g*dtheta divided by the boundary cell area
        r_outer = (grid.n_radial - 0.5) * grid.dr
        rhs[grid.boundary_nodes] = g / (r_outer * grid.dr)
        return rhs


@dataclass
class GreensOperator:
    """Dense solution operator; entry (i, j) approximates G(x_i, y_j) * w_j."""

    k: float
    g_matrix: np.ndarray
    grid: DiskGrid | None = None
    _mu: float | None = None

    @property
    def n_nodes(self) -> int:
        return self.g_matrix.shape[0]


def _integrated_laplacian(grid: DiskGrid) -> sp.csr_matrix:
    """Symmetric flux-form Laplacian; row i is the flux balance of cell i."""
    nr, na = grid.n_radial, grid.n_angular
    dr, dtheta = grid.dr, grid.dtheta
    idx = np.arange(nr * na).reshape(nr, na)

    rows, cols, vals = [], [], []

    def couple(a, b, c):
        rows.extend([a, b, a, b])
        cols.extend([b, a, a, b])
        vals.extend([c, c, -c, -c])

    # radial faces at r = (i+1)*dr between rings i and i+1
    for i in range(nr - 1):
        c_r = (i + 1) * dr * dtheta / dr
        for j in range(na):
            couple(idx[i, j], idx[i + 1, j], c_r)
    # angular faces within each ring (periodic)
    for i in range(nr):
        c_t = dr / (((i + 0.5) * dr) * dtheta)
        for j in range(na):
            couple(idx[i, j], idx[i, (j + 1) % na], c_t)

    n = nr * na
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _estimate_sigma_min(matrix: sp.csr_matrix, lu, n_iter: int = 60) -> float:
    """Smallest singular value via power iteration on inv(A) * inv(A)^T."""
    n = matrix.shape[0]
    v = np.cos(np.arange(n, dtype=float))  # deterministic, not axis-aligned
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = lu.solve(lu.solve(v), trans="T")
        lam = float(np.linalg.norm(w))
        if lam == 0.0 or not np.isfinite(lam):
            return 0.0
        v = w / lam
    return 1.0 / math.sqrt(lam)


def assemble(grid: DiskGrid, k: float) -> HelmholtzOperator:
    """Assemble and factorize the discrete Helmholtz operator.

    The pointwise matrix is W^{-1} * (flux Laplacian) + k^2 I with W the
    diagonal of cell areas.  A failed factorization (k^2 at a discrete
    Neumann eigenvalue, e.g. k=0) leaves the operator inspectable through
    ``check_wellposed`` but refusing solves.
    """
    flux = _integrated_laplacian(grid)
    inv_w = sp.diags(1.0 / grid.quad_weights)
    system = (inv_w @ flux + float(k) ** 2 * sp.identity(grid.n_nodes)).tocsr()
    try:
        lu = spla.splu(system.tocsc())
        sigma_min = _estimate_sigma_min(system, lu)
        if not np.isfinite(sigma_min):
            sigma_min = 0.0
    except RuntimeError:
        lu, sigma_min = None, 0.0
    return HelmholtzOperator(grid, float(k), system, lu, sigma_min)


@dataclass(frozen=True)
class WellPosedness:
    ok: bool
    sigma_min: float
    threshold: float

    def __str__(self):
        state = "ok" if self.ok else "near_singular"
        return f"{state}(sigma_min={self.sigma_min:.3e}, threshold={self.threshold:.3e})"


def check_wellposed(op: HelmholtzOperator,
                    rtol: float = DEFAULT_WELLPOSED_RTOL) -> WellPosedness:
    """Flag operators whose k^2 sits (numerically) on a Neumann eigenvalue."""
    scale = float(np.max(np.abs(op.system_matrix.data)))
    threshold = rtol * scale
    return WellPosedness(ok=op.smallest_singular_value >= threshold,
                         sigma_min=op.smallest_singular_value,
                         threshold=threshold)


def _require_wellposed(op: HelmholtzOperator):
    diag = check_wellposed(op)
    if not diag.ok:
        raise SingularOperatorError(
            f"operator at k={op.k} is not well posed: {diag}", sigma_min=diag.sigma_min
        )


def solve_background(op: HelmholtzOperator, g: np.ndarray, source: str | None = None) -> Field:
    """Solve the linear problem with Neumann data g; linear in g."""
    _require_wellposed(op)
    u0 = op.solve(-op.boundary_lift(g))
    return Field(u0, op.grid, source)


def greens_operator(op: HelmholtzOperator) -> GreensOperator:
    """Materialize the dense weighted Green's matrix (= inverse system matrix)."""
    _require_wellposed(op)
    g_matrix = op.solve(np.eye(op.n_nodes))
    return GreensOperator(k=op.k, g_matrix=g_matrix, grid=op.grid)


def b_apply(gop: GreensOperator, v: Field, beta: Field, k: float | None = None) -> Field:
    """Integral operator b(v, beta) = sign * k^2 * G_hat @ (beta * v).

    Bilinear in (v, beta); the area weights are already folded into G_hat.
    """
    if v.values.shape != beta.values.shape or v.values.shape[0] != gop.n_nodes:
        raise ValueError(
            f"shape mismatch: v {v.values.shape}, beta {beta.values.shape}, "
            f"greens {gop.g_matrix.shape}"
        )
    kk = gop.k if k is None else k
    return Field(B_SIGN * kk ** 2 * (gop.g_matrix @ (beta.values * v.values)),
                 v.grid, v.source)


def compute_mu(gop: GreensOperator, k: float | None = None) -> float:
    """Contraction scale mu = k^2 * max_x integral |G(x, .)| (max abs row sum)."""
    if k is None and gop._mu is not None:
        return gop._mu
    kk = gop.k if k is None else k
    mu = float(kk ** 2 * np.max(np.sum(np.abs(gop.g_matrix), axis=1)))
    if k is None:
        gop._mu = mu
    return mu
