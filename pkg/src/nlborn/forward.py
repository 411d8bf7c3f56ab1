"""Nonlinear forward problem: fixed point, Born series and scattering data.

The scattered-field series is built from the recursion

    term_0 = u0
    term_{n+1} = sum_l b_l( sum_{i_1+..+i_l = n} term_{i_1} * ... * term_{i_l} )

where b_l multiplies pointwise by the degree-l coefficient and applies the
weighted Green's matrix (sign folded in, see helmholtz.B_SIGN).  With all
arguments equal this telescopes the fixed-point expansion; with distinct
arguments each multilinear slot consumes a contiguous slice of the argument
list and the final argument feeds the outermost b, which is the structure
the inverse series needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bounds as _bounds
from .discretization import (DiskGrid, SensorLayout, boundary_trace_matrix,
                             gaussian_boundary_source, grid_fingerprint)
from .errors import FixedPointDivergenceError
from .helmholtz import (B_SIGN, Field, GreensOperator, HelmholtzOperator,
                        assemble, b_apply, compute_mu, greens_operator,
                        solve_background)


@dataclass(frozen=True)
class Nonlinearity:
    """Coefficient fields of the polynomial nonlinearity, one per degree >= 2."""

    terms: tuple[tuple[int, Field], ...]

    def __post_init__(self):
        degrees = [l for l, _ in self.terms]
        if len(set(degrees)) != len(degrees):
            raise ValueError(f"duplicate degrees in {degrees}")
        if any(l < 2 for l in degrees):
            raise ValueError(f"degrees must all be >= 2, got {degrees}")
        sizes = {f.values.shape for _, f in self.terms}
        if len(sizes) > 1:
            raise ValueError("all coefficient fields must live on the same grid")
        object.__setattr__(self, "terms", tuple(sorted(self.terms, key=lambda t: t[0])))

    @classmethod
    def cubic(cls, beta: Field) -> "Nonlinearity":
        return cls(terms=((3, beta),))

    @classmethod
    def single(cls, degree: int, beta: Field) -> "Nonlinearity":
        return cls(terms=((int(degree), beta),))

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(l for l, _ in self.terms)

    @property
    def L(self) -> int:
        return max(self.degrees)

    @property
    def sup_norm(self) -> float:
        return max((f.sup_norm for _, f in self.terms), default=0.0)

    def component(self, degree: int) -> np.ndarray:
        for l, f in self.terms:
            if l == degree:
                return f.values
        raise KeyError(f"no coefficient of degree {degree}")

    def stack(self) -> np.ndarray:
        """Concatenate coefficient fields in ascending degree order."""
        return np.concatenate([f.values for _, f in self.terms])

    @classmethod
    def from_stack(cls, vec: np.ndarray, degrees, grid: DiskGrid | None = None) -> "Nonlinearity":
        degrees = tuple(sorted(degrees))
        n = vec.size // len(degrees)
        if n * len(degrees) != vec.size:
            raise ValueError("stacked vector length is not a multiple of the degree count")
        return cls(terms=tuple(
            (l, Field(vec[i * n:(i + 1) * n], grid)) for i, l in enumerate(degrees)
        ))

    def scale(self, factor: float) -> "Nonlinearity":
        return Nonlinearity(terms=tuple((l, factor * f) for l, f in self.terms))


@dataclass(frozen=True)
class SeriesTerm:
    order: int
    field: Field
    boundary: np.ndarray | None = None


@dataclass(frozen=True)
class ScatteringData:
    """Boundary measurements u - u0, one row per source, one column per detector."""

    matrix: np.ndarray
    wavenumbers: np.ndarray
    layout: SensorLayout
    grid_hash: str
    failures: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        if self.matrix.shape != (self.layout.n_sources, self.layout.n_detectors):
            raise ValueError(
                f"data shape {self.matrix.shape} does not match layout "
                f"({self.layout.n_sources} x {self.layout.n_detectors})"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("scattering data contains non-finite entries")

    def flatten(self) -> np.ndarray:
        """Source-major data vector, matching the linearized-map row order."""
        return self.matrix.ravel()


def _compositions(total: int, parts: int):
    """Ordered tuples of `parts` nonnegative integers summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _truncated_powers(fields: list[np.ndarray], degrees, order: int) -> dict[int, np.ndarray]:
    """Order-`order` coefficient of (sum_i fields[i] x^i)^l for each degree l."""
    out = {}
    for l in degrees:
        acc = np.zeros_like(fields[0])
        for comp in _compositions(order, l):
            prod = fields[comp[0]].copy()
            for i in comp[1:]:
                prod *= fields[i]
            acc += prod
        out[l] = acc
    return out


class BornSeries:
    """Memoized equal-argument series terms for one source.

    Orders 1..N share one pass: term(n) extends the cache as needed, so
    evaluating all orders up to N costs a single sweep of the recursion.
    """

    def __init__(self, u0: Field, nl: Nonlinearity, gop: GreensOperator,
                 trace=None):
        self.u0 = u0
        self.nl = nl
        self.gop = gop
        self.trace = trace
        self._fields: list[np.ndarray] = [u0.values]

    def _extend(self, n: int):
        k2 = self.gop.k ** 2
        while len(self._fields) <= n:
            m = len(self._fields) - 1
            powers = _truncated_powers(self._fields, self.nl.degrees, m)
            src = np.zeros_like(self._fields[0])
            for l in self.nl.degrees:
                src += self.nl.component(l) * powers[l]
            self._fields.append(B_SIGN * k2 * (self.gop.g_matrix @ src))

    def term(self, n: int) -> SeriesTerm:
        if n < 1:
            raise ValueError("series terms start at order 1")
        self._extend(n)
        values = self._fields[n]
        boundary = None if self.trace is None else self.trace @ values
        return SeriesTerm(order=n, field=Field(values, self.u0.grid, self.u0.source),
                          boundary=boundary)

    def partial_sum(self, n_max: int) -> Field:
        self._extend(n_max)
        return Field(np.sum(self._fields[: n_max + 1], axis=0),
                     self.u0.grid, self.u0.source)

    def term_norms(self, n_max: int) -> np.ndarray:
        self._extend(n_max)
        return np.array([np.max(np.abs(f)) for f in self._fields[1: n_max + 1]])


def born_term_equal_args(n: int, u0: Field, nl: Nonlinearity,
                         gop: GreensOperator, trace=None) -> SeriesTerm:
    """Degree-n term of the series with all arguments equal to the coefficient."""
    return BornSeries(u0, nl, gop, trace).term(n)


def born_sum(n_max: int, u0: Field, nl: Nonlinearity,
             gop: GreensOperator) -> tuple[Field, np.ndarray]:
    """Partial sum through order n_max plus the per-order sup-norms."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    series = BornSeries(u0, nl, gop)
    return series.partial_sum(n_max), series.term_norms(n_max)


@dataclass(frozen=True)
class FixedPointResult:
    u: Field
    iterations: int
    admissible: bool
    contraction_bound: float
    stayed_in_ball: bool
    history: tuple[float, ...]


def _fixed_point_iterate(u0: Field, nl: Nonlinearity, k: float, apply_greens,
                         tol: float, max_iter: int):
    """Shared iteration core; apply_greens maps a source density to a field."""
    k2 = k ** 2
    u = u0.values.copy()
    history = []
    for it in range(1, max_iter + 1):
        src = np.zeros_like(u)
        with np.errstate(over="ignore", invalid="ignore"):
            for l in nl.degrees:
                src += nl.component(l) * u ** l
        if not np.all(np.isfinite(src)):
            history.append(float("inf"))
            raise FixedPointDivergenceError(
                f"iterates blew up after {it} iterations", history=history)
        u_next = u0.values + B_SIGN * k2 * apply_greens(src)
        diff = float(np.max(np.abs(u_next - u))) if u.size else 0.0
        history.append(diff)
        u = u_next
        if diff <= tol:
            return u, it, history
    raise FixedPointDivergenceError(
        f"no fixed point within {max_iter} iterations (last update {history[-1]:.3e})",
        history=history,
    )


def fixed_point_solve(op: HelmholtzOperator, gop: GreensOperator, u0: Field,
                      nl: Nonlinearity, tol: float = 1e-10,
                      max_iter: int = 200) -> FixedPointResult:
    """Iterate u <- u0 + sum_l b_l(u^l) to a sup-norm fixed point.

    The sufficient smallness condition |beta| < 1/(K mu) is evaluated and
    recorded (`admissible`) but not enforced; divergence is reported
    empirically through FixedPointDivergenceError with the iterate history.
    """
    mu = compute_mu(gop)
    nu0 = u0.sup_norm
    if nl.degrees == (3,):
        _, K = _bounds.cubic_constants(nu0)
    else:
        _, K = _bounds.general_constants(nu0, nl.degrees)
    radius = np.inf if K * mu == 0 else 1.0 / (K * mu)
    admissible = nl.sup_norm < radius

    u, it, history = _fixed_point_iterate(u0, nl, gop.k,
                                          lambda src: gop.g_matrix @ src,
                                          tol, max_iter)
    deviation = float(np.max(np.abs(u - u0.values))) if u.size else 0.0
    return FixedPointResult(
        u=Field(u, u0.grid, u0.source), iterations=it,
        admissible=admissible, contraction_bound=radius,
        stayed_in_ball=deviation <= 0.5 * nu0 + tol, history=tuple(history),
    )


def _kn_field(u0_values: np.ndarray, gmat: np.ndarray, k: float, degrees,
              args: list[Nonlinearity], order: int, start: int,
              memo: dict) -> np.ndarray:
    """Order-`order` multilinear term consuming args[start : start+order]."""
    if order == 0:
        return u0_values
    key = (order, start)
    if key in memo:
        return memo[key]
    k2 = k ** 2
    out = np.zeros_like(u0_values)
    outer = args[start + order - 1]
    for l in degrees:
        for comp in _compositions(order - 1, l):
            prod = None
            offset = start
            for i in comp:
                piece = _kn_field(u0_values, gmat, k, degrees, args, i, offset, memo)
                prod = piece.copy() if prod is None else prod * piece
                offset += i
            out += B_SIGN * k2 * (gmat @ (outer.component(l) * prod))
    memo[key] = out
    return out


def kn_field_single_source(u0: Field, gop: GreensOperator,
                           args: list[Nonlinearity]) -> Field:
    """Multilinear term of order len(args) for one background field."""
    degrees = args[0].degrees if args else ()
    memo: dict = {}
    values = _kn_field(u0.values, gop.g_matrix, gop.k, degrees,
                       list(args), len(args), 0, memo)
    return Field(values, u0.grid, u0.source)


@dataclass
class ForwardOperators:
    """Assembled operators, backgrounds and detector trace for one grid."""

    grid: DiskGrid
    layout: SensorLayout
    degrees: tuple[int, ...]
    operators: dict[float, HelmholtzOperator]
    greens: dict[float, GreensOperator]
    backgrounds: list[Field]
    trace: object  # sparse (n_det x n_nodes)

    @property
    def mu_by_k(self) -> dict[float, float]:
        return {k: compute_mu(g) for k, g in self.greens.items()}

    @property
    def nu0(self) -> float:
        """Background sup-norm over all nodes and all sources."""
        return max(f.sup_norm for f in self.backgrounds)

    def source_greens(self, s: int) -> GreensOperator:
        return self.greens[self.layout.sources[s].k]


def build_forward_operators(grid: DiskGrid, layout: SensorLayout,
                            degrees=(3,), dense_greens: bool = True) -> ForwardOperators:
    """Assemble per-wavenumber operators and solve every background field.

    dense_greens=False skips materializing the dense Green's matrices;
    fixed-point data synthesis then applies the solution operator through
    the sparse factorization, which is the economical choice on fine
    data-generation grids (> ~4000 nodes).
    """
    degrees = tuple(sorted(set(int(l) for l in degrees)))
    operators: dict[float, HelmholtzOperator] = {}
    greens: dict[float, GreensOperator] = {}
    for k in layout.wavenumbers:
        op = assemble(grid, k)
        operators[k] = op
        if dense_greens:
            greens[k] = greens_operator(op)
    backgrounds = []
    for s, src in enumerate(layout.sources):
        g = gaussian_boundary_source(src, grid)
        backgrounds.append(solve_background(operators[src.k], g, source=f"src{s}"))
    trace = boundary_trace_matrix(grid, layout.detector_angles)
    return ForwardOperators(grid=grid, layout=layout, degrees=degrees,
                            operators=operators, greens=greens,
                            backgrounds=backgrounds, trace=trace)


def k_n_apply(fw: ForwardOperators, n: int, args) -> np.ndarray:
    """Boundary values of the order-n multilinear operator, (n_src x n_det).

    args is a sequence of n coefficient vectors (Nonlinearity); slot m is
    consumed by the recursion in the contiguous order described in the
    module docstring.  Multilinear in every slot.
    """
    args = list(args)
    if len(args) != n:
        raise ValueError(f"expected {n} arguments, got {len(args)}")
    for a in args:
        if a.degrees != tuple(sorted(fw.degrees)):
            raise ValueError(
                f"argument degrees {a.degrees} do not match evaluator degrees {fw.degrees}"
            )
    out = np.zeros((fw.layout.n_sources, fw.layout.n_detectors))
    for s in range(fw.layout.n_sources):
        field = kn_field_single_source(fw.backgrounds[s], fw.source_greens(s), args)
        out[s] = fw.trace @ field.values
    return out


def scattering_data(layout: SensorLayout, grid: DiskGrid, nl: Nonlinearity,
                    solver: str = "fixed_point", born_order: int = 8,
                    tol: float = 1e-10, max_iter: int = 200,
                    fw: ForwardOperators | None = None) -> ScatteringData:
    """Synthesize boundary data u - u0 for every source.

    Per-source solver failures are recorded (source index, message) and the
    corresponding rows zeroed so partial runs stay usable; callers decide
    whether to refuse.
    """
    if solver not in ("fixed_point", "born"):
        raise ValueError(f"unknown solver {solver!r}")
    if fw is None:
        fw = build_forward_operators(grid, layout, nl.degrees)
    matrix = np.zeros((layout.n_sources, layout.n_detectors))
    failures = []
    for s in range(layout.n_sources):
        u0 = fw.backgrounds[s]
        k = layout.sources[s].k
        try:
            if solver == "fixed_point":
                if fw.greens:
                    res = fixed_point_solve(fw.operators[k], fw.source_greens(s),
                                            u0, nl, tol=tol, max_iter=max_iter)
                    u_values = res.u.values
                else:
                    u_values, _, _ = _fixed_point_iterate(
                        u0, nl, k, fw.operators[k].solve, tol, max_iter)
            else:
                u_values = BornSeries(u0, nl, fw.source_greens(s)).partial_sum(born_order).values
            matrix[s] = fw.trace @ (u_values - u0.values)
        except FixedPointDivergenceError as exc:
            failures.append((s, str(exc)))
    return ScatteringData(
        matrix=matrix,
        wavenumbers=np.array([src.k for src in layout.sources]),
        layout=layout,
        grid_hash=grid_fingerprint(grid),
        failures=tuple(failures),
    )
