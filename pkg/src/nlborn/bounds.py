"""Explicit constants and convergence radii for the forward and inverse series.

Everything here is scalar arithmetic on the handful of quantities that
control convergence: the contraction scale mu of the integral operator, the
background sup-norm nu0, the combinatorial sequence nu_n, and the derived
constants (nu, K) with the forward radius 1/(K*mu) and the inverse radius r.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .errors import BoundViolationError


def _truncated_power_scalar(seq, power: int, order: int) -> float:
    """Coefficient of x^order in (sum_i seq[i] x^i)^power (seq indexed from 0)."""
    coeffs = np.asarray(seq[: order + 1], dtype=float)
    acc = coeffs.copy()
    for _ in range(power - 1):
        acc = np.convolve(acc, coeffs)[: order + 1]
    return float(acc[order]) if order < acc.size else 0.0


def nu_sequence(nu0: float, degrees, n_max: int) -> np.ndarray:
    """Combinatorial bound sequence: nu_{n+1} = sum_l sum_{i_1+..+i_l=n} prod nu_{i_m}.

    For the cubic degree set {3} and nu0=1 this gives 1, 1, 3, 12, ...
    Overflow is reported at the order where it occurs, never saturated.
    """
    if nu0 < 0:
        raise ValueError("nu0 must be >= 0")
    degrees = _normalize_degrees(degrees)
    seq = [float(nu0)]
    with np.errstate(over="raise"):
        for n in range(n_max):
            try:
                nxt = sum(_truncated_power_scalar(seq, l, n) for l in degrees)
            except FloatingPointError:
                raise OverflowError(f"nu_{n + 1} overflowed (nu0={nu0}, degrees={degrees})")
            if not math.isfinite(nxt):
                raise OverflowError(f"nu_{n + 1} overflowed (nu0={nu0}, degrees={degrees})")
            seq.append(nxt)
    return np.asarray(seq)


def _normalize_degrees(degrees) -> tuple[int, ...]:
    degs = tuple(sorted(set(int(l) for l in degrees)))
    if not degs:
        raise ValueError("degree set must be nonempty")
    if degs[0] < 2:
        raise ValueError(f"degrees must all be >= 2, got {degs}")
    return degs


def cubic_constants(nu0: float) -> tuple[float, float]:
    """Exact Kerr-case constants: nu = 3/2 nu0, K = 27/4 nu0^2."""
    return 1.5 * nu0, 6.75 * nu0 ** 2


def q_polynomial(x: float, degrees) -> float:
    """Q(x) = sum over the degree set of x^l."""
    return float(sum(x ** l for l in _normalize_degrees(degrees)))


def general_constants(nu0: float, degrees) -> tuple[float, float]:
    """General polynomial constants: nu = L nu0/(L-1), K = (L-1) Q(nu)/nu0.

    Q is summed over exactly the degree set passed in; pass range(2, L+1)
    for the conservative full-polynomial variant.  Reduces to
    ``cubic_constants`` when degrees == {3}.
    """
    degrees = _normalize_degrees(degrees)
    if nu0 == 0:
        return 0.0, 0.0
    if nu0 < 0:
        raise ValueError("nu0 must be >= 0")
    L = degrees[-1]
    nu = L * nu0 / (L - 1)
    K = (L - 1) * q_polynomial(nu, degrees) / nu0
    return nu, K


def nu_bound_check(nu_seq: np.ndarray, nu: float, K: float) -> float:
    """Worst ratio nu_n / (nu K^n); raises if any ratio exceeds 1."""
    nu_seq = np.asarray(nu_seq, dtype=float)
    if nu == 0.0:
        if np.any(nu_seq != 0.0):
            raise BoundViolationError("nu=0 but the sequence is nonzero")
        return 0.0
    worst = 0.0
    for n, val in enumerate(nu_seq):
        ratio = val / (nu * K ** n) if (K > 0 or n == 0) else math.inf
        worst = max(worst, ratio)
    if worst > 1.0 + 1e-12:
        raise BoundViolationError(f"nu_n exceeds nu*K^n by factor {worst}")
    return worst


def generating_function_residual(nu_seq: np.ndarray, x: float, degrees) -> float:
    """Residual of the algebraic identity x*Q(P_N(x)) - P_N(x) + nu0 at a partial sum."""
    degrees = _normalize_degrees(degrees)
    nu_seq = np.asarray(nu_seq, dtype=float)
    if x < 0:
        raise ValueError("x must be >= 0")
    nu0 = float(nu_seq[0])
    _, K = general_constants(nu0, degrees) if nu0 > 0 else (0.0, 0.0)
    if K > 0 and x >= 1.0 / K:
        warnings.warn(
            f"x={x} is outside the radius 1/K={1.0 / K:.4g}; partial sums may diverge",
            RuntimeWarning,
        )
    powers = x ** np.arange(nu_seq.size)
    p = float(nu_seq @ powers)
    return x * q_polynomial(p, degrees) - p + nu0


def inverse_radius(mu: float, u0_norm: float, k1pinv_norm: float, degrees) -> tuple[float, float]:
    """Convergence radius of the inverse series: (C, r).

    C = max(2, |K1^+| * nu * K * mu) and r = (sqrt(16 C^2 + 1) - 4C) / (2 K mu);
    for the cubic set {3} this is identical to the explicit Kerr-case formula
    r = 2/(27 mu nu0^2) * (sqrt(16 C^2 + 1) - 4C) with
    C = max(2, 81/8 mu |K1^+| nu0^3).
    """
    if min(mu, u0_norm, k1pinv_norm) < 0:
        raise ValueError("mu, u0_norm and k1pinv_norm must be >= 0")
    if mu * u0_norm == 0.0:
        raise ValueError("mu * u0_norm must be positive for a finite radius")
    nu, K = general_constants(u0_norm, degrees)
    C = max(2.0, k1pinv_norm * nu * K * mu)
    # sqrt(16 C^2 + 1) - 4C evaluated cancellation-free
    r = 1.0 / ((math.sqrt(16.0 * C ** 2 + 1.0) + 4.0 * C) * 2.0 * K * mu)
    return C, r


@dataclass(frozen=True)
class ErrorBound:
    hypothesis_ok: bool
    m_threshold: float
    margin: float
    prefactor: float | None
    bound: float | None


def error_bound(mu: float, u0_norm: float, k1pinv_norm: float,
                m_value: float, residual: float) -> ErrorBound:
    """Reconstruction error estimate for the cubic case.

    With q = 81/8 mu |K1^+| |u0|^3 the hypothesis is
    m_value < 4/(27 mu |u0|^2) (1 - sqrt(q/(1+q))); when it holds the error
    is bounded by (1 - q/(1 - 27/4 mu |u0|^2 m)^2 + q)^{-1} * residual.
    """
    q = (81.0 / 8.0) * mu * k1pinv_norm * u0_norm ** 3
    if mu * u0_norm ** 2 == 0.0:
        # degenerate constants: threshold is vacuous and the prefactor is 1
        return ErrorBound(True, math.inf, math.inf, 1.0, residual)
    m_threshold = 4.0 / (27.0 * mu * u0_norm ** 2) * (1.0 - math.sqrt(q / (1.0 + q)))
    margin = m_threshold - m_value
    if m_value >= m_threshold:
        return ErrorBound(False, m_threshold, margin, None, None)
    denom = (1.0 - (27.0 / 4.0) * mu * u0_norm ** 2 * m_value) ** 2
    inv_prefactor = 1.0 - q / denom + q
    if inv_prefactor <= 0.0:
        return ErrorBound(False, m_threshold, margin, None, None)
    prefactor = 1.0 / inv_prefactor
    return ErrorBound(True, m_threshold, margin, prefactor, prefactor * residual)


@dataclass(frozen=True)
class BoundsReport:
    """All analytic constants for one experiment configuration."""

    mu_by_k: dict
    mu_max: float
    nu0: float
    nu: float
    K: float
    forward_radius: float
    k1pinv_norm: float | None
    C: float | None
    r: float | None
    m_bound: float | None
    error_factor: float | None
    degrees: tuple
    L: int
    q_mode: str

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["mu_by_k"] = {str(k): v for k, v in self.mu_by_k.items()}
        doc["degrees"] = list(self.degrees)
        return doc

    def table(self) -> str:
        rows = [("mu (max over k)", self.mu_max)]
        rows += [(f"mu (k={k})", v) for k, v in sorted(self.mu_by_k.items())]
        rows += [
            ("nu0 = |u0|", self.nu0),
            ("nu", self.nu),
            ("K", self.K),
            ("forward radius 1/(K mu)", self.forward_radius),
            ("|K1 pinv|", self.k1pinv_norm),
            ("C", self.C),
            ("inverse radius r", self.r),
            ("M threshold", self.m_bound),
            ("error prefactor", self.error_factor),
        ]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name.ljust(width)}  {_fmt(value)}" for name, value in rows]
        lines.append(f"{'degrees'.ljust(width)}  {list(self.degrees)} (L={self.L}, Q mode={self.q_mode})")
        return "\n".join(lines)


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.6e}"


def build_bounds_report(mu_by_k: dict, nu0: float, degrees,
                        k1pinv_norm: float | None = None,
                        m_value: float | None = None,
                        q_mode: str = "full") -> BoundsReport:
    """Assemble the report from measured mu's, nu0 and the degree set.

    The cubic set {3} uses the exact Kerr constants.  Otherwise Q is summed
    over the full range 2..L (conservative default) or over the present
    degrees only when q_mode="present".
    """
    degrees = _normalize_degrees(degrees)
    if q_mode not in ("full", "present"):
        raise ValueError(f"unknown q_mode {q_mode!r}")
    L = degrees[-1]
    q_degrees = degrees if (q_mode == "present" or degrees == (3,)) else tuple(range(2, L + 1))
    if degrees == (3,):
        nu, K = cubic_constants(nu0)
    else:
        nu, K = general_constants(nu0, q_degrees)
    mu_max = max(mu_by_k.values()) if mu_by_k else 0.0
    forward_radius = math.inf if K * mu_max == 0 else 1.0 / (K * mu_max)

    C = r = m_bound = error_factor = None
    if k1pinv_norm is not None and mu_max * nu0 > 0:
        C, r = inverse_radius(mu_max, nu0, k1pinv_norm, q_degrees)
        eb = error_bound(mu_max, nu0, k1pinv_norm,
                         m_value if m_value is not None else 0.0, 0.0)
        m_bound = eb.m_threshold
        error_factor = eb.prefactor
    return BoundsReport(
        mu_by_k=dict(mu_by_k), mu_max=mu_max, nu0=nu0, nu=nu, K=K,
        forward_radius=forward_radius, k1pinv_norm=k1pinv_norm,
        C=C, r=r, m_bound=m_bound, error_factor=error_factor,
        degrees=degrees, L=L, q_mode=q_mode,
    )


def bounds_report_from_json(doc: dict) -> BoundsReport:
    return BoundsReport(
        mu_by_k={float(k): v for k, v in doc["mu_by_k"].items()},
        mu_max=doc["mu_max"], nu0=doc["nu0"], nu=doc["nu"], K=doc["K"],
        forward_radius=doc["forward_radius"], k1pinv_norm=doc["k1pinv_norm"],
        C=doc["C"], r=doc["r"], m_bound=doc["m_bound"],
        error_factor=doc["error_factor"], degrees=tuple(doc["degrees"]),
        L=doc["L"], q_mode=doc["q_mode"],
    )
