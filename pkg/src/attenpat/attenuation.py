"""Discrete attenuation solution operator for weak laws.

The operator that maps the lossless integrated pressure q to its
attenuated counterpart q^a is, for a weak law with constant part k_inf
and remainder k_star, realized on the time grid as the dense matrix

    M = diag(exp(-k_inf * t_i)) + B,
    b_im = (dt / sqrt(2 pi)) * exp(-k_inf * t_m)
           * sum_{k=1..K} (t_m**k / k!) * r_k(t_i - t_m),

where ``r_k`` is the inverse Fourier transform of ``(1j * k_star)**k``.
``r_1`` comes from trapezoid quadrature over a truncated frequency band
and higher orders from the convolution recursion
``r_k = (r_1 * r_{k-1}) / sqrt(2 pi)``.

Two numerical facts make the recursion accurate: truncating ``k_star``
to a band commutes with taking powers, and the truncated transforms are
band limited, so the lag-grid discrete convolution equals the continuous
one whenever the band stays below the lag Nyquist rate.  The band is
therefore capped at a fraction of ``pi / dt``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg as la

from .models import (
    AttenuationModel,
    ConstantModel,
    eval_kstar,
    is_weak_variant,
    k_infinity,
    model_tag,
)
from .wavefield import TimeGrid, WaveData

__all__ = [
    "SQRT_2PI",
    "ConditioningError",
    "KernelSeries",
    "AttenuationSystem",
    "lag_grid",
    "compute_r1",
    "compute_rk",
    "kernel_series",
    "build_system",
    "apply_attenuation",
    "invert_attenuation",
]

SQRT_2PI = float(np.sqrt(2.0 * np.pi))

DEFAULT_OMEGA_MAX = 200.0
DEFAULT_QUAD_NODES = 2**14

# keep the quadrature band below the lag-grid Nyquist rate so discrete
# convolutions of the band-limited kernels stay alias-free
BAND_SAFETY = 0.95


class ConditioningError(RuntimeError):
    """Linear solve refused: matrix singular to working precision."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


def _kstar_callable(kstar: Union[AttenuationModel, Callable]) -> Callable:
    if callable(kstar):
        return kstar
    if is_weak_variant(kstar):
        return lambda w: eval_kstar(kstar, w)
    raise ValueError(
        f"kernel quadrature needs a weak law or a callable, got {model_tag(kstar)}"
    )


def lag_grid(time_grid: TimeGrid) -> np.ndarray:
    """All lags ``t_i - t_m`` of the grid: ``(2*count - 1)`` values."""
    n = time_grid.count
    return time_grid.dt * np.arange(-(n - 1), n)


def compute_r1(
    kstar: Union[AttenuationModel, Callable],
    lags: np.ndarray,
    omega_max: float = DEFAULT_OMEGA_MAX,
    num_nodes: int = DEFAULT_QUAD_NODES,
) -> np.ndarray:
    """First kernel ``r_1(s) = (1/sqrt(2 pi)) int 1j k_star(w) exp(-1j w s) dw``
    by composite trapezoid on ``[-omega_max, omega_max]``.

    Returns the complex quadrature value; for symbols with the physical
    symmetry ``k_star(-w) = -conj(k_star(w))`` the imaginary part is
    rounding noise, which callers may check and drop.
    """
    fn = _kstar_callable(kstar)
    if omega_max <= 0 or num_nodes < 8:
        raise ValueError("quadrature needs omega_max > 0 and num_nodes >= 8")
    w = np.linspace(-omega_max, omega_max, num_nodes)
    weights = np.full(num_nodes, w[1] - w[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    g = weights * (1j * np.asarray(fn(w), dtype=complex))
    lags = np.asarray(lags, dtype=float)
    out = np.empty(lags.shape, dtype=complex)
    block = max(1, int(2e6 // num_nodes))
    for a in range(0, lags.size, block):
        b = min(a + block, lags.size)
        out[a:b] = np.exp(-1j * np.outer(lags[a:b], w)) @ g
    return out / SQRT_2PI


def _convolve_full(a: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Full-line discrete convolution on a symmetric lag grid, cropped back
    to the same grid; weight ``dt / sqrt(2 pi)``."""
    n = len(a)
    full = np.convolve(a, b)
    lo = (len(full) - n) // 2
    return full[lo : lo + n] * (dt / SQRT_2PI)


def _convolve_causal(a: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Causal sum ``(dt/sqrt(2 pi)) * sum_{m=1..i} a(t_m) b(t_i - t_m)`` on the
    nonnegative-lag part; negative lags are zeroed (pseudocode-compatible
    mode)."""
    n = len(a)
    n0 = (n - 1) // 2
    ap = a[n0:].copy()
    bp = b[n0:].copy()
    ap[0] = 0.0  # the causal sum starts at m = 1, lag grid starts at 0
    pos = np.convolve(ap, bp)[: len(ap)] * (dt / SQRT_2PI)
    out = np.zeros_like(a)
    out[n0:] = pos
    return out


def compute_rk(
    r1: np.ndarray, order: int, dt: float, causal: bool = False
) -> np.ndarray:
    """Kernel of order ``order`` from the convolution recursion
    ``r_k = (r_1 * r_{k-1}) / sqrt(2 pi)`` started at ``r1``.

    ``r1`` must live on a symmetric lag grid with spacing ``dt``.
    """
    if order < 2:
        raise ValueError(f"recursion defines orders >= 2, got {order!r}")
    conv = _convolve_causal if causal else _convolve_full
    rk = np.asarray(r1)
    for _ in range(order - 1):
        rk = conv(np.asarray(r1), rk, dt)
    return rk


@dataclass(eq=False)
class KernelSeries:
    """Kernels ``r_1 .. r_K`` tabulated on the full lag grid of a time grid."""

    lags: np.ndarray
    r: np.ndarray  # (order, 2*count - 1), real
    order: int
    omega_max: float
    num_nodes: int
    causal: bool
    imag_residue: float

    def at_lag_matrix(self, k: int, count: int) -> np.ndarray:
        """Dense ``(count, count)`` matrix of ``r_k(t_i - t_m)`` values."""
        idx = np.arange(count)[:, None] - np.arange(count)[None, :] + (count - 1)
        return self.r[k - 1][idx]


def kernel_series(
    model: Union[AttenuationModel, Callable],
    time_grid: TimeGrid,
    order: int = 10,
    omega_max: float = DEFAULT_OMEGA_MAX,
    num_nodes: int = DEFAULT_QUAD_NODES,
    causal: bool = False,
) -> KernelSeries:
    """Tabulate ``r_1 .. r_order`` for a weak law on the lag grid of
    ``time_grid``, with the quadrature band capped below the lag Nyquist
    rate."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order!r}")
    effective_omega = min(omega_max, BAND_SAFETY * np.pi / time_grid.dt)
    lags = lag_grid(time_grid)
    r1c = compute_r1(model, lags, omega_max=effective_omega, num_nodes=num_nodes)
    scale = float(np.max(np.abs(r1c))) or 1.0
    residue = float(np.max(np.abs(r1c.imag))) / scale
    r1 = r1c.real
    rows = [r1]
    conv = _convolve_causal if causal else _convolve_full
    for _ in range(order - 1):
        rows.append(conv(r1, rows[-1], time_grid.dt))
    return KernelSeries(
        lags=lags,
        r=np.vstack(rows),
        order=order,
        omega_max=effective_omega,
        num_nodes=num_nodes,
        causal=causal,
        imag_residue=residue,
    )


@dataclass(eq=False)
class AttenuationSystem:
    """Dense realization ``M = diag(exp(-k_inf t_i)) + B`` of the attenuation
    operator on one time grid."""

    matrix: np.ndarray
    time_grid: TimeGrid
    model_tag: str
    k_inf: float
    order: int
    omega_max: float
    num_nodes: int
    causal: bool = False
    _lu: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def fingerprint(self) -> str:
        return (
            f"{self.model_tag}|nt={self.time_grid.count}|dt={self.time_grid.dt:.17g}"
            f"|K={self.order}|omega={self.omega_max:.17g}x{self.num_nodes}"
            f"|causal={int(self.causal)}"
        )

    def lu(self) -> tuple:
        if self._lu is None:
            self._lu = la.lu_factor(self.matrix)
        return self._lu

    def condition_estimate(self) -> float:
        """Reciprocal-free 1-norm condition estimate of M."""
        lu, _ = self.lu()
        anorm = float(np.linalg.norm(self.matrix, 1))
        rcond = la.lapack.dgecon(lu, anorm, norm="1")[0]
        return float(1.0 / rcond) if rcond > 0 else float("inf")


def build_system(
    model: AttenuationModel,
    time_grid: TimeGrid,
    order: int = 10,
    omega_max: float = DEFAULT_OMEGA_MAX,
    num_nodes: int = DEFAULT_QUAD_NODES,
    causal: bool = False,
) -> AttenuationSystem:
    """Assemble the dense attenuation system for a weak law.

    ``order`` is the truncation index K of the exponential Taylor series;
    K = 10 is converged for the grids used here (checked in the tests).
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order!r}")
    if not is_weak_variant(model):
        raise ValueError(
            f"cannot build an attenuation system for non-weak law {model_tag(model)}"
        )
    kinf = k_infinity(model)
    times = time_grid.times
    diag = np.exp(-kinf * times)
    n = time_grid.count

    if isinstance(model, ConstantModel):
        matrix = np.diag(diag)
        series_omega, series_nodes = omega_max, num_nodes
    else:
        series = kernel_series(
            model, time_grid, order=order, omega_max=omega_max,
            num_nodes=num_nodes, causal=causal,
        )
        if series.imag_residue > 1e-10:
            raise FloatingPointError(
                f"kernel quadrature is not real: relative imaginary residue "
                f"{series.imag_residue:.3e} (asymmetric k_star?)"
            )
        tm_pow = np.ones_like(times)
        col_base = (time_grid.dt / SQRT_2PI) * diag
        matrix = np.zeros((n, n))
        fact = 1.0
        for k in range(1, order + 1):
            tm_pow = tm_pow * times
            fact *= k
            coeff = col_base * tm_pow / fact
            if not np.all(np.isfinite(coeff)):
                raise FloatingPointError(
                    f"Taylor term t**{k}/{k}! overflows for this time grid"
                )
            matrix += series.at_lag_matrix(k, n) * coeff[None, :]
        matrix += np.diag(diag)
        series_omega, series_nodes = series.omega_max, series.num_nodes

    return AttenuationSystem(
        matrix=matrix,
        time_grid=time_grid,
        model_tag=model_tag(model),
        k_inf=kinf,
        order=order,
        omega_max=series_omega,
        num_nodes=series_nodes,
        causal=causal,
    )


def _check_grid(system: AttenuationSystem, wave: WaveData) -> None:
    if wave.time_grid != system.time_grid:
        raise ValueError(
            f"time grid mismatch: data has (dt={wave.time_grid.dt}, "
            f"n={wave.time_grid.count}), system has (dt={system.time_grid.dt}, "
            f"n={system.time_grid.count})"
        )


def apply_attenuation(system: AttenuationSystem, wave: WaveData) -> WaveData:
    """Map integrated data q to attenuated-integrated data q^a, columnwise."""
    if wave.kind != "integrated":
        raise ValueError(f"expected kind 'integrated', got {wave.kind!r}")
    _check_grid(system, wave)
    return wave.replace_values(system.matrix @ wave.values, kind="attenuated_integrated")


def invert_attenuation(
    system: AttenuationSystem,
    wave: WaveData,
    regularization: float | None = None,
) -> WaveData:
    """Recover integrated data q from attenuated-integrated data q^a.

    ``regularization=None`` is a direct dense solve; a positive float
    ``lam`` switches to the Tikhonov normal equations
    ``(M^T M + lam I) q = M^T q^a``.
    """
    if wave.kind != "attenuated_integrated":
        raise ValueError(f"expected kind 'attenuated_integrated', got {wave.kind!r}")
    _check_grid(system, wave)
    m = system.matrix
    if regularization is None:
        cond = system.condition_estimate()
        if not np.isfinite(cond) or cond > 0.01 / np.finfo(float).eps:
            raise ConditioningError(
                f"attenuation system is singular to working precision "
                f"(condition estimate {cond:.3e}); pass a Tikhonov parameter",
                condition=cond,
            )
        q = la.lu_solve(system.lu(), wave.values)
    else:
        lam = float(regularization)
        if lam <= 0:
            raise ValueError(f"Tikhonov parameter must be positive, got {lam!r}")
        normal = m.T @ m + lam * np.eye(m.shape[0])
        q = la.cho_solve(la.cho_factor(normal), m.T @ wave.values)
    return wave.replace_values(q, kind="integrated")
