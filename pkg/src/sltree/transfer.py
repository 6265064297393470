"""Fundamental solutions C, S of -y'' + q y = lam y on one edge.

C(0)=1, C'(0)=0 and S(0)=0, S'(0)=1.  Zero and constant potentials use
closed forms; everything else goes through an adaptive 8th-order
Runge-Kutta integration batched over the requested lambda values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .potentials import Constant, EdgePotential, Poly, Sampled, Zero

__all__ = [
    "TransferError",
    "TransferValues",
    "transfer_at",
    "asymptotic_residuals",
    "ResidualTable",
]

RTOL = 1e-12
ATOL = 1e-14
MIN_STEPS = 64
_SERIES_CUTOFF = 1e-8


class TransferError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransferValues:
    """(C, C', S, S') at x = a.  Fields are floats or equally shaped arrays."""

    C: np.ndarray
    Cp: np.ndarray
    S: np.ndarray
    Sp: np.ndarray
    lam: np.ndarray

    def wronskian(self):
        return self.C * self.Sp - self.Cp * self.S

    def reversed(self) -> "TransferValues":
        """Values for the same edge read from the other end (q(x) -> q(a - x))."""
        return TransferValues(self.Sp, self.Cp, self.S, self.C, self.lam)

    def __getitem__(self, idx) -> "TransferValues":
        return TransferValues(self.C[idx], self.Cp[idx], self.S[idx], self.Sp[idx], self.lam[idx])


def _free(z, a: float):
    """Closed form for -y'' = z y, i.e. zero potential at spectral value z."""
    z = np.asarray(z, dtype=float)
    w = np.sqrt(np.abs(z))
    wa = w * a
    small = np.abs(z) * a * a < _SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        C = np.where(z > 0, np.cos(wa), np.cosh(wa))
        S = np.where(z > 0, np.sin(wa), np.sinh(wa)) / w
    za2 = z * a * a
    C = np.where(small, 1.0 - za2 / 2.0 + za2 * za2 / 24.0, C)
    S = np.where(small, a * (1.0 - za2 / 6.0 + za2 * za2 / 120.0), S)
    return C, -z * S, S, C


def _rhs_factory(p: EdgePotential, lam: np.ndarray):
    n = lam.size
    if isinstance(p, Sampled):
        g, v = np.asarray(p.grid), np.asarray(p.values)

        def q(x):
            return float(np.interp(x, g, v))
    elif isinstance(p, Poly):
        coeffs = p.coeffs[::-1]

        def q(x):
            acc = 0.0
            for c in coeffs:
                acc = acc * x + c
            return acc
    else:
        q = p.__call__
    out = np.empty(4 * n)

    def rhs(x, y):
        k = q(x) - lam
        out[:n] = y[n:2 * n]
        out[n:2 * n] = k * y[:n]
        out[2 * n:3 * n] = y[3 * n:]
        out[3 * n:] = k * y[2 * n:3 * n]
        return out.copy()

    return rhs


def _integrate(p: EdgePotential, a: float, lam: np.ndarray):
    lam = np.ravel(lam)
    n = lam.size
    hmax = min(a / MIN_STEPS, 0.1 / np.sqrt(max(float(np.max(np.abs(lam))), 1.0)))
    breaks = list(p.grid) if isinstance(p, Sampled) else [0.0, a]
    breaks[-1] = a
    y = np.concatenate([np.ones(n), np.zeros(n), np.zeros(n), np.ones(n)])
    rhs = _rhs_factory(p, lam)
    for x0, x1 in zip(breaks, breaks[1:]):
        sol = solve_ivp(
            rhs, (x0, x1), y, method="DOP853", rtol=RTOL, atol=ATOL,
            max_step=min(hmax, x1 - x0),
        )
        if not sol.success:
            y4 = y.reshape(4, n)
            defect = np.max(np.abs(y4[0] * y4[3] - y4[1] * y4[2] - 1.0))
            raise TransferError(
                f"integration failed at x={sol.t[-1]:.6g} on [0,{a}]: {sol.message}; "
                f"Wronskian defect so far {defect:.3e}"
            )
        y = sol.y[:, -1]
    return y.reshape(4, n)


def transfer_at(p: EdgePotential, a: float, lam) -> TransferValues:
    """Endpoint values (C, C', S, S')(a) for spectral parameter(s) ``lam``."""
    if not a > 0:
        raise ValueError(f"nonpositive length {a}")
    lam_arr = np.asarray(lam, dtype=float)
    if isinstance(p, Zero):
        C, Cp, S, Sp = _free(lam_arr, a)
    elif isinstance(p, Constant):
        C, Cp, S, Sp = _free(lam_arr - p.c, a)
    else:
        C, Cp, S, Sp = _integrate(p, a, lam_arr)
        shape = lam_arr.shape
        C, Cp, S, Sp = (v.reshape(shape) for v in (C, Cp, S, Sp))
    if lam_arr.ndim == 0:
        C, Cp, S, Sp = (float(v) for v in (C, Cp, S, Sp))
        return TransferValues(C, Cp, S, Sp, float(lam_arr))
    return TransferValues(C, Cp, S, Sp, lam_arr)


@dataclass(frozen=True)
class ResidualTable:
    rho: np.ndarray
    K: float
    r_C: np.ndarray
    r_Cp: np.ndarray
    r_S: np.ndarray
    r_Sp: np.ndarray

    def rows(self):
        return list(zip(self.rho, self.r_C, self.r_Cp, self.r_S, self.r_Sp))


def asymptotic_residuals(p: EdgePotential, a: float, rho_list) -> ResidualTable:
    """Scaled remainders of the large-rho expansions of C, C', S, S'.

    Each residual is the error of the two-term expansion multiplied by the
    power of rho that makes the expansion's own remainder o(1).
    """
    rho = np.asarray(rho_list, dtype=float)
    if np.any(rho <= 0) or np.any(np.diff(rho) <= 0):
        raise ValueError("rho values must be positive and increasing")
    K = p.half_integral()
    tv = transfer_at(p, a, rho**2)
    c, s = np.cos(rho * a), np.sin(rho * a)
    r_C = rho * np.abs(tv.C - c - K * s / rho)
    r_Cp = np.abs(tv.Cp - (-rho * s + K * c))
    r_S = rho**2 * np.abs(tv.S - (s / rho - K * c / rho**2))
    r_Sp = rho * np.abs(tv.Sp - c - K * s / rho)
    return ResidualTable(rho, K, r_C, r_Cp, r_S, r_Sp)
