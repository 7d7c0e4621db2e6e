"""Norms, energy accounting and residual checks for solver states."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.integrate import trapezoid

from .kernel import PhysicalParams
from .solver import Grid, SpectralState


@dataclass(frozen=True)
class NormSpec:
    """What to measure: derivative multi-index, component selection and norm kind."""

    deriv: tuple[int, int, int] = (0, 0, 0)
    components: str | tuple[int, ...] = "all"
    kind: str = "L2"
    k: int = 0

    def component_indices(self) -> tuple[int, ...]:
        if self.components == "all":
            return (0, 1, 2)
        if self.components == "u1b1":
            return (0,)
        return tuple(self.components)


def _spectral_sum(grid: Grid, density: np.ndarray) -> float:
    """Sum of a per-mode density over the full spectrum, times the box volume."""
    return float(np.sum(grid.half_weights() * density)) * grid.volume


def _multiplier(grid: Grid, deriv):
    x = grid.wavevectors()
    m = np.ones(grid.spectral_shape)
    for axis, a in enumerate(deriv):
        if a:
            m = m * np.abs(x[axis]) ** (2 * a)
    return m


def field_norm(state: SpectralState, deriv=(0, 0, 0), components=(0, 1, 2), fields="ub") -> float:
    """L2 norm of the selected derivative and components of u and/or b."""
    dens = np.zeros(state.grid.spectral_shape)
    sel = [state.u_hat if f == "u" else state.b_hat for f in fields]
    for v in sel:
        for i in components:
            dens += np.abs(v[i]) ** 2
    return math.sqrt(_spectral_sum(state.grid, dens * _multiplier(state.grid, deriv)))


def homogeneous_norm(v_hat: np.ndarray, grid: Grid, k: int) -> float:
    """Homogeneous H^k seminorm of one scalar spectrum."""
    x1, x2, x3 = grid.wavevectors()
    k2 = x1**2 + x2**2 + x3**2
    return math.sqrt(_spectral_sum(grid, k2**k * np.abs(v_hat) ** 2))


def sobolev_norm(state: SpectralState, k: int) -> float:
    """sqrt(sum (1+|xi|^2)^k (|u_hat|^2 + |b_hat|^2) * volume)."""
    if not 0 <= k <= 4:
        raise ValueError("k must lie in [0, 4]")
    x1, x2, x3 = state.grid.wavevectors()
    w = (1.0 + x1**2 + x2**2 + x3**2) ** k
    dens = (np.abs(state.u_hat) ** 2).sum(axis=0) + (np.abs(state.b_hat) ** 2).sum(axis=0)
    return math.sqrt(_spectral_sum(state.grid, w * dens))


def derivative_sum_norm(state: SpectralState, k: int) -> float:
    """sqrt of the sum over all partial derivatives of order <= k of their squared L2 norms."""
    total = 0.0
    for order in range(k + 1):
        for idx in product(range(3), repeat=order):
            deriv = tuple(idx.count(a) for a in range(3))
            total += field_norm(state, deriv, (0, 1, 2), "ub") ** 2
    return math.sqrt(total)


def mixed_norm_l2x1_l1x23(f: np.ndarray, grid: Grid) -> float:
    """L1 over (x2, x3) for every x1-slice, then L2 over x1 (periodic trapezoid)."""
    h1, h2, h3 = grid.spacing
    slab = np.abs(f).sum(axis=(1, 2)) * h2 * h3
    return math.sqrt(float((slab**2).sum()) * h1)


def mixed_norm_l1x23_l2x1(f: np.ndarray, grid: Grid) -> float:
    """L2 over x1 first, then L1 over (x2, x3): the larger side of the Minkowski ordering."""
    h1, h2, h3 = grid.spacing
    col = np.sqrt((np.abs(f) ** 2).sum(axis=0) * h1)
    return float(col.sum()) * h2 * h3


def l2_physical(f: np.ndarray, grid: Grid) -> float:
    h1, h2, h3 = grid.spacing
    return math.sqrt(float((np.abs(f) ** 2).sum()) * h1 * h2 * h3)


def minkowski_holds(f: np.ndarray, grid: Grid, rtol: float = 1e-12) -> bool:
    return mixed_norm_l2x1_l1x23(f, grid) <= mixed_norm_l1x23_l2x1(f, grid) * (1 + rtol)


def holder_holds(f: np.ndarray, grid: Grid, rtol: float = 1e-12) -> bool:
    """mixed norm <= sqrt(L2 L3) * ||f||_{L2} on the box (Cauchy-Schwarz in x2, x3)."""
    bound = math.sqrt(grid.L2 * grid.L3) * l2_physical(f, grid)
    return mixed_norm_l2x1_l1x23(f, grid) <= bound * (1 + rtol)


def u1_inequality_ratio(state: SpectralState, k: int) -> float:
    """||d1 u1||_{H^k} / (||d2 u2||_{H^k} + ||d3 u3||_{H^k}) in homogeneous norms; <= 1 when div u = 0."""
    g = state.grid
    x = g.wavevectors()
    lhs = homogeneous_norm(1j * x[0] * state.u_hat[0], g, k)
    rhs = homogeneous_norm(1j * x[1] * state.u_hat[1], g, k) + homogeneous_norm(1j * x[2] * state.u_hat[2], g, k)
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs


# ---------------------------------------------------------------------------
# energy ledger


def _h3_sq(grid, v_hat, deriv_axes, scale):
    """scale * sum over listed axes of ||d_axis v||_{H^3}^2 (multiplier form)."""
    x = grid.wavevectors()
    k2 = x[0] ** 2 + x[1] ** 2 + x[2] ** 2
    dens = np.zeros(grid.spectral_shape)
    for a in deriv_axes:
        dens += x[a] ** 2 * (np.abs(v_hat) ** 2).sum(axis=0)
    return scale * _spectral_sum(grid, (1 + k2) ** 3 * dens)


@dataclass
class LedgerSample:
    t: float
    l2_sq: float
    dissipation: float
    e1_rate: float
    e2_rate: float
    h3: float


@dataclass
class EnergyLedger:
    """Time samples with trapezoid integrals of the dissipation and energy rates."""

    params: PhysicalParams = field(default_factory=PhysicalParams)
    samples: list[LedgerSample] = field(default_factory=list)
    diss_integral: list[float] = field(default_factory=list)
    e1_integral: list[float] = field(default_factory=list)
    e2_running: list[float] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def l2_sq(self) -> np.ndarray:
        return np.array([s.l2_sq for s in self.samples])

    @property
    def h3(self) -> np.ndarray:
        return np.array([s.h3 for s in self.samples])

    @property
    def balance_residual(self) -> np.ndarray:
        """(||(u,b)||^2 + 2 int dissipation - ||(u0,b0)||^2) / ||(u0,b0)||^2 per sample."""
        l2 = self.l2_sq
        if l2.size == 0:
            return l2
        ref = l2[0] if l2[0] > 0 else 1.0
        return (l2 + 2 * np.array(self.diss_integral) - l2[0]) / ref

    @property
    def e1(self) -> float:
        """sup H^3 norm squared plus twice the integrated H^3 dissipation."""
        if not self.samples:
            return 0.0
        return float(self.h3.max() ** 2 + 2 * self.e1_integral[-1])

    @property
    def e2(self) -> float:
        return self.e2_running[-1] if self.e2_running else 0.0

    def rows(self):
        res = self.balance_residual
        for j, s in enumerate(self.samples):
            yield (s.t, s.l2_sq, self.diss_integral[j], float(res[j]), s.h3, self.e2_running[j])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "l2_sq", "diss_integral", "balance_residual", "h3", "e2_running"])
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])

    def summary(self) -> dict:
        res = self.balance_residual
        return {
            "samples": len(self.samples),
            "t_final": self.samples[-1].t if self.samples else 0.0,
            "l2_sq_final": self.samples[-1].l2_sq if self.samples else 0.0,
            "max_abs_balance_residual": float(np.abs(res).max()) if res.size else 0.0,
            "h3_initial": self.samples[0].h3 if self.samples else 0.0,
            "h3_max": float(self.h3.max()) if self.samples else 0.0,
            "e1": self.e1,
            "e2": self.e2,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def energy_ledger_update(ledger: EnergyLedger, state: SpectralState) -> EnergyLedger:
    """Append a sample for ``state`` and advance the trapezoid integrals."""
    g = state.grid
    mu, eta = ledger.params.mu, ledger.params.eta
    if ledger.samples and not state.time > ledger.samples[-1].t:
        raise ValueError(f"time {state.time} does not increase past {ledger.samples[-1].t}")
    dissipation = (
        mu * field_norm(state, (0, 0, 1), fields="u") ** 2
        + eta * field_norm(state, (0, 1, 0), fields="b") ** 2
        + eta * field_norm(state, (0, 0, 1), fields="b") ** 2
    )
    e1_rate = _h3_sq(g, state.u_hat, (2,), mu) + _h3_sq(g, state.b_hat, (1, 2), eta)
    x = g.wavevectors()
    k2 = x[0] ** 2 + x[1] ** 2 + x[2] ** 2
    e2_rate = _spectral_sum(g, (1 + k2) ** 2 * x[1] ** 2 * (np.abs(state.u_hat) ** 2).sum(axis=0))
    sample = LedgerSample(
        t=float(state.time),
        l2_sq=field_norm(state) ** 2,
        dissipation=dissipation,
        e1_rate=e1_rate,
        e2_rate=e2_rate,
        h3=sobolev_norm(state, 3),
    )
    if ledger.samples:
        prev = ledger.samples[-1]
        dt = sample.t - prev.t
        ledger.diss_integral.append(ledger.diss_integral[-1] + 0.5 * dt * (prev.dissipation + dissipation))
        ledger.e1_integral.append(ledger.e1_integral[-1] + 0.5 * dt * (prev.e1_rate + e1_rate))
        ledger.e2_running.append(ledger.e2_running[-1] + 0.5 * dt * (prev.e2_rate + e2_rate))
    else:
        ledger.diss_integral.append(0.0)
        ledger.e1_integral.append(0.0)
        ledger.e2_running.append(0.0)
    ledger.samples.append(sample)
    return ledger


def time_integral(t: np.ndarray, y: np.ndarray) -> float:
    return float(trapezoid(y, t))
