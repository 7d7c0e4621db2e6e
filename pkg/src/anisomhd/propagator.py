"""Linear decay on the whole space, measured by frequency quadrature.

The linear part of the Duhamel formula is evaluated for closed-form initial
spectra. Since the mode matrix does not depend on xi1, norms are accumulated
as a tensor-product sum ordered xi1-first: for every (xi2, xi3) node the
xi1-integrals of the products of initial data are formed once, and each time
sample only needs the kernel on the two-dimensional (xi2, xi3) grid.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats

from .kernel import PhysicalParams, Wavevector, kernel_triple

SHELL_TOL = 1e-6
MIN_FIT_SAMPLES = 8


class QuadratureTruncationWarning(UserWarning):
    """The outer shell of the frequency box carries too much of an integral."""


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class AnalyticSpectrum:
    """Fourier transform of one vector field of initial data.

    ``gaussian_vector``: amplitude * exp(-(w1^2 xi1^2 + w2^2 xi2^2 + w3^2 xi3^2)/2),
    optionally Leray-projected pointwise. ``user_table``: ``table(xi1, xi2, xi3)``
    returns an array of shape (3, ...).
    """

    kind: str = "gaussian_vector"
    amplitude: tuple[float, float, float] = (1.0, 0.0, 0.0)
    widths: tuple[float, float, float] = (1.0, 1.0, 1.0)
    divergence_free_projected: bool = True
    table: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("gaussian_vector", "user_table"):
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if self.kind == "user_table" and self.table is None:
            raise ValueError("user_table spectrum needs a table callable")
        if any(w <= 0 for w in self.widths):
            raise ValueError("widths must be positive")

    def evaluate(self, xi1, xi2, xi3) -> np.ndarray:
        xi1, xi2, xi3 = (np.asarray(x, dtype=float) for x in (xi1, xi2, xi3))
        if self.kind == "user_table":
            xi1, xi2, xi3 = np.broadcast_arrays(xi1, xi2, xi3)
            v = np.asarray(self.table(xi1, xi2, xi3), dtype=complex)
        else:
            # separable: three small exponentials instead of one on the full broadcast shape
            w1, w2, w3 = self.widths
            g = np.exp(-0.5 * (w1 * xi1) ** 2) * np.exp(-0.5 * (w2 * xi2) ** 2) * np.exp(-0.5 * (w3 * xi3) ** 2)
            v = np.stack([amp * g for amp in self.amplitude])
            xi1, xi2, xi3 = np.broadcast_arrays(xi1, xi2, xi3)
        if self.divergence_free_projected:
            v = leray_pointwise(v, xi1, xi2, xi3)
        return v.astype(complex, copy=False)


def leray_pointwise(v: np.ndarray, xi1, xi2, xi3) -> np.ndarray:
    k2 = xi1**2 + xi2**2 + xi3**2
    with np.errstate(divide="ignore", invalid="ignore"):
        dot = (xi1 * v[0] + xi2 * v[1] + xi3 * v[2]) / np.where(k2 > 0, k2, 1.0)
    dot = np.where(k2 > 0, dot, 0.0)
    return np.stack([v[0] - xi1 * dot, v[1] - xi2 * dot, v[2] - xi3 * dot])


def evolve_linear(pair: tuple[AnalyticSpectrum, AnalyticSpectrum], xi, t, params: PhysicalParams):
    """(u_hat, b_hat)(xi, t) of the linear problem, each of shape (3, ...)."""
    xi = Wavevector.of(xi)
    u0 = pair[0].evaluate(xi.xi1, xi.xi2, xi.xi3)
    b0 = pair[1].evaluate(xi.xi1, xi.xi2, xi.xi3)
    K = kernel_triple(xi, params, t)
    return K.k1 * u0 + K.k2 * b0, K.k2 * u0 + K.k3 * b0


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    """Per-axis nodes and weights on [-xi_max, xi_max], identical on the three axes."""

    nodes: np.ndarray
    weights: np.ndarray
    xi_max: float
    name: str = "custom"

    @property
    def shell(self) -> np.ndarray:
        """Nodes in the outer half of the box along this axis."""
        return np.abs(self.nodes) >= 0.5 * self.xi_max

    @classmethod
    def graded_gauss(cls, r0=2.0**-12, xi_max=32.0, per_panel=12, name="graded_gauss"):
        """Gauss-Legendre panels [0, r0], [r0, 2 r0], ... doubling out to xi_max, mirrored."""
        edges = [0.0, r0]
        while edges[-1] < xi_max * (1 - 1e-12):
            edges.append(min(2 * edges[-1], xi_max))
        x, w = leggauss(per_panel)
        pos_n, pos_w = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            pos_n.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            pos_w.append(0.5 * (hi - lo) * w)
        pn = np.concatenate(pos_n)
        pw = np.concatenate(pos_w)
        nodes = np.concatenate([-pn[::-1], pn])
        weights = np.concatenate([pw[::-1], pw])
        return cls(nodes, weights, float(xi_max), name)

    @classmethod
    def uniform_geometric(cls, n_inner=64, n_outer=64, inner=1.0, xi_max=32.0, name="uniform_geometric"):
        """Uniform nodes on [-inner, inner] plus geometric ones out to xi_max; trapezoid weights."""
        core = np.linspace(-inner, inner, n_inner)
        core = 0.5 * (core - core[::-1])
        ratio = (xi_max / inner) ** (1.0 / n_outer)
        outer = inner * ratio ** np.arange(1, n_outer + 1)
        outer[-1] = xi_max
        nodes = np.concatenate([-outer[::-1], core, outer])
        gaps = np.diff(nodes)
        weights = np.zeros_like(nodes)
        weights[:-1] += 0.5 * gaps
        weights[1:] += 0.5 * gaps
        return cls(nodes, weights, float(xi_max), name)


QUADRATURE_PRESETS: dict[str, Callable[[], QuadratureGrid]] = {
    "default": lambda: QuadratureGrid.graded_gauss(per_panel=12, name="default"),
    "fine": lambda: QuadratureGrid.graded_gauss(per_panel=24, name="fine"),
    "coarse": lambda: QuadratureGrid.graded_gauss(r0=2.0**-10, per_panel=8, name="coarse"),
    "trapezoid": lambda: QuadratureGrid.uniform_geometric(name="trapezoid"),
}


def quadrature_preset(name: str) -> QuadratureGrid:
    try:
        return QUADRATURE_PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown quadrature preset {name!r}; known: {sorted(QUADRATURE_PRESETS)}") from None


def pairwise_sum(a: np.ndarray) -> float:
    # numpy's add.reduce is pairwise along the last (contiguous) axis
    return float(np.add.reduce(np.ravel(a)))


class _Moments:
    """xi1-integrals of the initial-data products on the (xi2, xi3) grid.

    For component i: uu = int |u0_i|^2 w, bb = int |b0_i|^2 w, ub = int conj(u0_i) b0_i w,
    with w = xi1^(2 a1) times the xi1 weight. ``*_shell`` restricts xi1 to the outer shell.
    """

    def __init__(self, pair, grid: QuadratureGrid, a1: int, chunk: int = 8):
        n = grid.nodes
        X2, X3 = np.meshgrid(n, n, indexing="ij")
        shape = (3,) + X2.shape
        self.uu = np.zeros(shape)
        self.bb = np.zeros(shape)
        self.ub = np.zeros(shape, dtype=complex)
        self.uu_shell = np.zeros(shape)
        self.bb_shell = np.zeros(shape)
        self.ub_shell = np.zeros(shape, dtype=complex)
        w1 = grid.weights * n ** (2 * a1)
        shell = grid.shell
        for start in range(0, n.size, chunk):
            sl = slice(start, start + chunk)
            x1 = n[sl][:, None, None]
            u0 = pair[0].evaluate(x1, X2[None], X3[None])
            b0 = pair[1].evaluate(x1, X2[None], X3[None])
            if not (np.iscomplexobj(u0) and (u0.imag.any() or b0.imag.any())):
                u0, b0 = u0.real, b0.real
            w = w1[sl]
            ws = w1[sl] * shell[sl]
            uu = u0 * np.conj(u0)
            bb = b0 * np.conj(b0)
            ub = np.conj(u0) * b0
            self.uu += np.einsum("j,cjkl->ckl", w, uu.real)
            self.bb += np.einsum("j,cjkl->ckl", w, bb.real)
            self.ub += np.einsum("j,cjkl->ckl", w, ub)
            if ws.any():
                self.uu_shell += np.einsum("j,cjkl->ckl", ws, uu.real)
                self.bb_shell += np.einsum("j,cjkl->ckl", ws, bb.real)
                self.ub_shell += np.einsum("j,cjkl->ckl", ws, ub)


FIELDS = {"ub": (0, 1), "u": (0,), "b": (1,)}


@dataclass
class NormValue:
    value: float
    shell_fraction: float

    @property
    def truncated(self) -> bool:
        return self.shell_fraction > SHELL_TOL


class LinearEvolution:
    """Linear evolution of an initial pair on a quadrature grid."""

    def __init__(self, pair, params: PhysicalParams, grid: QuadratureGrid | None = None):
        self.pair = tuple(pair)
        self.params = params
        self.grid = grid if grid is not None else quadrature_preset("default")
        n = self.grid.nodes
        self.X2, self.X3 = np.meshgrid(n, n, indexing="ij")
        self.W23 = np.outer(self.grid.weights, self.grid.weights)
        self.shell23 = self.grid.shell[:, None] | self.grid.shell[None, :]
        self._moments: dict[int, _Moments] = {}
        self._kernel_cache: tuple[float, object] | None = None

    def moments(self, a1: int) -> _Moments:
        if a1 not in self._moments:
            self._moments[a1] = _Moments(self.pair, self.grid, a1)
        return self._moments[a1]

    def at(self, t: float) -> "EvolvedSpectrum":
        return EvolvedSpectrum(self, float(t))

    def _kernel(self, t: float):
        if self._kernel_cache is None or self._kernel_cache[0] != t:
            K = kernel_triple(Wavevector(0.0, self.X2, self.X3), self.params, t)
            self._kernel_cache = (t, K)
        return self._kernel_cache[1]

    def norm(self, t: float, deriv=(0, 0, 0), components=(0, 1, 2), fields="ub") -> NormValue:
        a1, a2, a3 = deriv
        K = self._kernel(t)
        rows = [(K.k1, K.k2), (K.k2, K.k3)]
        q11 = np.zeros(self.X2.shape)
        q22 = np.zeros(self.X2.shape)
        q12 = np.zeros(self.X2.shape, dtype=complex)
        for r in FIELDS[fields]:
            ku, kb = rows[r]
            q11 += np.abs(ku) ** 2
            q22 += np.abs(kb) ** 2
            q12 += np.conj(ku) * kb
        M = self.moments(a1)
        comps = list(components)

        def density(uu, bb, ub):
            return (
                q11 * uu[comps].sum(axis=0)
                + q22 * bb[comps].sum(axis=0)
                + 2.0 * np.real(q12 * ub[comps].sum(axis=0))
            )

        weight = self.W23 * self.X2 ** (2 * a2) * self.X3 ** (2 * a3)
        dens = density(M.uu, M.bb, M.ub) * weight
        total = pairwise_sum(dens)
        shell = pairwise_sum(np.where(self.shell23, dens, 0.0)) + pairwise_sum(
            np.where(self.shell23, 0.0, density(M.uu_shell, M.bb_shell, M.ub_shell) * weight)
        )
        total = max(total, 0.0)
        frac = abs(shell) / total if total > 0 else 0.0
        return NormValue(math.sqrt(total), frac)


@dataclass(frozen=True)
class EvolvedSpectrum:
    evolution: LinearEvolution
    t: float


def weighted_l2_norm(spec: EvolvedSpectrum, deriv=(0, 0, 0), component_mask=(0, 1, 2), fields="ub") -> float:
    """sqrt of the integral of |xi^deriv|^2 |selected components|^2 over frequency space."""
    nv = spec.evolution.norm(spec.t, deriv, component_mask, fields)
    if nv.truncated:
        warnings.warn(
            f"outer shell holds {nv.shell_fraction:.2e} of the integral (> {SHELL_TOL:g}); "
            "enlarge xi_max",
            QuadratureTruncationWarning,
            stacklevel=2,
        )
    return nv.value


# ---------------------------------------------------------------------------
# decay series and fitting


@dataclass
class DecaySeries:
    label: str
    times: np.ndarray
    values: np.ndarray
    fit_window: tuple[float, float]
    fitted_exponent: float = float("nan")
    fit_stderr: float = float("nan")
    target: float | None = None
    truncated: bool = False

    @property
    def abs_error(self) -> float:
        if self.target is None:
            return float("nan")
        return abs(self.fitted_exponent - self.target)


def decay_exponent_fit(series: DecaySeries) -> DecaySeries:
    """Ordinary least squares of log(value) on log(t) inside the fit window."""
    t = np.asarray(series.times, dtype=float)
    v = np.asarray(series.values, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError(f"{series.label}: values must be positive and finite")
    lo, hi = series.fit_window
    sel = (t >= lo) & (t <= hi)
    if np.count_nonzero(sel) < MIN_FIT_SAMPLES:
        raise ValueError(
            f"{series.label}: {np.count_nonzero(sel)} samples in fit window, need {MIN_FIT_SAMPLES}"
        )
    res = stats.linregress(np.log(t[sel]), np.log(v[sel]))
    slope = float(res.slope)
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return replace(series, fitted_exponent=slope, fit_stderr=stderr)


@dataclass(frozen=True)
class CatalogEntry:
    deriv: tuple[int, int, int]
    components: tuple[int, ...]
    target: float


# rates of the linear semigroup for Leray-projected L^1 data; the d1 entries and
# the mixed nonlinear rates are not linear phenomena and are left out
CATALOG: dict[str, CatalogEntry] = {
    "l2_total": CatalogEntry((0, 0, 0), (0, 1, 2), -0.5),
    "d2_total": CatalogEntry((0, 1, 0), (0, 1, 2), -1.0),
    "d3_total": CatalogEntry((0, 0, 1), (0, 1, 2), -1.0),
    "d2d3_total": CatalogEntry((0, 1, 1), (0, 1, 2), -1.5),
    "d3d3_total": CatalogEntry((0, 0, 2), (0, 1, 2), -1.5),
    "u1_l2": CatalogEntry((0, 0, 0), (0,), -0.75),
    "d2_u1": CatalogEntry((0, 1, 0), (0,), -1.25),
    "d3_u1": CatalogEntry((0, 0, 1), (0,), -1.25),
    "d2d3_u1": CatalogEntry((0, 1, 1), (0,), -1.75),
    "d3d3_u1": CatalogEntry((0, 0, 2), (0,), -1.75),
    "d3d3d3_u1": CatalogEntry((0, 0, 3), (0,), -2.25),
}


def default_pair() -> tuple[AnalyticSpectrum, AnalyticSpectrum]:
    return (
        AnalyticSpectrum(amplitude=(1.0, 0.6, -0.4)),
        AnalyticSpectrum(amplitude=(0.3, -0.8, 0.5)),
    )


@dataclass
class DecayConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    pair: tuple[AnalyticSpectrum, AnalyticSpectrum] = field(default_factory=default_pair)
    quadrature: str = "default"
    t_range: tuple[float, float] = (10.0, 2000.0)
    samples_per_decade: int = 20
    fit_window: tuple[float, float] = (50.0, 2000.0)
    catalog: Sequence[str] = tuple(CATALOG)

    def times(self) -> np.ndarray:
        lo, hi = self.t_range
        n = int(round(self.samples_per_decade * math.log10(hi / lo))) + 1
        return np.geomspace(lo, hi, n)


def decay_catalog_run(config: DecayConfig, evolution: LinearEvolution | None = None) -> list[DecaySeries]:
    unknown = [name for name in config.catalog if name not in CATALOG]
    if unknown:
        raise ValueError(f"unknown catalog entries {unknown}; known: {sorted(CATALOG)}")
    if evolution is None:
        evolution = LinearEvolution(config.pair, config.params, quadrature_preset(config.quadrature))
    times = config.times()
    values = {name: np.empty(times.size) for name in config.catalog}
    truncated = {name: False for name in config.catalog}
    for j, t in enumerate(times):
        for name in config.catalog:
            entry = CATALOG[name]
            nv = evolution.norm(t, entry.deriv, entry.components)
            values[name][j] = nv.value
            truncated[name] |= nv.truncated
    out = []
    for name in config.catalog:
        s = DecaySeries(
            label=name,
            times=times,
            values=values[name],
            fit_window=config.fit_window,
            target=CATALOG[name].target,
            truncated=truncated[name],
        )
        out.append(decay_exponent_fit(s))
    return out


def write_series_csv(path, series: Sequence[DecaySeries]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "t", "value"])
        for s in series:
            for t, v in zip(s.times, s.values):
                w.writerow([s.label, repr(float(t)), repr(float(v))])


def write_summary_csv(path, series: Sequence[DecaySeries]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "exponent", "stderr", "target", "abs_error"])
        for s in series:
            target = "" if s.target is None else repr(float(s.target))
            w.writerow(
                [s.label, repr(s.fitted_exponent), repr(s.fit_stderr), target, repr(s.abs_error)]
            )
