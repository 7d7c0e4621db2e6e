"""Numerical checks of anisotropic product inequalities, heat-type decay and time-convolution bounds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .propagator import (
    AnalyticSpectrum,
    DecaySeries,
    QuadratureGrid,
    QuadratureTruncationWarning,
    SHELL_TOL,
    decay_exponent_fit,
    quadrature_preset,
)

AGMON_CONSTANT = math.sqrt(2.0)
TRIPLE_THRESHOLD = 2.0 * math.sqrt(2.0)
QUADRUPLE_THRESHOLD = 8.0
TAIL_TOL = 1e-8
EXPONENT_TOL = 0.05


@dataclass
class InequalityResult:
    name: str
    samples: int
    worst_ratio: float
    threshold: float
    skipped: int = 0
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.worst_ratio <= self.threshold)


def write_results_csv(path, results: Iterable[InequalityResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "samples", "worst_ratio", "threshold", "pass"])
        for r in results:
            w.writerow([r.name, r.samples, repr(float(r.worst_ratio)), repr(float(r.threshold)), str(r.passed).lower()])


# ---------------------------------------------------------------------------
# spectral calculus on uniform periodic grids


@dataclass(frozen=True)
class Box:
    """Uniform periodic sampling of [-L/2, L/2) per axis."""

    n: tuple[int, ...]
    length: tuple[float, ...]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for n, L in zip(self.n, self.length))

    def axes(self) -> list[np.ndarray]:
        return [(-0.5 + np.arange(n) / n) * L for n, L in zip(self.n, self.length)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij", sparse=True)

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))


def spectral_derivative(f: np.ndarray, box: Box, axis: int) -> np.ndarray:
    n, L = box.n[axis], box.length[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, L / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(f, axis=axis), axis=axis).real


def l2(f: np.ndarray, box: Box) -> float:
    return math.sqrt(float(np.sum(f * f)) * box.cell)


def h1(f: np.ndarray, box: Box) -> float:
    total = l2(f, box) ** 2
    for a in range(f.ndim):
        total += l2(spectral_derivative(f, box, a), box) ** 2
    return math.sqrt(total)


def boundary_fraction(f: np.ndarray, width: float = 0.05) -> float:
    """Share of the squared mass within ``width`` (relative) of the box faces."""
    total = float(np.sum(f * f))
    if total == 0:
        return 0.0
    inner = f
    for a in range(f.ndim):
        m = max(1, int(width * f.shape[a]))
        inner = np.take(inner, np.arange(m, f.shape[a] - m), axis=a)
    return (total - float(np.sum(inner * inner))) / total


def sup_interpolated(g: np.ndarray, factor: int = 8) -> float:
    """max |g| of the trigonometric interpolant, sampled on a grid ``factor`` times finer."""
    n = g.size
    G = np.fft.fft(g)
    pad = np.zeros(n * factor, dtype=complex)
    h = n // 2
    pad[:h] = G[:h]
    pad[-h:] = G[-h:]
    return float(np.abs(np.fft.ifft(pad)).max() * factor)


# ---------------------------------------------------------------------------
# product inequalities


def agmon_ratio(g: np.ndarray, box: Box) -> float:
    norm = l2(g, box)
    dnorm = l2(spectral_derivative(g, box, 0), box)
    return sup_interpolated(g) / math.sqrt(norm * dnorm)


def check_agmon_1d(samples: Sequence[np.ndarray], box: Box) -> InequalityResult:
    """Worst ||g||_inf / (||g||^(1/2) ||g'||^(1/2)) over the samples; threshold sqrt(2)."""
    worst, used, skipped = 0.0, 0, 0
    for g in samples:
        g = np.asarray(g, dtype=float)
        if not np.any(g):
            skipped += 1
            continue
        if boundary_fraction(g) > TAIL_TOL:
            raise ValueError("sample is not localized inside the window (tail mass above 1e-8)")
        worst = max(worst, agmon_ratio(g, box))
        used += 1
    return InequalityResult("agmon_1d", used, worst, AGMON_CONSTANT, skipped)


def triple_ratio(f, g, h, box: Box) -> float:
    lhs = float(np.sum(np.abs(f * g * h))) * box.cell
    rhs = 1.0
    for v, axis in ((f, 0), (g, 1), (h, 2)):
        rhs *= math.sqrt(l2(v, box) * l2(spectral_derivative(v, box, axis), box))
    return lhs / rhs


def quadruple_ratio(e, f, g, h, box: Box, i: int, k: int) -> float:
    if i == k:
        raise ValueError("axes i and k must differ")
    lhs = float(np.sum(np.abs(e * f * g * h))) * box.cell
    rhs = 1.0
    for v in (e, f):
        rhs *= math.sqrt(l2(v, box) * l2(spectral_derivative(v, box, i), box))
    for v in (g, h):
        rhs *= math.sqrt(h1(v, box) * h1(spectral_derivative(v, box, k), box))
    return lhs / rhs


def _check_products(name, tuples, box, ratio_fn, threshold):
    worst, used, skipped = 0.0, 0, 0
    for fields in tuples:
        fields = [np.asarray(v, dtype=float) for v in fields]
        if any(not np.any(v) for v in fields):
            skipped += 1
            continue
        if any(boundary_fraction(v) > TAIL_TOL for v in fields):
            raise ValueError(f"{name}: a field carries non-negligible mass at the box boundary")
        worst = max(worst, ratio_fn(*fields, box))
        used += 1
    return InequalityResult(name, used, worst, threshold, skipped)


def check_triple_product(samples: Sequence[tuple], box: Box) -> InequalityResult:
    """Worst int|fgh| / prod (||v||^(1/2) ||d_a v||^(1/2)), with a = 1, 2, 3 for f, g, h."""
    return _check_products("triple_product", samples, box, triple_ratio, TRIPLE_THRESHOLD)


def check_quadruple_product(samples: Sequence[tuple], box: Box, axes=(0, 2)) -> InequalityResult:
    """Worst int|efgh| over the L2 factors of e, f in direction i and H1 factors of g, h in direction k."""
    i, k = axes
    return _check_products(
        f"quadruple_product_{i + 1}{k + 1}",
        samples,
        box,
        lambda e, f, g, h, b: quadruple_ratio(e, f, g, h, b, i, k),
        QUADRUPLE_THRESHOLD,
    )


# sample generators


def gaussian_bump(box: Box, center, widths, amplitude=1.0) -> np.ndarray:
    mesh = box.mesh()
    arg = sum(((x - c) / w) ** 2 for x, c, w in zip(mesh, center, widths))
    return amplitude * np.exp(-0.5 * arg)


def random_bumps(box: Box, rng: np.random.Generator, n_bumps=3, width_range=(0.4, 1.5), oscillate=True):
    """Sum of randomly placed Gaussians, some modulated by a cosine, well inside the box."""
    f = np.zeros(box.n)
    mesh = box.mesh()
    for _ in range(n_bumps):
        widths = rng.uniform(*width_range, size=len(box.n))
        center = [rng.uniform(-0.12 * L, 0.12 * L) for L in box.length]
        bump = gaussian_bump(box, center, widths, rng.uniform(-1.0, 1.0))
        if oscillate and rng.random() < 0.5:
            axis = rng.integers(len(box.n))
            bump = bump * np.cos(rng.uniform(0.0, 3.0) * (mesh[axis] - center[axis]))
        f = f + bump
    return f


def agmon_samples(n_samples: int, seed: int, box: Box | None = None) -> tuple[list[np.ndarray], Box]:
    box = box or Box((512,), (40.0,))
    rng = np.random.default_rng(seed)
    return [random_bumps(box, rng, n_bumps=rng.integers(1, 4)) for _ in range(n_samples)], box


def product_samples(n_samples: int, arity: int, seed: int, box: Box | None = None):
    box = box or Box((48, 48, 48), (24.0, 24.0, 24.0))
    rng = np.random.default_rng(seed)
    # matched Gaussians first: overlapping factors are the hard cases
    out = [tuple(gaussian_bump(box, (0, 0, 0), (1, 1, 1)) for _ in range(arity))]
    for _ in range(n_samples - 1):
        widths = rng.uniform(0.5, 1.5, size=3)
        base = gaussian_bump(box, (0, 0, 0), widths)
        out.append(tuple(base * (1 + 0.3 * random_bumps(box, rng, n_bumps=1)) for _ in range(arity)))
    return out, box


# ---------------------------------------------------------------------------
# heat-type decay of the (xi2, xi3) semigroup


def _xi1_integrated(spectrum: AnalyticSpectrum, grid: QuadratureGrid, chunk: int = 8):
    """int |spectrum_i|^2 dxi1 on the (xi2, xi3) grid, plus its outer-shell part."""
    n = grid.nodes
    X2, X3 = np.meshgrid(n, n, indexing="ij")
    total = np.zeros((3,) + X2.shape)
    shell = np.zeros_like(total)
    for start in range(0, n.size, chunk):
        sl = slice(start, start + chunk)
        v = spectrum.evaluate(n[sl][:, None, None], X2[None], X3[None])
        sq = np.abs(v) ** 2
        total += np.einsum("j,cjkl->ckl", grid.weights[sl], sq)
        shell += np.einsum("j,cjkl->ckl", grid.weights[sl] * grid.shell[sl], sq)
    return total, shell


def semigroup_decay_series(
    spectrum: AnalyticSpectrum,
    power: float,
    component: int | None,
    label: str,
    target: float,
    grid: QuadratureGrid | None = None,
    t_range=(10.0, 2000.0),
    samples_per_decade: int = 20,
    fit_window=(50.0, 2000.0),
) -> DecaySeries:
    """Fit of t -> || |xi_nu|^power exp(-xi_nu^2 t) spectrum ||_{L2} over t."""
    grid = grid or quadrature_preset("coarse")
    total, shell = _xi1_integrated(spectrum, grid)
    comps = slice(None) if component is None else slice(component, component + 1)
    M = total[comps].sum(axis=0)
    Ms = shell[comps].sum(axis=0)
    n = grid.nodes
    X2, X3 = np.meshgrid(n, n, indexing="ij")
    W = np.outer(grid.weights, grid.weights)
    nu2 = X2**2 + X3**2
    shell23 = grid.shell[:, None] | grid.shell[None, :]
    n_t = int(round(samples_per_decade * math.log10(t_range[1] / t_range[0]))) + 1
    times = np.geomspace(*t_range, n_t)
    values = np.empty(times.size)
    truncated = False
    for j, t in enumerate(times):
        m2 = nu2**power * np.exp(-2.0 * nu2 * t) * W
        dens = m2 * M
        tot = float(np.add.reduce(dens.ravel()))
        sh = float(np.add.reduce(np.where(shell23, dens, m2 * Ms).ravel()))
        values[j] = math.sqrt(tot)
        truncated |= tot > 0 and sh / tot > SHELL_TOL
    if truncated:
        import warnings

        warnings.warn(f"{label}: outer shell exceeds tolerance", QuadratureTruncationWarning, stacklevel=2)
    series = DecaySeries(label, times, values, tuple(fit_window), target=target, truncated=truncated)
    return decay_exponent_fit(series)


def heat_decay_check(alpha: float, grid: QuadratureGrid | None = None, spectrum: AnalyticSpectrum | None = None) -> DecaySeries:
    """Decay of |xi_nu|^alpha e^{-xi_nu^2 t} applied to a scalar Gaussian; target -(1+alpha)/2."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    spectrum = spectrum or AnalyticSpectrum(amplitude=(1.0, 0.0, 0.0), divergence_free_projected=False)
    return semigroup_decay_series(spectrum, alpha, 0, f"heat_alpha{alpha:g}", -(1 + alpha) / 2, grid)


def heat_closed_form(alpha: float, t) -> np.ndarray:
    """Exact norm for the datum e^{-|xi|^2/2}: (pi^(3/2) Gamma(alpha+1))^(1/2) (2t+1)^(-(alpha+1)/2)."""
    t = np.asarray(t, dtype=float)
    return math.sqrt(math.pi**1.5 * gamma_fn(alpha + 1)) * (2 * t + 1) ** (-(alpha + 1) / 2)


def divfree_decay_check(beta: float, grid: QuadratureGrid | None = None, spectrum: AnalyticSpectrum | None = None) -> DecaySeries:
    """Same semigroup on the first component of a Leray-projected Gaussian; target -(3+2 beta)/4."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    spectrum = spectrum or AnalyticSpectrum(amplitude=(1.0, 0.6, -0.4), divergence_free_projected=True)
    return semigroup_decay_series(spectrum, beta, 0, f"divfree_beta{beta:g}", -(3 + 2 * beta) / 4, grid)


def divergence_free_gain(order: float = 0.0, grid: QuadratureGrid | None = None) -> tuple[float, DecaySeries, DecaySeries]:
    """Divergence-free exponent minus heat exponent at equal derivative order; expected -1/4."""
    grid = grid or quadrature_preset("coarse")
    heat = heat_decay_check(order, grid)
    div = divfree_decay_check(order, grid)
    return div.fitted_exponent - heat.fitted_exponent, heat, div


# ---------------------------------------------------------------------------
# time-convolution bounds


def convolution_id(t: float, s1: float, s2: float) -> float:
    """int_0^t (1+t-tau)^-s1 (1+tau)^-s2 dtau."""
    f = lambda tau: (1 + t - tau) ** (-s1) * (1 + tau) ** (-s2)
    pts = [p for p in (1.0, 0.5 * t, t - 1.0) if 0 < p < t]
    val, _ = integrate.quad(f, 0.0, t, points=pts or None, epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def convolution_ed(t: float, c: float, s: float) -> float:
    """int_0^t exp(-c(t-tau)) (1+tau)^-s dtau, split where the exponential switches on."""
    f = lambda tau: math.exp(-c * (t - tau)) * (1 + tau) ** (-s)
    # below the cut the integrand is under e^-80 and the piece is dropped
    cut = max(0.0, t - 80.0 / c)
    return integrate.quad(f, cut, t, epsabs=0.0, epsrel=1e-10, limit=400)[0]


def id_branch(s1: float, s2: float) -> tuple[str, float]:
    if s2 > 1:
        return "s2>1", -s1
    if s2 == 1:
        return "s2=1", -s1
    return "s2<1", 1 - s1 - s2


def convolution_bound_check(
    s1: float,
    s2: float,
    branch: str = "ID",
    t_range=(1.0, 1e4),
    per_decade: int = 40,
    fit_decades: float = 2.0,
) -> InequalityResult:
    """Fit the growth law of the convolution integral and compare with the branch exponent.

    ``branch="ID"``: polynomial kernels with exponents (s1, s2), 0 < s1 <= s2; for s2 = 1 the
    integral is divided by log(1+t) before fitting. ``branch="ED"``: exponential kernel with
    rate c = s1 against (1+tau)^-s2; target -s2.
    worst_ratio holds |fitted - target| and the threshold is the exponent tolerance.
    """
    if branch == "ID":
        if not 0 < s1 <= s2:
            raise ValueError("need 0 < s1 <= s2")
        label, target = id_branch(s1, s2)
        fn = lambda t: convolution_id(t, s1, s2)
    elif branch == "ED":
        if not (s1 > 0 and s2 > 0):
            raise ValueError("need c > 0 and s > 0")
        label, target = "exp", -s2
        fn = lambda t: convolution_ed(t, s1, s2)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    n = int(round(per_decade * math.log10(t_range[1] / t_range[0]))) + 1
    times = np.geomspace(*t_range, n)
    vals = np.array([fn(t) for t in times])
    if branch == "ID" and s2 == 1:
        vals = vals / np.log1p(times)
    sel = times >= t_range[1] / 10**fit_decades
    slope = float(np.polyfit(np.log1p(times[sel]), np.log(vals[sel]), 1)[0])
    name = f"{branch}_s1={s1:g}_s2={s2:g}"
    return InequalityResult(
        name,
        int(times.size),
        abs(slope - target),
        EXPONENT_TOL,
        detail={"exponent": slope, "target": target, "branch": label},
    )


ID_SWEEP = ((0.1, 0.2, 0.3, 0.4, 0.5), (0.5, 1.0, 1.5, 2.0, 3.0))
ED_SWEEP = ((0.5, 1.0, 2.0, 4.0, 8.0), (0.25, 0.5, 1.0, 5.0 / 3.0, 3.0))


def convolution_sweep(branch: str = "ID") -> list[InequalityResult]:
    first, second = ID_SWEEP if branch == "ID" else ED_SWEEP
    return [convolution_bound_check(a, b, branch) for a in first for b in second]
