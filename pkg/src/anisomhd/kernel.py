"""Per-frequency linear semigroup of the perturbed MHD system.

For each wavevector the pair (u_i, b_i) obeys d/dt (u_i, b_i) = A (u_i, b_i) with

    A = [[-mu*xi3^2,  i*xi2],
         [ i*xi2,    -eta*(xi2^2 + xi3^2)]]

Everything here is vectorised: a ``Wavevector`` may hold arrays of equal shape
(or broadcastable ones), and every function returns arrays of the broadcast
shape. Scalars go in and come out as 0-d arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# |lambda2 - lambda1| <= DEGENERATE_TOL * max(1, s) flags a (near) double root
DEGENERATE_TOL = 1e-6
# |Gamma t^2 / 4| below this switches to the power series in z = Gamma t^2 / 4
SERIES_Z_MAX = 1.0
_SERIES_TERMS = 14


@dataclass(frozen=True)
class PhysicalParams:
    mu: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        for name in ("mu", "eta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class Wavevector:
    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray

    def __post_init__(self):
        for name in ("xi1", "xi2", "xi3"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, v)

    @property
    def xi_nu_sq(self) -> np.ndarray:
        return self.xi2**2 + self.xi3**2

    def __neg__(self) -> "Wavevector":
        return Wavevector(-self.xi1, -self.xi2, -self.xi3)

    @classmethod
    def of(cls, xi) -> "Wavevector":
        if isinstance(xi, Wavevector):
            return xi
        x1, x2, x3 = xi
        return cls(x1, x2, x3)


@dataclass(frozen=True)
class EigenData:
    gamma: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    s_trace: np.ndarray
    q_det: np.ndarray
    degenerate: np.ndarray
    oscillatory: np.ndarray
    # split of the diagonal: a = mu xi3^2, c = eta xi_nu^2, and xi2
    a: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    xi2: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class PropagatorScalars:
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    t: np.ndarray


@dataclass(frozen=True)
class KernelTriple:
    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray

    def matrix(self) -> np.ndarray:
        """Stack into (..., 2, 2)."""
        k1, k2, k3 = np.broadcast_arrays(self.k1, self.k2, self.k3)
        out = np.empty(k1.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = k1
        out[..., 0, 1] = k2
        out[..., 1, 0] = k2
        out[..., 1, 1] = k3
        return out


class DomainTag(Enum):
    Omega1 = "Omega1"
    Omega21 = "Omega21"
    Omega22 = "Omega22"
    Omega23 = "Omega23"


# integer codes used by the vectorised classifier
TAG_CODES = {DomainTag.Omega1: 0, DomainTag.Omega21: 1, DomainTag.Omega22: 2, DomainTag.Omega23: 3}
TAGS_BY_CODE = {v: k for k, v in TAG_CODES.items()}


def generator(xi, p: PhysicalParams) -> np.ndarray:
    """The 2x2 mode matrix A, shape (..., 2, 2)."""
    xi = Wavevector.of(xi)
    a = p.mu * xi.xi3**2
    c = p.eta * xi.xi_nu_sq
    a, c, x2 = np.broadcast_arrays(a, c, xi.xi2)
    out = np.empty(a.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = -a
    out[..., 0, 1] = 1j * x2
    out[..., 1, 0] = 1j * x2
    out[..., 1, 1] = -c
    return out


def eigen_data(xi, p: PhysicalParams) -> EigenData:
    xi = Wavevector.of(xi)
    a = p.mu * xi.xi3**2
    c = p.eta * xi.xi_nu_sq
    a, c, x2 = np.broadcast_arrays(a, c, xi.xi2)
    s = a + c
    q = a * c + x2**2
    d = a - c
    # Gamma = s^2 - 4q = (a - c)^2 - 4 xi2^2, factored to keep the root accurate
    ax2 = np.abs(x2)
    gamma = (d - 2 * ax2) * (d + 2 * ax2)

    root = np.sqrt(np.abs(gamma))
    real = gamma >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        # lambda2 = -2q / (s + sqrt(Gamma)) avoids cancellation when q << s^2
        den = s + root
        lam2_real = np.where(den > 0, -2.0 * q / np.where(den > 0, den, 1.0), 0.0)
    lam1 = np.where(real, -0.5 * (s + root), -0.5 * s - 0.5j * root).astype(complex)
    lam2 = np.where(real, lam2_real, -0.5 * s + 0.5j * root).astype(complex)

    degenerate = root <= DEGENERATE_TOL * np.maximum(1.0, s)
    return EigenData(
        gamma=gamma,
        lambda1=lam1,
        lambda2=lam2,
        s_trace=s,
        q_det=q,
        degenerate=degenerate,
        oscillatory=~real,
        a=a,
        c=c,
        xi2=x2,
    )


def _cosh_sinhc_series(z: np.ndarray):
    """C(z) = cosh(sqrt z) and S(z) = sinh(sqrt z)/sqrt z for |z| <= 1.

    Both are entire in z, so the double root z = 0 needs no special case.
    """
    C = np.zeros_like(z)
    S = np.zeros_like(z)
    term_c = np.ones_like(z)
    term_s = np.ones_like(z)
    for k in range(_SERIES_TERMS):
        C += term_c
        S += term_s
        term_c = term_c * z / ((2 * k + 1) * (2 * k + 2))
        term_s = term_s * z / ((2 * k + 2) * (2 * k + 3))
    return C, S


class _Parts:
    """Shared pieces of G and K at one (xi, t).

    Three evaluation routes, chosen per entry:
      series   |z| <= 1: e^{-st/2} (C(z), t S(z)) with z = Gamma t^2 / 4
      trig     Gamma < 0, |z| > 1: cos / sin of sqrt(-Gamma) t / 2
      split    Gamma > 0,  z > 1: the two real exponentials separately
    """

    def __init__(self, e: EigenData, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be non-negative")
        gamma, s = np.broadcast_arrays(e.gamma, e.s_trace)
        t = np.broadcast_to(t, np.broadcast_shapes(gamma.shape, t.shape))
        gamma = np.broadcast_to(gamma, t.shape)
        s = np.broadcast_to(s, t.shape)
        self.t = t
        z = 0.25 * gamma * t**2
        self.series = np.abs(z) <= SERIES_Z_MAX
        self.trig = (~self.series) & (gamma < 0)
        self.split = (~self.series) & (gamma > 0)

        damp = np.exp(-0.5 * s * t)
        C = np.zeros(t.shape)
        tS = np.zeros(t.shape)

        if self.series.any():
            Cs, Ss = _cosh_sinhc_series(z[self.series])
            C[self.series] = Cs
            tS[self.series] = Ss * t[self.series]
        if self.trig.any():
            om = 0.5 * np.sqrt(-gamma[self.trig])
            tt = t[self.trig]
            C[self.trig] = np.cos(om * tt)
            tS[self.trig] = np.sin(om * tt) / om
        self.damp = damp
        self.C = C
        self.tS = tS

        lam1 = np.broadcast_to(e.lambda1, t.shape).real
        lam2 = np.broadcast_to(e.lambda2, t.shape).real
        self.e1 = np.exp(lam1 * t)
        self.e2 = np.exp(lam2 * t)
        self.delta = np.sqrt(np.abs(gamma))
        self.lam1 = lam1
        self.lam2 = lam2
        self.s = s


def propagator_scalars(e: EigenData, t) -> PropagatorScalars:
    P = _Parts(e, t)
    g1 = np.array(P.damp * P.tS)
    g2 = np.array(P.damp * (P.C + 0.5 * P.s * P.tS))
    g3 = np.array(P.damp * (P.C - 0.5 * P.s * P.tS))
    if P.split.any():
        m = P.split
        dl = P.delta[m]
        e1, e2, l1, l2 = P.e1[m], P.e2[m], P.lam1[m], P.lam2[m]
        g1[m] = (e2 - e1) / dl
        g2[m] = (l2 * e1 - l1 * e2) / dl
        g3[m] = (l2 * e2 - l1 * e1) / dl
    return PropagatorScalars(g1=g1.astype(complex), g2=g2.astype(complex), g3=g3.astype(complex), t=P.t)


def kernel_triple(xi, p: PhysicalParams, t) -> KernelTriple:
    """Entries of exp(t A).

    Algebraically K1 = -mu xi3^2 G1 + G2, K2 = i xi2 G1, K3 = mu xi3^2 G1 + G3;
    the diagonal entries are evaluated in rearranged forms that avoid the
    cancellation those sums suffer when the two eigenvalues are far apart.
    """
    e = eigen_data(xi, p)
    P = _Parts(e, t)
    a = np.broadcast_to(e.a, P.t.shape)
    c = np.broadcast_to(e.c, P.t.shape)
    x2 = np.broadcast_to(e.xi2, P.t.shape)
    half_d = 0.5 * (a - c)

    g1 = np.array(P.damp * P.tS)
    k1 = np.array(P.damp * (P.C - half_d * P.tS))
    k3 = np.array(P.damp * (P.C + half_d * P.tS))

    if P.split.any():
        m = P.split
        d = 2 * half_d[m]
        dl = P.delta[m]
        x2sq = x2[m] ** 2
        # p_j = lambda_j + mu xi3^2 with p1 p2 = xi2^2: take the large one directly
        big = 0.5 * (np.abs(d) + dl)
        small = np.where(big > 0, x2sq / np.where(big > 0, big, 1.0), 0.0)
        p2 = np.where(d >= 0, big, -small)
        p1 = np.where(d >= 0, small, -big)
        e1, e2 = P.e1[m], P.e2[m]
        g1[m] = (e2 - e1) / dl
        k1[m] = (p2 * e1 - p1 * e2) / dl
        k3[m] = (p2 * e2 - p1 * e1) / dl

    return KernelTriple(k1=k1.astype(complex), k2=1j * x2 * g1, k3=k3.astype(complex))


def kernel_matrix(xi, p: PhysicalParams, t) -> np.ndarray:
    return kernel_triple(xi, p, t).matrix()


# ---------------------------------------------------------------------------
# independent reference: scaling and squaring with a truncated Taylor series

_TAYLOR_DEGREE = 18


def matrix_exponential_oracle(xi, p: PhysicalParams, t) -> np.ndarray:
    """exp(t A) by scaling and squaring, shape (..., 2, 2).

    The scaled matrix has 1-norm <= 1/2, where a degree-18 Taylor polynomial is
    accurate to ~1e-23; the number of squarings is chosen per entry.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    A = generator(xi, p)
    shape = np.broadcast_shapes(A.shape[:-2], t.shape)
    M = np.broadcast_to(A, shape + (2, 2)) * np.broadcast_to(t, shape)[..., None, None]
    M = M.reshape(-1, 2, 2)
    norm1 = np.abs(M).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        squarings = np.where(norm1 > 0.5, np.ceil(np.log2(np.where(norm1 > 0, norm1, 1.0) / 0.5)), 0)
    squarings = squarings.astype(int)
    X = M / (2.0**squarings)[:, None, None]

    eye = np.broadcast_to(np.eye(2, dtype=complex), X.shape)
    E = eye.copy()
    for k in range(_TAYLOR_DEGREE, 0, -1):
        E = eye + (X @ E) / k

    for level in range(int(squarings.max(initial=0))):
        m = squarings > level
        E[m] = E[m] @ E[m]
    return E.reshape(shape + (2, 2))


def classify_frequency(xi, p: PhysicalParams):
    """DomainTag for a single wavevector, or an int array of TAG_CODES for arrays."""
    codes = classify_codes(xi, p)
    if codes.ndim == 0:
        return TAGS_BY_CODE[int(codes)]
    return codes


def classify_codes(xi, p: PhysicalParams) -> np.ndarray:
    xi = Wavevector.of(xi)
    e = eigen_data(xi, p)
    s, q, gamma = e.s_trace, e.q_det, e.gamma
    in1 = gamma <= 0.25 * s**2
    # the second defining condition of the set is the same inequality rearranged
    alt = s**2 <= (16.0 / 3.0) * q
    agree = (in1 == alt) | np.isclose(gamma, 0.25 * s**2, rtol=1e-9, atol=0.0)
    if not np.all(agree):
        raise AssertionError("the two Omega1 conditions disagree beyond rounding")
    x2 = np.broadcast_to(np.abs(xi.xi2), s.shape)
    x3 = np.broadcast_to(np.abs(xi.xi3), s.shape)
    codes = np.where(
        in1,
        0,
        np.where(e.a > e.c, 1, np.where(x2 <= x3, 2, 3)),
    )
    return codes


# ---------------------------------------------------------------------------
# auditor

# relative slack on explicit inequalities; several hold with equality (e.g.
# Re lambda1 = -s/2 whenever Gamma < 0)
BOUND_RTOL = 1e-12

# calibrated constants for the non-explicit |K_i| <= C e^{-c xi_nu^2 t} forms
CALIBRATED_C = 20.0


def calibrated_rate(p: PhysicalParams) -> float:
    return 0.125 * min(p.mu, p.eta, 1.0 / p.eta)


@dataclass
class BoundRecord:
    name: str
    lhs: np.ndarray
    rhs: np.ndarray
    applies: np.ndarray
    hard: bool = True

    @property
    def satisfied(self) -> np.ndarray:
        slack = BOUND_RTOL * np.abs(self.rhs) + 1e-300
        return ~self.applies | (self.lhs <= self.rhs + slack)

    @property
    def n_checked(self) -> int:
        return int(np.count_nonzero(self.applies))

    @property
    def n_violations(self) -> int:
        return int(np.count_nonzero(~self.satisfied))

    def worst_excess(self) -> float:
        """max of (lhs - rhs) / max(|rhs|, tiny) over applicable entries, or -inf."""
        if self.n_checked == 0:
            return -np.inf
        lhs = self.lhs[self.applies]
        rhs = self.rhs[self.applies]
        return float(np.max((lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))


@dataclass
class BoundReport:
    tags: np.ndarray
    records: list[BoundRecord]

    def hard_violations(self) -> int:
        return sum(r.n_violations for r in self.records if r.hard)

    def calibrated_flags(self) -> int:
        return sum(r.n_violations for r in self.records if not r.hard)

    def by_name(self, name: str) -> BoundRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)


def check_bounds(xi, p: PhysicalParams, t) -> BoundReport:
    """Evaluate every explicit kernel inequality applicable to each sample's tag.

    Hard records are proved inequalities; the records named ``calibrated_*`` use
    the constants C = 20, c = min(mu, eta, 1/eta)/8 and are flags only.
    """
    xi = Wavevector.of(xi)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("check_bounds needs t > 0")
    e = eigen_data(xi, p)
    tags = classify_codes(xi, p)
    shape = np.broadcast_shapes(tags.shape, t.shape)
    t = np.broadcast_to(t, shape)
    tags = np.broadcast_to(tags, shape)
    s = np.broadcast_to(e.s_trace, shape)
    q = np.broadcast_to(e.q_det, shape)
    lam1 = np.broadcast_to(e.lambda1, shape)
    lam2 = np.broadcast_to(e.lambda2, shape)
    x3sq = np.broadcast_to(xi.xi3**2, shape)
    xnu = np.broadcast_to(xi.xi_nu_sq, shape)

    G = propagator_scalars(e, t)
    K = kernel_triple(xi, p, t)
    absG1 = np.abs(G.g1)
    om1 = tags == 0
    om2 = ~om1
    with np.errstate(divide="ignore", invalid="ignore"):
        q_over_s = np.where(s > 0, q / np.where(s > 0, s, 1.0), 0.0)

    recs = [
        BoundRecord("omega1_re_lambda1", lam1.real, -0.5 * s, om1),
        BoundRecord("omega1_re_lambda2", lam2.real, -0.25 * s, om1),
        BoundRecord("omega1_abs_g1", absG1, t * np.exp(-0.25 * s * t), om1),
        BoundRecord("omega2_lambda1", lam1.real, -0.75 * s, om2),
        BoundRecord("omega2_lambda2", lam2.real, -q_over_s, om2),
        BoundRecord(
            "omega2_abs_g1",
            absG1,
            2.0 / np.where(s > 0, s, 1.0) * (np.exp(lam1.real * t) + np.exp(lam2.real * t)),
            om2,
        ),
        BoundRecord("omega21_chain", -q_over_s, -0.5 * p.eta * xnu, tags == 1),
        BoundRecord("omega22_chain", -q_over_s, -0.25 * p.mu * xnu, tags == 2),
        BoundRecord("omega23_chain", -q_over_s, -0.5 * p.mu * x3sq - 0.25 / p.eta, tags == 3),
    ]

    cc = calibrated_rate(p)
    kmax = np.maximum(np.maximum(np.abs(K.k1), np.abs(K.k2)), np.abs(K.k3))
    heat = CALIBRATED_C * np.exp(-cc * xnu * t)
    recs += [
        BoundRecord("calibrated_omega1", kmax, heat, om1, hard=False),
        BoundRecord("calibrated_omega21", kmax, heat, tags == 1, hard=False),
        BoundRecord("calibrated_omega22", kmax, heat, tags == 2, hard=False),
        BoundRecord(
            "calibrated_omega23",
            kmax,
            CALIBRATED_C * (np.exp(-cc * (1 + x3sq) * t) + np.exp(-cc * xnu * t)),
            tags == 3,
            hard=False,
        ),
    ]
    return BoundReport(tags=tags, records=recs)


# ---------------------------------------------------------------------------
# randomized audit


def random_wavevectors(rng: np.random.Generator, n: int, log_range=(-3.0, 2.0)) -> Wavevector:
    """Components log-uniform in magnitude over ``log_range`` (base 10), random signs."""
    mags = 10.0 ** rng.uniform(*log_range, size=(3, n))
    signs = rng.choice([-1.0, 1.0], size=(3, n))
    v = mags * signs
    return Wavevector(v[0], v[1], v[2])


def stress_wavevectors(rng: np.random.Generator, n: int, p: PhysicalParams) -> Wavevector:
    """Samples on slabs where the bounds change character: xi2 ~ 0, xi3 ~ 0 and Gamma ~ 0.

    The Gamma = 0 surface is reached by solving mu xi3^2 - eta xi_nu^2 = +-2|xi2| for xi3^2
    and perturbing the result by a relative 1e-9; pairs without a real solution are
    replaced by log-uniform draws.
    """
    base = random_wavevectors(rng, n)
    x1, x2, x3 = (np.array(v, dtype=float) for v in (base.xi1, base.xi2, base.xi3))
    third = n // 3
    tiny = 10.0 ** rng.uniform(-12.0, -6.0, size=n) * rng.choice([-1.0, 1.0], size=n)
    x2[:third] = tiny[:third]
    x3[third:2 * third] = tiny[third:2 * third]
    sl = slice(2 * third, n)
    a2 = np.abs(x2[sl])
    sign = rng.choice([-1.0, 1.0], size=a2.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        x3sq = (p.eta * a2**2 + sign * 2 * a2) / (p.mu - p.eta)
    ok = np.isfinite(x3sq) & (x3sq > 0)
    jitter = 1.0 + 1e-9 * rng.standard_normal(a2.size)
    x3[sl] = np.where(ok, np.sqrt(np.where(ok, x3sq, 1.0) * jitter) * np.sign(x3[sl]), x3[sl])
    return Wavevector(x1, x2, x3)


@dataclass
class AuditSummary:
    per_tag: dict
    per_bound: dict
    hard_violations: int
    calibrated_flags: int
    params: list

    @property
    def passed(self) -> bool:
        return self.hard_violations == 0


def bound_audit(n_per_tag: int, seed: int, params: PhysicalParams | None = None,
                n_param_pairs: int = 8, batch: int = 50_000, max_batches: int = 400) -> AuditSummary:
    """Check every explicit bound until each domain tag has ``n_per_tag`` samples.

    Omega21 is empty when mu <= eta, so (mu, eta) pairs are drawn log-uniformly in
    [0.1, 10] alongside ``params``; batches cycle through the pairs.
    """
    rng = np.random.default_rng(seed)
    pairs = [params or PhysicalParams()]
    for _ in range(n_param_pairs):
        mu, eta = 10.0 ** rng.uniform(-1.0, 1.0, size=2)
        pairs.append(PhysicalParams(float(mu), float(eta)))
    counts = {tag.name: 0 for tag in DomainTag}
    per_bound: dict = {}
    hard = flags = 0
    for j in range(max_batches):
        if min(counts.values()) >= n_per_tag:
            break
        p = pairs[j % len(pairs)]
        # alternate plain log-uniform batches with stress batches
        xi = random_wavevectors(rng, batch) if j % 2 == 0 else stress_wavevectors(rng, batch, p)
        t = 10.0 ** rng.uniform(-3.0, 2.0, size=batch)
        rep = check_bounds(xi, p, t)
        tags = np.asarray(rep.tags)
        for code, tag in TAGS_BY_CODE.items():
            counts[tag.name] += int(np.count_nonzero(tags == code))
        for r in rep.records:
            entry = per_bound.setdefault(r.name, {"checked": 0, "violations": 0, "hard": r.hard, "worst_excess": -np.inf})
            entry["checked"] += r.n_checked
            entry["violations"] += r.n_violations
            entry["worst_excess"] = max(entry["worst_excess"], r.worst_excess())
        hard += rep.hard_violations()
        flags += rep.calibrated_flags()
    return AuditSummary(counts, per_bound, hard, flags, pairs)
