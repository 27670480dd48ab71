"""Linear frequencies and arithmetic non-resonance certification.

The linear frequencies are mu_n = sqrt(cos(n.alpha + theta0) + m) with the
phase convention that alpha and theta0 are supplied in [0,1] and scaled by
2*pi internally; torus distances are measured to 2*pi*Z.  This module
certifies Diophantine conditions on (alpha, theta0), pair separation of the
mu_n, transversality of frequency combinations in m (via the closed-form
m-derivatives and their Vandermonde determinant), sublevel measure
estimates, the admissible-m scan and the per-shift cluster count.

Unspecified theory constants (the transversality prefactor and the sublevel
constant C(r)) are treated as reported empirical quantities: certificates
carry attained margins, and scaling shapes are checked by the test suite
rather than gated on unknown constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (InsufficientResolution, InvalidAnchors, NotApplicable,
                     PreconditionFailed)
from .lattice import ResonantSet, Site, unit_k

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Model data: potential phases, mass, couplings and anchors.

    ``alpha`` (length d) and ``theta0`` live in [0,1] and are scaled by 2*pi
    when phases are formed.  ``anchors`` are the b distinct space sites that
    carry the prescribed amplitudes ``amplitudes`` (in [1,2]).  ``gamma`` is
    the certified decay rate of convolution kernels; ``k_exponent`` is the
    Diophantine scale exponent (defaults to its largest allowed value
    1e4 * d * b**4).
    """

    b: int
    d: int
    p: int
    m: float
    eps: float
    delta: float
    alpha: tuple
    theta0: float
    anchors: tuple
    amplitudes: tuple
    gamma: float = 1.0
    k_exponent: Optional[float] = None

    def __post_init__(self):
        if self.b < 1 or self.d < 1:
            raise ValueError("b and d must be positive integers")
        if self.p < 2 or self.p % 2 != 0:
            raise ValueError(f"p must be a positive even integer, got {self.p}")
        if not 2.0 <= self.m <= 3.0:
            raise ValueError(f"m must lie in [2,3], got {self.m}")
        for name in ("eps", "delta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {v}")
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) != self.d or any(not 0.0 <= a <= 1.0 for a in alpha):
            raise ValueError(
                f"alpha must be a length-{self.d} vector in [0,1]^d, got {alpha}")
        object.__setattr__(self, "alpha", alpha)
        if not 0.0 <= self.theta0 <= 1.0:
            raise ValueError(f"theta0 must lie in [0,1], got {self.theta0}")
        anchors = tuple(tuple(int(x) for x in n) for n in self.anchors)
        if len(anchors) != self.b or len(set(anchors)) != self.b:
            raise InvalidAnchors(f"need b={self.b} distinct anchors, got {anchors}")
        if any(len(n) != self.d for n in anchors):
            raise InvalidAnchors("anchor sites must have length d")
        object.__setattr__(self, "anchors", anchors)
        amps = tuple(float(a) for a in self.amplitudes)
        if len(amps) != self.b or any(not 1.0 <= a <= 2.0 for a in amps):
            raise ValueError(f"amplitudes must lie in [1,2]^b, got {amps}")
        object.__setattr__(self, "amplitudes", amps)
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        kmax = 1e4 * self.d * self.b**4
        kexp = self.k_exponent if self.k_exponent is not None else kmax
        if not 0 < kexp <= kmax:
            raise ValueError(f"k_exponent must lie in (0, {kmax}], got {kexp}")
        object.__setattr__(self, "k_exponent", float(kexp))

    # -- derived quantities ---------------------------------------------------

    def phase(self, n: Sequence[int]) -> float:
        """Radian phase 2*pi*(n.alpha + theta0) of site n."""
        return TWO_PI * (sum(ni * ai for ni, ai in zip(n, self.alpha)) + self.theta0)

    def resonant_set(self) -> ResonantSet:
        return ResonantSet(self.anchors, self.b, self.d)

    def with_m(self, m: float) -> "ModelParams":
        return ModelParams(self.b, self.d, self.p, float(m), self.eps, self.delta,
                           self.alpha, self.theta0, self.anchors, self.amplitudes,
                           self.gamma, self.k_exponent)

    def with_couplings(self, eps: float, delta: float) -> "ModelParams":
        return ModelParams(self.b, self.d, self.p, self.m, float(eps), float(delta),
                           self.alpha, self.theta0, self.anchors, self.amplitudes,
                           self.gamma, self.k_exponent)


def torus_distance(x) -> np.ndarray:
    """Distance of x (radians) to 2*pi*Z."""
    return np.abs(np.remainder(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi)


def mu(n: Sequence[int], params: ModelParams, m: Optional[float] = None) -> float:
    """Linear frequency sqrt(cos(phase(n)) + m); lies in [sqrt(m-1), sqrt(m+1)]."""
    mm = params.m if m is None else m
    val = math.cos(params.phase(n)) + mm
    if val <= 0:
        raise ValueError(f"cos(phase)+m = {val} <= 0 at n={tuple(n)} (m={mm})")
    return math.sqrt(val)


def omega0(params: ModelParams, m: Optional[float] = None) -> np.ndarray:
    """Unperturbed frequency vector (mu at each anchor)."""
    return np.array([mu(n, params, m) for n in params.anchors])


def _mu_array(space_sites: np.ndarray, params: ModelParams,
              m_values: np.ndarray) -> np.ndarray:
    """mu over sites (rows) x m grid (columns)."""
    alpha = np.asarray(params.alpha)
    phases = TWO_PI * (space_sites @ alpha + params.theta0)
    return np.sqrt(np.cos(phases)[:, None] + m_values[None, :])


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    """Outcome of one non-resonance check.

    ``margin`` is worst-case slack: positive iff every checked instance
    satisfies its inequality strictly (ties count as failure).  Witnesses
    record the extremal index tuples and attained values.
    """

    kind: str
    inputs: dict
    margin: float
    witnesses: tuple
    notes: str = ""

    @property
    def passed(self) -> bool:
        return self.margin > 0.0


def _enumerate_nonzero(limit: int, dim: int):
    """All integer vectors 0 < |v| <= limit (sup norm), as an array."""
    grids = np.meshgrid(*([np.arange(-limit, limit + 1)] * dim), indexing="ij")
    vecs = np.stack([g.ravel() for g in grids], axis=-1)
    keep = np.abs(vecs).max(axis=1) > 0
    return vecs[keep]


def check_alpha_dc(alpha: Sequence[float], L: int, c_star: float,
                   mode: str = "fixed", d: Optional[int] = None) -> Certificate:
    """Diophantine certificate for alpha over all 0 < |n| <= 2L.

    ``mode="fixed"`` checks ||(n/2).alpha||_T >= c_star.  ``mode="power"``
    checks min over the full and half multiples of ||.||_T >= c_star/|n|^(2d).
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if not 0.0 < c_star < 1.0:
        raise ValueError("c_star must lie in (0,1)")
    alpha = np.asarray(alpha, dtype=float)
    dd = len(alpha) if d is None else d
    vecs = _enumerate_nonzero(2 * L, dd)
    dots = vecs @ (TWO_PI * alpha)
    if mode == "fixed":
        attained = torus_distance(0.5 * dots)
        thresholds = np.full(len(vecs), c_star)
    elif mode == "power":
        attained = np.minimum(torus_distance(dots), torus_distance(0.5 * dots))
        thresholds = c_star / (np.abs(vecs).max(axis=1).astype(float) ** (2 * dd))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    slack = attained - thresholds
    order = np.argsort(slack)[:3]
    witnesses = tuple((tuple(int(x) for x in vecs[i]), float(attained[i]))
                      for i in order)
    return Certificate(
        kind="alpha_dc",
        inputs={"alpha": tuple(float(a) for a in alpha), "L": L,
                "c_star": c_star, "mode": mode},
        margin=float(slack.min()),
        witnesses=witnesses,
    )


def check_theta_dc(theta0: float, alpha: Sequence[float], L: int, c_star: float,
                   mode: str = "fixed", d: Optional[int] = None) -> Certificate:
    """Diophantine certificate for theta0 over all |n| <= 2L (n = 0 included).

    ``mode="power"`` uses the scale-coupled threshold L^(-3d) instead of
    c_star.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if not 0.0 < c_star < 1.0:
        raise ValueError("c_star must lie in (0,1)")
    alpha = np.asarray(alpha, dtype=float)
    dd = len(alpha) if d is None else d
    vecs = _enumerate_nonzero(2 * L, dd)
    vecs = np.vstack([np.zeros((1, dd), dtype=int), vecs])
    attained = torus_distance(TWO_PI * theta0 + 0.5 * (vecs @ (TWO_PI * alpha)))
    threshold = c_star if mode == "fixed" else float(L) ** (-3 * dd)
    slack = attained - threshold
    order = np.argsort(slack)[:3]
    witnesses = tuple((tuple(int(x) for x in vecs[i]), float(attained[i]))
                      for i in order)
    return Certificate(
        kind="theta_dc",
        inputs={"theta0": float(theta0), "alpha": tuple(float(a) for a in alpha),
                "L": L, "c_star": c_star, "mode": mode},
        margin=float(slack.min()),
        witnesses=witnesses,
    )


def separation_certificate(params: ModelParams, L: int, c_star: float) -> Certificate:
    """Pair-separation certificate for the mu_n over |(n,n')| <= L.

    Requires the alpha/theta Diophantine certificates to pass at (L, c_star),
    then verifies |mu_n - mu_n'| >= (2/pi^2) c_star^2 and
    |mu_n^2 - mu_n'^2| >= (8/pi^2) c_star^2 by exhaustive evaluation.
    """
    ca = check_alpha_dc(params.alpha, L, c_star)
    ct = check_theta_dc(params.theta0, params.alpha, L, c_star)
    if not ca.passed or not ct.passed:
        failed = [c.kind for c in (ca, ct) if not c.passed]
        raise PreconditionFailed(
            f"Diophantine certificates failed at (L={L}, c_star={c_star}): {failed}")

    sites = _enumerate_nonzero(L, params.d)
    sites = np.vstack([np.zeros((1, params.d), dtype=int), sites])
    mus = _mu_array(sites, params, np.array([params.m]))[:, 0]

    thr1 = (2.0 / math.pi**2) * c_star**2
    thr2 = (8.0 / math.pi**2) * c_star**2
    diff = np.abs(mus[:, None] - mus[None, :])
    diff2 = np.abs(mus[:, None]**2 - mus[None, :]**2)
    np.fill_diagonal(diff, np.inf)
    np.fill_diagonal(diff2, np.inf)
    i1 = np.unravel_index(np.argmin(diff), diff.shape)
    i2 = np.unravel_index(np.argmin(diff2), diff2.shape)
    margin1 = float(diff[i1] - thr1)
    margin2 = float(diff2[i2] - thr2)
    witnesses = (
        ((tuple(int(x) for x in sites[i1[0]]), tuple(int(x) for x in sites[i1[1]])),
         float(diff[i1])),
        ((tuple(int(x) for x in sites[i2[0]]), tuple(int(x) for x in sites[i2[1]])),
         float(diff2[i2])),
    )
    return Certificate(
        kind="separation",
        inputs={"L": L, "c_star": c_star, "m": params.m},
        margin=min(margin1, margin2),
        witnesses=witnesses,
        notes=f"min|mu-mu'|={diff[i1]:.6e} (threshold {thr1:.3e}); "
              f"min|mu^2-mu'^2|={diff2[i2]:.6e} (threshold {thr2:.3e})",
    )


# ---------------------------------------------------------------------------
# m-derivatives and the Wronskian determinant
# ---------------------------------------------------------------------------

def derivative_prefactor(l: int) -> float:
    """lambda_l = (1/2)(1/2 - 1)...(1/2 - l + 1); lambda_1 = 1/2."""
    if l < 1:
        raise ValueError("derivative order must be >= 1")
    out = 1.0
    for j in range(l):
        out *= 0.5 - j
    return out


def d_mu_dm(n: Sequence[int], l: int, params: ModelParams,
            m: Optional[float] = None) -> float:
    """Closed-form l-th m-derivative of mu_n: lambda_l * mu_n^{-(2l-1)}."""
    v = mu(n, params, m)
    return derivative_prefactor(l) * v ** (-(2 * l - 1))


def wronskian_matrix(space_sites: Sequence[Sequence[int]], m: float,
                     params: ModelParams) -> np.ndarray:
    """The beta x beta matrix M[l,s] = lambda_l * v_s^{-(2l-1)}."""
    beta = len(space_sites)
    v = np.array([mu(n, params, m) for n in space_sites])
    out = np.empty((beta, beta))
    for l in range(1, beta + 1):
        out[l - 1] = derivative_prefactor(l) * v ** (-(2 * l - 1))
    return out


def wronskian_det(space_sites: Sequence[Sequence[int]], m: float,
                  params: ModelParams) -> tuple:
    """Determinant of the derivative matrix via its exact factorization.

    det M = (prod_l lambda_l) * (prod_s v_s^{-1}) * Vandermonde(v_s^{-2}),
    with Vandermonde(x) = prod_{s1<s2} (x_{s2} - x_{s1}).  Returns
    (value, degenerate); repeated sites collapse the Vandermonde factor to 0.

    Each row l carries one factor lambda_l and each column s one factor
    v_s^{-1}; cross-validation against the direct determinant of
    ``wronskian_matrix`` pins this down (see the test suite).
    """
    beta = len(space_sites)
    if beta < 1:
        raise ValueError("need at least one site")
    sites = [tuple(int(x) for x in n) for n in space_sites]
    degenerate = len(set(sites)) != beta
    if degenerate:
        return 0.0, True
    v = np.array([mu(n, params, m) for n in sites])
    prefac = 1.0
    for l in range(1, beta + 1):
        prefac *= derivative_prefactor(l)
    prefac *= float(np.prod(1.0 / v))
    x = 1.0 / v**2
    vand = 1.0
    for s2 in range(beta):
        for s1 in range(s2):
            vand *= x[s2] - x[s1]
    value = prefac * vand
    if value == 0.0:
        degenerate = True
    return float(value), degenerate


# ---------------------------------------------------------------------------
# transversality in m
# ---------------------------------------------------------------------------

_KINDS = ("harmonic", "shifted", "difference")


def _reduce_combination(kind: str, k: Sequence[int], params: ModelParams,
                        n: Optional[Sequence[int]] = None,
                        n_prime: Optional[Sequence[int]] = None):
    """Reduce a frequency combination to (ktilde, site list, r, exponent).

    The combination value is ktilde . v(m) where v(m) stacks mu at the
    returned space sites; r is the number of derivative orders to take and
    ``exponent`` the reference power of c_star for the reported constant.
    Raises NotApplicable for the excluded index configurations.
    """
    b = params.b
    k = tuple(int(x) for x in k)
    if len(k) != b:
        raise ValueError(f"k must have length b={b}")
    anchors = {tuple(a): l for l, a in enumerate(params.anchors, start=1)}

    if kind == "harmonic":
        if all(x == 0 for x in k):
            raise NotApplicable("harmonic combination requires k != 0")
        return k, list(params.anchors), b, b * (b - 1)

    if kind == "shifted":
        if n is None:
            raise ValueError("shifted combination requires a space site n")
        n = tuple(int(x) for x in n)
        l = anchors.get(n)
        if l is not None:
            e = unit_k(l, b)
            if k == e or k == tuple(-x for x in e):
                raise NotApplicable(f"(k, n) = ({k}, {n}) lies in the resonant set")
            ktilde = tuple(ki + ei for ki, ei in zip(k, e))
            return ktilde, list(params.anchors), b, b * (b - 1)
        return k + (1,), list(params.anchors) + [n], b + 1, b * (b + 1)

    if kind == "difference":
        if n is None or n_prime is None:
            raise ValueError("difference combination requires sites n and n'")
        n = tuple(int(x) for x in n)
        n_prime = tuple(int(x) for x in n_prime)
        if n == n_prime:
            raise NotApplicable("difference combination requires n != n'")
        l, lp = anchors.get(n), anchors.get(n_prime)
        if l is not None and lp is not None:
            e, ep = unit_k(l, b), unit_k(lp, b)
            ktilde = tuple(ki + ei - epi for ki, ei, epi in zip(k, e, ep))
            if all(x == 0 for x in ktilde):
                raise NotApplicable(
                    f"k = -e_{l} + e_{lp} is the excluded anchor difference")
            return ktilde, list(params.anchors), b, b * (b - 1)
        if l is not None:  # n anchored, n' free
            e = unit_k(l, b)
            ktilde = tuple(ki + ei for ki, ei in zip(k, e)) + (-1,)
            return ktilde, list(params.anchors) + [n_prime], b + 1, (b + 1) * (b + 2)
        if lp is not None:  # n free, n' anchored
            ep = unit_k(lp, b)
            ktilde = tuple(ki - epi for ki, epi in zip(k, ep)) + (1,)
            return ktilde, list(params.anchors) + [n], b + 1, (b + 1) * (b + 2)
        return k + (1, -1), list(params.anchors) + [n, n_prime], b + 2, (b + 1) * (b + 2)

    raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")


@dataclass(frozen=True)
class FrequencyCombination:
    """A function family member f(m) = ktilde . (mu at the listed sites)."""

    kind: str
    ktilde: tuple
    space_sites: tuple
    r: int
    exponent: int
    params: ModelParams

    @classmethod
    def build(cls, kind: str, k: Sequence[int], params: ModelParams,
              n=None, n_prime=None) -> "FrequencyCombination":
        ktilde, sites, r, expo = _reduce_combination(kind, k, params, n, n_prime)
        return cls(kind, tuple(ktilde), tuple(tuple(s) for s in sites), r, expo, params)

    def _mu_values(self, m_values: np.ndarray) -> np.ndarray:
        sites = np.array(self.space_sites, dtype=float)
        return _mu_array(sites, self.params, np.asarray(m_values, dtype=float))

    def values(self, m_values) -> np.ndarray:
        """f(m) on a grid."""
        mus = self._mu_values(np.atleast_1d(np.asarray(m_values, dtype=float)))
        return np.asarray(self.ktilde, dtype=float) @ mus

    def derivative(self, l: int, m_values) -> np.ndarray:
        """Closed-form l-th m-derivative of f on a grid."""
        mus = self._mu_values(np.atleast_1d(np.asarray(m_values, dtype=float)))
        lam = derivative_prefactor(l)
        return np.asarray(self.ktilde, dtype=float) @ (lam * mus ** (-(2 * l - 1)))

    def derivative_sup_bound(self, orders: int) -> float:
        """Analytic bound on sup over 1<=l<=orders of |d^l f/dm^l| (mu >= 1)."""
        lam_max = max(abs(derivative_prefactor(l)) for l in range(1, orders + 1))
        return lam_max * float(np.abs(self.ktilde).sum())

    @property
    def ktilde_norm2(self) -> float:
        return float(np.linalg.norm(self.ktilde))


def transversality_margin(kind: str, k: Sequence[int], params: ModelParams,
                          m_grid, n=None, n_prime=None,
                          tc_ref: float = 0.0, c_star: float = 1.0) -> Certificate:
    """Attained transversality of a frequency combination over an m grid.

    Evaluates sup over derivative orders 1..r of |d^l f/dm^l| at each grid m
    (closed forms) and reports margin = min over the grid of that sup, minus
    the reference lower bound tc_ref * c_star^exponent * |ktilde|_2.  The
    implied empirical prefactor is recorded in the witnesses; by default
    (tc_ref = 0) the margin is the attained minimum itself.
    """
    combo = FrequencyCombination.build(kind, k, params, n, n_prime)
    m_grid = np.atleast_1d(np.asarray(m_grid, dtype=float))
    sup = np.zeros_like(m_grid)
    for l in range(1, combo.r + 1):
        sup = np.maximum(sup, np.abs(combo.derivative(l, m_grid)))
    imin = int(np.argmin(sup))
    reference = tc_ref * (c_star ** combo.exponent) * combo.ktilde_norm2
    attained = float(sup[imin])
    implied = attained / (c_star ** combo.exponent * combo.ktilde_norm2)
    witnesses = ((combo.ktilde, attained), (("m",), float(m_grid[imin])))
    return Certificate(
        kind="transversality",
        inputs={"combination": kind, "k": tuple(int(x) for x in k),
                "n": None if n is None else tuple(int(x) for x in n),
                "n_prime": None if n_prime is None else tuple(int(x) for x in n_prime),
                "r": combo.r, "exponent": combo.exponent,
                "tc_ref": tc_ref, "c_star": c_star,
                "m_grid_points": len(m_grid)},
        margin=attained - reference,
        witnesses=witnesses,
        notes=f"implied prefactor {implied:.6e} at exponent {combo.exponent}",
    )


# ---------------------------------------------------------------------------
# sublevel measure
# ---------------------------------------------------------------------------

M_INTERVAL = (2.0, 3.0)


@dataclass(frozen=True)
class SublevelResult:
    bound: float
    empirical: float
    eta: float
    r: int
    tau: float
    derivative_bound: float
    grid_points: int


def sublevel_measure(f_spec: Union[FrequencyCombination, Callable], eta: float,
                     r: int, tau: float, derivative_bound: float,
                     grid_points: Optional[int] = None,
                     interval: tuple = M_INTERVAL) -> SublevelResult:
    """Analytic sublevel bound and a grid-sampled estimate of meas{|f|<=eta}.

    The analytic bound is C(r) * A * |I| * eta^(1/r) / tau^2 with
    C(r) = r(r+3) * (2A|I|/tau + 1) / (A|I|), i.e. the subdivision count
    folded into the constant.  The empirical estimate counts midpoints of a
    uniform grid; its spacing must satisfy spacing <= eta/A.
    """
    if not 0.0 < tau < 1.0:
        raise InsufficientResolution(f"tau must lie in (0,1), got {tau}")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0,1), got {eta}")
    if derivative_bound <= 0.0:
        raise ValueError("derivative bound must be positive")
    a, b = interval
    length = b - a
    A = derivative_bound
    if grid_points is None:
        # default: an order of magnitude inside the hard precondition
        grid_points = int(math.ceil(10.0 * A * length / eta)) + 1
    spacing = length / grid_points
    if spacing > eta / A:
        raise InsufficientResolution(
            f"grid spacing {spacing:.3e} exceeds eta/A = {eta / A:.3e}")
    mids = a + (np.arange(grid_points) + 0.5) * spacing
    if isinstance(f_spec, FrequencyCombination):
        values = f_spec.values(mids)
    else:
        values = np.asarray(f_spec(mids), dtype=float)
    empirical = float(np.count_nonzero(np.abs(values) <= eta)) * spacing
    c_r = r * (r + 3) * (2.0 * A * length / tau + 1.0) / (A * length)
    bound = c_r * A * length * eta ** (1.0 / r) / tau**2
    return SublevelResult(bound=float(bound), empirical=empirical, eta=eta, r=r,
                          tau=tau, derivative_bound=A, grid_points=grid_points)


# ---------------------------------------------------------------------------
# admissible m scan and cluster counting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibleMScan:
    certified_m: np.ndarray
    failing_fraction: float
    theoretical_bound: float
    theoretical_bound_feasible: bool
    condition_fail_fractions: dict
    certificate: Certificate


def _space_sites_within(L: int, d: int) -> np.ndarray:
    grids = np.meshgrid(*([np.arange(-L, L + 1)] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _k_vectors_within(limit: int, b: int) -> np.ndarray:
    return _enumerate_nonzero(limit, b)


def admissible_m_scan(params: ModelParams, L: int, eta: float,
                      m_grid) -> AdmissibleMScan:
    """Scan an m grid for the non-resonance conditions at scale (L, eta).

    Conditions checked at every grid m (params.m is ignored):
      (1) |mu_n - mu_n'| >= (2/pi^2) L^(-6d) for n != n', |(n,n')| <= L;
      (2) |k.omega0| > eta for 0 < |k| <= 2L;
      (3) |k.omega0 + mu_n| > eta on the cube of radius L minus the
          resonant set;
      (4) |k.omega0 + mu_n - mu_n'| > eta over the admissible index pairs
          (|k| <= 2L; at least one of n, n' off-anchor, or both anchored
          with the non-degenerate frequency offset).

    Requires the alpha/theta Diophantine certificates at (L, L^(-3d)).
    The theoretical complement bound L^(50 d b^2) * eta^(1/(b+2)) is
    reported but not enforced (it is vacuous at desk scales).
    """
    c_star = float(L) ** (-3 * params.d)
    ca = check_alpha_dc(params.alpha, L, c_star)
    ct = check_theta_dc(params.theta0, params.alpha, L, c_star)
    if not ca.passed or not ct.passed:
        failed = [c.kind for c in (ca, ct) if not c.passed]
        raise PreconditionFailed(
            f"(alpha, theta0) not certified at (L={L}, c_star={c_star:.3e}): {failed}")

    m_grid = np.atleast_1d(np.asarray(m_grid, dtype=float))
    nm = len(m_grid)
    space = _space_sites_within(L, params.d)          # (Ns, d)
    mus = _mu_array(space.astype(float), params, m_grid)  # (Ns, nm)
    anchor_rows = [int(np.where((space == np.asarray(a)).all(axis=1))[0][0])
                   for a in params.anchors]
    om = mus[anchor_rows, :]                          # (b, nm)

    ok = np.ones(nm, dtype=bool)
    fails = {}

    # (1) pair separation
    thr1 = (2.0 / math.pi**2) * float(L) ** (-6 * params.d)
    pair_min = np.full(nm, np.inf)
    for i in range(len(space)):
        if i + 1 < len(space):
            pair_min = np.minimum(
                pair_min, np.abs(mus[i + 1:] - mus[i]).min(axis=0))
    cond1 = pair_min >= thr1
    fails["separation"] = float(1.0 - cond1.mean())
    ok &= cond1

    # (2) harmonics
    kvecs = _k_vectors_within(2 * L, params.b)        # (Nk2, b)
    komega = kvecs.astype(float) @ om                 # (Nk2, nm)
    cond2 = (np.abs(komega) > eta).all(axis=0)
    fails["harmonic"] = float(1.0 - cond2.mean())
    ok &= cond2

    # (3) shifted, over the cube of radius L minus the resonant set
    kcube = np.vstack([np.zeros((1, params.b), dtype=int),
                       _k_vectors_within(L, params.b)])
    resonant = params.resonant_set()
    cond3 = np.ones(nm, dtype=bool)
    for ik, kv in enumerate(kcube):
        kw = kv.astype(float) @ om                    # (nm,)
        for i in range(len(space)):
            if Site(tuple(int(x) for x in kv), tuple(int(x) for x in space[i])) in resonant:
                continue
            cond3 &= np.abs(kw + mus[i]) > eta
    fails["shifted"] = float(1.0 - cond3.mean())
    ok &= cond3

    # (4) differences over the admissible pairs
    anchor_set = {tuple(a) for a in params.anchors}
    anchor_index = {tuple(a): l for l, a in enumerate(params.anchors, start=1)}
    kall = np.vstack([np.zeros((1, params.b), dtype=int), kvecs])
    cond4 = np.ones(nm, dtype=bool)
    pair_rows = []
    anchored_pairs = []
    for i in range(len(space)):
        for j in range(len(space)):
            if i == j:
                continue
            ni, nj = tuple(space[i]), tuple(space[j])
            if ni in anchor_set and nj in anchor_set:
                anchored_pairs.append((i, j))
            else:
                pair_rows.append((i, j))
    if pair_rows:
        diffs = np.stack([mus[i] - mus[j] for i, j in pair_rows])  # (Np, nm)
        for kv in kall:
            kw = kv.astype(float) @ om
            cond4 &= (np.abs(kw[None, :] + diffs) > eta).all(axis=0)
    for i, j in anchored_pairs:
        l, lp = anchor_index[tuple(space[i])], anchor_index[tuple(space[j])]
        e = np.array(unit_k(l, params.b)) - np.array(unit_k(lp, params.b))
        for kv in kall:
            if (kv + e == 0).all():
                continue  # identically-zero combination, excluded
            kw = kv.astype(float) @ om
            cond4 &= np.abs(kw + mus[i] - mus[j]) > eta
    fails["difference"] = float(1.0 - cond4.mean())
    ok &= cond4

    failing = float(1.0 - ok.mean())
    theoretical_bound = float(L) ** (50 * params.d * params.b**2) * eta ** (1.0 / (params.b + 2))
    certified = m_grid[ok]
    cert = Certificate(
        kind="admissible_m",
        inputs={"L": L, "eta": eta, "grid_points": nm},
        margin=(1.0 if len(certified) else -1.0),
        witnesses=((("certified_count",), float(len(certified))),
                   (("failing_fraction",), failing)),
        notes=f"theoretical complement bound {theoretical_bound:.6e} "
              f"({'feasible' if theoretical_bound < 1 else 'vacuous at this scale'})",
    )
    return AdmissibleMScan(
        certified_m=certified,
        failing_fraction=failing,
        theoretical_bound=theoretical_bound,
        theoretical_bound_feasible=bool(theoretical_bound < 1.0),
        condition_fail_fractions=fails,
        certificate=cert,
    )


def cluster_count(sigma: float, params: ModelParams, L: int, eta: float) -> int:
    """Max over the sign xi of #{(k,n), |(k,n)|<=L : |xi(sigma+k.w0)+mu_n| < eta/2}."""
    space = _space_sites_within(L, params.d)
    mus = _mu_array(space.astype(float), params, np.array([params.m]))[:, 0]
    om = omega0(params)
    kcube = np.vstack([np.zeros((1, params.b), dtype=int),
                       _k_vectors_within(L, params.b)])
    kw = kcube.astype(float) @ om                      # (Nk,)
    worst = 0
    for xi in (1.0, -1.0):
        vals = np.abs(xi * (sigma + kw)[:, None] + mus[None, :])
        worst = max(worst, int(np.count_nonzero(vals < eta / 2.0)))
    return worst


def cluster_scan(params: ModelParams, L: int, eta: float, sigma_grid) -> tuple:
    """(max cluster count over the grid, argmax sigma); vectorized scan."""
    sigma_grid = np.atleast_1d(np.asarray(sigma_grid, dtype=float))
    space = _space_sites_within(L, params.d)
    mus = _mu_array(space.astype(float), params, np.array([params.m]))[:, 0]
    om = omega0(params)
    kcube = np.vstack([np.zeros((1, params.b), dtype=int),
                       _k_vectors_within(L, params.b)])
    kw = kcube.astype(float) @ om
    best = (0, float(sigma_grid[0]))
    for xi in (1.0, -1.0):
        counts = np.zeros(len(sigma_grid), dtype=int)
        for w in kw:
            shift = xi * (sigma_grid + w)
            counts += (np.abs(shift[:, None] + mus[None, :]) < eta / 2.0).sum(axis=1)
        i = int(np.argmax(counts))
        if counts[i] > best[0]:
            best = (int(counts[i]), float(sigma_grid[i]))
    return best
