"""Linearized operators on regions, Green's functions and empirical scans.

The operator is H(sigma) = D(sigma) + eps*Delta + delta*T_phi with diagonal
D(sigma) at (k, n) equal to mu_n^2 - (sigma + k.omega)^2, the discrete
Laplacian coupling l1-adjacent space sites at equal k, and the Toeplitz
convolution T_phi coupling equal-n sites through a symmetric kernel phi.

Green's function reports carry the operator norm, a fitted off-diagonal
decay rate and pass flags against the large-deviation thresholds
exp(M^rho2) and exp(-gamma' |j-j'|) for |j-j'| >= M^rho3.  Scans over the
spectral shift classify each grid sigma as good or bad for a subsampled
family of translated elementary regions; bad fractions are reported against
exp(-M^rho1).  Dense factorizations are used up to DENSE_LIMIT sites and a
sparse direct factorization above (deterministic in both cases).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import AsymmetricKernel, ComplementSingular, Singular
from .lattice import RegionSpec, ResonantSet, Site, index_map
from .nonlin import CoefficientField
from .spectrum import ModelParams, mu

DENSE_LIMIT = 5000
SINGULARITY_RTOL = 1e-14
DECAY_FIT_FLOOR = 1e-30
MAX_FAMILY_REGIONS = 64


@dataclass(frozen=True)
class Thresholds:
    """Large-deviation exponents; gamma_prime defaults to gamma - M^(-0.2)."""

    rho1: float = 0.1
    rho2: float = 0.7
    rho3: float = 0.9
    gamma_prime: Optional[float] = None

    def decay_rate(self, gamma: float, scale: float) -> float:
        if self.gamma_prime is not None:
            return self.gamma_prime
        return gamma - scale ** -0.2


@dataclass(frozen=True)
class OperatorSpec:
    """One restricted operator instance H(sigma) on a region.

    ``kernel`` is the symmetric convolution kernel phi (a CoefficientField,
    a raw {(k, n): value} mapping, or None for phi = 0).  For the linearized
    operator of a state q, pass ``nonlin.linearize(q, p)``.
    """

    region: RegionSpec
    sigma: float
    omega: tuple
    params: ModelParams
    kernel: Optional[Union[CoefficientField, dict]] = None

    def kernel_slices(self) -> Dict[tuple, Dict[tuple, float]]:
        """n -> {k_offset: phi(k_offset, n)} with symmetry validated."""
        if self.kernel is None:
            return {}
        if isinstance(self.kernel, CoefficientField):
            items = list(self.kernel.full_items())
        else:
            items = [(tuple(k), tuple(n), float(v))
                     for (k, n), v in self.kernel.items()]
            seen = {(k, n): v for k, n, v in items}
            for (k, n), v in seen.items():
                mirror = seen.get((tuple(-x for x in k), n))
                if mirror is None or mirror != v:
                    raise AsymmetricKernel(
                        f"kernel violates phi(k,n) = phi(-k,n) at ({k}, {n})")
        out: Dict[tuple, Dict[tuple, float]] = {}
        for k, n, v in items:
            out.setdefault(n, {})[k] = v
        return out


def _assemble_entries(spec: OperatorSpec):
    """(index, sites, rows, cols, values) for the symmetric matrix."""
    idx = index_map(spec.region)
    sites = idx.sites
    params = spec.params
    omega = np.asarray(spec.omega, dtype=float)
    slices = spec.kernel_slices()

    rows, cols, vals = [], [], []
    mu2_cache: Dict[tuple, float] = {}

    def mu2(n):
        if n not in mu2_cache:
            mu2_cache[n] = mu(n, params) ** 2
        return mu2_cache[n]

    offs = []
    for j in range(params.d):
        for s in (-1, 1):
            offs.append(tuple(s if i == j else 0 for i in range(params.d)))

    for i, site in enumerate(sites):
        k, n = site.k, site.n
        shift = spec.sigma + float(np.dot(k, omega))
        diag = mu2(n) - shift * shift
        sl = slices.get(n)
        if sl is not None:
            diag += params.delta * sl.get((0,) * params.b, 0.0)
        rows.append(i); cols.append(i); vals.append(diag)
        if params.eps != 0.0:
            for off in offs:
                j = idx.get((k, tuple(x + o for x, o in zip(n, off))))
                if j is not None:
                    rows.append(i); cols.append(j); vals.append(params.eps)
        if sl is not None and params.delta != 0.0:
            for koff, v in sl.items():
                if not any(koff):
                    continue
                j = idx.get((tuple(x - o for x, o in zip(k, koff)), n))
                if j is not None:
                    rows.append(i); cols.append(j); vals.append(params.delta * v)
    return idx, sites, rows, cols, vals


def assemble(spec: OperatorSpec) -> np.ndarray:
    """Dense symmetric matrix of H(sigma) on the region."""
    idx, sites, rows, cols, vals = _assemble_entries(spec)
    n = len(sites)
    out = np.zeros((n, n))
    for r, c, v in zip(rows, cols, vals):
        out[r, c] += v
    return out


def assemble_sparse(spec: OperatorSpec) -> sp.csr_matrix:
    """CSR matrix of H(sigma); preferred above DENSE_LIMIT sites."""
    idx, sites, rows, cols, vals = _assemble_entries(spec)
    n = len(sites)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# Green's function diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GreenReport:
    """Inverse diagnostics for one region and shift."""

    scale: float                 # M used for the threshold comparisons
    operator_norm: float
    norm_bound: float            # exp(M^rho2)
    norm_ok: bool
    decay_rate_fit: float        # gamma-hat; nan when no far pairs exist
    decay_fit_residual: float
    decay_ok: bool
    decay_rate_required: float   # gamma'
    min_distance: float          # M^rho3
    n_far_pairs: int
    smallest_singular_value: float
    condition: float
    inverse_residual: float      # max |A G - I|


def _pair_distances(sites) -> np.ndarray:
    vecs = np.array([s.vector for s in sites])
    return np.abs(vecs[:, None, :] - vecs[None, :, :]).max(axis=-1)


def _green_report(matrix: np.ndarray, sites, scale: float, thresholds: Thresholds,
                  gamma: float, decay_rate: Optional[float] = None) -> GreenReport:
    eigvals = np.linalg.eigvalsh(matrix)
    abs_eig = np.abs(eigvals)
    smallest, largest = float(abs_eig.min()), float(abs_eig.max())
    if smallest < SINGULARITY_RTOL * largest or smallest == 0.0:
        raise Singular(f"matrix numerically singular (min |eig| = {smallest:.3e})",
                       smallest_singular_value=smallest)
    green = np.linalg.inv(matrix)
    norm = 1.0 / smallest
    inv_res = float(np.abs(matrix @ green - np.eye(len(sites))).max())

    norm_bound = math.exp(scale ** thresholds.rho2)
    rate_req = decay_rate if decay_rate is not None \
        else thresholds.decay_rate(gamma, scale)
    min_dist = scale ** thresholds.rho3

    dists = _pair_distances(sites)
    far = dists >= min_dist
    np.fill_diagonal(far, False)
    n_far = int(np.count_nonzero(far))
    decay_ok = bool((np.abs(green[far]) <= np.exp(-rate_req * dists[far])).all()) \
        if n_far else True

    rate_fit, fit_res = float("nan"), float("nan")
    if n_far:
        g = np.abs(green[far])
        x = dists[far]
        keep = g > DECAY_FIT_FLOOR
        if np.count_nonzero(keep) >= 2 and len(np.unique(x[keep])) >= 2:
            coeffs, res, *_ = np.polyfit(x[keep], np.log(g[keep]), 1, full=True)
            rate_fit = float(-coeffs[0])
            fit_res = float(res[0]) if len(res) else 0.0

    return GreenReport(
        scale=scale,
        operator_norm=norm,
        norm_bound=norm_bound,
        norm_ok=bool(norm <= norm_bound),
        decay_rate_fit=rate_fit,
        decay_fit_residual=fit_res,
        decay_ok=decay_ok,
        decay_rate_required=rate_req,
        min_distance=min_dist,
        n_far_pairs=n_far,
        smallest_singular_value=smallest,
        condition=largest / smallest,
        inverse_residual=inv_res,
    )


def green(spec: OperatorSpec, thresholds: Thresholds = Thresholds(),
          scale: Optional[float] = None) -> GreenReport:
    """Invert H(sigma) on the region and evaluate the LDE inequalities.

    ``scale`` defaults to the region diameter.  Raises Singular when the
    smallest |eigenvalue| is below SINGULARITY_RTOL times the largest.
    """
    matrix = assemble(spec)
    sites = spec.region.members()
    m_scale = float(spec.region.diameter()) if scale is None else float(scale)
    return _green_report(matrix, sites, m_scale, thresholds, spec.params.gamma)


def green_matrix(spec: OperatorSpec) -> np.ndarray:
    """The bare inverse, singular-guarded (for identities and oracles)."""
    matrix = assemble(spec)
    eigvals = np.abs(np.linalg.eigvalsh(matrix))
    if eigvals.min() < SINGULARITY_RTOL * eigvals.max():
        raise Singular("matrix numerically singular",
                       smallest_singular_value=float(eigvals.min()))
    return np.linalg.inv(matrix)


# ---------------------------------------------------------------------------
# elementary-region families and the LDE scan
# ---------------------------------------------------------------------------

def elementary_region_family(M: int, b: int, d: int,
                             excluded: Optional[ResonantSet] = None,
                             max_regions: int = MAX_FAMILY_REGIONS) -> list:
    """Subsampled family of translated elementary regions of scale M.

    Base rectangles have half-width w = M//2 (even M gives diameter exactly
    M); shifts z range over no-shift, half-overlap, corner and unit offsets,
    and space translations over 0, +-M, +-2M along each axis (the |n| <= 2M
    translation range).  Duplicate member sets are removed and the family is
    truncated to ``max_regions``; the truncation is part of the scan report.
    """
    if M < 2:
        raise ValueError(f"scale M must be >= 2, got {M}")
    w = M // 2
    dim = b + d
    shifts = [(0,) * dim]
    for axis in range(dim):
        for mag in (w, 1, -w):
            if mag == 0:
                continue
            shifts.append(tuple(mag if i == axis else 0 for i in range(dim)))
    shifts.append((w,) * dim)

    translations = [(0,) * d]
    for axis in range(d):
        for mag in (M, -M, 2 * M, -2 * M):
            translations.append(tuple(mag if i == axis else 0 for i in range(d)))

    family, seen = [], set()
    for tn in translations:
        center = Site((0,) * b, tn)
        for z in shifts:
            spec = RegionSpec(center, (w,) * dim, z, b, d, excluded)
            members = spec.members()
            if not members:
                continue
            key = members
            if key in seen:
                continue
            seen.add(key)
            family.append(spec)
            if len(family) >= max_regions:
                return family
    return family


@dataclass(frozen=True)
class LdeScanReport:
    """Good/bad classification of a sigma grid for one scale."""

    scale: int
    sigma_grid: np.ndarray
    bad_flags: np.ndarray
    worst_norm: np.ndarray           # per sigma, max over regions (inf if singular)
    worst_decay_margin: np.ndarray   # per sigma, min of bound - |G| over far pairs
    bad_fraction: float
    bad_measure: float               # bad_fraction * window length
    window: tuple
    comparison_value: float          # exp(-M^rho1)
    bad_intervals: tuple
    n_regions: int
    subsampled: bool
    thresholds: Thresholds

    @property
    def passes(self) -> bool:
        return self.bad_fraction <= self.comparison_value


def default_sigma_window(M: int, params: ModelParams,
                         omega: Sequence[float]) -> tuple:
    """Window covering the shifts k.omega arising up to scale 2M plus the
    spectral radius."""
    reach = 2 * M * float(np.abs(np.asarray(omega)).sum()) \
        + math.sqrt(params.m + 1.0) + 1.0
    return (-reach, reach)


def lde_scan(M: int, params: ModelParams, omega: Sequence[float],
             kernel: Optional[CoefficientField] = None,
             sigma_grid: Optional[np.ndarray] = None,
             thresholds: Thresholds = Thresholds(),
             max_regions: int = MAX_FAMILY_REGIONS,
             num_sigma: int = 1601) -> LdeScanReport:
    """Classify a sigma grid against the LDE inequalities at scale M.

    A sigma is bad when any family region violates the norm bound
    exp(M^rho2) or the off-diagonal decay bound at distance >= M^rho3
    (singular restrictions count as bad).  The fraction of bad grid points
    and its scaling to measure on the window are reported against
    exp(-M^rho1); at desk scales the meaningful comparison is the fraction
    (the asymptotic absolute-measure bound requires scales far beyond any
    grid this tool runs).
    """
    resonant = params.resonant_set()
    family = elementary_region_family(M, params.b, params.d, resonant,
                                      max_regions)
    subsampled = len(family) >= max_regions
    if sigma_grid is None:
        lo, hi = default_sigma_window(M, params, omega)
        sigma_grid = np.linspace(lo, hi, num_sigma)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    window = (float(sigma_grid.min()), float(sigma_grid.max()))

    norm_bound = math.exp(float(M) ** thresholds.rho2)
    rate_req = thresholds.decay_rate(params.gamma, float(M))
    min_dist = float(M) ** thresholds.rho3

    # precompute per-region data; sigma enters the diagonal only
    prepared = []
    for spec_region in family:
        spec0 = OperatorSpec(spec_region, 0.0, tuple(omega), params, kernel)
        base = assemble(spec0)
        sites = spec_region.members()
        kw = np.array([float(np.dot(s.k, np.asarray(omega))) for s in sites])
        mu2 = np.array([mu(s.n, params) ** 2 for s in sites])
        base_offdiag = base - np.diag(np.diag(base))
        diag_rest = np.diag(base) - (mu2 - kw**2)  # kernel's phi(0, n) part
        dists = _pair_distances(sites)
        far = dists >= min_dist
        np.fill_diagonal(far, False)
        decay_bound = np.exp(-rate_req * dists)
        prepared.append((base_offdiag, diag_rest, kw, mu2, far, decay_bound))

    n_sigma = len(sigma_grid)
    bad = np.zeros(n_sigma, dtype=bool)
    worst_norm = np.zeros(n_sigma)
    worst_decay = np.full(n_sigma, np.inf)
    for isg, sigma in enumerate(sigma_grid):
        for base_offdiag, diag_rest, kw, mu2, far, decay_bound in prepared:
            a = base_offdiag.copy()
            shift = sigma + kw
            np.fill_diagonal(a, mu2 - shift**2 + diag_rest)
            eig = np.abs(np.linalg.eigvalsh(a))
            smallest, largest = eig.min(), eig.max()
            if smallest < SINGULARITY_RTOL * largest or smallest == 0.0:
                bad[isg] = True
                worst_norm[isg] = np.inf
                continue
            norm = 1.0 / smallest
            worst_norm[isg] = max(worst_norm[isg], norm)
            if norm > norm_bound:
                bad[isg] = True
                continue
            if far.any():
                g = np.linalg.inv(a)
                margin = float((decay_bound[far] - np.abs(g[far])).min())
                worst_decay[isg] = min(worst_decay[isg], margin)
                if margin < 0.0:
                    bad[isg] = True

    frac = float(bad.mean())
    length = window[1] - window[0]
    intervals = []
    start = None
    for i, flag in enumerate(bad):
        if flag and start is None:
            start = sigma_grid[i]
        elif not flag and start is not None:
            intervals.append((float(start), float(sigma_grid[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(start), float(sigma_grid[-1])))

    return LdeScanReport(
        scale=M,
        sigma_grid=sigma_grid,
        bad_flags=bad,
        worst_norm=worst_norm,
        worst_decay_margin=worst_decay,
        bad_fraction=frac,
        bad_measure=frac * length,
        window=window,
        comparison_value=math.exp(-float(M) ** thresholds.rho1),
        bad_intervals=tuple(intervals),
        n_regions=len(family),
        subsampled=subsampled,
        thresholds=thresholds,
    )


def diagonal_bad_intervals(M: int, params: ModelParams, omega: Sequence[float],
                           thresholds: Thresholds = Thresholds(),
                           max_regions: int = MAX_FAMILY_REGIONS) -> list:
    """Explicit resonance intervals for the uncoupled (eps=delta=0) operator.

    With no off-diagonal part, sigma is bad iff some family site satisfies
    |mu_n^2 - (sigma + k.omega)^2| <= exp(-M^rho2), i.e. |sigma + k.omega|
    lies in [sqrt(mu^2 - t), sqrt(mu^2 + t)].  Returns merged intervals.
    """
    resonant = params.resonant_set()
    family = elementary_region_family(M, params.b, params.d, resonant,
                                      max_regions)
    t = math.exp(-float(M) ** thresholds.rho2)
    raw = []
    seen = set()
    for region in family:
        for site in region.members():
            key = site
            if key in seen:
                continue
            seen.add(key)
            kw = float(np.dot(site.k, np.asarray(omega)))
            m2 = mu(site.n, params) ** 2
            lo = math.sqrt(max(m2 - t, 0.0))
            hi = math.sqrt(m2 + t)
            for sign in (1.0, -1.0):
                # |sigma + kw| in [lo, hi]
                raw.append((sign * lo - kw, sign * hi - kw) if sign > 0
                           else (sign * hi - kw, sign * lo - kw))
    raw.sort()
    merged = []
    for lo, hi in raw:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


# ---------------------------------------------------------------------------
# Schur complement and per-k block diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchurReport:
    schur_matrix: np.ndarray
    min_singular_value: float
    complement_green_norm: float
    green_norm: float
    bound_rhs: float
    bound_holds: bool


def schur_complement(spec: OperatorSpec, b_star: Sequence) -> SchurReport:
    """Schur reduction onto the near-singular block B*.

    S = H_BB - H_Bc G_c H_cB with G_c the complement inverse; additionally
    verifies the inversion bound |G| <= 4 (1 + |G_c|)^2 (1 + |S^-1|) on the
    instance.  Raises ComplementSingular when the complement block cannot
    be inverted.
    """
    idx = index_map(spec.region)
    matrix = assemble(spec)
    n = idx.size
    b_idx = sorted({idx.index_of(s) for s in b_star})
    c_idx = [i for i in range(n) if i not in set(b_idx)]

    if c_idx:
        hcc = matrix[np.ix_(c_idx, c_idx)]
        eig = np.abs(np.linalg.eigvalsh(hcc))
        if eig.min() < SINGULARITY_RTOL * max(eig.max(), 1.0):
            raise ComplementSingular(
                f"complement block singular (min |eig| = {eig.min():.3e})")
        gcc = np.linalg.inv(hcc)
        gc_norm = 1.0 / eig.min()
    else:
        gcc = np.zeros((0, 0))
        gc_norm = 0.0

    if b_idx:
        hbb = matrix[np.ix_(b_idx, b_idx)]
        hbc = matrix[np.ix_(b_idx, c_idx)]
        schur = hbb - hbc @ gcc @ hbc.T
        s_eig = np.abs(np.linalg.eigvalsh(schur))
        s_min = float(s_eig.min())
        s_inv_norm = np.inf if s_min == 0.0 else 1.0 / s_min
    else:
        schur = np.zeros((0, 0))
        s_min = float("inf")
        s_inv_norm = 0.0

    eig_full = np.abs(np.linalg.eigvalsh(matrix))
    g_norm = np.inf if eig_full.min() == 0.0 else 1.0 / eig_full.min()
    rhs = 4.0 * (1.0 + gc_norm) ** 2 * (1.0 + s_inv_norm)
    return SchurReport(
        schur_matrix=schur,
        min_singular_value=s_min,
        complement_green_norm=gc_norm,
        green_norm=float(g_norm),
        bound_rhs=float(rhs),
        bound_holds=bool(g_norm <= rhs),
    )


@dataclass(frozen=True)
class BlockSpectralReport:
    eigenvalues: np.ndarray      # zeta_l of the fixed-k space block
    inverse_norm_bound: float    # max_l 1 / |zeta_l - (sigma + k.omega)^2|
    direct_inverse_norm: float
    negative_shift: bool         # some zeta_l <= 0 (reported, not hidden)


def block_spectral_bound(k: Sequence[int], space_sites: Sequence,
                         sigma: float, omega: Sequence[float],
                         params: ModelParams) -> BlockSpectralReport:
    """Eigenvalues of the fixed-k space block and the induced inverse bound.

    The block R(D(sigma) + eps*Delta)R at fixed k has eigenvalues
    zeta_l - (sigma + k.omega)^2 where zeta_l are the eigenvalues of
    diag(mu_n^2) + eps*Delta on the space sites; the inverse norm equals
    max_l |sigma + k.omega - sqrt(zeta_l)|^-1 |sigma + k.omega + sqrt(zeta_l)|^-1
    for positive zeta_l.  Cross-checked against direct inversion.
    """
    sites = [tuple(int(x) for x in n) for n in space_sites]
    nn = len(sites)
    pos = {s: i for i, s in enumerate(sites)}
    block = np.zeros((nn, nn))
    for s, i in pos.items():
        block[i, i] = mu(s, params) ** 2
        for j_axis in range(params.d):
            for sgn in (-1, 1):
                nb = tuple(x + (sgn if a == j_axis else 0)
                           for a, x in enumerate(s))
                j = pos.get(nb)
                if j is not None:
                    block[i, j] += params.eps
    zetas = np.linalg.eigvalsh(block)
    shift = float(sigma + np.dot(k, np.asarray(omega, dtype=float)))
    gaps = np.abs(zetas - shift**2)
    inv_bound = np.inf if gaps.min() == 0.0 else float(1.0 / gaps.min())
    full = block - shift**2 * np.eye(nn)
    eig_full = np.abs(np.linalg.eigvalsh(full))
    direct = np.inf if eig_full.min() == 0.0 else float(1.0 / eig_full.min())
    return BlockSpectralReport(
        eigenvalues=zetas,
        inverse_norm_bound=inv_bound,
        direct_inverse_norm=direct,
        negative_shift=bool((zetas <= 0.0).any()),
    )


# ---------------------------------------------------------------------------
# auxiliary quasi-periodic Schrodinger block operator
# ---------------------------------------------------------------------------

def qp_schrodinger_matrix(space_sites: Sequence, energy: float, theta: float,
                          params: ModelParams) -> np.ndarray:
    """R_Q (cos(theta_rad + n.alpha_rad) + m - E + eps*Delta) R_Q on Z^d.

    ``theta`` follows the package convention: supplied in [0,1], scaled by
    2*pi internally.
    """
    sites = [tuple(int(x) for x in n) for n in space_sites]
    pos = {s: i for i, s in enumerate(sites)}
    nn = len(sites)
    alpha = np.asarray(params.alpha)
    out = np.zeros((nn, nn))
    for s, i in pos.items():
        phase = 2.0 * math.pi * (float(np.dot(s, alpha)) + theta)
        out[i, i] = math.cos(phase) + params.m - energy
        for axis in range(params.d):
            for sgn in (-1, 1):
                nb = tuple(x + (sgn if a == axis else 0) for a, x in enumerate(s))
                j = pos.get(nb)
                if j is not None:
                    out[i, j] += params.eps
    return out


def qp_schrodinger_green(space_region: Union[RegionSpec, Sequence], energy: float,
                         theta: float, params: ModelParams,
                         thresholds: Thresholds = Thresholds(),
                         scale: Optional[float] = None) -> GreenReport:
    """Green diagnostics for the auxiliary space-direction block operator.

    The norm bound is exp(sqrt(N)) and the required off-diagonal rate is
    |log eps| / 2 at distances >= N^rho3 (N the region scale).  Raises
    Singular for near-singular instances; the verdict is per (E, theta).
    """
    if isinstance(space_region, RegionSpec):
        sites = [s.n for s in space_region.members()]
        n_scale = float(space_region.diameter()) if scale is None else float(scale)
    else:
        sites = [tuple(int(x) for x in n) for n in space_region]
        if scale is None:
            arr = np.array(sites)
            n_scale = float((arr.max(axis=0) - arr.min(axis=0)).max())
        else:
            n_scale = float(scale)
    matrix = qp_schrodinger_matrix(sites, energy, theta, params)
    # eps = 0 decouples the sites entirely: the required rate is infinite and
    # the (identically zero) off-diagonal satisfies it.
    rate = 0.5 * abs(math.log(params.eps)) if params.eps > 0.0 else math.inf
    site_objs = [Site((), n) for n in sites]
    report = _green_report(matrix, site_objs, n_scale, thresholds,
                           params.gamma, decay_rate=rate)
    # replace the generic norm bound exp(N^rho2) by exp(sqrt(N))
    bound = math.exp(math.sqrt(n_scale))
    return GreenReport(
        scale=report.scale,
        operator_norm=report.operator_norm,
        norm_bound=bound,
        norm_ok=bool(report.operator_norm <= bound),
        decay_rate_fit=report.decay_rate_fit,
        decay_fit_residual=report.decay_fit_residual,
        decay_ok=report.decay_ok,
        decay_rate_required=rate,
        min_distance=report.min_distance,
        n_far_pairs=report.n_far_pairs,
        smallest_singular_value=report.smallest_singular_value,
        condition=report.condition,
        inverse_residual=report.inverse_residual,
    )


def qp_schrodinger_theta_scan(N: int, energy: float, params: ModelParams,
                              theta_grid, thresholds: Thresholds = Thresholds(),
                              rho4: float = 0.05) -> dict:
    """Fraction of theta grid points violating the auxiliary bounds.

    rho4 is a free report parameter: the comparison value is exp(-N^rho4).
    """
    half = N // 2
    sites = [(x,) for x in range(-half, half + 1)] if params.d == 1 else \
        [tuple(v) for v in np.stack(np.meshgrid(
            *([np.arange(-half, half + 1)] * params.d), indexing="ij"),
            axis=-1).reshape(-1, params.d)]
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    bad = 0
    for theta in theta_grid:
        try:
            rep = qp_schrodinger_green(sites, energy, float(theta), params,
                                       thresholds, scale=float(N))
            if not (rep.norm_ok and rep.decay_ok):
                bad += 1
        except Singular:
            bad += 1
    frac = bad / len(theta_grid)
    return {
        "scale": N,
        "energy": energy,
        "bad_fraction": frac,
        "comparison_value": math.exp(-float(N) ** rho4),
        "rho4": rho4,
        "theta_points": len(theta_grid),
        "passes": frac <= math.exp(-float(N) ** rho4),
    }
