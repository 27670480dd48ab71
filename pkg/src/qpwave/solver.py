"""Staged construction of quasi-periodic solutions.

The lattice equation F(q) = 0 splits into P-equations (off the resonant
set, solved for q by a Newton scheme on geometrically growing boxes) and
Q-equations (on the resonant set, solved for the frequency vector omega;
the anchored amplitudes q = a_l/2 stay frozen exactly).  Each stage first
re-solves the Q-equations, then applies one smoothed Newton step
delta_q = -G * F(q) with G the inverse of the linearized operator
restricted to the stage box minus the resonant set, then re-solves Q again
so the resonant rows vanish identically in the reported residual.

A plain dense Newton iteration on the full truncated system (q off the
resonant set plus omega, no staging) serves as an independent validation
oracle.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import (FrequencyCollapse, InsufficientData, NonConvergence,
                     OracleDiverged, PreconditionFailed, ResonantBox)
from .lattice import ResonantSet, Site, canonical_k, cube, index_map, unit_k
from .linop import OperatorSpec, assemble, assemble_sparse
from .nonlin import (CoefficientField, ResidualReport, convolve_power,
                     linearize, pde_residual, residual, weighted_tail_norm)
from .spectrum import Certificate, ModelParams, mu, omega0


@dataclass(frozen=True)
class SolverConfig:
    """Staging, tolerances and linear-backend selection."""

    M: int = 3                      # box growth base; stage r box radius M^r
    r_max: int = 6
    residual_floor: float = 1e-12
    q_update_damping: float = 1.0   # damping on the omega^2 fixed point
    dense_size_limit: int = 5000    # dense factorization up to this size
    max_condition: float = 1e14
    coupling_limit: float = 0.1     # largest eps+delta the stage scheme accepts
    stage_tolerance_factor: float = 1e-2  # Q-solve tolerance vs current residual
    max_box_sites: int = 3_000_000  # admits the full default ladder M=3, r<=6

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("box growth base M must be >= 2")
        if not 0.0 < self.q_update_damping <= 1.0:
            raise ValueError("q_update_damping must lie in (0, 1]")


@dataclass(frozen=True)
class StageRecord:
    stage: int
    box_radius: int
    delta_q_norm: float
    residual_norm: float
    omega: tuple
    decay_rate: Optional[float]
    wall_time: float


@dataclass(frozen=True)
class IterationTrace:
    records: tuple

    def residuals(self) -> list:
        return [r.residual_norm for r in self.records]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class Solution:
    q: CoefficientField
    omega: tuple
    params: ModelParams
    config: SolverConfig
    trace: IterationTrace
    quality: dict
    certificates: Optional[dict] = None
    converged: bool = False


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    fit_residual: float
    n_points: int


@dataclass(frozen=True)
class OracleResult:
    q: CoefficientField
    omega: tuple
    residual_history: tuple
    final_residual: float
    iterations: int


# ---------------------------------------------------------------------------
# basic steps
# ---------------------------------------------------------------------------

def initial_field(params: ModelParams) -> CoefficientField:
    """The anchored seed: a_l/2 at (+-e_l, n^(l)), zero elsewhere."""
    entries = {}
    for l, (n, a) in enumerate(zip(params.anchors, params.amplitudes), start=1):
        entries[(unit_k(l, params.b), tuple(n))] = a / 2.0
    return CoefficientField.from_entries(entries, params.b, params.d)


def _q_equation_rhs(q: CoefficientField, params: ModelParams) -> np.ndarray:
    """Per anchor l: eps*(2/a_l)(Delta q)(e_l, n^(l)) + delta*(2/a_l)q_*^{p+1}."""
    power = convolve_power(q, params.p + 1) if params.delta != 0.0 else None
    out = np.zeros(params.b)
    for l, (n, a) in enumerate(zip(params.anchors, params.amplitudes), start=1):
        e = unit_k(l, params.b)
        lap = 0.0
        if params.eps != 0.0:
            for axis in range(params.d):
                for sgn in (-1, 1):
                    nb = tuple(x + (sgn if i == axis else 0)
                               for i, x in enumerate(n))
                    lap += q.get(e, nb)
        val = params.eps * (2.0 / a) * lap
        if power is not None:
            val += params.delta * (2.0 / a) * power.get(e, n)
        out[l - 1] = val
    return out


def q_step(q: CoefficientField, omega_current: Sequence[float],
           params: ModelParams, damping: float = 1.0,
           tolerance: float = 1e-14, max_sweeps: int = 50) -> np.ndarray:
    """Solve the Q-equations for omega at frozen q (damped fixed point on
    omega^2).

    omega_l^2 = (omega_l^0)^2 + eps*(2/a_l)(Delta q)(e_l, n^(l))
              + delta*(2/a_l) q_*^{p+1}(e_l, n^(l)).
    Raises FrequencyCollapse when a squared frequency would turn nonpositive.
    """
    for l, (n, a) in enumerate(zip(params.anchors, params.amplitudes), start=1):
        expected = a / 2.0
        if q.get(unit_k(l, params.b), n) != expected:
            raise PreconditionFailed(
                f"anchor value at l={l} is {q.get(unit_k(l, params.b), n)}, "
                f"expected a_l/2 = {expected}")
    om0_sq = omega0(params) ** 2
    target_sq = om0_sq + _q_equation_rhs(q, params)
    om_sq = np.asarray(omega_current, dtype=float) ** 2
    for _ in range(max_sweeps):
        new_sq = (1.0 - damping) * om_sq + damping * target_sq
        if (new_sq <= 0.0).any():
            raise FrequencyCollapse(
                f"nonpositive squared frequency {new_sq}; couplings too large")
        step = np.abs(np.sqrt(new_sq) - np.sqrt(np.maximum(om_sq, 0.0))).max()
        om_sq = new_sq
        if step < tolerance:
            break
    return np.sqrt(om_sq)


def _condition_estimate(solve_fn, matrix_norm: float, size: int,
                        sweeps: int = 8):
    """(condition estimate, near-null direction) via inverse power iteration."""
    v = np.ones(size) / math.sqrt(size)
    inv_norm = 0.0
    with np.errstate(all="ignore"):
        for _ in range(sweeps):
            v = solve_fn(v)
            nrm = float(np.linalg.norm(v))
            if not np.isfinite(nrm) or nrm == 0.0:
                return np.inf, v
            inv_norm = nrm
            v = v / nrm
    return matrix_norm * inv_norm, v


@dataclass(frozen=True)
class PStepResult:
    increment: CoefficientField
    box_radius: int
    box_sites: int
    condition_estimate: float


def p_step(q: CoefficientField, omega: Sequence[float], params: ModelParams,
           stage: int, config: SolverConfig) -> PStepResult:
    """One smoothed Newton increment on the stage box minus the resonant set.

    Solves (D(0) + eps*Delta + delta*T_q) dq = -F(q) restricted to the cube
    of radius M^stage with the resonant set removed; the returned increment
    is exactly symmetric in k and vanishes on the resonant set.  Raises
    ResonantBox when the restricted operator is singular or its condition
    estimate exceeds config.max_condition.
    """
    box = config.M ** stage
    resonant = params.resonant_set()
    for site in resonant.members:
        if site.norm > box:
            raise ResonantBox(
                f"stage box radius {box} does not contain the resonant set",
                stage=stage, site=site)
    region = cube(box, params.b, params.d, excluded=resonant)
    expected = 1
    for w in region.half_widths:
        expected *= 2 * w + 1
    if expected > config.max_box_sites:
        raise PreconditionFailed(
            f"stage {stage} box holds ~{expected} sites, above "
            f"max_box_sites={config.max_box_sites}; lower M or r_max")
    idx = index_map(region)
    sites = idx.sites
    n_sites = len(sites)

    kernel = linearize(q, params.p) if params.delta != 0.0 else None
    spec = OperatorSpec(region, 0.0, tuple(float(w) for w in omega), params, kernel)

    f_field = residual(q, omega, params).field
    rhs = np.zeros(n_sites)
    for i, site in enumerate(sites):
        rhs[i] = -f_field.get(site.k, site.n)

    if n_sites <= config.dense_size_limit:
        matrix = assemble(spec)
        matrix_norm = float(np.abs(matrix).sum(axis=1).max())
        try:
            with warnings.catch_warnings():
                # exact singularity is handled by the condition estimate below
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(matrix)
        except sla.LinAlgError as exc:
            raise ResonantBox(f"stage {stage} box factorization failed: {exc}",
                              stage=stage) from exc
        solve_fn = lambda v: sla.lu_solve((lu, piv), v)
    else:
        matrix = assemble_sparse(spec).tocsc()
        matrix_norm = float(abs(matrix).sum(axis=1).max())
        try:
            lu_sp = spla.splu(matrix)
        except RuntimeError as exc:
            raise ResonantBox(f"stage {stage} box factorization failed: {exc}",
                              stage=stage) from exc
        solve_fn = lu_sp.solve

    cond, null_dir = _condition_estimate(solve_fn, matrix_norm, n_sites)
    if not np.isfinite(cond) or cond > config.max_condition:
        worst = sites[int(np.argmax(np.abs(null_dir)))]
        raise ResonantBox(
            f"stage {stage} box (radius {box}) is resonant: condition estimate "
            f"{cond:.3e} at site {worst}", stage=stage, condition=float(cond),
            site=worst)

    x = solve_fn(rhs)
    entries = {}
    for i, site in enumerate(sites):
        k, n = site.k, site.n
        if canonical_k(k) != k:
            continue
        if any(k):
            j = idx.get((tuple(-v for v in k), n))
            val = 0.5 * (x[i] + x[j]) if j is not None else x[i]
        else:
            val = x[i]
        if val != 0.0:
            entries[(k, n)] = float(val)
    increment = CoefficientField.from_entries(entries, params.b, params.d)
    return PStepResult(increment=increment, box_radius=box, box_sites=n_sites,
                       condition_estimate=float(cond))


# ---------------------------------------------------------------------------
# decay fitting
# ---------------------------------------------------------------------------

def decay_fit(q: CoefficientField, resonant_set: Optional[ResonantSet] = None,
              min_points: int = 10, floor: float = 1e-30) -> DecayFit:
    """Least-squares decay rate of log|q| against |k| + |n| off the resonant
    set; the rate is the negated slope."""
    xs, ys = [], []
    for k, n, v in q.full_items():
        if resonant_set is not None and Site(k, n) in resonant_set:
            continue
        if abs(v) <= floor:
            continue
        order = max((abs(x) for x in k), default=0) + \
            max((abs(x) for x in n), default=0)
        xs.append(float(order))
        ys.append(math.log(abs(v)))
    if len(xs) < min_points or len(set(xs)) < 2:
        raise InsufficientData(
            f"decay fit needs >= {min_points} off-resonant points above "
            f"{floor:g}, got {len(xs)}")
    coeffs, res, *_ = np.polyfit(np.array(xs), np.array(ys), 1, full=True)
    return DecayFit(rate=float(-coeffs[0]), intercept=float(coeffs[1]),
                    fit_residual=float(res[0]) if len(res) else 0.0,
                    n_points=len(xs))


# ---------------------------------------------------------------------------
# the staged solve
# ---------------------------------------------------------------------------

def _quality_block(q: CoefficientField, omega: np.ndarray, params: ModelParams,
                   final_residual: ResidualReport) -> dict:
    resonant = params.resonant_set()
    anchors_ok = all(
        q.get(unit_k(l, params.b), n) == a / 2.0
        and q.get(tuple(-x for x in unit_k(l, params.b)), n) == a / 2.0
        for l, (n, a) in enumerate(zip(params.anchors, params.amplitudes), start=1))
    om0 = omega0(params)
    t_samples = np.linspace(0.0, 10.0, 16)
    return {
        "weighted_tail_rho": 0.1,
        "weighted_tail": weighted_tail_norm(q, 0.1, resonant),
        "tail_threshold": math.sqrt(params.eps + params.delta)
        if params.eps + params.delta > 0 else 0.0,
        "pde_residual_max": pde_residual(q, omega, params, t_samples),
        "anchors_exact": anchors_ok,
        "omega_deviation": float(np.abs(omega - om0).max()),
        "final_residual_l2": final_residual.l2_norm,
        "final_residual_sup": final_residual.sup_norm,
        "final_residual_l1": final_residual.l1_norm,
        "support_bound": q.support_bound(),
        "lattice_entries": q.num_lattice_entries,
    }


def solve(params: ModelParams, config: SolverConfig = SolverConfig(),
          certificates: Optional[dict] = None) -> Solution:
    """Alternate Q- and P-steps on growing boxes until the residual floor.

    Stage r (r = 1..r_max) uses the box of radius M^r.  Raises ResonantBox
    (propagated from p_step) and NonConvergence when the residual ratio
    stays >= 0.9 across three consecutive stages.
    """
    if params.eps + params.delta > config.coupling_limit:
        raise PreconditionFailed(
            f"eps+delta = {params.eps + params.delta} exceeds the configured "
            f"coupling limit {config.coupling_limit}")
    if params.eps > params.delta and params.delta > 0.0:
        warnings.warn("eps > delta: outside the regime the construction targets",
                      stacklevel=2)
    if certificates is not None:
        failed = [k for k, c in certificates.items()
                  if isinstance(c, Certificate) and not c.passed]
        if failed:
            raise PreconditionFailed(f"certificates failed: {failed}")

    q = initial_field(params)
    omega = omega0(params)
    rep = residual(q, omega, params)
    records = [StageRecord(stage=0, box_radius=0, delta_q_norm=0.0,
                           residual_norm=rep.l2_norm,
                           omega=tuple(float(w) for w in omega),
                           decay_rate=None, wall_time=0.0)]
    converged = rep.l2_norm <= config.residual_floor
    slow_stages = 0
    if not converged:
        for stage in range(1, config.r_max + 1):
            t0 = time.perf_counter()
            q_tol = max(config.stage_tolerance_factor * rep.l2_norm, 1e-16)
            omega = q_step(q, omega, params, config.q_update_damping, q_tol)
            step = p_step(q, omega, params, stage, config)
            q = q.add(step.increment)
            omega = q_step(q, omega, params, config.q_update_damping, q_tol)
            prev_norm = rep.l2_norm
            rep = residual(q, omega, params)
            try:
                rate = decay_fit(q, params.resonant_set()).rate
            except InsufficientData:
                rate = None
            records.append(StageRecord(
                stage=stage, box_radius=step.box_radius,
                delta_q_norm=step.increment.l2_norm(),
                residual_norm=rep.l2_norm,
                omega=tuple(float(w) for w in omega),
                decay_rate=rate,
                wall_time=time.perf_counter() - t0))
            if rep.l2_norm <= config.residual_floor:
                converged = True
                break
            slow_stages = slow_stages + 1 if rep.l2_norm >= 0.9 * prev_norm else 0
            if slow_stages >= 3:
                raise NonConvergence(
                    f"residual stagnated for 3 stages (now {rep.l2_norm:.3e})",
                    trace=IterationTrace(tuple(records)))

    trace = IterationTrace(tuple(records))
    quality = _quality_block(q, omega, params, rep)
    return Solution(q=q, omega=tuple(float(w) for w in omega), params=params,
                    config=config, trace=trace, quality=quality,
                    certificates=certificates, converged=converged)


# ---------------------------------------------------------------------------
# dense validation oracle
# ---------------------------------------------------------------------------

def brute_force_oracle(params: ModelParams, box: int, tolerance: float = 1e-13,
                       max_iterations: int = 50) -> OracleResult:
    """Plain dense Newton on the full truncated system (no staging).

    Unknowns are q at the canonical sites of the cube of radius ``box``
    minus the resonant set, plus the b frequencies; equations are F at those
    sites plus the b Q-equations.  The Jacobian is assembled in closed form.
    """
    resonant = params.resonant_set()
    region = cube(box, params.b, params.d, excluded=resonant)
    unknown_sites = [s for s in region.members() if canonical_k(s.k) == s.k]
    n_unknowns = len(unknown_sites)
    if n_unknowns + params.b > 10_000:
        raise ValueError(
            f"truncated system has {n_unknowns + params.b} unknowns (> 10^4)")
    col = {s: i for i, s in enumerate(unknown_sites)}
    anchor_rows = [(unit_k(l, params.b), tuple(n), a)
                   for l, (n, a) in enumerate(
                       zip(params.anchors, params.amplitudes), start=1)]

    frozen = {(unit_k(l, params.b), tuple(n)): a / 2.0
              for l, (n, a) in enumerate(
                  zip(params.anchors, params.amplitudes), start=1)}

    def field_of(x: np.ndarray) -> CoefficientField:
        entries = dict(frozen)
        for s, i in col.items():
            if x[i] != 0.0:
                entries[(s.k, s.n)] = x[i]
        return CoefficientField.from_entries(entries, params.b, params.d)

    def f_vector(x: np.ndarray) -> np.ndarray:
        qf = field_of(x)
        omega = x[n_unknowns:]
        ff = residual(qf, omega, params).field
        out = np.empty(n_unknowns + params.b)
        for s, i in col.items():
            out[i] = ff.get(s.k, s.n)
        for j, (e, n, _a) in enumerate(anchor_rows):
            out[n_unknowns + j] = ff.get(e, n)
        return out

    offsets = []
    for axis in range(params.d):
        for sgn in (-1, 1):
            offsets.append(tuple(sgn if i == axis else 0 for i in range(params.d)))

    def jacobian(x: np.ndarray) -> np.ndarray:
        qf = field_of(x)
        omega = x[n_unknowns:]
        kernel = linearize(qf, params.p) if params.delta != 0.0 else None
        kernel_slices = {}
        if kernel is not None:
            for k, n, v in kernel.full_items():
                kernel_slices.setdefault(n, {})[k] = v
        jac = np.zeros((n_unknowns + params.b, n_unknowns + params.b))

        def fill_row(row: int, k: tuple, n: tuple):
            kw = float(np.dot(k, omega))
            j = col.get(Site(k, n))
            if j is not None:
                jac[row, j] += mu(n, params) ** 2 - kw * kw
            if params.eps != 0.0:
                for off in offsets:
                    nb = tuple(xx + o for xx, o in zip(n, off))
                    j = col.get(Site(k, nb))
                    if j is not None:
                        jac[row, j] += params.eps
            sl = kernel_slices.get(n)
            if sl is not None:
                for koff, v in sl.items():
                    tgt = canonical_k(tuple(a - b for a, b in zip(k, koff)))
                    j = col.get(Site(tgt, n))
                    if j is not None:
                        jac[row, j] += params.delta * v
            qval = qf.get(k, n)
            for l in range(params.b):
                jac[row, n_unknowns + l] += -2.0 * kw * k[l] * qval

        for s, i in col.items():
            fill_row(i, s.k, s.n)
        for jrow, (e, n, _a) in enumerate(anchor_rows):
            fill_row(n_unknowns + jrow, e, n)
        return jac

    x = np.zeros(n_unknowns + params.b)
    x[n_unknowns:] = omega0(params)
    history = []
    for iteration in range(max_iterations):
        fv = f_vector(x)
        rnorm = float(np.linalg.norm(fv))
        history.append(rnorm)
        if rnorm < tolerance:
            qf = field_of(x)
            return OracleResult(q=qf, omega=tuple(float(w) for w in x[n_unknowns:]),
                                residual_history=tuple(history),
                                final_residual=rnorm, iterations=iteration)
        jac = jacobian(x)
        try:
            step = np.linalg.solve(jac, fv)
        except np.linalg.LinAlgError as exc:
            raise OracleDiverged(f"Jacobian singular at iteration {iteration}: "
                                 f"{exc}") from exc
        scale = 1.0
        for _ in range(30):
            trial = x - scale * step
            if np.linalg.norm(f_vector(trial)) < rnorm or scale < 1e-9:
                break
            scale *= 0.5
        else:
            raise OracleDiverged(
                f"step control failed at iteration {iteration} "
                f"(residual {rnorm:.3e})")
        x = x - scale * step
    raise OracleDiverged(
        f"no convergence in {max_iterations} iterations "
        f"(residual {history[-1]:.3e})")


def compare_with_oracle(solution: Solution, oracle: OracleResult,
                        box: Optional[int] = None) -> dict:
    """Sup-norm discrepancy between a staged solution and the oracle on the
    overlap of their boxes."""
    if box is None:
        box = min(solution.q.support_bound(), oracle.q.support_bound())
    worst = 0.0
    keys = set()
    for k, n, _v in solution.q.canonical_items():
        keys.add((k, n))
    for k, n, _v in oracle.q.canonical_items():
        keys.add((k, n))
    for k, n in keys:
        if max((abs(x) for x in k + n), default=0) > box:
            continue
        diff = abs(solution.q.get(k, n) - oracle.q.get(k, n))
        worst = max(worst, diff)
    omega_diff = float(np.abs(np.array(solution.omega) - np.array(oracle.omega)).max())
    return {"sup_discrepancy": worst, "omega_discrepancy": omega_diff,
            "overlap_box": box}
