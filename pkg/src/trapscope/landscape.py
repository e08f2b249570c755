"""Landscape analysis at the zero control: arbitrary-order directional
differentials of the objective, numerically fitted Taylor coefficients,
Lie-algebra controllability rank, a non-optimality witness search, and the
assembled trap certificate.

For a direction f, the Taylor coefficient of order n of t -> J(t*f) equals

    c_n = sum_{j=0}^{n} sum_{l=1}^{N-1} (-1)^{n-j} i^n lambda_l
          A^j_l(f) conj(A^{n-j}_l(f)),

with the chronological forms A of the dynamics module and the observable
normalized so lambda_N = 0.  The certificate checks, direction by direction:
stationarity (c_1 = 0), strict second-order descent off the mean-zero
subspace, flatness of orders 3..2N-3 on it, and the non-negative matching
coefficient at order 2N-2; plus the Lie-rank controllability proxy and a
best-effort witness that the zero control is not a global maximum.

Analytic values (from the forms) are the primary evidence; the polynomial
fit of sampled objective values cross-validates them at the largest sample
radius whose fit residual stays acceptable, since very small radii push the
high-order coefficients under the roundoff floor of the objective.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .controls import PiecewiseControl, integral, norm, random_direction
from .dynamics import DysonForms, dyson_forms, objective, propagate
from .errors import (
    DomainError,
    IllConditioned,
    InsufficientOrder,
    NonRealResult,
    TrapscopeError,
)
from .model import ProblemInstance, SystemSpec, h0_matrix, v_matrix


def differential(inst: ProblemInstance, forms: DysonForms, n: int) -> float:
    """n-th Taylor coefficient (1/n! J^(n)) of the objective along forms' direction.

    Requires the normalized observable (lambda_N = 0), which every
    Observable built by this package satisfies.  The double sum is real up
    to roundoff; a large imaginary residue signals corrupted forms.
    """
    if n < 1:
        raise DomainError(f"order must be >= 1, got {n}")
    if n > forms.n_max:
        raise InsufficientOrder(f"forms extend to order {forms.n_max}, requested {n}")
    lam = inst.observable.eigenvalues
    nlev = forms.levels
    ipow = 1j ** (n % 4)
    total = 0j
    scale = 0.0
    for j in range(n + 1):
        sign = (-1.0) ** (n - j)
        for l in range(1, nlev):  # lambda_N = 0 removes l = N
            term = sign * ipow * lam[l - 1] * forms.value(j, l) * np.conj(forms.value(n - j, l))
            total += term
            scale += abs(term)
    if abs(total.imag) > 1e-10 * max(1.0, scale):
        raise NonRealResult(
            f"imaginary residue {total.imag:.3e} too large for scale {scale:.3e} at order {n}"
        )
    return float(total.real)


def order_2N2_value(inst: ProblemInstance, forms: DysonForms) -> float:
    """Coefficient lambda_1 |A^{N-1}_1|^2 of order 2N-2, for mean-zero directions.

    The caller is responsible for the direction being mean-zero; only then
    is this the leading surviving Taylor coefficient.
    """
    nlev = inst.system.levels
    if forms.n_max < nlev - 1:
        raise InsufficientOrder(f"forms extend to order {forms.n_max}, need {nlev - 1}")
    lam1 = inst.observable.eigenvalues[0]
    return float(lam1 * abs(forms.value(nlev - 1, 1)) ** 2)


@dataclass(frozen=True)
class TaylorFit:
    """Least-squares Taylor coefficients of t -> J(t*f) - J(0).

    coefficients[k-1] is the fitted coefficient of t^k.  `accepted` records
    whether the residual criterion was met at `t_grid_radius` (the probe
    scale also used as the per-direction epsilon in certificates).
    """

    max_order: int
    coefficients: tuple[float, ...]
    residual: float
    t_grid_radius: float
    condition: float
    accepted: bool

    def coefficient(self, k: int) -> float:
        if not 1 <= k <= self.max_order:
            raise DomainError(f"coefficient index {k} outside 1..{self.max_order}")
        return self.coefficients[k - 1]


def taylor_fit(
    inst: ProblemInstance,
    f: PiecewiseControl,
    max_order: int,
    radius: float,
    points: int | None = None,
    max_shrink: int = 6,
) -> TaylorFit:
    """Fit sum_k c_k t^k to sampled objective values along the ray t*f.

    Samples on the symmetric grid t = +-radius*{1/points, ..., 1}; even and
    odd orders then decouple exactly.  The radius is halved up to
    `max_shrink` times; the accepted radius is the largest one whose RMS
    residual is below max(1e-3 |c_max| r^max, roundoff floor).  If none
    qualifies the best ratio wins and `accepted` is False.
    """
    if radius <= 0.0:
        raise DomainError(f"radius must be positive, got {radius!r}")
    if max_order < 1:
        raise DomainError(f"max_order must be >= 1, got {max_order}")
    if points is None:
        points = 2 * max_order + 8
    if points < 2 * max_order + 4:
        raise DomainError(f"need points >= {2 * max_order + 4}, got {points}")

    sys = inst.system
    u = np.concatenate([-np.arange(points, 0, -1), np.arange(1, points + 1)]) / points
    design = np.column_stack([u**k for k in range(1, max_order + 1)])
    condition = float(np.linalg.cond(design))
    if condition > 1e12:
        raise IllConditioned(f"design matrix condition {condition:.3e} exceeds 1e12")

    j0 = objective(propagate(sys, f.scaled(0.0)), inst)
    lam_scale = max(1.0, max(abs(x) for x in inst.observable.eigenvalues))
    noise_floor = 3e-15 * lam_scale

    best = None
    best_ratio = math.inf
    r = float(radius)
    for _ in range(max_shrink + 1):
        g = np.array([objective(propagate(sys, f.scaled(r * ui)), inst) - j0 for ui in u])
        coef_u, *_ = np.linalg.lstsq(design, g, rcond=None)
        resid = float(np.sqrt(np.mean((design @ coef_u - g) ** 2)))
        coeffs = tuple(float(coef_u[k - 1] / r**k) for k in range(1, max_order + 1))
        threshold = max(1e-3 * abs(coeffs[-1]) * r**max_order, noise_floor)
        ratio = resid / threshold
        if ratio <= 1.0:
            return TaylorFit(max_order, coeffs, resid, r, condition, True)
        if ratio < best_ratio:
            best_ratio = ratio
            best = (coeffs, resid, r)
        r *= 0.5
    coeffs, resid, r = best
    return TaylorFit(max_order, coeffs, resid, r, condition, False)


@dataclass(frozen=True)
class LieAlgebraResult:
    """Outcome of the dynamical Lie-algebra rank computation."""

    dimension: int
    saturated: bool
    depth_reached: int
    tolerance: float


def _mat_from_vec(v: np.ndarray, n: int) -> np.ndarray:
    return v[: n * n].reshape(n, n) + 1j * v[n * n :].reshape(n, n)


def lie_rank_matrices(gen_a, gen_b, tol: float = 1e-9, max_depth: int = 12) -> LieAlgebraResult:
    """Real dimension of the Lie algebra generated by two skew-Hermitian matrices.

    Breadth-first closure under commutators with the generators, with
    Gram-Schmidt orthonormalization over the real vector space of dimension
    2 N^2.  Saturated means dimension >= N^2 - 1, full su(N) up to the
    global phase quotiented out in the controllability definition.
    """
    if tol <= 0.0:
        raise DomainError(f"tolerance must be positive, got {tol!r}")
    a = np.asarray(gen_a, dtype=np.complex128)
    b = np.asarray(gen_b, dtype=np.complex128)
    n = a.shape[0]
    basis: list[np.ndarray] = []

    def try_add(x: np.ndarray) -> np.ndarray | None:
        nrm = float(np.linalg.norm(x, "fro"))
        if nrm < 1e-300:
            return None
        v = np.concatenate([(x.real / nrm).ravel(), (x.imag / nrm).ravel()])
        for _ in range(2):  # two Gram-Schmidt passes for orthogonality to roundoff
            for bv in basis:
                v = v - np.dot(bv, v) * bv
        res = float(np.linalg.norm(v))
        if res <= tol:
            return None
        v = v / res
        basis.append(v)
        return _mat_from_vec(v, n)

    gens = []
    frontier = []
    for g in (a, b):
        added = try_add(g)
        gnrm = float(np.linalg.norm(g, "fro"))
        if gnrm > 0.0:
            gens.append(g / gnrm)
        if added is not None:
            frontier.append(added)
    depth = 1
    # span of skew-Hermitian matrices can never exceed dim u(N) = N^2
    while frontier and len(basis) < n * n and depth < max_depth:
        depth += 1
        fresh = []
        for g in gens:
            for x in frontier:
                added = try_add(g @ x - x @ g)
                if added is not None:
                    fresh.append(added)
        frontier = fresh
    return LieAlgebraResult(
        dimension=len(basis),
        saturated=len(basis) >= n * n - 1,
        depth_reached=depth,
        tolerance=tol,
    )


def lie_rank(sys: SystemSpec, tol: float = 1e-9, max_depth: int = 12) -> LieAlgebraResult:
    """Rank test for the controlled pair: algebra generated by iH0 and iV."""
    return lie_rank_matrices(1j * h0_matrix(sys), 1j * v_matrix(sys), tol=tol, max_depth=max_depth)


@dataclass(frozen=True)
class WitnessResult:
    """Best control found by the non-optimality search at one horizon."""

    control: PiecewiseControl
    j_value: float
    success: bool
    evaluations: int
    horizon: float


def witness_search(
    inst: ProblemInstance,
    seed: int,
    budget: int,
    amplitude_range: tuple[float, float] = (0.1, 2.0),
    segments: int = 64,
    refine_rounds: int = 5,
) -> WitnessResult:
    """Search for a control scoring above the zero control.

    `budget` seeded random controls, then coordinate-wise greedy refinement
    of the best: first-improvement scan in fixed index order, step halved
    after a fruitless full pass, `refine_rounds` passes.  Success means
    J > J(0) + 0.01 (lambda_1 - lambda_N).  Failure is an outcome, not an
    error; existence of good controls is only guaranteed for long enough
    horizons, and the minimal such horizon is unknown.
    """
    if budget < 1:
        raise DomainError(f"budget must be >= 1, got {budget}")
    lo, hi = float(amplitude_range[0]), float(amplitude_range[1])
    if not 0.0 < lo <= hi:
        raise DomainError(f"bad amplitude range {amplitude_range!r}")
    sys = inst.system
    evals = 0

    def score(vals: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        f = PiecewiseControl(sys.horizon, tuple(float(x) for x in vals))
        return objective(propagate(sys, f), inst)

    rng = np.random.default_rng(int(seed))
    best_vals = np.zeros(segments)
    best_j = -math.inf
    for _ in range(budget):
        amp = rng.uniform(lo, hi)
        vals = rng.uniform(-amp, amp, segments)
        j = score(vals)
        if j > best_j:
            best_j, best_vals = j, vals

    step = 0.25 * hi
    for _ in range(refine_rounds):
        improved = False
        for idx in range(segments):
            for delta in (step, -step):
                cand = best_vals.copy()
                cand[idx] += delta
                j = score(cand)
                if j > best_j:
                    best_j, best_vals = j, cand
                    improved = True
                    break
        if not improved:
            step *= 0.5

    lam = inst.observable.eigenvalues
    j_zero = objective(propagate(sys, PiecewiseControl(sys.horizon, (0.0,) * segments)), inst)
    success = best_j > j_zero + 0.01 * (lam[0] - lam[-1])
    return WitnessResult(
        control=PiecewiseControl(sys.horizon, tuple(float(x) for x in best_vals)),
        j_value=best_j,
        success=success,
        evaluations=evals,
        horizon=sys.horizon,
    )


@dataclass(frozen=True)
class CertificateConfig:
    """Knobs and tolerances for trap_certificate.

    Directions alternate mean-zero / nonzero-mean; nonzero-mean ones are a
    mean-zero draw plus a fixed constant offset so the predicted
    second-order coefficient is bounded away from zero and its relative
    check is well posed.
    """

    directions: int = 8
    seed: int = 20240901
    amplitude: float = 0.5
    offset_fraction: float = 0.6
    segments: int = 64
    substeps: int = 8
    fit_radius: float = 0.05
    fit_points: int | None = None
    witness_budget: int = 500
    witness_horizons: tuple[float, ...] | None = None  # default (T, 2T)
    witness_amplitude_range: tuple[float, float] = (0.1, 2.0)
    witness_seed_offset: int = 7_000_000
    threads: int = 1
    tol_stationary_analytic: float = 1e-10
    tol_stationary_fit: float = 1e-8
    tol_descent_rel: float = 1e-3
    flat_analytic_scale: float = 1e-9  # x (1 + ||f||)^n
    flat_fit_scale: float = 1e-6  # x max(1, ||f||)^n
    tol_order_match_rel: float = 5e-2
    tol_order_nonneg: float = -1e-8
    dyson_rtol: float = 1e-9
    lie_tol: float = 1e-9
    lie_max_depth: int = 12


@dataclass(frozen=True)
class CheckResult:
    """One named certificate check with its headline measured/threshold pair."""

    name: str
    passed: bool
    measured: float
    threshold: float
    description: str
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrapReport:
    """Complete pass/fail record for the order-(2N-3) trap certificate."""

    instance: dict
    claimed_order: int
    checks: tuple[CheckResult, ...]
    directions: tuple[dict, ...]
    witness: tuple[dict, ...]
    lie: dict
    tolerances: dict
    seeds: tuple[int, ...]
    passed: bool
    failed_stage: str | None = None

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "instance": self.instance,
            "claimed_order": self.claimed_order,
            "passed": self.passed,
            "failed_stage": self.failed_stage,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "measured": c.measured,
                    "threshold": c.threshold,
                    "description": c.description,
                    "extras": c.extras,
                }
                for c in self.checks
            ],
            "directions": list(self.directions),
            "witness": list(self.witness),
            "lie": self.lie,
            "tolerances": self.tolerances,
            "seeds": list(self.seeds),
        }


def _certificate_direction(inst: ProblemInstance, cfg: CertificateConfig, index: int) -> dict:
    """Evaluate one probe direction: forms, differentials and Taylor fit."""
    sys = inst.system
    nlev = sys.levels
    n_top = 2 * nlev - 2
    seed = cfg.seed + index
    mean_zero = index % 2 == 0
    f = random_direction(seed, cfg.segments, sys.horizon, mean_zero=True, amplitude=cfg.amplitude)
    offset = 0.0
    if not mean_zero:
        sign = 1.0 if (index // 2) % 2 == 0 else -1.0
        offset = sign * cfg.offset_fraction * cfg.amplitude
        f = f.shifted(offset)

    forms = dyson_forms(sys, f, n_max=n_top, substeps=cfg.substeps, verify=True, rtol=cfg.dyson_rtol)
    diffs = [differential(inst, forms, n) for n in range(1, n_top + 1)]
    fit = taylor_fit(inst, f, max_order=2 * nlev, radius=cfg.fit_radius, points=cfg.fit_points)

    lam = inst.observable.eigenvalues
    v_last = sys.couplings[-1]
    mean = integral(f)
    d2_predicted = lam[nlev - 2] * v_last**2 * mean**2
    order_value = order_2N2_value(inst, forms) if mean_zero else None
    return {
        "index": index,
        "seed": seed,
        "mean_zero": mean_zero,
        "offset": offset,
        "norm": norm(f),
        "integral": mean,
        "substeps_used": forms.substeps,
        "forms_rel_change": forms.last_rel_change,
        "differentials": diffs,
        "d2_predicted": d2_predicted,
        "order_2N2_analytic": order_value,
        "fit_coefficients": list(fit.coefficients),
        "fit_residual": fit.residual,
        "fit_radius": fit.t_grid_radius,
        "fit_accepted": fit.accepted,
    }


def _check_stationarity(cfg: CertificateConfig, rows: list[dict]) -> CheckResult:
    worst_d1 = max(abs(r["differentials"][0]) for r in rows)
    worst_c1 = max(abs(r["fit_coefficients"][0]) for r in rows)
    passed = worst_d1 <= cfg.tol_stationary_analytic and worst_c1 <= cfg.tol_stationary_fit
    return CheckResult(
        name="stationarity",
        passed=passed,
        measured=worst_d1,
        threshold=cfg.tol_stationary_analytic,
        description="first differential and fitted c_1 vanish for every direction",
        extras={
            "max_fitted_c1": worst_c1,
            "fitted_c1_threshold": cfg.tol_stationary_fit,
        },
    )


def _check_mean_descent(cfg: CertificateConfig, rows: list[dict]) -> CheckResult:
    sel = [r for r in rows if not r["mean_zero"]]
    worst_rel = 0.0
    max_c2 = -math.inf
    for r in sel:
        c2 = r["fit_coefficients"][1]
        pred = r["d2_predicted"]
        worst_rel = max(worst_rel, abs(c2 - pred) / max(abs(pred), 1e-12))
        max_c2 = max(max_c2, c2)
    passed = worst_rel <= cfg.tol_descent_rel and max_c2 < 0.0
    return CheckResult(
        name="mean_descent",
        passed=passed,
        measured=worst_rel,
        threshold=cfg.tol_descent_rel,
        description="fitted c_2 matches lambda_{N-1} v_{N-1}^2 (int f)^2 and is negative "
        "off the mean-zero subspace",
        extras={"max_c2": max_c2},
    )


def _check_flatness(cfg: CertificateConfig, rows: list[dict], nlev: int) -> CheckResult:
    sel = [r for r in rows if r["mean_zero"]]
    orders = range(3, 2 * nlev - 2)  # 3 .. 2N-3
    worst_analytic = 0.0
    worst_fit = 0.0
    for r in sel:
        fnorm = r["norm"]
        for n in orders:
            worst_analytic = max(
                worst_analytic, abs(r["differentials"][n - 1]) / (1.0 + fnorm) ** n
            )
            worst_fit = max(
                worst_fit, abs(r["fit_coefficients"][n - 1]) / max(1.0, fnorm) ** n
            )
    passed = worst_analytic <= cfg.flat_analytic_scale and worst_fit <= cfg.flat_fit_scale
    return CheckResult(
        name="flatness_3_to_2N-3",
        passed=passed,
        measured=worst_analytic,
        threshold=cfg.flat_analytic_scale,
        description="differentials and fitted coefficients of orders 3..2N-3 vanish on "
        "mean-zero directions (norm-scaled)",
        extras={
            "max_scaled_fitted": worst_fit,
            "fitted_threshold": cfg.flat_fit_scale,
            "orders": list(orders),
        },
    )


def _check_order_match(cfg: CertificateConfig, rows: list[dict], nlev: int) -> CheckResult:
    sel = [r for r in rows if r["mean_zero"]]
    n_top = 2 * nlev - 2
    worst_rel = 0.0
    for r in sel:
        fitted = r["fit_coefficients"][n_top - 1]
        analytic = r["order_2N2_analytic"]
        worst_rel = max(worst_rel, abs(fitted - analytic) / max(abs(analytic), 1e-9))
    return CheckResult(
        name="order_2N2_match",
        passed=worst_rel <= cfg.tol_order_match_rel,
        measured=worst_rel,
        threshold=cfg.tol_order_match_rel,
        description=f"fitted c_{n_top} matches lambda_1 |A^{nlev - 1}_1|^2 on mean-zero "
        "directions",
    )


def _check_order_nonneg(cfg: CertificateConfig, rows: list[dict], nlev: int) -> CheckResult:
    sel = [r for r in rows if r["mean_zero"]]
    n_top = 2 * nlev - 2
    min_fitted = min(r["fit_coefficients"][n_top - 1] for r in sel)
    min_analytic = min(r["order_2N2_analytic"] for r in sel)
    passed = min_fitted >= cfg.tol_order_nonneg and min_analytic >= 0.0
    return CheckResult(
        name="order_2N2_nonneg",
        passed=passed,
        measured=min_fitted,
        threshold=cfg.tol_order_nonneg,
        description=f"coefficient of order {n_top} is non-negative on mean-zero directions",
        extras={"min_analytic": min_analytic},
    )


def trap_certificate(inst: ProblemInstance, config: CertificateConfig | None = None) -> TrapReport:
    """Run every trap condition for the zero control and assemble the report.

    The verdict is the conjunction of stationarity, mean descent, flatness,
    the order-(2N-2) match and non-negativity, and controllability; the
    witness outcome is recorded separately because it depends on the horizon
    being long enough, which is not quantified.
    """
    cfg = config if config is not None else CertificateConfig()
    if not inst.observable.theorem_mode:
        raise DomainError("certificate requires a theorem-mode observable")
    if inst.initial_level != inst.system.levels:
        raise DomainError("certificate requires the initial state |N><N|")
    if cfg.directions < 2:
        raise DomainError(f"need at least 2 directions, got {cfg.directions}")

    sys = inst.system
    nlev = sys.levels
    instance_summary = {
        "levels": nlev,
        "a": sys.a,
        "b": sys.b,
        "couplings": list(sys.couplings),
        "horizon": sys.horizon,
        "eigenvalues": list(inst.observable.eigenvalues),
        "eigenvalue_shift": inst.observable.shift,
        "initial_level": inst.initial_level,
        "segments": cfg.segments,
    }
    tolerances = {
        "stationary_analytic": cfg.tol_stationary_analytic,
        "stationary_fit": cfg.tol_stationary_fit,
        "descent_rel": cfg.tol_descent_rel,
        "flat_analytic_scale": cfg.flat_analytic_scale,
        "flat_fit_scale": cfg.flat_fit_scale,
        "order_match_rel": cfg.tol_order_match_rel,
        "order_nonneg": cfg.tol_order_nonneg,
        "dyson_rtol": cfg.dyson_rtol,
        "lie_tol": cfg.lie_tol,
    }
    seeds = tuple(cfg.seed + i for i in range(cfg.directions))

    stage = "directions"
    rows: list[dict] = []
    checks: list[CheckResult] = []
    witness_rows: list[dict] = []
    lie_row: dict = {}
    try:
        indices = list(range(cfg.directions))
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                rows = list(pool.map(lambda i: _certificate_direction(inst, cfg, i), indices))
        else:
            rows = [_certificate_direction(inst, cfg, i) for i in indices]

        stage = "checks"
        checks.append(_check_stationarity(cfg, rows))
        checks.append(_check_mean_descent(cfg, rows))
        checks.append(_check_flatness(cfg, rows, nlev))
        checks.append(_check_order_match(cfg, rows, nlev))
        checks.append(_check_order_nonneg(cfg, rows, nlev))

        stage = "lie_rank"
        lie = lie_rank(sys, tol=cfg.lie_tol, max_depth=cfg.lie_max_depth)
        lie_row = {
            "dimension": lie.dimension,
            "saturated": lie.saturated,
            "depth_reached": lie.depth_reached,
            "tolerance": lie.tolerance,
        }
        checks.append(
            CheckResult(
                name="controllable",
                passed=lie.saturated,
                measured=float(lie.dimension),
                threshold=float(nlev * nlev - 1),
                description="dynamical Lie algebra saturates su(N) up to global phase",
            )
        )

        stage = "witness"
        horizons = cfg.witness_horizons
        if horizons is None:
            horizons = (sys.horizon, 2.0 * sys.horizon)
        any_success = False
        best_overall = -math.inf
        for k, horizon in enumerate(horizons):
            wsys = replace(sys, horizon=float(horizon))
            winst = ProblemInstance(wsys, inst.observable, inst.initial_level)
            res = witness_search(
                winst,
                seed=cfg.seed + cfg.witness_seed_offset + k,
                budget=cfg.witness_budget,
                amplitude_range=cfg.witness_amplitude_range,
                segments=cfg.segments,
            )
            any_success = any_success or res.success
            best_overall = max(best_overall, res.j_value)
            witness_rows.append(
                {
                    "horizon": float(horizon),
                    "best_j": res.j_value,
                    "success": res.success,
                    "evaluations": res.evaluations,
                    "seed": cfg.seed + cfg.witness_seed_offset + k,
                }
            )
        lam = inst.observable.eigenvalues
        checks.append(
            CheckResult(
                name="witness_found",
                passed=any_success,
                measured=best_overall,
                threshold=0.01 * (lam[0] - lam[-1]),
                description="best-effort evidence that the zero control is not a global "
                "maximum (excluded from the verdict: the minimal sufficient horizon is "
                "unknown)",
            )
        )
    except TrapscopeError as exc:
        return TrapReport(
            instance=instance_summary,
            claimed_order=2 * nlev - 3,
            checks=tuple(checks),
            directions=tuple(rows),
            witness=tuple(witness_rows),
            lie=lie_row,
            tolerances=tolerances,
            seeds=seeds,
            passed=False,
            failed_stage=f"{stage}: {type(exc).__name__}: {exc}",
        )

    verdict = all(c.passed for c in checks if c.name != "witness_found")
    return TrapReport(
        instance=instance_summary,
        claimed_order=2 * nlev - 3,
        checks=tuple(checks),
        directions=tuple(rows),
        witness=tuple(witness_rows),
        lie=lie_row,
        tolerances=tolerances,
        seeds=seeds,
        passed=verdict,
    )
