"""Numerical validation of the local expansions and the tail formulas.

Two kinds of checks live here.  The lemma checks evaluate both sides of the
standard-deviation/correlation expansions on small corner boxes with exact
covariance algebra (no sampling) and track the worst relative error along a
ladder of thresholds; errors must roughly halve per decade.  The Monte Carlo
side estimates tail probabilities with Wilson intervals at two grid levels
and compares them against the closed-form asymptotics.
"""

import dataclasses
import math

import numpy as np

from . import engine, parallel, paths
from .asymptotics import asym_drawdown, asym_drawup, solve_s_u
from .engine import GridSpec, ModelParams

Z95 = 1.959963984540054  # Phi^{-1}(0.975)

# Grid points whose expansion denominator falls below this are excluded from
# the lemma error: there the claim sits below double-precision resolution.
_DENOM_FLOOR = 1e-12

_REFINE_TAG = 0x5EED


@dataclasses.dataclass(frozen=True)
class LemmaCheckReport:
    """Worst-case expansion errors along a ladder, plus the pass verdict.

    `u_grid` holds u values for the lemma 1/2 checks and box half-widths
    delta for lemma 3.  `passed` applies the halving-per-decade schedule
    with 25% slack; direction is asserted, not the exact rate.
    """

    lemma: str
    u_grid: tuple
    max_rel_error: tuple
    passed: bool
    detail: str = ""

    def __post_init__(self):
        if len(self.u_grid) != len(self.max_rel_error):
            raise ValueError("one error per ladder point required")
        if any(not (math.isfinite(e) and e >= 0.0) for e in self.max_rel_error):
            raise ValueError(f"errors must be finite and >= 0, got {self.max_rel_error}")

    def to_dict(self) -> dict:
        return {
            "lemma": self.lemma,
            "u_grid": list(self.u_grid),
            "max_rel_error": list(self.max_rel_error),
            "passed": self.passed,
            "detail": self.detail,
        }


def _halving_schedule(ladder, errors) -> bool:
    if any(not math.isfinite(e) for e in errors):
        return False
    for (l1, e1), (l2, e2) in zip(zip(ladder, errors), zip(ladder[1:], errors[1:])):
        decades = abs(math.log10(l2 / l1))
        if not e2 <= e1 * 1.25 * 0.5**decades:
            return False
        if not e2 < e1:
            return False
    return True


def _sigma_minus(s, t, u, params):
    """Scaled drawdown field std dev: |t-s|^H / (u + mu(t-s) - (t^{2H}-s^{2H})/2)."""
    T, H, mu = params.T, params.H, params.mu
    return np.abs(t - s) ** H / (u + mu * (t - s) - 0.5 * (t ** (2 * H) - s ** (2 * H)))


def _sigma_plus(s, t, u, params):
    """Scaled drawup field std dev: |t-s|^H / (u - mu(t-s) + (t^{2H}-s^{2H})/2)."""
    T, H, mu = params.T, params.H, params.mu
    return np.abs(t - s) ** H / (u - mu * (t - s) + 0.5 * (t ** (2 * H) - s ** (2 * H)))


def _corner_box(T, delta, s_hi, grid_points):
    s = np.linspace(0.0, s_hi, grid_points)
    t = np.linspace(T - delta, T, grid_points)
    return np.meshgrid(s, t, indexing="ij")


def _u_grid(u):
    grid = tuple(float(v) for v in np.atleast_1d(u))
    if any(v < 100.0 for v in grid):
        raise ValueError(f"lemma checks need u >= 100, got {grid}")
    return grid


def _check_delta(delta, T):
    if delta is not None and not 0.0 < delta < 0.5 * T:
        raise ValueError(f"need 0 < delta < T/2, got delta={delta}")


def check_lemma1(
    params: ModelParams,
    u=(1e2, 1e3, 1e4),
    delta=None,
    grid_points: int = 50,
) -> LemmaCheckReport:
    """Drawdown std-dev expansion around (0, T).

    Checks (1 - sigma(s,t)/sigma(0,T)) against H(T-t)/T + Hs/T + s^{2H}/(2u)
    on [0, delta] x [T-delta, T].  `u` may be a scalar or a ladder; delta
    defaults to the coupled schedule T/sqrt(u).
    """
    T, H = params.T, params.H
    u_grid = _u_grid(u)
    _check_delta(delta, T)
    errors = []
    for u in u_grid:
        d = float(delta) if delta is not None else T / math.sqrt(u)
        S, Tt = _corner_box(T, d, d, grid_points)
        ref = _sigma_minus(0.0, T, u, params)
        num = 1.0 - _sigma_minus(S, Tt, u, params) / ref
        den = H * (T - Tt) / T + H * S / T + S ** (2 * H) / (2.0 * u)
        mask = den > _DENOM_FLOOR
        errors.append(float(np.abs(num[mask] / den[mask] - 1.0).max()))
    return LemmaCheckReport(
        lemma="lemma1",
        u_grid=u_grid,
        max_rel_error=tuple(errors),
        passed=_halving_schedule(u_grid, errors),
    )


def check_lemma2(
    params: ModelParams,
    u=(1e2, 1e3, 1e4),
    delta=None,
    grid_points: int = 50,
) -> LemmaCheckReport:
    """Drawup std-dev expansion near the maximizer of sigma_plus(., T).

    For H >= 1/2 the maximizer is the corner (0, T) and the reference
    expansion is H(T-t)/T + Hs/T.  For H < 1/2 it sits at an interior s_u
    and no fixed polynomial in (s - s_u) is uniformly valid across
    [0, s_u + delta]: the curvature of the s-profile at s_u grows like
    1/s_u, so a u-independent quadratic coefficient understates the
    deficit near the center and a pure quadratic overstates nothing at the
    box edge, where the profile is linear.  The check therefore takes the
    s-profile 1 - sigma_plus(s, T)/sigma_plus(s_u, T) exactly and
    validates what the tail machinery actually relies on: that (s_u, T)
    is the maximizer, that the t-direction decays at rate H/T, and that
    the two directions combine additively.
    """
    T, H = params.T, params.H
    variant_i = H >= 0.5
    u_grid = _u_grid(u)
    _check_delta(delta, T)
    errors = []
    for u in u_grid:
        d = float(delta) if delta is not None else T / math.sqrt(u)
        if variant_i:
            S, Tt = _corner_box(T, d, d, grid_points)
            ref = _sigma_plus(0.0, T, u, params)
            den = H * (T - Tt) / T + H * S / T
        else:
            s_u = solve_s_u(u, params)
            S, Tt = _corner_box(T, d, s_u + d, grid_points)
            ref = _sigma_plus(s_u, T, u, params)
            den = H * (T - Tt) / T + (1.0 - _sigma_plus(S, T, u, params) / ref)
        num = 1.0 - _sigma_plus(S, Tt, u, params) / ref
        mask = den > _DENOM_FLOOR
        errors.append(float(np.abs(num[mask] / den[mask] - 1.0).max()))
    return LemmaCheckReport(
        lemma="lemma2i" if variant_i else "lemma2ii",
        u_grid=u_grid,
        max_rel_error=tuple(errors),
        passed=_halving_schedule(u_grid, errors),
    )


def check_lemma3(
    H: float,
    T: float = 1.0,
    delta=None,
    n_quadruples: int = 2000,
    seed: int = 0,
) -> LemmaCheckReport:
    """Increment-correlation expansion in the corner box.

    Samples quadruples (s,t), (s',t') with s,s' in [0, delta] and t,t' in
    [T - delta, T] and checks 1 - Corr against
    (|s-s'|^{2H} + |t-t'|^{2H}) / (2 T^{2H}).  `delta` may be a scalar or a
    decreasing ladder; the default ladder is {1e-2, 1e-3, 1e-4} * T.
    """
    H, T = float(H), float(T)
    if not 0.0 < H < 1.0:
        raise ValueError(f"need 0 < H < 1, got {H}")
    if delta is None:
        deltas = tuple(d * T for d in (1e-2, 1e-3, 1e-4))
    else:
        deltas = tuple(float(v) for v in np.atleast_1d(delta))
    if any(not 0.0 < d <= 1e-2 * T for d in deltas):
        raise ValueError(f"lemma 3 boxes need 0 < delta <= T/100, got {deltas}")
    rng = np.random.default_rng(seed)
    h2 = 2.0 * H
    errors = []
    for d in deltas:
        s1 = rng.uniform(0.0, d, n_quadruples)
        s2 = rng.uniform(0.0, d, n_quadruples)
        t1 = rng.uniform(T - d, T, n_quadruples)
        t2 = rng.uniform(T - d, T, n_quadruples)
        cov = engine.fbm_covariance
        cross = cov(t1, t2, H) - cov(t1, s2, H) - cov(s1, t2, H) + cov(s1, s2, H)
        sd1 = np.abs(t1 - s1) ** H
        sd2 = np.abs(t2 - s2) ** H
        num = 1.0 - cross / (sd1 * sd2)
        den = (np.abs(s1 - s2) ** h2 + np.abs(t1 - t2) ** h2) / (2.0 * T**h2)
        mask = den > _DENOM_FLOOR
        errors.append(float(np.abs(num[mask] / den[mask] - 1.0).max()))
    return LemmaCheckReport(
        lemma="lemma3",
        u_grid=deltas,
        max_rel_error=tuple(errors),
        passed=_halving_schedule(deltas, errors),
    )


# ---------------------------------------------------------------------------
# Monte Carlo


def wilson_interval(k: int, n: int, z: float = Z95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError(f"need n > 0, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    p = k / n
    denom = 1.0 + z * z / n
    center = p + z * z / (2.0 * n)
    radius = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    # At k = 0 and k = n, center and radius cancel only up to rounding, so
    # clamp through p to keep lo <= p <= hi exact at the ends.
    lo = min(p, max(0.0, (center - radius) / denom))
    hi = max(p, min(1.0, (center + radius) / denom))
    return lo, hi


@dataclasses.dataclass(frozen=True)
class McEstimate:
    """Tail-probability estimate with its Wilson 95% interval.

    `refined` is the same experiment at 2x the steps (independent draws) and
    `extrapolated` the Richardson-style combination of the two levels; the
    extrapolation assumes the discretization bias shrinks like dt^H, which
    is a heuristic, not a theorem.
    """

    p_hat: float
    ci_low: float
    ci_high: float
    n_paths: int
    n_steps: int
    extrapolated: float | None = None
    refined: "McEstimate | None" = None

    def __post_init__(self):
        if not 0.0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1.0:
            raise ValueError(
                f"interval must satisfy 0 <= lo <= p <= hi <= 1, got "
                f"({self.ci_low}, {self.p_hat}, {self.ci_high})"
            )


def refinement_seed(seed: int) -> int:
    """Derived seed for the doubled-grid companion run."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_REFINE_TAG,))
    return int(ss.generate_state(1, np.uint64)[0])


# (H, mu, T, n_steps) -> float32 trend row, reused across chunk workers.
_trend_cache: dict = {}


def _trend_row(H, mu, T, n_steps):
    key = (H, mu, T, n_steps)
    hit = _trend_cache.get(key)
    if hit is None:
        grid = GridSpec(n_steps, T)
        hit = engine.trend_offset(grid.times(), ModelParams(H, mu, T)).astype(np.float32)
        _trend_cache[key] = hit
    return hit


def _tail_sups_chunk(payload, start, stop):
    H, mu, T, n_steps, seed, method = payload
    grid = GridSpec(n_steps, T)
    x = engine.sample_raw_block(grid, H, seed, start, stop, method=method, dtype=np.float32)
    x += _trend_row(H, mu, T, n_steps)[None, :]
    return paths.drawdown_drawup_values(x)


def _nested_sups_chunk(payload, start, stop):
    H, mu, T, n_steps, seed, method = payload
    grid = GridSpec(n_steps, T)
    x = engine.sample_raw_block(grid, H, seed, start, stop, method=method, dtype=np.float32)
    x += _trend_row(H, mu, T, n_steps)[None, :]
    dd_f, du_f = paths.drawdown_drawup_values(x)
    dd_c, du_c = paths.drawdown_drawup_values(x[:, ::2])
    return dd_c, du_c, dd_f, du_f


def functional_sups(
    params: ModelParams,
    n_paths: int,
    n_steps: int,
    seed: int,
    *,
    threads: int = 1,
    method: str = "circulant",
):
    """Per-path maximum drawdown and drawup of the trended model.

    Paths are sampled in single precision (the law is exact either way; the
    rounding is orders of magnitude below Monte Carlo resolution) from
    per-path streams, so results do not depend on chunking or thread count.
    Returns (drawdown_sups, drawup_sups) as float64 arrays.
    """
    payload = (params.H, params.mu, params.T, int(n_steps), int(seed), method)
    blocks = parallel.map_chunks(_tail_sups_chunk, payload, int(n_paths), threads=threads)
    dd = np.concatenate([b[0] for b in blocks]).astype(np.float64)
    du = np.concatenate([b[1] for b in blocks]).astype(np.float64)
    return dd, du


def functional_sups_nested(
    params: ModelParams,
    n_paths: int,
    n_steps: int,
    seed: int,
    *,
    threads: int = 1,
    method: str = "circulant",
):
    """Like functional_sups at 2*n_steps, plus the same paths restricted to
    the n_steps subgrid.

    A path sampled on the doubled grid, read at every other point, is an
    exact sample on the coarse grid (restriction of an exact law), so one
    simulation yields both resolutions. The levels are coupled pathwise;
    each coarse sup is <= its fine companion by construction, which makes
    refinement comparisons exact rather than statistical. Returns
    (dd_coarse, du_coarse, dd_fine, du_fine) as float64 arrays.
    """
    if n_steps < 2 or n_steps % 2:
        raise ValueError(f"n_steps must be even and >= 2, got {n_steps}")
    payload = (params.H, params.mu, params.T, 2 * int(n_steps), int(seed), method)
    blocks = parallel.map_chunks(_nested_sups_chunk, payload, int(n_paths), threads=threads)
    return tuple(
        np.concatenate([b[j] for b in blocks]).astype(np.float64) for j in range(4)
    )


def _estimate_from_sups(sups, u, n_steps) -> McEstimate:
    n = len(sups)
    k = int((sups > u).sum())
    lo, hi = wilson_interval(k, n)
    return McEstimate(p_hat=k / n, ci_low=lo, ci_high=hi, n_paths=n, n_steps=n_steps)


def _extrapolate(p_coarse, p_fine, H):
    est = p_fine + (p_fine - p_coarse) / (2.0**H - 1.0)
    return min(1.0, max(0.0, est))


def mc_tail(
    query: paths.TailQuery,
    n_paths: int,
    n_steps: int,
    seed: int,
    *,
    threads: int = 1,
    method: str = "circulant",
) -> McEstimate:
    """Monte Carlo tail probability at n_steps, with a 2x-steps companion.

    The returned estimate is at the requested resolution; `.refined` holds
    the doubled-grid run (independent seed derived from `seed`) and
    `.extrapolated` the two-level Richardson combination.
    """
    col = 0 if query.functional == "drawdown" else 1
    sups_c = functional_sups(
        query.params, n_paths, n_steps, seed, threads=threads, method=method
    )[col]
    sups_f = functional_sups(
        query.params, n_paths, 2 * n_steps, refinement_seed(seed), threads=threads, method=method
    )[col]
    coarse = _estimate_from_sups(sups_c, query.u, n_steps)
    fine = _estimate_from_sups(sups_f, query.u, 2 * n_steps)
    return dataclasses.replace(
        coarse,
        extrapolated=_extrapolate(coarse.p_hat, fine.p_hat, query.params.H),
        refined=fine,
    )


# ---------------------------------------------------------------------------
# convergence studies


@dataclasses.dataclass(frozen=True)
class ConvergenceRow:
    u: float
    p_hat: float
    ci_low: float
    ci_high: float
    p_refined: float
    ci_low_refined: float
    ci_high_refined: float
    extrapolated: float
    asym_probability: float
    ratio: float
    ratio_ci_low: float
    ratio_ci_high: float
    ratio_refined: float


@dataclasses.dataclass(frozen=True)
class ConvergenceTable:
    """MC/asymptotic comparison along a u ladder.

    Trend verdicts compare consecutive coarse-level ratios within pooled
    95% slack; both are None for a single-row ladder.
    """

    functional: str
    rows: tuple
    trend_nondecreasing: bool | None
    trend_toward_one: bool | None


def convergence_study(
    functional: str,
    params: ModelParams,
    u_ladder,
    *,
    n_paths: int,
    n_steps: int,
    seed: int,
    constants,
    variant: str = "proof_derived",
    threads: int = 1,
    method: str = "circulant",
) -> ConvergenceTable:
    """Shared-path MC vs asymptotics across a ladder of thresholds.

    One pair of simulations (n_steps and 2*n_steps) serves every u in the
    ladder, so ratios along the ladder are positively correlated -- which is
    what makes the trend comparison sharp.
    """
    if functional not in paths.FUNCTIONALS:
        raise ValueError(f"functional must be one of {paths.FUNCTIONALS}")
    u_ladder = [float(u) for u in u_ladder]
    if not u_ladder or any(b <= a for a, b in zip(u_ladder, u_ladder[1:])):
        raise ValueError(f"u ladder must be nonempty and increasing, got {u_ladder}")
    col = 0 if functional == "drawdown" else 1
    sups_c = functional_sups(
        params, n_paths, n_steps, seed, threads=threads, method=method
    )[col]
    sups_f = functional_sups(
        params, n_paths, 2 * n_steps, refinement_seed(seed), threads=threads, method=method
    )[col]
    rows = []
    ratio_ses = []
    for u in u_ladder:
        coarse = _estimate_from_sups(sups_c, u, n_steps)
        fine = _estimate_from_sups(sups_f, u, 2 * n_steps)
        if functional == "drawdown":
            asym = asym_drawdown(u, params, constants)
        else:
            asym = asym_drawup(u, params, constants, variant=variant)
        a = asym.probability
        rows.append(
            ConvergenceRow(
                u=u,
                p_hat=coarse.p_hat,
                ci_low=coarse.ci_low,
                ci_high=coarse.ci_high,
                p_refined=fine.p_hat,
                ci_low_refined=fine.ci_low,
                ci_high_refined=fine.ci_high,
                extrapolated=_extrapolate(coarse.p_hat, fine.p_hat, params.H),
                asym_probability=a,
                ratio=coarse.p_hat / a,
                ratio_ci_low=coarse.ci_low / a,
                ratio_ci_high=coarse.ci_high / a,
                ratio_refined=fine.p_hat / a,
            )
        )
        ratio_ses.append((coarse.ci_high - coarse.ci_low) / (2.0 * Z95) / a)
    if len(rows) < 2:
        nondecr = toward = None
    else:
        nondecr = True
        toward = True
        for i in range(len(rows) - 1):
            slack = Z95 * math.hypot(ratio_ses[i], ratio_ses[i + 1])
            r1, r2 = rows[i].ratio, rows[i + 1].ratio
            if r2 < r1 - slack:
                nondecr = False
            if abs(r2 - 1.0) > abs(r1 - 1.0) + slack:
                toward = False
    return ConvergenceTable(
        functional=functional,
        rows=tuple(rows),
        trend_nondecreasing=nondecr,
        trend_toward_one=toward,
    )
