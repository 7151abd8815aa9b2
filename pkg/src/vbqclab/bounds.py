"""Closed-form failure/acceptance bounds, exact tail references, and tuning.

All bound evaluations clamp to [0, 1] at the end because the raw
expressions exceed 1 for small n; raw log-values stay available for decay
analysis. Exact reference distributions use rational arithmetic
(hypergeometric) or log-space terms summed with compensated summation
(binomial), so cross-checks are not polluted by rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

__all__ = [
    "DomainError",
    "InfeasibleError",
    "max_corrupt_fraction",
    "hypergeom_exact_cdf",
    "hypergeom_exact_upper",
    "hypergeom_lower_tail_bound",
    "hypergeom_upper_tail_bound",
    "binomial_exact_cdf",
    "binomial_exact_upper",
    "binomial_tail_bound",
    "epsilon_rej",
    "epsilon_accept_under_excess_noise",
    "threshold_region",
    "w_setting",
    "eps4_from",
    "BoundInputs",
    "BoundReport",
    "epsilon_ver",
    "log_epsilon_ver",
    "epsilon_ver_exponents",
    "minimize_epsilon_ver",
    "TuneResult",
    "tune_n",
    "epsilon_sec",
    "report_csv_header",
    "report_csv_row",
]


class DomainError(ValueError):
    """Arguments outside the stated validity range of a bound."""


class InfeasibleError(ValueError):
    """The free-parameter region is empty; carries the violated constraint."""


def max_corrupt_fraction(p: float) -> float:
    """Largest tolerable fraction of corrupted rounds, (2p-1)/(2p-2)."""
    if not 0.0 <= p < 0.5:
        raise DomainError("inherent error probability must lie in [0, 1/2)")
    return (2.0 * p - 1.0) / (2.0 * p - 2.0)


# --- exact reference distributions ---------------------------------------------

def _check_hypergeom(N: int, K: int, n: int) -> None:
    if not (0 <= n <= N and 0 <= K <= N):
        raise DomainError(f"invalid hypergeometric parameters N={N}, K={K}, n={n}")


def hypergeom_exact_cdf(N: int, K: int, n: int, lam) -> Fraction:
    """Exact Pr[X <= lam] for X ~ Hypergeometric(N, K, n), as a rational."""
    _check_hypergeom(N, K, n)
    hi = min(int(math.floor(lam)), n, K)
    lo = max(0, n - (N - K))
    if hi < lo:
        return Fraction(0)
    total = sum(math.comb(K, i) * math.comb(N - K, n - i) for i in range(lo, hi + 1))
    return Fraction(total, math.comb(N, n))


def hypergeom_exact_upper(N: int, K: int, n: int, lam) -> Fraction:
    """Exact Pr[X >= lam], as a rational."""
    _check_hypergeom(N, K, n)
    lo = max(int(math.ceil(lam)), 0, n - (N - K))
    hi = min(n, K)
    if lo > hi:
        return Fraction(0)
    total = sum(math.comb(K, i) * math.comb(N - K, n - i) for i in range(lo, hi + 1))
    return Fraction(total, math.comb(N, n))


def hypergeom_lower_tail_bound(N: int, K: int, n: int, lam: float) -> float:
    """Closed-form bound on Pr[X <= lam], valid for 0 < lam < n*K/N."""
    _check_hypergeom(N, K, n)
    if not 0 < lam < n * K / N:
        raise DomainError(f"lower tail bound needs 0 < lam < nK/N, got lam={lam}")
    return math.exp(-2.0 * n * (K / N - lam / n) ** 2)


def hypergeom_upper_tail_bound(N: int, K: int, n: int, lam: float) -> float:
    """Closed-form bound on Pr[X >= lam], valid for lam > n*K/N."""
    _check_hypergeom(N, K, n)
    if not lam > n * K / N:
        raise DomainError(f"upper tail bound needs lam > nK/N, got lam={lam}")
    return math.exp(-2.0 * n * (lam / n - K / N) ** 2)


def _binom_log_terms(n: int, p: float, lo: int, hi: int):
    if p in (0.0, 1.0):
        # degenerate: all mass at 0 or n
        point = 0 if p == 0.0 else n
        return [0.0] if lo <= point <= hi else []
    logp, logq = math.log(p), math.log1p(-p)
    return [math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)
            + i * logp + (n - i) * logq
            for i in range(lo, hi + 1)]


def _sum_log_terms(terms) -> float:
    if not terms:
        return 0.0
    peak = max(terms)
    return math.exp(peak) * math.fsum(math.exp(t - peak) for t in terms)


def binomial_exact_cdf(n: int, p: float, k) -> float:
    """Pr[X <= k] for X ~ Binomial(n, p), log-space terms + compensated sum."""
    if not (n >= 0 and 0.0 <= p <= 1.0):
        raise DomainError(f"invalid binomial parameters n={n}, p={p}")
    hi = min(int(math.floor(k)), n)
    if hi < 0:
        return 0.0
    return min(1.0, _sum_log_terms(_binom_log_terms(n, p, 0, hi)))


def binomial_exact_upper(n: int, p: float, k) -> float:
    """Pr[X >= k] for X ~ Binomial(n, p)."""
    if not (n >= 0 and 0.0 <= p <= 1.0):
        raise DomainError(f"invalid binomial parameters n={n}, p={p}")
    lo = max(int(math.ceil(k)), 0)
    if lo > n:
        return 0.0
    return min(1.0, _sum_log_terms(_binom_log_terms(n, p, lo, n)))


def binomial_tail_bound(n: int, p: float, k: float, side: str) -> float:
    """Hoeffding bound exp(-2 (np - k)^2 / n) for either binomial tail."""
    if n <= 0 or not 0.0 <= p <= 1.0:
        raise DomainError(f"invalid binomial parameters n={n}, p={p}")
    mean = n * p
    if side == "lower":
        if k > mean:
            raise DomainError(f"lower tail needs k <= np, got k={k} > {mean}")
    elif side == "upper":
        if k < mean:
            raise DomainError(f"upper tail needs k >= np, got k={k} < {mean}")
    else:
        raise DomainError(f"side must be 'lower' or 'upper', got {side!r}")
    return math.exp(-2.0 * (mean - k) ** 2 / n)


# --- acceptance / rejection bounds ----------------------------------------------

def epsilon_rej(omega: float, p_max: float, tau: float, n: float) -> float:
    """Bound on the honest abort probability when omega > p_max."""
    if not omega > p_max:
        raise DomainError(f"epsilon_rej needs omega > p_max, got {omega} <= {p_max}")
    return math.exp(-2.0 * (omega - p_max) ** 2 * tau * n)


def epsilon_accept_under_excess_noise(omega: float, p_min: float,
                                      tau: float, n: float) -> float:
    """Bound on the acceptance probability when omega < p_min."""
    if not omega < p_min:
        raise DomainError(f"needs omega < p_min, got {omega} >= {p_min}")
    return math.exp(-2.0 * (p_min - omega) ** 2 * tau * n)


def threshold_region(k: int, p: float):
    """Open interval of admissible failed-test ratios omega."""
    if k < 1:
        raise DomainError("k must be at least 1")
    return (0.0, max_corrupt_fraction(p) / k)


def w_setting(k: int, p: float, phi: float, eps1: float, eps2: float,
              t: float) -> float:
    """Threshold count implied by a free-parameter assignment."""
    ratio = max_corrupt_fraction(p)
    if not (0.0 <= phi < ratio and 0.0 <= eps1 and 0.0 <= eps2 <= 1.0 / k):
        raise DomainError("w_setting called outside the feasible region")
    return (1.0 / k - eps2) * (ratio - phi - eps1) * t


def eps4_from(p: float, phi: float, eps3: float) -> float:
    """Dependent slack absorbing inherent errors on unattacked rounds."""
    ratio = max_corrupt_fraction(p)
    denom = 1.0 - ratio + phi - eps3
    if denom <= 0.0:
        raise DomainError("eps4 denominator must be positive")
    return (0.5 - ratio + phi - eps3) / denom - p


# --- the verifiability bound -----------------------------------------------------

@dataclass(frozen=True)
class BoundInputs:
    """Protocol ratios plus the free parameters of the failure bound."""

    n: float
    delta: float
    tau: float
    k: int
    p: float
    phi: float
    eps1: float
    eps2: float
    eps3: float

    @property
    def eps4(self) -> float:
        return eps4_from(self.p, self.phi, self.eps3)

    def violated_constraint(self) -> str | None:
        """Name of the first violated feasibility constraint, or None."""
        ratio = max_corrupt_fraction(self.p)
        if not 0.0 < self.phi < ratio:
            return f"0 < phi < {ratio}"
        if not 0.0 < self.eps1 < 0.5 - self.phi:
            return "0 < eps1 < 1/2 - phi"
        if not 0.0 < self.eps2 < 1.0 / self.k:
            return "0 < eps2 < 1/k"
        if not 0.0 < self.eps3 < self.phi:
            return "0 < eps3 < phi"
        try:
            if not self.eps4 > 0.0:
                return "eps4 > 0"
        except DomainError:
            return "eps4 > 0"
        return None

    def require_feasible(self) -> None:
        violated = self.violated_constraint()
        if violated is not None:
            raise DomainError(f"infeasible bound inputs: {violated}")


def epsilon_ver_exponents(inputs: BoundInputs) -> dict:
    """Decay rates of the four exponentials and the asymptotic rate."""
    inputs.require_feasible()
    ratio = max_corrupt_fraction(inputs.p)
    gap = ratio - inputs.phi
    a1 = 2.0 * (1.0 - ratio + inputs.phi - inputs.eps3) * inputs.delta * inputs.eps4 ** 2
    a2 = 2.0 * inputs.delta ** 2 * inputs.eps3 ** 2 / gap
    b1 = 2.0 * inputs.tau ** 2 * inputs.eps1 ** 2 / gap
    b2 = 2.0 * (gap - inputs.eps1) * inputs.tau * inputs.eps2 ** 2
    return {"wrong_result_main": a1, "wrong_result_spread": a2,
            "undertested_spread": b1, "undertested_traps": b2,
            "asymptotic": min(a1, a2, b1, b2)}


def log_epsilon_ver(inputs: BoundInputs, n: float | None = None) -> float:
    """Unclamped log of the failure bound, safe far below float underflow."""
    rates = epsilon_ver_exponents(inputs)
    n = inputs.n if n is None else n
    branch_a = np.logaddexp(-rates["wrong_result_main"] * n,
                            -rates["wrong_result_spread"] * n)
    branch_b = np.logaddexp(-rates["undertested_spread"] * n,
                            -rates["undertested_traps"] * n)
    return float(max(branch_a, branch_b))


def epsilon_ver(inputs: BoundInputs) -> float:
    """The failure bound itself, clamped into [0, 1]."""
    return min(1.0, math.exp(min(0.0, log_epsilon_ver(inputs))))


def epsilon_sec(eps_ver: float, eps_bl: float = 0.0, eps_ind: float = 0.0) -> float:
    """Composable security: 4*sqrt(2*eps_ver) + 2*eps_bl + 2*eps_ind, clamped.

    Blindness and verification-independence hold exactly here, so both
    extra terms default to zero and exist for sensitivity analysis only.
    """
    for name, value in (("eps_ver", eps_ver), ("eps_bl", eps_bl), ("eps_ind", eps_ind)):
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1]")
    return min(1.0, 4.0 * math.sqrt(2.0 * eps_ver) + 2.0 * eps_bl + 2.0 * eps_ind)


@dataclass(frozen=True)
class BoundReport:
    epsilon_ver: float
    epsilon_rej: float
    epsilon_cor: float
    epsilon_sec: float
    assignment: BoundInputs
    w_implied: float

    def to_json(self) -> dict:
        a = self.assignment
        return {
            "epsilon_ver": self.epsilon_ver,
            "epsilon_rej": self.epsilon_rej,
            "epsilon_cor": self.epsilon_cor,
            "epsilon_sec": self.epsilon_sec,
            "w_implied": self.w_implied,
            "assignment": {"n": a.n, "delta": a.delta, "tau": a.tau, "k": a.k,
                           "p": a.p, "phi": a.phi, "eps1": a.eps1,
                           "eps2": a.eps2, "eps3": a.eps3, "eps4": a.eps4},
        }


def report_csv_header() -> str:
    return ("n,delta,tau,omega,phi,eps1,eps2,eps3,eps4,"
            "epsilon_ver,epsilon_rej,epsilon_cor,epsilon_sec")


def report_csv_row(report: BoundReport) -> str:
    a = report.assignment
    omega = report.w_implied / (a.tau * a.n) if a.tau * a.n else float("nan")
    cells = [a.n, a.delta, a.tau, omega, a.phi, a.eps1, a.eps2, a.eps3, a.eps4,
             report.epsilon_ver, report.epsilon_rej, report.epsilon_cor,
             report.epsilon_sec]
    return ",".join(repr(float(c)) for c in cells)


def _tied_eps2(k: int, omega: float, ratio: float, phi: float, eps1: float):
    """eps2 that makes the implied threshold match omega, or None."""
    margin = ratio - phi - eps1
    if margin <= 0.0:
        return None
    eps2 = 1.0 / k - omega / margin
    if not 0.0 < eps2 < 1.0 / k:
        return None
    return eps2


def _feasible_inputs(params, omega: float, phi: float, eps1: float, eps3: float):
    ratio = max_corrupt_fraction(params.p)
    if not (0.0 < phi < ratio and 0.0 < eps1 < 0.5 - phi and 0.0 < eps3 < phi):
        return None
    eps2 = _tied_eps2(params.k, omega, ratio, phi, eps1)
    if eps2 is None:
        return None
    inputs = BoundInputs(params.n, params.delta, params.tau, params.k, params.p,
                         phi, eps1, eps2, eps3)
    if inputs.violated_constraint() is not None:
        return None
    return inputs


def minimize_epsilon_ver(params, target_omega: float | None = None,
                         grid_axis: int = 22, simplex_iters: int = 200) -> BoundReport:
    """Search the feasible region for the smallest failure bound.

    Deterministic coarse grid (about grid_axis^3 points over phi, eps1 and
    eps3, with eps2 tied to the threshold ratio), then a bounded simplex
    refinement. The contract is dominance over the sampled grid, not global
    optimality.
    """
    omega = params.omega if target_omega is None else target_omega
    ratio = max_corrupt_fraction(params.p)
    if not 0.0 < omega < ratio / params.k:
        raise InfeasibleError(
            f"omega={omega} outside the admissible region (0, {ratio / params.k})")
    scored = []
    fractions = [(i + 0.5) / grid_axis for i in range(grid_axis)]
    for f_phi in fractions:
        phi = f_phi * ratio
        for f_e1 in fractions:
            eps1 = f_e1 * min(0.5 - phi, ratio - phi)
            for f_e3 in fractions:
                eps3 = f_e3 * phi
                inputs = _feasible_inputs(params, omega, phi, eps1, eps3)
                if inputs is not None:
                    scored.append((log_epsilon_ver(inputs), inputs))
    if not scored:
        raise InfeasibleError("no feasible grid point; the (phi, eps1, eps3) "
                              "region is empty for these parameters")
    scored.sort(key=lambda pair: pair[0])

    def objective(vec):
        inputs = _feasible_inputs(params, omega, vec[0], vec[1], vec[2])
        if inputs is None:
            return 1e6
        return log_epsilon_ver(inputs)

    chosen = scored[0][1]
    best_log = scored[0][0]
    for _, start in scored[:3]:
        result = _scipy_minimize(
            objective, [start.phi, start.eps1, start.eps3], method="Nelder-Mead",
            options={"maxiter": simplex_iters, "xatol": 1e-12, "fatol": 1e-12})
        refined = _feasible_inputs(params, omega, *result.x)
        if refined is not None and log_epsilon_ver(refined) < best_log:
            best_log = log_epsilon_ver(refined)
            chosen = refined
    return _build_report(params, chosen, omega)


def _build_report(params, inputs: BoundInputs, omega: float) -> BoundReport:
    eps_ver = epsilon_ver(inputs)
    p_max = getattr(params, "p_max", None) or 0.0
    if omega > p_max:
        eps_rej = epsilon_rej(omega, p_max, inputs.tau, inputs.n)
    else:
        eps_rej = 1.0
    w_implied = w_setting(inputs.k, inputs.p, inputs.phi, inputs.eps1,
                          inputs.eps2, inputs.tau * inputs.n)
    return BoundReport(
        epsilon_ver=eps_ver,
        epsilon_rej=eps_rej,
        epsilon_cor=min(1.0, eps_rej + eps_ver),
        epsilon_sec=epsilon_sec(eps_ver),
        assignment=inputs,
        w_implied=w_implied,
    )


@dataclass(frozen=True)
class TuneResult:
    n: int
    achieved: bool
    report: BoundReport | None


@dataclass(frozen=True)
class RatioTemplate:
    """Fixed ratios for tuning: only n varies."""

    delta: float
    tau: float
    omega: float
    k: int
    p: float
    p_max: float = 0.0

    def __post_init__(self):
        if abs(self.delta + self.tau - 1.0) > 1e-9:
            raise DomainError("delta and tau must sum to 1")

    def at(self, n: int):
        return _RatioParams(n, self.delta, self.tau, self.omega, self.k,
                            self.p, self.p_max)


@dataclass(frozen=True)
class _RatioParams:
    n: float
    delta: float
    tau: float
    omega: float
    k: int
    p: float
    p_max: float


def tune_n(template: RatioTemplate, target_eps_sec: float,
           target_eps_cor: float, n_cap: int = 2 ** 22,
           grid_axis: int = 12) -> TuneResult:
    """Binary-search the smallest n meeting both security and correctness targets."""
    if not template.p_max < template.omega < max_corrupt_fraction(template.p) / template.k:
        raise InfeasibleError("need p_max < omega < ceiling for tuning")

    def meets(n: int):
        report = minimize_epsilon_ver(template.at(n), target_omega=template.omega,
                                      grid_axis=grid_axis)
        ok = (report.epsilon_sec <= target_eps_sec
              and report.epsilon_cor <= target_eps_cor)
        return ok, report

    lo, hi = 1, 1
    report_hi = None
    while hi <= n_cap:
        ok, report_hi = meets(hi)
        if ok:
            break
        lo, hi = hi, hi * 2
    else:
        return TuneResult(n_cap, False, report_hi)
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        ok, report = meets(mid)
        if ok:
            hi, report_hi = mid, report
        else:
            lo = mid
    return TuneResult(hi, True, report_hi)
