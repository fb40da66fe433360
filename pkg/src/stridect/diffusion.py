"""Noise schedules, diffusion steps, sparse-view guidance and the optimal
correction weight.

Conventions: discrete timesteps t = 0..T with index 0 meaning "clean"
(beta[0] = 0, alpha_bar[0] = 1). The forward kernel is
y_t = sqrt(alpha_bar_t) y_0 + sqrt(1 - alpha_bar_t) eps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GuidanceClampWarning, InvalidArgumentError

_GUIDANCE_MODES = ("temporal", "fixed", "optimal-closed-form", "optimal-oracle")


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Variance-preserving ladder plus a variance-exploding sigma for the
    correction branch."""

    T: int
    beta: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)
    ve_sigma_min: float = 1e-2
    ve_sigma_max: float = 1.0

    def __post_init__(self):
        if self.T < 1:
            raise InvalidArgumentError("T must be >= 1")
        b = np.asarray(self.beta, dtype=np.float64)
        if b.shape != (self.T + 1,) or b[0] != 0.0:
            raise InvalidArgumentError("beta must have length T+1 with beta[0] = 0")
        core = b[1:]
        if np.any(core <= 0) or np.any(core >= 1) or np.any(np.diff(core) < 0):
            raise InvalidArgumentError("beta_t must be increasing within (0, 1)")
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if np.any(np.diff(ab) >= 0) or ab[0] != 1.0 or np.any(ab <= 0):
            raise InvalidArgumentError("alpha_bar must start at 1 and strictly decrease")
        if not (0 < self.ve_sigma_min < self.ve_sigma_max):
            raise InvalidArgumentError("need 0 < ve_sigma_min < ve_sigma_max")
        for name in ("beta", "alpha", "alpha_bar"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def ve_sigma(self, t):
        """Geometric noise level for continuous t in [0, 1]; increasing."""
        t = np.asarray(t, dtype=np.float64)
        out = self.ve_sigma_min * (self.ve_sigma_max / self.ve_sigma_min) ** t
        return float(out) if out.ndim == 0 else out

    def _check_t(self, t, lowest=0):
        if not (lowest <= t <= self.T):
            raise InvalidArgumentError(f"t={t} outside [{lowest}, {self.T}]")


def linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2,
                    ve_sigma_min: float = 1e-2, ve_sigma_max: float = 1.0) -> NoiseSchedule:
    """Linearly ramped beta_t from beta_start to beta_end over T steps."""
    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar,
                         ve_sigma_min=ve_sigma_min, ve_sigma_max=ve_sigma_max)


def forward_noising(y0, t: int, sched: NoiseSchedule, rng) -> tuple:
    """Draw eps ~ N(0, I) and return (y_t, eps). t = 0 returns y0 exactly."""
    sched._check_t(t)
    y0 = np.asarray(y0, dtype=np.float64)
    eps = rng.standard_normal(y0.shape)
    ab = sched.alpha_bar[t]
    y_t = np.sqrt(ab) * y0 + np.sqrt(1.0 - ab) * eps
    return y_t, eps


def predict_x0(y_t, eps_hat, t: int, sched: NoiseSchedule):
    """Invert the forward kernel: y0_hat = (y_t - sqrt(1-ab) eps) / sqrt(ab)."""
    sched._check_t(t)
    ab = sched.alpha_bar[t]
    return (np.asarray(y_t) - np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(ab)


@dataclass(frozen=True)
class GuidanceConfig:
    """How the per-step observation-blend weight is chosen."""

    mode: str = "temporal"
    nu: float = 1.0
    T: int = 1000
    fixed_lambda: float | None = None

    def __post_init__(self):
        if self.mode not in _GUIDANCE_MODES:
            raise InvalidArgumentError(f"unknown guidance mode {self.mode!r}")
        if not (0.0 <= self.nu <= 1.0):
            raise InvalidArgumentError("nu must lie in [0, 1]")
        if self.T < 1:
            raise InvalidArgumentError("T must be >= 1")
        if self.mode == "fixed" and self.fixed_lambda is None:
            raise InvalidArgumentError("fixed mode requires fixed_lambda")


def guidance_weight(t: int, cfg: GuidanceConfig) -> float:
    """Scheduled blend weight: temporal mode is min(1, t/T) * nu."""
    if t < 0:
        raise InvalidArgumentError("t must be >= 0")
    if cfg.mode == "fixed":
        return float(cfg.fixed_lambda)
    return min(1.0, t / cfg.T) * cfg.nu


def apply_sparse_guidance(y0_hat, y_s, active, lam: float):
    """Blend observed rows into the prediction:
    y0_tilde = y0_hat + lam * M o (y_s - y0_hat).

    Unmasked rows pass through bit-exactly; lam = 1 copies observed rows
    exactly. Weights outside [0, 1] are clamped with a GuidanceClampWarning.
    """
    if not np.isfinite(lam):
        raise InvalidArgumentError("guidance weight must be finite")
    if lam < 0.0 or lam > 1.0:
        warnings.warn(f"guidance weight {lam} clamped into [0, 1]", GuidanceClampWarning)
        lam = min(1.0, max(0.0, lam))
    y0_hat = np.asarray(y0_hat)
    if lam == 0.0:
        return y0_hat
    active = np.asarray(active, bool)[:, None]
    y_s = np.asarray(y_s)
    if lam == 1.0:
        return np.where(active, y_s, y0_hat)
    return np.where(active, y0_hat + lam * (y_s - y0_hat), y0_hat)


def ddim_step(y_t, y0_tilde, eps_hat, t: int, t_prev: int, sched: NoiseSchedule,
              sigma_t: float = 0.0, rng=None, subtract_sigma: bool = False):
    """One reverse jump t -> t_prev:
    y_prev = sqrt(ab_prev) y0_tilde + c eps_hat + sigma_t z,
    with c = sqrt(1 - ab_prev) by default (c = sqrt(1 - ab_prev - sigma^2)
    when subtract_sigma, which is the form whose sigma matches ancestral
    sampling). sigma_t = 0 is deterministic.
    """
    if not (0 <= t_prev < t <= sched.T):
        raise InvalidArgumentError(f"need 0 <= t_prev < t <= T, got {t_prev}, {t}")
    if sigma_t < 0:
        raise InvalidArgumentError("sigma_t must be >= 0")
    ab_prev = sched.alpha_bar[t_prev]
    gap = 1.0 - ab_prev - (sigma_t**2 if subtract_sigma else 0.0)
    if gap < -1e-15:
        raise InvalidArgumentError("sigma_t too large for this step")
    out = np.sqrt(ab_prev) * np.asarray(y0_tilde) + np.sqrt(max(gap, 0.0)) * np.asarray(eps_hat)
    if sigma_t > 0.0:
        if rng is None:
            raise InvalidArgumentError("stochastic step needs an rng")
        out = out + sigma_t * rng.standard_normal(out.shape)
    return out


def ddpm_posterior_mean(y_t, eps_hat, t: int, sched: NoiseSchedule):
    """Ancestral posterior mean mu = (y_t - (1-a_t)/sqrt(1-ab_t) eps)/sqrt(a_t)."""
    sched._check_t(t, lowest=1)
    a = sched.alpha[t]
    ab = sched.alpha_bar[t]
    return (np.asarray(y_t) - (1.0 - a) / np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(a)


def cfg_combine(eps_cond, eps_uncond, omega: float):
    """Classifier-free mix: (1 + omega) eps_cond - omega eps_uncond."""
    return (1.0 + omega) * np.asarray(eps_cond) - omega * np.asarray(eps_uncond)


@dataclass(frozen=True, eq=False)
class LambdaInputs:
    """Norms and inner product of the error vector pair used by the optimal
    correction weight: a = |zeta|, b = |xi|, c = <zeta, xi>."""

    a: float
    b: float
    c: float
    zeta: np.ndarray | None = field(default=None, repr=False)
    xi: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        vals = (self.a, self.b, self.c)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidArgumentError("lambda inputs must be finite")
        if self.a < 0 or self.b < 0:
            raise InvalidArgumentError("norms must be >= 0")
        bound = self.a * self.b
        if abs(self.c) > bound + 1e-12 * max(1.0, bound):
            raise InvalidArgumentError("|c| exceeds a*b: not a valid inner product")

    @classmethod
    def from_vectors(cls, zeta, xi) -> "LambdaInputs":
        zeta = np.asarray(zeta, dtype=np.float64).ravel()
        xi = np.asarray(xi, dtype=np.float64).ravel()
        if zeta.shape != xi.shape:
            raise InvalidArgumentError("zeta and xi must have equal length")
        if not (np.all(np.isfinite(zeta)) and np.all(np.isfinite(xi))):
            raise InvalidArgumentError("lambda input vectors must be finite")
        a = float(np.linalg.norm(zeta))
        b = float(np.linalg.norm(xi))
        c = float(zeta @ xi)
        # guard against harmless floating overshoot of Cauchy-Schwarz
        bound = a * b
        if abs(c) > bound:
            c = bound if c > 0 else -bound
        return cls(a=a, b=b, c=c, zeta=zeta, xi=xi)


def optimal_lambda(li: LambdaInputs) -> float:
    """Closed-form minimizer of |(1-lam) zeta + lam xi|^2 over [0, 1].

    lam* = (a^2 - c) / (a^2 + b^2 - 2c), clamped; a degenerate denominator
    (zeta == xi) returns 0.
    """
    denom = li.a**2 + li.b**2 - 2.0 * li.c
    if abs(denom) <= 1e-12:
        return 0.0
    lam = (li.a**2 - li.c) / denom
    return min(1.0, max(0.0, lam))


def optimal_lambda_oracle(li: LambdaInputs, grid_step: float = 1e-4) -> float:
    """Exhaustive grid minimizer of the same objective (lowest-index ties)."""
    if not (0.0 < grid_step <= 1.0):
        raise InvalidArgumentError("grid_step must lie in (0, 1]")
    n = int(round(1.0 / grid_step))
    lams = np.linspace(0.0, 1.0, n + 1)
    if li.zeta is not None and li.xi is not None:
        mix = (1.0 - lams)[:, None] * li.zeta[None, :] + lams[:, None] * li.xi[None, :]
        f = np.einsum("ij,ij->i", mix, mix)
    else:
        f = (1 - lams) ** 2 * li.a**2 + lams**2 * li.b**2 + 2 * lams * (1 - lams) * li.c
    return float(lams[np.argmin(f)])


def lambda_worst_case_bound(a: float, b: float) -> float:
    """Minimizer of ((1-lam) a + lam b)^2 over [0, 1]: clamp(a / (a - b)).

    Equal norms are degenerate (objective constant in the worst case) and
    return 0.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or a < 0 or b < 0:
        raise InvalidArgumentError("a, b must be finite and >= 0")
    if abs(a - b) <= 1e-12 * max(1.0, a, b):
        return 0.0
    return min(1.0, max(0.0, a / (a - b)))
