"""Hit/miss probability of detection: logit(POD) = b0 + b1 ln(a)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Z95 = 1.6448536269514722  # one-sided 95% normal quantile
LOGIT90 = math.log(9.0)
MAX_ITER = 200


class DegenerateDataError(ValueError):
    """All hits or all misses: the logistic model is not identifiable."""


class FitError(RuntimeError):
    """Newton iterations did not converge."""


class NotDemonstrableError(ValueError):
    """The lower confidence band never reaches 90% in the search range."""


def _expit(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class PodCurve:
    b0: float
    b1: float
    cov: np.ndarray  # 2x2 covariance of (b0, b1)
    a_min: float  # observed size range, mm
    a_max: float
    n: int
    penalized: bool = False  # Firth fallback used

    def eta(self, a):
        return self.b0 + self.b1 * np.log(a)

    def pod(self, a):
        return _expit(self.eta(a))

    def se_eta(self, a):
        la = np.log(np.asarray(a, dtype=np.float64))
        c = self.cov
        var = c[0, 0] + 2.0 * c[0, 1] * la + c[1, 1] * la * la
        return np.sqrt(np.maximum(var, 0.0))

    def pod_lo(self, a):
        """Wald one-sided 95% lower bound on POD(a)."""
        return _expit(self.eta(a) - Z95 * self.se_eta(a))

    @property
    def a90(self) -> float:
        return math.exp((LOGIT90 - self.b0) / self.b1)

    @property
    def a90_95(self) -> float:
        return a90_95(self)

    def sample(self, n: int = 100) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``n`` log-spaced sizes over the observed range with POD and lower band."""
        a = np.exp(np.linspace(math.log(self.a_min), math.log(self.a_max), n))
        return a, self.pod(a), self.pod_lo(a)


def _newton(X: np.ndarray, y: np.ndarray, firth: bool) -> tuple[np.ndarray, np.ndarray]:
    beta = np.zeros(X.shape[1])

    def objective(b):
        eta = X @ b
        ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
        if firth:
            p = _expit(eta)
            info = X.T @ (X * (p * (1 - p))[:, None])
            sign, logdet = np.linalg.slogdet(info)
            ll += 0.5 * logdet if sign > 0 else -np.inf
        return ll

    cur = objective(beta)
    for _ in range(MAX_ITER):
        p = _expit(X @ beta)
        w = p * (1 - p)
        info = X.T @ (X * w[:, None])
        resid = y - p
        if firth:
            inv = np.linalg.inv(info)
            h = w * np.einsum("ij,jk,ik->i", X, inv, X)
            resid = resid + h * (0.5 - p)
        step = np.linalg.solve(info, X.T @ resid)
        t = 1.0
        while True:
            cand = beta + t * step
            val = objective(cand)
            if val >= cur - 1e-12 or t < 1e-8:
                break
            t *= 0.5
        beta, cur = cand, val
        if np.max(np.abs(t * step)) < 1e-10:
            p = _expit(X @ beta)
            info = X.T @ (X * (p * (1 - p))[:, None])
            return beta, np.linalg.inv(info)
    raise FitError(f"POD fit did not converge in {MAX_ITER} iterations")


def is_separable(sizes: np.ndarray, hits: np.ndarray) -> bool:
    """True when some size threshold splits hits from misses (complete or quasi-complete)."""
    return sizes[hits].min() >= sizes[~hits].max() or sizes[hits].max() <= sizes[~hits].min()


def fit_pod(records) -> PodCurve:
    """Maximum-likelihood hit/miss fit; Firth-penalised (and flagged) when the data separate."""
    sizes = np.array([r.true_size for r in records], dtype=np.float64)
    hits = np.array([r.hit for r in records], dtype=bool)
    if len(sizes) and (hits.all() or not hits.any()):
        raise DegenerateDataError("POD fit needs both hits and misses")
    if len(sizes) < 20:
        raise DegenerateDataError(f"POD fit needs at least 20 records, got {len(sizes)}")
    if sizes.max() < 2.0 * sizes.min():
        raise DegenerateDataError("POD fit needs sizes spanning at least a factor of 2")
    X = np.column_stack([np.ones_like(sizes), np.log(sizes)])
    y = hits.astype(np.float64)
    firth = is_separable(sizes, hits)
    beta, cov = _newton(X, y, firth)
    return PodCurve(float(beta[0]), float(beta[1]), cov, float(sizes.min()), float(sizes.max()),
                    len(sizes), bool(firth))


def a90_95(curve: PodCurve, tol: float = 1e-4) -> float:
    """Smallest size whose lower 95% band reaches 0.90, searched in [a_min/10, a_max*10]."""
    if not curve.b1 > 0:
        raise NotDemonstrableError("POD does not increase with size (b1 <= 0)")
    if not np.any(curve.cov):
        return curve.a90
    lo_a, hi_a = curve.a_min / 10.0, curve.a_max * 10.0
    grid = np.exp(np.linspace(math.log(lo_a), math.log(hi_a), 2001))
    ok = curve.pod_lo(grid) >= 0.9
    if not ok.any():
        raise NotDemonstrableError(
            f"lower POD band stays below 0.90 up to {hi_a:.4g} mm (not demonstrable)")
    i = int(np.argmax(ok))
    if i == 0:
        return float(grid[0])
    lo, hi = float(grid[i - 1]), float(grid[i])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if curve.pod_lo(mid) >= 0.9:
            hi = mid
        else:
            lo = mid
    return hi
