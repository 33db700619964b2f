"""Statistical estimation of causal influence from sampled binary panels.

The estimation pipeline mirrors the exact one but works on data: each
process is modeled as a discrete-time point process whose spike probability
per bin is ``lambda_j * dt`` with a log-linear conditional intensity

    log lambda_j = alpha_0 + sum_{r in R} sum_{l=1..J} w[r, l] * y_{r, j-l},

fit by maximizing the Poisson-style log-likelihood
``sum_j (y_j * log lambda_j - lambda_j * dt)`` with Newton/IRLS steps.
Causally conditioned entropy rates are then the average negative Bernoulli
log-likelihood of held-in data under the fitted intensity, and influence is
scored by the normalized drop in entropy rate when a source block's past
enters the regressor set.

Everything is in nats per bin (natural log); the normalized rates consumed
by the structure algorithms are dimensionless fractions.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import ProcessPanel
from .exactinfo import InfoValue, ProcessSelector
from .structure import DIOracle

__all__ = [
    "EstimationError",
    "EstimatedDIOracle",
    "FitReport",
    "GlmPointProcessModel",
    "RateEstimate",
    "causal_entropy_rate",
    "fit_glm",
    "fit_glm_with_report",
    "make_estimated_oracle",
    "normalized_di_rate",
    "select_window_bic",
]

DEFAULT_WINDOW = 10
DEFAULT_BIN_WIDTH = 1e-3
GRAD_TOL = 1e-8
MAX_ITER = 100
_PMF_FLOOR = 1e-12
_ETA_CLAMP = 30.0
_CHUNK_ROWS = 1 << 17


class EstimationError(RuntimeError):
    """A fit could not be completed; carries the partial report if any."""

    def __init__(self, message: str, report: "FitReport | None" = None) -> None:
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class GlmPointProcessModel:
    """Log-linear conditional-intensity model for one target process.

    ``history[r, l-1]`` multiplies regressor ``regressors[r]``'s symbol
    ``l`` bins in the past; the regressor set always includes the target
    itself.  ``bin_width`` is in seconds, intensities in events/second.
    """

    target: int
    regressors: tuple[int, ...]
    window: int
    intercept: float
    history: np.ndarray
    bin_width: float

    def __post_init__(self) -> None:
        regressors = tuple(sorted(int(r) for r in self.regressors))
        if len(set(regressors)) != len(regressors):
            raise ValueError(f"duplicate regressors in {regressors}")
        if self.target not in regressors:
            raise ValueError(
                f"target {self.target} must be among its own regressors {regressors}"
            )
        if self.window < 0:
            raise ValueError(f"window must be >= 0, got {self.window}")
        if not self.bin_width > 0:
            raise ValueError(f"bin width must be positive, got {self.bin_width}")
        hist = np.asarray(self.history, dtype=float)
        expected = (len(regressors), self.window)
        if hist.shape != expected:
            raise ValueError(f"history has shape {hist.shape}, expected {expected}")
        if not (np.all(np.isfinite(hist)) and math.isfinite(self.intercept)):
            raise ValueError("coefficients must be finite")
        hist = hist.copy()
        hist.setflags(write=False)
        object.__setattr__(self, "history", hist)
        object.__setattr__(self, "regressors", regressors)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def coefficients(self) -> np.ndarray:
        """Flat parameter vector: intercept, then history row by row."""
        return np.concatenate([[self.intercept], self.history.ravel()])

    def spike_probabilities(self, data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-bin spike probability ``lambda_j * dt`` and outcomes.

        Evaluates bins ``window .. n-1`` of one trajectory so every lag is
        observed.  Probabilities are clamped away from 0 and 1 so the
        Bernoulli log-pmf stays finite.
        """
        X, y = _design_matrix(data, self.target, self.regressors, self.window)
        eta = X @ self.coefficients + math.log(self.bin_width)
        mu = np.exp(np.clip(eta, -_ETA_CLAMP, _ETA_CLAMP))
        return np.clip(mu, _PMF_FLOOR, 1.0 - _PMF_FLOOR), y


@dataclass(frozen=True)
class RateEstimate:
    """A pair of entropy rates and their normalized difference.

    ``h_base`` conditions on the target's own past plus the base set;
    ``h_full`` adds the source block.  ``normalized`` is reported raw and
    may be slightly negative under sampling noise; thresholding is the
    caller's job.
    """

    h_base: float
    h_full: float
    normalized: float
    n: int

    def __post_init__(self) -> None:
        if not self.h_base > 0.0:
            raise ValueError(
                f"base entropy rate must be positive, got {self.h_base!r}"
            )


@dataclass(frozen=True)
class FitReport:
    """Convergence audit of one maximum-likelihood fit."""

    target: int
    regressors: tuple[int, ...]
    window: int
    converged: bool
    iterations: int
    gradient_norm: float
    log_likelihood: float
    ll_trace: tuple[float, ...]
    n_observations: int

    def to_json(self, model: GlmPointProcessModel | None = None) -> dict:
        payload = {
            "target": self.target,
            "regressors": list(self.regressors),
            "window": self.window,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "log_likelihood": self.log_likelihood,
            "ll_trace": list(self.ll_trace),
            "n_observations": self.n_observations,
        }
        if model is not None:
            payload["intercept"] = model.intercept
            payload["history"] = model.history.tolist()
            payload["bin_width"] = model.bin_width
        return payload


def _design_matrix(
    data: np.ndarray, target: int, regressors: Sequence[int], window: int
) -> tuple[np.ndarray, np.ndarray]:
    """Lagged design matrix and outcomes for bins ``window .. n-1``.

    Column 0 is the intercept; the remaining columns follow the flat
    coefficient layout (regressor major, lag 1..window minor).
    """
    m, n = data.shape
    if n <= window:
        raise EstimationError(
            f"trajectory has {n} bins but the window needs at least {window + 1}"
        )
    rows = n - window
    X = np.empty((rows, 1 + window * len(regressors)), dtype=float)
    X[:, 0] = 1.0
    col = 1
    for r in regressors:
        for lag in range(1, window + 1):
            X[:, col] = data[r, window - lag : n - lag]
            col += 1
    y = data[target, window:].astype(float)
    return X, y


def _stacked_design(
    panel: ProcessPanel, target: int, regressors: Sequence[int], window: int
) -> tuple[np.ndarray, np.ndarray]:
    parts = [_design_matrix(traj, target, regressors, window) for traj in panel.data]
    if len(parts) == 1:
        return parts[0]
    X = np.concatenate([p[0] for p in parts], axis=0)
    y = np.concatenate([p[1] for p in parts])
    return X, y


def _poisson_ll(y: np.ndarray, eta: np.ndarray, log_dt: float) -> float:
    """``sum y*log(lambda) - lambda*dt`` with ``eta = log(lambda * dt)``."""
    return float(np.sum(y * (eta - log_dt)) - np.sum(np.exp(eta)))


def fit_glm_with_report(
    panel: ProcessPanel,
    target: int,
    regressors: Iterable[int],
    window: int = DEFAULT_WINDOW,
    *,
    bin_width: float = DEFAULT_BIN_WIDTH,
    grad_tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> tuple[GlmPointProcessModel, FitReport]:
    """Maximum-likelihood fit returning both the model and its audit report.

    Newton/IRLS with step halving; converged when the L2 norm of the
    log-likelihood gradient drops to ``grad_tol``.  Non-convergence within
    ``max_iter`` iterations (e.g. separation pushing coefficients to
    infinity) raises :class:`EstimationError` carrying the iteration trace.
    """
    regressors = tuple(sorted(set(int(r) for r in regressors) | {int(target)}))
    for r in regressors:
        if not 0 <= r < panel.m:
            raise ValueError(f"regressor {r} out of range for m={panel.m}")
    if any(a.size != 2 for a in panel.alphabets):
        raise ValueError("intensity fitting requires a binary panel")
    if not panel.data:
        raise EstimationError("panel has no trajectories")

    X, y = _stacked_design(panel, target, regressors, window)
    n_obs, p = X.shape
    needed = 10 * p
    if n_obs <= needed:
        raise EstimationError(
            f"{n_obs} usable bins for {p} parameters; need more than {needed}"
        )

    log_dt = math.log(bin_width)
    beta = np.zeros(p)
    rate0 = max(float(y.mean()), 1e-6)
    beta[0] = math.log(rate0) - log_dt

    def pass_through(beta_vec: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """One chunked sweep: log-likelihood, gradient, Hessian (negated)."""
        ll = 0.0
        grad = np.zeros(p)
        hess = np.zeros((p, p))
        for start in range(0, n_obs, _CHUNK_ROWS):
            Xc = X[start : start + _CHUNK_ROWS]
            yc = y[start : start + _CHUNK_ROWS]
            eta = np.clip(Xc @ beta_vec + log_dt, -_ETA_CLAMP, _ETA_CLAMP)
            mu = np.exp(eta)
            ll += _poisson_ll(yc, eta, log_dt)
            resid = yc - mu
            grad += Xc.T @ resid
            hess += (Xc * mu[:, None]).T @ Xc
        return ll, grad, hess

    ll, grad, hess = pass_through(beta)
    trace = [ll]
    iterations = 0
    while True:
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            break
        if iterations >= max_iter:
            report = _report(
                target, regressors, window, False, iterations, gnorm, ll, trace, n_obs
            )
            raise EstimationError(
                f"fit for target {target} with regressors {regressors} did not "
                f"reach gradient norm {grad_tol} in {max_iter} iterations "
                f"(last norm {gnorm:.3e}); the panel may be separable or the "
                f"window too large",
                report,
            )
        # A vanishing ridge keeps steps finite when rare contexts make the
        # curvature nearly singular; it is far below meaningful curvature,
        # and convergence is still judged on the true gradient.
        ridge = 1e-12 * (float(np.trace(hess)) / p + 1.0)
        try:
            step = np.linalg.solve(hess + ridge * np.eye(p), grad)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(hess, grad, rcond=None)
        # Step halving: never accept more than a rounding-level decrease
        # (the chunked sums carry noise proportional to the magnitude).
        floor = ll - 1e-9 * (1.0 + abs(ll))
        scale = 1.0
        for _ in range(40):
            candidate = beta + scale * step
            new_ll, new_grad, new_hess = pass_through(candidate)
            if new_ll >= floor:
                break
            scale *= 0.5
        else:
            report = _report(
                target, regressors, window, False, iterations, gnorm, ll, trace, n_obs
            )
            raise EstimationError(
                f"step halving failed to improve the likelihood at iteration "
                f"{iterations} (target {target}, regressors {regressors})",
                report,
            )
        beta, ll, grad, hess = candidate, new_ll, new_grad, new_hess
        trace.append(ll)
        iterations += 1

    converged = True
    history = beta[1:].reshape(len(regressors), window) if window else np.zeros((len(regressors), 0))
    model = GlmPointProcessModel(
        target=target,
        regressors=regressors,
        window=window,
        intercept=float(beta[0]),
        history=history,
        bin_width=bin_width,
    )
    report = _report(
        target, regressors, window, converged, iterations, gnorm, ll, trace, n_obs
    )
    return model, report


def _report(target, regressors, window, converged, iterations, gnorm, ll, trace, n_obs):
    return FitReport(
        target=target,
        regressors=tuple(regressors),
        window=window,
        converged=converged,
        iterations=iterations,
        gradient_norm=gnorm,
        log_likelihood=ll,
        ll_trace=tuple(trace),
        n_observations=n_obs,
    )


def fit_glm(
    panel: ProcessPanel,
    target: int,
    regressors: Iterable[int],
    window: int = DEFAULT_WINDOW,
    *,
    bin_width: float = DEFAULT_BIN_WIDTH,
    grad_tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> GlmPointProcessModel:
    model, _ = fit_glm_with_report(
        panel, target, regressors, window,
        bin_width=bin_width, grad_tol=grad_tol, max_iter=max_iter,
    )
    return model


def select_window_bic(
    panel: ProcessPanel,
    target: int,
    regressors: Iterable[int],
    candidates: Iterable[int] = (2, 4, 6, 8, 10),
    *,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> int:
    """Pick a history window by the Bayesian information criterion.

    An optional convenience; the pipeline default is a fixed window.  Each
    candidate window is fit and scored as ``-2*LL + p*log(n)``; smallest
    wins, ties to the smaller window.
    """
    best = None
    for window in sorted(set(int(j) for j in candidates)):
        model, report = fit_glm_with_report(
            panel, target, regressors, window, bin_width=bin_width
        )
        p = model.coefficients.size
        bic = -2.0 * report.log_likelihood + p * math.log(report.n_observations)
        if best is None or bic < best[0]:
            best = (bic, window)
    if best is None:
        raise ValueError("no candidate windows supplied")
    return best[1]


class _FitCache:
    """Memoizes fits keyed by (target, regressors, window).

    Concurrent requests for the same key block on a single in-flight fit
    instead of duplicating work; distinct keys fit in parallel.
    """

    class _Entry:
        __slots__ = ("event", "model", "report", "error")

        def __init__(self) -> None:
            self.event = threading.Event()
            self.model: GlmPointProcessModel | None = None
            self.report: FitReport | None = None
            self.error: BaseException | None = None

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: dict[tuple, "_FitCache._Entry"] = {}

    def get_or_fit(self, key, fit_fn):
        with self._lock:
            entry = self._entries.get(key)
            owner = entry is None
            if owner:
                entry = self._Entry()
                self._entries[key] = entry
        if owner:
            try:
                entry.model, entry.report = fit_fn()
            except BaseException as exc:
                entry.error = exc
                raise
            finally:
                entry.event.set()
        else:
            entry.event.wait()
            if entry.error is not None:
                raise entry.error
        return entry.model, entry.report

    def reports(self) -> list[FitReport]:
        with self._lock:
            entries = list(self._entries.values())
        return [e.report for e in entries if e.report is not None]


def _entropy_rate_from_fit(
    panel: ProcessPanel, model: GlmPointProcessModel
) -> tuple[float, int]:
    """Average negative Bernoulli log-likelihood, nats/bin, over the panel."""
    total = 0.0
    count = 0
    for traj in panel.data:
        prob, y = model.spike_probabilities(traj)
        total -= float(np.sum(np.where(y > 0, np.log(prob), np.log1p(-prob))))
        count += y.size
    return total / count, count


def causal_entropy_rate(
    panel: ProcessPanel,
    target: int,
    conditioning: Iterable[int] = (),
    *,
    window: int = DEFAULT_WINDOW,
    bin_width: float = DEFAULT_BIN_WIDTH,
    cache: _FitCache | None = None,
) -> float:
    """Estimated entropy rate of ``target`` given its own past and the past
    of ``conditioning``, in nats per bin.  Always nonnegative: the fitted
    spike probability is evaluated through the Bernoulli pmf.
    """
    conditioning = frozenset(int(c) for c in conditioning)
    if target in conditioning:
        raise ValueError(f"target {target} cannot condition on itself explicitly")
    regressors = tuple(sorted(conditioning | {int(target)}))
    key = (int(target), regressors, int(window))
    fit = lambda: fit_glm_with_report(
        panel, target, regressors, window, bin_width=bin_width
    )
    if cache is None:
        model, _ = fit()
    else:
        model, _ = cache.get_or_fit(key, fit)
    rate, _ = _entropy_rate_from_fit(panel, model)
    return rate


def normalized_di_rate(
    panel: ProcessPanel,
    sources: Iterable[int],
    target: int,
    conditioning: Iterable[int] = (),
    *,
    window: int = DEFAULT_WINDOW,
    bin_width: float = DEFAULT_BIN_WIDTH,
    cache: _FitCache | None = None,
) -> RateEstimate:
    """Normalized causally conditioned influence estimate.

    ``(h_base - h_full) / h_base`` where ``h_base`` conditions on
    ``conditioning`` and ``h_full`` additionally on ``sources``.  An empty
    source block yields exactly zero because both fits share one key.
    """
    sources = frozenset(int(s) for s in sources)
    conditioning = frozenset(int(c) for c in conditioning)
    if sources & conditioning or target in sources or target in conditioning:
        raise ValueError("sources, target, and conditioning must be disjoint")
    cache = cache if cache is not None else _FitCache()

    h_base = causal_entropy_rate(
        panel, target, conditioning, window=window, bin_width=bin_width, cache=cache
    )
    h_full = causal_entropy_rate(
        panel, target, conditioning | sources,
        window=window, bin_width=bin_width, cache=cache,
    )
    if not h_base > 0.0:
        raise EstimationError(
            f"base entropy rate for target {target} is {h_base!r}; cannot normalize"
        )
    n_obs = sum(traj.shape[1] - window for traj in panel.data)
    return RateEstimate(
        h_base=h_base,
        h_full=h_full,
        normalized=(h_base - h_full) / h_base,
        n=n_obs,
    )


class EstimatedDIOracle(DIOracle):
    """Structure-algorithm oracle backed by fitted intensity models.

    Values are normalized rate estimates (dimensionless, natural-log
    internals), clamped at zero before being wrapped, with the raw pair of
    entropy rates retained in ``rate_log`` for reporting.  Fits are shared
    across queries through a :class:`_FitCache`.
    """

    def __init__(
        self,
        panel: ProcessPanel,
        window: int = DEFAULT_WINDOW,
        threshold: float = 0.05,
        *,
        bin_width: float = DEFAULT_BIN_WIDTH,
    ) -> None:
        super().__init__()
        self.panel = panel
        self.m = panel.m
        self.window = int(window)
        self.threshold = float(threshold)
        self.bin_width = float(bin_width)
        self.fits = _FitCache()
        self.rate_log: dict[tuple, RateEstimate] = {}
        self._rate_lock = threading.Lock()
        self._h_memo: dict[tuple, float] = {}

    def _entropy_rate(self, target: int, conditioning: frozenset[int]) -> float:
        key = (target, tuple(sorted(conditioning | {target})), self.window)
        with self._rate_lock:
            hit = self._h_memo.get(key)
        if hit is not None:
            return hit
        h = causal_entropy_rate(
            self.panel, target, conditioning,
            window=self.window, bin_width=self.bin_width, cache=self.fits,
        )
        with self._rate_lock:
            h = self._h_memo.setdefault(key, h)
        return h

    def _compute(self, sel: ProcessSelector) -> InfoValue:
        sel.validate_for(self.m)
        h_base = self._entropy_rate(sel.target, sel.conditioning)
        h_full = self._entropy_rate(sel.target, sel.conditioning | sel.sources)
        if not h_base > 0.0:
            raise EstimationError(
                f"base entropy rate for target {sel.target} is {h_base!r}; "
                f"cannot normalize"
            )
        n_obs = sum(traj.shape[1] - self.window for traj in self.panel.data)
        rate = RateEstimate(
            h_base=h_base,
            h_full=h_full,
            normalized=(h_base - h_full) / h_base,
            n=n_obs,
        )
        with self._rate_lock:
            self.rate_log[(sel.sources, sel.target, sel.conditioning)] = rate
        kind = "CCDI" if sel.conditioning else "DI"
        return InfoValue(
            value=max(0.0, rate.normalized),
            kind=kind,
            log_base=math.e,
            source="estimated",
            denominator=rate.h_base,
        )

    def fit_reports(self) -> list[FitReport]:
        return self.fits.reports()


def make_estimated_oracle(
    panel: ProcessPanel,
    window: int = DEFAULT_WINDOW,
    threshold: float = 0.05,
    *,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> EstimatedDIOracle:
    """Adapter from a sampled panel to the structure algorithms' oracle
    interface; ``threshold`` is the normalized-rate cut callers should pass
    as ``eps`` when running the algorithms.
    """
    return EstimatedDIOracle(panel, window, threshold, bin_width=bin_width)
