"""Recover physics from photon traces.

Change-point atom counting, Poisson burst classification, and binomial
maximum-likelihood fits of survival and hyperfine-relaxation curves with
uncertainties from the observed information matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .signals import BurstModel, DetectorModel, PhotonTrace

__all__ = [
    "Segmentation",
    "FitResult",
    "FitError",
    "BurstClassification",
    "detect_steps",
    "infer_atom_numbers",
    "classify_burst",
    "fit_exponential_survival",
    "fit_relaxation",
    "fit_relaxation_joint",
]


class FitError(RuntimeError):
    """Raised when a fit cannot converge (degenerate or pathological data)."""


@dataclass
class Segmentation:
    """Constant-rate segments of a photon trace.

    change_points are bin indices at which a new segment starts; segment i
    spans bins [boundaries[i], boundaries[i+1]). levels are count rates in
    counts/s.
    """

    n_bins: int
    bin_width: float
    change_points: list[int]
    levels: list[float]
    inferred_n: list[int] | None = None
    ambiguous: list[bool] | None = None

    @property
    def boundaries(self) -> list[int]:
        return [0, *self.change_points, self.n_bins]


@dataclass
class FitResult:
    """Maximum-likelihood fit: parameter values, errors and covariance."""

    parameters: dict[str, float]
    standard_errors: dict[str, float]
    covariance: np.ndarray
    log_likelihood: float
    n_points: int
    bootstrap_errors: dict[str, float] | None = None

    def to_json(self) -> str:
        names = list(self.parameters)
        rec = {
            "parameter_names": names,
            "values": [self.parameters[k] for k in names],
            "standard_errors": [self.standard_errors[k] for k in names],
            "covariance_row_major": [float(x) for x in np.asarray(self.covariance).ravel()],
            "log_likelihood": self.log_likelihood,
            "n_points": self.n_points,
        }
        if self.bootstrap_errors is not None:
            rec["bootstrap_errors"] = [self.bootstrap_errors[k] for k in names]
        return json.dumps(rec, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        rec = json.loads(text)
        names = rec["parameter_names"]
        k = len(names)
        boot = rec.get("bootstrap_errors")
        return cls(
            parameters=dict(zip(names, rec["values"])),
            standard_errors=dict(zip(names, rec["standard_errors"])),
            covariance=np.array(rec["covariance_row_major"]).reshape(k, k),
            log_likelihood=rec["log_likelihood"],
            n_points=rec["n_points"],
            bootstrap_errors=dict(zip(names, boot)) if boot is not None else None,
        )


# ---------------------------------------------------------------------------
# change-point detection
# ---------------------------------------------------------------------------

def _segment_loglik(total: float, n: int) -> float:
    # Poisson log-likelihood at the rate MLE, dropping the factorial terms.
    if total == 0:
        return 0.0
    return total * math.log(total / n) - total


def _best_split(counts: np.ndarray):
    """Best single split of a segment: (log-likelihood gain, split index)."""
    n = len(counts)
    if n < 2:
        return -np.inf, None
    cs = np.cumsum(counts, dtype=float)
    total = cs[-1]
    i = np.arange(1, n)
    left, right = cs[:-1], total - cs[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ll_left = np.where(left > 0, left * np.log(left / i) - left, 0.0)
        ll_right = np.where(right > 0, right * np.log(right / (n - i)) - right, 0.0)
    gains = ll_left + ll_right - _segment_loglik(total, n)
    k = int(np.argmax(gains))
    return float(gains[k]), k + 1


def detect_steps(trace: PhotonTrace, penalty: float | None = None) -> Segmentation:
    """Binary-segmentation change-point search with a penalized Poisson likelihood.

    A split is accepted when the log-likelihood gain exceeds the
    per-change-point penalty. The default penalty is 1.5*ln(n_bins), the
    change-point BIC that counts the split location alongside the new
    rate parameter; plain ln(n) admits noticeably more false positives.
    """
    counts = trace.counts
    n = len(counts)
    if penalty is None:
        penalty = 1.5 * math.log(max(n, 2))
    change_points: list[int] = []

    def recurse(lo: int, hi: int) -> None:
        gain, split = _best_split(counts[lo:hi])
        if split is None or gain <= penalty:
            return
        cp = lo + split
        recurse(lo, cp)
        change_points.append(cp)
        recurse(cp, hi)

    if n >= 2:
        recurse(0, n)
    change_points.sort()
    boundaries = [0, *change_points, n]
    levels = [
        float(counts[a:b].sum()) / ((b - a) * trace.bin_width)
        for a, b in zip(boundaries[:-1], boundaries[1:])
    ]
    return Segmentation(
        n_bins=n, bin_width=trace.bin_width, change_points=change_points, levels=levels
    )


def infer_atom_numbers(
    seg: Segmentation, det: DetectorModel, ambiguity_threshold: float = 0.3
) -> Segmentation:
    """Fill in integer atom numbers per segment from the detector calibration.

    n = round((level - background)/per_atom_rate); a segment is flagged
    ambiguous when the rounding residual exceeds the threshold (in atoms).
    """
    if det.per_atom_rate <= 0:
        raise ValueError("per_atom_rate must be positive")
    inferred, ambiguous = [], []
    for level in seg.levels:
        x = (level - det.background_rate) / det.per_atom_rate
        n = max(int(round(x)), 0)
        inferred.append(n)
        ambiguous.append(abs(x - n) > ambiguity_threshold)
    seg.inferred_n = inferred
    seg.ambiguous = ambiguous
    return seg


# ---------------------------------------------------------------------------
# burst classification
# ---------------------------------------------------------------------------

@dataclass
class BurstClassification:
    n_atoms: int
    posterior: np.ndarray  # P(k atoms in F=4 | counts), k = 0..n_atoms
    map_k: int

    @property
    def map_state(self) -> int:
        """MAP hyperfine state for a single atom (4 = bright, 3 = dark)."""
        if self.n_atoms != 1:
            raise ValueError("map_state is defined for single-atom windows only")
        return 4 if self.map_k == 1 else 3


def classify_burst(
    window_counts: int, n_atoms: int, model: BurstModel, prior=None
) -> BurstClassification:
    """Posterior over the number of bright (F=4) atoms in a detection window.

    Exact Poisson likelihood with mean background + k * photons_per_atom
    for k bright atoms; uniform prior unless one is supplied.
    """
    if n_atoms < 0:
        raise ValueError("n_atoms must be non-negative")
    if window_counts < 0:
        raise ValueError("window_counts must be non-negative")
    k = np.arange(n_atoms + 1)
    mean = model.background_photons_per_window + k * model.mean_photons_per_atom
    with np.errstate(divide="ignore"):
        loglik = np.where(
            mean > 0,
            window_counts * np.log(np.maximum(mean, 1e-300)) - mean - gammaln(window_counts + 1),
            0.0 if window_counts == 0 else -np.inf,
        )
    if prior is None:
        logprior = np.zeros(n_atoms + 1)
    else:
        prior = np.asarray(prior, dtype=float)
        if prior.shape != (n_atoms + 1,) or np.any(prior < 0) or prior.sum() == 0:
            raise ValueError("prior must be a non-negative vector of length n_atoms + 1")
        with np.errstate(divide="ignore"):
            logprior = np.log(prior)
    logpost = loglik + logprior
    logpost -= logpost.max()
    post = np.exp(logpost)
    post /= post.sum()
    return BurstClassification(n_atoms=n_atoms, posterior=post, map_k=int(np.argmax(post)))


# ---------------------------------------------------------------------------
# binomial maximum-likelihood fitting
# ---------------------------------------------------------------------------

_P_EPS = 1e-9


def _binomial_nll(p: np.ndarray, succ: np.ndarray, tot: np.ndarray) -> float:
    p = np.clip(p, _P_EPS, 1 - _P_EPS)
    return float(-np.sum(succ * np.log(p) + (tot - succ) * np.log1p(-p)))


def _binomial_nll_grad(p, dp, succ, tot):
    p = np.clip(p, _P_EPS, 1 - _P_EPS)
    w = succ / p - (tot - succ) / (1 - p)
    return -dp.T @ w


class _BinomialModel:
    """Binomial likelihood for a parametric success-probability curve."""

    def __init__(self, t, succ, tot, p_fn, dp_fn):
        self.t = np.asarray(t, dtype=float)
        self.succ = np.asarray(succ, dtype=float)
        self.tot = np.asarray(tot, dtype=float)
        self.p_fn = p_fn
        self.dp_fn = dp_fn

    def nll(self, x):
        return _binomial_nll(self.p_fn(self.t, x), self.succ, self.tot)

    def grad(self, x):
        return _binomial_nll_grad(
            self.p_fn(self.t, x), self.dp_fn(self.t, x), self.succ, self.tot
        )

    def hessian(self, x, rel_step=1e-6):
        k = len(x)
        h = np.empty((k, k))
        for j in range(k):
            step = rel_step * max(abs(x[j]), 1e-3)
            xp, xm = x.copy(), x.copy()
            xp[j] += step
            xm[j] -= step
            h[:, j] = (self.grad(xp) - self.grad(xm)) / (2 * step)
        return 0.5 * (h + h.T)

    def _projected_grad(self, x, lower, upper):
        # KKT: at an active lower bound only a negative gradient component
        # signals non-optimality (and vice versa at an upper bound)
        g = self.grad(x)
        g = np.where((x <= lower + 1e-12) & (g > 0), 0.0, g)
        g = np.where((x >= upper - 1e-12) & (g < 0), 0.0, g)
        return g

    def solve(self, x0, param_names, lower, upper):
        x0 = np.asarray(x0, dtype=float)
        res = minimize(
            self.nll,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 20000},
        )
        x = np.clip(res.x, lower, upper)
        # Newton polish to drive the (projected) gradient to zero
        for _ in range(60):
            g = self._projected_grad(x, lower, upper)
            if np.linalg.norm(g) < 1e-9:
                break
            h = self.hessian(x)
            try:
                step = np.linalg.solve(h, self.grad(x))
            except np.linalg.LinAlgError:
                break
            scale = 1.0
            f0 = self.nll(x)
            # accept-tolerance scales with |f0| (float resolution of the NLL)
            tol = 1e-12 + 1e-12 * abs(f0)
            for _ in range(30):
                x_new = np.clip(x - scale * step, lower, upper)
                if self.nll(x_new) <= f0 + tol:
                    break
                scale *= 0.5
            if np.array_equal(x_new, x):
                break
            x = x_new
        g = self._projected_grad(x, lower, upper)
        if not np.all(np.isfinite(g)) or np.linalg.norm(g) > 1e-4:
            raise FitError(f"fit did not converge (gradient norm {np.linalg.norm(g):.3g})")
        h = self.hessian(x)
        try:
            cov = np.linalg.inv(h)
        except np.linalg.LinAlgError as exc:
            raise FitError("observed information matrix is singular") from exc
        if np.any(np.diag(cov) < 0):
            raise FitError("observed information is not positive definite at the optimum")
        errs = np.sqrt(np.diag(cov))
        return FitResult(
            parameters=dict(zip(param_names, (float(v) for v in x))),
            standard_errors=dict(zip(param_names, (float(e) for e in errs))),
            covariance=cov,
            log_likelihood=-self.nll(x),
            n_points=len(self.t),
        )


def _bootstrap_errors(model: _BinomialModel, fit: FitResult, param_names, lower, upper,
                      n_resamples: int, seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    x_hat = np.array([fit.parameters[k] for k in param_names])
    p_hat = np.clip(model.p_fn(model.t, x_hat), 0.0, 1.0)
    draws = []
    for _ in range(n_resamples):
        succ = rng.binomial(model.tot.astype(int), p_hat)
        resampled = _BinomialModel(model.t, succ, model.tot, model.p_fn, model.dp_fn)
        try:
            refit = resampled.solve(x_hat, param_names, lower, upper)
        except FitError:
            continue
        draws.append([refit.parameters[k] for k in param_names])
    if len(draws) < max(10, n_resamples // 2):
        raise FitError("bootstrap resampling failed to converge")
    sd = np.std(np.array(draws), axis=0, ddof=1)
    return dict(zip(param_names, (float(s) for s in sd)))


def _survival_p(t, x):
    if len(x) == 1:
        return np.exp(-t / x[0])
    return x[1] * np.exp(-t / x[0])


def _survival_dp(t, x):
    e = np.exp(-t / x[0])
    if len(x) == 1:
        return (e * t / x[0] ** 2)[:, None]
    return np.stack([x[1] * e * t / x[0] ** 2, e], axis=1)


def fit_exponential_survival(points, offset_free: bool = False, bootstrap: int = 0) -> FitResult:
    """Binomial MLE of the survival curve p(t) = a * exp(-t/tau).

    points: iterable of (t_hold_s, survived, total). The amplitude a is
    fixed to 1 unless offset_free is set (magnetic trap: the immediate
    spin-projection loss shows up as a fitted a ~ 0.5).
    """
    pts = sorted((float(t), int(s), int(n)) for t, s, n in points)
    if len({t for t, _, _ in pts}) < 2:
        raise ValueError("need at least 2 distinct hold times")
    t = np.array([p[0] for p in pts])
    succ = np.array([p[1] for p in pts])
    tot = np.array([p[2] for p in pts])
    if np.any(tot <= 0) or np.any(succ < 0) or np.any(succ > tot):
        raise ValueError("require 0 <= survived <= total and total > 0")
    if np.all(succ == tot) or np.all(succ == 0):
        raise FitError("degenerate data: survival fraction is constant at 0 or 1")

    frac = np.clip(succ / tot, 1e-6, 1.0)
    # crude initial tau from a log-linear least-squares line
    slope = np.polyfit(t, np.log(frac), 1)[0]
    tau0 = -1.0 / slope if slope < -1e-12 else (t.max() - t.min()) * 2
    tau0 = min(max(tau0, 1e-6), 1e6)
    if offset_free:
        names = ("tau", "a")
        x0 = [tau0, min(float(frac.max()), 1.0)]
        lower, upper = np.array([1e-9, 1e-9]), np.array([np.inf, 1.0])
    else:
        names = ("tau",)
        x0 = [tau0]
        lower, upper = np.array([1e-9]), np.array([np.inf])
    model = _BinomialModel(t, succ, tot, _survival_p, _survival_dp)
    fit = model.solve(x0, names, lower, upper)
    if bootstrap:
        fit.bootstrap_errors = _bootstrap_errors(model, fit, names, lower, upper, bootstrap)
    return fit


def _relax_p(t, x):
    tau, peq, p0 = x
    with np.errstate(over="ignore", under="ignore"):
        return peq + (p0 - peq) * np.exp(-t / tau)


def _relax_dp(t, x):
    tau, peq, p0 = x
    with np.errstate(over="ignore", under="ignore"):
        e = np.exp(-t / tau)
        return np.stack([(p0 - peq) * e * t / tau**2, 1 - e, e], axis=1)


def fit_relaxation(points, f_initial: int, bootstrap: int = 0) -> FitResult:
    """Binomial MLE of P4(t) = P4eq + (P4(0) - P4eq) exp(-t/tau).

    points: iterable of (t_s, p4_hat, n_atoms); successes are
    round(p4_hat * n_atoms). Each preparation (F=3 or F=4) is fitted
    independently with all three parameters free.
    """
    if f_initial not in (3, 4):
        raise ValueError("f_initial must be 3 or 4")
    pts = sorted((float(t), float(p), int(n)) for t, p, n in points)
    if len(pts) < 3:
        raise ValueError("need at least 3 time points")
    t = np.array([p[0] for p in pts])
    p4 = np.array([p[1] for p in pts])
    tot = np.array([p[2] for p in pts])
    if np.any(tot <= 0) or np.any(p4 < 0) or np.any(p4 > 1):
        raise ValueError("require n_atoms > 0 and p4 in [0, 1]")
    succ = np.round(p4 * tot)

    p0_guess = 1.0 if f_initial == 4 else 0.0
    peq_guess = float(np.mean(p4[t >= np.median(t)]))
    span = max(t.max() - t.min(), 1e-6)
    best = None
    for tau0 in span * np.array([0.1, 0.3, 1.0, 3.0]):
        x0 = [tau0, min(max(peq_guess, 0.05), 0.95), min(max(p0_guess, 0.02), 0.98)]
        model = _BinomialModel(t, succ, tot, _relax_p, _relax_dp)
        try:
            fit = model.solve(
                x0, ("tau", "p4_eq", "p4_0"),
                np.array([1e-9, 0.0, 0.0]), np.array([np.inf, 1.0, 1.0]),
            )
        except FitError:
            continue
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
            best_model = model
    if best is None:
        raise FitError("relaxation fit did not converge from any starting point")
    if bootstrap:
        best.bootstrap_errors = _bootstrap_errors(
            best_model, best, ("tau", "p4_eq", "p4_0"),
            np.array([1e-9, 0.0, 0.0]), np.array([np.inf, 1.0, 1.0]), bootstrap,
        )
    return best


def fit_relaxation_joint(points_f3, points_f4, bootstrap: int = 0) -> FitResult:
    """Joint binomial MLE of both preparation arms with pure initial states.

    Shares (tau, p4_eq) between the arms and pins P4(0) to 0 and 1; this
    is the efficient estimator when the preparation purity is trusted.
    """

    def unpack(points):
        pts = sorted((float(t), float(p), int(n)) for t, p, n in points)
        t = np.array([p[0] for p in pts])
        p4 = np.array([p[1] for p in pts])
        tot = np.array([p[2] for p in pts])
        if np.any(tot <= 0) or np.any(p4 < 0) or np.any(p4 > 1):
            raise ValueError("require n_atoms > 0 and p4 in [0, 1]")
        return t, np.round(p4 * tot), tot

    t3, s3, n3 = unpack(points_f3)
    t4, s4, n4 = unpack(points_f4)
    if len(t3) + len(t4) < 3:
        raise ValueError("need at least 3 time points in total")
    t = np.concatenate([t3, t4])
    succ = np.concatenate([s3, s4])
    tot = np.concatenate([n3, n4])
    p0 = np.concatenate([np.zeros_like(t3), np.ones_like(t4)])

    def p_fn(tt, x):
        tau, peq = x
        return peq + (p0 - peq) * np.exp(-tt / tau)

    def dp_fn(tt, x):
        tau, peq = x
        e = np.exp(-tt / tau)
        return np.stack([(p0 - peq) * e * tt / tau**2, 1 - e], axis=1)

    span = max(t.max() - t.min(), 1e-6)
    names = ("tau", "p4_eq")
    lower, upper = np.array([1e-9, 0.0]), np.array([np.inf, 1.0])
    model = _BinomialModel(t, succ, tot, p_fn, dp_fn)
    best = None
    for tau0 in span * np.array([0.1, 0.3, 1.0]):
        try:
            fit = model.solve([tau0, 0.5], names, lower, upper)
        except FitError:
            continue
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    if best is None:
        raise FitError("joint relaxation fit did not converge from any starting point")
    if bootstrap:
        best.bootstrap_errors = _bootstrap_errors(model, best, names, lower, upper, bootstrap)
    return best
