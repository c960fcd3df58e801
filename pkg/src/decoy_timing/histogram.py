"""Detection-time histograms, least-squares Gaussian fits and the error of the fitted mean."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .model import AnnouncedClass, Detector, GaussianPeak
from .simulate import Announcements, EventStream

DEFAULT_BIN_WIDTH = 10.0
TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


class FitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Histogram:
    """Equally spaced bins; bin ``i`` is centred at ``origin + (i + 1/2) * bin_width``.

    ``period`` is set for histograms folded modulo the slot period, which
    are treated as circular by the fitter.
    """

    bin_width: float
    origin: float
    counts: np.ndarray
    period: float | None = None
    label: str = ""

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or (counts < 0).any():
            raise ValueError("counts must be a 1-D array of non-negative values")
        object.__setattr__(self, "counts", counts)

    @property
    def centers(self) -> np.ndarray:
        return self.origin + (np.arange(len(self.counts)) + 0.5) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "Histogram") -> "Histogram":
        if (self.bin_width, self.origin, len(self.counts), self.period) != (
            other.bin_width, other.origin, len(other.counts), other.period
        ):
            raise ValueError("histograms have different binning")
        return Histogram(self.bin_width, self.origin, self.counts + other.counts, self.period)


def _as_set(value, kind) -> set:
    if isinstance(value, kind):
        return {value}
    return set(value)


def fold_events(
    events: EventStream,
    announcements: Announcements,
    class_filter: AnnouncedClass | Iterable[AnnouncedClass],
    detector_filter: Detector | Iterable[Detector],
    period: float,
    bin_width: float = DEFAULT_BIN_WIDTH,
    window: tuple[float | None, float | None] | None = None,
) -> Histogram:
    """Histogram of ``(timestamp - period*slot) mod period`` over matching clicks.

    Only Bob-visible information is used: the announced class of each click's
    slot, never the truth log.  ``window`` restricts to clicks with timestamps
    in ``[start, end)``.
    """
    if not period > 0:
        raise ValueError("period must be positive")
    n_bins = period / bin_width
    if abs(n_bins - round(n_bins)) > 1e-9 * n_bins:
        raise ValueError(f"period {period} is not a whole number of {bin_width} ps bins")
    n_bins = int(round(n_bins))

    classes = np.array([c.code for c in _as_set(class_filter, AnnouncedClass)])
    dets = np.array([d.index for d in _as_set(detector_filter, Detector)])
    mask = np.isin(events.detector, dets)
    if window is not None:
        start, end = window
        if start is not None:
            mask &= events.timestamp >= start
        if end is not None:
            mask &= events.timestamp < end
    slots = events.slot[mask]
    mask_idx = np.flatnonzero(mask)
    announced = announcements.lookup(slots)
    hit = np.isin(announced, classes)
    sel = mask_idx[hit]

    folded = np.mod(events.timestamp[sel] - period * events.slot[sel], period)
    idx = np.minimum((folded // bin_width).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    label = "+".join(sorted(c.value for c in _as_set(class_filter, AnnouncedClass)))
    label += "->" + "+".join(sorted(d.value for d in _as_set(detector_filter, Detector)))
    return Histogram(bin_width, 0.0, counts, period, label)


def mean_variance_closed_form(peak: GaussianPeak, residual_variance: float, bin_width: float) -> float:
    """Variance of the fitted mean when the bins densely cover the whole peak:
    (2/sqrt(pi)) * D(df) / A^2 * sigma * dx."""
    if not peak.amplitude > 0:
        raise ValueError("amplitude must be positive")
    if residual_variance < 0:
        raise ValueError("residual_variance must be non-negative")
    return TWO_OVER_SQRT_PI * residual_variance / peak.amplitude**2 * peak.sigma * bin_width


def mean_variance_sum_form(peak: GaussianPeak, residual_variance: float, bin_centers) -> float:
    """Variance of the fitted mean from the finite sum over the actual bins:
    sigma^2 * D(df) / (A^2 * sum z^2 exp(-z^2))."""
    z = (np.asarray(bin_centers, dtype=float) - peak.mean) / peak.sigma
    if z.size == 0:
        raise ValueError("no bin centers")
    if np.all(z == z[0]):
        raise ValueError("degenerate support: all bins at the same normalized coordinate")
    s = float(np.sum(z**2 * np.exp(-(z**2))))
    if s <= 0:
        raise ValueError("bins carry no information about the mean")
    return peak.sigma**2 * residual_variance / (peak.amplitude**2 * s)


def linearized_shift(z, residuals, amplitude: float) -> float:
    """First-order shift of the fitted mean, in units of sigma, caused by
    perturbations ``residuals`` at normalized coordinates ``z``."""
    z = np.asarray(z, dtype=float)
    e = np.exp(-0.5 * z**2)
    return float(np.sum(z * e * residuals) / (amplitude * np.sum(z**2 * e**2)))


def unbiased_variance(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("need at least two values")
    return float(np.var(values, ddof=1))


@dataclass(frozen=True, eq=False)
class GaussianFit:
    peak: GaussianPeak
    mean_variance: float
    residual_variance: float
    bin_width: float
    x: np.ndarray
    residuals: np.ndarray
    iterations: int = 0
    truncated: bool = False
    period: float | None = None
    label: str = ""
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def mean(self) -> float:
        """Fitted mean; folded into [0, period) for circular histograms."""
        if self.period is None:
            return self.peak.mean
        return float(np.mod(self.peak.mean, self.period))

    @property
    def three_sigma(self) -> float:
        return 3.0 * math.sqrt(self.mean_variance)

    @property
    def z(self) -> np.ndarray:
        return (self.x - self.peak.mean) / self.peak.sigma

    @property
    def epsilon(self) -> float:
        """Linearized mean shift implied by the residuals; ~0 at a least-squares optimum."""
        return linearized_shift(self.z, self.residuals, self.peak.amplitude)


def residual_variance(hist: Histogram, fit: GaussianFit | GaussianPeak, window_sigmas: float = 4.0) -> float:
    """Unbiased variance of ``counts - model`` over bins within ``window_sigmas`` of the mean."""
    peak = fit.peak if isinstance(fit, GaussianFit) else fit
    x = fit.x if isinstance(fit, GaussianFit) else hist.centers
    counts = _aligned_counts(hist, x)
    inside = np.abs(x - peak.mean) <= window_sigmas * peak.sigma
    if inside.sum() < 2:
        raise ValueError("fewer than two bins inside the residual window")
    return unbiased_variance(counts[inside] - peak(x[inside]))


def _aligned_counts(hist: Histogram, x: np.ndarray) -> np.ndarray:
    idx = np.rint((x - hist.origin) / hist.bin_width - 0.5).astype(np.int64)
    return hist.counts[np.mod(idx, len(hist.counts))].astype(float)


def _recentered(hist: Histogram) -> tuple[np.ndarray, np.ndarray]:
    counts = hist.counts.astype(float)
    x = hist.centers
    if hist.period is None:
        return x, counts
    n = len(counts)
    shift = n // 2 - int(np.argmax(counts))
    return x - shift * hist.bin_width, np.roll(counts, shift)


def _levenberg_marquardt(x, y, p0, max_iter, tol):
    def model(p):
        a, mu, s = p
        u = (x - mu) / s
        e = np.exp(-0.5 * u * u)
        return a * e, e, u

    p = np.array(p0, dtype=float)
    f, e, u = model(p)
    r = y - f
    sse = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        a, mu, s = p
        jac = np.column_stack([e, a * e * u / s, a * e * u * u / s])
        jtj = jac.T @ jac
        g = jac.T @ r
        while True:
            step = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)), g)
            trial = p + step
            if trial[0] > 0 and trial[2] > 0:
                ft, et, ut = model(trial)
                rt = y - ft
                sse_t = float(rt @ rt)
                if sse_t <= sse:
                    break
            lam *= 10.0
            if lam > 1e16:
                return p, it, True
        scale = np.array([abs(p[0]), p[2], p[2]])
        change = np.max(np.abs(step) / scale)
        p, f, e, u, r, sse = trial, ft, et, ut, rt, sse_t
        lam = max(lam / 10.0, 1e-12)
        if change < tol:
            return p, it, True
    return p, max_iter, False


def fit_gaussian(
    hist: Histogram,
    window_sigmas: float = 4.0,
    max_iter: int = 200,
    tol: float = 1e-9,
    label: str | None = None,
) -> GaussianFit:
    """Least-squares fit of ``A exp(-(x - mu)^2 / 2 sigma^2)`` to the histogram.

    Starts from the argmax bin, the maximum count and a moment estimate of the
    width, then runs damped Gauss-Newton.  Circular (folded) histograms are
    first rolled so that the highest bin sits in the middle.
    """
    label = label or hist.label or "histogram"
    if (hist.counts > 0).sum() < 10:
        raise FitError(f"{label}: fewer than 10 non-empty bins ({hist.total} events)")
    x, y = _recentered(hist)
    k = int(np.argmax(y))
    mu0, a0 = x[k], y[k]
    w = y / y.sum()
    sigma0 = math.sqrt(max(float(w @ (x - w @ x) ** 2), hist.bin_width**2))
    p, iterations, converged = _levenberg_marquardt(x, y, (a0, mu0, sigma0), max_iter, tol)
    if not converged:
        raise FitError(f"{label}: no convergence after {max_iter} iterations")
    peak = GaussianPeak(float(p[0]), float(p[1]), float(p[2]))

    residuals = y - peak(x)
    inside = np.abs(x - peak.mean) <= window_sigmas * peak.sigma
    if inside.sum() < 2:
        raise FitError(f"{label}: fitted width {peak.sigma:.3g} ps leaves < 2 bins in the residual window")
    d_f = unbiased_variance(residuals[inside])
    d_mu = mean_variance_closed_form(peak, d_f, hist.bin_width)

    warnings = []
    margin = window_sigmas * peak.sigma
    truncated = bool(peak.mean - x[0] < margin or x[-1] - peak.mean < margin)
    if truncated:
        warnings.append(f"peak extends past the histogram edge (needs +/-{window_sigmas:g} sigma of support)")
    if peak.sigma < 2 * hist.bin_width:
        warnings.append("fewer than two bins per sigma")
    return GaussianFit(
        peak=peak,
        mean_variance=d_mu,
        residual_variance=d_f,
        bin_width=hist.bin_width,
        x=x,
        residuals=residuals,
        iterations=iterations,
        truncated=truncated,
        period=hist.period,
        label=label,
        warnings=tuple(warnings),
    )
