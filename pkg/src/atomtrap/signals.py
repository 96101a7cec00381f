"""Photon-count signal synthesis: MOT staircases and detection bursts.

Counts are drawn from an inhomogeneous Poisson process with a
piecewise-constant rate; bin means are computed by exact integration so
rate changes need not align with bin edges.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .kinetics import StateTrajectory

__all__ = [
    "DetectorModel",
    "BurstModel",
    "PhotonTrace",
    "PiecewiseRate",
    "synthesize_counts",
    "synthesize_mot_trace",
    "synthesize_detection_burst",
]


@dataclass(frozen=True)
class DetectorModel:
    """APD counting model for MOT fluorescence.

    overlap_suppression multiplies the fluorescence while both traps are
    on (light shift pushes the atoms out of resonance). dipole_stray_rate
    is the count rate with only the dipole laser on; None means "same as
    the MOT stray background".
    """

    per_atom_rate: float = 1.6e4
    background_rate: float = 5e3
    bin_width: float = 0.1
    overlap_suppression: float = 0.3
    dipole_stray_rate: float | None = None

    def __post_init__(self):
        if self.per_atom_rate < 0 or self.background_rate < 0:
            raise ValueError("rates must be non-negative")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if not (0 <= self.overlap_suppression <= 1):
            raise ValueError("overlap_suppression must be in [0, 1]")
        if self.dipole_stray_rate is not None and self.dipole_stray_rate < 0:
            raise ValueError("dipole_stray_rate must be non-negative")

    @property
    def stray_when_mot_off(self) -> float:
        return self.background_rate if self.dipole_stray_rate is None else self.dipole_stray_rate


@dataclass(frozen=True)
class BurstModel:
    """State-selective detection burst: bright F=4 atoms on a stray background.

    Each F=4 atom emits an expected mean_photons_per_atom photons in a
    burst whose envelope decays exponentially with scale
    burst_duration_mean (the atom is optically pumped into the dark state
    on that time scale).
    """

    mean_photons_per_atom: float = 3.0
    background_photons_per_window: float = 0.5
    burst_duration_mean: float = 400e-6
    detection_bin: float = 200e-6

    def __post_init__(self):
        if min(self.mean_photons_per_atom, self.background_photons_per_window) < 0:
            raise ValueError("photon numbers must be non-negative")
        if self.burst_duration_mean <= 0 or self.detection_bin <= 0:
            raise ValueError("time scales must be positive")


@dataclass
class PhotonTrace:
    """Binned photon counts starting at t0 with fixed bin width."""

    t0: float
    bin_width: float
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.counts.ndim != 1 or len(self.counts) == 0:
            raise ValueError("counts must be a non-empty 1-D array")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def bin_starts(self) -> np.ndarray:
        return self.t0 + self.bin_width * np.arange(len(self.counts))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bin_start_s,counts\n")
        for t, c in zip(self.bin_starts, self.counts):
            buf.write(f"{t:.9g},{int(c)}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text_or_path) -> "PhotonTrace":
        if hasattr(text_or_path, "read"):
            rows = list(csv.reader(text_or_path))
        elif "\n" in str(text_or_path):
            rows = list(csv.reader(io.StringIO(str(text_or_path))))
        else:
            with open(text_or_path, newline="") as fh:
                rows = list(csv.reader(fh))
        if not rows or rows[0] != ["bin_start_s", "counts"]:
            raise ValueError("expected header 'bin_start_s,counts'")
        body = [r for r in rows[1:] if r]
        starts = np.array([float(r[0]) for r in body])
        counts = np.array([int(r[1]) for r in body])
        if len(starts) == 0:
            raise ValueError("trace has no bins")
        width = float(np.median(np.diff(starts))) if len(starts) > 1 else 0.1
        return cls(t0=float(starts[0]), bin_width=width, counts=counts)


class PiecewiseRate:
    """Piecewise-constant rate: rates[i] applies on [times[i], times[i+1])."""

    def __init__(self, times, rates):
        self.times = np.asarray(times, dtype=float)
        self.rates = np.asarray(rates, dtype=float)
        if len(self.times) != len(self.rates) or len(self.times) == 0:
            raise ValueError("times and rates must be non-empty and equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.rates < 0):
            raise ValueError("rates must be non-negative")

    @classmethod
    def constant(cls, rate: float, t0: float = 0.0) -> "PiecewiseRate":
        return cls([t0], [rate])

    def rate_at(self, t: float) -> float:
        idx = np.searchsorted(self.times, t, side="right") - 1
        return float(self.rates[max(idx, 0)])

    def integral(self, a: float, b: float) -> float:
        """Exact integral of the rate over [a, b]."""
        if b <= a:
            return 0.0
        f = self.cumulative(np.array([a, b]))
        return float(f[1] - f[0])

    def cumulative(self, t) -> np.ndarray:
        """Antiderivative of the rate evaluated at t (zero point arbitrary)."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)
        cum = np.concatenate([[0.0], np.cumsum(self.rates[:-1] * np.diff(self.times))])
        return cum[idx] + self.rates[idx] * (t - self.times[idx])


def bin_expected_counts(rate: PiecewiseRate, t0: float, t1: float, bin_width: float) -> np.ndarray:
    """Expected counts per bin over [t0, t1); a trailing partial bin is dropped."""
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    n_bins = int(np.floor((t1 - t0) / bin_width + 1e-9))
    if n_bins < 1:
        raise ValueError("interval shorter than one bin")
    edges = t0 + bin_width * np.arange(n_bins + 1)
    f = rate.cumulative(edges)
    return np.diff(f)


def synthesize_counts(
    rate: PiecewiseRate, t0: float, t1: float, bin_width: float, rng: np.random.Generator
) -> PhotonTrace:
    """Poisson counts per bin with means given by the exact rate integral."""
    means = bin_expected_counts(rate, t0, t1, bin_width)
    return PhotonTrace(t0=t0, bin_width=bin_width, counts=rng.poisson(means))


def mot_rate_profile(
    traj: StateTrajectory,
    det: DetectorModel,
    overlap_windows=(),
    mot_off_windows=(),
) -> PiecewiseRate:
    """Detector rate profile of a MOT atom-number trajectory.

    rate(t) = background + N(t) * per_atom_rate, multiplied by the overlap
    suppression while both traps are on, and replaced by the dipole-only
    stray level while the MOT is off.
    """
    span = (0.0, traj.t_end)
    for t_on, t_off in list(overlap_windows) + list(mot_off_windows):
        if t_on < span[0] - 1e-12 or t_off > span[1] + 1e-12 or t_off <= t_on:
            raise ValueError(f"window ({t_on}, {t_off}) outside the trajectory span {span}")
    edges = set(traj.times.tolist())
    for t_on, t_off in list(overlap_windows) + list(mot_off_windows):
        edges.update((t_on, t_off))
    edges = sorted(e for e in edges if e < traj.t_end)
    rates = []
    for e in edges:
        in_off = any(t_on <= e < t_off for t_on, t_off in mot_off_windows)
        if in_off:
            rates.append(det.stray_when_mot_off)
            continue
        r = det.background_rate + traj.value_at(e) * det.per_atom_rate
        if any(t_on <= e < t_off for t_on, t_off in overlap_windows):
            r *= det.overlap_suppression
        rates.append(r)
    return PiecewiseRate(edges, rates)


def synthesize_mot_trace(
    traj: StateTrajectory,
    det: DetectorModel,
    overlap_windows,
    rng: np.random.Generator,
    mot_off_windows=(),
) -> PhotonTrace:
    """Photon trace of MOT fluorescence for a given atom-number trajectory."""
    profile = mot_rate_profile(traj, det, overlap_windows, mot_off_windows)
    return synthesize_counts(profile, 0.0, traj.t_end, det.bin_width, rng)


def synthesize_detection_burst(
    n_f4: int,
    n_f3: int,
    model: BurstModel,
    rng: np.random.Generator,
    window: float = 2e-3,
) -> PhotonTrace:
    """Detection-window photon trace: bright F=4 bursts plus stray background.

    Each F=4 atom contributes a Poisson number of photons (mean
    mean_photons_per_atom) with arrival times drawn from an exponential
    envelope of scale burst_duration_mean, truncated to the window; F=3
    atoms stay dark. The background is Poisson and uniform in time.
    """
    if n_f4 < 0 or n_f3 < 0:
        raise ValueError("atom counts must be non-negative")
    if window <= 0:
        raise ValueError("window must be positive")
    arrivals = []
    n_photons = int(rng.poisson(model.mean_photons_per_atom * n_f4)) if n_f4 else 0
    if n_photons:
        # inverse-CDF sample of the exponential envelope truncated to the window
        u = rng.random(n_photons)
        cdf_end = 1.0 - np.exp(-window / model.burst_duration_mean)
        arrivals.append(-model.burst_duration_mean * np.log1p(-u * cdf_end))
    n_bg = int(rng.poisson(model.background_photons_per_window))
    if n_bg:
        arrivals.append(rng.random(n_bg) * window)
    n_bins = max(int(np.ceil(window / model.detection_bin - 1e-9)), 1)
    counts = np.zeros(n_bins, dtype=np.int64)
    if arrivals:
        times = np.concatenate(arrivals)
        idx = np.minimum((times / model.detection_bin).astype(int), n_bins - 1)
        np.add.at(counts, idx, 1)
    return PhotonTrace(t0=0.0, bin_width=model.detection_bin, counts=counts)
