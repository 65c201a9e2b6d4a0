"""Spike/stimulus event processing.

Turns raw event files into per-stimulus evoked samples (firing rate and
channel participation), separates burst from non-burst responses with an
Otsu threshold on participation, and summarizes the non-burst rates into
a :class:`~animat.snapshot.NeuronSnapshot`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError
from .snapshot import PERCENTILE_GRID, NeuronSnapshot

DEFAULT_FREQUENCIES = (5.0, 10.0, 20.0, 40.0, 80.0)


@dataclass(frozen=True)
class RecordingConfig:
    """Window, frequency and binning parameters of a recording."""

    n_channels: int
    window_start: float = 0.002  # s after stimulus; earlier data is artifact
    window_end: float = 0.010
    frequencies_hz: tuple = DEFAULT_FREQUENCIES
    n_bins: int = 20
    rate_range_hz: tuple = (0.0, 120.0)

    def __post_init__(self):
        object.__setattr__(self, "frequencies_hz", tuple(float(f) for f in self.frequencies_hz))
        if self.n_channels < 1:
            raise ValidationError("need at least one channel")
        if not self.window_start < self.window_end:
            raise ValidationError("window_start must precede window_end")
        if np.any(np.diff(self.frequencies_hz) <= 0):
            raise ValidationError("frequencies must be strictly increasing")
        if self.n_bins < 2:
            raise ValidationError("need at least two histogram bins")
        if not self.rate_range_hz[0] < self.rate_range_hz[1]:
            raise ValidationError("rate range must be ordered")

    @property
    def window_length(self) -> float:
        return self.window_end - self.window_start


@dataclass(frozen=True)
class RecordingSession:
    """Validated, time-sorted spike and stimulus events."""

    spike_times: np.ndarray
    spike_channels: np.ndarray
    stim_times: np.ndarray
    stim_patterns: np.ndarray
    stim_freqs: np.ndarray
    config: RecordingConfig
    t_offset_min: float = 0.0


@dataclass
class EvokedSample:
    """One stimulus-evoked response."""

    freq_hz: float
    x_f: float  # firing rate per channel (Hz)
    participation: float  # fraction of channels with >=1 windowed spike
    is_burst: bool | None = None


@dataclass(frozen=True)
class OtsuResult:
    threshold: float
    between_class_variance: float


def _read_csv(stream, columns, label):
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode())
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{label}: empty file") from None
    if [h.strip() for h in header] != list(columns):
        raise ParseError(f"{label} line 1: expected header {','.join(columns)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(columns):
            raise ParseError(f"{label} line {lineno}: expected {len(columns)} fields")
        try:
            rows.append([float(v) for v in row])
        except ValueError as e:
            raise ParseError(f"{label} line {lineno}: {e}") from None
    return np.asarray(rows, dtype=float).reshape(-1, len(columns))


def parse_recording(spike_csv, stim_csv, config: RecordingConfig,
                    t_offset_min: float = 0.0) -> RecordingSession:
    """Parse `spikes.csv` / `stims.csv` streams into a validated session.

    Events are sorted by time; channels must be in ``[0, n_channels)`` and
    stimulus frequencies must belong to ``config.frequencies_hz``.
    """
    spikes = _read_csv(spike_csv, ("time_s", "channel"), "spikes")
    stims = _read_csv(stim_csv, ("time_s", "pattern_id", "freq_hz"), "stims")
    if len(stims) == 0:
        raise ValidationError("no stimuli")
    if len(spikes) and spikes[:, 0].min() < 0 or len(stims) and stims[:, 0].min() < 0:
        raise ValidationError("event times must be non-negative")
    channels = spikes[:, 1]
    if len(channels) and (np.any(channels != np.round(channels)) or np.any(channels < 0)):
        raise ValidationError("channels must be non-negative integers")
    if len(channels) and channels.max() >= config.n_channels:
        raise ValidationError(
            f"channel {int(channels.max())} out of range for {config.n_channels} channels"
        )
    known = set(config.frequencies_hz)
    bad = sorted(set(stims[:, 2]) - known)
    if bad:
        raise ValidationError(f"unknown stimulus frequencies: {bad}")

    s_order = np.argsort(spikes[:, 0], kind="stable")
    t_order = np.argsort(stims[:, 0], kind="stable")
    return RecordingSession(
        spike_times=spikes[s_order, 0],
        spike_channels=spikes[s_order, 1].astype(np.int64),
        stim_times=stims[t_order, 0],
        stim_patterns=stims[t_order, 1].astype(np.int64),
        stim_freqs=stims[t_order, 2],
        config=config,
        t_offset_min=t_offset_min,
    )


def evoked_samples(session: RecordingSession) -> list[EvokedSample]:
    """One :class:`EvokedSample` per stimulus.

    Spikes are counted in the half-open window
    ``[stim + window_start, stim + window_end)``; the firing rate per
    channel is the windowed count divided by window length times channel
    count.
    """
    cfg = session.config
    n = cfg.n_channels
    t = cfg.window_length
    out = []
    for stim_t, freq in zip(session.stim_times, session.stim_freqs):
        lo = np.searchsorted(session.spike_times, stim_t + cfg.window_start, side="left")
        hi = np.searchsorted(session.spike_times, stim_t + cfg.window_end, side="left")
        s_total = hi - lo
        active = np.unique(session.spike_channels[lo:hi]).size
        out.append(EvokedSample(
            freq_hz=float(freq),
            x_f=s_total / (t * n),
            participation=active / n,
        ))
    return out


def otsu_threshold(values) -> OtsuResult:
    """Threshold maximizing between-class variance.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values; ties resolve to the smallest maximizer.
    """
    v = np.sort(np.asarray(values, dtype=float))
    distinct = np.unique(v)
    if distinct.size < 2:
        raise ValidationError("degenerate distribution: need >=2 distinct values")
    candidates = (distinct[:-1] + distinct[1:]) / 2.0
    n = v.size
    counts = np.searchsorted(v, candidates, side="left")
    csum = np.concatenate([[0.0], np.cumsum(v)])
    w0 = counts / n
    w1 = 1.0 - w0
    mu0 = csum[counts] / counts
    mu1 = (csum[-1] - csum[counts]) / (n - counts)
    var = w0 * w1 * (mu0 - mu1) ** 2
    best = int(np.argmax(var))  # argmax takes the first maximizer
    return OtsuResult(threshold=float(candidates[best]),
                      between_class_variance=float(var[best]))


def classify_nonburst(samples):
    """Split evoked samples into (non-burst, burst) by participation.

    The Otsu threshold is computed over the pooled participation values of
    all samples (i.e. across the five frequency conditions); a sample is
    non-burst iff its participation is sub-threshold.  ``is_burst`` is set
    on every sample; both lists preserve input order.
    """
    otsu = otsu_threshold([s.participation for s in samples])
    nonburst, burst = [], []
    for s in samples:
        s.is_burst = s.participation >= otsu.threshold
        (burst if s.is_burst else nonburst).append(s)
    return nonburst, burst, otsu


def percentile(values, p: float) -> float:
    """Order statistic with linear interpolation at index ``p/100*(n-1)``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValidationError("percentile of empty list")
    if not 0 <= p <= 100:
        raise ValidationError(f"percentile {p} out of [0, 100]")
    return float(np.percentile(v, p, method="linear"))


def build_snapshot(samples_by_freq, config: RecordingConfig,
                   t_offset_min: float = 0.0,
                   otsu_thr: float = 0.0) -> NeuronSnapshot:
    """Build the neuron simulator from non-burst samples grouped by frequency.

    Each frequency gets a normalized histogram over the configured rate
    range (rates at or above the upper edge are counted in the top bin);
    the percentile table P0..P100 is computed on the rates pooled across
    all frequencies.
    """
    lo, hi = config.rate_range_hz
    edges = np.linspace(lo, hi, config.n_bins + 1)
    width = (hi - lo) / config.n_bins
    probs = np.zeros((len(config.frequencies_hz), config.n_bins))
    n_samples = []
    pooled = []
    for i, f in enumerate(config.frequencies_hz):
        rates = np.asarray([s.x_f for s in samples_by_freq.get(f, [])], dtype=float)
        if rates.size == 0:
            raise ValidationError(f"no non-burst samples for {f} Hz")
        idx = np.clip(((rates - lo) // width).astype(int), 0, config.n_bins - 1)
        counts = np.bincount(idx, minlength=config.n_bins).astype(float)
        probs[i] = counts / counts.sum()
        n_samples.append(int(rates.size))
        pooled.append(rates)
    pooled = np.concatenate(pooled)
    pcts = np.array([percentile(pooled, p) for p in PERCENTILE_GRID])
    return NeuronSnapshot(
        frequencies_hz=config.frequencies_hz,
        bin_edges_hz=edges,
        probs=probs,
        percentiles=pcts,
        n_samples=tuple(n_samples),
        t_offset_min=t_offset_min,
        otsu_threshold=otsu_thr,
    )


def snapshot_from_session(session: RecordingSession) -> NeuronSnapshot:
    """Full pipeline: evoked samples -> non-burst extraction -> snapshot."""
    samples = evoked_samples(session)
    nonburst, _, otsu = classify_nonburst(samples)
    grouped = {f: [s for s in nonburst if s.freq_hz == f]
               for f in session.config.frequencies_hz}
    return build_snapshot(grouped, session.config,
                          t_offset_min=session.t_offset_min,
                          otsu_thr=otsu.threshold)
