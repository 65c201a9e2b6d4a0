"""Synthetic multi-electrode recording generator.

Stands in for the wet lab: emits spike/stimulus event files in the exact
format the spike pipeline consumes, with known per-stimulus ground truth.
Response intensity grows with stimulus frequency and decays with recording
time (fatigue); bursts are injected with high channel participation so the
Otsu split is well-posed.  All numeric defaults are configurable knobs,
not measured values.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ValidationError
from .spikes import DEFAULT_FREQUENCIES, RecordingConfig


@dataclass(frozen=True)
class GenParams:
    n_channels: int = 64
    n_patterns: int = 100
    base_mean_hz: float = 30.0  # non-burst mean at 5 Hz, t=0
    freq_gain: float = 0.25  # relative gain per octave above 5 Hz
    fatigue_rate: float = 0.004  # exponential decay per minute
    gamma_shape: float = 4.0
    burst_prob: float = 0.15
    burst_participation: tuple = (0.6, 0.9)
    nonburst_participation: tuple = (0.05, 0.3)
    burst_rate_multiplier: tuple = (3.0, 6.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_channels < 1 or self.n_patterns < 1:
            raise ValidationError("channel and pattern counts must be positive")
        if not 0 <= self.burst_prob <= 1:
            raise ValidationError("burst_prob must be a probability")
        for name in ("burst_participation", "nonburst_participation",
                     "burst_rate_multiplier"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValidationError(f"{name} range must be ordered")
        if min(self.base_mean_hz, self.gamma_shape) <= 0 or self.fatigue_rate < 0:
            raise ValidationError("rates and shapes must be positive")

    def recording_config(self) -> RecordingConfig:
        return RecordingConfig(n_channels=self.n_channels)


@dataclass(frozen=True)
class GeneratedSession:
    """CSV payloads plus per-stimulus ground truth, in stimulus-time order."""

    spikes_csv: str
    stims_csv: str
    truth_csv: str
    is_burst: np.ndarray
    x_f_true: np.ndarray
    t_offset_min: float


def true_nonburst_mean(params: GenParams, freq_hz: float, t_offset_min: float) -> float:
    """Ground-truth mean non-burst rate: octave gain times exponential fatigue."""
    if freq_hz not in DEFAULT_FREQUENCIES:
        raise ValidationError(f"unsupported stimulus frequency {freq_hz} Hz")
    gain = 1.0 + params.freq_gain * math.log2(freq_hz / DEFAULT_FREQUENCIES[0])
    return params.base_mean_hz * gain * math.exp(-params.fatigue_rate * t_offset_min)


def true_rate_distribution(params: GenParams, freq_hz: float, t_offset_min: float,
                           bin_edges) -> np.ndarray:
    """Analytic non-burst rate probabilities on the pipeline's histogram bins.

    Mass beyond the top edge is folded into the last bin, matching how the
    pipeline clips out-of-range rates.
    """
    mu = true_nonburst_mean(params, freq_hz, t_offset_min)
    edges = np.asarray(bin_edges, dtype=float)
    cdf = stats.gamma.cdf(edges, a=params.gamma_shape, scale=mu / params.gamma_shape)
    probs = np.diff(cdf)
    probs[-1] += 1.0 - cdf[-1]
    probs[0] += cdf[0]
    return probs / probs.sum()


def gen_session(params: GenParams, t_offset_min: float,
                rng: np.random.Generator) -> GeneratedSession:
    """Generate one recording: per frequency, ``n_patterns`` stimuli.

    Frequency conditions run as sequential blocks in shuffled order with
    the inter-stimulus interval matching each frequency.  Each stimulus
    yields spikes on a random channel subset, timed uniformly inside the
    post-stimulus response window.
    """
    cfg = params.recording_config()
    order = rng.permutation(len(cfg.frequencies_hz))
    stim_rows = []  # (time, pattern, freq)
    t_cursor = 0.0
    for ci in order:
        f = cfg.frequencies_hz[ci]
        patterns = rng.permutation(params.n_patterns)
        for i in range(params.n_patterns):
            stim_rows.append((t_cursor + i / f, int(patterns[i]), f))
        t_cursor = stim_rows[-1][0] + 0.5  # gap between condition blocks

    spike_t = []
    spike_ch = []
    is_burst = np.zeros(len(stim_rows), dtype=bool)
    x_f_true = np.zeros(len(stim_rows))
    t_win = cfg.window_length
    for si, (st, _pat, f) in enumerate(stim_rows):
        burst = rng.random() < params.burst_prob
        mu = true_nonburst_mean(params, f, t_offset_min)
        x_f = rng.gamma(params.gamma_shape, mu / params.gamma_shape)
        if burst:
            x_f *= rng.uniform(*params.burst_rate_multiplier)
            part = rng.uniform(*params.burst_participation)
        else:
            part = rng.uniform(*params.nonburst_participation)
        is_burst[si] = burst
        x_f_true[si] = x_f
        s_total = int(round(x_f * t_win * params.n_channels))
        if s_total == 0:
            continue
        subset = rng.choice(params.n_channels, size=max(1, round(part * params.n_channels)),
                            replace=False)
        spike_ch.append(rng.choice(subset, size=s_total))
        spike_t.append(st + cfg.window_start + rng.random(s_total) * t_win)

    spikes = io.StringIO()
    spikes.write("time_s,channel\n")
    if spike_t:
        all_t = np.concatenate(spike_t)
        all_ch = np.concatenate(spike_ch)
        order = np.argsort(all_t, kind="stable")
        for t, ch in zip(all_t[order], all_ch[order]):
            spikes.write(f"{float(t)!r},{int(ch)}\n")

    stims = io.StringIO()
    stims.write("time_s,pattern_id,freq_hz\n")
    for st, pat, f in stim_rows:
        stims.write(f"{st!r},{pat},{f!r}\n")

    truth = io.StringIO()
    truth.write("stim_index,is_burst,x_f_true\n")
    for si in range(len(stim_rows)):
        truth.write(f"{si},{int(is_burst[si])},{float(x_f_true[si])!r}\n")

    return GeneratedSession(
        spikes_csv=spikes.getvalue(),
        stims_csv=stims.getvalue(),
        truth_csv=truth.getvalue(),
        is_burst=is_burst,
        x_f_true=x_f_true,
        t_offset_min=t_offset_min,
    )


def gen_series(params: GenParams, n_snapshots: int = 14, interval_min: float = 10.0,
               rng: np.random.Generator | None = None) -> list[GeneratedSession]:
    """Recordings at ``0, interval, ..., (n-1)*interval`` minutes with fatigue."""
    if n_snapshots < 1:
        raise ValidationError("need at least one snapshot")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    return [gen_session(params, i * interval_min, rng) for i in range(n_snapshots)]
