"""Stochastic neuron simulator built from recorded response histograms.

A snapshot holds, per stimulus frequency, a normalized histogram of evoked
firing rates plus a percentile table of the pooled non-burst rates.
Sampling draws a histogram bin categorically and a rate uniformly within
the bin.  A series of snapshots ordered by recording time implements
parameter shadowing: training switches to the next snapshot every fixed
number of environment steps.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError, ValidationError

SCHEMA_VERSION = 1
PERCENTILE_GRID = tuple(range(0, 101, 10))


@dataclass(frozen=True)
class NeuronSnapshot:
    """Per-frequency rate distributions for one recording."""

    frequencies_hz: tuple
    bin_edges_hz: np.ndarray  # 21 edges, strictly increasing
    probs: np.ndarray  # (n_freqs, 20), rows sum to 1
    percentiles: np.ndarray  # 11 values, P0..P100
    n_samples: tuple
    t_offset_min: float = 0.0
    otsu_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "bin_edges_hz", np.asarray(self.bin_edges_hz, dtype=float))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        object.__setattr__(self, "percentiles", np.asarray(self.percentiles, dtype=float))
        object.__setattr__(self, "frequencies_hz", tuple(self.frequencies_hz))
        object.__setattr__(self, "n_samples", tuple(self.n_samples))
        _validate(self)
        object.__setattr__(self, "_cdf", np.cumsum(self.probs, axis=1))


def _validate(s: NeuronSnapshot) -> None:
    if s.probs.shape != (len(s.frequencies_hz), len(s.bin_edges_hz) - 1):
        raise ValidationError("probs shape does not match frequencies/bin edges")
    if np.any(np.diff(s.bin_edges_hz) <= 0):
        raise ValidationError("bin edges must be strictly increasing")
    if np.any(s.probs < 0):
        raise ValidationError("negative bin probability")
    sums = s.probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValidationError(f"probability rows must sum to 1 (got {sums})")
    if len(s.percentiles) != len(PERCENTILE_GRID):
        raise ValidationError("percentile table must hold P0..P100 in steps of 10")
    if np.any(np.diff(s.percentiles) < 0):
        raise ValidationError("percentiles must be non-decreasing")


def sample_response(snapshot: NeuronSnapshot, freq_index: int, rng: np.random.Generator) -> float:
    """Sample one evoked firing rate (Hz) for a stimulus frequency.

    A bin is drawn from the frequency's categorical distribution and the
    rate is uniform within that bin, so the result always lies in
    ``[bin_edges[0], bin_edges[-1])``.
    """
    if not 0 <= freq_index < len(snapshot.frequencies_hz):
        raise ValidationError(f"frequency index {freq_index} out of range")
    cdf = snapshot._cdf[freq_index]
    b = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    b = min(b, len(cdf) - 1)
    lo = snapshot.bin_edges_hz[b]
    hi = snapshot.bin_edges_hz[b + 1]
    return float(lo + rng.random() * (hi - lo))


@dataclass(frozen=True)
class SnapshotSeries:
    """Time-ordered snapshots plus the shadowing switch interval (steps)."""

    snapshots: tuple
    switch_interval_steps: int

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        if not self.snapshots:
            raise ValidationError("series needs at least one snapshot")
        if self.switch_interval_steps < 1:
            raise ValidationError("switch interval must be >= 1")
        offsets = [s.t_offset_min for s in self.snapshots]
        if len(offsets) > 1 and np.any(np.diff(offsets) <= 0):
            raise ValidationError("snapshot time offsets must be strictly increasing")


def active_snapshot(series: SnapshotSeries, global_step: int) -> int:
    """Index of the snapshot in force at ``global_step`` (clamped to the last)."""
    if global_step < 0:
        raise ValidationError("global_step must be >= 0")
    return min(global_step // series.switch_interval_steps, len(series.snapshots) - 1)


def save_snapshot(snapshot: NeuronSnapshot) -> str:
    """Serialize to a versioned JSON document (round-trips bit-exactly)."""
    doc = {
        "version": SCHEMA_VERSION,
        "t_offset_min": snapshot.t_offset_min,
        "frequencies_hz": list(snapshot.frequencies_hz),
        "bin_edges_hz": snapshot.bin_edges_hz.tolist(),
        "probs": {
            _freq_key(f): snapshot.probs[i].tolist()
            for i, f in enumerate(snapshot.frequencies_hz)
        },
        "percentiles": snapshot.percentiles.tolist(),
        "n_samples": {
            _freq_key(f): snapshot.n_samples[i]
            for i, f in enumerate(snapshot.frequencies_hz)
        },
        "otsu_threshold": snapshot.otsu_threshold,
    }
    return json.dumps(doc, indent=1)


def load_snapshot(text: str) -> NeuronSnapshot:
    """Parse and validate a snapshot document produced by :func:`save_snapshot`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not valid JSON: {e}") from e
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported snapshot schema version {version!r}")
    try:
        freqs = [float(f) for f in doc["frequencies_hz"]]
        snap = NeuronSnapshot(
            frequencies_hz=freqs,
            bin_edges_hz=doc["bin_edges_hz"],
            probs=[doc["probs"][_freq_key(f)] for f in freqs],
            percentiles=doc["percentiles"],
            n_samples=tuple(doc["n_samples"][_freq_key(f)] for f in freqs),
            t_offset_min=float(doc["t_offset_min"]),
            otsu_threshold=float(doc["otsu_threshold"]),
        )
    except (KeyError, TypeError) as e:
        raise SchemaError(f"malformed snapshot document: {e}") from e
    except ValidationError as e:
        raise SchemaError(str(e)) from e
    return snap


def _freq_key(f: float) -> str:
    return str(int(f)) if float(f).is_integer() else str(f)


def load_series_dir(path) -> tuple:
    """Load every ``*.json`` snapshot in a directory, sorted by time offset."""
    files = sorted(pathlib.Path(path).glob("*.json"))
    if not files:
        raise ValidationError(f"no snapshot files in {path}")
    snaps = [load_snapshot(f.read_text()) for f in files]
    snaps.sort(key=lambda s: s.t_offset_min)
    return tuple(snaps)
