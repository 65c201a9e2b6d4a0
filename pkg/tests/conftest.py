import numpy as np
import pytest

from animat.snapshot import NeuronSnapshot, SnapshotSeries
from animat.spikes import parse_recording, snapshot_from_session
from animat.synth import GenParams, gen_series


@pytest.fixture(scope="session")
def gen_params():
    return GenParams(seed=1)


@pytest.fixture(scope="session")
def sessions3(gen_params):
    # three recordings 10 min apart; enough for most pipeline tests
    return gen_series(gen_params, n_snapshots=3, interval_min=10.0)


@pytest.fixture(scope="session")
def parsed3(gen_params, sessions3):
    cfg = gen_params.recording_config()
    return [parse_recording(s.spikes_csv, s.stims_csv, cfg,
                            t_offset_min=s.t_offset_min) for s in sessions3]


@pytest.fixture(scope="session")
def snapshots3(parsed3):
    return [snapshot_from_session(s) for s in parsed3]


@pytest.fixture(scope="session")
def series3(snapshots3):
    return SnapshotSeries(tuple(snapshots3), switch_interval_steps=1000)


def make_snapshot(probs, percentiles=None, n_freqs=5, t_offset_min=0.0):
    """Snapshot with the given (n_freqs, 20) probs on the standard grid."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        probs = np.tile(probs, (n_freqs, 1))
    if percentiles is None:
        percentiles = np.linspace(0.0, 120.0, 11)
    return NeuronSnapshot(
        frequencies_hz=(5.0, 10.0, 20.0, 40.0, 80.0)[:probs.shape[0]],
        bin_edges_hz=np.linspace(0.0, 120.0, 21),
        probs=probs,
        percentiles=percentiles,
        n_samples=(100,) * probs.shape[0],
        t_offset_min=t_offset_min,
    )
