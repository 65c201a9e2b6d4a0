"""Command-line interface.

Pipeline order: ``gen-data`` (synthetic recordings) -> ``build-sim``
(neuron snapshots) -> ``train`` -> ``eval`` -> ``compare`` / ``plot``.
A JSON config file can supply any flag per subcommand, e.g.
``{"train": {"task": "cartpole", "steps": 50000}}``; explicit flags win.
"""

from __future__ import annotations

import csv
import json
import pathlib
from collections import defaultdict
from itertools import combinations

import click
import numpy as np

from . import harness, plotting, rl, spikes, stats, synth
from .kernels import BACKEND
from .snapshot import SnapshotSeries, load_series_dir, save_snapshot


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              help="JSON file of per-subcommand flag defaults.")
@click.version_option(package_name="animat", message=f"%(version)s (kernels: {BACKEND})")
@click.pass_context
def main(ctx, config):
    if config:
        with open(config) as f:
            ctx.default_map = json.load(f)


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True)
@click.option("--snapshots", "n_snapshots", default=14, show_default=True)
@click.option("--interval-min", default=10.0, show_default=True)
@click.option("--channels", default=64, show_default=True)
@click.option("--patterns", default=100, show_default=True)
@click.option("--fatigue-rate", default=0.004, show_default=True)
@click.option("--burst-prob", default=0.15, show_default=True)
def gen_data(out, seed, n_snapshots, interval_min, channels, patterns,
             fatigue_rate, burst_prob):
    """Generate a synthetic recording series (spike/stim/truth CSVs)."""
    params = synth.GenParams(n_channels=channels, n_patterns=patterns,
                             fatigue_rate=fatigue_rate, burst_prob=burst_prob,
                             seed=seed)
    sessions = synth.gen_series(params, n_snapshots=n_snapshots,
                                interval_min=interval_min)
    out = pathlib.Path(out)
    for i, sess in enumerate(sessions):
        d = out / f"session_{i:03d}"
        d.mkdir(parents=True, exist_ok=True)
        (d / "spikes.csv").write_text(sess.spikes_csv)
        (d / "stims.csv").write_text(sess.stims_csv)
        (d / "truth.csv").write_text(sess.truth_csv)
    meta = {
        "n_channels": channels,
        "n_patterns": patterns,
        "n_snapshots": n_snapshots,
        "interval_min": interval_min,
        "fatigue_rate": fatigue_rate,
        "burst_prob": burst_prob,
        "seed": seed,
        "t_offsets_min": [s.t_offset_min for s in sessions],
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    click.echo(f"wrote {len(sessions)} sessions to {out}")


@main.command("build-sim")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def build_sim(data, out):
    """Build neuron snapshot JSONs from recorded event files."""
    data = pathlib.Path(data)
    meta = json.loads((data / "meta.json").read_text())
    cfg = spikes.RecordingConfig(n_channels=meta["n_channels"])
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sessions = sorted(data.glob("session_*"))
    for i, d in enumerate(sessions):
        session = spikes.parse_recording(
            (d / "spikes.csv").read_text(), (d / "stims.csv").read_text(), cfg,
            t_offset_min=meta["t_offsets_min"][i])
        snap = spikes.snapshot_from_session(session)
        (out / f"snapshot_{i:03d}.json").write_text(save_snapshot(snap))
    click.echo(f"wrote {len(sessions)} snapshots to {out}")


def _load_series(snapshots_dir, steps):
    snaps = load_series_dir(snapshots_dir)
    return SnapshotSeries(snaps, max(1, steps // len(snaps)))


@main.command("train")
@click.option("--task", type=click.Choice(harness.TASKS), required=True)
@click.option("--condition", type=click.Choice(harness.CONDITIONS),
              default="baseline", show_default=True)
@click.option("--shadowing/--no-shadowing", default=True, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--steps", default=None, type=int,
              help="Training step limit (default: desk-scale per task).")
@click.option("--snapshots-dir", type=click.Path(exists=True, file_okay=False),
              help="Snapshot JSON directory (required unless baseline).")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Checkpoint output (.npz).")
@click.option("--log", "log_path", type=click.Path(dir_okay=False),
              help="Training log CSV output.")
@click.option("--flip-prob", default=0.0, show_default=True,
              help="Action-flip noise during training.")
@click.option("--max-iterations", default=None, type=int,
              help="Episode iteration limit override.")
def train(task, condition, shadowing, seed, steps, snapshots_dir, out, log_path,
          flip_prob, max_iterations):
    """Train one policy and save its checkpoint."""
    steps = steps or harness.DEFAULT_STEPS[task]
    series = None
    if condition != "baseline":
        if not snapshots_dir:
            raise click.UsageError("--snapshots-dir is required for neuron-simulator conditions")
        series = _load_series(snapshots_dir, steps)
    learner, log = harness.train_animat(
        task, condition, steps, seed, series, shadowing=shadowing,
        flip_prob=flip_prob, max_iterations=max_iterations)
    rl.save_checkpoint(learner, out)
    if log_path:
        log.write_csv(log_path)
    click.echo(f"trained {task}/{condition} seed={seed}: "
               f"{len(log.episode_returns)} episodes, checkpoint at {out}")


@main.command("eval")
@click.option("--task", type=click.Choice(harness.TASKS), required=True)
@click.option("--condition", type=click.Choice(harness.CONDITIONS),
              default="baseline", show_default=True)
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--snapshots-dir", type=click.Path(exists=True, file_okay=False))
@click.option("--snapshot-index", default=-1, show_default=True,
              help="Which snapshot to evaluate on (-1 = last).")
@click.option("--table-index", default=None, type=int,
              help="Snapshot supplying the percentile table (default: same "
                   "as --snapshot-index; pass 0 for a frozen-calibration policy).")
@click.option("--episodes", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Returns CSV output.")
@click.option("--traj-dir", type=click.Path(file_okay=False),
              help="Write per-episode trajectory CSVs here.")
@click.option("--max-iterations", default=None, type=int)
def eval_cmd(task, condition, checkpoint, snapshots_dir, snapshot_index, table_index,
             episodes, seed, out, traj_dir, max_iterations):
    """Evaluate a checkpoint greedily; write per-episode returns."""
    learner = rl.load_checkpoint(checkpoint)
    snapshot = percentiles = None
    if condition != "baseline":
        if not snapshots_dir:
            raise click.UsageError("--snapshots-dir is required for neuron-simulator conditions")
        snaps = load_series_dir(snapshots_dir)
        snapshot = snaps[snapshot_index]
        if table_index is None:
            table_index = snapshot_index
        percentiles = snaps[table_index].percentiles
    returns = harness.evaluate(learner, task, condition, snapshot, percentiles,
                               episodes, seed, max_iterations=max_iterations,
                               traj_dir=traj_dir)
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["policy", "episode", "return"])
        for i, r in enumerate(returns):
            w.writerow([learner.seed, i, repr(r)])
    click.echo(f"mean return over {episodes} episodes: {np.mean(returns):.3f}")


def _read_returns(path):
    """Per-policy returns from a CSV file or a directory of them."""
    path = pathlib.Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    per_policy = defaultdict(list)
    for f in files:
        with open(f, newline="") as fh:
            for row in csv.DictReader(fh):
                per_policy[row["policy"]].append(float(row["return"]))
    return per_policy


@main.command("compare")
@click.argument("datasets", nargs=-1, required=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def compare(datasets, out):
    """Pairwise Mann-Whitney U tests over labeled return sets.

    DATASETS are NAME=PATH pairs; each PATH is a returns CSV (or directory
    of them) as written by `animat eval`.  The test compares per-policy
    mean returns.
    """
    groups = {}
    for item in datasets:
        if "=" not in item:
            raise click.UsageError(f"expected NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        per_policy = _read_returns(path)
        if not per_policy:
            raise click.UsageError(f"no return rows found under {path}")
        groups[name] = [float(np.mean(v)) for _, v in sorted(per_policy.items())]
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["eval", "policy", "mean_return"])
        for name in groups:
            for i, m in enumerate(groups[name]):
                w.writerow([name, i, repr(m)])
    with open(out / "comparisons.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["comparison", "a", "b", "median_a", "median_b", "U", "p"])
        for a, b in combinations(groups, 2):
            u, p = stats.mann_whitney_u(groups[a], groups[b])
            w.writerow([f"{a}_vs_{b}", a, b,
                        repr(float(np.median(groups[a]))),
                        repr(float(np.median(groups[b]))), repr(u), repr(p)])
            click.echo(f"{a} vs {b}: U={u:.1f} p={p:.3g}")
    click.echo(f"report written to {out}")


@main.command("plot")
@click.option("--kind", type=click.Choice(["box", "curve"]), required=True)
@click.option("--data", "data_csv", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--title", default="")
def plot(kind, data_csv, out, title):
    """Render a summary box plot or a training curve as SVG."""
    if kind == "box":
        plotting.box_plot_from_summary(data_csv, out, title=title)
    else:
        plotting.training_curve(data_csv, out, title=title)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
