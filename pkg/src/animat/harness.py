"""Experiment orchestration: training loops, evaluation, condition comparisons.

A training run wires the pieces together per step: the policy picks a
stimulus frequency, the active neuron snapshot samples a firing rate, the
percentile mapping turns the rate into a motor command, the environment
steps and the reward feeds the learner.  Parameter shadowing advances the
active snapshot on a fixed step schedule; the baseline condition bypasses
the neuron layer entirely.

Shadowing refreshes the whole simulator: both the sampling distributions
and the percentile table the mappings read.  A frozen run keeps the
initial snapshot's table throughout, and every policy is evaluated with
the table it last operated under.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .envs import (CartpoleParams, CartpoleState, NavParams, NavState,
                   cartpole_step, control_mapping, map_rate_1thr, map_rate_9thr,
                   nav_step)
from .errors import ValidationError
from .rl import SacConfig, SacLearner, flip_action
from .snapshot import NeuronSnapshot, SnapshotSeries, active_snapshot, sample_response
from .stats import mann_whitney_u

TASKS = ("cartpole", "navigation")
CONDITIONS = ("baseline", "control", "map1thr", "map9thr")

# Desk-scale step limits; longer runs remain selectable via --steps.
DEFAULT_STEPS = {"cartpole": 150_000, "navigation": 100_000}

BASELINE_COMMANDS = {
    "cartpole": (-1.0, 1.0),
    "navigation": tuple(np.linspace(-math.pi / 10, math.pi / 10, 5)),
}


class EnvRunner:
    """Episode-aware wrapper over the raw step functions."""

    def __init__(self, task: str, rng: np.random.Generator | None = None,
                 max_iterations: int | None = None):
        if task not in TASKS:
            raise ValidationError(f"unknown task {task!r}")
        self.task = task
        self.rng = rng
        if task == "cartpole":
            self.params = CartpoleParams() if max_iterations is None else \
                CartpoleParams(max_iterations=max_iterations)
        else:
            self.params = NavParams() if max_iterations is None else \
                NavParams(max_iterations=max_iterations)
        self.obs_dim = 4 if task == "cartpole" else 3
        self.reset()

    def reset(self) -> np.ndarray:
        self.state = CartpoleState() if self.task == "cartpole" else NavState()
        self.iteration = 0
        return self.state.as_obs()

    def step(self, command: float):
        """Returns ``(obs, reward, done, terminal)``.

        ``terminal`` is True only for real episode endings (failure or
        goal); hitting the iteration limit sets ``done`` without
        ``terminal`` so the learner still bootstraps through it.
        """
        if self.task == "cartpole":
            self.state, reward, terminal = cartpole_step(
                self.state, command, self.params, self.rng)
        else:
            self.state, reward, terminal = nav_step(self.state, command, self.params)
        self.iteration += 1
        done = terminal or self.iteration >= self.params.max_iterations
        return self.state.as_obs(), reward, done, terminal


class AnimatInterface:
    """Action-to-command conversion for one condition."""

    def __init__(self, task: str, condition: str,
                 series: SnapshotSeries | None = None,
                 shadowing: bool = True):
        if condition not in CONDITIONS:
            raise ValidationError(f"unknown condition {condition!r}")
        if condition != "baseline" and series is None:
            raise ValidationError(f"condition {condition!r} needs a snapshot series")
        self.task = task
        self.condition = condition
        self.series = series
        self.shadowing = shadowing
        if condition == "baseline":
            self.n_actions = len(BASELINE_COMMANDS[task])
            self.percentiles = None
        else:
            self.n_actions = len(series.snapshots[0].frequencies_hz)
            self.percentiles = series.snapshots[0].percentiles

    def snapshot_index(self, global_step: int) -> int:
        if self.condition == "baseline":
            return 0
        if not self.shadowing:
            return 0
        return active_snapshot(self.series, global_step)

    def command(self, action: int, global_step: int, rng: np.random.Generator,
                snapshot: NeuronSnapshot | None = None):
        """Returns ``(command, rate, u)``; rate/u are NaN for baseline."""
        if self.condition == "baseline":
            return BASELINE_COMMANDS[self.task][action], math.nan, math.nan
        snap = snapshot if snapshot is not None else \
            self.series.snapshots[self.snapshot_index(global_step)]
        freq = control_mapping(rng, self.n_actions) if self.condition == "control" \
            else action
        rate = sample_response(snap, freq, rng)
        # the calibration table tracks the active snapshot when shadowing
        table = snap.percentiles if (self.shadowing and snapshot is None) \
            else self.percentiles
        u = map_rate_9thr(rate, table) if self.condition == "map9thr" \
            else map_rate_1thr(rate, table)
        command = u if self.task == "cartpole" else u * math.pi / 10
        return command, rate, u


@dataclass
class TrainingLog:
    episode_returns: list = field(default_factory=list)
    episode_snapshots: list = field(default_factory=list)

    @property
    def distinct_snapshots(self) -> int:
        return len(set(self.episode_snapshots))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["episode", "return", "snapshot_index"])
            for i, (r, s) in enumerate(zip(self.episode_returns, self.episode_snapshots)):
                w.writerow([i, repr(r), s])


def train_animat(task: str, condition: str, steps: int, seed: int,
                 series: SnapshotSeries | None = None, shadowing: bool = True,
                 sac_config: SacConfig = SacConfig(), flip_prob: float = 0.0,
                 max_iterations: int | None = None,
                 learner: SacLearner | None = None,
                 start_step: int = 0) -> tuple[SacLearner, TrainingLog]:
    """Train one policy; returns the learner and the per-episode log.

    Passing a ``learner`` (with the matching ``start_step``) continues a
    previous run, e.g. to interleave training with evaluation checks.
    """
    interface = AnimatInterface(task, condition, series, shadowing)
    rng = np.random.default_rng(seed + 7919 * (start_step > 0) * start_step)
    env = EnvRunner(task, rng=rng, max_iterations=max_iterations)
    if learner is None:
        learner = SacLearner(env.obs_dim, interface.n_actions, sac_config, seed=seed)
    log = TrainingLog()

    obs = env.reset()
    ep_return = 0.0
    ep_snap = interface.snapshot_index(start_step)
    for step in range(start_step, start_step + steps):
        if len(learner.buffer) < sac_config.warmup_steps:
            action = int(rng.integers(interface.n_actions))
        else:
            action = learner.select_action(obs, "explore", rng)
        if flip_prob > 0:
            action = flip_action(action, flip_prob, rng, interface.n_actions)
        command, _rate, _u = interface.command(action, step, rng)
        next_obs, reward, done, terminal = env.step(command)
        learner.buffer.push(obs, action, reward, next_obs, terminal)
        ep_return += reward
        if len(learner.buffer) >= sac_config.warmup_steps and \
                step % sac_config.update_every == 0:
            learner.update(rng=rng)
        learner.step_count += 1
        if done:
            log.episode_returns.append(ep_return)
            log.episode_snapshots.append(ep_snap)
            obs = env.reset()
            ep_return = 0.0
            ep_snap = interface.snapshot_index(min(step + 1, start_step + steps - 1))
        else:
            obs = next_obs
    return learner, log


OBS_NAMES = {"cartpole": ("x", "x_dot", "theta", "theta_dot"),
             "navigation": ("x", "y", "theta")}


def evaluate(learner: SacLearner, task: str, condition: str,
             snapshot: NeuronSnapshot | None, percentiles, n_episodes: int,
             seed: int, max_iterations: int | None = None,
             traj_dir=None) -> list[float]:
    """Greedy-policy episode returns on a fixed snapshot.

    ``percentiles`` is the mapping table (normally from the initial
    snapshot of the training series); with ``traj_dir`` set, one CSV per
    episode is written with columns step, obs..., action, rate, u, reward,
    done.
    """
    interface = AnimatInterface(
        task, condition,
        series=None if condition == "baseline" else SnapshotSeries((snapshot,), 1),
        shadowing=False)
    if percentiles is not None and interface.percentiles is not None:
        interface.percentiles = np.asarray(percentiles, dtype=float)
    if learner.n_actions != interface.n_actions:
        raise ValidationError(
            f"checkpoint has {learner.n_actions} actions, condition needs "
            f"{interface.n_actions}")
    rng = np.random.default_rng(seed)
    env = EnvRunner(task, rng=rng, max_iterations=max_iterations)
    if learner.obs_dim != env.obs_dim:
        raise ValidationError(
            f"checkpoint expects {learner.obs_dim}-dim observations, task "
            f"{task} provides {env.obs_dim}")
    if traj_dir is not None:
        import pathlib

        traj_dir = pathlib.Path(traj_dir)
        traj_dir.mkdir(parents=True, exist_ok=True)
    returns = []
    for ep in range(n_episodes):
        obs = env.reset()
        total = 0.0
        done = False
        step = 0
        traj_file = writer = None
        if traj_dir is not None:
            traj_file = open(traj_dir / f"episode_{ep:03d}.csv", "w", newline="")
            writer = csv.writer(traj_file)
            writer.writerow(["step", *OBS_NAMES[task], "action", "rate", "u",
                             "reward", "done"])
        while not done:
            action = learner.select_action(obs, "greedy", rng)
            command, rate, u = interface.command(action, 0, rng, snapshot=snapshot)
            obs, reward, done, _terminal = env.step(command)
            total += reward
            if writer is not None:
                writer.writerow([step, *[repr(float(v)) for v in obs], action,
                                 repr(rate), repr(u), repr(reward), int(done)])
            step += 1
        if traj_file is not None:
            traj_file.close()
        returns.append(total)
    return returns


@dataclass
class Comparison:
    name: str
    label_a: str
    label_b: str
    means_a: list
    means_b: list
    u: float = 0.0
    p: float = 1.0

    def run_test(self):
        self.u, self.p = mann_whitney_u(self.means_a, self.means_b)
        return self


@dataclass
class EvalReport:
    task: str
    per_policy_returns: dict  # (eval label) -> {seed: [returns]}
    comparisons: list

    def policy_means(self, label: str) -> list:
        return [float(np.mean(r)) for _, r in sorted(self.per_policy_returns[label].items())]


def _series_with_interval(series: SnapshotSeries, steps: int) -> SnapshotSeries:
    """Re-interval a series so the whole snapshot sequence fits in ``steps``."""
    interval = max(1, steps // len(series.snapshots))
    return SnapshotSeries(series.snapshots, interval)


def run_experiment(task: str, series: SnapshotSeries, steps: int,
                   n_policies: int = 10, base_seed: int = 0,
                   sac_config: SacConfig = SacConfig(),
                   eval_episodes_small: int = 30, eval_episodes_large: int = 100,
                   max_iterations: int | None = None,
                   progress=None) -> EvalReport:
    """Train all conditions and run the four standard comparisons.

    Conditions map1thr / map9thr / control train with shadowing; an extra
    map1thr set trains frozen on the first snapshot.  Evaluations use the
    first snapshot (learning-effect comparison) or the last one (all
    others); each policy keeps the calibration table it last operated
    under, so frozen policies face the final snapshot with the initial
    table.
    """
    series = _series_with_interval(series, steps)
    seeds = [base_seed + i for i in range(n_policies)]
    first, last = series.snapshots[0], series.snapshots[-1]

    trained = {}  # condition label -> {seed: learner}
    train_specs = [
        ("map1thr", "map1thr", True),
        ("map9thr", "map9thr", True),
        ("control", "control", True),
        ("map1thr_frozen", "map1thr", False),
    ]
    for label, condition, shadowing in train_specs:
        trained[label] = {}
        for seed in seeds:
            if progress:
                progress(f"train {task}/{label} seed={seed}")
            learner, _log = train_animat(task, condition, steps, seed, series,
                                         shadowing=shadowing, sac_config=sac_config,
                                         max_iterations=max_iterations)
            trained[label][seed] = learner
    untrained = {seed: SacLearner(EnvRunner(task).obs_dim,
                                  len(first.frequencies_hz), sac_config, seed=seed)
                 for seed in seeds}

    per_policy = {}

    def eval_set(label, learners, condition, snapshot, table, n_episodes):
        per_policy[label] = {}
        for seed, learner in learners.items():
            if progress:
                progress(f"eval {task}/{label} seed={seed}")
            per_policy[label][seed] = evaluate(
                learner, task, condition, snapshot, table.percentiles, n_episodes,
                seed=10_000 + seed, max_iterations=max_iterations)

    eval_set("untrained@first", untrained, "map1thr", first, first, eval_episodes_small)
    eval_set("map1thr@first", trained["map1thr"], "map1thr", first, first,
             eval_episodes_small)
    eval_set("control@last", trained["control"], "control", last, last,
             eval_episodes_large)
    eval_set("map1thr@last", trained["map1thr"], "map1thr", last, last,
             eval_episodes_large)
    eval_set("map9thr@last", trained["map9thr"], "map9thr", last, last,
             eval_episodes_large)
    # frozen policies never saw a recalibration, so they keep the initial table
    eval_set("map1thr_frozen@last", trained["map1thr_frozen"], "map1thr", last, first,
             eval_episodes_large)

    report = EvalReport(task=task, per_policy_returns=per_policy, comparisons=[])

    def compare(name, label_a, label_b):
        report.comparisons.append(Comparison(
            name, label_a, label_b,
            report.policy_means(label_a), report.policy_means(label_b)).run_test())

    compare("learning_effect", "untrained@first", "map1thr@first")
    compare("mapping_vs_control", "control@last", "map1thr@last")
    compare("resolution", "map1thr@last", "map9thr@last")
    compare("shadowing", "map1thr_frozen@last", "map1thr@last")
    return report


def write_report(report: EvalReport, out_dir):
    """Emit returns / summary / comparisons CSVs; returns their paths."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    returns_path = out / "returns.csv"
    with open(returns_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["eval", "policy", "episode", "return"])
        for label in sorted(report.per_policy_returns):
            for seed in sorted(report.per_policy_returns[label]):
                for i, r in enumerate(report.per_policy_returns[label][seed]):
                    w.writerow([label, seed, i, repr(r)])
    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["eval", "policy", "mean_return"])
        for label in sorted(report.per_policy_returns):
            for seed in sorted(report.per_policy_returns[label]):
                w.writerow([label, seed,
                            repr(float(np.mean(report.per_policy_returns[label][seed])))])
    comp_path = out / "comparisons.csv"
    with open(comp_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["comparison", "a", "b", "median_a", "median_b", "U", "p"])
        for c in report.comparisons:
            w.writerow([c.name, c.label_a, c.label_b,
                        repr(float(np.median(c.means_a))),
                        repr(float(np.median(c.means_b))),
                        repr(c.u), repr(c.p)])
    return returns_path, summary_path, comp_path
