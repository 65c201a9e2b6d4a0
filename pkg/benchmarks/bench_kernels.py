"""Compare the compiled kernels against the NumPy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Times the shared primitives on the training workload shapes (batch 64,
64x64 hidden layers) and one full learner update per backend.
"""

import time

import numpy as np

from animat.kernels import pure
from animat.rl import SacConfig, SacLearner

try:
    from animat.kernels import _fast as fast
except ImportError:
    fast = None


def bench(label, fn, n=2000):
    fn()  # warm
    t0 = time.perf_counter()
    for _ in range(n):
        fn()
    dt = (time.perf_counter() - t0) / n
    print(f"{label:<38} {dt * 1e6:9.1f} us/call")
    return dt


def main():
    rng = np.random.default_rng(0)
    sizes = (4, 64, 64, 5)
    weights = [rng.normal(size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(size=b) for b in sizes[1:]]
    x = rng.normal(size=(64, 4))
    acts = pure.mlp_forward(x, weights, biases)
    d_out = rng.normal(size=acts[-1].shape)
    p = rng.normal(size=10_000)
    g = rng.normal(size=10_000)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    backends = [("pure", pure)] + ([("fast", fast)] if fast else [])
    results = {}
    for name, mod in backends:
        results[name, "forward"] = bench(
            f"mlp_forward[{name}]", lambda: mod.mlp_forward(x, weights, biases))
        results[name, "backward"] = bench(
            f"mlp_backward[{name}]", lambda: mod.mlp_backward(acts, weights, d_out))
        results[name, "adam"] = bench(
            f"adam_step[{name}] (10k params)",
            lambda: mod.adam_step(p, g, m, v, 1, 3e-4, 0.9, 0.999, 1e-8))

    batch = (rng.normal(size=(64, 4)), rng.integers(5, size=64),
             rng.normal(size=64), rng.normal(size=(64, 4)),
             (rng.random(64) < 0.1).astype(float))
    for name, fused in (("pure", False),) + ((("fast", True),) if fast else ()):
        learner = SacLearner(4, 5, SacConfig(), seed=0)
        learner.use_fused = fused
        results[name, "update"] = bench(
            f"sac update[{name}]", lambda: learner.update(batch=batch), n=500)

    if fast:
        print()
        for key in ("forward", "backward", "adam", "update"):
            speedup = results["pure", key] / results["fast", key]
            print(f"{key:<10} speedup: {speedup:.1f}x")


if __name__ == "__main__":
    main()
