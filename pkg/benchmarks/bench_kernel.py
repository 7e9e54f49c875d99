"""Compare the compiled and pure-Python training kernels.

    python3 benchmarks/bench_kernel.py [--episodes N] [--repeats R]

Both backends run the same configuration from the same seed; the script
checks that the resulting tables are identical before reporting timings.
"""
import argparse
import time

import numpy as np

from rvic._kernels import compiled_available
from rvic.trainer import Trainer, TrainConfig

CASES = {
    "torus8-counts": {"env": {"width": 8, "height": 8}, "skills": {"num_skills": 4, "episode_length": 4}},
    "torus15-counts": {"env": {"width": 15, "height": 15}, "skills": {"num_skills": 16, "episode_length": 8}},
    "torus8-softmax": {"env": {"width": 8, "height": 8}, "skills": {"num_skills": 4, "episode_length": 4},
                       "predictor": {"family": "softmax"}},
}


def timed(config, backend, repeats):
    best, trainer = float("inf"), None
    for _ in range(repeats):
        trainer = Trainer(config, backend)
        t0 = time.perf_counter()
        trainer.run()
        best = min(best, time.perf_counter() - t0)
    return best, trainer


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=20_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    if not compiled_available():
        raise SystemExit("compiled kernel not built; reinstall the package with Cython available")

    print(f"{'case':16s} {'episodes':>9s} {'python s':>9s} {'cython s':>9s} {'speedup':>8s}  identical")
    for name, case in CASES.items():
        cfg = TrainConfig.from_dict({**case, "total_skill_episodes": args.episodes,
                                     "eval_every": args.episodes})
        t_py, py = timed(cfg, "python", args.repeats)
        t_cy, cy = timed(cfg, "cython", args.repeats)
        same = all(np.array_equal(a, b) for a, b in zip(py._arrays().values(), cy._arrays().values()))
        print(f"{name:16s} {args.episodes:9d} {t_py:9.3f} {t_cy:9.4f} {t_py / t_cy:7.0f}x  {same}")


if __name__ == "__main__":
    main()
