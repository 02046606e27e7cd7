"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 7] [--e2e]

Each kernel runs on inputs sized like the 32x32 acceptance grid. With
``--e2e`` a 200-sample Monte Carlo run is also timed in subprocesses with
and without ``PGCHAOS_NO_NUMBA``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pgchaos import _kernels as K
from pgchaos.chaos import multi_indices


def _pwl_inputs(n_loads=256, steps=81, seed=0):
    rng = np.random.default_rng(seed)
    base = np.array([0.0, 0.2e-9, 0.5e-9, 0.8e-9, 1.2e-9])
    times = np.concatenate([base + 0.1e-9 * rng.integers(0, 5) for _ in range(n_loads)])
    values = rng.uniform(0, 0.04, size=times.size)
    offsets = np.arange(0, times.size + 1, len(base), dtype=np.int64)
    return times, values, offsets, np.linspace(0, 1.6e-9, steps)


def _welford_inputs(shape=(81, 1024), samples=32, seed=0):
    x = np.random.default_rng(seed).standard_normal((samples,) + shape)

    def run(update):
        mean, m2 = np.zeros(shape), np.zeros(shape)
        for i, row in enumerate(x, start=1):
            update(i, mean, m2, row)

    return run


def _basis_inputs(n=2, p=4, samples=100_000, seed=0):
    return multi_indices(n, p), np.random.default_rng(seed).standard_normal((samples, n))


def bench(repeat):
    pwl = _pwl_inputs()
    welford = _welford_inputs()
    basis = _basis_inputs()
    cases = {
        "pwl_eval_many": (lambda: K.pwl_eval_many_np(*pwl), lambda: K.pwl_eval_many_nb(*pwl)),
        "welford_update x32": (lambda: welford(K.welford_update_np), lambda: welford(K.welford_update_nb)),
        "eval_basis_table": (lambda: K.eval_basis_table_np(*basis), lambda: K.eval_basis_table_nb(*basis)),
    }
    print(f"{'kernel':<22}{'numpy ms':>12}{'numba ms':>12}{'ratio':>9}")
    for name, (f_np, f_nb) in cases.items():
        f_nb()  # compile outside the timed region
        t_np = min(timeit.repeat(f_np, number=1, repeat=repeat)) * 1e3
        t_nb = min(timeit.repeat(f_nb, number=1, repeat=repeat)) * 1e3
        print(f"{name:<22}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>9.2f}")


E2E = """
import sys, time
sys.path.insert(0, {tests!r})
from _grids import ACCEPT_H, ACCEPT_T_END, acceptance_grid
from pgchaos.analysis import run_mc
r = run_mc(acceptance_grid(), 200, ACCEPT_H, ACCEPT_T_END, seed=1)
print(r.elapsed_s)
"""


def bench_e2e():
    tests = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests")
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, PGCHAOS_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E.format(tests=tests)], env=env,
                             capture_output=True, text=True, check=True).stdout
        print(f"mc 200 samples, 32x32 ({label}): {float(out):.2f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--e2e", action="store_true")
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    bench(args.repeat)
    if args.e2e:
        bench_e2e()


if __name__ == "__main__":
    main()
