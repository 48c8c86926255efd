"""Compare the compiled PPP kernel against the NumPy fallback.

Times the batched look evaluation (the hot loop of table construction and
threshold sweeps) on the workloads the designs actually produce: the
synchronized 50-vs-50 looks and the unequal enrichment stage-2 looks.

Usage: python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from ppfutility import _ppp_numpy
from ppfutility.bayes import DEFAULT_PRIOR, betabinom_pmf_matrix, prob_greater_table

try:
    from ppfutility import _kernels
except ImportError:
    _kernels = None


def look_workload(n_cur_trt, n_cur_ctl, n_max_trt, n_max_ctl, theta=0.9):
    pg = prob_greater_table(n_max_trt, n_max_ctl, DEFAULT_PRIOR)
    success = (pg > theta).astype(np.float64)
    pmf_t = betabinom_pmf_matrix(n_cur_trt, n_max_trt - n_cur_trt, DEFAULT_PRIOR)
    pmf_c = betabinom_pmf_matrix(n_cur_ctl, n_max_ctl - n_cur_ctl, DEFAULT_PRIOR)
    return success, pmf_t, pmf_c


def best_of(fn, args, repeats):
    fn(*args)  # warm up
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20, help="timing repeats per case")
    args = parser.parse_args()

    cases = [
        ("50v50 look n=10", look_workload(10, 10, 50, 50)),
        ("50v50 look n=30", look_workload(30, 30, 50, 50)),
        ("50v50 look n=40", look_workload(40, 40, 50, 50)),
        ("stage2 look 60v10", look_workload(60, 10, 100, 50)),
        ("stage2 look 90v40", look_workload(90, 40, 100, 50)),
    ]

    print(f"{'case':<20} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, workload in cases:
        t_np = best_of(_ppp_numpy.ppp_grid, workload, args.repeats)
        if _kernels is None:
            print(f"{name:<20} {t_np * 1e3:>8.3f}ms {'n/a':>10} {'n/a':>8}")
            continue
        t_c = best_of(_kernels.ppp_grid, workload, args.repeats)
        diff = np.max(np.abs(_kernels.ppp_grid(*workload) - _ppp_numpy.ppp_grid(*workload)))
        print(
            f"{name:<20} {t_np * 1e3:>8.3f}ms {t_c * 1e3:>8.3f}ms {t_np / t_c:>7.1f}x"
            f"   max|diff|={diff:.1e}"
        )


if __name__ == "__main__":
    main()
