#!/usr/bin/env python3
"""
Final validation of ustatboot at desk scale.

Runs the Monte Carlo checks that are too slow for the unit tests: the size
of the simultaneous tests, the Gaussian-approximation grid, the coverage of
the bootstrap threshold and its adaptivity to block-diagonal covariance.
Every check prints its measured numbers; the exit status is nonzero when
any check fails.

    python final_validation.py                 # all checks, full repetitions
    python final_validation.py --scale 0.1     # a tenth of the repetitions
    python final_validation.py --only size grid
"""

import argparse
import math
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ustatboot import CovarianceInference, DataMatrix, SimulationLab
from ustatboot.config import EngineSettings
from ustatboot.random_streams import ReplicateStreams
from ustatboot.simulation import DepKind, ModelKind, SimConfig

KS_NOISE = 0.02


def gaussian_sample(streams, index, factor, n):
    gen = streams.generator(index)
    return DataMatrix(ReplicateStreams.normals(gen, (n, factor.shape[0])) @ factor.T)


def check_test_size(settings, scale):
    """Rejection rates of both simultaneous tests under their null"""
    reps = max(1, int(1000 * scale))
    n, p, alpha, B = 300, 10, 0.05, 500
    inference = CovarianceInference(settings)
    sigma = SimulationLab.build_dependence(DepKind.D2, p)
    factor = np.linalg.cholesky(sigma)
    streams = ReplicateStreams(20240501)
    cov_rejections = 0
    for r in range(reps):
        data = gaussian_sample(streams, r, factor, n)
        cov_rejections += inference.simultaneous_cov_test(data, sigma, alpha=alpha, B=B,
                                                          seed=r).reject
    cov_rate = cov_rejections / reps

    t0 = np.full((p, p), 0.5)
    np.fill_diagonal(t0, 1.0)
    identity = np.eye(p)
    kendall_rejections = 0
    for r in range(reps):
        data = gaussian_sample(streams, reps + r, identity, n)
        kendall_rejections += inference.kendall_test(data, t0, alpha=alpha, B=B, seed=r).reject
    kendall_rate = kendall_rejections / reps

    print(f"   covariance test size {cov_rate:.3f} over {reps} repetitions")
    print(f"   Kendall test size {kendall_rate:.3f} over {reps} repetitions")
    return 0.03 <= cov_rate <= 0.08 and 0.02 <= kendall_rate <= 0.09


def check_simulation_grid(settings, scale):
    """KS distances over the {M1, M2} x {D1, D2, D3} grid"""
    reps = max(10, int(5000 * scale))
    lab = SimulationLab(settings)
    ks = {}
    for model in (ModelKind.M1, ModelKind.M2):
        for dep in (DepKind.D1, DepKind.D2, DepKind.D3):
            config = SimConfig(model, dep, n=500, p=40, reps=reps, seed=1)
            report = lab.run_gaussian_approx_experiment(config)
            ks[model, dep] = report.ks
            print(f"   {model.value}/{dep.value}: KS max={report.ks['max']:.4f} "
                  f"absmax={report.ks['absmax']:.4f}")

    success = True
    for variant in ("max", "absmax"):
        for dep in (DepKind.D1, DepKind.D2, DepKind.D3):
            if ks[ModelKind.M1, dep][variant] > ks[ModelKind.M2, dep][variant] + KS_NOISE:
                print(f"   ✗ {variant}: M1 exceeds M2 at {dep.value}")
                success = False
        for model in (ModelKind.M1, ModelKind.M2):
            chain = [ks[model, dep][variant] for dep in (DepKind.D1, DepKind.D2, DepKind.D3)]
            if any(later > earlier + KS_NOISE for earlier, later in zip(chain, chain[1:])):
                print(f"   ✗ {variant}: KS of {model.value} grows with weaker dependence")
                success = False
    return success


def check_threshold_coverage(settings, scale):
    """Frequency of |S_n - Sigma|_inf <= tau* and the size of tau*"""
    reps = max(1, int(1000 * scale))
    n, p = 300, 10
    inference = CovarianceInference(settings)
    streams = ReplicateStreams(7)
    identity = np.eye(p)
    covered = 0
    taus = []
    for r in range(reps):
        data = gaussian_sample(streams, r, identity, n)
        result = inference.select_threshold(data, alpha=0.05, beta=1.0, B=500, seed=r)
        covered += CovarianceInference.oracle_threshold(data, identity) <= result.tau_star
        taus.append(result.tau_star)
    frequency = covered / reps
    # xi_4^2 = sqrt(E X^4) = sqrt(3) for standard normal coordinates
    bound = 3.0 * math.sqrt(math.log(p) / n) * math.sqrt(3.0)
    mean_tau = float(np.mean(taus))
    print(f"   coverage {frequency:.3f}, mean tau* {mean_tau:.4f} (shape bound {bound:.4f})")
    return frequency >= 0.90 and mean_tau <= bound


def check_block_adaptivity(settings, scale):
    """Mean tau* of the block design against the iid design of equal size"""
    reps = max(2, int(200 * scale))
    n, L, m = 500, 4, 25
    p = L * m
    inference = CovarianceInference(settings)
    lab = SimulationLab(settings)
    block = SimConfig(ModelKind.BLOCK, n=n, p=p, reps=1, L=L, m=m)
    streams = ReplicateStreams(11)
    identity = np.eye(p)
    block_taus, iid_taus = [], []
    for r in range(reps):
        data = lab.sample_model(block, n, streams.generator(2 * r))
        block_taus.append(inference.select_threshold(data, B=500, seed=r).tau_star)
        data = gaussian_sample(streams, 2 * r + 1, identity, n)
        iid_taus.append(inference.select_threshold(data, B=500, seed=r).tau_star)
    block_mean, iid_mean = float(np.mean(block_taus)), float(np.mean(iid_taus))
    print(f"   mean tau*: block {block_mean:.4f}, iid {iid_mean:.4f}")
    return block_mean < iid_mean


CHECKS = {
    "size": ("Simultaneous Test Size", check_test_size),
    "grid": ("Gaussian Approximation Grid", check_simulation_grid),
    "coverage": ("Threshold Coverage", check_threshold_coverage),
    "block": ("Block-Diagonal Adaptivity", check_block_adaptivity),
}


def run_validation(names, scale, threads=None):
    settings = EngineSettings.from_env(threads=threads)
    print("FINAL VALIDATION: USTATBOOT")
    print("=" * 50)

    results = []
    for name in names:
        title, check = CHECKS[name]
        print(f"\n{title}:")
        start = time.perf_counter()
        try:
            success = bool(check(settings, scale))
        except Exception as e:
            print(f"   ✗ ERROR: {e}")
            success = False
        print(f"   {'✓' if success else '✗'} {title} ({time.perf_counter() - start:.1f}s)")
        results.append((title, success))

    print("\n" + "=" * 50)
    for title, success in results:
        print(f"{title}: {'✓ PASSED' if success else '✗ FAILED'}")
    passed = sum(1 for _, success in results if success)
    print(f"\nOverall: {passed}/{len(results)} checks passed")
    return passed == len(results)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--only", nargs="+", choices=list(CHECKS), default=list(CHECKS))
    parser.add_argument("--scale", type=float, default=1.0,
                        help="fraction of the full repetition counts")
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()
    sys.exit(0 if run_validation(args.only, args.scale, args.threads) else 1)
