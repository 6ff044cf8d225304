"""Endpoint and increment drift estimates against T, for each scheme.

Shows the O(1/T) bias of r_T / T (from the start-up transient) that the
increment estimator over [T/2, T] removes.

    python3 scripts/drift_scan.py --n-paths 2000 --T 5 10 20 50
"""

import argparse

from hyperbm.models import ConstantCurvature
from hyperbm.rng import RngPolicy
from hyperbm.sampler import simulate_halfplane, simulate_hyperboloid, simulate_polar
from hyperbm.stats import Method, drift_estimate


def batch(scheme, d, T, n, seed):
    pol = RngPolicy(seed).with_stream(f"scan:{scheme}:{d}")
    m = ConstantCurvature(d, 1.0)
    if scheme == "halfplane":
        return simulate_halfplane(T, 0.01, 1j, n, pol, record_every=50)
    if scheme == "hyperboloid":
        return simulate_hyperboloid(m, T, 0.005, n, pol, record_every=100)
    return simulate_polar(m, T, 0.01, n, pol, record_every=50)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--T", type=float, nargs="+", default=[5.0, 10.0, 20.0, 50.0])
    p.add_argument("--n-paths", type=int, default=2000)
    p.add_argument("--seed", type=int, default=12345)
    args = p.parse_args()
    print("scheme,d,T,endpoint,endpoint_se,increment,increment_se,predicted")
    for scheme, d in (("polar", 3), ("hyperboloid", 3), ("polar", 2), ("halfplane", 2), ("hyperboloid", 2)):
        for T in args.T:
            b = batch(scheme, d, T, args.n_paths, args.seed)
            e, i = drift_estimate(b), drift_estimate(b, Method.INCREMENT)
            print(f"{scheme},{d},{T:g},{e.value:.4f},{e.std_error:.4f},{i.value:.4f},{i.std_error:.4f},{d - 1}")


if __name__ == "__main__":
    main()
