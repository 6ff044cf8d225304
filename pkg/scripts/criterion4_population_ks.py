"""Population KS distance of the normalised Green statistic in H^3, without sampling.

Z = (log G(r_T) + h T) / sqrt(sigma_kappa^2 T) is a decreasing function of r_T,
so P(Z <= g(r)) = 1 - F_T(r) with F_T the exact radial CDF.  The KS distance
to the standard normal is the sup over r of |1 - F_T(r) - Phi(g(r))|.  This is
the floor any Monte Carlo estimate of the KS statistic fluctuates around.

    python3 scripts/criterion4_population_ks.py [T ...]
"""

import math
import sys

import numpy as np

from hyperbm.kernels import log_green_function, model_constants, radial_cdf
from hyperbm.models import ConstantCurvature
from hyperbm.stats import normal_cdf


def population_ks(T, kind="green", m=ConstantCurvature(3, 1.0)):
    c = model_constants(m)
    cdf = radial_cdf(m, T)
    r = cdf.grid[1:]
    F = cdf.values[1:]
    if kind == "green":
        z = (log_green_function(m, r) + c.h * T) / math.sqrt(c.sigma_kappa_sq * T)
        law = 1.0 - F  # z decreases in r
    else:
        z = (r - c.ell * T) / math.sqrt(c.sigma_ell_sq * T)
        law = F
    return float(np.max(np.abs(law - normal_cdf(z))))


def main(argv):
    Ts = [float(a) for a in argv] or [50, 100, 200, 300, 330, 370, 400]
    print(f"{'T':>6}  {'KS distance':>12}  {'KS green':>10}")
    for T in Ts:
        print(f"{T:6g}  {population_ks(T, 'distance'):12.4f}  {population_ks(T, 'green'):10.4f}")


if __name__ == "__main__":
    main(sys.argv[1:])
