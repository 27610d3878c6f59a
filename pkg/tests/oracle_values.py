"""Frozen reference values computed by independent oracles.

Everything here was produced by a separate script using
scipy.integrate.quad (adaptive quadrature on [-9, 9], limit=400) plus
scipy.optimize.brentq at xtol <= 1e-12, i.e. none of the package's own
quadrature or root finding.  Gaussian facts are closed-form.
"""

import numpy as np

# positive fixed point of the mean map, double well, theta=1, sigma2=0.3
M_PLUS = 0.8544325465339179

# mean-map slope at 0 and at the positive fixed point (same model)
FPRIME_ZERO = 1.3234299384088068
FPRIME_MPLUS = 0.6350324946739949

# critical temperature for theta=1 (slope at 0 equals 1)
SIGMA_C2 = 0.8157865947052989

# cubic coefficient s in f(m) = m - s m^3 + o(m^3) at the critical
# temperature, from 5-point finite differences of the oracle f (h=0.05)
CUBIC_S = 0.22287012328764397

# free energy of the self-consistent density at m_plus and at 0
F_STAR = -0.15161376938613297
F_SYMMETRIC = -0.05679861547663356

# low-temperature fixed-point jacobians (2/sigma2)*var near a=1
LOC_JAC = {
    0.2: 0.5814150614245961,
    0.1: 0.5365245755796977,
    0.05: 0.5172977088887221,
}
LOC_LIMIT = 0.5  # 2/(2 + V''(1)) with V''(1) = 2

# Gaussian closed forms
GAUSS_ENTROPY_STD = -0.5 * np.log(2.0 * np.pi * np.e)   # int rho ln rho, N(0,1)
TV_N01_N11 = 0.38292492254802624                        # TV(N(0,1), N(1,1))
F_GAUSS_QUADRATIC = -0.9189385332046727                 # quadratic V, theta=0, s2=1
