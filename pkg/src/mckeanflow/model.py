"""Confining potentials, quadratic interaction, and the mean-field drift.

Every supported confining potential is a polynomial with even degree and a
positive leading coefficient, so derivatives are exact and the infimum of
the curvature V'' over an interval admits a rigorous bound.  The
interaction is fixed to the quadratic kernel theta*(x-y)**2, which makes
every measure-level quantity depend on the measure only through its mean
and second moment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P


class ModelError(ValueError):
    """Invalid model parameters or arguments outside an operation's domain."""


def _as_tuple(coefficients) -> tuple[float, ...]:
    coeffs = tuple(float(c) for c in coefficients)
    # strip trailing zeros but keep at least the constant term
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs = coeffs[:-1]
    return coeffs


@dataclass(frozen=True)
class Potential:
    """Polynomial confining potential V.

    coefficients are in ascending order: V(x) = sum(c[k] * x**k).
    The leading degree must be even and its coefficient positive so that
    V is confining.  `label` records which named family built it.
    """

    coefficients: tuple[float, ...]
    label: str = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _as_tuple(self.coefficients))
        deg = len(self.coefficients) - 1
        if deg < 2:
            raise ModelError("potential must have degree >= 2")
        if deg % 2 != 0:
            raise ModelError("potential must have even leading degree")
        if self.coefficients[-1] <= 0:
            raise ModelError("potential must have a positive leading coefficient")

    # ---- named families -------------------------------------------------

    @staticmethod
    def double_well() -> "Potential":
        """V(x) = x**4/4 - x**2/2, two wells at +-1 and a barrier at 0."""
        return Potential((0.0, 0.0, -0.5, 0.0, 0.25), label="double_well")

    @staticmethod
    def quadratic() -> "Potential":
        """V(x) = x**2/2."""
        return Potential((0.0, 0.0, 0.5), label="quadratic")

    @staticmethod
    def polynomial(coefficients) -> "Potential":
        return Potential(tuple(coefficients), label="polynomial")

    @staticmethod
    def multi_well(wells) -> "Potential":
        """Sum of quartic wells: V(x) = sum_j s_j*((x-a_j)**2 - r_j**2)**2.

        `wells` is a sequence of (scale, center, radius) triples with
        scale > 0.  Each term contributes two minima at center +- radius.
        """
        coeffs = np.zeros(1)
        for scale, center, radius in wells:
            s, a, r = float(scale), float(center), float(radius)
            if s <= 0:
                raise ModelError("well scale must be positive")
            # ((x-a)^2 - r^2)^2 expanded in ascending powers of x
            base = P.polysub(P.polypow((-a, 1.0), 2), (r * r,))
            term = s * P.polypow(base, 2)
            coeffs = P.polyadd(coeffs, term)
        return Potential(tuple(coeffs), label="multi_well")

    # ---- evaluation ------------------------------------------------------

    def value(self, x):
        return P.polyval(np.asarray(x, dtype=float), self.coefficients)

    def grad(self, x):
        return P.polyval(np.asarray(x, dtype=float), P.polyder(self.coefficients))

    def hess(self, x):
        return P.polyval(np.asarray(x, dtype=float), P.polyder(self.coefficients, 2))

    def _abs_poly_bound(self, coeffs, radius: float) -> float:
        # |p(x)| <= sum |c_k| radius**k for |x| <= radius; rigorous
        return float(sum(abs(c) * radius ** k for k, c in enumerate(coeffs)))

    def hess_inf(self, lo: float, hi: float, tol: float = 1e-6) -> float:
        """Rigorous lower bound for inf of V'' on [lo, hi].

        Grid minimum minus a modulus-of-continuity bound (dx/2)*max|V'''|,
        with the grid refined until the bracket is tighter than `tol`.
        """
        if not lo < hi:
            raise ModelError("need lo < hi")
        d3 = P.polyder(self.coefficients, 3)
        radius = max(abs(lo), abs(hi))
        m3 = self._abs_poly_bound(d3, radius)
        n = 1025
        while True:
            xs = np.linspace(lo, hi, n)
            grid_min = float(np.min(self.hess(xs)))
            slack = 0.5 * (hi - lo) / (n - 1) * m3
            if slack < tol or n > 2 ** 24:
                return grid_min - slack
            n = 2 * (n - 1) + 1

    def hess_inf_global(self, tol: float = 1e-6) -> float:
        """Lower bound for inf of V'' over the whole line.

        V'' tends to +infinity, so the infimum is attained on a bounded
        interval; expand until the boundary curvature clears the interior
        minimum.
        """
        d2 = np.trim_zeros(np.atleast_1d(P.polyder(self.coefficients, 2)),
                           "b")
        if d2.size <= 1:
            # constant curvature, nothing to bracket
            return float(d2[0]) if d2.size else 0.0
        r = 1.0
        while r < 2 ** 20:
            xs = np.linspace(-r, r, 4097)
            h = self.hess(xs)
            interior = float(np.min(h))
            if min(h[0], h[-1]) > interior + 1.0:
                return self.hess_inf(-r, r, tol)
            r *= 2.0
        raise ModelError("could not bracket the minimum of V''")

    def is_even(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coefficients[1::2])


@dataclass(frozen=True)
class Interaction:
    """Quadratic interaction kernel W(x, y) = theta*(x-y)**2.

    theta > 0 is attractive, theta < 0 repulsive.  The parametric
    structure behind it is the feature map phi(x) = x with parameter
    energy -theta*|psi|**2, so convolutions against a measure reduce to
    its mean and second moment.
    """

    theta: float

    def kernel(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return self.theta * d * d

    @staticmethod
    def phi(x):
        return np.asarray(x, dtype=float)

    def param_energy(self, psi):
        return -self.theta * np.asarray(psi, dtype=float) ** 2


@dataclass(frozen=True)
class ModelConfig:
    """Potential + interaction + temperature sigma2 (+ dimension)."""

    potential: Potential
    interaction: Interaction
    sigma2: float
    dimension: int = 1

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ModelError("sigma2 must be positive")
        if int(self.dimension) < 1 or self.dimension != int(self.dimension):
            raise ModelError("dimension must be an integer >= 1")

    @property
    def theta(self) -> float:
        return self.interaction.theta

    def with_sigma2(self, sigma2: float) -> "ModelConfig":
        return ModelConfig(self.potential, self.interaction, float(sigma2),
                           self.dimension)


def standard_model(theta: float, sigma2: float,
                   potential: Potential | None = None) -> ModelConfig:
    """Quadratic-interaction model; double-well confinement by default."""
    pot = potential if potential is not None else Potential.double_well()
    return ModelConfig(potential=pot, interaction=Interaction(float(theta)),
                       sigma2=float(sigma2))


def drift(model: ModelConfig, x, mean):
    """Mean-field drift -V'(x) - 2*theta*(x - mean).

    For the quadratic kernel the convolved interaction force at x equals
    2*theta*(x - mean), so the drift needs only the current mean.
    """
    if model.dimension != 1:
        raise ModelError("drift is defined for dimension 1")
    x = np.asarray(x, dtype=float)
    return -model.potential.grad(x) - 2.0 * model.theta * (x - mean)


def mean_field_potential(model: ModelConfig, x, mean: float,
                         second_moment: float):
    """Frozen single-particle energy V(x) + theta*(x**2 - 2*x*mean + m2).

    This is the linear functional derivative of the interaction-plus-
    confinement energy at a measure with the given first two moments;
    its negative x-derivative is `drift`.
    """
    if second_moment - mean * mean < -1e-12 * max(1.0, mean * mean):
        raise ModelError("second_moment < mean**2 is not a valid moment pair")
    x = np.asarray(x, dtype=float)
    th = model.theta
    return model.potential.value(x) + th * (x * x - 2.0 * x * mean + second_moment)


def mean_field_energy(model: ModelConfig, rho) -> float:
    """Energy part of the free energy: int V drho + theta*Var(rho).

    The symmetrized double integral of theta*(x-y)**2 against rho x rho
    equals 2*theta*Var(rho); the energy functional carries a factor 1/2.
    """
    if abs(rho.mass() - 1.0) > 1e-8:
        raise ModelError("density must be normalized")
    pot = float(np.dot(model.potential.value(rho.centers), rho.values) * rho.dx)
    return pot + model.theta * rho.variance()
