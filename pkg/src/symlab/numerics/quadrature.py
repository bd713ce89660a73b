"""Gauss-Legendre rules and their rational map onto ``[0, inf)``."""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .._validation import check_int, check_real
from ..exceptions import NumericalDomainError

MAX_NODES = 256


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of an ``n``-point Gauss-Legendre rule on [-1, 1]."""

    n: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f, a=-1.0, b=1.0):
        """Integrate ``f`` over ``[a, b]`` with an affine change of variable."""
        half = 0.5 * (b - a)
        x = half * self.nodes + 0.5 * (a + b)
        return half * float(np.dot(self.weights, f(x)))

    def semi_infinite_nodes(self, scale):
        """Nodes ``p`` and Jacobian-weighted weights for ``p in [0, inf)``."""
        u = self.nodes
        p = scale * (1.0 + u) / (1.0 - u)
        jac = 2.0 * scale / (1.0 - u) ** 2
        return p, self.weights * jac


def gauss_legendre(n):
    """Return the ``n``-point Gauss-Legendre rule.

    Nodes are sorted ascending and symmetrised so that
    ``nodes[i] == -nodes[n - 1 - i]`` holds exactly.
    """
    n = check_int(n, "n", min_value=1, max_value=MAX_NODES)
    x, w = leggauss(n)
    order = np.argsort(x)
    x, w = x[order], w[order]
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(n=n, nodes=x, weights=w)


def integrate_semi_infinite(f, rule, scale=1.0):
    """Integrate ``f`` over ``[0, inf)``.

    Uses the map ``p = scale * (1 + u) / (1 - u)``, so roughly half of the
    nodes land below ``scale``. ``f`` is called once with the array of
    mapped nodes.

    Raises
    ------
    NumericalDomainError
        If ``f`` returns a non-finite value at any node.
    """
    scale = check_real(scale, "scale", positive=True)
    p, w = rule.semi_infinite_nodes(scale)
    values = np.asarray(f(p), dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        raise NumericalDomainError("non-finite integrand", node=float(p[bad][0]))
    return float(np.dot(w, values))
