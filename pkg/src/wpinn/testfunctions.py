"""Test functions for the entropy residual.

Two families live here: the trainable ``phi = omega * xi`` built from a
network ``xi`` and a spatial cutoff ``omega``, and a closed-form tanh
mollifier family (``AnalyticTestFn``) used only for validation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .autodiff_net import Jet, NetworkParams, forward_jet
from .errors import ConfigurationError, ContractViolation
from .residuals import kruzkhov_Q


@dataclass(frozen=True)
class CutoffSpec:
    domain: tuple = (-1.0, 1.0)
    ramp_width: float | None = None

    @property
    def width(self):
        a, b = self.domain
        return 0.1 * (b - a) if self.ramp_width is None else self.ramp_width

    def __post_init__(self):
        a, b = self.domain
        if not b > a:
            raise ConfigurationError("cutoff domain must have b > a")
        if self.ramp_width is not None and not self.ramp_width > 0:
            raise ConfigurationError("ramp width must be positive")


def cutoff(spec: CutoffSpec, x):
    """Smoothstep cutoff ``(omega, omega')``: 0 on the faces, 1 in the interior."""
    a, b = spec.domain
    x = np.asarray(x, dtype=float)
    if np.any((x < a) | (x > b)):
        raise ContractViolation("cutoff evaluated outside its domain")
    left = x - a
    right = b - x
    d = np.minimum(left, right)
    eps = spec.width
    s = np.clip(d / eps, 0.0, 1.0)
    ds = np.where((d > 0) & (d < eps), np.where(left <= right, 1.0, -1.0) / eps, 0.0)
    val = s * s * (3.0 - 2.0 * s)
    der = 6.0 * s * (1.0 - s) * ds
    if val.ndim == 0:
        return float(val), float(der)
    return val, der


def apply_cutoff(omega, omega_dx, xi_jet: Jet) -> Jet:
    """Product rule for ``omega(x) * xi(x, t)``."""
    return Jet(omega * xi_jet.value, omega_dx * xi_jet.value + omega * xi_jet.dx, omega * xi_jet.dt)


def neural_test_fn(xi_params: NetworkParams, spec: CutoffSpec, x, t) -> Jet:
    omega, omega_dx = cutoff(spec, x)
    return apply_cutoff(omega, omega_dx, forward_jet(xi_params, x, t))


# -- closed-form mollifier family -----------------------------------------------

def _log_sech(z):
    z = np.abs(z)
    return np.log(2.0) - z - np.log1p(np.exp(-2.0 * z))


def _sech2(z):
    return np.exp(2.0 * _log_sech(z))


@dataclass(frozen=True)
class AnalyticTestFn:
    """Space-time bump centred at ``(y, s)`` on ``[0, 1] x [0, T]``.

    A product of a time window ``chi`` and two narrow tanh-difference kernels
    ``rho`` whose width shrinks like ``eps**3 / ln(1/eps)``.
    """

    y: float
    s: float
    epsilon: float
    T: float

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ConfigurationError("epsilon must lie in (0, 1)")
        if not self.T > 4 * self.epsilon:
            raise ConfigurationError("need T > 4 * epsilon")

    @property
    def alpha(self):
        return 3.0 * np.log(1.0 / self.epsilon) / self.epsilon

    @property
    def beta(self):
        return 9.0 * np.log(1.0 / self.epsilon) / self.epsilon ** 3

    def chi(self, t):
        """Time window and its derivative."""
        eps, al = self.epsilon, self.alpha
        p = al * (np.asarray(t, dtype=float) - 2 * eps)
        q = al * (np.asarray(t, dtype=float) - self.T + 2 * eps)
        norm = 2.0 * np.tanh(al * eps)
        return (np.tanh(p) - np.tanh(q)) / norm, al * (_sech2(p) - _sech2(q)) / norm

    def rho(self, x):
        """Mollifier kernel and its derivative, overflow-free for any argument.

        Uses ``tanh(A) - tanh(B) = sinh(A - B) sech(A) sech(B)``.
        """
        h = self.epsilon ** 6
        be = self.beta
        x = np.asarray(x, dtype=float)
        A = be * (x + h)
        B = be * (x - h)
        val = np.exp(np.log(np.sinh(2 * be * h) / (2 * h)) + _log_sech(A) + _log_sech(B))
        return val, -be * (np.tanh(A) + np.tanh(B)) * val


def analytic_test_fn(fn: AnalyticTestFn, x, t, domain=(0.0, 1.0)) -> Jet:
    """Jet of the bump at ``(x, t)``.

    ``domain`` maps the physical interval affinely onto [0, 1]; the returned
    ``dx`` is with respect to the physical coordinate.
    """
    a, b = domain
    xs = (np.asarray(x, dtype=float) - a) / (b - a)
    t = np.asarray(t, dtype=float)
    chi, dchi = fn.chi(0.5 * (t + fn.s))
    rx, drx = fn.rho(xs - fn.y)
    rt, drt = fn.rho(t - fn.s)
    value = chi * rx * rt
    dx = chi * drx * rt / (b - a)
    dt = 0.5 * dchi * rx * rt + chi * rx * drt
    if np.ndim(value) == 0:
        return Jet(float(value), float(dx), float(dt))
    return Jet(value, dx, dt)


def _window(centre, half, lo, hi, n):
    return np.linspace(max(lo, centre - half), min(hi, centre + half), n)


def seminorm_estimate(fn: AnalyticTestFn, p=np.inf, grid_n=200, half_width=10.0):
    """``W^{1,p}`` seminorm of the bump on ``[0, 1] x [0, T]``.

    The bump is negligible (relative size below 1e-8) farther than
    ``half_width / beta`` from its centre, so the tensor grid of
    ``grid_n x grid_n`` nodes covers only that window.
    """
    if grid_n < 100:
        raise ConfigurationError("grid_n must be at least 100")
    half = half_width / fn.beta
    xs = _window(fn.y, half, 0.0, 1.0, grid_n)
    ts = _window(fn.s, half, 0.0, fn.T, grid_n)
    jet = analytic_test_fn(fn, xs[None, :], ts[:, None])
    gx, gt = np.abs(jet.dx), np.abs(jet.dt)
    if np.isinf(p):
        return float(max(gx.max(), gt.max()))
    integrand = gx ** p + gt ** p
    return float(np.trapezoid(np.trapezoid(integrand, xs, axis=1), ts) ** (1.0 / p))


def kernel_mass(fn: AnalyticTestFn, y=None):
    """``int_0^1 rho(x - y) dx`` by adaptive quadrature."""
    y = fn.y if y is None else y
    w = 10.0 / fn.beta
    pts = [p for p in (y - w, y, y + w) if 0 < p < 1]
    val, _ = integrate.quad(lambda x: float(fn.rho(x - y)[0]), 0.0, 1.0, points=pts, limit=500,
                            epsabs=1e-12, epsrel=1e-10)
    return val


def entropy_residual_quadrature(u, phi_jet, c, flux, xs, ts):
    """Tensor-trapezoid value of ``-int int (|u - c| phi_t + Q[u; c] phi_x)``.

    ``u`` and the ``phi_jet`` components are arrays of shape ``(len(ts), len(xs))``.
    """
    integrand = np.abs(u - c) * phi_jet.dt + kruzkhov_Q(flux, u, c) * phi_jet.dx
    return float(-np.trapezoid(np.trapezoid(integrand, xs, axis=1), ts))
