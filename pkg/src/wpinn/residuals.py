"""Fluxes, Kruzkhov entropy flux and the pointwise residual integrands.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ContractViolation


@dataclass(frozen=True)
class FluxSpec:
    """Flux ``f`` with derivative, a Lipschitz bound on ``value_range``.

    ``sonic_point`` is the minimiser of a convex flux; the Godunov solver
    needs it to evaluate the exact Riemann flux.
    """

    f: Callable
    f_prime: Callable
    lipschitz_const: float
    value_range: tuple = (-1.0, 1.0)
    sonic_point: float = 0.0
    name: str = "custom"


def burgers_flux(value_range=(-1.0, 1.0)) -> FluxSpec:
    lo, hi = value_range
    return FluxSpec(f=lambda u: 0.5 * np.square(u), f_prime=lambda u: np.asarray(u, dtype=float) * 1.0,
                    lipschitz_const=float(max(abs(lo), abs(hi))), value_range=(lo, hi),
                    sonic_point=0.0, name="burgers")


def zero_flux() -> FluxSpec:
    return FluxSpec(f=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                    f_prime=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                    lipschitz_const=0.0, name="zero")


@dataclass(frozen=True)
class EntropyCSet:
    c_min: float
    c_max: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError("the c-grid needs at least one value")
        if self.c_max < self.c_min:
            raise ConfigurationError("c_max must not be below c_min")

    @property
    def values(self):
        if self.count == 1:
            return np.array([self.c_min])
        return np.linspace(self.c_min, self.c_max, self.count)

    @classmethod
    def from_range(cls, lo, hi, count=10, widen=0.1):
        """Grid over ``[lo, hi]`` widened by ``widen`` of its length on each side."""
        pad = widen * (hi - lo)
        return cls(lo - pad, hi + pad, count)


@dataclass(frozen=True)
class SmoothedAbsConfig:
    eta: float = 0.0

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigurationError("eta must be nonnegative")


EXACT_ABS = SmoothedAbsConfig(0.0)


def kruzkhov_Q(flux: FluxSpec, u, c):
    """Entropy flux ``sgn(u - c) (f(u) - f(c))`` with ``sgn(0) = 0``."""
    return np.sign(np.subtract(u, c)) * (flux.f(u) - flux.f(c))


def kruzkhov_Q_du(flux: FluxSpec, u, c):
    """Derivative of ``kruzkhov_Q`` in ``u`` away from ``u == c``."""
    return np.sign(np.subtract(u, c)) * flux.f_prime(u)


def smoothed_abs(cfg: SmoothedAbsConfig, x):
    """``(|x|_eta, d/dx |x|_eta)``; ``eta == 0`` gives ``(|x|, sgn x)``."""
    x = np.asarray(x, dtype=float) if np.ndim(x) else float(x)
    if cfg.eta == 0:
        return np.abs(x), np.sign(x)
    r = np.sqrt(np.square(x) + cfg.eta ** 2)
    return r, x / r


def smoothed_abs_second(cfg: SmoothedAbsConfig, x):
    """Second derivative of ``|x|_eta`` (zero almost everywhere when exact)."""
    if cfg.eta == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return cfg.eta ** 2 / (np.square(x) + cfg.eta ** 2) ** 1.5


def interior_integrand(flux: FluxSpec, u_jet, phi_jet, c, abs_cfg: SmoothedAbsConfig = EXACT_ABS):
    """``phi * d/dt|u - c| - Q[u; c] * phi_x`` at matching points."""
    _, dabs = smoothed_abs(abs_cfg, np.subtract(u_jet.value, c))
    return phi_jet.value * dabs * u_jet.dt - kruzkhov_Q(flux, u_jet.value, c) * phi_jet.dx


def naive_weak_integrand(flux: FluxSpec, u_jet, phi_jet):
    """Integrand of the standard weak form: ``u_t * phi - f(u) * phi_x``."""
    return u_jet.dt * phi_jet.value - flux.f(u_jet.value) * phi_jet.dx


def temporal_boundary_residual(u_net, preset, x):
    """``u_net(x, 0) - u_0(x)``; ``u_net`` is a callable ``(x, t) -> values``."""
    x = np.asarray(x, dtype=float)
    a, b = preset.domain
    if np.any((x < a) | (x > b)):
        raise ContractViolation("temporal boundary points must lie in the spatial domain")
    return u_net(x, np.zeros_like(x)) - preset.initial(x)


def spatial_boundary_residual(u_net, preset, x, t):
    """``u_net(x, t) - g(x, t)`` with ``x`` on the domain faces."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    a, b = preset.domain
    if np.any((x != a) & (x != b)):
        raise ContractViolation("spatial boundary points must have x on a domain face")
    if np.any((t < 0) | (t > preset.T)):
        raise ContractViolation("spatial boundary times must lie in [0, T]")
    return u_net(x, t) - preset.boundary(x, t)


def boundary_residuals(u_net, preset, point, kind=None):
    """Signed mismatch between network and data at one boundary point.

    ``point`` is ``x`` (temporal boundary) or ``(x, t)``; for ``t == 0`` the
    point is on the temporal boundary, for ``x`` on a face it is spatial.
    """
    if np.ndim(point) == 0:
        kind = kind or "tb"
        x, t = float(point), 0.0
    else:
        x, t = map(float, point)
        if kind is None:
            a, b = preset.domain
            kind = "sb" if x in (a, b) and t > 0 else "tb"
    if kind == "tb":
        if t != 0:
            raise ContractViolation("temporal boundary points need t = 0")
        return float(temporal_boundary_residual(u_net, preset, np.array([x]))[0])
    if kind == "sb":
        return float(spatial_boundary_residual(u_net, preset, np.array([x]), np.array([t]))[0])
    raise ValueError(f"unknown boundary kind {kind!r}")
