"""Numerical property sweeps behind the ``check-lemmas`` command.

Each check returns a ``CheckResult``; ``run_lemma_checks`` runs them all.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracles import exact_solution, get_preset
from .residuals import SmoothedAbsConfig, burgers_flux, kruzkhov_Q, smoothed_abs
from .testfunctions import AnalyticTestFn, analytic_test_fn, entropy_residual_quadrature, kernel_mass, seminorm_estimate

EPSILONS = (0.2, 0.1, 0.05)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def check_smoothed_abs(n=100_000, seed=0):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.uniform(-10, 10, n // 2), rng.normal(0, 1e-2, n - n // 2)])
    worst_gap, worst_slope, ok = 0.0, 0.0, True
    for eta in (1.0, 0.1, 1e-2, 1e-3):
        val, der = smoothed_abs(SmoothedAbsConfig(eta), x)
        gap = val - np.abs(x)
        ok &= bool(np.all(gap >= 0) and np.all(gap <= eta) and np.all(np.abs(der) <= 1))
        worst_gap = max(worst_gap, float(np.max(gap / eta)))
        worst_slope = max(worst_slope, float(np.max(np.abs(der))))
    return CheckResult("smoothed abs bounds", ok,
                       f"{n} samples, max gap/eta {worst_gap:.3g}, max |slope| {worst_slope:.3g}")


def check_q_lipschitz(n=10_000, seed=1):
    flux = burgers_flux((-1.0, 1.0))
    rng = np.random.default_rng(seed)
    u, v, c = rng.uniform(-1, 1, (3, n))
    ratio = np.abs(kruzkhov_Q(flux, u, c) - kruzkhov_Q(flux, v, c)) / np.maximum(np.abs(u - v), 1e-300)
    worst = float(ratio.max())
    bound = 3 * flux.lipschitz_const
    return CheckResult("entropy flux Lipschitz", worst <= bound, f"{n} triples, max ratio {worst:.4g} <= {bound:g}")


def check_q_symmetry(n=10_000, seed=2):
    flux = burgers_flux((-1.0, 1.0))
    rng = np.random.default_rng(seed)
    u, c = rng.uniform(-1, 1, (2, n))
    diff = float(np.max(np.abs(kruzkhov_Q(flux, u, c) - kruzkhov_Q(flux, c, u))))
    return CheckResult("entropy flux symmetry", diff == 0.0, f"{n} pairs, max |Q(u,c) - Q(c,u)| = {diff:g}")


def check_chi_endpoint(T=1.0):
    vals = {eps: float(AnalyticTestFn(0.5, 0.5, eps, T).chi(eps)[0]) for eps in EPSILONS}
    ok = all(v <= eps for eps, v in vals.items())
    return CheckResult("time window at t = eps", ok,
                       ", ".join(f"eps={e}: {v:.3g}" for e, v in vals.items()))


def check_kernel_mass(T=1.0, centres=(0.3, 0.5, 0.7), quad_tol=1e-9):
    """The mass over the real line is exactly 2, so the upper bound carries the quadrature tolerance."""
    masses = {}
    ok = True
    for eps in EPSILONS:
        fn = AnalyticTestFn(0.5, 0.5, eps, T)
        m = [kernel_mass(fn, y) for y in centres]
        ok &= all(1 - eps <= v <= 2 + quad_tol for v in m)
        masses[eps] = (min(m), max(m))
    return CheckResult("mollifier mass in [1 - eps, 2]", ok,
                       ", ".join(f"eps={e}: [{lo:.6f}, {hi:.6f}]" for e, (lo, hi) in masses.items()))


def check_seminorm_band(T=1.0, grid_n=200, band=100.0):
    ratios = [seminorm_estimate(AnalyticTestFn(0.5, 0.5, eps, T), np.inf, grid_n) / AnalyticTestFn(0.5, 0.5, eps, T).beta ** 3
              for eps in EPSILONS]
    spread = max(ratios) / min(ratios)
    return CheckResult("W1,inf seminorm / beta^3", bool(spread <= band and min(ratios) > 0),
                       "ratios " + ", ".join(f"{r:.4g}" for r in ratios) + f" (spread {spread:.3g})")


def run_lemma_checks():
    return [check_smoothed_abs(), check_q_lipschitz(), check_q_symmetry(), check_chi_endpoint(),
            check_kernel_mass(), check_seminorm_band()]


def entropy_residual_scan(u_fn, preset, fn: AnalyticTestFn, c_values, xs, ts):
    """Residual quadrature of the bump ``fn`` for each ``c`` on the tensor grid ``xs x ts``.

    ``fn`` lives on the unit square; ``xs`` are physical coordinates.
    """
    X, Tt = np.meshgrid(xs, ts)
    u = u_fn(X, Tt)
    phi = analytic_test_fn(fn, X, Tt, preset.domain)
    return np.array([entropy_residual_quadrature(u, phi, c, preset.flux, xs, ts) for c in c_values])


def moving_shock_scan(n=400, eps=0.1, x_centre=0.25, s=0.25, c_values=None):
    """The residual on a full ``n x n`` grid of the moving-shock preset."""
    preset = get_preset("moving_shock")
    a, b = preset.domain
    fn = AnalyticTestFn((x_centre - a) / (b - a), s, eps, preset.T)
    c_values = np.linspace(-0.1, 1.1, 10) if c_values is None else c_values
    xs = np.linspace(a, b, n)
    ts = np.linspace(0.0, preset.T, n)
    return c_values, entropy_residual_scan(lambda x, t: exact_solution(preset, x, t), preset, fn, c_values, xs, ts)
