"""Burgers experiment presets and their exact or reference solutions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ContractViolation, OracleFailure
from .residuals import FluxSpec, burgers_flux

PRESET_IDS = ("standing_shock", "moving_shock", "rarefaction", "sine")


@dataclass(frozen=True)
class ExperimentPreset:
    id: str
    T: float
    initial: Callable
    boundary: Callable
    essential_range: tuple
    flux: FluxSpec = field(default_factory=burgers_flux)
    domain: tuple = (-1.0, 1.0)
    counts: tuple = (16384, 4096, 4096)    # (M_int, M_sb, M_tb)
    sampler: str = "uniform"
    grid: str = "table2"
    n_theta: int = 10
    epochs: int = 5000
    has_closed_form: bool = True


def _step(left, right):
    def u0(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, left, right)
    return u0


def _sine_initial(x):
    return -np.sin(np.pi * np.asarray(x, dtype=float))


def _make_presets():
    presets = {}
    for pid, (left, right), grid in [("standing_shock", (1.0, -1.0), "table2"),
                                     ("moving_shock", (1.0, 0.0), "table1"),
                                     ("rarefaction", (-1.0, 1.0), "table2")]:
        presets[pid] = ExperimentPreset(
            id=pid, T=0.5, initial=_step(left, right),
            boundary=(lambda pid: lambda x, t: exact_solution(PRESETS[pid], x, t))(pid),
            essential_range=(min(left, right), max(left, right)), grid=grid)
    presets["sine"] = ExperimentPreset(
        id="sine", T=1.0, initial=_sine_initial,
        boundary=lambda x, t: np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape),
        essential_range=(-1.0, 1.0), sampler="sobol", n_theta=15, epochs=75000,
        has_closed_form=False)
    return presets


def get_preset(pid) -> ExperimentPreset:
    try:
        return PRESETS[pid]
    except KeyError:
        raise ConfigurationError(f"unknown preset {pid!r}; choose from {', '.join(PRESET_IDS)}") from None


def exact_solution(preset: ExperimentPreset, x, t):
    """Closed-form entropy solution; left state at the discontinuity."""
    if not preset.has_closed_form:
        raise ContractViolation(f"preset {preset.id!r} has no closed form; use sine_solution")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    if preset.id == "standing_shock":
        out = np.where(x <= 0.0, 1.0, -1.0)
    elif preset.id == "moving_shock":
        out = np.where(x <= 0.5 * t, 1.0, 0.0)
    elif preset.id == "rarefaction":
        with np.errstate(divide="ignore", invalid="ignore"):
            fan = np.where(t > 0, x / np.where(t > 0, t, 1.0), 0.0)
        out = np.where(x <= -t, -1.0, np.where(x <= t, fan, 1.0))
        out = np.where(t == 0, preset.initial(x), out)
    else:  # pragma: no cover
        raise ContractViolation(f"no closed form for {preset.id!r}")
    return out if out.ndim else float(out)


def sine_solution(x, t, tol=1e-12, max_iter=100):
    """Entropy solution for ``u_0 = -sin(pi x)`` on [-1, 1] by characteristics.

    For ``x > 0`` the foot ``xi`` of the characteristic solves
    ``xi - t sin(pi xi) = x`` on the branch where that map increases (after
    breaking time ``1/pi`` the stationary shock at ``x = 0`` hides the other
    branch).  A safeguarded Newton iteration starts from the foot implied by
    ``u = u_0(x)``.  Odd symmetry gives ``x < 0``; ``x = 0`` returns 0.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    if np.any(np.abs(x) > 1) or np.any(t < 0):
        raise ContractViolation("sine_solution is defined on [-1, 1] x [0, inf)")
    xa = np.abs(x).ravel()
    tt = t.ravel()
    out = np.zeros_like(xa)
    active = xa > 0
    pt = np.pi * tt
    lo = np.where(pt > 1, np.arccos(np.minimum(1.0, 1.0 / np.maximum(pt, 1e-300))) / np.pi, 0.0)
    hi = np.ones_like(xa)
    xi = np.clip(xa + tt * np.sin(np.pi * xa), lo, hi)
    for _ in range(max_iter):
        m = xi - tt * np.sin(np.pi * xi) - xa
        u = -np.sin(np.pi * xi)
        resid = np.abs(u + np.sin(np.pi * (xa - u * tt)))
        done = ~active | ((resid < tol) & (np.abs(m) < tol))
        if np.all(done):
            break
        lo = np.where(m < 0, xi, lo)
        hi = np.where(m > 0, xi, hi)
        dm = 1.0 - pt * np.cos(np.pi * xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = xi - m / dm
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        xi = np.where(done, xi, np.where(bad, 0.5 * (lo + hi), step))
    else:
        raise OracleFailure(f"characteristic Newton iteration did not converge in {max_iter} steps")
    out[active] = -np.sin(np.pi * xi[active])
    out = (np.sign(x).ravel() * out).reshape(x.shape)
    out = np.where(t == 0, _sine_initial(x), out)
    return out if out.ndim else float(out)


# -- finite volumes ------------------------------------------------------------

@dataclass
class FVGrid:
    n_cells: int
    cfl: float
    x: np.ndarray          # cell centres
    dx: float
    u: np.ndarray          # cell averages
    time: float = 0.0
    steps: int = 0

    @property
    def mass(self):
        return float(np.sum(self.u) * self.dx)


def godunov_flux(flux: FluxSpec, ul, ur):
    """Exact Riemann flux for a convex flux with minimiser ``flux.sonic_point``."""
    s = flux.sonic_point
    return np.maximum(flux.f(np.maximum(ul, s)), flux.f(np.minimum(ur, s)))


def _cell_averages(u0, edges, order=8):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    left, right = edges[:-1, None], edges[1:, None]
    pts = 0.5 * (left + right) + 0.5 * (right - left) * nodes
    return 0.5 * np.sum(weights * u0(pts), axis=1)


def fv_init(preset: ExperimentPreset, n_cells, cfl=0.5) -> FVGrid:
    if n_cells < 16:
        raise ConfigurationError("n_cells must be at least 16")
    if not 0 < cfl < 1:
        raise ConfigurationError("cfl must lie in (0, 1)")
    a, b = preset.domain
    edges = np.linspace(a, b, n_cells + 1)
    return FVGrid(n_cells, cfl, 0.5 * (edges[:-1] + edges[1:]), (b - a) / n_cells,
                  _cell_averages(preset.initial, edges))


def fv_advance(grid: FVGrid, preset: ExperimentPreset, t_end, callback=None) -> FVGrid:
    """March ``grid`` in place to ``t_end`` with first-order Godunov steps.

    ``callback(grid, u_old, dt, flux_in, flux_out)`` runs after every step.
    """
    flux = preset.flux
    a, b = preset.domain
    while grid.time < t_end:
        remaining = t_end - grid.time
        gl = float(np.asarray(preset.boundary(a, grid.time)))
        gr = float(np.asarray(preset.boundary(b, grid.time)))
        ext = np.concatenate(([gl], grid.u, [gr]))
        speed = float(np.max(np.abs(flux.f_prime(ext))))
        dt = remaining if speed == 0 else min(remaining, grid.cfl * grid.dx / speed)
        F = godunov_flux(flux, ext[:-1], ext[1:])
        u_old = grid.u
        grid.u = u_old - (dt / grid.dx) * (F[1:] - F[:-1])
        grid.time = t_end if dt == remaining else grid.time + dt
        grid.steps += 1
        if callback is not None:
            callback(grid, u_old, dt, F[0], F[-1])
    return grid


def fv_solve(preset: ExperimentPreset, n_cells, cfl=0.5, t_end=None, callback=None) -> FVGrid:
    """Godunov solution at ``t_end`` (default: the preset's final time)."""
    grid = fv_init(preset, n_cells, cfl)
    return fv_advance(grid, preset, preset.T if t_end is None else t_end, callback)


def fv_snapshots(preset: ExperimentPreset, n_cells, times, cfl=0.5):
    """Cell centres and an array of cell averages, one row per requested time."""
    times = np.asarray(times, dtype=float)
    order = np.argsort(times)
    grid = fv_init(preset, n_cells, cfl)
    rows = np.empty((times.size, n_cells))
    for i in order:
        fv_advance(grid, preset, times[i])
        rows[i] = grid.u
    return grid.x, rows


# -- references and error metrics ----------------------------------------------

class Reference:
    """Callable ``(x, t) -> u`` reference for a preset.

    Closed-form presets use :func:`exact_solution`; the sine preset uses a
    Godunov solution (``fv_cells`` cells) linearly interpolated between cell
    centres, computed on demand for each requested time.
    """

    def __init__(self, preset: ExperimentPreset, kind=None, fv_cells=2 ** 14, cfl=0.5):
        self.preset = preset
        self.kind = kind or ("exact" if preset.has_closed_form else "fv")
        if self.kind not in ("exact", "fv", "characteristics"):
            raise ConfigurationError(f"unknown reference kind {self.kind!r}")
        if self.kind == "characteristics" and preset.id != "sine":
            raise ConfigurationError("the characteristics reference exists only for the sine preset")
        self.fv_cells = fv_cells
        self.cfl = cfl
        self._cache = {}

    def grid(self, x, times):
        """Reference values on the tensor grid, shape ``(len(times), len(x))``."""
        x = np.asarray(x, dtype=float)
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if self.kind == "exact":
            return exact_solution(self.preset, x[None, :], times[:, None])
        if self.kind == "characteristics":
            return sine_solution(x[None, :], times[:, None])
        missing = [t for t in times if float(t) not in self._cache]
        if missing:
            centres, rows = fv_snapshots(self.preset, self.fv_cells, missing, self.cfl)
            self._centres = centres
            for t, row in zip(missing, rows):
                self._cache[float(t)] = row
        return np.stack([np.interp(x, self._centres, self._cache[float(t)]) for t in times])

    def __call__(self, x, t):
        return self.grid(np.atleast_1d(x), [t])[0]


def _trapezoid(y, x, axis=-1):
    return np.trapezoid(y, x, axis=axis)


def relative_errors(predictor, preset: ExperimentPreset, reference=None, quad_n=1000):
    """Relative L1 errors ``(E_r_T, E_r)`` at the final time and over space-time.

    ``predictor(x, t)`` must broadcast over arrays.  The final-time integral is
    a composite trapezoid on ``quad_n`` nodes; the space-time one uses a
    ``quad_n x quad_n/4`` tensor trapezoid.
    """
    if quad_n < 1000:
        raise ConfigurationError("quad_n must be at least 1000")
    ref = reference if reference is not None else Reference(preset)
    a, b = preset.domain
    x = np.linspace(a, b, quad_n)
    ts = np.linspace(0.0, preset.T, quad_n // 4)
    ref_T = _reference_grid(ref, x, [preset.T])[0]
    pred_T = np.asarray(predictor(x, np.full_like(x, preset.T)), dtype=float)
    e_final = _trapezoid(np.abs(pred_T - ref_T), x) / _trapezoid(np.abs(ref_T), x)
    ref_xt = _reference_grid(ref, x, ts)
    pred_xt = np.asarray(predictor(np.broadcast_to(x, ref_xt.shape), np.broadcast_to(ts[:, None], ref_xt.shape)),
                         dtype=float).reshape(ref_xt.shape)
    num = _trapezoid(_trapezoid(np.abs(pred_xt - ref_xt), x, axis=1), ts)
    den = _trapezoid(_trapezoid(np.abs(ref_xt), x, axis=1), ts)
    return float(e_final), float(num / den)


def _reference_grid(ref, x, times):
    if hasattr(ref, "grid"):
        return ref.grid(x, times)
    return np.stack([np.asarray(ref(x, np.full_like(x, t)), dtype=float) for t in times])


def l1_distance(values, other, x):
    return float(_trapezoid(np.abs(np.asarray(values) - np.asarray(other)), x))


PRESETS = _make_presets()
