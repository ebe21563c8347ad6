"""Entropy-residual losses, the min-max training loop and ensemble selection.

The loop alternates ``n_max`` Adam ascent steps on the test-function
network ``xi`` (maximising the worst entropy residual over a grid of
constants ``c``) with ``n_min`` descent steps on the solution network.
The test-function network is re-drawn every ``round(reset_frequency *
epochs)`` epochs.

Training arithmetic runs in float32 by default (``precision``); the
parameters and the Adam moments are always kept in float64 and every
network pass works on a float32 copy.
"""
from __future__ import annotations

import csv
import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .autodiff_net import (GradientBuffer, NetworkParams, OptimizerState, backprop, evaluate, forward,
                           init_params, optimizer_step, save_params)
from .errors import ConfigurationError, EnsembleFailed, TrainingDiverged
from .residuals import EntropyCSet, SmoothedAbsConfig, smoothed_abs, smoothed_abs_second
from .sampling import CollocationSets, sample
from .testfunctions import CutoffSpec, apply_cutoff, cutoff

RESIDUALS = ("entropy", "naive")
PLACEMENTS = ("pde", "boundary")


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of one training run.

    ``lambda_placement == "boundary"`` (the default) descends on
    ``J_max + lam * J_u``; ``"pde"`` descends on ``lam * J_max + J_u``.
    ``counts`` and ``sampler`` left as ``None`` take the preset's values.
    """

    hidden_layers_theta: int = 4
    width_theta: int = 20
    hidden_layers_eta: int = 2
    width_eta: int = 10
    activation_theta: str = "sin"
    activation_eta: str = "tanh"
    lam: float = 10.0
    tau_theta: float = 0.01
    tau_eta: float = 0.015
    n_max: int = 6
    n_min: int = 1
    epochs: int = 5000
    reset_frequency: float = 0.025
    c_count: int = 10
    c_widen: float = 0.1
    counts: tuple | None = None
    sampler: str | None = None
    seed: int = 0
    collocation_seed: int = 1000
    optimizer: str = "adam"
    denominator_floor: float = 1e-10
    residual: str = "entropy"
    lambda_placement: str = "boundary"
    abs_eta: float = 0.0
    ramp_width: float | None = None
    precision: str = "float32"

    def __post_init__(self):
        for name in ("hidden_layers_theta", "width_theta", "hidden_layers_eta", "width_eta"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("lam", "tau_theta", "tau_eta", "denominator_floor"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.n_max < 0 or self.n_min < 0 or self.epochs < 0:
            raise ConfigurationError("n_max, n_min and epochs must be nonnegative")
        if not 0 < self.reset_frequency <= 1:
            raise ConfigurationError("reset_frequency must lie in (0, 1]")
        if self.epochs and self.reset_interval < 1:
            raise ConfigurationError("round(reset_frequency * epochs) must be at least 1")
        if self.residual not in RESIDUALS:
            raise ConfigurationError(f"residual must be one of {RESIDUALS}")
        if self.lambda_placement not in PLACEMENTS:
            raise ConfigurationError(f"lambda_placement must be one of {PLACEMENTS}")
        if self.precision not in ("float32", "float64"):
            raise ConfigurationError("precision must be float32 or float64")
        if self.sampler not in (None, "uniform", "sobol"):
            raise ConfigurationError(f"unknown sampler {self.sampler!r}")
        if self.counts is not None:
            object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.c_count < 1:
            raise ConfigurationError("c_count must be positive")

    @property
    def widths_theta(self):
        return (2, *[self.width_theta] * self.hidden_layers_theta, 1)

    @property
    def widths_eta(self):
        return (2, *[self.width_eta] * self.hidden_layers_eta, 1)

    @property
    def reset_interval(self):
        return int(round(self.reset_frequency * self.epochs))

    @property
    def weights(self):
        """``(w_pde, w_u)`` multiplying ``J_max`` and ``J_u`` in the descent target."""
        return (self.lam, 1.0) if self.lambda_placement == "pde" else (1.0, self.lam)

    def with_updates(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        d = asdict(self)
        d["counts"] = list(self.counts) if self.counts is not None else None
        return d

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def derived_seed(*keys):
    """Deterministic 63-bit seed from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence(list(keys)).generate_state(2, np.uint64)[0] >> np.uint64(1))


def c_grid_for(preset, config: TrainingConfig) -> EntropyCSet:
    lo, hi = preset.essential_range
    return EntropyCSet.from_range(lo, hi, config.c_count, config.c_widen)


def collocation_for(preset, config: TrainingConfig) -> CollocationSets:
    counts = config.counts or preset.counts
    sampler = config.sampler or preset.sampler
    return sample(sampler, preset.domain, preset.T, counts, config.collocation_seed)


def _cast(params: NetworkParams, dtype) -> NetworkParams:
    if params.weights[0].dtype == dtype:
        return params
    return NetworkParams(params.layer_widths, [W.astype(dtype) for W in params.weights],
                         [b.astype(dtype) for b in params.biases], params.activation)


def _to64(g: GradientBuffer) -> GradientBuffer:
    return GradientBuffer([w.astype(np.float64) for w in g.weights], [b.astype(np.float64) for b in g.biases])


@dataclass
class PdeTerms:
    """Intermediates of ``J_pde`` at one ``c``."""

    value: float
    residuals: np.ndarray
    numerator_sum: float
    denominator: float
    degenerate: bool


class LossModel:
    """Collocation data plus the cached per-point quantities of the losses.

    Holds the interior points, the cutoff values there, the stacked boundary
    points with their target data, and the ``c`` grid, all in one dtype.
    """

    def __init__(self, preset, collocation: CollocationSets, c_values, residual="entropy",
                 abs_cfg=SmoothedAbsConfig(0.0), floor=1e-10, ramp_width=None, dtype=np.float64):
        if residual not in RESIDUALS:
            raise ConfigurationError(f"residual must be one of {RESIDUALS}")
        self.preset = preset
        self.flux = preset.flux
        self.residual = residual
        self.abs_cfg = abs_cfg
        self.floor = floor
        self.dtype = np.dtype(dtype)
        self.c = np.asarray(c_values, dtype=float)
        if self.c.size < 1:
            raise ConfigurationError("the c-grid must not be empty")
        pts = np.asarray(collocation.interior, dtype=float)
        if len(pts) == 0:
            raise ConfigurationError("interior set must not be empty")
        self.interior = pts
        self.xi_points = pts.astype(self.dtype)
        omega, domega = cutoff(CutoffSpec(preset.domain, ramp_width), pts[:, 0])
        self.omega = omega.astype(self.dtype)
        self.domega = domega.astype(self.dtype)
        tb = np.asarray(collocation.temporal_boundary, dtype=float)
        sb = np.asarray(collocation.spatial_boundary, dtype=float).reshape(-1, 2)
        self.n_tb = len(tb)
        self.bnd_points = np.concatenate([np.column_stack([tb, np.zeros_like(tb)]), sb]).astype(self.dtype)
        self.bnd_target = np.concatenate([preset.initial(tb), preset.boundary(sb[:, 0], sb[:, 1])]).astype(self.dtype)
        self.fc = np.asarray(self.flux.f(self.c), dtype=float)

    # -- network passes ------------------------------------------------------

    def u_pass(self, theta):
        return forward(theta, self.xi_points[:, 0], self.xi_points[:, 1], jet=True)

    def phi_pass(self, eta):
        xi, tape = forward(eta, self.xi_points[:, 0], self.xi_points[:, 1], jet=True)
        return apply_cutoff(self.omega, self.domega, xi), tape

    # -- interior loss -------------------------------------------------------

    def _fu(self, u):
        return np.asarray(self.flux.f(u), dtype=u.dtype)

    def _fpu(self, u):
        return np.asarray(self.flux.f_prime(u), dtype=u.dtype)

    def residual_at(self, u_jet, phi_jet, c):
        """Per-point interior residual at one ``c``."""
        u = u_jet.value
        if self.residual == "naive":
            return u_jet.dt * phi_jet.value - self._fu(u) * phi_jet.dx
        d = u - u.dtype.type(c)
        _, dabs = smoothed_abs(self.abs_cfg, d)
        q = np.sign(d) * (self._fu(u) - u.dtype.type(self.flux.f(c)))
        return phi_jet.value * dabs.astype(u.dtype, copy=False) * u_jet.dt - q * phi_jet.dx

    def sums_over_c(self, u_jet, phi_jet, sign_cache=None):
        """``sum_m r(y_m, c)`` for every ``c`` of the grid, vectorised over the grid."""
        if self.residual == "naive":
            s = float(np.sum(self.residual_at(u_jet, phi_jet, 0.0), dtype=np.float64))
            return np.full(self.c.size, s)
        sg, dabs = sign_cache if sign_cache is not None else self.sign_matrices(u_jet)
        a = phi_jet.value * u_jet.dt
        b = self._fu(u_jet.value) * phi_jet.dx
        s = dabs @ a - sg @ b + self.fc.astype(a.dtype) * (sg @ phi_jet.dx)
        return s.astype(np.float64)

    def sign_matrices(self, u_jet):
        u = u_jet.value
        d = u[None, :] - self.c.astype(u.dtype)[:, None]
        sg = np.sign(d)
        if self.abs_cfg.eta == 0:
            return sg, sg
        return sg, smoothed_abs(self.abs_cfg, d)[1].astype(u.dtype)

    def denominator(self, phi_jet):
        return float(np.dot(phi_jet.dx.astype(np.float64), phi_jet.dx.astype(np.float64)))

    def j_over_c(self, u_jet, phi_jet, sign_cache=None):
        """``(J per c, index of the max, denominator, residual sums per c)``.

        The first index wins ties.
        """
        s = self.sums_over_c(u_jet, phi_jet, sign_cache)
        den = self.denominator(phi_jet)
        vals = np.maximum(s, 0.0) ** 2 / max(den, self.floor)
        return vals, int(np.argmax(vals)), den, s

    def pde_terms(self, u_jet, phi_jet, c):
        r = self.residual_at(u_jet, phi_jet, c)
        s = float(np.sum(r, dtype=np.float64))
        den = self.denominator(phi_jet)
        return PdeTerms(max(s, 0.0) ** 2 / max(den, self.floor), r, s, den, den < self.floor)

    def _gate(self, s, den):
        """``(dJ/dS, dJ/dD)`` of ``relu(S)^2 / max(D, floor)``."""
        deff = max(den, self.floor)
        rs = max(s, 0.0)
        return 2.0 * rs / deff, (-(rs * rs) / (deff * deff) if den > self.floor else 0.0)

    def cotangents(self, u_jet, phi_jet, c, s, den):
        """Per-point cotangents of ``J_pde(c)`` on ``(phi, phi_x)`` and ``(u, u_t)``."""
        g_s, g_d = self._gate(s, den)
        dt = u_jet.value.dtype
        g_s, g_d = dt.type(g_s), dt.type(g_d)
        u = u_jet.value
        if self.residual == "naive":
            fu = self._fu(u)
            d_phi = g_s * u_jet.dt
            d_phix = -g_s * fu + 2 * g_d * phi_jet.dx
            d_ut = g_s * phi_jet.value
            d_u = -g_s * self._fpu(u) * phi_jet.dx
            return d_phi, d_phix, d_u, d_ut
        d = u - dt.type(c)
        sg = np.sign(d)
        _, dabs = smoothed_abs(self.abs_cfg, d)
        dabs = dabs.astype(dt, copy=False)
        q = sg * (self._fu(u) - dt.type(self.flux.f(c)))
        d_phi = g_s * dabs * u_jet.dt
        d_phix = -g_s * q + 2 * g_d * phi_jet.dx
        d_ut = g_s * phi_jet.value * dabs
        d_u = -g_s * sg * self._fpu(u) * phi_jet.dx
        if self.abs_cfg.eta > 0:
            d_u = d_u + g_s * phi_jet.value * u_jet.dt * smoothed_abs_second(self.abs_cfg, d).astype(dt)
        return d_phi, d_phix, d_u, d_ut

    def eta_grad(self, eta, xi_tape, d_phi, d_phix):
        d_xi = self.omega * d_phi + self.domega * d_phix
        return backprop(eta, xi_tape, d_xi, self.omega * d_phix, None)

    # -- boundary loss -------------------------------------------------------

    def boundary_pass(self, theta):
        vals, tape = forward(theta, self.bnd_points[:, 0], self.bnd_points[:, 1], jet=False)
        return vals - self.bnd_target, tape

    def split_boundary(self, res):
        return res[:self.n_tb], res[self.n_tb:]

    def j_u(self, res):
        return float(np.dot(res.astype(np.float64), res.astype(np.float64)))

    # -- full objectives (used by the trainer and the gradient checks) --------

    def descent_loss_and_grad(self, theta, eta, w_pde=10.0, w_u=1.0, u_pass=None, phi_pass=None,
                              sign_cache=None):
        """``w_pde * J_max + w_u * J_u`` and its gradient w.r.t. ``theta``."""
        u_jet, u_tape = u_pass if u_pass is not None else self.u_pass(theta)
        phi_jet, _ = phi_pass if phi_pass is not None else self.phi_pass(eta)
        vals, k, den, s = self.j_over_c(u_jet, phi_jet, sign_cache)
        _, _, d_u, d_ut = self.cotangents(u_jet, phi_jet, self.c[k], s[k], den)
        g = backprop(theta, u_tape, w_pde * d_u, None, w_pde * d_ut)
        res, b_tape = self.boundary_pass(theta)
        g = g + backprop(theta, b_tape, (2.0 * w_u) * res)
        ju = self.j_u(res)
        return w_pde * vals[k] + w_u * ju, g, {"J_pde": float(vals[k]), "J_u": ju, "c_index": k,
                                                 "degenerate": den < self.floor}

    def ascent_loss_and_grad(self, theta, eta, u_pass=None, phi_pass=None, sign_cache=None):
        """``J_max`` and its gradient w.r.t. ``eta`` (at the maximising ``c``)."""
        u_jet, _ = u_pass if u_pass is not None else self.u_pass(theta)
        phi_jet, xi_tape = phi_pass if phi_pass is not None else self.phi_pass(eta)
        vals, k, den, s = self.j_over_c(u_jet, phi_jet, sign_cache)
        d_phi, d_phix, _, _ = self.cotangents(u_jet, phi_jet, self.c[k], s[k], den)
        return float(vals[k]), self.eta_grad(eta, xi_tape, d_phi, d_phix), k


# Public loss functions -------------------------------------------------------

def loss_J_pde(u_params, xi_params, cutoff_spec, flux_preset, c, interior, residual="entropy",
               abs_cfg=SmoothedAbsConfig(0.0), floor=1e-10) -> tuple:
    """``relu(sum r)^2 / max(sum phi_x^2, floor)`` at one ``c``.

    ``flux_preset`` is an experiment preset (it carries the flux and the
    domain); returns ``(value, PdeTerms)``.
    """
    sets = CollocationSets(np.asarray(interior, dtype=float).reshape(-1, 2), np.zeros((0, 2)), np.zeros(0))
    model = LossModel(flux_preset, sets, [c], residual, abs_cfg, floor, cutoff_spec.ramp_width,
                      u_params.weights[0].dtype)
    u_jet, _ = model.u_pass(u_params)
    phi_jet, _ = model.phi_pass(xi_params)
    terms = model.pde_terms(u_jet, phi_jet, c)
    return terms.value, terms


def loss_J_u(u_params, preset, sb_points, tb_points) -> float:
    """Unnormalised sum of squared temporal and spatial boundary mismatches."""
    tb = np.asarray(tb_points, dtype=float)
    sb = np.asarray(sb_points, dtype=float).reshape(-1, 2)
    r_tb = evaluate(u_params, tb, np.zeros_like(tb)) - preset.initial(tb)
    r_sb = evaluate(u_params, sb[:, 0], sb[:, 1]) - preset.boundary(sb[:, 0], sb[:, 1])
    return float(np.sum(np.square(r_tb)) + np.sum(np.square(r_sb)))


def J_max_over_C(u_params, xi_params, cutoff_spec, preset, c_grid, interior, residual="entropy",
                 abs_cfg=SmoothedAbsConfig(0.0), floor=1e-10):
    """``(max_c J_pde, argmax c)``; the lowest ``c`` wins ties."""
    values = c_grid.values if isinstance(c_grid, EntropyCSet) else np.asarray(c_grid, dtype=float)
    best, best_c = -1.0, None
    for c in values:
        v, _ = loss_J_pde(u_params, xi_params, cutoff_spec, preset, c, interior, residual, abs_cfg, floor)
        if v > best:
            best, best_c = v, float(c)
    return best, best_c


# Training ---------------------------------------------------------------------

@dataclass
class LossHistory:
    epoch: list = field(default_factory=list)
    J_pde: list = field(default_factory=list)
    J_u: list = field(default_factory=list)
    c_star: list = field(default_factory=list)
    reset: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    COLUMNS = ("epoch", "J_pde", "J_u", "c_star", "reset", "degenerate")

    def append(self, epoch, j_pde, j_u, c, reset, degenerate):
        self.epoch.append(epoch)
        self.J_pde.append(j_pde)
        self.J_u.append(j_u)
        self.c_star.append(c)
        self.reset.append(bool(reset))
        self.degenerate.append(bool(degenerate))

    def __len__(self):
        return len(self.epoch)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(self.epoch, self.J_pde, self.J_u, self.c_star, self.reset, self.degenerate):
                e, jp, ju, c, r, d = row
                w.writerow([e, f"{jp:.17g}", f"{ju:.17g}", f"{c:.17g}", int(r), int(d)])
        return Path(path)


@dataclass
class TrainedModel:
    theta_star: NetworkParams
    eta_star: NetworkParams
    c_star: float
    final_training_error: float
    loss_history: LossHistory
    seed: int
    config: TrainingConfig
    preset_id: str = ""
    collocation: CollocationSets | None = None
    wall_time: float = 0.0

    def predict(self, x, t):
        return evaluate(self.theta_star, x, t)


def selection_criterion(model: TrainedModel, collocation: CollocationSets, preset) -> float:
    """Squared interior residuals at ``(theta*, eta*, c*)`` plus squared boundary mismatches."""
    cfg = model.config
    lm = LossModel(preset, collocation, [model.c_star], cfg.residual, SmoothedAbsConfig(cfg.abs_eta),
                   cfg.denominator_floor, cfg.ramp_width, np.float64)
    u_jet, _ = lm.u_pass(model.theta_star)
    phi_jet, _ = lm.phi_pass(model.eta_star)
    r = lm.residual_at(u_jet, phi_jet, model.c_star)
    res, _ = lm.boundary_pass(model.theta_star)
    return float(np.dot(r, r) + np.dot(res, res))


def _final_c(lm: LossModel, theta, eta):
    u_jet, _ = lm.u_pass(theta)
    phi_jet, _ = lm.phi_pass(eta)
    _, k, _, _ = lm.j_over_c(u_jet, phi_jet)
    return float(lm.c[k])


def _check(value, epoch, what):
    if not np.isfinite(value):
        raise TrainingDiverged(epoch, f"non-finite {what}")


def train_one(config: TrainingConfig, preset, collocation: CollocationSets | None = None,
              progress=None) -> TrainedModel:
    """One min-max training run; deterministic in ``config.seed`` and the collocation set.

    ``progress`` is an optional callable receiving ``(epoch, J_pde, J_u)``.
    """
    start = time.perf_counter()
    if collocation is None:
        collocation = collocation_for(preset, config)
    dtype = np.float32 if config.precision == "float32" else np.float64
    c_grid = c_grid_for(preset, config)
    abs_cfg = SmoothedAbsConfig(config.abs_eta)
    lm = LossModel(preset, collocation, c_grid.values, config.residual, abs_cfg, config.denominator_floor,
                   config.ramp_width, dtype)
    theta = init_params(config.widths_theta, config.activation_theta, derived_seed(config.seed, 0))
    eta = init_params(config.widths_eta, config.activation_eta, derived_seed(config.seed, 1))
    opt_theta = OptimizerState(config.optimizer, config.tau_theta)
    opt_eta = OptimizerState(config.optimizer, config.tau_eta)
    w_pde, w_u = config.weights
    history = LossHistory()
    interval = config.reset_interval
    phi_cache = None   # (eta compute copy, phi pass); valid until eta changes

    for e in range(1, config.epochs + 1):
        reset = e % interval == 0
        if reset:
            eta = init_params(config.widths_eta, config.activation_eta, derived_seed(config.seed, 2, e))
            opt_eta.reset()
            phi_cache = None
        theta_c = _cast(theta, dtype)
        u_pass = lm.u_pass(theta_c)
        signs = lm.sign_matrices(u_pass[0]) if config.residual == "entropy" else None
        for _ in range(config.n_max):
            eta_c = _cast(eta, dtype)
            phi_pass = phi_cache or lm.phi_pass(eta_c)
            j, g, _ = lm.ascent_loss_and_grad(theta_c, eta_c, u_pass, phi_pass, signs)
            _check(j, e, "J_pde during ascent")
            eta, opt_eta = optimizer_step(eta, _to64(g), opt_eta, "ascend", epoch=e)
            phi_cache = None
        eta_c = _cast(eta, dtype)
        if phi_cache is None:
            phi_cache = lm.phi_pass(eta_c)
        info = None
        for k in range(config.n_min):
            if k > 0:
                theta_c = _cast(theta, dtype)
                u_pass = lm.u_pass(theta_c)
                signs = lm.sign_matrices(u_pass[0]) if config.residual == "entropy" else None
            _, g, info = lm.descent_loss_and_grad(theta_c, eta_c, w_pde, w_u, u_pass, phi_cache, signs)
            _check(info["J_pde"] + info["J_u"], e, "loss during descent")
            theta, opt_theta = optimizer_step(theta, _to64(g), opt_theta, "descend", epoch=e)
        if info is None:
            vals, kc, den, _ = lm.j_over_c(u_pass[0], phi_cache[0], signs)
            res, _ = lm.boundary_pass(theta_c)
            info = {"J_pde": float(vals[kc]), "J_u": lm.j_u(res), "c_index": kc, "degenerate": den < lm.floor}
        history.append(e, info["J_pde"], info["J_u"], float(lm.c[info["c_index"]]), reset, info["degenerate"])
        if progress is not None:
            progress(e, info["J_pde"], info["J_u"])

    if not (theta.all_finite() and eta.all_finite()):
        raise TrainingDiverged(config.epochs, "non-finite parameters")
    lm64 = LossModel(preset, collocation, c_grid.values, config.residual, abs_cfg, config.denominator_floor,
                     config.ramp_width, np.float64)
    model = TrainedModel(theta, eta, _final_c(lm64, theta, eta), 0.0, history, config.seed, config,
                         preset.id, collocation)
    model.final_training_error = selection_criterion(model, collocation, preset)
    _check(model.final_training_error, config.epochs, "training error")
    model.wall_time = time.perf_counter() - start
    return model


def save_model(model: TrainedModel, directory) -> Path:
    """Write both checkpoints and the loss log into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_params(model.theta_star, d / "theta.bin")
    save_params(model.eta_star, d / "eta.bin")
    model.loss_history.to_csv(d / "loss.csv")
    return d


# Ensembles ----------------------------------------------------------------------

HYPERPARAMETER_GRIDS = {
    "table1": {"hidden_layers_theta": (4, 6), "hidden_layers_eta": (2, 4), "activation_eta": ("sin", "tanh"),
               "n_max": (6, 8), "reset_frequency": (0.001, 0.005, 0.025, 0.05)},
    "table2": {"hidden_layers_theta": (4, 6), "hidden_layers_eta": (2, 4), "activation_eta": ("sin", "tanh"),
               "n_max": (6, 8), "reset_frequency": (0.025, 0.05, 0.25)},
}


def config_grid(base: TrainingConfig, grid="table2"):
    """``{label: config}`` over the Cartesian product of a named or explicit grid."""
    axes = HYPERPARAMETER_GRIDS[grid] if isinstance(grid, str) else grid
    if isinstance(grid, str) and grid not in HYPERPARAMETER_GRIDS:
        raise ConfigurationError(f"unknown grid {grid!r}")
    names = list(axes)
    out = {}
    for combo in itertools.product(*(axes[n] for n in names)):
        kw = dict(zip(names, combo))
        label = ",".join(f"{k}={v}" for k, v in kw.items())
        out[label] = base.with_updates(**kw)
    return out


@dataclass
class RunOutcome:
    index: int
    seed: int
    model: TrainedModel | None
    diverged: bool
    message: str = ""


@dataclass
class EnsembleResult:
    label: str
    config: TrainingConfig
    runs: list                      # RunOutcome, one per retraining

    @property
    def models(self):
        return [r.model for r in self.runs if not r.diverged]

    @property
    def n_diverged(self):
        return sum(r.diverged for r in self.runs)

    @property
    def mean_criterion(self):
        m = self.models
        return float(np.mean([x.final_training_error for x in m])) if m else float("inf")

    def predict(self, x, t):
        return average_predict(self, x, t)


@dataclass
class EnsembleSelection:
    results: dict                   # label -> EnsembleResult
    best_label: str

    @property
    def best(self) -> EnsembleResult:
        return self.results[self.best_label]


def _run_job(args):
    label, index, config, preset_id = args
    from .oracles import get_preset
    preset = get_preset(preset_id)
    try:
        return label, RunOutcome(index, config.seed, train_one(config, preset), False)
    except TrainingDiverged as exc:
        return label, RunOutcome(index, config.seed, None, True, str(exc))


def _limit_threads():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def run_ensemble(configs, n_theta, preset, base_seed=0, threads=1, on_run=None) -> EnsembleSelection:
    """Retrain every config ``n_theta`` times and select by the mean criterion.

    Run ``i`` of a config uses parameter seed ``base_seed + i`` and
    collocation seed ``config.collocation_seed + i``.  Diverged runs are
    kept in the result but excluded from means; a config with no surviving
    run is excluded from selection.  ``on_run(label, outcome)`` is called as
    runs finish.
    """
    if isinstance(configs, TrainingConfig):
        configs = {"config": configs}
    if not configs:
        raise ConfigurationError("the configuration grid is empty")
    if n_theta < 1:
        raise ConfigurationError("n_theta must be at least 1")
    jobs = []
    for label, cfg in configs.items():
        for i in range(n_theta):
            run_cfg = cfg.with_updates(seed=base_seed + i, collocation_seed=cfg.collocation_seed + i)
            jobs.append((label, i, run_cfg, preset.id))
    outcomes = {label: [None] * n_theta for label in configs}
    if threads > 1 and len(jobs) > 1:
        _limit_threads()
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for label, out in pool.map(_run_job, jobs):
                outcomes[label][out.index] = out
                if on_run:
                    on_run(label, out)
    else:
        for job in jobs:
            label, out = _run_job(job)
            outcomes[label][out.index] = out
            if on_run:
                on_run(label, out)
    results = {label: EnsembleResult(label, configs[label], outcomes[label]) for label in configs}
    alive = [label for label in configs if results[label].models]
    if not alive:
        raise EnsembleFailed("every run of every configuration diverged")
    best = min(alive, key=lambda label: results[label].mean_criterion)   # first label wins ties
    return EnsembleSelection(results, best)


def average_predict(ensemble, x, t):
    """Pointwise mean and sample standard deviation over the surviving runs."""
    models = ensemble.models if hasattr(ensemble, "models") else list(ensemble)
    if not models:
        raise EnsembleFailed("no trained runs to average")
    preds = np.stack([np.asarray(m.predict(x, t), dtype=float) for m in models])
    mean = preds.mean(axis=0)
    std = preds.std(axis=0, ddof=1) if len(models) > 1 else np.zeros_like(mean)
    return mean, std
