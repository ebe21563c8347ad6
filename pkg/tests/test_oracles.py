import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wpinn.errors import ConfigurationError, ContractViolation
from wpinn.oracles import (PRESET_IDS, Reference, exact_solution, fv_init, fv_solve, fv_snapshots, get_preset,
                           godunov_flux, l1_distance, relative_errors, sine_solution)
from wpinn.residuals import burgers_flux

# foot-point root of xi - t sin(pi xi) = |x| solved to 30 digits with an independent root finder
SINE_VALUES = [
    (0.5, 0.2, -0.85813038392297545),
    (0.3, 0.25, -0.98900265266389695),
    (-0.7, 0.1, 0.66866413421803213),
    (0.9, 0.8, -0.089386649469236955),
    (0.05, 1.0, -0.70220085273312689),
]


def test_presets():
    assert set(PRESET_IDS) == {"standing_shock", "moving_shock", "rarefaction", "sine"}
    assert get_preset("sine").sampler == "sobol" and get_preset("sine").T == 1.0
    assert get_preset("moving_shock").grid == "table1"
    with pytest.raises(ConfigurationError):
        get_preset("blast_wave")


def test_step_solutions():
    ss, ms, rf = (get_preset(p) for p in ("standing_shock", "moving_shock", "rarefaction"))
    assert exact_solution(ss, -0.2, 0.4) == 1.0 and exact_solution(ss, 0.2, 0.4) == -1.0
    assert exact_solution(ms, 0.2, 0.5) == 1.0 and exact_solution(ms, 0.26, 0.5) == 0.0
    assert exact_solution(rf, 0.1, 0.5) == pytest.approx(0.2)
    assert exact_solution(rf, -0.9, 0.5) == -1.0 and exact_solution(rf, 0.9, 0.5) == 1.0
    np.testing.assert_array_equal(exact_solution(rf, np.array([-0.5, 0.5]), 0.0), [-1.0, 1.0])


def test_sine_has_no_closed_form():
    with pytest.raises(ContractViolation):
        exact_solution(get_preset("sine"), 0.0, 0.5)


@pytest.mark.parametrize("x,t,u", SINE_VALUES)
def test_sine_characteristics(x, t, u):
    assert sine_solution(x, t) == pytest.approx(u, abs=1e-12)


def test_sine_symmetry_and_boundary():
    x = np.linspace(-1, 1, 41)
    for t in (0.0, 0.2, 0.6, 1.0):
        u = sine_solution(x, t)
        np.testing.assert_allclose(u, -u[::-1], atol=1e-14)
        assert u[20] == 0.0
        assert abs(u[0]) < 1e-12 and abs(u[-1]) < 1e-12


def test_sine_domain():
    with pytest.raises(ContractViolation):
        sine_solution(1.5, 0.1)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-1, 1), t=st.floats(0.01, 1.0))
def test_sine_satisfies_characteristic_relation(x, t):
    u = sine_solution(x, t)
    assert u == pytest.approx(-np.sin(np.pi * (x - u * t)), abs=1e-9)


def test_godunov_flux_cases():
    f = burgers_flux()
    assert godunov_flux(f, 1.0, 0.0) == 0.5       # shock moving right
    assert godunov_flux(f, -1.0, 1.0) == 0.0      # transonic rarefaction
    assert godunov_flux(f, 1.0, -1.0) == 0.5      # standing shock
    assert godunov_flux(f, -0.5, -1.0) == 0.5     # left-moving shock


def test_fv_arguments():
    p = get_preset("rarefaction")
    with pytest.raises(ConfigurationError):
        fv_init(p, 8)
    with pytest.raises(ConfigurationError):
        fv_init(p, 64, cfl=1.2)


def test_fv_conservation_and_max_principle():
    p = get_preset("sine")
    records = []

    def check(grid, u_old, dt, f_in, f_out):
        expected = np.sum(u_old) * grid.dx + dt * (f_in - f_out)
        records.append((abs(grid.mass - expected), grid.u.min(), grid.u.max()))

    fv_solve(p, 512, t_end=0.6, callback=check)
    err, lo, hi = np.array(records).T
    assert err.max() < 1e-14
    assert lo.min() >= -1 and hi.max() <= 1


def test_fv_moving_shock_position():
    p = get_preset("moving_shock")
    g = fv_solve(p, 2048)
    jump = g.x[np.argmin(np.abs(g.u - 0.5))]
    assert abs(jump - 0.25) < 2 * g.dx


def test_fv_matches_characteristics_on_sine():
    p = get_preset("sine")
    x, rows = fv_snapshots(p, 4096, [0.25, 0.75])
    for t, row in zip((0.25, 0.75), rows):
        assert l1_distance(row, sine_solution(x, t), x) < 2e-3


def test_reference_kinds():
    with pytest.raises(ConfigurationError):
        Reference(get_preset("rarefaction"), "characteristics")
    ref = Reference(get_preset("sine"), fv_cells=2048)
    x = np.array([-0.5, 0.5])
    np.testing.assert_allclose(ref(x, 0.2), sine_solution(x, 0.2), atol=5e-3)


def test_relative_errors_of_exact_solution_vanish():
    p = get_preset("rarefaction")
    e_t, e = relative_errors(lambda x, t: exact_solution(p, x, t), p)
    assert e_t == 0.0 and e == 0.0


def test_relative_errors_of_zero_predictor_is_one():
    p = get_preset("standing_shock")
    e_t, e = relative_errors(lambda x, t: np.zeros(np.shape(x)), p)
    assert e_t == pytest.approx(1.0) and e == pytest.approx(1.0)
