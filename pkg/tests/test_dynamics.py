import math

import numpy as np
import pytest

from trapscope.controls import (
    constant,
    integral,
    random_direction,
    sample_midpoints,
    zero,
)
from trapscope.dynamics import (
    _kernel_midpoint_A1N,
    closed_form_AlN,
    dyson_forms,
    dyson_resum_defect,
    kernel_bruteforce_A1N,
    kernel_form_A1N,
    objective,
    propagate,
)
from trapscope.errors import (
    DomainError,
    GridMismatch,
    NonConvergence,
    NotUnitary,
    TooExpensive,
)
from trapscope.model import build_instance, build_observable, build_system, v_matrix
from trapscope.numerics import spectral_norm_hermitian, unitarity_defect

TWO_PI = 2 * math.pi


def n3_system(omega=1.0, horizon=TWO_PI):
    return build_system(3, omega, 0.0, (1.0, 1.0), horizon)


def n3_instance(omega=1.0, horizon=TWO_PI):
    return build_instance(n3_system(omega, horizon), build_observable((1.0, -1.0, 0.0)))


def n4_system(horizon=TWO_PI):
    return build_system(4, 1.0, 0.0, (1.0, 1.0, 1.0), horizon)


# ---------------------------------------------------------------- propagate


def test_propagate_free_evolution_is_diagonal_phase():
    sys = n3_system()
    u = propagate(sys, zero(TWO_PI, 32))
    expected = np.diag(np.exp(-1j * TWO_PI * np.array([1.0, 0.0, 0.0])))
    assert np.max(np.abs(u - expected)) <= 1e-12


def test_propagate_initial_state_is_free_eigenstate():
    sys = n3_system(horizon=math.pi)
    u = propagate(sys, zero(math.pi, 16))
    assert abs(abs(u[2, 2]) - 1.0) <= 1e-12


def test_propagate_short_horizon_near_identity():
    sys = n3_system(horizon=1e-9)
    u = propagate(sys, constant(1.0, 1e-9, 1))
    assert np.max(np.abs(u - np.eye(3))) <= 1e-8


def test_propagate_grid_mismatch():
    with pytest.raises(GridMismatch):
        propagate(n3_system(), zero(1.0, 8))


def test_propagate_unitarity_random_controls():
    sys = n3_system()
    for seed in range(25):
        f = random_direction(seed, 64, TWO_PI, amplitude=2.0)
        assert unitarity_defect(propagate(sys, f)) <= 1e-10 * 3 * 64


# ---------------------------------------------------------------- objective


def test_objective_identity_and_free_evolution():
    inst = n3_instance()
    assert objective(np.eye(3, dtype=complex), inst) == 0.0
    assert abs(objective(propagate(inst.system, zero(TWO_PI, 32)), inst)) <= 1e-12


def test_objective_rejects_non_unitary():
    inst = n3_instance()
    with pytest.raises(NotUnitary):
        objective(2 * np.eye(3, dtype=complex), inst)


def test_objective_within_kinematic_bounds():
    inst = n3_instance()
    lam = inst.observable.eigenvalues
    lo, hi = min(lam), max(lam)
    for seed in range(1000):
        f = random_direction(seed, 16, TWO_PI, amplitude=2.5)
        j = objective(propagate(inst.system, f), inst)
        assert lo - 1e-12 <= j <= hi + 1e-12


# ---------------------------------------------------------------- dyson forms


def test_dyson_zero_control_vanishes():
    forms = dyson_forms(n3_system(), zero(TWO_PI, 32), n_max=4, substeps=4)
    assert np.max(np.abs(forms.table[1:])) == 0.0
    assert list(forms.table[0]) == [0.0, 0.0, 1.0]


def test_dyson_first_order_nearest_neighbour():
    sys = n3_system()
    for seed in (0, 5):
        f = random_direction(seed, 64, TWO_PI, amplitude=1.3)
        forms = dyson_forms(sys, f, n_max=1, substeps=4)
        # <N-1|V_t|N> = v_{N-1} carries no phase, so A^1 = v_{N-1} int f
        assert abs(forms.value(1, 2) - integral(f)) <= 1e-12


def test_dyson_matches_kernel_value_for_cos():
    # continuum value of the order-2 form at omega=2 is i*pi/2; the
    # midpoint-sampled control reproduces it to its own O(h^2) sampling error
    sys = build_system(3, 2.0, 0.0, (1.0, 1.0), TWO_PI)
    f = sample_midpoints(math.cos, TWO_PI, 256)
    forms = dyson_forms(sys, f, n_max=2, substeps=8, verify=True)
    assert abs(forms.value(2, 1) - 1j * math.pi / 2) <= 1e-4


def test_dyson_homogeneity():
    sys = n3_system()
    f = random_direction(21, 32, TWO_PI, amplitude=0.9)
    base = dyson_forms(sys, f, n_max=4, substeps=16)
    for t in (-1.0, 0.5, 2.0):
        scaled = dyson_forms(sys, f.scaled(t), n_max=4, substeps=16)
        for n in range(5):
            for l in range(1, 4):
                want = t**n * base.value(n, l)
                have = scaled.value(n, l)
                assert abs(have - want) <= 1e-9 * max(1.0, abs(want))


def test_dyson_top_row_vanishes_below_reach():
    # A^n at l = 1 requires at least N-1 interaction steps
    for sys, top in ((n3_system(), 2), (n4_system(), 3)):
        f = random_direction(33, 32, TWO_PI, amplitude=1.0)
        forms = dyson_forms(sys, f, n_max=top, substeps=16)
        for n in range(0, top):
            assert abs(forms.value(n, 1)) <= 1e-10


def test_dyson_matches_closed_forms_below_threshold():
    for sys in (n3_system(), n4_system()):
        nlev = sys.levels
        for seed in (2, 3):
            f = random_direction(seed, 32, TWO_PI, amplitude=0.8)
            forms = dyson_forms(sys, f, n_max=nlev - 1, substeps=32)
            for l in range(2, nlev + 1):
                for n in range(1, nlev):
                    want = closed_form_AlN(sys, f, l, n)
                    assert abs(forms.value(n, l) - want) <= 1e-9 * max(1.0, abs(want))


def test_dyson_parameter_validation():
    sys = n3_system()
    f = zero(TWO_PI, 8)
    with pytest.raises(DomainError):
        dyson_forms(sys, f, n_max=0)
    with pytest.raises(DomainError):
        dyson_forms(sys, f, n_max=2, substeps=0)
    with pytest.raises(GridMismatch):
        dyson_forms(sys, zero(1.0, 8), n_max=2)


def test_dyson_verify_raises_when_budget_exhausted():
    sys = n3_system()
    f = random_direction(3, 16, TWO_PI, amplitude=1.0)
    with pytest.raises(NonConvergence):
        dyson_forms(sys, f, n_max=2, substeps=8, verify=True, max_substeps=8)


def test_dyson_verify_records_convergence():
    sys = n3_system()
    f = random_direction(3, 32, TWO_PI, amplitude=0.5)
    forms = dyson_forms(sys, f, n_max=3, substeps=8, verify=True)
    assert forms.converged
    assert forms.last_rel_change < 1e-9
    assert forms.substeps >= 16


# ---------------------------------------------------------------- closed form


def test_closed_form_vanishes_on_mean_zero():
    sys = n3_system()
    f = random_direction(4, 32, TWO_PI, mean_zero=True)
    for l in (2, 3):
        for n in (1, 2):
            assert abs(closed_form_AlN(sys, f, l, n)) <= 1e-15


def test_closed_form_single_step():
    sys = n3_system()
    f = random_direction(6, 32, TWO_PI, amplitude=1.0)
    assert closed_form_AlN(sys, f, 2, 1) == pytest.approx(integral(f), abs=1e-15)


def test_closed_form_four_level_example():
    sys = build_system(4, 1.0, 0.0, (1.0, 1.0, 1.0), 1.0)
    f = constant(1.0, 1.0, 16)
    # <2|V^2|4> = v_2 v_3 = 1, so the value is 1/2! * (int f)^2 = 1/2
    assert closed_form_AlN(sys, f, 2, 2) == pytest.approx(0.5, abs=1e-15)


def test_closed_form_domain_errors():
    sys = n3_system()
    f = zero(TWO_PI, 8)
    with pytest.raises(DomainError):
        closed_form_AlN(sys, f, 1, 2)
    with pytest.raises(DomainError):
        closed_form_AlN(sys, f, 2, 3)


# ---------------------------------------------------------------- kernel forms


def test_kernel_form_zero_control():
    assert kernel_form_A1N(n3_system(), zero(TWO_PI, 32)) == 0.0


def test_kernel_form_cos_frequency_orthogonality():
    # int_0^{2pi} e^{is} cos(s) sin(s) ds = 0
    sys = n3_system(omega=1.0)
    f = sample_midpoints(math.cos, TWO_PI, 256)
    assert abs(kernel_form_A1N(sys, f)) <= 1e-4


def test_kernel_form_cos_resonant():
    # int_0^{2pi} e^{2is} cos(s) sin(s) ds = i pi / 2
    sys = build_system(3, 2.0, 0.0, (1.0, 1.0), TWO_PI)
    f = sample_midpoints(math.cos, TWO_PI, 256)
    assert abs(kernel_form_A1N(sys, f) - 1j * math.pi / 2) <= 1e-4


def test_bruteforce_matches_kernel_form():
    for nlev in (3, 4):
        sys = build_system(nlev, 1.0, 0.0, (1.0,) * (nlev - 1), TWO_PI)
        for seed in range(5):
            f = random_direction(seed, 32, TWO_PI, mean_zero=True, amplitude=0.9)
            a = kernel_form_A1N(sys, f)
            b = kernel_bruteforce_A1N(sys, f)
            assert abs(a - b) <= 1e-8 * (1.0 + abs(a))


def test_bruteforce_matches_plain_midpoint_quadrature():
    # the exact-per-cell enumeration against a no-tricks O(h^2) midpoint rule
    sys = n3_system()
    for seed in (1, 8):
        f = random_direction(seed, 16, TWO_PI, mean_zero=True, amplitude=1.0)
        exact = kernel_bruteforce_A1N(sys, f)
        coarse = _kernel_midpoint_A1N(sys, f, subdiv=8)
        assert abs(exact - coarse) <= 2e-3 * (1.0 + abs(exact))


def test_bruteforce_cost_guard():
    sys = build_system(6, 1.0, 0.0, (1.0,) * 5, TWO_PI)
    with pytest.raises(TooExpensive):
        kernel_bruteforce_A1N(sys, zero(TWO_PI, 8))
    with pytest.raises(TooExpensive):
        kernel_bruteforce_A1N(n3_system(), zero(TWO_PI, 128))


def test_triple_consistency_dyson_kernel_bruteforce():
    for nlev in (3, 4):
        sys = build_system(nlev, 1.0, 0.0, (1.0,) * (nlev - 1), TWO_PI)
        f = random_direction(50 + nlev, 32, TWO_PI, mean_zero=True, amplitude=0.8)
        forms = dyson_forms(sys, f, n_max=nlev - 1, substeps=8, verify=True)
        a_dyson = forms.value(nlev - 1, 1)
        a_kernel = kernel_form_A1N(sys, f)
        a_brute = kernel_bruteforce_A1N(sys, f)
        assert abs(a_kernel - a_brute) <= 1e-8 * (1.0 + abs(a_kernel))
        assert abs(a_dyson - a_kernel) <= 1e-7 * (1.0 + abs(a_kernel))


# ---------------------------------------------------------------- resummation


def test_resum_defect_zero_control():
    assert dyson_resum_defect(n3_system(), zero(TWO_PI, 32), n_max=4) <= 1e-12


def test_resum_defect_small_control_under_remainder_bound():
    sys = n3_system()
    vnorm = spectral_norm_hermitian(v_matrix(sys))
    for seed in range(3):
        f = random_direction(seed, 64, TWO_PI, amplitude=0.1)
        int_abs = f.dt * float(np.sum(np.abs(f.as_array())))
        defect = dyson_resum_defect(sys, f, n_max=8, substeps=16)
        bound = (vnorm * int_abs) ** 9 / math.factorial(9) + 1e-10
        assert defect < 1e-10
        assert defect <= bound


def test_resum_defect_decreases_with_order():
    sys = n3_system()
    f = random_direction(12, 64, TWO_PI, amplitude=0.3)
    defects = [dyson_resum_defect(sys, f, n_max=n, substeps=16) for n in (2, 4, 6, 8)]
    for lo, hi in zip(defects[1:], defects[:-1]):
        assert lo <= hi * 1.01 + 1e-13
