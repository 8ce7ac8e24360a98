import math

import numpy as np
import pytest

from stagetune.plant import (
    AuvPlant,
    IntegratorConfig,
    KinematicSingularityError,
    NumericDomainError,
    SystemModel,
    THETA_GUARD,
)


def oracle_derivative(plant: AuvPlant, x, u):
    """Independent re-implementation: rotation matrices built by explicit
    matrix products, restoring terms from the buoyancy-torque cross product."""
    phi, theta, psi = x[3], x[4], x[5]
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    Rx = np.array([[1, 0, 0], [0, cph, -sph], [0, sph, cph]])
    Ry = np.array([[cth, 0, sth], [0, 1, 0], [-sth, 0, cth]])
    Rz = np.array([[cps, -sps, 0], [sps, cps, 0], [0, 0, 1]])
    R = Rz @ Ry @ Rx
    T = np.array([
        [1.0, sph * sth / cth, cph * sth / cth],
        [0.0, cph, -sph],
        [0.0, sph / cth, cph / cth],
    ])
    nu = x[6:]
    eta_dot = np.concatenate([R @ nu[:3], T @ nu[3:]])

    W, B = plant.weight_n, plant.buoyancy_n
    zoff = plant.buoyancy_offset_m
    # down-pointing unit vector in body coordinates; CB sits zoff above CG
    down = np.array([-sth, cth * sph, cth * cph])
    force = (W - B) * down
    torque = np.cross(np.array([0.0, 0.0, -zoff]), -B * down)
    g = np.concatenate([-force, -torque])
    nu_dot = (u - plant.linear_damping * nu - plant.quadratic_damping * nu * np.abs(nu) - g) / plant.inertia
    return np.concatenate([eta_dot, nu_dot])


@pytest.fixture(scope="module")
def plant():
    return AuvPlant()


class TestDerivative:
    def test_equilibrium(self, plant):
        assert np.array_equal(plant.derivative(np.zeros(12), np.zeros(6)), np.zeros(12))

    def test_decoupled_surge_force(self, plant):
        u = np.array([12.0, 0, 0, 0, 0, 0])
        xdot = plant.derivative(np.zeros(12), u)
        expected = np.zeros(12)
        expected[6] = 12.0 / plant.inertia[0]
        assert np.allclose(xdot, expected, atol=1e-14)

    def test_matches_independent_reimplementation(self, plant):
        rng = np.random.default_rng(42)
        for _ in range(200):
            x = rng.normal(size=12)
            x[4] = rng.uniform(-1.0, 1.0)  # keep |theta| < 1
            u = rng.normal(scale=30.0, size=6)
            got = plant.derivative(x, u)
            want = oracle_derivative(plant, x, u)
            assert np.allclose(got, want, rtol=1e-8, atol=1e-10)

    def test_energy_balance_finite_difference(self, plant):
        # d/dt (0.5 nu' M nu) must equal nu' (u - D nu - Dq nu|nu| - g)
        rng = np.random.default_rng(3)
        x = rng.normal(scale=0.3, size=12)
        u = rng.normal(scale=10.0, size=6)
        h = 1e-5
        ke = plant.kinetic_energy
        dke_fd = (ke(plant.step(x, u, h)) - ke(x)) / h
        nu = x[6:]
        power = float(nu @ (plant.inertia * plant.derivative(x, u)[6:]))
        assert dke_fd == pytest.approx(power, rel=1e-3)

    def test_rejects_nonfinite(self, plant):
        x = np.zeros(12)
        x[0] = np.nan
        with pytest.raises(NumericDomainError):
            plant.derivative(x, np.zeros(6))
        with pytest.raises(NumericDomainError):
            plant.derivative(np.zeros(12), np.full(6, np.inf))

    def test_singularity_guard(self, plant):
        x = np.zeros(12)
        x[4] = math.pi / 2 - 1e-9
        with pytest.raises(KinematicSingularityError):
            plant.derivative(x, np.zeros(6))
        assert not plant.state_ok(x)
        x[4] = THETA_GUARD - 1e-9
        assert plant.state_ok(x)


class _ScalarDecay(SystemModel):
    """1-state test system xdot = -x."""

    n_x = 1
    n_u = 1

    def __init__(self):
        self.C = np.array([[1.0]])
        self.input_lo = np.array([-np.inf])
        self.input_hi = np.array([np.inf])

    def derivative(self, x, u):
        return -x


class TestStep:
    def test_equilibrium_fixed_point(self, plant):
        x = plant.step(np.zeros(12), np.zeros(6), 0.05)
        assert np.array_equal(x, np.zeros(12))

    def test_exponential_decay_closed_form(self):
        sys = _ScalarDecay()
        x1 = sys.step(np.array([1.0]), np.array([0.0]), 0.1)
        assert x1[0] == pytest.approx(math.exp(-0.1), abs=1e-7)

    def test_convergence_order(self, plant):
        # Step-halving on a 1 s integration window against an h/64 reference.
        rng = np.random.default_rng(7)
        x0 = rng.normal(scale=0.2, size=12)
        u = rng.normal(scale=15.0, size=6)
        horizon = 1.0

        def integrate(h):
            n = int(round(horizon / h))
            return plant.advance_sample(x0, u, h, n)

        ref = integrate(0.05 / 64)
        errs = [np.linalg.norm(integrate(h) - ref) for h in (0.05, 0.025)]
        order = math.log2(errs[0] / errs[1])
        assert order >= 3.9
        # spec example: halving h reduces the error roughly 16-fold
        assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.35)

    def test_rejects_nonpositive_step(self, plant):
        with pytest.raises(ValueError):
            plant.step(np.zeros(12), np.zeros(6), 0.0)


class TestMeasure:
    def test_selects_position_attitude(self, plant):
        x = np.zeros(12)
        x[:3] = [1.0, 2.0, 3.0]
        x[3:6] = [0.1, 0.2, 0.3]
        x[6:] = 99.0  # unmeasured
        assert np.array_equal(plant.measure(x), np.array([1.0, 2.0, 3.0, 0.1, 0.2, 0.3]))

    def test_zero(self, plant):
        assert np.array_equal(plant.measure(np.zeros(12)), np.zeros(6))

    def test_permuted_rows_permute_output(self, plant):
        class Permuted(SystemModel):
            n_x = 12
            n_u = 6

            def __init__(self, C):
                self.C = C

        perm = [5, 0, 3, 1, 4, 2]
        C = np.zeros((6, 12))
        for row, col in enumerate(perm):
            C[row, col] = 1.0
        sys = Permuted(C)
        sys._check_measurement_matrix()
        x = np.arange(12.0)
        assert np.array_equal(sys.measure(x), x[perm])

    def test_unmeasured_components_do_not_leak(self, plant):
        x = np.zeros(12)
        y0 = plant.measure(x)
        x_perturbed = x.copy()
        x_perturbed[6:] = 123.0
        assert np.array_equal(plant.measure(x_perturbed), y0)

    def test_invalid_measurement_matrix_rejected(self):
        class Bad(SystemModel):
            n_x = 3
            n_u = 1

            def __init__(self):
                self.C = np.array([[1.0, 1.0, 0.0]])

        with pytest.raises(ValueError):
            Bad()._check_measurement_matrix()


class TestEnergy:
    def test_kinetic_energy_decays_without_restoring(self):
        # zero buoyancy offset removes the only energy source at u = 0
        plant = AuvPlant(buoyancy_offset_m=0.0)
        rng = np.random.default_rng(11)
        for _ in range(5):
            x = rng.normal(scale=0.5, size=12)
            x[4] = 0.3 * rng.standard_normal()
            energies = [plant.kinetic_energy(x)]
            for _ in range(200):
                x = plant.advance_sample(x, np.zeros(6), 0.01, 10)
                energies.append(plant.kinetic_energy(x))
            diffs = np.diff(energies)
            assert np.all(diffs <= 1e-12)

    def test_kinetic_energy_decays_from_level_attitude(self):
        plant = AuvPlant()
        x = np.zeros(12)
        x[6:9] = [1.5, -0.8, 0.6]  # linear velocities only, zero attitude
        energies = [plant.kinetic_energy(x)]
        for _ in range(300):
            x = plant.advance_sample(x, np.zeros(6), 0.01, 10)
            energies.append(plant.kinetic_energy(x))
        assert np.all(np.diff(energies) <= 1e-12)
        # level attitude is preserved: no restoring excitation
        assert np.allclose(x[3:6], 0.0, atol=1e-15)


class TestConstruction:
    def test_zero_trajectory_at_neutral_equilibrium(self, plant):
        x = np.zeros(12)
        for _ in range(50):
            x = plant.advance_sample(x, np.zeros(6), 0.01, 10)
        assert np.array_equal(x, np.zeros(12))

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            AuvPlant(inertia=np.array([0.0, 30, 30, 5, 5, 5]))
        with pytest.raises(ValueError):
            AuvPlant(linear_damping=np.array([-1.0, 20, 30, 3, 3, 3]))
        with pytest.raises(ValueError):
            AuvPlant(force_limit_n=0.0)

    def test_integrator_config(self):
        assert IntegratorConfig(substeps=10).substeps == 10
        with pytest.raises(ValueError):
            IntegratorConfig(substeps=0)
        with pytest.raises(ValueError):
            IntegratorConfig(method="euler")

    def test_input_limits(self, plant):
        assert np.array_equal(plant.input_hi, np.array([200.0] * 3 + [50.0] * 3))
        assert np.array_equal(plant.input_lo, -plant.input_hi)
