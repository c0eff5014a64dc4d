import numpy as np
import pytest

from attenpat.wavefield import (
    Ellipse,
    Phantom,
    SensorArray,
    SpectralPropagator,
    TimeGrid,
    WaveData,
    ball_nwave_integrated,
    ball_nwave_oracle,
    disk_phantom,
    make_sensors,
    make_shepp_logan,
    phantom_from_ellipses,
    spectral_forward,
)
from oracles import sphere_mean_indicator


class TestTimeGrid:
    def test_times_exclude_zero(self):
        tg = TimeGrid.from_duration(6.0, 443)
        assert tg.times[0] == pytest.approx(6.0 / 443)
        assert tg.times[-1] == pytest.approx(6.0)
        assert tg.count == 443

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            TimeGrid(dt=0.0, count=10)
        with pytest.raises(ValueError):
            TimeGrid(dt=0.1, count=0)


class TestSensors:
    def test_circle_first_points(self):
        arr = SensorArray.circle(1.7, 4)
        expected = np.array([[1.7, 0.0], [0.0, 1.7], [-1.7, 0.0], [0.0, -1.7]])
        assert np.allclose(arr.points, expected, atol=1e-15)

    def test_circle_radial_normals(self):
        arr = SensorArray.circle(1.7, 48)
        assert np.allclose(np.einsum("ij,ij->i", arr.normals, arr.points), 1.7)

    def test_circle_weights_sum_to_circumference(self):
        arr = SensorArray.circle(1.7, 849)
        assert arr.weights.sum() == pytest.approx(2 * np.pi * 1.7)

    def test_line_span_and_normals(self):
        arr = SensorArray.line(length=10.2, standoff=1.7, count=849)
        assert arr.n == 849
        assert arr.points[:, 0].min() == pytest.approx(-5.1)
        assert arr.points[:, 0].max() == pytest.approx(5.1)
        assert np.all(arr.points[:, 1] == -1.7)
        assert np.all(arr.normals == [0.0, -1.0])

    def test_rejects_nonpositive_geometry(self):
        with pytest.raises(ValueError):
            SensorArray.circle(0.0, 16)
        with pytest.raises(ValueError):
            SensorArray.line(length=-1.0, standoff=1.7, count=16)
        with pytest.raises(ValueError):
            SensorArray.line(length=10.2, standoff=0.0, count=16)

    def test_sphere_on_radius(self):
        arr = SensorArray.sphere_fibonacci(1.7, 500)
        assert np.allclose(np.linalg.norm(arr.points, axis=1), 1.7)
        assert arr.weights.sum() == pytest.approx(4 * np.pi * 1.7**2)

    def test_make_sensors_spec(self):
        arr = make_sensors({"kind": "line", "length": 10.2, "standoff": 1.7, "count": 64})
        assert arr.kind == "line"
        with pytest.raises(ValueError, match="geometry.kind"):
            make_sensors({"kind": "helix"})


class TestSheppLogan:
    def test_max_is_outer_shell_value(self):
        ph = make_shepp_logan(128, half_extent=2.0)
        assert ph.values.max() == pytest.approx(2.0)

    def test_zero_outside_support(self):
        ph = make_shepp_logan(128, half_extent=2.0)
        assert ph.evaluate(np.array(1.5), np.array(1.5)) == 0.0
        assert ph.values[0, 0] == 0.0

    def test_clipping_guard(self):
        with pytest.raises(ValueError):
            make_shepp_logan(128, half_extent=0.5)

    def test_single_ellipse_integral(self):
        # integral of an ellipse indicator is pi*a*b*c
        ph = phantom_from_ellipses(
            [Ellipse(intensity=1.5, center=(0.1, -0.2), axes=(0.5, 0.3), angle_deg=30.0)],
            grid_size=256,
            half_extent=1.0,
        )
        integral = ph.values.sum() * ph.spacing**2
        assert integral == pytest.approx(np.pi * 0.5 * 0.3 * 1.5, rel=0.01)

    def test_interior_plateau_value(self):
        # inside the skull: 2.0 - 0.98 = 1.02
        ph = make_shepp_logan(256, half_extent=1.0)
        idx = int(round((0.0 - ph.origin[0]) / ph.spacing))
        idy = int(round((-0.4 - ph.origin[1]) / ph.spacing))
        assert ph.values[idx, idy] == pytest.approx(1.02)


class TestBallOracle:
    def test_zero_crossing_at_arrival_center(self):
        assert ball_nwave_oracle(0.5, 1.7, 1.7) == 0.0

    def test_leading_edge_value(self):
        assert ball_nwave_oracle(0.5, 1.7, 1.2) == pytest.approx(0.5 / 3.4)
        assert ball_nwave_oracle(0.5, 1.7, 1.2) == pytest.approx(0.14705882352941177)

    def test_outside_support(self):
        assert ball_nwave_oracle(0.5, 1.7, 2.5) == 0.0
        assert ball_nwave_oracle(0.5, 1.7, 0.3) == 0.0

    def test_integrated_peak(self):
        assert ball_nwave_integrated(0.5, 1.7, 1.7) == pytest.approx(0.25 / 6.8)

    def test_derivative_consistency(self):
        # central differences of q reproduce p to O(dt^2) inside the support
        d, r0, h = 1.7, 0.5, 1e-5
        t = np.linspace(1.25, 2.15, 101)
        dq = (ball_nwave_integrated(r0, d, t + h) - ball_nwave_integrated(r0, d, t - h)) / (2 * h)
        assert np.max(np.abs(dq - ball_nwave_oracle(r0, d, t))) < 1e-9

    def test_against_spherical_mean_quadrature(self):
        # independent oracle: q(t) = t * (spherical mean of the indicator)
        r0, d = 0.5, 1.7
        for t in (1.3, 1.7, 2.1):
            mean = sphere_mean_indicator(r0, d, t)
            assert t * mean == pytest.approx(ball_nwave_integrated(r0, d, t), abs=5e-4)

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            ball_nwave_oracle(1.7, 0.5, 1.0)


def _gaussian_phantom(sigma=0.08, n=128, half=1.0):
    axis = -half + 2 * half / n * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    vals = np.exp(-(X**2 + Y**2) / (2 * sigma**2))
    return Phantom(values=vals, spacing=axis[1] - axis[0], origin=(axis[0], axis[0]))


class TestSpectralPropagator:
    def test_zero_phantom_zero_pressure(self):
        ph = Phantom(values=np.zeros((64, 64)), spacing=0.03, origin=(-0.945, -0.945))
        tg = TimeGrid.from_duration(2.0, 40)
        sensors = SensorArray.circle(1.2, 16)
        wave = spectral_forward(ph, tg, sensors)
        assert np.all(wave.values == 0.0)
        assert wave.kind == "pressure"

    def test_single_mode_is_exact(self):
        # initial data cos(k . x) on the periodic grid evolves as cos(|k|t) cos(k . x)
        ph = _gaussian_phantom()
        sensors = SensorArray.circle(1.2, 8)
        prop = SpectralPropagator(ph, sensors, duration=2.0, target_dx=0.02)
        x = prop.axis
        kx = 2 * np.pi * 3 / (prop.size * prop.dx)
        ky = 2 * np.pi * 5 / (prop.size * prop.dx)
        mode = np.cos(np.add.outer(kx * x, ky * x))
        from scipy.fft import rfft2

        prop.h_hat = rfft2(mode)
        for t in (0.0, 0.37, 1.9):
            field = prop.pressure_field(t)
            expect = np.cos(np.hypot(kx, ky) * t) * mode
            assert np.max(np.abs(field - expect)) <= 1e-12

    def test_rotational_symmetry_of_traces(self):
        # sensors on the dihedral orbit of the grid see identical traces
        ph = _gaussian_phantom(sigma=0.15)
        tg = TimeGrid.from_duration(2.0, 60)
        sensors = SensorArray.circle(1.2, 4)
        wave = spectral_forward(ph, tg, sensors, target_dx=0.02)
        spread = wave.values.max(axis=1) - wave.values.min(axis=1)
        assert spread.max() <= 1e-8 * np.abs(wave.values).max()

    def test_energy_invariant_per_mode(self):
        ph = _gaussian_phantom()
        sensors = SensorArray.circle(1.2, 8)
        prop = SpectralPropagator(ph, sensors, duration=2.0, target_dx=0.02)
        k = prop.abs_k

        def mode_energy(t):
            phat = prop.h_hat * np.cos(k * t)
            qhat_scaled = prop.h_hat * np.where(k > 0, np.sin(k * t), 0.0)
            return np.abs(phat) ** 2 + np.abs(qhat_scaled) ** 2

        e1, e2 = mode_energy(0.3), mode_energy(1.7)
        scale = np.abs(prop.h_hat) ** 2 + 1e-300
        assert np.max(np.abs(e1 - e2) / scale) <= 1e-10

    def test_finite_speed_on_grid(self):
        # Gaussian bump: field beyond r + t + margin stays at band-limited noise level
        sigma = 0.08
        ph = _gaussian_phantom(sigma=sigma, n=192, half=1.0)
        sensors = SensorArray.circle(1.2, 8)
        prop = SpectralPropagator(ph, sensors, duration=2.0, target_dx=0.02)
        r_support = 10 * sigma
        t = 1.0
        field = prop.pressure_field(t)
        X, Y = np.meshgrid(prop.axis, prop.axis, indexing="ij")
        outside = np.hypot(X, Y) >= r_support + t + 0.3
        assert np.abs(field[outside]).max() <= 1e-6 * prop.h_max

    def test_integrated_field_dc_mode_is_linear_in_time(self):
        ph = _gaussian_phantom()
        sensors = SensorArray.circle(1.2, 8)
        prop = SpectralPropagator(ph, sensors, duration=2.0, target_dx=0.02)
        f1 = prop.integrated_field(0.5)
        f2 = prop.integrated_field(1.0)
        # DC part of q grows linearly: mean(q(t)) = mean(h) * t
        h_mean = prop.h_hat[0, 0].real / prop.size**2
        assert f1.mean() == pytest.approx(0.5 * h_mean, rel=1e-9)
        assert f2.mean() == pytest.approx(2 * f1.mean(), rel=1e-9)

    def test_sensor_outside_domain_rejected(self):
        ph = _gaussian_phantom()
        sensors = SensorArray.circle(1.2, 8)
        with pytest.raises(ValueError, match="outside"):
            SpectralPropagator(ph, sensors, duration=1.0, target_dx=0.02, side=2.0)


class TestWaveData:
    def test_shape_checked(self):
        tg = TimeGrid.from_duration(1.0, 10)
        sensors = SensorArray.circle(1.0, 4)
        with pytest.raises(ValueError):
            WaveData(np.zeros((10, 5)), tg, sensors, kind="pressure")

    def test_kind_checked(self):
        tg = TimeGrid.from_duration(1.0, 10)
        sensors = SensorArray.circle(1.0, 4)
        with pytest.raises(ValueError):
            WaveData(np.zeros((10, 4)), tg, sensors, kind="velocity")

    def test_finite_checked(self):
        tg = TimeGrid.from_duration(1.0, 10)
        sensors = SensorArray.circle(1.0, 4)
        values = np.zeros((10, 4))
        values[3, 2] = np.nan
        with pytest.raises(ValueError):
            WaveData(values, tg, sensors, kind="pressure")


def test_disk_phantom_values():
    ph = disk_phantom(0.4, 1.0, 128)
    assert ph.evaluate(np.array(0.0), np.array(0.0)) == 1.0
    assert ph.evaluate(np.array(0.5), np.array(0.0)) == 0.0
