import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thgnls.grid import (
    BoundaryDecayWarning,
    GridError,
    dilate,
    fft,
    grad_norm_sq,
    ifft,
    integrate,
    laplacian,
    make_grid,
    read_nlsf,
    shift,
    spectral_tail_fraction,
    spectral_transform,
    warn_boundary,
    write_nlsf,
)


class TestMakeGrid:
    def test_spacing_and_wavenumbers(self):
        g = make_grid(1, 16, 8.0)
        assert g.spacing == 1.0
        m = np.array([0, 1, 2, 3, 4, 5, 6, 7, -8, -7, -6, -5, -4, -3, -2, -1])
        np.testing.assert_allclose(g.k1d, np.pi / 8 * m, rtol=0, atol=1e-15)

    def test_two_dimensional_counts(self):
        g = make_grid(2, 32, 10.0)
        assert g.size == 1024
        assert g.shape == (32, 32)
        assert g.spacing == 0.625

    @pytest.mark.parametrize(
        "args",
        [(3, 8, 1.0), (1, 100, 1.0), (4, 16, 1.0), (0, 16, 1.0), (1, 16, 0.0), (1, 16, -2.0)],
    )
    def test_rejects_bad_input(self, args):
        with pytest.raises(GridError):
            make_grid(*args)

    def test_spacing_times_points(self):
        for L in (0.3, 1.0, 7.7, 12.0, 31.4):
            g = make_grid(1, 64, L)
            assert abs(g.spacing * g.points - 2 * L) <= np.spacing(2 * L)

    def test_wavenumber_antisymmetry(self):
        g = make_grid(1, 32, 3.0)
        k = g.k1d
        N = g.points
        for m in range(1, N // 2):
            assert k[m] == -k[N - m]
        assert k[N // 2] < 0  # Nyquist on the negative side

    def test_coordinates_symmetric(self):
        g = make_grid(1, 64, 5.0)
        x = g.x1d
        np.testing.assert_array_equal(x[1:], -x[1:][::-1])
        assert x[0] == -5.0


class TestTransforms:
    def test_constant_has_single_mode(self):
        g = make_grid(1, 32, 4.0)
        f = np.full(g.shape, 2.5 + 0j)
        fh = spectral_transform(f, "forward")
        assert fh[0] == pytest.approx(2.5 * 32)
        assert np.max(np.abs(fh[1:])) < 1e-12

    def test_round_trip_and_parseval(self, rng):
        g = make_grid(2, 64, 3.0)
        f = rng.uniform(-1, 1, g.shape) + 1j * rng.uniform(-1, 1, g.shape)
        f /= np.max(np.abs(f))
        back = spectral_transform(spectral_transform(f, "forward"), "inverse")
        assert np.max(np.abs(back - f)) < 1e-12
        fh = fft(f)
        lhs = np.sum(np.abs(f) ** 2) * g.size
        assert abs(lhs - np.sum(np.abs(fh) ** 2)) / lhs < 1e-12

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            spectral_transform(np.zeros(16), "sideways")


class TestQuadrature:
    def test_constant_and_zero(self):
        g = make_grid(3, 16, 1.5)
        assert integrate(g, np.ones(g.shape)) == pytest.approx(3.0**3, rel=1e-14)
        assert integrate(g, np.zeros(g.shape)) == 0

    def test_gaussian(self):
        g = make_grid(1, 256, 16.0)
        val = integrate(g, np.exp(-g.x1d**2))
        assert abs(val - math.sqrt(math.pi)) < 1e-12

    def test_linearity(self, rng):
        g = make_grid(1, 64, 2.0)
        f, h = rng.normal(size=64), rng.normal(size=64)
        a, b = 1.7, -0.3
        lhs = integrate(g, a * f + b * h)
        rhs = a * integrate(g, f) + b * integrate(g, h)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


class TestGradNorm:
    def test_constant(self):
        g = make_grid(2, 32, 2.0)
        assert abs(grad_norm_sq(g, np.full(g.shape, 3.0))) < 1e-12

    def test_sine_mode(self):
        g = make_grid(1, 64, 5.0)
        k0 = np.pi * 3 / 5.0
        val = grad_norm_sq(g, np.sin(k0 * g.x1d))
        assert val == pytest.approx(k0**2 * 5.0, rel=1e-12)

    def test_sech_profile(self):
        # d/dx sqrt2 sech 3x integrates to 18 * 2 * 2/9 = 4 in square
        g = make_grid(1, 512, 16.0)
        val = grad_norm_sq(g, math.sqrt(2) / np.cosh(3 * g.x1d))
        assert abs(val - 4.0) < 1e-8

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=32, max_size=32))
    def test_nonnegative(self, values):
        g = make_grid(1, 32, 1.0)
        assert grad_norm_sq(g, np.array(values)) >= -1e-12


def test_laplacian_of_gaussian():
    g = make_grid(2, 128, 10.0)
    f = np.exp(-g.r2)
    exact = (4 * g.r2 - 4) * f
    assert np.max(np.abs(laplacian(g, f) - exact)) < 1e-10


def test_dilate_and_shift():
    g = make_grid(2, 64, 8.0)
    f = np.exp(-g.r2 / 2)
    np.testing.assert_allclose(dilate(g, f, 1.7), np.exp(-(1.7**2) * g.r2 / 2), atol=1e-12)
    x, y = g.coords
    moved = shift(g, f, [0.3, -0.4])
    np.testing.assert_allclose(moved, np.exp(-((x + 0.3) ** 2 + (y - 0.4) ** 2) / 2), atol=1e-12)


def test_boundary_warning():
    g = make_grid(1, 64, 2.0)
    with pytest.warns(BoundaryDecayWarning):
        assert not warn_boundary(g, np.exp(-g.x1d**2 / 4))
    assert warn_boundary(g, np.exp(-(g.x1d**2) * 20))


class TestNLSF:
    def test_round_trip(self, tmp_path, rng):
        g = make_grid(2, 16, 3.5)
        a = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
        b = rng.normal(size=g.shape)
        write_nlsf(tmp_path / "s.nlsf", g, [a, b])
        g2, (a2, b2) = read_nlsf(tmp_path / "s.nlsf")
        assert g2 == g
        np.testing.assert_array_equal(a2, a)
        np.testing.assert_array_equal(b2, b + 0j)

    def test_header_layout(self, tmp_path):
        g = make_grid(1, 16, 2.0)
        write_nlsf(tmp_path / "h.nlsf", g, [np.arange(16.0)])
        raw = (tmp_path / "h.nlsf").read_bytes()
        magic, version, n, pts, L, count = struct.unpack("<4sIIIdI", raw[:28])
        assert (magic, version, n, pts, L, count) == (b"NLSF", 1, 1, 16, 2.0, 1)
        assert len(raw) == 28 + 16 * 16
        first = struct.unpack("<dd", raw[28 + 16 : 28 + 32])
        assert first == (1.0, 0.0)

    def test_rejects_corruption(self, tmp_path):
        g = make_grid(1, 16, 2.0)
        p = tmp_path / "c.nlsf"
        write_nlsf(p, g, [np.zeros(16)])
        data = p.read_bytes()
        p.write_bytes(b"XXXX" + data[4:])
        with pytest.raises(GridError):
            read_nlsf(p)
        p.write_bytes(data[:-3])
        with pytest.raises(GridError):
            read_nlsf(p)


def test_spectral_tail_fraction():
    g = make_grid(1, 64, 4.0)
    assert spectral_tail_fraction(g, np.zeros(64)) == 0.0
    assert spectral_tail_fraction(g, np.exp(-g.x1d**2)) < 1e-12
    top = np.cos(g.k1d[28] * g.x1d)
    assert spectral_tail_fraction(g, top) == pytest.approx(1.0)
    assert spectral_tail_fraction(g, top, np.cos(g.x1d * np.pi / 4)) == pytest.approx(0.5)
