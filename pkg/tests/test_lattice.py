import struct

import numpy as np
import pytest

from bichf import lattice
from bichf.lattice import GridError, make_grid


def plane_wave(grid, k, phase=0.0):
    """cos(k . x + phase) sampled on the grid, one component."""
    arg = phase
    for i in range(4):
        arg = arg + k[i] * grid.coords[i]
    return np.cos(arg)[..., None]


class TestGrid:
    def test_basic_shape(self):
        g = make_grid(8, 3)
        assert g.shape == (8, 8, 8, 8)
        assert g.h == pytest.approx(2 * np.pi / 8)
        assert g.L == 3

    def test_rejects_non_power_of_two(self):
        with pytest.raises(GridError):
            make_grid(12, 3)

    def test_rejects_small_n(self):
        with pytest.raises(GridError):
            make_grid(4, 3)

    def test_rejects_small_L(self):
        with pytest.raises(GridError):
            make_grid(8, 1)

    def test_spectral_roundtrip(self):
        g = make_grid(8, 2)
        rng = np.random.default_rng(0)
        f = rng.standard_normal(g.shape + (2,))
        back = lattice.from_spectral(g, lattice.to_spectral(g, f))
        np.testing.assert_allclose(back, f, atol=1e-13)

    def test_integrate_constant(self):
        # int_T 1 = (2 pi)^4
        g = make_grid(8, 2)
        vol = lattice.integrate(g, np.ones(g.shape))
        assert vol == pytest.approx((2 * np.pi) ** 4, rel=1e-14)


class TestDerivatives:
    """Spectral derivatives are exact on resolved trigonometric modes."""

    @pytest.mark.parametrize("k", [(1, 0, 0, 0), (0, 2, 0, 0), (1, 1, 2, 3)])
    def test_deriv_eigenfunction(self, k):
        g = make_grid(16, 2)
        f = plane_wave(g, k, phase=0.3)
        for axis in range(4):
            want = -k[axis] * np.sin(
                sum(k[i] * g.coords[i] for i in range(4)) + 0.3)[..., None]
            got = lattice.deriv(g, f, axis)
            np.testing.assert_allclose(got, want, atol=1e-11)

    @pytest.mark.parametrize("k", [(1, 0, 0, 0), (2, 1, 0, 3)])
    def test_laplacian_eigenvalue(self, k):
        g = make_grid(16, 2)
        f = plane_wave(g, k)
        k2 = sum(ki ** 2 for ki in k)
        np.testing.assert_allclose(lattice.laplacian(g, f), -k2 * f,
                                   atol=1e-10)
        np.testing.assert_allclose(lattice.bilaplacian(g, f), k2 ** 2 * f,
                                   atol=1e-9)

    def test_jet_consistency(self):
        g = make_grid(8, 2)
        rng = np.random.default_rng(3)
        # Band-limited field: jet pieces must agree with one another.
        fh = lattice.to_spectral(g, rng.standard_normal(g.shape + (2,)))
        mask = (g.k2 <= 4.0)[..., None]
        f = lattice.from_spectral(g, fh * mask)
        jet = lattice.jet(g, f)
        trace = np.einsum("iixc->xc",
                          jet.hessian.reshape(4, 4, -1, 2)).reshape(f.shape)
        np.testing.assert_allclose(trace, jet.laplacian, atol=1e-11)
        np.testing.assert_allclose(
            jet.bilaplacian, lattice.laplacian(g, jet.laplacian), atol=1e-10)
        for i in range(4):
            np.testing.assert_allclose(jet.df[i], lattice.deriv(g, f, i),
                                       atol=1e-12)

    def test_parseval_gradient(self):
        # int |df|^2 = int f (-lap f) for periodic fields.
        g = make_grid(8, 2)
        rng = np.random.default_rng(7)
        f = rng.standard_normal(g.shape + (2,))
        df = lattice.gradient(g, f)
        lhs = lattice.integrate(g, np.sum(df * df, axis=(0, -1)))
        rhs = lattice.integrate(
            g, np.sum(f * -lattice.laplacian(g, f), axis=-1))
        assert lhs == pytest.approx(rhs, rel=1e-10)


class TestWindow:
    def test_support_and_range(self):
        g = make_grid(16, 2)
        c = (np.pi, np.pi, np.pi, np.pi)
        phi = lattice.window(g, c, np.pi / 4)
        assert phi.min() >= 0.0 and phi.max() <= 1.0
        d = lattice.periodic_distance(g, c)
        assert np.all(phi[d >= np.pi / 4] == 0.0)
        assert phi[8, 8, 8, 8] == 1.0

    def test_ramp_midpoint_value(self):
        # Flat core to r/2, quintic ramp after; at d = 3r/4 the value is 1/2.
        g = make_grid(16, 2)
        phi = lattice.window(g, (0.0, 0.0, 0.0, 0.0), np.pi / 2)
        assert phi[2, 0, 0, 0] == 1.0  # d = pi/4 = r/2, still in the core
        assert phi[3, 0, 0, 0] == pytest.approx(0.5, abs=1e-14)

    def test_monotone_in_radius(self):
        g = make_grid(16, 2)
        c = (0.0, 0.0, 0.0, 0.0)
        prev = lattice.window(g, c, np.pi / 8)
        for r in (np.pi / 4, np.pi / 2):
            cur = lattice.window(g, c, r)
            assert np.all(cur >= prev - 1e-15)
            prev = cur

    def test_gradient_bound(self):
        # Spectral sup of |grad phi| stays below the design bound 4/r.
        g = make_grid(16, 2)
        r = np.pi / 4
        phi = lattice.window(g, (np.pi, np.pi, np.pi, np.pi), r)[..., None]
        grad = lattice.gradient(g, phi)
        sup = np.sqrt(np.sum(grad * grad, axis=(0, -1))).max()
        # Continuum max slope of the ramp is 3.75/r; the frozen discrete
        # value at this resolution is 2.6057.
        assert sup <= 4.0 / r
        assert sup == pytest.approx(2.6057, rel=1e-3)


class TestPeriodicGeometry:
    def test_displacement_range(self):
        g = make_grid(8, 2)
        d = np.array(lattice.periodic_displacement(g, (0.1, 2.0, 4.0, 6.0)))
        assert np.all(d >= -np.pi) and np.all(d < np.pi)

    def test_distance_symmetry(self):
        g = make_grid(8, 2)
        c = (np.pi / 2, 0.0, 0.0, 0.0)
        dist = lattice.periodic_distance(g, c)
        # Distance to the antipodal center is the same field rolled by n/2.
        c2 = (np.pi / 2 + np.pi, 0.0, 0.0, 0.0)
        dist2 = lattice.periodic_distance(g, c2)
        np.testing.assert_allclose(np.roll(dist, 4, axis=0), dist2,
                                   atol=1e-12)


class TestSnapshot:
    def test_roundtrip(self, tmp_path):
        g = make_grid(8, 3)
        rng = np.random.default_rng(5)
        comps = rng.standard_normal(g.shape + (5,))
        path = tmp_path / "snap.bin"
        lattice.write_snapshot(path, g, 0.125, comps)
        n, L, ncomp, t, back = lattice.read_snapshot(path)
        assert (n, L, ncomp) == (8, 3, 5)
        assert t == 0.125
        np.testing.assert_array_equal(back, comps)

    def test_header_layout(self, tmp_path):
        # magic, version, n, L, ncomp as little-endian u64, then t as f64.
        g = make_grid(8, 2)
        path = tmp_path / "snap.bin"
        lattice.write_snapshot(path, g, 1.5, np.zeros(g.shape + (4,)))
        raw = path.read_bytes()
        magic, version, n, L, ncomp = struct.unpack("<5Q", raw[:40])
        (t,) = struct.unpack("<d", raw[40:48])
        assert magic == 0x42494348
        assert version == 1
        assert (n, L, ncomp) == (8, 2, 4)
        assert t == 1.5
        assert len(raw) == 48 + 8 * 4 * 8 ** 4

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 64)
        with pytest.raises(ValueError):
            lattice.read_snapshot(path)
