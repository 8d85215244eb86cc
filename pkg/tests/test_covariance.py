import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_covariance
from orpam_eibmv.covariance import (
    SingularCovarianceWarning,
    SnapshotSet,
    estimate_covariance,
    make_snapshots,
)
from orpam_eibmv.transforms import AScan, CompensatedSpectrum, forward_dft, phase_compensate, select_passband


def comp(entries):
    entries = np.asarray(entries, dtype=complex)
    return CompensatedSpectrum(entries, 0, np.arange(1, entries.size + 1), 4 * entries.size)


class TestSnapshots:
    def test_sliding(self):
        a, b, c, d = 1, 2j, 3, 4 - 1j
        s = make_snapshots(comp([a, b, c, d]), 2)
        np.testing.assert_array_equal(s.snapshots, [[a, b], [b, c], [c, d]])
        assert s.count == 3
        assert s.subband_length == 2

    def test_full_length(self, rng):
        x = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        s = make_snapshots(comp(x), 7)
        assert s.count == 1
        np.testing.assert_array_equal(s.snapshots[0], x)

    def test_constant(self):
        s = make_snapshots(comp(np.ones(5)), 3)
        np.testing.assert_array_equal(s.snapshots, np.ones((3, 3)))

    @pytest.mark.parametrize("length", [1, 6])
    def test_bad_length(self, length):
        with pytest.raises(ValueError):
            make_snapshots(comp(np.ones(5)), length)


class TestEstimate:
    def test_single_snapshot_rank_one(self, rng):
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        r = estimate_covariance(SnapshotSet(v[None, :]), 0.0)
        np.testing.assert_allclose(r.matrix, np.outer(v, v.conj()), atol=1e-14)
        assert np.linalg.matrix_rank(r.matrix) == 1

    def test_basis_vectors(self):
        r = estimate_covariance(SnapshotSet(np.eye(5, dtype=complex)), 0.0)
        np.testing.assert_allclose(r.matrix, np.eye(5) / 5, atol=1e-15)

    def test_matches_double_loop(self, rng):
        snaps = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
        r = estimate_covariance(SnapshotSet(snaps), 0.01)
        np.testing.assert_allclose(r.matrix, naive_covariance(snaps, 0.01), atol=1e-12)
        lam = np.linalg.eigvalsh(r.matrix)
        assert lam.min() >= 0.01 * r.trace_before_loading / 4 - 1e-10

    def test_zero_snapshots_warn(self):
        with pytest.warns(SingularCovarianceWarning):
            r = estimate_covariance(SnapshotSet(np.zeros((3, 3), complex)), 0.0)
        assert r.is_zero

    def test_negative_loading(self):
        with pytest.raises(ValueError):
            estimate_covariance(SnapshotSet(np.ones((3, 3), complex)), -0.1)

    def test_coherent_is_scaled_all_ones(self):
        c = 0.7 - 0.2j
        r = estimate_covariance(make_snapshots(comp(np.full(9, c)), 4), 0.0)
        np.testing.assert_allclose(r.matrix, abs(c) ** 2 * np.ones((4, 4)), atol=1e-14)
        lam = np.linalg.eigvalsh(r.matrix)
        assert lam[-1] == pytest.approx(4 * abs(c) ** 2)
        np.testing.assert_allclose(lam[:-1], 0, atol=1e-14)

    def test_forward_backward_persymmetric(self, rng):
        snaps = rng.standard_normal((10, 5)) + 1j * rng.standard_normal((10, 5))
        r = estimate_covariance(SnapshotSet(snaps), 0.0, forward_backward=True).matrix
        j = np.eye(5)[::-1]
        np.testing.assert_allclose(r, j @ r.conj() @ j, atol=1e-14)

    def test_single_offset_reflector_is_toeplitz(self):
        n = 128
        x = np.zeros(n)
        x[70] = 1.0
        p = select_passband(forward_dft(AScan(x, 200e6)), 20e6, 80e6)
        r = estimate_covariance(make_snapshots(phase_compensate(p, 40), 8), 0.0).matrix
        for offset in range(-7, 8):
            diag = np.diagonal(r, offset)
            np.testing.assert_allclose(diag, diag[0], atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(0, 20), st.floats(0, 1))
def test_hermitian_psd(seed, length, extra, loading):
    rng = np.random.default_rng(seed)
    snaps = rng.standard_normal((extra + 1, length)) + 1j * rng.standard_normal((extra + 1, length))
    r = estimate_covariance(SnapshotSet(snaps), loading)
    m = r.matrix
    assert np.abs(m - m.conj().T).max() <= 1e-12
    tr = np.trace(m).real
    lam = np.linalg.eigvalsh(m)
    assert lam.min() >= -1e-10 * tr
    assert lam.min() >= loading * r.trace_before_loading / length - 1e-10 * tr


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_loading_monotone(seed, d1, d2):
    lo, hi = sorted((d1, d2))
    rng = np.random.default_rng(seed)
    snaps = SnapshotSet(rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4)))
    diff = estimate_covariance(snaps, hi).matrix - estimate_covariance(snaps, lo).matrix
    assert np.linalg.eigvalsh(diff).min() >= -1e-12
