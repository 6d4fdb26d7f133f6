"""Backend kernels: correctness against dense NumPy oracles, agreement
between the compiled and pure implementations, and failure signalling."""

import numpy as np
import pytest

from gtransport import backend

BACKENDS = backend.available_backends()


@pytest.fixture(params=BACKENDS)
def impl(request):
    return backend.get_impl(request.param)


def random_problem(rng, n=60, p=5):
    x = np.ascontiguousarray(rng.normal(size=(n, p)))
    y = np.ascontiguousarray(rng.normal(size=n))
    w = rng.integers(0, 4, size=n).astype(float)
    return x, y, w


class TestWeightedGram:
    def test_matches_einsum(self, impl):
        rng = np.random.default_rng(1)
        x, y, w = random_problem(rng)
        a, b = impl.weighted_gram(x, y, w)
        np.testing.assert_allclose(a, np.einsum("ij,i,ik->jk", x, w, x),
                                   rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(b, x.T @ (w * y), rtol=1e-12, atol=1e-12)

    def test_zero_weights_drop_rows(self, impl):
        rng = np.random.default_rng(2)
        x, y, w = random_problem(rng)
        w[10:] = 0.0
        a, b = impl.weighted_gram(x, y, w)
        a2, b2 = impl.weighted_gram(x[:10], y[:10], w[:10])
        np.testing.assert_array_equal(a, a2)
        np.testing.assert_array_equal(b, b2)

    def test_all_zero_weights(self, impl):
        rng = np.random.default_rng(3)
        x, y, w = random_problem(rng)
        a, b = impl.weighted_gram(x, y, np.zeros_like(w))
        assert not a.any() and not b.any()

    def test_empty_design(self, impl):
        a, b = impl.weighted_gram(np.empty((0, 3)), np.empty(0), np.empty(0))
        assert a.shape == (3, 3) and not a.any()
        a, b = impl.weighted_gram(np.empty((4, 0)), np.ones(4), np.ones(4))
        assert a.shape == (0, 0) and b.shape == (0,)

    def test_shape_mismatch(self, impl):
        with pytest.raises(ValueError):
            impl.weighted_gram(np.ones((4, 2)), np.ones(3), np.ones(4))

    def test_deterministic(self, impl):
        rng = np.random.default_rng(4)
        x, y, w = random_problem(rng)
        a1, b1 = impl.weighted_gram(x, y, w)
        a2, b2 = impl.weighted_gram(x, y, w)
        assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


class TestSolveSpd:
    def spd(self, rng, p=6, scale=None):
        m = rng.normal(size=(p + 5, p))
        a = m.T @ m
        if scale is not None:
            a = a * np.outer(scale, scale)
        return np.ascontiguousarray(a)

    def test_matches_dense_solve(self, impl):
        rng = np.random.default_rng(5)
        a = self.spd(rng)
        b = rng.normal(size=6)
        beta, ok = impl.solve_spd(a, b)
        assert ok
        np.testing.assert_allclose(beta, np.linalg.solve(a, b), rtol=1e-9)

    def test_wildly_scaled_columns(self, impl):
        # Column scales spanning twelve orders of magnitude must neither be
        # reported as rank loss nor destroy backward stability.
        rng = np.random.default_rng(6)
        scale = 10.0 ** rng.integers(-6, 7, size=6)
        a = self.spd(rng, scale=scale)
        b = rng.normal(size=6)
        beta, ok = impl.solve_spd(a, b)
        assert ok
        residual = np.abs(a @ beta - b).max()
        bound = np.abs(a).max() * np.abs(beta).max() + np.abs(b).max()
        assert residual <= 1e-12 * bound

    def test_singular_flagged(self, impl):
        x = np.ones((8, 3))
        x[:, 1] = np.arange(8.0)
        x[:, 2] = 2.0 * x[:, 1]  # exact duplicate direction
        a, b = backend.get_impl("pure").weighted_gram(x, np.ones(8), np.ones(8))
        beta, ok = impl.solve_spd(np.ascontiguousarray(a), b)
        assert not ok
        assert not beta.any()

    def test_zero_matrix_flagged(self, impl):
        beta, ok = impl.solve_spd(np.zeros((3, 3)), np.zeros(3))
        assert not ok

    def test_negative_diagonal_flagged(self, impl):
        a = np.diag([1.0, -2.0, 3.0])
        _, ok = impl.solve_spd(np.ascontiguousarray(a), np.ones(3))
        assert not ok

    def test_empty_flagged(self, impl):
        beta, ok = impl.solve_spd(np.zeros((0, 0)), np.zeros(0))
        assert not ok and beta.shape == (0,)


class TestWeightedColumnMeans:
    def test_matches_average(self, impl):
        rng = np.random.default_rng(7)
        c = np.ascontiguousarray(rng.normal(size=(30, 4)))
        w = rng.integers(0, 3, size=30).astype(float)
        means, ok = impl.weighted_column_means(c, w)
        assert ok
        np.testing.assert_allclose(means, np.average(c, axis=0, weights=w),
                                   rtol=1e-12, atol=1e-14)

    def test_zero_total_flagged(self, impl):
        means, ok = impl.weighted_column_means(np.ones((5, 2)), np.zeros(5))
        assert not ok


class TestReplicatePhi:
    def problem(self, seed=8, n_src=80, n_tgt=50, p_cov=3):
        rng = np.random.default_rng(seed)
        c_src = np.hstack([np.ones((n_src, 1)), rng.normal(size=(n_src, p_cov))])
        z = rng.integers(0, 2, size=n_src).astype(float)
        x = np.ascontiguousarray(np.hstack([c_src, c_src * z[:, None]]))
        y = np.ascontiguousarray(rng.normal(size=n_src) + x @ rng.normal(size=x.shape[1]))
        c_tgt = np.ascontiguousarray(
            np.hstack([np.ones((n_tgt, 1)), rng.normal(size=(n_tgt, p_cov))]))
        w_src = rng.integers(0, 3, size=n_src).astype(float)
        w_tgt = rng.integers(0, 3, size=n_tgt).astype(float)
        q = p_cov + 1
        zcol = np.arange(q, 2 * q, dtype=np.int64)
        return x, y, w_src, c_tgt, w_tgt, zcol

    def oracle(self, x, y, w_src, c_tgt, w_tgt, zcol):
        mask = w_src > 0
        sw = np.sqrt(w_src[mask])
        beta, *_ = np.linalg.lstsq(x[mask] * sw[:, None], y[mask] * sw, rcond=None)
        means = np.average(c_tgt, axis=0, weights=w_tgt)
        keep = zcol >= 0
        return float(means[keep] @ beta[zcol[keep]])

    def test_matches_oracle(self, impl):
        args = self.problem()
        phi, ok = impl.replicate_phi(*args)
        assert ok
        assert abs(phi - self.oracle(*args)) < 1e-8

    def test_dropped_interaction_columns_skipped(self, impl):
        x, y, w_src, c_tgt, w_tgt, zcol = self.problem()
        zcol = zcol.copy()
        zcol[1] = -1
        phi, ok = impl.replicate_phi(x, y, w_src, c_tgt, w_tgt, zcol)
        assert ok
        assert abs(phi - self.oracle(x, y, w_src, c_tgt, w_tgt, zcol)) < 1e-8

    def test_singular_resample_flagged(self, impl):
        x, y, w_src, c_tgt, w_tgt, zcol = self.problem()
        w_src = np.zeros_like(w_src)
        w_src[0] = 5.0  # a single support point cannot identify 8 columns
        phi, ok = impl.replicate_phi(x, y, w_src, c_tgt, w_tgt, zcol)
        assert not ok and phi == 0.0

    def test_zero_target_weights_flagged(self, impl):
        x, y, w_src, c_tgt, w_tgt, zcol = self.problem()
        phi, ok = impl.replicate_phi(x, y, w_src, c_tgt, np.zeros_like(w_tgt), zcol)
        assert not ok

    def test_zcol_length_checked(self, impl):
        x, y, w_src, c_tgt, w_tgt, zcol = self.problem()
        with pytest.raises(ValueError):
            impl.replicate_phi(x, y, w_src, c_tgt, w_tgt, zcol[:-1])

    def test_bitwise_reproducible(self, impl):
        args = self.problem()
        assert impl.replicate_phi(*args) == impl.replicate_phi(*args)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
def test_backends_agree_closely(impl):
    # `impl` runs twice under the parametrize; compare against the other one.
    other = backend.get_impl("pure" if impl.NAME == "compiled" else "compiled")
    prob = TestReplicatePhi().problem(seed=123, n_src=200, n_tgt=120, p_cov=4)
    phi_a, ok_a = impl.replicate_phi(*prob)
    phi_b, ok_b = other.replicate_phi(*prob)
    assert ok_a and ok_b
    assert abs(phi_a - phi_b) <= 1e-9 * max(1.0, abs(phi_b))


def test_default_backend_prefers_compiled():
    if "compiled" in BACKENDS:
        assert backend.BACKEND == "compiled"
    else:
        assert backend.BACKEND == "pure"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError, match="unknown backend"):
        backend.get_impl("fastest")


def test_pure_backend_forced_by_environment(tmp_path):
    import subprocess
    import sys
    code = "import gtransport.backend as b; print(b.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code],
                         env={"PATH": "/usr/bin:/bin", "GTRANSPORT_PURE": "1"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "pure"
