"""Online correction laws: fitting, update cadence, and evaluation."""

import numpy as np
import pytest

from irriloop import mismatch as mm
from irriloop.excitation import Dataset
from tests.test_surrogate import PersistenceModel, synthetic_dataset


def grid_search_fit(x, y, a_box=mm.A_BOX, b_box=mm.B_BOX, step=1e-3):
    """Brute-force oracle for the box-constrained least-squares fit."""
    a_grid = np.arange(a_box[0], a_box[1] + step / 2, step)
    b_grid = np.arange(b_box[0], b_box[1] + step / 2, step)
    resid = (y[:, None, None] - a_grid[None, :, None] * x[:, None, None]
             - b_grid[None, None, :])
    obj = (resid ** 2).sum(axis=0)
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    return a_grid[i], b_grid[j]


class TestBoxLstsq:
    def test_recovers_exact_line_inside_box(self):
        x = np.array([0.20, 0.25, 0.30, 0.35])
        y = 1.2 * x + 0.1
        a, b = mm.box_lstsq(x, y)
        assert a == pytest.approx(1.2, abs=1e-9)
        assert b == pytest.approx(0.1, abs=1e-9)

    def test_clips_slope_outside_box(self):
        x = np.array([0.1, 0.2, 0.3, 0.4])
        y = 3.0 * x  # slope above the box
        a, b = mm.box_lstsq(x, y)
        a0, b0 = grid_search_fit(x, y)
        assert a == pytest.approx(a0, abs=2e-3)
        assert b == pytest.approx(b0, abs=2e-3)

    def test_matches_grid_search_on_random_data(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.uniform(0.1, 0.4, 6)
            y = rng.uniform(0.8, 1.6) * x + rng.uniform(-0.3, 0.4) \
                + rng.normal(0, 0.01, 6)
            a, b = mm.box_lstsq(x, y)
            a0, b0 = grid_search_fit(x, y)
            obj = np.sum((y - a * x - b) ** 2)
            obj0 = np.sum((y - a0 * x - b0) ** 2)
            assert obj <= obj0 + 1e-6

    def test_degenerate_inputs_fit_offset_only(self):
        x = np.full(4, 0.25)
        y = np.full(4, 0.30)
        a, b = mm.box_lstsq(x, y)
        assert np.isfinite(a) and np.isfinite(b)
        assert a * 0.25 + b == pytest.approx(0.30, abs=1e-9)

    def test_batched_columns_fit_independently(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0.1, 0.4, size=(5, 3))
        slopes = np.array([0.9, 1.1, 1.4])
        offs = np.array([0.0, 0.05, -0.1])
        y = slopes * x + offs
        a, b = mm.box_lstsq(x, y)
        assert np.allclose(a, slopes, atol=1e-9)
        assert np.allclose(b, offs, atol=1e-9)


class TestConfig:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            mm.CorrectionConfig(kind="quadratic")

    def test_rejects_linear_with_single_sample(self):
        with pytest.raises(ValueError):
            mm.CorrectionConfig(kind="linear", f=1)

    def test_rejects_boxes_excluding_identity(self):
        with pytest.raises(ValueError):
            mm.CorrectionConfig(kind="linear", a_box=(1.1, 1.5))

    def test_rejects_nonpositive_interval(self):
        with pytest.raises(ValueError):
            mm.CorrectionConfig(f=0)


class TestCorrectionState:
    def test_none_is_identity(self):
        st = mm.CorrectionState(mm.CorrectionConfig(kind="none"))
        y = np.array([0.2, 0.3])
        assert np.array_equal(st.apply(y), y)
        st.record_and_maybe_update(y + 0.1, y)
        assert st.affine() == (1.0, 0.0)

    def test_single_bias_learns_constant_offset(self):
        st = mm.CorrectionState(mm.CorrectionConfig(kind="single_bias", f=2))
        for _ in range(2):
            st.record_and_maybe_update(0.30, 0.25)
        assert float(st.b1) == pytest.approx(0.05)
        assert st.apply(0.25) == pytest.approx(0.30)
        assert st.affine() == (1.0, pytest.approx(0.05))

    def test_no_update_before_f_samples(self):
        st = mm.CorrectionState(mm.CorrectionConfig(kind="single_bias", f=3))
        st.record_and_maybe_update(0.30, 0.25)
        st.record_and_maybe_update(0.30, 0.25)
        assert float(st.b1) == 0.0
        st.record_and_maybe_update(0.30, 0.25)
        assert float(st.b1) == pytest.approx(0.05)

    def test_linear_learns_affine_map(self):
        st = mm.CorrectionState(mm.CorrectionConfig(kind="linear", f=4))
        raws = np.array([0.20, 0.25, 0.30, 0.35])
        for r in raws:
            st.record_and_maybe_update(1.2 * r + 0.1, r)
        assert float(st.a) == pytest.approx(1.2, abs=1e-9)
        assert float(st.b2) == pytest.approx(0.1, abs=1e-9)

    def test_batch_streams_update_independently(self):
        st = mm.CorrectionState(mm.CorrectionConfig(kind="single_bias", f=2),
                                batch=2)
        raw = np.array([0.25, 0.25])
        act = np.array([0.27, 0.22])
        st.record_and_maybe_update(act, raw)
        st.record_and_maybe_update(act, raw)
        assert np.allclose(st.b1, [0.02, -0.03])


class BiasedPersistence(PersistenceModel):
    """Persistence model with a constant raw-unit bias: a plant-model
    mismatch the single-bias law can null out exactly."""

    def __init__(self, p=4, bias_raw=0.03):
        super().__init__(p=p, bias_scaled=0.0)
        self.bias_scaled = bias_raw * self.scaler.y_gain

    def forward_scaled(self, x):
        return x[:, -1, 1] + self.bias_scaled, x.shape


class TestEvaluate:
    def _dataset(self):
        rng = np.random.default_rng(3)
        n = 120
        u = rng.uniform(0, 4e-6, n)
        y = np.full(n, 0.26) + 0.01 * np.sin(np.arange(n) / 9.0)
        return Dataset(u, y, y + rng.uniform(-0.001, 0.001, n))

    def test_bias_correction_beats_none_on_biased_model(self):
        d = self._dataset()
        model = BiasedPersistence(p=4, bias_raw=0.03)
        none = mm.evaluate_correction(model, d, None, horizon=6)
        bias = mm.evaluate_correction(
            model, d, mm.CorrectionConfig(kind="single_bias", f=2), horizon=6)
        assert bias.upsilon < none.upsilon * 0.7

    def test_linear_correction_beats_none_on_scaled_model(self):
        d = self._dataset()
        model = BiasedPersistence(p=4, bias_raw=0.04)
        none = mm.evaluate_correction(model, d, None, horizon=6)
        lin = mm.evaluate_correction(
            model, d, mm.CorrectionConfig(kind="linear", f=2), horizon=6)
        assert lin.upsilon < none.upsilon

    def test_unbiased_model_scores_near_noise_floor(self):
        d = self._dataset()
        model = PersistenceModel(p=4)
        rep = mm.evaluate_correction(model, d, None, horizon=1)
        # one-step persistence error is bounded by drift plus noise
        assert rep.upsilon < 0.05

    def test_sweep_covers_laws_and_skips_invalid(self, tmp_path):
        d = synthetic_dataset(60, seed=4)
        model = PersistenceModel(p=4)
        reports = mm.correction_sweep(model, d, f_values=(1, 2), horizon=4)
        kinds = [(r.kind, r.f) for r in reports]
        assert kinds == [("none", 0), ("single_bias", 1), ("single_bias", 2),
                         ("linear", 2)]
        path = tmp_path / "mm.csv"
        mm.write_correction_csv(reports, path)
        assert path.read_text().startswith("kind,f,upsilon")
