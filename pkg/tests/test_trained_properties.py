"""Properties of trained artifacts that go beyond the acceptance criteria:
monotonicity transfer from the simulator into the surrogate, tide-aware
release behavior of the scheduler, loss-weight monotonicity, and the
suggest-beats-inaction service property.  All reuse the session world."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from floodmit.explain import explain_report
from floodmit.models import FloodManager, LossWeights, evaluate_levels
from floodmit.series import write_csv
from floodmit.service import create_app, load_session


class TestEvaluatorMonotonicityTransfer:
    def test_gate_opening_lowers_upstream_prediction(self, world):
        """Raising one gate's full-horizon opening should not raise the
        predicted upstream level, in at least 90% of probe windows."""
        ev = world.evaluator
        gate_var = 0  # first control column = S1 gate, upstream point 0
        samples = world.test_samples[::max(len(world.test_samples) // 40, 1)][:40]
        agree = 0
        for s in samples:
            schedules = []
            for alpha in (0.0, 0.5, 1.0):
                sched = s.future_controls.copy()
                sched[:, gate_var] = alpha
                schedules.append(sched)
            levels = ev.predict_batch(s.past, s.future_cov, np.stack(schedules))
            upstream_means = levels[:, :, 0].mean(axis=1)
            if upstream_means[0] >= upstream_means[1] - 1e-6 >= upstream_means[2] - 2e-6:
                agree += 1
        assert agree / len(samples) >= 0.9


class TestManagerTideAwareness:
    def test_gates_open_more_at_forecast_low_tide(self, world):
        """Mean suggested gate opening in below-median forecast-tide hours
        should be at least the mean in the remaining hours, over the test set."""
        mgr = world.manager
        gate_cols = [j for j, i in enumerate(mgr.layout_.ctrl)
                     if mgr.specs_[i].role == "gate"]
        samples = world.test_samples[::max(len(world.test_samples) // 60, 1)][:60]
        low_means, high_means = [], []
        for s in samples:
            sched = mgr.suggest_schedule(s.past, s.future_cov)
            tide = s.future_cov[:, 0]
            low = tide < np.median(tide)
            if not low.any() or low.all():
                continue
            low_means.append(sched[low][:, gate_cols].mean())
            high_means.append(sched[~low][:, gate_cols].mean())
        assert np.mean(low_means) >= np.mean(high_means)


class TestLossWeightMonotonicity:
    def test_raising_waste_weight_does_not_raise_val_waste(self, world):
        results = {}
        for waste_weight in (0.02, 0.6):
            mgr = FloodManager(evaluator=world.evaluator, architecture="mlp",
                               thresholds=world.thresholds,
                               weights=LossWeights(1.0, waste_weight),
                               flood_margin_ft=0.3, waste_margin_ft=0.1,
                               epochs=4, stride=8, batch_size=32, seed=23,
                               patience=10)
            mgr.fit(world.bundle.train, world.bundle.val)
            results[waste_weight] = mgr.history_[-1]["val_waste"]
        assert results[0.6] <= results[0.02] + 1e-9


class TestServiceSuggestProperty:
    def test_suggest_beats_all_closed_on_flood_risk_cursors(self, world, tmp_path):
        ev_path, mgr_path = tmp_path / "e.fmodel", tmp_path / "m.fmodel"
        frame_path = tmp_path / "scenario.csv"
        world.evaluator.save(ev_path)
        world.manager.save(mgr_path)
        frame = world.bundle.test.slice_rows(0, 1200)
        write_csv(frame, frame_path)
        session = load_session(str(ev_path), str(frame_path), str(mgr_path))
        client = TestClient(create_app(session))

        k = world.evaluator.k
        s_ctrl = world.evaluator.layout_.n_ctrl
        closed = [[0.0] * s_ctrl for _ in range(k)]
        levels = frame.values[:, frame.water_indices]
        flood = world.thresholds.flood_ft
        risk_cursors = [int(t) for t in range(72, frame.T - k - 1)
                        if (levels[t] - flood).max() > -0.3][:30]
        if not risk_cursors:
            pytest.skip("no flood-risk cursors in this slice")
        wins = 0
        for cursor in risk_cursors:
            suggest = client.post("/suggest", json={"cursor": cursor}).json()
            inaction = client.post("/evaluate", json={
                "schedule_fraction": closed, "cursor": cursor}).json()
            if suggest["losses"]["combined"] <= inaction["losses"]["combined"] + 1e-9:
                wins += 1
        assert wins / len(risk_cursors) >= 0.9


class TestExplainReportEmission:
    def test_four_regime_reports_with_fidelity_flags(self, world, tmp_path):
        bundle = explain_report(world.evaluator, world.test_samples[:600],
                                tmp_path, n_perturb=2500, seed=1)
        assert set(bundle["regimes"]) == {"low_tide", "high_tide", "rising",
                                          "falling"}
        for regime, entry in bundle["regimes"].items():
            assert (tmp_path / f"attributions_{regime}.svg").exists()
            assert len(entry["heatmaps"]) == 4
            for h in entry["heatmaps"]:
                assert "r_squared" in h and "faithful" in h
            assert entry["attention"] is not None
        assert (tmp_path / "explain.json").exists()
