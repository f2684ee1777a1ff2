import pytest

from scripts import run_acceptance_checks as acceptance
from src.calculations.analytic import mean_response_aggregate
from src.calculations.densities import DensityPair, QuadratureSpec


def test_full_preemption_signs_off_on_the_own_threshold(monkeypatch, capsys):
    seen = {}

    def fake_comparison(pair_kind, predictor, points, jobs, tolerance, threshold, quad):
        seen.update(threshold=threshold, points=points, tolerance=tolerance)
        return True

    monkeypatch.setattr(acceptance, '_analytic_vs_sim', fake_comparison)
    assert acceptance.check_full_preemption(1000, QuadratureSpec())
    assert seen['threshold'] == 'own'
    assert all(C == 1.0 for _, C in seen['points'])
    assert seen['tolerance'] == 0.05
    assert "sign-off threshold: 'own'" in capsys.readouterr().out


@pytest.mark.slow
def test_tagged_threshold_runs_low_at_full_preemption():
    pair = DensityPair(acceptance.EXP1, 'perfect')
    quad = QuadratureSpec(table_points=300)
    own = mean_response_aggregate(1.0, 0.7, pair, quad, threshold='own', curve_points=2).mean
    tagged = mean_response_aggregate(1.0, 0.7, pair, quad, threshold='tagged', curve_points=2).mean
    assert tagged < own
