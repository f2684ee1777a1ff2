import json
import math
import os

import pytest

from src.core.experiment_config import (
    ConfigError, apply_overrides, build_experiment, load_experiment, parse_override,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', 'config')

MINIMAL = """{
    "schema_version": 1,
    "arrival": {"kind": "poisson", "rate": 0.5, "count": 100},
    "service": {"kind": "exponential", "mean": 1.0}
}
"""


def _write(tmp_path, text, name='experiment.json'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_minimal_config_uses_defaults(tmp_path):
    experiment = load_experiment(_write(tmp_path, MINIMAL))
    assert experiment.sim.mode == 'continuous'
    assert experiment.sim.arrival.count == 100
    assert experiment.sim.predictor.kind == 'perfect'
    assert experiment.sim.policy.kind == 'SPRPT_LP'
    assert math.isinf(experiment.sim.memory_budget)
    assert experiment.sim.bins.k == 10
    assert experiment.output_dir is None


@pytest.mark.parametrize("name", [
    'simulate_example.json', 'batch_example.json', 'sweep_example.json',
    'validate_example.json', 'refine_example.json', 'analyze_example.json',
])
def test_shipped_examples_load(name):
    experiment = load_experiment(os.path.join(CONFIG_DIR, name))
    assert experiment.source.endswith(name)


def test_missing_service_field_names_the_field_and_line(tmp_path):
    text = MINIMAL.replace('"kind": "exponential", ', '')
    with pytest.raises(ConfigError) as excinfo:
        load_experiment(_write(tmp_path, text))
    error = excinfo.value
    assert error.field == 'service'
    assert 'service.kind' in str(error)
    assert error.line == 4
    assert str(error).startswith(f"{error.path}:4:")


def test_missing_section_is_reported(tmp_path):
    text = '{\n    "schema_version": 1,\n    "arrival": {"kind": "burst", "n": 3}\n}\n'
    with pytest.raises(ConfigError, match="missing required section 'service'"):
        load_experiment(_write(tmp_path, text))


def test_unknown_key_is_rejected_with_its_line(tmp_path):
    text = MINIMAL.replace('"count": 100}', '"count": 100, "burstiness": 2}')
    with pytest.raises(ConfigError) as excinfo:
        load_experiment(_write(tmp_path, text))
    assert "unknown key 'arrival.burstiness'" in str(excinfo.value)
    assert excinfo.value.line == 3


@pytest.mark.parametrize("patch,message", [
    ({'policy': {'C': 1.5}}, "'policy.C' must be <= 1"),
    ({'policy': {'kind': 'LIFO'}}, "'policy.kind' must be one of"),
    ({'seed': 'abc'}, "'seed' must be an integer"),
    ({'memory': {'record_trace': 1}}, "'memory.record_trace' must be true/false"),
    ({'sweep': {'rates': [0.5, 'fast']}}, "'sweep.rates[1]' must be a number"),
    ({'schema_version': 2}, "unsupported schema_version 2"),
])
def test_field_validation(patch, message):
    document = json.loads(MINIMAL)
    document.update(patch)
    with pytest.raises(ConfigError, match=message.replace('[', r'\[').replace(']', r'\]')):
        build_experiment(document)


def test_domain_errors_surface_as_config_errors():
    document = json.loads(MINIMAL)
    document['arrival'] = {'kind': 'poisson', 'rate': 0.5}
    with pytest.raises(ConfigError, match="exactly one of 'count' or 'horizon'"):
        build_experiment(document)


def test_invalid_json_reports_the_line(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        load_experiment(_write(tmp_path, MINIMAL.replace('"count": 100}', '"count": 100,}')))
    assert excinfo.value.line == 3


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_experiment('/nonexistent/experiment.json')


def test_parse_override_reads_json_values():
    assert parse_override('policy.C=0.25') == ('policy.C', 0.25)
    assert parse_override('sweep.rates=[0.5,0.7]') == ('sweep.rates', [0.5, 0.7])
    assert parse_override('policy.kind=SPJF') == ('policy.kind', 'SPJF')
    with pytest.raises(ConfigError):
        parse_override('policy.C')


def test_apply_overrides_creates_sections_without_mutating_the_input():
    document = {'policy': {'C': 1.0}}
    result = apply_overrides(document, [('policy.C', 0.5), ('memory.budget', 100)])
    assert result == {'policy': {'C': 0.5}, 'memory': {'budget': 100}}
    assert document == {'policy': {'C': 1.0}}


def test_overrides_apply_and_are_blamed_on_the_flag(tmp_path):
    path = _write(tmp_path, MINIMAL)
    experiment = load_experiment(path, ['policy.C=0.25', 'seed=7'])
    assert experiment.sim.policy.C == 0.25
    assert experiment.sim.seed == 7
    with pytest.raises(ConfigError) as excinfo:
        load_experiment(path, ['policy.C=2'])
    assert excinfo.value.path == '--set policy.C'


def test_config_hash_tracks_overrides(tmp_path):
    path = _write(tmp_path, MINIMAL)
    assert load_experiment(path).config_hash == load_experiment(path).config_hash
    assert load_experiment(path).config_hash != load_experiment(path, ['seed=3']).config_hash


def test_bins_and_infinite_concentration():
    document = json.loads(MINIMAL)
    document['bins'] = {'boundaries': [0, 10, 20, 40]}
    document['refine'] = {'concentration': 'inf', 'mislabel_rate': 0.0}
    experiment = build_experiment(document)
    assert experiment.sim.bins.k == 3
    assert math.isinf(experiment.refine.model.concentration)
    document['bins'] = {'boundaries': [0, 10], 'count': 4}
    with pytest.raises(ConfigError, match="either 'boundaries'"):
        build_experiment(document)


def test_batch_mode_and_null_budget():
    document = json.loads(MINIMAL)
    document.update({'mode': 'batch', 'memory': {'budget': None, 'preemption_cost_mode': 'discard'}})
    experiment = build_experiment(document)
    assert experiment.sim.policy.batch
    assert math.isinf(experiment.sim.memory_budget)
    assert experiment.sim.preemption_cost_mode == 'discard'
