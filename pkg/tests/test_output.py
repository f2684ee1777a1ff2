import json
import math

import numpy as np
import pandas as pd
import pytest
from openpyxl import load_workbook

from src.core.auditable_module import RunRecord
from src.core.domain import DomainError, Job, PredictionSpec
from src.core.environment import resolve_output_dir
from src.core.experiment_config import build_experiment
from src.core.input_processor import WORKLOAD_COLUMNS, load_workload, save_workload, workload_frame
from src.core.output_generator import format_table, output_path, write_csv, write_json, write_workbook


def _experiment():
    return build_experiment({
        'schema_version': 1,
        'arrival': {'kind': 'burst', 'n': 3},
        'service': {'kind': 'exponential', 'mean': 1.0},
    })


def test_workload_csv_keeps_trajectories_and_exact_floats(tmp_path):
    jobs = [
        Job(id=0, arrival_time=0.1, size=2.5, prediction=PredictionSpec(initial=1 / 3)),
        Job(id=1, arrival_time=0.7, size=3.0, prediction=PredictionSpec(initial=3.0, trajectory=(3.0, 4.5, 2.0))),
    ]
    path = save_workload(jobs, str(tmp_path / 'workload.csv'))
    loaded = load_workload(path)
    assert [(j.id, j.arrival_time, j.size, j.prediction.initial) for j in loaded] == \
        [(0, 0.1, 2.5, 1 / 3), (1, 0.7, 3.0, 3.0)]
    assert loaded[0].prediction.trajectory is None
    assert loaded[1].prediction.trajectory == (3.0, 4.5, 2.0)
    assert list(workload_frame(jobs).columns) == WORKLOAD_COLUMNS


def test_workload_with_missing_columns_is_rejected(tmp_path):
    path = tmp_path / 'bad.csv'
    pd.DataFrame({'id': [0], 'arrival': [0.0]}).to_csv(path, index=False)
    with pytest.raises(DomainError, match="missing columns"):
        load_workload(str(path))
    with pytest.raises(FileNotFoundError):
        load_workload(str(tmp_path / 'absent.csv'))


def test_json_writes_non_finite_values_as_null(tmp_path):
    path = write_json({'a': math.nan, 'b': np.float64(1.5), 'c': [np.int64(2), math.inf], 'd': np.bool_(True)},
                      str(tmp_path / 'record.json'))
    assert json.loads(open(path, encoding='utf-8').read()) == {'a': None, 'b': 1.5, 'c': [2, None], 'd': True}


def test_csv_float_format_is_stable(tmp_path):
    path = write_csv(pd.DataFrame({'x': [0.1 + 0.2, 1e-12]}), output_path(str(tmp_path), 'run', 'x.csv'))
    assert path.endswith('run_x.csv')
    assert open(path, encoding='utf-8').read() == "x\n0.3\n1e-12\n"


def test_workbook_has_one_sheet_per_frame(tmp_path):
    path = write_workbook({'Sweep': pd.DataFrame({'a': [1]}), 'Replications': pd.DataFrame({'b': [2]})},
                          str(tmp_path / 'book.xlsx'))
    assert load_workbook(path).sheetnames == ['Sweep', 'Replications']


def test_format_table_selects_known_columns():
    text = format_table(pd.DataFrame({'a': [1.23456], 'b': [2]}), ['a', 'missing'])
    assert '1.2346' in text
    assert 'b' not in text.split('\n')[0]


def test_run_record_is_reproducible():
    experiment = _experiment()
    record = RunRecord('simulate', experiment)
    record.set_metrics({'mean_latency': 1.5, 'trace': np.array([1.0, 2.0])})
    record.add_warnings(['load >= 1', 'load >= 1'])
    record.add_output('per_job', 'run_per_job.csv')
    data = record.to_dict()
    assert data['config_hash'] == experiment.config_hash
    assert data['metrics']['trace'] == [1.0, 2.0]
    assert data['warnings'] == ['load >= 1']
    assert 'timestamp' not in json.dumps(data)
    assert json.dumps(data, sort_keys=True) == json.dumps(record.to_dict(), sort_keys=True)
    assert record.summary().startswith('[simulate] config ')


def test_output_dir_precedence(monkeypatch):
    monkeypatch.setenv('SPRPT_OUTPUT_DIR', 'from_env')
    assert resolve_output_dir('flag', 'file') == 'flag'
    assert resolve_output_dir(None, 'file') == 'file'
    assert resolve_output_dir(None, None) == 'from_env'
    monkeypatch.delenv('SPRPT_OUTPUT_DIR')
    assert resolve_output_dir(None, None) == 'results'
