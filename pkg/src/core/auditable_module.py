# src/core/auditable_module.py
"""
RunRecord: the machine-readable summary written next to a command's CSVs.

It echoes the normalised experiment document with its hash, the seed, the
metrics and warnings of the run and the files written. No wall-clock
timestamps are recorded, so repeating a run reproduces the record byte for byte.
"""

from typing import Any, Dict, List

import numpy as np
import pandas as pd

from .experiment_config import ExperimentConfig


class RunRecord:

    def __init__(self, command: str, experiment: ExperimentConfig):
        self.command = command
        self.experiment = experiment
        self.metrics: Dict[str, Any] = {}
        self.warnings: List[str] = []
        self.outputs: Dict[str, str] = {}

    def set_metric(self, key: str, value: Any):
        self.metrics[key] = self._serialize_value(value)

    def set_metrics(self, metrics: Dict[str, Any]):
        for key, value in metrics.items():
            self.set_metric(key, value)

    def add_warnings(self, warnings: List[str]):
        for message in warnings:
            if message not in self.warnings:
                self.warnings.append(message)

    def add_output(self, kind: str, path: str):
        self.outputs[kind] = path

    def _serialize_value(self, value: Any) -> Any:
        if isinstance(value, pd.DataFrame):
            return value.to_dict(orient='records')
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, dict):
            return {key: self._serialize_value(v) for key, v in value.items()}
        return value

    def to_dict(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'config_source': self.experiment.source,
            'config_hash': self.experiment.config_hash,
            'seed': self.experiment.sim.seed,
            'config': self.experiment.document,
            'metrics': self.metrics,
            'warnings': self.warnings,
            'outputs': self.outputs,
        }

    def summary(self) -> str:
        return (f"[{self.command}] config {self.experiment.config_hash[:12]}, seed {self.experiment.sim.seed}: "
                f"{len(self.metrics)} metrics, {len(self.warnings)} warnings, {len(self.outputs)} files")
