# src/core/experiment_config.py
"""
Loads a JSON experiment file, applies command-line overrides and builds the
typed run configuration.

Every key is checked against SCHEMA: unknown keys are rejected and problems
are reported as "<path>:<line>: <problem>" with the line where the offending
key (or its enclosing section) appears.
"""

import copy
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

from ..calculations.analytic import RECYCLED_THRESHOLDS
from ..calculations.densities import QUADRATURE_SCHEMES, QuadratureSpec
from ..calculations.policy import BELIEF_ESTIMATES, POLICY_KINDS, PREDICTION_SOURCES, RankPolicy
from ..calculations.refine import RECURSIONS, ObservationModel
from ..calculations.simulation import PREEMPTION_COST_MODES, SIM_MODES, SimConfig
from ..calculations.workload import ARRIVAL_KINDS, PREDICTOR_KINDS, SERVICE_KINDS, ArrivalSpec, PredictorModel, ServiceDist
from ..config import (
    CONFIG_SCHEMA_VERSION, DEFAULT_CONCENTRATION, DEFAULT_CONFIDENCE_LEVEL, DEFAULT_MISLABEL_RATE,
    DEFAULT_OUTPUT_PREFIX, DEFAULT_RECYCLED_THRESHOLD, DEFAULT_REFINE_SIZE_SCALE,
    DEFAULT_REFINE_TRAJECTORIES, DEFAULT_SWEEP_WORKERS, DEFAULT_VALIDATION_TOLERANCE,
)
from .domain import Bins, DomainError


class ConfigError(ValueError):
    """Invalid experiment configuration, located by file and line."""

    def __init__(self, problem: str, path: str = '<config>', line: Optional[int] = None,
                 field: Optional[str] = None):
        self.problem = problem
        self.path = path
        self.line = line
        self.field = field
        location = f"{path}:{line}" if line is not None else path
        super().__init__(f"{location}: {problem}")


@dataclass(frozen=True)
class Field:
    types: Tuple[type, ...]
    required: bool = False
    choices: Optional[Sequence[Any]] = None
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    positive: bool = False
    nullable: bool = False
    items: Optional[Tuple[type, ...]] = None
    allow_inf: bool = False


NUMBER = (int, float)
INT = (int,)
STR = (str,)
BOOL = (bool,)
LIST = (list,)

PREDICTOR_SCHEMA = {
    'kind': Field(STR, required=True, choices=PREDICTOR_KINDS),
    'noise': Field(NUMBER, minimum=0, maximum=1),
    'concentration': Field(NUMBER, positive=True, allow_inf=True),
    'step_noise': Field(NUMBER, minimum=0),
    'trajectory_memory': Field(NUMBER, minimum=0, maximum=1),
}

SCHEMA: Dict[str, Any] = {
    'schema_version': Field(INT, required=True),
    'mode': Field(STR, choices=SIM_MODES),
    'seed': Field(INT, minimum=0),
    'replications': Field(INT, minimum=1),
    'warmup_fraction': Field(NUMBER, minimum=0, maximum=1),
    'arrival': {
        'kind': Field(STR, required=True, choices=ARRIVAL_KINDS),
        'rate': Field(NUMBER, positive=True),
        'count': Field(INT, minimum=1),
        'horizon': Field(NUMBER, positive=True),
        'n': Field(INT, minimum=1),
        'at_time': Field(NUMBER, minimum=0),
    },
    'service': {
        'kind': Field(STR, required=True, choices=SERVICE_KINDS),
        'mean': Field(NUMBER, positive=True),
        'value': Field(NUMBER, positive=True),
        'shape': Field(NUMBER, positive=True),
        'lo': Field(NUMBER, positive=True),
        'hi': Field(NUMBER, positive=True),
    },
    'predictor': PREDICTOR_SCHEMA,
    'policy': {
        'kind': Field(STR, choices=POLICY_KINDS),
        'C': Field(NUMBER, minimum=0, maximum=1),
        'prediction_source': Field(STR, choices=PREDICTION_SOURCES),
        'belief_estimate': Field(STR, choices=BELIEF_ESTIMATES),
    },
    'memory': {
        'budget': Field(NUMBER, positive=True, nullable=True),
        'preemption_cost_mode': Field(STR, choices=PREEMPTION_COST_MODES),
        'recompute_rate': Field(INT, minimum=1),
        'record_trace': Field(BOOL),
    },
    'bins': {
        'lower': Field(NUMBER, minimum=0),
        'upper': Field(NUMBER, positive=True),
        'count': Field(INT, minimum=1),
        'boundaries': Field(LIST, items=NUMBER),
    },
    'sweep': {
        'rates': Field(LIST, items=NUMBER),
        'C': Field(LIST, items=NUMBER),
        'workers': Field(INT, minimum=1),
        'confidence_level': Field(NUMBER, positive=True, maximum=1),
    },
    'analytic': {
        'scheme': Field(STR, choices=QUADRATURE_SCHEMES),
        'rel_tol': Field(NUMBER, positive=True),
        'abs_tol': Field(NUMBER, positive=True),
        'tail_mass': Field(NUMBER, positive=True, maximum=1),
        'nodes': Field(INT, minimum=1),
        'panels': Field(INT, minimum=1),
        'table_points': Field(INT, minimum=10),
        'recycled_threshold': Field(STR, choices=RECYCLED_THRESHOLDS),
        'curve_points': Field(INT, minimum=2),
        'x_grid': Field(LIST, items=NUMBER),
    },
    'validation': {
        'tolerance': Field(NUMBER, minimum=0),
        'analytic_predictor': PREDICTOR_SCHEMA,
    },
    'refine': {
        'trajectories': Field(INT, minimum=1),
        'size_scale': Field(NUMBER, positive=True),
        'recursion': Field(STR, choices=RECURSIONS),
        'concentration': Field(NUMBER, positive=True, allow_inf=True),
        'mislabel_rate': Field(NUMBER, minimum=0, maximum=1),
    },
    'output': {
        'dir': Field(STR),
        'prefix': Field(STR),
        'xlsx': Field(BOOL),
    },
}
REQUIRED_SECTIONS = ('arrival', 'service')


@dataclass(frozen=True)
class RefineSettings:
    trajectories: int = DEFAULT_REFINE_TRAJECTORIES
    size_scale: float = DEFAULT_REFINE_SIZE_SCALE
    recursion: str = 'posterior'
    model: ObservationModel = ObservationModel()


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    sim: SimConfig
    quad: QuadratureSpec = QuadratureSpec()
    rates: Tuple[float, ...] = ()
    Cs: Tuple[float, ...] = ()
    workers: int = DEFAULT_SWEEP_WORKERS
    confidence_level: float = DEFAULT_CONFIDENCE_LEVEL
    tolerance: float = DEFAULT_VALIDATION_TOLERANCE
    analytic_predictor: Optional[PredictorModel] = None
    recycled_threshold: str = DEFAULT_RECYCLED_THRESHOLD
    curve_points: int = 200
    x_grid: Tuple[float, ...] = ()
    refine: RefineSettings = RefineSettings()
    output_dir: Optional[str] = None
    prefix: str = DEFAULT_OUTPUT_PREFIX
    xlsx: bool = False
    source: str = '<config>'
    document: Dict[str, Any] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        """sha256 of the normalised document (overrides applied, keys sorted)."""
        canonical = json.dumps(self.document, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


class _Locator:
    """Maps dotted field paths to file lines; overridden fields point at the flag instead."""

    def __init__(self, path: str, text: str, overridden: Iterable[str] = ()):
        self.path = path
        self.text = text
        self.overridden = set(overridden)

    def line_of(self, dotted: str) -> int:
        pos = 0
        for part in dotted.split('.'):
            match = re.compile(r'"%s"\s*:' % re.escape(part)).search(self.text, pos)
            if match is None:
                break
            pos = match.start()
        return self.text.count('\n', 0, pos) + 1

    def error(self, problem: str, dotted: str) -> ConfigError:
        parts = dotted.split('.')
        for i in range(len(parts), 0, -1):
            prefix = '.'.join(parts[:i])
            if prefix in self.overridden:
                return ConfigError(problem, path=f"--set {prefix}", field=dotted)
        return ConfigError(problem, path=self.path, line=self.line_of(dotted) if dotted else 1, field=dotted)


def _type_name(types: Tuple[type, ...]) -> str:
    if types == NUMBER:
        return 'a number'
    return {int: 'an integer', str: 'a string', bool: 'true/false', list: 'a list'}[types[0]]


def _is_instance(value: Any, types: Tuple[type, ...]) -> bool:
    if isinstance(value, bool) and bool not in types:
        return False
    return isinstance(value, types)


def _check_field(value: Any, spec: Field, dotted: str, locator: _Locator) -> Any:
    if value is None:
        if spec.nullable:
            return None
        raise locator.error(f"'{dotted}' must not be null", dotted)
    if spec.allow_inf and value == 'inf':
        return math.inf
    if not _is_instance(value, spec.types):
        raise locator.error(f"'{dotted}' must be {_type_name(spec.types)}, got {json.dumps(value)}", dotted)
    if spec.items is not None:
        for i, item in enumerate(value):
            if not _is_instance(item, spec.items):
                raise locator.error(f"'{dotted}[{i}]' must be {_type_name(spec.items)}, got {json.dumps(item)}", dotted)
    if spec.choices is not None and value not in spec.choices:
        raise locator.error(f"'{dotted}' must be one of {list(spec.choices)}, got '{value}'", dotted)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if spec.positive and not value > 0:
            raise locator.error(f"'{dotted}' must be > 0, got {value}", dotted)
        if spec.minimum is not None and value < spec.minimum:
            raise locator.error(f"'{dotted}' must be >= {spec.minimum}, got {value}", dotted)
        if spec.maximum is not None and value > spec.maximum:
            raise locator.error(f"'{dotted}' must be <= {spec.maximum}, got {value}", dotted)
    return value


def _check_section(document: Dict[str, Any], schema: Dict[str, Any], prefix: str, locator: _Locator) -> Dict[str, Any]:
    checked: Dict[str, Any] = {}
    for key in document:
        if key not in schema:
            dotted = f"{prefix}{key}"
            raise locator.error(f"unknown key '{dotted}'", dotted)
    for key, spec in schema.items():
        dotted = f"{prefix}{key}"
        if isinstance(spec, dict):
            if key not in document:
                if prefix == '' and key in REQUIRED_SECTIONS:
                    raise locator.error(f"missing required section '{dotted}'", prefix.rstrip('.'))
                continue
            value = document[key]
            if not isinstance(value, dict):
                raise locator.error(f"'{dotted}' must be an object", dotted)
            checked[key] = _check_section(value, spec, f"{dotted}.", locator)
        elif key in document:
            checked[key] = _check_field(document[key], spec, dotted, locator)
        elif spec.required:
            raise locator.error(f"missing required field '{dotted}'", prefix.rstrip('.'))
    return checked


def parse_override(assignment: str) -> Tuple[str, Any]:
    """'a.b=value' -> ('a.b', value); the value is JSON when it parses, else a string."""
    if '=' not in assignment:
        raise ConfigError(f"override must look like key=value, got '{assignment}'", path='--set')
    key, raw = assignment.split('=', 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override has an empty key: '{assignment}'", path='--set')
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(document: Dict[str, Any], overrides: Sequence[Tuple[str, Any]]) -> Dict[str, Any]:
    result = copy.deepcopy(document)
    for dotted, value in overrides:
        target = result
        parts = dotted.split('.')
        for part in parts[:-1]:
            if not isinstance(target.get(part), dict):
                target[part] = {}
            target = target[part]
        target[parts[-1]] = value
    return result


def _build(section: str, locator: _Locator, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except DomainError as e:
        raise locator.error(str(e), section) from e


def _predictor(values: Dict[str, Any], section: str, locator: _Locator) -> PredictorModel:
    return _build(section, locator, PredictorModel, **values)


def _bins(values: Dict[str, Any], locator: _Locator) -> Bins:
    if 'boundaries' in values:
        if any(key in values for key in ('lower', 'upper', 'count')):
            raise locator.error("'bins' takes either 'boundaries' or lower/upper/count, not both", 'bins')
        return _build('bins', locator, Bins, tuple(values['boundaries']))
    default = Bins.default_token_bins()
    return _build(
        'bins', locator, Bins.uniform,
        values.get('lower', default.lower), values.get('upper', default.upper), values.get('count', default.k),
    )


def build_experiment(document: Dict[str, Any], source: str = '<config>', text: Optional[str] = None,
                     overridden: Iterable[str] = ()) -> ExperimentConfig:
    """Validate a parsed document and build the typed configuration."""
    locator = _Locator(source, text if text is not None else json.dumps(document, indent=2), overridden)
    if not isinstance(document, dict):
        raise locator.error("top level must be an object", '')
    checked = _check_section(document, SCHEMA, '', locator)
    if checked['schema_version'] != CONFIG_SCHEMA_VERSION:
        raise locator.error(
            f"unsupported schema_version {checked['schema_version']}, expected {CONFIG_SCHEMA_VERSION}",
            'schema_version',
        )

    bins = _bins(checked.get('bins', {}), locator)
    memory = checked.get('memory', {})
    budget = memory.get('budget')
    sim_kwargs = {
        key: checked[key] for key in ('mode', 'seed', 'replications', 'warmup_fraction') if key in checked
    }
    sim_kwargs.update({
        'arrival': _build('arrival', locator, ArrivalSpec, **checked['arrival']),
        'service': _build('service', locator, ServiceDist, **checked['service']),
        'predictor': _predictor(checked.get('predictor', {'kind': 'perfect'}), 'predictor', locator),
        'policy': _build('policy', locator, RankPolicy, **checked.get('policy', {})),
        'memory_budget': math.inf if budget is None else float(budget),
        'bins': bins,
    })
    for key in ('preemption_cost_mode', 'recompute_rate', 'record_trace'):
        if key in memory:
            sim_kwargs[key] = memory[key]
    sim = _build('mode', locator, SimConfig, **sim_kwargs)

    analytic = dict(checked.get('analytic', {}))
    threshold = analytic.pop('recycled_threshold', DEFAULT_RECYCLED_THRESHOLD)
    curve_points = analytic.pop('curve_points', 200)
    x_grid = tuple(float(x) for x in analytic.pop('x_grid', ()))
    quad = _build('analytic', locator, QuadratureSpec, **analytic)

    sweep = checked.get('sweep', {})
    validation = checked.get('validation', {})
    refine = checked.get('refine', {})
    output = checked.get('output', {})
    refine_settings = RefineSettings(
        trajectories=refine.get('trajectories', DEFAULT_REFINE_TRAJECTORIES),
        size_scale=float(refine.get('size_scale', DEFAULT_REFINE_SIZE_SCALE)),
        recursion=refine.get('recursion', 'posterior'),
        model=_build('refine', locator, ObservationModel,
                     concentration=refine.get('concentration', DEFAULT_CONCENTRATION),
                     mislabel_rate=refine.get('mislabel_rate', DEFAULT_MISLABEL_RATE)),
    )
    analytic_predictor = None
    if 'analytic_predictor' in validation:
        analytic_predictor = _predictor(validation['analytic_predictor'], 'validation.analytic_predictor', locator)

    return ExperimentConfig(
        sim=sim,
        quad=quad,
        rates=tuple(float(r) for r in sweep.get('rates', ())),
        Cs=tuple(float(c) for c in sweep.get('C', ())),
        workers=sweep.get('workers', DEFAULT_SWEEP_WORKERS),
        confidence_level=float(sweep.get('confidence_level', DEFAULT_CONFIDENCE_LEVEL)),
        tolerance=float(validation.get('tolerance', DEFAULT_VALIDATION_TOLERANCE)),
        analytic_predictor=analytic_predictor,
        recycled_threshold=threshold,
        curve_points=curve_points,
        x_grid=x_grid,
        refine=refine_settings,
        output_dir=output.get('dir'),
        prefix=output.get('prefix', DEFAULT_OUTPUT_PREFIX),
        xlsx=output.get('xlsx', False),
        source=source,
        document=document,
    )


def load_experiment(config_path: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """
    Read, override and validate an experiment file.

    Args:
        config_path: path to the JSON experiment file
        overrides: 'dotted.key=value' assignments applied on top of the file

    Raises:
        FileNotFoundError: if the file does not exist
        ConfigError: on JSON syntax errors or schema violations
    """
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Experiment file not found: {config_path}")
    with open(config_path, 'r', encoding='utf-8') as f:
        text = f.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg} (column {e.colno})", path=config_path, line=e.lineno) from e

    parsed = [parse_override(item) for item in overrides]
    if parsed:
        document = apply_overrides(document, parsed)
    return build_experiment(document, source=config_path, text=text, overridden=[key for key, _ in parsed])
