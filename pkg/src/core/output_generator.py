# src/core/output_generator.py

import json
import math
import os
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

CSV_FLOAT_FORMAT = '%.10g'


def ensure_output_dir(output_dir: str, verbose: bool = True) -> str:
    if not os.path.exists(output_dir):
        os.makedirs(output_dir)
        if verbose:
            print(f"Created output directory: {output_dir}", flush=True)
    return output_dir


def output_path(output_dir: str, prefix: str, suffix: str) -> str:
    """<output_dir>/<prefix>_<suffix>"""
    return os.path.join(output_dir, f"{prefix}_{suffix}")


def write_csv(df: pd.DataFrame, path: str) -> str:
    """Fixed float format and line endings, so equal frames give identical bytes."""
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(record: Dict[str, Any], path: str) -> str:
    """NaN and infinities are written as null."""
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(_jsonable(record), f, indent=2)
        f.write('\n')
    return path


def write_workbook(sheets: Dict[str, pd.DataFrame], path: str) -> str:
    with pd.ExcelWriter(path, engine='openpyxl') as writer:
        for sheet_name, df in sheets.items():
            df.to_excel(writer, sheet_name=sheet_name[:31], index=False)
    return path


def format_table(df: pd.DataFrame, columns: Optional[list] = None, max_rows: int = 40) -> str:
    """Plain-text table for the console."""
    view = df if columns is None else df[[c for c in columns if c in df.columns]]
    if len(view) > max_rows:
        view = view.head(max_rows)
    return view.to_string(index=False, float_format=lambda v: f"{v:.4f}")
