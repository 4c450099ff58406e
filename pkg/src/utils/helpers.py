import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np
import pandas as pd


def validate_dataframe(df: pd.DataFrame, required_columns: List[str]) -> bool:
    if df is None or df.empty:
        return False

    missing_columns = set(required_columns) - set(df.columns)
    if missing_columns:
        print(f"Colunas faltando: {sorted(missing_columns)}")
        return False

    return True


def calculate_statistics(values: Union[pd.Series, Iterable[float]]) -> Dict[str, float]:
    series = values if isinstance(values, pd.Series) else pd.Series(list(values), dtype=float)
    if series.empty:
        return {
            'mean': 0.0,
            'std': 0.0,
            'stderr': 0.0,
            'min': 0.0,
            'max': 0.0,
            'n': 0
        }

    n = int(series.size)
    std = float(series.std()) if n > 1 else 0.0

    return {
        'mean': float(series.mean()),
        'std': std,
        'stderr': std / np.sqrt(n),
        'min': float(series.min()),
        'max': float(series.max()),
        'n': n
    }


def clean_numeric_column(series: pd.Series) -> pd.Series:
    # NaN marks cells that did not parse; callers decide whether that is fatal
    series = series.astype(str).str.replace(',', '.').str.strip()
    return pd.to_numeric(series, errors='coerce')


def ensure_dir(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def save_frame(df: pd.DataFrame, filepath: Union[str, Path]) -> Path:
    filepath = Path(filepath)
    ensure_dir(filepath.parent)
    df.to_csv(filepath, index=False, lineterminator='\n')
    return filepath


def _json_default(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Tipo não serializável: {type(value).__name__}")


def to_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default)


def write_json(payload: Any, filepath: Union[str, Path]) -> Path:
    filepath = Path(filepath)
    ensure_dir(filepath.parent)
    filepath.write_text(to_json(payload) + '\n', encoding='utf-8')
    return filepath
