import re
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.demand.models import DemandModel, MarketContext, sample_demand
from src.utils.errors import CsvParseError
from src.utils.helpers import clean_numeric_column, save_frame

REQUIRED_COLUMNS = ['price', 'demand']
DEFAULT_SAMPLE_SIZE = 10_000


class DataLoader:
    def __init__(self, data_dir: str = 'data/samples'):
        self.data_dir = Path(data_dir)

    def load_csv(self, filepath) -> pd.DataFrame:
        """Load a `price,demand` CSV; malformed input raises CsvParseError with its line number."""
        filepath = Path(filepath)
        try:
            df = pd.read_csv(filepath, dtype=str, skipinitialspace=True)
        except pd.errors.EmptyDataError:
            raise CsvParseError(f"Arquivo vazio: {filepath}", line=1)
        except pd.errors.ParserError as e:
            match = re.search(r'line (\d+)', str(e))
            line = int(match.group(1)) if match else None
            raise CsvParseError(f"CSV malformado em {filepath}: {e}", line=line)

        df.columns = [str(c).strip().lower() for c in df.columns]
        missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
        if missing:
            raise CsvParseError(f"Arquivo CSV inválido. Colunas esperadas: {REQUIRED_COLUMNS}", line=1)
        if df.empty:
            raise CsvParseError(f"Arquivo sem registros: {filepath}", line=2)

        for col in REQUIRED_COLUMNS:
            parsed = clean_numeric_column(df[col])
            bad = parsed.isna() | ~np.isfinite(parsed.fillna(0.0))
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                # header is line 1
                raise CsvParseError(
                    f"Valor inválido na coluna '{col}': {df[col].iloc[row]!r}",
                    line=row + 2
                )
            df[col] = parsed

        print(f"Carregados {len(df)} pares preço-demanda de {filepath}")
        return df[REQUIRED_COLUMNS].reset_index(drop=True)

    def generate_samples(self, demand: DemandModel, prices: Sequence[float], rng: np.random.Generator,
                         n: int = DEFAULT_SAMPLE_SIZE, competitor_price: Optional[float] = None,
                         reference_price: Optional[float] = None) -> pd.DataFrame:
        prices = np.asarray(prices, dtype=float)
        mid = float(prices[(len(prices) - 1) // 2])
        o = mid if competitor_price is None else float(competitor_price)
        j = mid if reference_price is None else float(reference_price)

        drawn = rng.choice(prices, size=n)
        rates = {float(p): demand.rate(MarketContext(float(p), o, j)) for p in np.unique(drawn)}
        demands = [sample_demand(rates[float(p)], rng) for p in drawn]

        df = pd.DataFrame({'price': drawn, 'demand': demands}, columns=REQUIRED_COLUMNS)
        print(f"Gerados {len(df)} pares preço-demanda simulados")
        return df

    def save_sample_data(self, df: pd.DataFrame, filename: str = 'price_demand_sample.csv') -> Path:
        filepath = save_frame(df, self.data_dir / filename)
        print(f"Dados salvos em {filepath}")
        return filepath

    def get_data_info(self, df: pd.DataFrame) -> dict:
        if df is None or df.empty:
            return {}

        return {
            'total_registros': len(df),
            'precos_distintos': int(df['price'].nunique()),
            'preco_min': float(df['price'].min()),
            'preco_max': float(df['price'].max()),
            'demanda_media': float(df['demand'].mean()),
            'demanda_total': float(df['demand'].sum())
        }
