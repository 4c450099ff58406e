from typing import List, Tuple

import pandas as pd

from src.utils.errors import ConfigError
from src.utils.helpers import clean_numeric_column, validate_dataframe


class PriceDemandCleaner:
    def __init__(self):
        self.required_columns = ['price', 'demand']

    def clean(self, df: pd.DataFrame) -> pd.DataFrame:
        if df is None or df.empty:
            print("DataFrame vazio recebido")
            return pd.DataFrame(columns=self.required_columns)

        print(f"Iniciando limpeza de {len(df)} registros...")

        df = self._validate_structure(df)
        df = self._handle_missing_values(df)
        df = self._clean_columns(df)
        df = self._remove_invalid(df)
        df = self._sort_data(df)

        print(f"Limpeza concluída: {len(df)} registros válidos")

        return df

    def _validate_structure(self, df: pd.DataFrame) -> pd.DataFrame:
        if not validate_dataframe(df, self.required_columns):
            raise ConfigError(f"DataFrame inválido. Colunas necessárias: {self.required_columns}")

        return df[self.required_columns].copy()

    def _handle_missing_values(self, df: pd.DataFrame) -> pd.DataFrame:
        initial_len = len(df)
        df = df.dropna(subset=self.required_columns)

        removed = initial_len - len(df)
        if removed > 0:
            print(f"  - Removidas {removed} linhas com valores faltantes")

        return df

    def _clean_columns(self, df: pd.DataFrame) -> pd.DataFrame:
        df['price'] = clean_numeric_column(df['price'])
        df['demand'] = clean_numeric_column(df['demand'])
        return df.dropna(subset=self.required_columns)

    def _remove_invalid(self, df: pd.DataFrame) -> pd.DataFrame:
        initial_len = len(df)
        df = df[(df['price'] >= 0) & (df['demand'] >= 0)]

        removed = initial_len - len(df)
        if removed > 0:
            print(f"  - Removidos {removed} registros com preço ou demanda negativos")

        return df

    def _sort_data(self, df: pd.DataFrame) -> pd.DataFrame:
        return df.sort_values(['price', 'demand'], kind='mergesort').reset_index(drop=True)

    def to_pairs(self, df: pd.DataFrame) -> List[Tuple[float, float]]:
        return list(zip(df['price'].astype(float), df['demand'].astype(float)))

    def get_cleaning_summary(self, df_before: pd.DataFrame, df_after: pd.DataFrame) -> dict:
        before = len(df_before) if df_before is not None else 0
        after = len(df_after) if df_after is not None else 0
        return {
            'registros_iniciais': before,
            'registros_finais': after,
            'registros_removidos': before - after,
            'taxa_retencao': round(after / before * 100, 2) if before > 0 else 0
        }
