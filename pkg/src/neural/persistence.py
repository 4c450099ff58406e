import json
from pathlib import Path
from typing import Union

import numpy as np

from src.neural.network import NetworkSpec, ParamSet
from src.utils.errors import ContractError

FORMAT_VERSION = 1


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.json')


def save_params(params: ParamSet, filepath: Union[str, Path]) -> Path:
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    params.theta.astype('<f8').tofile(filepath)
    meta = {
        'format_version': FORMAT_VERSION,
        'spec': params.spec.to_dict(),
        'size': int(params.theta.size),
        'adam_step': int(params.step)
    }
    with open(sidecar_path(filepath), 'w', encoding='utf-8') as f:
        json.dump(meta, f, sort_keys=True, indent=2)
    print(f"Parâmetros salvos em {filepath}")
    return filepath


def load_params(filepath: Union[str, Path]) -> ParamSet:
    filepath = Path(filepath)
    with open(sidecar_path(filepath), 'r', encoding='utf-8') as f:
        meta = json.load(f)

    if meta.get('format_version') != FORMAT_VERSION:
        raise ContractError(f"Versão de formato não suportada: {meta.get('format_version')}")

    spec = NetworkSpec(**meta['spec'])
    theta = np.fromfile(filepath, dtype='<f8')
    if theta.size != meta['size'] or theta.size != spec.n_params:
        raise ContractError(f"Arquivo de parâmetros corrompido: {theta.size} valores, esperado {spec.n_params}")

    params = ParamSet(spec, theta)
    print(f"✓ Parâmetros carregados de {filepath}")
    return params
