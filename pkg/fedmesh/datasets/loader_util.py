from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd
import yaml

from fedmesh.datasets.dataset import FederatedDataset, LabeledDataset
from fedmesh.util.config.config import ConfigurationError, load_yaml_document
from fedmesh.util.config.layout import load_layout  # pylint: disable=unused-import

MANIFEST_NAME = 'federation.yaml'


def _write_csv(path: Path, dataset: LabeledDataset) -> None:
    frame = pd.DataFrame(dataset.features, columns=[f'f{column}' for column in range(dataset.input_dim)])
    frame['label'] = dataset.labels
    # 17 significant digits round-trip every double.
    frame.to_csv(path, index=False, float_format='%.17g')


def _read_csv(path: Path, class_count) -> LabeledDataset:
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise ConfigurationError(f'{path}: cannot read dataset ({error})') from error
    header = list(frame.columns)
    if not header or header[-1] != 'label' or header[:-1] != [f'f{column}' for column in range(len(header) - 1)]:
        raise ConfigurationError(f'{path}:1: expected header f0..f{{d-1}},label')
    if frame.empty:
        frame = frame.astype(np.float64)
    for column in header:
        if not pd.api.types.is_numeric_dtype(frame[column]):
            raise ConfigurationError(f'{path}: column {column} holds non-numeric values')
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        raise ConfigurationError(f'{path}:{int(np.argmax(missing)) + 2}: expected {len(header)} values')
    labels = frame['label'].to_numpy()
    if class_count is not None:
        if not np.all(labels == np.round(labels)):
            raise ConfigurationError(f'{path}: class labels must be integers')
        labels = labels.astype(np.int64)
    return LabeledDataset(frame[header[:-1]].to_numpy(dtype=np.float64), labels, class_count)


def export_dataset(dataset: FederatedDataset, directory: Union[str, Path]) -> Path:
    """
    Write a federation as CSV files plus a `federation.yaml` manifest.
    @param dataset: Federation to export.
    @type dataset: FederatedDataset
    @param directory: Target directory, created when missing.
    @type directory: Union[str, Path]
    @return: Path of the manifest.
    @rtype: Path
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sites: List[Dict] = []
    for index, (train, validation) in enumerate(zip(dataset.train, dataset.validation)):
        entry = {'index': index, 'train': f'site_{index}_train.csv', 'val': f'site_{index}_val.csv'}
        _write_csv(directory / entry['train'], train)
        _write_csv(directory / entry['val'], validation)
        sites.append(entry)
    _write_csv(directory / 'test.csv', dataset.test)
    manifest = {
        'site_count': dataset.site_count,
        'features': dataset.test.input_dim,
        'class_count': dataset.test.class_count,
        'sites': sites,
        'test': 'test.csv',
    }
    manifest_path = directory / MANIFEST_NAME
    manifest_path.write_text(yaml.safe_dump(manifest, sort_keys=False))
    return manifest_path


def import_dataset(directory: Union[str, Path]) -> FederatedDataset:
    directory = Path(directory)
    manifest, source = load_yaml_document(directory / MANIFEST_NAME)
    for key in ('sites', 'test'):
        if key not in manifest:
            raise source.error(key, 'missing required field')
    class_count = manifest.get('class_count')
    train, validation = [], []
    for position, entry in enumerate(manifest['sites']):
        if not isinstance(entry, dict) or 'train' not in entry or 'val' not in entry:
            raise source.error(f'sites[{position}]', 'expected a mapping with train and val files')
        train.append(_read_csv(directory / entry['train'], class_count))
        validation.append(_read_csv(directory / entry['val'], class_count))
    return FederatedDataset(tuple(train), tuple(validation), _read_csv(directory / manifest['test'], class_count))
