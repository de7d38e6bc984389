from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from dataclasses_json import dataclass_json

from fedmesh.util.config.config import ConfigSource, ConfigurationError, check_schema, load_yaml_document
from fedmesh.util.config.definitions import SkewKind, TaskKind


@dataclass_json
@dataclass(frozen=True)
class TaskSpec:
    """
    Synthetic task drawn by the generator. Classification samples come from `classes` unit-variance Gaussian clusters
    whose means are spread with standard deviation `separation`; regression targets are a random linear function of
    the features plus Gaussian noise of standard deviation `noise`.
    """
    kind: TaskKind = TaskKind.classification
    classes: int = 3
    features: int = 10
    separation: float = 0.6
    noise: float = 0.1


@dataclass_json
@dataclass(frozen=True)
class SkewSpec:
    kind: SkewKind = SkewKind.iid
    # Feature-shift magnitude per site, only read for feature skew.
    shifts: List[float] = field(default_factory=list)


@dataclass_json
@dataclass(frozen=True)
class FederationLayout:
    site_count: int
    train_counts: List[int]
    val_counts: List[int]
    test_count: int
    skew: SkewSpec = field(default_factory=SkewSpec)
    task: TaskSpec = field(default_factory=TaskSpec)
    seed: int = 0
    max_cases: int = 1_000_000

    @property
    def train_total(self) -> int:
        return sum(self.train_counts)

    def validate(self, source: Optional[ConfigSource] = None) -> 'FederationLayout':
        """
        Check the cross-field invariants of a layout.
        @param source: Source used to anchor diagnostics.
        @type source: Optional[ConfigSource]
        @return: The layout itself, for chaining.
        @rtype: FederationLayout
        """
        source = source or ConfigSource()
        if self.site_count < 1:
            raise source.error('site_count', 'must be at least 1')
        for name in ('train_counts', 'val_counts'):
            counts = getattr(self, name)
            if len(counts) != self.site_count:
                raise source.error(name, f'has {len(counts)} entries, expected site_count={self.site_count}')
            for position, count in enumerate(counts):
                if count < 1:
                    raise source.error(f'{name}[{position}]', 'counts must be at least 1')
                if count > self.max_cases:
                    raise source.error(f'{name}[{position}]', f'{count} exceeds max_cases={self.max_cases}')
        if self.test_count < 1:
            raise source.error('test_count', 'must be at least 1')
        if self.test_count > self.max_cases:
            raise source.error('test_count', f'{self.test_count} exceeds max_cases={self.max_cases}')
        if self.skew.kind is SkewKind.feature:
            if len(self.skew.shifts) != self.site_count:
                raise source.error('skew.shifts', f'has {len(self.skew.shifts)} entries, '
                                                  f'expected site_count={self.site_count}')
            if any(shift < 0 for shift in self.skew.shifts):
                raise source.error('skew.shifts', 'shift magnitudes must be nonnegative')
        if self.task.features < 1:
            raise source.error('task.features', 'must be at least 1')
        if self.task.kind is TaskKind.classification and self.task.classes < 2:
            raise source.error('task.classes', 'a classification task needs at least 2 classes')
        if self.task.separation < 0 or self.task.noise < 0:
            raise source.error('task', 'separation and noise must be nonnegative')
        if self.seed < 0:
            raise source.error('seed', 'must be nonnegative')
        return self

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], source: Optional[ConfigSource] = None) -> 'FederationLayout':
        source = source or ConfigSource()
        data = _expand_totals(dict(data), source)
        check_schema(cls, data, source)
        layout = cls.from_dict(data)  # pylint: disable=no-member
        return layout.validate(source)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> 'FederationLayout':
        data, source = load_yaml_document(path)
        return cls.from_mapping(data, source)


def _even_split(total: int, parts: int) -> List[int]:
    base, remainder = divmod(total, parts)
    return [base + (1 if position < remainder else 0) for position in range(parts)]


def _expand_totals(data: Dict[str, Any], source: ConfigSource) -> Dict[str, Any]:
    """
    Replace `train_total` / `val_total` by an even per-site split, remainder to the first sites.
    """
    site_count = data.get('site_count')
    for total_key, counts_key in (('train_total', 'train_counts'), ('val_total', 'val_counts')):
        if total_key not in data:
            continue
        total = data.pop(total_key)
        if counts_key in data:
            raise source.error(total_key, f'cannot be combined with {counts_key}')
        if not isinstance(site_count, int) or isinstance(site_count, bool) or site_count < 1:
            raise source.error('site_count', f'must be a positive integer to split {total_key}')
        if not isinstance(total, int) or isinstance(total, bool) or total < site_count:
            raise source.error(total_key, f'must be an integer of at least site_count={site_count}')
        data[counts_key] = _even_split(total, site_count)
    return data


def load_layout(path: Union[str, Path]) -> FederationLayout:
    """
    Load and validate a federation layout file.
    @param path: Path to the YAML layout.
    @type path: Union[str, Path]
    @return: Parsed layout.
    @rtype: FederationLayout
    @raise ConfigurationError: On schema violations, naming the file, line and field.
    """
    return FederationLayout.from_yaml(path)


__all__ = ['TaskSpec', 'SkewSpec', 'FederationLayout', 'load_layout', 'ConfigurationError']
