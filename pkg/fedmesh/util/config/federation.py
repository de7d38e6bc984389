# pylint: disable=missing-function-docstring
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Mapping, Optional, Tuple, Union

from dataclasses_json import config, dataclass_json

from fedmesh.util.config.config import ConfigSource, ConfigurationError, check_schema, deep_merge, \
    load_yaml_document
from fedmesh.util.config.definitions import Algorithm, BatchMode, DropoutMode, MergeMode, ModelKind, TaskKind
from fedmesh.util.config.layout import FederationLayout

Address = Tuple[str, int]


@dataclass_json
@dataclass(frozen=True)
class TrainerSpec:
    model_kind: ModelKind = ModelKind.softmax_classifier
    input_dim: int = 10
    class_count: Optional[int] = 3
    learning_rate: float = 0.1
    batch_mode: BatchMode = BatchMode.full_batch
    batch_size: int = 16
    epochs_per_round: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError(f'learning_rate must be positive, got {self.learning_rate}', 'learning_rate')
        if self.epochs_per_round < 1:
            raise ConfigurationError('epochs_per_round must be at least 1', 'epochs_per_round')
        if self.input_dim < 1:
            raise ConfigurationError('input_dim must be at least 1', 'input_dim')
        if self.batch_mode is BatchMode.minibatch and self.batch_size < 1:
            raise ConfigurationError('batch_size must be at least 1', 'batch_size')
        if self.model_kind is ModelKind.softmax_classifier and (self.class_count is None or self.class_count < 2):
            raise ConfigurationError('a softmax classifier needs class_count >= 2', 'class_count')
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError('seed must be an unsigned 64-bit integer', 'seed')

    @property
    def is_classifier(self) -> bool:
        return self.model_kind is ModelKind.softmax_classifier


@dataclass_json
@dataclass(frozen=True)
class DropoutConfig:
    n_max: int = 0
    mode: DropoutMode = DropoutMode.disconnect
    # Whether a site that rejoins a centralized federation adopts the current global model. Unset means yes.
    rejoin_with_global: Optional[bool] = None


@dataclass_json
@dataclass(frozen=True)
class ServerAddress:
    host: str = '127.0.0.1'
    port: int = 0

    def address(self) -> Address:
        return self.host, self.port


@dataclass_json
@dataclass(frozen=True)
class SiteAddress:
    id: int
    host: str = '127.0.0.1'
    port: int = 0

    def address(self) -> Address:
        return self.host, self.port


@dataclass_json
@dataclass
class FederationConfig:
    """
    Complete description of one federation run. `layout` holds either a path (relative to the config file) or an
    inline layout mapping.
    """
    algorithm: Algorithm
    rounds: int
    trainer: TrainerSpec
    layout: Any
    sites: List[SiteAddress]
    seed: int = 0
    mu: float = 0.01
    lam: float = field(default=0.5, metadata=config(field_name='lambda'))
    merge_mode: MergeMode = MergeMode.loss_weighted
    kl_cap: float = 10.0
    receiver_local_training: bool = True
    dropout: DropoutConfig = field(default_factory=DropoutConfig)
    server: ServerAddress = field(default_factory=ServerAddress)
    read_timeout: float = 30.0
    round_timeout: float = 60.0
    registration_timeout: float = 120.0
    output_path: str = 'output'
    experiment_prefix: str = 'federation'
    base_path: Optional[str] = None
    config_path: Optional[str] = None

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> 'FederationConfig':
        data, source = load_yaml_document(path)
        data.setdefault('base_path', str(Path(path).resolve().parent))
        data.setdefault('config_path', str(Path(path).resolve()))
        return cls.from_mapping(data, source)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], source: Optional[ConfigSource] = None) -> 'FederationConfig':
        source = source or ConfigSource()
        check_schema(cls, data, source)
        try:
            federation_config = cls.from_dict(dict(data))  # pylint: disable=no-member
        except ConfigurationError as error:
            field_path = f'trainer.{error.field_name}' if error.field_name else None
            raise source.error(field_path, error.message) from None
        return federation_config.validate(source)

    def validate(self, source: Optional[ConfigSource] = None) -> 'FederationConfig':
        # pylint: disable=too-many-branches
        source = source or ConfigSource(Path(self.config_path) if self.config_path else None)
        if self.rounds < 1:
            raise source.error('rounds', 'must be at least 1')
        if not self.sites:
            raise source.error('sites', 'at least one site is required')
        ids = [site.id for site in self.sites]
        if len(set(ids)) != len(ids):
            raise source.error('sites', f'site ids must be unique, got {ids}')
        for position, site in enumerate(self.sites):
            if not 0 <= site.id < 2 ** 64:
                raise source.error(f'sites[{position}].id', 'must be an unsigned 64-bit integer')
            if not 0 <= site.port < 2 ** 16:
                raise source.error(f'sites[{position}].port', 'must be a port number')
        if not 0 <= self.server.port < 2 ** 16:
            raise source.error('server.port', 'must be a port number')
        if not 0 <= self.dropout.n_max < len(self.sites):
            raise source.error('dropout.n_max', f'must satisfy 0 <= n_max < {len(self.sites)} (number of sites)')
        if self.algorithm is Algorithm.gcml and self.dropout.rejoin_with_global:
            raise source.error('dropout.rejoin_with_global', 'GCML keeps no global model to rejoin with')
        if self.mu < 0:
            raise source.error('mu', 'must be nonnegative')
        if not 0.0 <= self.lam <= 1.0:
            raise source.error('lambda', 'must lie in [0, 1]')
        if not self.kl_cap > 0:
            raise source.error('kl_cap', 'must be positive')
        for name in ('read_timeout', 'round_timeout', 'registration_timeout'):
            if not getattr(self, name) > 0:
                raise source.error(name, 'must be positive')
        if not 0 <= self.seed < 2 ** 64:
            raise source.error('seed', 'must be an unsigned 64-bit integer')
        layout = self.resolve_layout(source)
        if layout.site_count != len(self.sites):
            raise source.error('layout', f'layout has {layout.site_count} sites, config lists {len(self.sites)}')
        self._check_task(layout, source)
        return self

    def _check_task(self, layout: FederationLayout, source: ConfigSource) -> None:
        task = layout.task
        if self.trainer.input_dim != task.features:
            raise source.error('trainer.input_dim', f'{self.trainer.input_dim} does not match the '
                                                    f'layout feature count {task.features}')
        if task.kind is TaskKind.classification:
            if not self.trainer.is_classifier:
                raise source.error('trainer.model_kind', 'a classification layout needs softmax_classifier')
            if self.trainer.class_count != task.classes:
                raise source.error('trainer.class_count', f'{self.trainer.class_count} does not match the '
                                                          f'layout class count {task.classes}')
        else:
            if self.trainer.is_classifier:
                raise source.error('trainer.model_kind', 'a regression layout needs linear_regression')
            if self.algorithm is Algorithm.gcml:
                raise source.error('algorithm', 'GCML needs class probabilities, use a classification layout')

    def resolve_layout(self, source: Optional[ConfigSource] = None) -> FederationLayout:
        """
        Resolve the `layout` reference into a validated layout, caching the result on the instance.
        @return: The federation layout.
        @rtype: FederationLayout
        """
        cached = self.__dict__.get('_layout')
        if cached is not None:
            return cached
        source = source or ConfigSource()
        if isinstance(self.layout, FederationLayout):
            layout = self.layout.validate()
        elif isinstance(self.layout, Mapping):
            layout = FederationLayout.from_mapping(self.layout, source.nested('layout'))
        elif isinstance(self.layout, (str, Path)):
            path = Path(self.layout)
            if not path.is_absolute() and self.base_path:
                path = Path(self.base_path) / path
            layout = FederationLayout.from_yaml(path)
        else:
            raise source.error('layout', 'expected a file path or a layout mapping')
        self.__dict__['_layout'] = layout
        return layout

    @property
    def site_ids(self) -> List[int]:
        return [site.id for site in self.sites]

    def site(self, site_id: int) -> SiteAddress:
        for site in self.sites:
            if site.id == site_id:
                return site
        raise ConfigurationError(f'unknown site id {site_id}, configured ids are {self.site_ids}')

    def site_index(self, site_id: int) -> int:
        """
        Position of a site in the configuration, which is also the index of its layout partition.
        """
        return self.site_ids.index(self.site(site_id).id)

    @property
    def rejoin_with_global(self) -> bool:
        if self.dropout.rejoin_with_global is None:
            return self.algorithm.is_centralized()
        return self.dropout.rejoin_with_global

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'FederationConfig':
        """
        Return a new configuration with `overrides` merged on top. Keys use the file spelling (`lambda`) and may be
        dotted (`dropout.n_max`).
        """
        data = self.to_dict(encode_json=False)  # pylint: disable=no-member
        data['layout'] = self.resolve_layout().to_dict(encode_json=False)  # pylint: disable=no-member
        data = deep_merge(data, overrides)
        source = ConfigSource(Path(self.config_path) if self.config_path else None)
        return FederationConfig.from_mapping(data, source)

    def reseeded(self, seed: int) -> 'FederationConfig':
        """
        Copy of this configuration for one repetition: the federation, the trainer and the data layout all draw from
        `seed`.
        """
        layout = dataclasses.replace(self.resolve_layout(), seed=seed)
        trainer = dataclasses.replace(self.trainer, seed=seed)
        reseeded = dataclasses.replace(self, seed=seed, trainer=trainer, layout=layout)
        reseeded.__dict__['_layout'] = layout
        return reseeded

    def output_directory(self) -> Path:
        return Path(self.output_path)
