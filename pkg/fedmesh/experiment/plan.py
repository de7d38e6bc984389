"""
Experiment plans: arms of federation configurations, each repeated over a list of seeds.
"""
import sys
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dataclasses_json import dataclass_json
from tqdm import tqdm

from fedmesh.core.simulation import FederationHistory, run_in_process, run_local_cluster
from fedmesh.experiment import ExperimentError
from fedmesh.util.config.config import ConfigSource, ConfigurationError, check_schema, load_yaml_document
from fedmesh.util.config.federation import FederationConfig
from fedmesh.util.data_container import record_rows
from fedmesh.util.log import getLogger

logger = getLogger(__name__)

SUMMARY_COLUMNS = ['label', 'seed', 'final_test_loss', 'final_test_accuracy']


@dataclass_json
@dataclass(frozen=True)
class ArmSpec:
    label: str
    config: str
    overrides: Dict[str, Any] = field(default_factory=dict)


@dataclass_json
@dataclass
class PlanSpec:
    """
    Plan file schema. `config` paths of the arms are relative to the plan file.
    """
    arms: List[ArmSpec]
    output: str = 'output/experiment'
    repetitions: int = 10
    seeds: Optional[List[int]] = None
    base_seed: int = 0
    workers: int = 1
    socket: bool = False


@dataclass(frozen=True)
class Arm:
    label: str
    config: FederationConfig


@dataclass
class ExperimentPlan:
    arms: List[Arm]
    seeds: List[int]
    output: Path
    workers: int = 1
    socket: bool = False

    def __post_init__(self):
        self.output = Path(self.output)
        labels = [arm.label for arm in self.arms]
        if not labels:
            raise ConfigurationError('a plan needs at least one arm', 'arms')
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f'arm labels must be unique, got {labels}', 'arms')
        if not self.seeds:
            raise ConfigurationError('a plan needs at least one repetition', 'repetitions')
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f'repetition seeds must be distinct, got {self.seeds}', 'seeds')
        if self.workers < 1:
            raise ConfigurationError('workers must be at least 1', 'workers')

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> 'ExperimentPlan':
        data, source = load_yaml_document(path)
        return cls.from_mapping(data, source, Path(path).resolve().parent)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], source: Optional[ConfigSource] = None,
                     base_path: Optional[Path] = None) -> 'ExperimentPlan':
        source = source or ConfigSource()
        check_schema(PlanSpec, data, source)
        spec: PlanSpec = PlanSpec.from_dict(dict(data))  # pylint: disable=no-member
        if spec.repetitions < 1:
            raise source.error('repetitions', 'must be at least 1')
        if spec.seeds is not None and len(spec.seeds) != spec.repetitions:
            raise source.error('seeds', f'lists {len(spec.seeds)} seeds for {spec.repetitions} repetitions')
        seeds = spec.seeds if spec.seeds is not None else [spec.base_seed + k for k in range(spec.repetitions)]
        arms = []
        for position, arm in enumerate(spec.arms):
            config_path = Path(arm.config)
            if not config_path.is_absolute() and base_path is not None:
                config_path = base_path / config_path
            if not config_path.is_file():
                raise source.error(f'arms[{position}].config', f'no such file {config_path}')
            config = FederationConfig.from_yaml(config_path)
            arms.append(Arm(arm.label, config.with_overrides(arm.overrides) if arm.overrides else config))
        output = Path(spec.output)
        if not output.is_absolute() and base_path is not None:
            output = base_path / output
        try:
            return cls(arms, seeds, output, spec.workers, spec.socket)
        except ConfigurationError as error:
            raise source.error(error.field_name, error.message) from None


@dataclass(frozen=True)
class ArmSummary:
    label: str
    seeds: Tuple[int, ...]
    test_losses: Tuple[float, ...]
    test_accuracies: Tuple[Optional[float], ...]

    @staticmethod
    def _spread(values: Sequence[float]) -> float:
        return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0

    @property
    def mean_test_loss(self) -> float:
        return float(np.mean(self.test_losses))

    @property
    def std_test_loss(self) -> float:
        return self._spread(self.test_losses)

    @property
    def mean_test_accuracy(self) -> Optional[float]:
        if any(accuracy is None for accuracy in self.test_accuracies):
            return None
        return float(np.mean(self.test_accuracies))

    @property
    def std_test_accuracy(self) -> Optional[float]:
        if any(accuracy is None for accuracy in self.test_accuracies):
            return None
        return self._spread(self.test_accuracies)


@dataclass(frozen=True)
class _Job:
    arm: Arm
    seed: int
    output: Path
    socket: bool


def _run_job(job: _Job) -> Tuple[str, int, FederationHistory]:
    config = job.arm.config.reseeded(job.seed)
    try:
        if job.socket:
            history = run_local_cluster(config, 'thread', job.output / 'runs' / f'{job.arm.label}_{job.seed}')
        else:
            history = run_in_process(config)
    except Exception as error:  # pylint: disable=broad-except
        raise ExperimentError(job.arm.label, job.seed, error) from error
    return job.arm.label, job.seed, history


def run_plan(plan: ExperimentPlan, progress: Optional[bool] = None) -> List[ArmSummary]:
    """
    Run every arm for every seed, write `<label>.jsonl` (all metric rows, tagged with the seed) and `summary.csv` to
    the plan output and summarize each arm. Output files and summaries are sorted by label and seed, so they do not
    depend on the order in which parallel workers finish.
    @param plan: Plan to execute.
    @type plan: ExperimentPlan
    @param progress: Show a progress bar; defaults to whether stderr is a terminal.
    @type progress: Optional[bool]
    @return: One summary per arm, sorted by label.
    @rtype: List[ArmSummary]
    """
    jobs = [_Job(arm, seed, plan.output, plan.socket) for arm in plan.arms for seed in plan.seeds]
    disable = not (sys.stderr.isatty() if progress is None else progress)
    if plan.workers > 1:
        with ThreadPool(plan.workers) as pool:
            results = list(tqdm(pool.imap_unordered(_run_job, jobs), total=len(jobs), disable=disable))
    else:
        results = [_run_job(job) for job in tqdm(jobs, disable=disable)]
    results.sort(key=lambda result: (result[0], result[1]))

    plan.output.mkdir(parents=True, exist_ok=True)
    rows: Dict[str, List[Dict[str, Any]]] = {}
    summary_rows = []
    for label, seed, history in results:
        rows.setdefault(label, []).extend(record_rows(history.records, label=label, seed=seed))
        summary_rows.append({'label': label, 'seed': seed, 'final_test_loss': history.final_test_loss,
                             'final_test_accuracy': history.final_test_accuracy})
    for label, label_rows in rows.items():
        pd.DataFrame(label_rows).to_json(plan.output / f'{label}.jsonl', orient='records', lines=True,
                                         double_precision=15)
    summary = pd.DataFrame(summary_rows, columns=SUMMARY_COLUMNS)
    summary.to_csv(plan.output / 'summary.csv', index=False)
    logger.info(f'Wrote {len(summary_rows)} results to {plan.output / "summary.csv"}')

    summaries = []
    for label, group in summary.groupby('label', sort=True):
        accuracies = tuple(None if pd.isna(value) else float(value) for value in group['final_test_accuracy'])
        summaries.append(ArmSummary(label, tuple(int(seed) for seed in group['seed']),
                                    tuple(float(loss) for loss in group['final_test_loss']), accuracies))
    return summaries
