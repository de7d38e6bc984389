"""
Robustness of GCML against site drop-out: the same federation under five drop-out scenarios, compared by one-way
ANOVA over the final test accuracies.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

from fedmesh.experiment.plan import Arm, ArmSummary, ExperimentPlan, run_plan
from fedmesh.experiment.statistics import AnovaResult, anova_one_way
from fedmesh.util.config.config import ConfigurationError
from fedmesh.util.config.definitions import Algorithm, DropoutMode
from fedmesh.util.config.federation import FederationConfig
from fedmesh.util.log import getLogger

logger = getLogger(__name__)


def scenario_label(n_max: int, mode: Optional[DropoutMode] = None) -> str:
    return 'n_max=0' if n_max == 0 else f'n_max={n_max}_{mode.value}'


@dataclass
class DropoutStudyReport:
    summaries: List[ArmSummary]
    anova: Optional[AnovaResult]
    anova_error: Optional[str] = None

    def render(self) -> str:
        lines = [f'{"scenario":<22}{"runs":>6}{"mean_acc":>12}{"std_acc":>12}{"mean_loss":>12}']
        for summary in self.summaries:
            lines.append(f'{summary.label:<22}{len(summary.seeds):>6}{summary.mean_test_accuracy:>12.6f}'
                         f'{summary.std_test_accuracy:>12.6f}{summary.mean_test_loss:>12.6f}')
        if self.anova is not None:
            lines.append(f'ANOVA F={self.anova.f_statistic:.6g} p={self.anova.p_value:.6g} '
                         f'df=({self.anova.df_between}, {self.anova.df_within})')
        else:
            lines.append(f'ANOVA undefined: {self.anova_error}')
        return '\n'.join(lines) + '\n'

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render())
        return path


def dropout_robustness_study(config: FederationConfig, n_max_values: Sequence[int] = (1, 2),
                             modes: Sequence[DropoutMode] = (DropoutMode.disconnect, DropoutMode.shutdown),
                             repetitions: int = 10, output: Union[str, Path] = 'output/dropout_study',
                             base_seed: int = 0, workers: int = 1) -> DropoutStudyReport:
    """
    Run the no-drop-out scenario plus every (n_max, mode) combination of a GCML configuration, `repetitions` seeds
    each, and write `report.txt` with one row per scenario and the ANOVA across scenario accuracies.
    @param config: GCML federation configuration.
    @type config: FederationConfig
    @param n_max_values: Drop-out capacities besides 0.
    @type n_max_values: Sequence[int]
    @param modes: Drop-out modes combined with every capacity.
    @type modes: Sequence[DropoutMode]
    @param repetitions: Seeds per scenario.
    @type repetitions: int
    @return: The study report.
    @rtype: DropoutStudyReport
    """
    if config.algorithm is not Algorithm.gcml:
        raise ConfigurationError(f'the drop-out study runs GCML, got {config.algorithm.value}', 'algorithm')
    arms = [Arm(scenario_label(0), config.with_overrides({'dropout.n_max': 0}))]
    for n_max in n_max_values:
        for mode in modes:
            overrides = {'dropout.n_max': n_max, 'dropout.mode': mode.value}
            arms.append(Arm(scenario_label(n_max, mode), config.with_overrides(overrides)))
    plan = ExperimentPlan(arms, [base_seed + k for k in range(repetitions)], Path(output), workers)
    by_label = {summary.label: summary for summary in run_plan(plan)}
    summaries = [by_label[arm.label] for arm in arms]

    anova, anova_error = None, None
    try:
        anova = anova_one_way([summary.test_accuracies for summary in summaries])
    except ValueError as error:
        anova_error = str(error)
        logger.warning(f'ANOVA across drop-out scenarios is undefined: {error}')
    report = DropoutStudyReport(summaries, anova, anova_error)
    report.write(plan.output / 'report.txt')
    return report
