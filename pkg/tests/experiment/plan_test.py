import dataclasses
import tempfile
import unittest
from pathlib import Path

import pandas as pd
import yaml
from parameterized import parameterized

from fedmesh.experiment import ExperimentError
from fedmesh.experiment.plan import SUMMARY_COLUMNS, Arm, ExperimentPlan, run_plan
from fedmesh.util.config.config import ConfigurationError
from fedmesh.util.config.definitions import Algorithm
from tests.federation_util import federation_mapping, make_config


def _write_config(directory: Path, name: str = 'federation.yaml', **kwargs) -> Path:
    path = directory / name
    path.write_text(yaml.safe_dump(federation_mapping(**kwargs)))
    return path


def _plan_mapping(**overrides):
    mapping = {
        'output': 'results',
        'repetitions': 2,
        'arms': [
            {'label': 'fedavg', 'config': 'federation.yaml'},
            {'label': 'individual', 'config': 'federation.yaml', 'overrides': {'algorithm': 'individual'}},
        ],
    }
    mapping.update(overrides)
    return mapping


class TestExperimentPlan(unittest.TestCase):

    def setUp(self):
        self._directory = tempfile.TemporaryDirectory()
        self.directory = Path(self._directory.name)
        _write_config(self.directory, rounds=2)

    def tearDown(self):
        self._directory.cleanup()

    def _load(self, **overrides) -> ExperimentPlan:
        path = self.directory / 'plan.yaml'
        path.write_text(yaml.safe_dump(_plan_mapping(**overrides)))
        return ExperimentPlan.from_yaml(path)

    def test_paths_are_relative_to_the_plan_file(self):
        plan = self._load()
        self.assertEqual(self.directory.resolve() / 'results', plan.output)
        self.assertEqual(['fedavg', 'individual'], [arm.label for arm in plan.arms])
        self.assertEqual([0, 1], plan.seeds)
        self.assertIs(Algorithm.individual, plan.arms[1].config.algorithm)

    def test_explicit_seeds(self):
        self.assertEqual([7, 3], self._load(seeds=[7, 3]).seeds)
        self.assertEqual([5, 6], self._load(base_seed=5).seeds)

    @parameterized.expand([
        ['missing_config', {'arms': [{'label': 'a', 'config': 'absent.yaml'}]}, 'arms[0].config'],
        ['seed_count', {'seeds': [1, 2, 3]}, 'seeds'],
        ['no_repetitions', {'repetitions': 0}, 'repetitions'],
        ['duplicate_labels', {'arms': [{'label': 'a', 'config': 'federation.yaml'},
                                       {'label': 'a', 'config': 'federation.yaml'}]}, 'arms'],
        ['duplicate_seeds', {'seeds': [1, 1]}, 'seeds'],
        ['unknown_field', {'repeats': 3}, 'repeats'],
    ])
    def test_invalid_plans(self, name, overrides, fragment):  # pylint: disable=unused-argument
        with self.assertRaises(ConfigurationError) as context:
            self._load(**overrides)
        self.assertIn(fragment, str(context.exception))
        self.assertIn('plan.yaml', str(context.exception))

    def test_invalid_arm_override(self):
        with self.assertRaises(ConfigurationError) as context:
            self._load(arms=[{'label': 'a', 'config': 'federation.yaml', 'overrides': {'lambda': 3.0}}])
        self.assertIn('lambda', str(context.exception))

    def test_run_writes_outputs(self):
        plan = self._load()
        summaries = run_plan(plan, progress=False)
        self.assertEqual(['fedavg', 'individual'], [summary.label for summary in summaries])
        self.assertEqual((0, 1), summaries[0].seeds)
        summary = pd.read_csv(plan.output / 'summary.csv')
        self.assertEqual(SUMMARY_COLUMNS, list(summary.columns))
        self.assertEqual(4, len(summary))
        rows = pd.read_json(plan.output / 'individual.jsonl', lines=True)
        # Two seeds, three sites, two rounds.
        self.assertEqual(12, len(rows))
        self.assertEqual({0, 1}, set(rows['seed']))
        self.assertEqual({'individual'}, set(rows['label']))

    def test_results_do_not_depend_on_workers(self):
        sequential = self._load(output='sequential')
        parallel = self._load(output='parallel', workers=3)
        self.assertEqual(run_plan(sequential, progress=False), run_plan(parallel, progress=False))
        self.assertEqual((sequential.output / 'summary.csv').read_bytes(),
                         (parallel.output / 'summary.csv').read_bytes())

    def test_seeds_change_the_outcome(self):
        summaries = run_plan(self._load(), progress=False)
        losses = summaries[0].test_losses
        self.assertNotEqual(losses[0], losses[1])
        self.assertGreater(summaries[0].std_test_loss, 0.0)

    def test_failed_repetition_names_arm_and_seed(self):
        config = make_config(rounds=2, algorithm='individual')
        # The model no longer fits the generated features, so every run fails.
        config = dataclasses.replace(config, trainer=dataclasses.replace(config.trainer, input_dim=7))
        plan = ExperimentPlan([Arm('broken', config)], [4], self.directory / 'broken')
        with self.assertRaises(ExperimentError) as context:
            run_plan(plan, progress=False)
        self.assertEqual(('broken', 4), (context.exception.label, context.exception.seed))
        self.assertIn("arm 'broken' failed for seed 4", str(context.exception))

    def test_plan_validation(self):
        with self.assertRaises(ConfigurationError):
            ExperimentPlan([], [0], self.directory)
        with self.assertRaises(ConfigurationError):
            ExperimentPlan([Arm('a', make_config())], [0], self.directory, workers=0)
