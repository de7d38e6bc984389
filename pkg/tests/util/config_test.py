import tempfile
import unittest
from pathlib import Path

import yaml
from parameterized import parameterized

from fedmesh.util.config import ConfigurationError, FederationConfig
from fedmesh.util.config.definitions import Algorithm, DropoutMode, MergeMode
from tests.federation_util import federation_mapping, make_config

CONFIGS = Path(__file__).resolve().parents[2] / 'configs'

FEDERATION_YAML = """\
algorithm: fedavg
rounds: 3
trainer:
  input_dim: 4
  class_count: 3
  learning_rate: 0.5
layout: layout.yaml
sites:
  - id: 0
  - id: 1
"""

LAYOUT_YAML = """\
site_count: 2
train_counts: [10, 10]
val_counts: [2, 2]
test_count: 20
task:
  kind: classification
  classes: 3
  features: 4
"""


class TestFederationConfig(unittest.TestCase):

    def setUp(self):
        self._directory = tempfile.TemporaryDirectory()
        self.directory = Path(self._directory.name)
        (self.directory / 'layout.yaml').write_text(LAYOUT_YAML)

    def tearDown(self):
        self._directory.cleanup()

    def _load(self, text: str) -> FederationConfig:
        path = self.directory / 'federation.yaml'
        path.write_text(text)
        return FederationConfig.from_yaml(path)

    def _error(self, text: str) -> str:
        with self.assertRaises(ConfigurationError) as context:
            self._load(text)
        return str(context.exception)

    def test_defaults(self):
        config = self._load(FEDERATION_YAML)
        self.assertIs(Algorithm.fedavg, config.algorithm)
        self.assertEqual([0, 1], config.site_ids)
        self.assertEqual(0.01, config.mu)
        self.assertEqual(0.5, config.lam)
        self.assertIs(MergeMode.loss_weighted, config.merge_mode)
        self.assertEqual(0, config.dropout.n_max)
        self.assertIs(DropoutMode.disconnect, config.dropout.mode)
        self.assertTrue(config.rejoin_with_global)
        self.assertEqual(2, config.resolve_layout().site_count)

    def test_layout_path_is_relative_to_the_config_file(self):
        config = self._load(FEDERATION_YAML)
        self.assertEqual([10, 10], config.resolve_layout().train_counts)
        self.assertEqual(str(self.directory.resolve()), config.base_path)

    @parameterized.expand([['lower', 'gcml'], ['upper', 'GCML'], ['display', 'Gcml']])
    def test_algorithm_names_ignore_case(self, name, spelling):  # pylint: disable=unused-argument
        config = self._load(FEDERATION_YAML.replace('algorithm: fedavg', f'algorithm: {spelling}'))
        self.assertIs(Algorithm.gcml, config.algorithm)
        self.assertFalse(config.rejoin_with_global)

    @parameterized.expand([
        ['rounds', ('rounds: 3', 'rounds: 0'), 'federation.yaml:2', "field 'rounds'"],
        ['unknown_algorithm', ('algorithm: fedavg', 'algorithm: fedsgd'), 'federation.yaml:1', 'unknown value'],
        ['learning_rate_type', ('learning_rate: 0.5', 'learning_rate: fast'), 'federation.yaml:6',
         "field 'trainer.learning_rate'"],
        ['learning_rate_value', ('learning_rate: 0.5', 'learning_rate: -1.0'), 'federation.yaml:6',
         'must be positive'],
        ['input_dim', ('input_dim: 4', 'input_dim: 5'), 'federation.yaml:4', 'layout feature count'],
        ['class_count', ('class_count: 3', 'class_count: 4'), 'federation.yaml:5', 'layout class count'],
        ['site_port', ('  - id: 1', '  - id: 1\n    port: 70000'), 'federation.yaml:11', "field 'sites[1].port'"],
        ['duplicate_site', ('  - id: 1', '  - id: 0'), 'federation.yaml:8', 'unique'],
        ['missing_sites', ('sites:\n  - id: 0\n  - id: 1\n', ''), 'federation.yaml', "field 'sites'"],
        ['layout_site_count', ('  - id: 1\n', '  - id: 1\n  - id: 2\n'), 'federation.yaml:7', '2 sites'],
        ['unknown_field', ('rounds: 3', 'rounds: 3\nepochs: 3'), 'federation.yaml', 'unknown field(s) epochs'],
        ['missing_layout_file', ('layout: layout.yaml', 'layout: absent.yaml'), 'absent.yaml', 'cannot read'],
    ])
    def test_invalid_files(self, name, replacement, location, fragment):  # pylint: disable=unused-argument
        message = self._error(FEDERATION_YAML.replace(*replacement))
        self.assertIn(location, message)
        self.assertIn(fragment, message)

    @parameterized.expand([
        ['n_max', 'dropout:\n  n_max: 2\n', 'dropout.n_max', 'federation.yaml:12'],
        ['lambda', 'lambda: 1.5\n', 'lambda', 'federation.yaml:11'],
        ['mu', 'mu: -0.1\n', 'mu', 'federation.yaml:11'],
        ['kl_cap', 'kl_cap: 0\n', 'kl_cap', 'federation.yaml:11'],
        ['merge_mode', 'merge_mode: average\n', 'merge_mode', 'federation.yaml:11'],
        ['timeout', 'round_timeout: 0\n', 'round_timeout', 'federation.yaml:11'],
    ])
    def test_invalid_settings(self, name, extra, field_name, location):  # pylint: disable=unused-argument
        message = self._error(FEDERATION_YAML + extra)
        self.assertIn(f"field '{field_name}'", message)
        self.assertIn(location, message)

    def test_gcml_has_no_global_model_to_rejoin(self):
        text = FEDERATION_YAML.replace('algorithm: fedavg', 'algorithm: gcml') + \
            'dropout:\n  rejoin_with_global: true\n'
        self.assertIn('dropout.rejoin_with_global', self._error(text))

    def test_malformed_yaml(self):
        message = self._error('algorithm: fedavg\nrounds: [3\n')
        self.assertIn('malformed YAML', message)
        self.assertIn('federation.yaml', message)

    def test_top_level_must_be_a_mapping(self):
        self.assertIn('expected a mapping', self._error('- fedavg\n'))

    def test_scientific_notation(self):
        config = self._load(FEDERATION_YAML + 'mu: 1e-3\n')
        self.assertEqual(0.001, config.mu)


class TestConfigDerivation(unittest.TestCase):

    def test_overrides(self):
        config = make_config(algorithm='gcml')
        derived = config.with_overrides({'lambda': 0.2, 'dropout.n_max': 1, 'dropout.mode': 'shutdown',
                                         'merge_mode': 'inverse'})
        self.assertEqual(0.2, derived.lam)
        self.assertEqual(1, derived.dropout.n_max)
        self.assertIs(DropoutMode.shutdown, derived.dropout.mode)
        self.assertIs(MergeMode.inverse, derived.merge_mode)
        self.assertEqual(0.5, config.lam)
        self.assertEqual(config.resolve_layout(), derived.resolve_layout())
        with self.assertRaises(ConfigurationError):
            config.with_overrides({'dropout.n_max': 3})

    def test_reseeded(self):
        config = make_config()
        reseeded = config.reseeded(17)
        self.assertEqual((17, 17, 17), (reseeded.seed, reseeded.trainer.seed, reseeded.resolve_layout().seed))
        self.assertEqual((0, 0), (config.seed, config.trainer.seed))
        self.assertEqual(config.resolve_layout().train_counts, reseeded.resolve_layout().train_counts)

    def test_site_lookup(self):
        config = make_config(overrides={'sites': [{'id': 5}, {'id': 3}, {'id': 9}]})
        self.assertEqual(1, config.site_index(3))
        self.assertEqual(('127.0.0.1', 0), config.site(9).address())
        with self.assertRaises(ConfigurationError) as context:
            config.site(4)
        self.assertIn('[5, 3, 9]', str(context.exception))

    def test_inline_mapping_errors_name_the_field(self):
        mapping = federation_mapping()
        mapping['layout']['val_counts'] = [4, 4]
        with self.assertRaises(ConfigurationError) as context:
            FederationConfig.from_mapping(mapping)
        self.assertIn('<inline>', str(context.exception))
        self.assertIn('val_counts', str(context.exception))


class TestShippedConfigs(unittest.TestCase):

    def test_minimal(self):
        config = FederationConfig.from_yaml(CONFIGS / 'minimal.yaml')
        self.assertEqual([0, 1], config.site_ids)
        self.assertEqual('minimal', config.experiment_prefix)

    def test_gcml(self):
        config = FederationConfig.from_yaml(CONFIGS / 'gcml_5.yaml')
        self.assertIs(Algorithm.gcml, config.algorithm)
        self.assertEqual(5, config.resolve_layout().site_count)
        with open(CONFIGS / 'gcml_5.yaml') as file_handle:
            self.assertEqual('loss_weighted', yaml.safe_load(file_handle)['merge_mode'])
