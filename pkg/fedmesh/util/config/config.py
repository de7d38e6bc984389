# pylint: disable=missing-function-docstring,invalid-name
import dataclasses
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, Union, get_args, get_origin, get_type_hints

import yaml


class ConfigurationError(ValueError):
    """
    Raised for configuration or layout files that cannot be turned into a valid configuration. The message names the
    file, and where known the line and the offending field.
    """

    def __init__(self, message: str, field_name: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.field_name = field_name


class _SafeLoader(yaml.SafeLoader):  # pylint: disable=too-many-ancestors
    pass


# Current version of yaml does not parse numbers like 1e-10 correctly, resulting in a str type.
# Credits to https://stackoverflow.com/a/30462009/14661801
_SafeLoader.add_implicit_resolver(
        u'tag:yaml.org,2002:float',
        re.compile(u'''^(?:
         [-+]?(?:[0-9][0-9_]*)\\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\\.[0-9_]+(?:[eE][-+][0-9]+)?
        |[-+]?[0-9][0-9_]*(?::[0-5]?[0-9])+\\.[0-9_]*
        |[-+]?\\.(?:inf|Inf|INF)
        |\\.(?:nan|NaN|NAN))$''', re.X),
        list(u'-+0123456789.'))


def get_safe_loader() -> Type[yaml.SafeLoader]:
    """
    Function to get a yaml SafeLoader that is capable of properly parsing yaml compatible floats.

    By default otherwise loading a value such as `1e-10` will result in in being parsed as a string.

    @return: SafeLoader capable of parsing scientificly notated yaml values.
    @rtype: yaml.SafeLoader
    """
    return _SafeLoader


@dataclass(frozen=True)
class ConfigSource:
    """
    Origin of a parsed document, used to anchor diagnostics. `lines` maps dotted field paths such as `trainer.seed` or
    `sites[2].port` to 1-based line numbers.
    """
    path: Optional[Path] = None
    lines: Dict[str, int] = field(default_factory=dict)

    def locate(self, field_path: Optional[str]) -> str:
        where = str(self.path) if self.path else '<inline>'
        line = self.lines.get(field_path) if field_path else None
        return f'{where}:{line}' if line else where

    def error(self, field_path: Optional[str], message: str) -> ConfigurationError:
        if field_path:
            return ConfigurationError(f"{self.locate(field_path)}: field '{field_path}': {message}", field_path)
        return ConfigurationError(f'{self.locate(None)}: {message}')

    def nested(self, prefix: str) -> 'ConfigSource':
        """
        Source view for a sub-document, so that nested schemas can report paths relative to themselves.
        """
        cut = len(prefix) + 1
        lines = {key[cut:]: line for key, line in self.lines.items() if key.startswith(prefix + '.')}
        return ConfigSource(self.path, lines)


def _index_lines(node: yaml.Node, prefix: str, index: Dict[str, int]) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = f'{prefix}.{key_node.value}' if prefix else str(key_node.value)
            index[key] = key_node.start_mark.line + 1
            _index_lines(value_node, key, index)
    elif isinstance(node, yaml.SequenceNode):
        for position, item in enumerate(node.value):
            key = f'{prefix}[{position}]'
            index[key] = item.start_mark.line + 1
            _index_lines(item, key, index)


def load_yaml_document(path: Union[str, Path]) -> Tuple[Dict[str, Any], ConfigSource]:
    """
    Load a YAML mapping together with the line index of every key.
    @param path: Path of the YAML file.
    @type path: Union[str, Path]
    @return: Parsed mapping and its source descriptor.
    @rtype: Tuple[Dict[str, Any], ConfigSource]
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as error:
        raise ConfigurationError(f'{path}: cannot read file ({error.strerror or error})') from error
    loader = get_safe_loader()
    try:
        data = yaml.load(text, Loader=loader)
        node = yaml.compose(text, Loader=loader)
    except yaml.YAMLError as error:
        mark = getattr(error, 'problem_mark', None)
        where = f'{path}:{mark.line + 1}' if mark else str(path)
        raise ConfigurationError(f'{where}: malformed YAML ({getattr(error, "problem", error)})') from error
    if not isinstance(data, dict):
        raise ConfigurationError(f'{path}: expected a mapping at the top level')
    lines: Dict[str, int] = {}
    if node is not None:
        _index_lines(node, '', lines)
    return data, ConfigSource(path, lines)


def json_field_name(dataclass_field: dataclasses.Field) -> str:
    letter_case = dataclass_field.metadata.get('dataclasses_json', {}).get('letter_case')
    return letter_case(dataclass_field.name) if letter_case else dataclass_field.name


def _has_default(dataclass_field: dataclasses.Field) -> bool:
    return dataclass_field.default is not dataclasses.MISSING or \
        dataclass_field.default_factory is not dataclasses.MISSING  # type: ignore


def _check_value(value: Any, hint: Any, path: str, source: ConfigSource) -> None:
    # pylint: disable=too-many-return-statements,too-many-branches
    origin = get_origin(hint)
    if hint is Any:
        return
    if origin is Union:
        options = get_args(hint)
        if value is None and type(None) in options:
            return
        remaining = [option for option in options if option is not type(None)]
        if len(remaining) == 1:
            _check_value(value, remaining[0], path, source)
        return
    if value is None:
        raise source.error(path, 'value is required')
    if isinstance(hint, type) and issubclass(hint, Enum):
        try:
            hint(value)
        except ValueError:
            choices = ', '.join(str(member.value) for member in hint)
            raise source.error(path, f"unknown value '{value}', expected one of {choices}") from None
        return
    if dataclasses.is_dataclass(hint):
        if isinstance(value, hint):
            return
        if not isinstance(value, Mapping):
            raise source.error(path, 'expected a mapping')
        check_schema(hint, value, source, path)
        return
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise source.error(path, 'expected a list')
        args = get_args(hint)
        if args:
            for position, item in enumerate(value):
                _check_value(item, args[0], f'{path}[{position}]', source)
        return
    if origin is dict:
        if not isinstance(value, Mapping):
            raise source.error(path, 'expected a mapping')
        return
    if hint is bool:
        if not isinstance(value, bool):
            raise source.error(path, f'expected true or false, got {value!r}')
        return
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise source.error(path, f'expected an integer, got {value!r}')
        return
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise source.error(path, f'expected a number, got {value!r}')
        return
    if hint is str:
        if not isinstance(value, str):
            raise source.error(path, f'expected a string, got {value!r}')


def check_schema(schema: Type, data: Mapping[str, Any], source: ConfigSource, prefix: str = '') -> None:
    """
    Check a raw mapping against a `dataclass_json` schema before decoding it, so that missing fields, wrong types and
    unknown enum values are reported with their file location instead of surfacing as decoding errors.
    @param schema: Dataclass describing the document.
    @type schema: Type
    @param data: Raw mapping parsed from YAML.
    @type data: Mapping[str, Any]
    @param source: Source used to anchor diagnostics.
    @type source: ConfigSource
    @param prefix: Dotted path of `data` within the document.
    @type prefix: str
    @return: None
    @rtype: None
    """
    hints = get_type_hints(schema)
    known = set()
    for dataclass_field in dataclasses.fields(schema):
        if not dataclass_field.init:
            continue
        name = json_field_name(dataclass_field)
        known.add(name)
        path = f'{prefix}.{name}' if prefix else name
        if name not in data:
            if not _has_default(dataclass_field):
                raise source.error(path, 'missing required field')
            continue
        _check_value(data[name], hints[dataclass_field.name], path, source)
    unknown = sorted(str(key) for key in data if key not in known)
    if unknown:
        where = f'{prefix}: ' if prefix else ''
        raise source.error(None, f"{where}unknown field(s) {', '.join(unknown)}")


def deep_merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Merge `overrides` into a copy of `base`. Dotted keys such as `dropout.n_max` address nested mappings.
    """
    merged = dict(base)
    for key, value in overrides.items():
        head, _, rest = str(key).partition('.')
        if rest:
            value = {rest: value}
        if isinstance(value, Mapping) and isinstance(merged.get(head), Mapping):
            merged[head] = deep_merge(dict(merged[head]), value)
        else:
            merged[head] = value
    return merged
