"""Layered run configuration.

Defaults come from the section models; a TOML file with ``section.key = value`` entries is applied on top,
then ``--override section.key=value`` pairs, then the dedicated command-line flags.
"""
import logging
from typing import Any, Dict, Iterator, Optional, Sequence, Tuple

import tomli
from pydantic import BaseModel, root_validator, ValidationError

from jgrp2o.common_types import DatasetFormat, Weighting
from jgrp2o.data.augment import AugmentConfig
from jgrp2o.data.dataset import DataConfig
from jgrp2o.evaluation.metrics import EvalConfig
from jgrp2o.exceptions import ConfigConflictError, ConfigError
from jgrp2o.model.backbone import BackboneConfig
from jgrp2o.model.jgr import JgrConfig
from jgrp2o.model.network import ModelConfig
from jgrp2o.model.p2o import P2OConfig
from jgrp2o.model.topology import Topology
from jgrp2o.objective import LossConfig
from jgrp2o.training.optimizer import TrainConfig
from jgrp2o.utils.fs_handler import FSHandler, LocalFSHandler

log = logging.getLogger(__name__)

RESOLVED_CONFIG_FILE = 'resolved_config.json'


class RunConfig(BaseModel):
    model: ModelConfig = ModelConfig()
    backbone: BackboneConfig = BackboneConfig()
    jgr: JgrConfig = JgrConfig()
    p2o: P2OConfig = P2OConfig()
    loss: LossConfig = LossConfig()
    data: DataConfig = DataConfig()
    augment: AugmentConfig = AugmentConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()

    class Config:
        extra = 'forbid'
        copy_on_model_validation = 'none'

    def __str__(self) -> str:
        return (
            f'<RunConfig joints={self.model.joints} stages={self.backbone.stages} '
            f'channels={self.backbone.channels} topology={self.jgr.topology}>'
        )

    @root_validator(skip_on_failure=True)
    def check_sections(cls, values: dict) -> dict:
        model, backbone, jgr, p2o, loss = (values[k] for k in ('model', 'backbone', 'jgr', 'p2o', 'loss'))
        if loss.stages != backbone.stages:
            raise ConfigConflictError(
                key='loss.stages', other='backbone.stages', reason=f'{loss.stages} != {backbone.stages}'
            )
        if jgr.enabled != (p2o.weighting is Weighting.VOTING):
            raise ConfigConflictError(
                key='p2o.weighting',
                other='jgr.enabled',
                reason='voting weights need joint graph reasoning; use uniform weighting without it',
            )
        if Topology.is_bundled(jgr.topology):
            joints = Topology.load(jgr.topology).joints
        else:
            joints = Topology.load(jgr.topology, joints=model.joints).joints
        if joints != model.joints:
            raise ConfigConflictError(
                key='jgr.topology',
                other='model.joints',
                reason=f'{jgr.topology} has {joints} joints, not {model.joints}',
            )
        return values

    def flat_items(self) -> Iterator[Tuple[str, Any]]:
        """``(section.key, value)`` pairs of every setting"""
        for section, values in self.dict().items():
            for key, value in values.items():
                yield f'{section}.{key}', value

    def dump(self, base_path: str, fs_handler: FSHandler = LocalFSHandler()) -> str:
        """Write the resolved configuration as JSON into ``base_path``; returns the file path"""
        path = fs_handler.join_path(base_path, RESOLVED_CONFIG_FILE)
        fs_handler.write(path, self.json(indent=2))
        log.debug('Wrote resolved configuration to %s', path)
        return path


def set_key(data: Dict[str, Dict[str, Any]], key: str, value: Any) -> None:
    """Store ``value`` under a dotted ``section.key`` after checking that the key exists"""
    parts = key.split('.')
    if len(parts) != 2:
        log.error('Configuration key %s is not of the form section.key', key)
        raise ConfigError(key, 'expected section.key')
    section, name = parts
    field = RunConfig.__fields__.get(section)
    if field is None:
        log.error('Unknown configuration section in %s', key)
        raise ConfigError(key, f'unknown section; known: {", ".join(RunConfig.__fields__)}')
    if name not in field.type_.__fields__:
        log.error('Unknown configuration key %s', key)
        raise ConfigError(key, f'unknown key; {section} has: {", ".join(field.type_.__fields__)}')
    data.setdefault(section, {})[name] = value


def parse_value(raw: str) -> Any:
    """A TOML literal (number, boolean, quoted string, array); anything else is taken as a bare string"""
    try:
        return tomli.loads(f'value = {raw}')['value']
    except tomli.TOMLDecodeError:
        return raw


def parse_override(text: str) -> Tuple[str, Any]:
    key, sep, raw = text.partition('=')
    if not sep:
        raise ConfigError(text, 'override must look like section.key=value')
    return key.strip(), parse_value(raw.strip())


def read_config_file(path: str, fs: FSHandler = LocalFSHandler()) -> Dict[str, Dict[str, Any]]:
    """Parse a TOML config file into ``{section: {key: value}}``, rejecting unknown keys"""
    try:
        document = tomli.loads(fs.read(path).decode('utf-8'))
    except FileNotFoundError:
        log.error('Config file %s does not exist', path)
        raise ConfigError(path, 'config file not found')
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as e:
        log.error('Config file %s is not valid TOML', path)
        raise ConfigError(path, f'invalid TOML: {e}')

    data: Dict[str, Dict[str, Any]] = {}
    for section, values in document.items():
        if not isinstance(values, dict):
            raise ConfigError(section, 'top-level keys must be section.key')
        for name, value in values.items():
            set_key(data, f'{section}.{name}', value)
    return data


def resolve(data: Dict[str, Dict[str, Any]]) -> RunConfig:
    """Validate layered settings, reporting the first offending key as a ConfigError"""
    try:
        return RunConfig.parse_obj(data)
    except ValidationError as e:
        error = e.errors()[0]
        location = [str(part) for part in error['loc'] if part != '__root__']
        key = error.get('ctx', {}).get('key') or '.'.join(location) or 'config'
        log.error('Invalid configuration value for %s: %s', key, error['msg'])
        raise ConfigError(key, error['msg'])


def load_config(
    path: Optional[str] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    epochs: Optional[int] = None,
    data: Optional[str] = None,
    fs: FSHandler = LocalFSHandler(),
) -> RunConfig:
    """Resolve defaults, config file, overrides and flags, in that order

    Args:
        path: TOML config file
        overrides: ``section.key=value`` strings
        seed: ``train.seed``
        epochs: ``train.epochs``
        data: a dataset format name (``synth``, ``native``, ``icvl``) or a dataset folder
        fs: file system access

    Returns:
        RunConfig
    """
    settings = read_config_file(path, fs) if path else {}
    for text in overrides:
        key, value = parse_override(text)
        set_key(settings, key, value)
    if seed is not None:
        set_key(settings, 'train.seed', seed)
    if epochs is not None:
        set_key(settings, 'train.epochs', epochs)
    if data is not None:
        if data in {f.value for f in DatasetFormat}:
            set_key(settings, 'data.format', data)
        else:
            set_key(settings, 'data.root', data)
            if settings.get('data', {}).get('format', DatasetFormat.SYNTH.value) == DatasetFormat.SYNTH.value:
                set_key(settings, 'data.format', DatasetFormat.NATIVE.value)
    config = resolve(settings)
    log.debug('Resolved %s', config)
    return config
