import datetime
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .errors import FieldFormatError
from .fields import PathLike
from .mixins import MappingLoader
from . import utils

__all__ = ('RunManifest', 'MANIFEST_SUFFIX')

log = logging.getLogger(__name__)

MANIFEST_SUFFIX = '.manifest.json'


@dataclass(frozen=True)
class RunManifest(MappingLoader):
    """The record of one command line run, written next to its outputs.

    Attributes:
    command (str): The subcommand that ran, e.g. "estimate".
    arguments (Dict[str, Any]): Every argument of the command with its
        defaults filled in. Replaying these reproduces the outputs.
    version (str): The maec version that ran.
    created_at (datetime.datetime): When the run finished, in UTC.
    config (Optional[Dict[str, Any]]): The resolved SolverConfig
        of estimation commands.
    inputs (Dict[str, str]): The files read, by role.
    outputs (Dict[str, str]): The files written, by role.
    seed (Optional[int]): The seed of the run, if it used one.

    """
    __init_attrs = (
        'command', 'arguments', 'version',
        {'name': 'created_at', 'path': 'createdAt', 'type': utils.parse_datetime},
        {'name': 'config', 'default': None},
        {'name': 'inputs', 'type': dict, 'default': {}},
        {'name': 'outputs', 'type': dict, 'default': {}},
        {'name': 'seed', 'type': int, 'default': None},
    )

    command: str
    arguments: Dict[str, Any]
    version: str
    created_at: datetime.datetime = field(default_factory=utils.utcnow)
    config: Optional[Dict[str, Any]] = None
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Any]) -> 'RunManifest':
        return cls(**cls._load_attrs(mapping, cls.__init_attrs))

    def to_mapping(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'arguments': self.arguments,
            'version': self.version,
            'createdAt': utils.isoify_datetime(self.created_at),
            'config': self.config,
            'inputs': self.inputs,
            'outputs': self.outputs,
            'seed': self.seed,
        }

    def write(self, path: PathLike):
        with open(path, 'w') as f:
            json.dump(self.to_mapping(), f, indent=2, sort_keys=True)
            f.write('\n')
        log.info('Wrote manifest %s', path)

    @classmethod
    def read(cls, path: PathLike) -> 'RunManifest':
        """Load a manifest written by write().

        Raises:
            FieldFormatError: The file is not a valid manifest.
            OSError: The file could not be read.

        """
        with open(path) as f:
            try:
                mapping = json.load(f)
            except json.JSONDecodeError as e:
                raise FieldFormatError(path, f'invalid JSON: {e}') from None
        try:
            return cls.from_mapping(mapping)
        except (KeyError, TypeError, ValueError) as e:
            raise FieldFormatError(path, f'invalid manifest: {e}') from None
