# stap-glm - Bayesian spatial-temporal aggregated predictor regression
# Copyright (C) 2026 stap-glm contributors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
from typing import Any, Awaitable, Callable, Dict, List, NamedTuple, Optional, Tuple
import argparse
import logging

from attr import dataclass
import numpy as np

from ..config import Config


class HelpSection(NamedTuple):
    name: str
    order: int
    description: str


class Flag(NamedTuple):
    """A command line option that overrides one config key."""

    name: str
    key: str
    type: Callable[[str], Any]
    help: str


def _group_ids(value: str) -> List[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


MODEL_FLAGS = [
    Flag("--formula", "model.formula", str, "model formula, e.g. 'y ~ sex + sap(Fast_Food)'"),
    Flag("--family", "model.family", str, "gaussian, bernoulli, binomial or poisson"),
    Flag("--subject-data", "data.subject", str, "subject table"),
    Flag("--distance-data", "data.distance", str, "distance table"),
    Flag("--time-data", "data.time", str, "time table"),
    Flag("--subject-id", "data.subject_id", str, "subject ID column"),
    Flag("--group-id", "data.group_id", _group_ids, "comma-separated extra ID columns"),
    Flag("--max-distance", "model.max_distance", float, "inclusion radius of BEF distances"),
]
SAMPLER_FLAGS = [
    Flag("--iter", "sampler.iter", int, "iterations per chain, including warmup"),
    Flag("--warmup", "sampler.warmup", int, "warmup iterations per chain"),
    Flag("--chains", "sampler.chains", int, "number of chains"),
    Flag("--cores", "sampler.cores", int, "chains sampled in parallel"),
    Flag("--adapt-delta", "sampler.adapt_delta", float, "target acceptance statistic"),
    Flag("--seed", "sampler.seed", int, "random seed"),
]
OUTPUT_FLAGS = [
    Flag("--out", "output.directory", str, "output directory"),
]
TERMINATION_FLAGS = [
    Flag("--exposure-limit", "output.exposure_limit", float, "negligible exposure level"),
    Flag("--prob", "output.prob", float, "central interval mass"),
    Flag("--max-value", "output.max_value", float, "truncation of termination distances"),
]


@dataclass
class CommandEvent:
    command: str
    config: Config
    args: argparse.Namespace
    version: str
    log: logging.Logger

    @property
    def seed(self) -> int:
        return self.config.resolve_seed()

    def prediction_rng(self, seed: int, stream: int) -> np.random.Generator:
        """A random stream that no sampler chain uses (chains use ``[seed, chain_id]``)."""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


CommandHandlerFunc = Callable[[CommandEvent], Awaitable[Optional[int]]]


@dataclass
class CommandHandler:
    name: str
    handler: CommandHandlerFunc
    help_text: str
    help_section: HelpSection
    flags: List[Flag]
    arguments: List[Tuple[Tuple[str, ...], Dict[str, Any]]]

    async def __call__(self, evt: CommandEvent) -> Optional[int]:
        return await self.handler(evt)

    def add_parser(self, subparsers: argparse._SubParsersAction) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(
            self.name, help=self.help_text, description=f"{self.help_section.name}: {self.help_text}"
        )
        parser.add_argument(
            "-c", "--config", type=str, default=None, metavar="<path>",
            help="YAML config file; packaged defaults fill the missing keys",
        )
        for flag in self.flags:
            parser.add_argument(
                flag.name, dest=flag.key, type=flag.type, default=None, help=flag.help
            )
        for names, kwargs in self.arguments:
            parser.add_argument(*names, **kwargs)
        parser.set_defaults(command=self.name)
        return parser

    def overrides(self, args: argparse.Namespace) -> Dict[str, Any]:
        return {flag.key: getattr(args, flag.key, None) for flag in self.flags}


command_handlers: Dict[str, CommandHandler] = {}


def command_handler(
    name: Optional[str] = None,
    help_text: str = "",
    help_section: Optional[HelpSection] = None,
    flags: Optional[List[Flag]] = None,
    arguments: Optional[List[Tuple[Tuple[str, ...], Dict[str, Any]]]] = None,
) -> Callable[[CommandHandlerFunc], CommandHandler]:
    def decorator(func: CommandHandlerFunc) -> CommandHandler:
        handler = CommandHandler(
            name=name or func.__name__.replace("_", "-"),
            handler=func,
            help_text=help_text,
            help_section=help_section or SECTION_GENERAL,
            flags=flags or [],
            arguments=arguments or [],
        )
        command_handlers[handler.name] = handler
        return handler

    return decorator


SECTION_GENERAL = HelpSection("General", 0, "")
