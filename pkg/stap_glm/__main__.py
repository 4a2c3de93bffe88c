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
from typing import List, Optional
import argparse
import asyncio
import logging
import logging.config
import sys

from stapcore.errors import StapError, exit_code_for

from .commands import CommandEvent, command_handlers
from .config import Config
from .version import version


class StapGLM:
    name = "stap-glm"
    command = "python -m stap_glm"
    description = "Bayesian spatial-temporal aggregated predictor regression."
    version = version

    log: logging.Logger = logging.getLogger("stap.init")

    parser: argparse.ArgumentParser

    def __init__(self) -> None:
        self.parser = self.prepare_arg_parser()

    def prepare_arg_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog=self.command, description=self.description
        )
        parser.add_argument("--version", action="version", version=f"{self.name} {self.version}")
        subparsers = parser.add_subparsers(dest="command", metavar="<command>")
        subparsers.required = True
        handlers = sorted(
            command_handlers.values(), key=lambda h: (h.help_section.order, h.name)
        )
        for handler in handlers:
            handler.add_parser(subparsers)
        return parser

    def prepare_config(self, args: argparse.Namespace) -> Config:
        config = Config(args.config)
        config.load_and_update()
        config.override(command_handlers[args.command].overrides(args))
        return config

    def prepare_log(self, config: Config) -> None:
        logging.config.dictConfig(config.as_dict()["logging"])

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = self.parser.parse_args(argv)
        try:
            config = self.prepare_config(args)
            self.prepare_log(config)
            handler = command_handlers[args.command]
            evt = CommandEvent(
                command=args.command,
                config=config,
                args=args,
                version=self.version,
                log=logging.getLogger(f"stap.{args.command}"),
            )
            self.log.debug("Running %s %s", self.name, self.version)
            return asyncio.run(handler(evt)) or 0
        except StapError as e:
            self.log.error("%s: %s", e.provenance, e)
            return exit_code_for(e)
        except Exception:
            self.log.exception("Unexpected error")
            return 1


def main() -> None:
    sys.exit(StapGLM().run())


if __name__ == "__main__":
    main()
