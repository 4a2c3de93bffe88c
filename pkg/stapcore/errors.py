# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
from __future__ import annotations

from typing import Any


class StapError(Exception):
    provenance: str = "stapcore"


class ConfigError(StapError):
    provenance = "config"


class FormulaError(ConfigError):
    provenance = "formula"

    def __init__(self, message: str, text: str | None = None, position: int | None = None) -> None:
        self.text = text
        self.position = position
        if text is not None and position is not None:
            message = f"{message} at column {position + 1} in {text!r}"
        super().__init__(message)


class PriorError(ConfigError):
    provenance = "model"


class MissingInputError(ConfigError):
    pass


class DataError(StapError):
    provenance = "data_ingest"


class MissingFileError(DataError):
    def __init__(self, path: str) -> None:
        super().__init__(f"Data file {path} does not exist")
        self.path = path


class MissingColumnError(DataError):
    def __init__(self, column: str, path: str | None = None) -> None:
        where = f" in {path}" if path else ""
        super().__init__(f"Missing required column {column!r}{where}")
        self.column = column
        self.path = path


class NonNumericValueError(DataError):
    def __init__(self, column: str, line: int, value: Any, path: str | None = None) -> None:
        where = f"{path}, " if path else ""
        super().__init__(f"Non-numeric value {value!r} in column {column!r} ({where}row {line})")
        self.column = column
        self.line = line
        self.value = value


class MissingValueError(DataError):
    def __init__(self, column: str, line: int, path: str | None = None) -> None:
        where = f"{path}, " if path else ""
        super().__init__(f"Missing value in column {column!r} ({where}row {line})")
        self.column = column
        self.line = line


class DuplicateObservationError(DataError):
    pass


class UnknownBEFError(DataError):
    def __init__(self, bef_name: str, table: str) -> None:
        super().__init__(f"Built environment feature {bef_name!r} does not appear in {table} data")
        self.bef_name = bef_name
        self.table = table


class AlignmentError(DataError):
    pass


class ResponseError(DataError):
    provenance = "model"


class KernelDomainError(StapError, ValueError):
    provenance = "kernels"


class SamplerError(StapError):
    provenance = "nuts"


class InitializationError(SamplerError):
    pass


class AllDivergentWarmupError(SamplerError):
    def __init__(self, chain_id: int, warmup: int) -> None:
        super().__init__(
            f"All {warmup} warmup iterations of chain {chain_id} were divergent. "
            "Check the priors and the max_distance bound, or raise adapt_delta."
        )
        self.chain_id = chain_id
        self.warmup = warmup

    def __reduce__(self) -> tuple:
        return type(self), (self.chain_id, self.warmup)


class StepSizeError(SamplerError):
    pass


class DiagnosticsError(StapError, ValueError):
    provenance = "diagnostics"


exit_codes = {
    ConfigError: 2,
    DataError: 3,
    SamplerError: 4,
}


def exit_code_for(error: BaseException) -> int:
    for error_class, code in exit_codes.items():
        if isinstance(error, error_class):
            return code
    return 1
