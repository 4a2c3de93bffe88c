# Copyright (c) 2026 stap-glm contributors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
"""Parser for the STAP model formula mini-language.

The grammar covers ``response ~ term (+ term)*`` where the response is either a single column
or ``cbind(successes, failures)`` and each term is a covariate name, an explicit ``1``, a STAP
call ``sap|tap|stap(bef_name[, kernel[, kernel]])`` or an intercept-only group term
``(1 | factor)``.
"""
from __future__ import annotations

from typing import NamedTuple
import re

from .errors import FormulaError
from .types import FormulaSpec, GroupTerm, KernelKind, StapKind, StapTerm

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<name>[A-Za-z_.][A-Za-z0-9_.]*)|(?P<number>[0-9]+(?:\.[0-9]*)?)|(?P<op>[~+\-(),|*:/^]))"
)

SPATIAL_KERNELS = {
    "erf": KernelKind.SPATIAL_ERFC,
    "erfc": KernelKind.SPATIAL_ERFC,
    "exp": KernelKind.SPATIAL_EXP,
}
TEMPORAL_KERNELS = {
    "erf": KernelKind.TEMPORAL_ERF,
    "cexp": KernelKind.TEMPORAL_CEXP,
}
STAP_KEYWORDS = ("sap", "tap", "stap")


class Token(NamedTuple):
    kind: str
    value: str
    position: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    position = 0
    stripped_end = len(text.rstrip())
    while position < stripped_end:
        while text[position].isspace():
            position += 1
        match = _TOKEN_RE.match(text, position)
        if not match:
            raise FormulaError(f"Unexpected character {text[position]!r}", text, position)
        kind = match.lastgroup
        tokens.append(Token(kind, match.group(kind), match.start(kind)))
        position = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    text: str
    tokens: list[Token]
    index: int

    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def _peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.index + offset, len(self.tokens) - 1)]

    def _error(self, message: str, token: Token | None = None) -> FormulaError:
        token = token or self.current
        return FormulaError(message, self.text, token.position)

    def _advance(self) -> Token:
        token = self.current
        self.index += 1
        return token

    def _expect_op(self, op: str) -> Token:
        token = self.current
        if token.kind != "op" or token.value != op:
            found = repr(token.value) if token.kind != "end" else "end of formula"
            raise self._error(f"Expected {op!r} but found {found}")
        return self._advance()

    def _expect_name(self, what: str) -> str:
        token = self.current
        if token.kind != "name":
            found = repr(token.value) if token.kind != "end" else "end of formula"
            raise self._error(f"Expected {what} but found {found}")
        return self._advance().value

    def parse(self) -> FormulaSpec:
        if self.current.kind == "end":
            raise FormulaError("Formula is empty")
        tilde_count = sum(1 for token in self.tokens if token.kind == "op" and token.value == "~")
        if tilde_count != 1:
            raise FormulaError(f"Formula must contain exactly one '~', found {tilde_count}")
        response = self._parse_response()
        self._expect_op("~")
        fixed: list[str] = []
        staps: list[StapTerm] = []
        groups: list[GroupTerm] = []
        self._parse_term(fixed, staps, groups)
        while self.current.kind == "op" and self.current.value == "+":
            self._advance()
            self._parse_term(fixed, staps, groups)
        if self.current.kind != "end":
            token = self.current
            if token.value in ("*", ":", "/", "^"):
                raise self._error("Interaction and nesting operators are not supported")
            elif token.value == "-":
                raise self._error("Term removal ('-') is not supported; the intercept is required")
            raise self._error(f"Unexpected {token.value!r}")
        return _validate(FormulaSpec(response=response, fixed_terms=fixed, stap_terms=staps,
                                     group_terms=groups), self.text)

    def _parse_response(self) -> list[str]:
        token = self.current
        if token.kind != "name":
            raise self._error("Expected a response before '~'")
        if token.value == "cbind" and self._peek().value == "(":
            self._advance()
            self._expect_op("(")
            successes = self._expect_name("a success count column in cbind()")
            self._expect_op(",")
            failures = self._expect_name("a failure count column in cbind()")
            if self.current.value == ",":
                raise self._error("cbind() takes exactly two columns")
            self._expect_op(")")
            return [successes, failures]
        self._advance()
        if self.current.kind == "op" and self.current.value == "(":
            raise self._error(f"Transformations of the response ({token.value}()) are not supported")
        return [token.value]

    def _parse_term(
        self, fixed: list[str], staps: list[StapTerm], groups: list[GroupTerm]
    ) -> None:
        token = self.current
        if token.kind == "end" or (token.kind == "op" and token.value in ("+", "~")):
            raise self._error("Expected a term")
        elif token.kind == "number":
            if token.value == "1":
                self._advance()
                return
            elif token.value in ("0", "0.0"):
                raise self._error("Intercept removal ('0 +') is not supported")
            raise self._error(f"Numeric term {token.value!r} is not allowed")
        elif token.kind == "op" and token.value == "(":
            groups.append(self._parse_group())
        elif token.kind == "op" and token.value == "-":
            raise self._error("Term removal ('-') is not supported; the intercept is required")
        elif token.kind == "name" and self._peek().value == "(":
            if token.value not in STAP_KEYWORDS:
                raise self._error(f"Unsupported function {token.value}() in formula")
            staps.append(self._parse_stap())
        elif token.kind == "name":
            fixed.append(self._advance().value)
        else:
            raise self._error(f"Unexpected {token.value!r}")

    def _parse_stap(self) -> StapTerm:
        keyword_token = self._advance()
        kind = StapKind.from_keyword(keyword_token.value)
        self._expect_op("(")
        bef_name = self._expect_name(f"a BEF name in {keyword_token.value}()")
        kernel_tokens: list[Token] = []
        while self.current.kind == "op" and self.current.value == ",":
            self._advance()
            if self.current.kind != "name":
                raise self._error(f"Expected a kernel keyword in {keyword_token.value}()")
            kernel_tokens.append(self._advance())
        self._expect_op(")")
        max_kernels = 2 if kind == StapKind.SPATIAL_TEMPORAL else 1
        if len(kernel_tokens) > max_kernels:
            raise self._error(
                f"{keyword_token.value}() accepts at most {max_kernels} kernel argument(s)",
                kernel_tokens[max_kernels],
            )
        spatial = temporal = None
        remaining = list(kernel_tokens)
        if kind.has_spatial:
            spatial = self._lookup_kernel(remaining.pop(0), SPATIAL_KERNELS, "spatial") \
                if remaining else KernelKind.SPATIAL_ERFC
        if kind.has_temporal:
            temporal = self._lookup_kernel(remaining.pop(0), TEMPORAL_KERNELS, "temporal") \
                if remaining else KernelKind.TEMPORAL_ERF
        return StapTerm(
            bef_name=bef_name, kind=kind, spatial_kernel=spatial, temporal_kernel=temporal
        )

    def _lookup_kernel(
        self, token: Token, table: dict[str, KernelKind], component: str
    ) -> KernelKind:
        try:
            return table[token.value]
        except KeyError:
            options = ", ".join(sorted(table))
            raise FormulaError(
                f"Unknown {component} kernel {token.value!r} (expected one of {options})",
                self.text,
                token.position,
            ) from None

    def _parse_group(self) -> GroupTerm:
        open_token = self._expect_op("(")
        if self.current.kind != "number" or self.current.value != "1":
            raise self._error("Only intercept-only group terms of the form (1 | factor) are supported")
        self._advance()
        if self.current.value != "|":
            raise self._error("Only intercept-only group terms of the form (1 | factor) are supported")
        self._advance()
        factor = self._expect_name("a grouping factor after '|'")
        if self.current.kind != "op" or self.current.value != ")":
            raise self._error(
                "Only a single grouping factor is supported in (1 | factor)", self.current
            )
        self._advance()
        if not factor:
            raise self._error("Empty grouping factor", open_token)
        return GroupTerm(grouping_factor=factor)


def _validate(spec: FormulaSpec, text: str) -> FormulaSpec:
    if not spec.stap_terms:
        raise FormulaError(f"Formula {text!r} has no sap(), tap() or stap() term")
    seen_fixed = set()
    for name in spec.fixed_terms:
        if name in seen_fixed:
            raise FormulaError(f"Covariate {name!r} appears more than once in {text!r}")
        seen_fixed.add(name)
    seen_stap = set()
    for term in spec.stap_terms:
        key = (term.bef_name, term.kind)
        if key in seen_stap:
            raise FormulaError(
                f"Duplicate {term.kind.keyword}() term for {term.bef_name!r} in {text!r}"
            )
        seen_stap.add(key)
        if term.bef_name in seen_fixed:
            raise FormulaError(
                f"{term.bef_name!r} is used both as a fixed covariate and a STAP term"
            )
    factors = [group.grouping_factor for group in spec.group_terms]
    if len(set(factors)) != len(factors):
        raise FormulaError(f"Duplicate group term in {text!r}")
    if len(factors) > 1:
        raise FormulaError("Only one grouping factor per model is supported")
    if any(name in spec.response for name in seen_fixed):
        raise FormulaError("The response cannot also be a covariate")
    return spec


def parse_formula(text: str) -> FormulaSpec:
    """Parse formula text into a validated :class:`FormulaSpec`.

    Kernel defaults are applied when a STAP call has no kernel arguments: the complementary
    error function for spatial components and the error function for temporal components.
    """
    if not isinstance(text, str) or not text.strip():
        raise FormulaError("Formula is empty")
    return _Parser(text).parse()


def render_formula(spec: FormulaSpec) -> str:
    """Render the canonical form of a parsed formula, with every kernel spelled out."""
    return spec.render()
