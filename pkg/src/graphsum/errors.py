"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, anything raised as a
DataError (or subclass) exits 2, everything else exits 3.
"""

from __future__ import annotations


class GraphSumError(Exception):
    """Base class for errors raised by this package."""


class ContractError(GraphSumError):
    """A caller violated a documented precondition."""


class ShapeError(ContractError):
    """Tensor shapes do not line up; message names both shapes."""


class NumericError(GraphSumError):
    """Non-finite values where finite ones are required."""


class DataError(GraphSumError):
    """Bad input data: source text, corpora, checkpoints, configs."""


class LexError(DataError):
    """Tokenization failure, carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ParseError(DataError):
    """Syntax error with the expected-token set and the offending span."""

    def __init__(self, message: str, expected: tuple[str, ...], span: tuple[int, int]):
        super().__init__(f"{message}; expected one of {sorted(expected)} at {span[0]}..{span[1]}")
        self.expected = tuple(sorted(expected))
        self.span = span


class AnalysisError(DataError):
    """Graph construction failure (e.g. goto without a matching label)."""


class RetrievalError(DataError):
    """Retrieval cannot produce a hit (e.g. empty candidate set)."""
