from __future__ import annotations

from collections.abc import Sequence


class QDesignError(Exception):
    """Base class for every failure raised by qdesign."""


class ShapeMismatch(QDesignError, ValueError):
    pass


class InvalidDesign(QDesignError, ValueError):
    pass


class PriorNotPD(QDesignError, ValueError):
    pass


class ZeroPrimalPoint(QDesignError, ValueError):
    pass


class InvalidCertificate(QDesignError, ValueError):
    pass


class PathologicalInstance(QDesignError, ValueError):
    """Aᵀc = 0: x = 0 is optimal for every λ and every design is optimal."""


class PathTooShort(QDesignError, ValueError):
    pass


class TooLargeForOracle(QDesignError, ValueError):
    pass


class SolveFailure(QDesignError, RuntimeError):
    pass


class EmptySurvivorSet(QDesignError, RuntimeError):
    pass


class NumericalUnderflow(QDesignError, RuntimeError):
    pass


class ParseError(QDesignError, ValueError):
    def __init__(self, message: str, path: str | None = None, row: int | None = None, column: int | None = None):
        location = ""
        if path is not None:
            location = f"{path}"
        if row is not None:
            location += f":{row}"
            if column is not None:
                location += f":{column}"
        super().__init__(f"{location}: {message}" if location else message)
        self.path = path
        self.row = row
        self.column = column


class TruncationDegenerate(QDesignError, ValueError):
    def __init__(self, indices: Sequence[int]):
        self.indices = list(indices)
        shown = ", ".join(str(i) for i in self.indices[:10])
        more = "" if len(self.indices) <= 10 else f" (+{len(self.indices) - 10} more)"
        super().__init__(
            f"Residual variance sigma_i^2 vanishes at candidates {shown}{more}; "
            "increase the truncation level or use a coarser candidate set"
        )
