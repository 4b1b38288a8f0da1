"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Tensor extents or divisibility constraints violated."""


class DomainError(ValueError):
    """A value is outside its documented domain (e.g. coordinate not in [0, 1])."""


class ParseError(ValueError):
    """Token or tube text does not match the grammar.

    ``position`` is the character offset of the failure when known.
    """

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class SchemaError(ValueError):
    """A JSONL input failed validation; ``lines`` lists (line_number, message)."""

    def __init__(self, message: str, lines: list[tuple[int, str]] | None = None):
        self.lines = lines or []
        if self.lines:
            detail = "; ".join(f"line {n}: {m}" for n, m in self.lines[:20])
            message = f"{message}: {detail}"
            if len(self.lines) > 20:
                message += f" (+{len(self.lines) - 20} more)"
        super().__init__(message)
