class NumericFailureError(ArithmeticError):
    """Raised when a computation produces a non-finite or otherwise unusable value."""


class MissingColumnError(ValueError):
    def __init__(self, column, header):
        self.column = column
        self.header = list(header)
        super().__init__(f"column {column!r} not found; header is {self.header}")


class CsvParseError(ValueError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"cannot parse {value!r} as a number at row {row}, column {column!r}")
