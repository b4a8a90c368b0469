"""Exception hierarchy shared by every stage of the pipeline."""


class CcpError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class ParseError(CcpError):
    """Malformed input file. Carries the offending location when known."""

    def __init__(self, message, path=None, row=None, column=None):
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ValidationError(CcpError):
    pass


class PartitionError(CcpError):
    pass


class AffinityError(CcpError):
    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class OptimizationError(CcpError):
    def __init__(self, message, iteration=None):
        self.iteration = iteration
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")


class FetchError(CcpError):
    """Base for download failures. All fetch errors are retriable."""

    retriable = True


class FetchNetworkError(FetchError):
    pass


class UnknownAccessionError(FetchError):
    pass


class FetchWriteError(FetchError):
    pass
