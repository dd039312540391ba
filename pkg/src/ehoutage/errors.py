"""Exception hierarchy shared by every module."""


class EhOutageError(Exception):
    pass


class DomainError(EhOutageError, ValueError):
    """An argument lies outside the domain of the operation."""


class SearchError(EhOutageError, RuntimeError):
    """A numerical search failed to bracket or converge."""


class BracketError(SearchError):
    pass


class ResolutionError(EhOutageError, ValueError):
    """A tabulated curve is too coarse for the requested analysis."""


class ClassificationError(EhOutageError, ValueError):
    """Outage curve is neither convex nor concave-then-convex."""


class ResourceError(EhOutageError, MemoryError):
    """A configured work or memory cap would be exceeded."""


class UnsupportedError(EhOutageError, NotImplementedError):
    pass


class ParseError(EhOutageError, ValueError):
    """Malformed input file; ``row`` counts data rows, or lines for configs."""

    def __init__(self, message, path=None, row=None, unit="row"):
        self.path = path
        self.row = row
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"{unit} {row}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
