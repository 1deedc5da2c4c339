"""Exception types raised across the toolkit."""


class KGEmbedError(Exception):
    """Base class for all toolkit errors."""


class MalformedLine(KGEmbedError):
    def __init__(self, line_no: int, expected: int, found: int):
        self.line_no = line_no
        self.expected = expected
        self.found = found
        super().__init__(f"line {line_no}: expected {expected} fields, found {found}")


class RRFEncodingError(KGEmbedError, UnicodeError):
    def __init__(self, line_no: int):
        self.line_no = line_no
        super().__init__(f"line {line_no}: invalid UTF-8")


class DuplicateCui(KGEmbedError):
    def __init__(self, cui: str):
        self.cui = cui
        super().__init__(f"cui {cui!r} appears more than once")


class AllZeroWeights(KGEmbedError, ValueError):
    pass


class StartGroupMismatch(KGEmbedError, ValueError):
    def __init__(self, node: int, group: str, expected: str):
        self.node = node
        self.group = group
        self.expected = expected
        super().__init__(f"start node {node} has group {group}, metapath starts with {expected}")


class InvalidMetapath(KGEmbedError, ValueError):
    pass


class EmptyCorpus(KGEmbedError, ValueError):
    pass


class OutsideBall(KGEmbedError, ValueError):
    pass


class EmptyEdgeSet(KGEmbedError, ValueError):
    pass


class MissingEmbedding(KGEmbedError, KeyError):
    def __init__(self, cui):
        self.cui = cui
        super().__init__(f"no embedding for {cui!r}")

    def __str__(self):
        return self.args[0]


class NegativeExhaustion(KGEmbedError):
    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(
            f"requested {requested} negative pairs, only {available} non-edges found")


class EmptyCategory(KGEmbedError, ValueError):
    pass


class NoMappedCodes(KGEmbedError, ValueError):
    pass


class ShapeMismatch(KGEmbedError, ValueError):
    pass


class EmptyDataset(KGEmbedError, ValueError):
    pass


class ConfigError(KGEmbedError):
    pass


class StageError(KGEmbedError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
