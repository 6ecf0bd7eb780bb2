"""Exception hierarchy. Each class carries a stable ``code`` used by the CLI."""


class ProtolensError(Exception):
    code = "INTERNAL"


class DataError(ProtolensError):
    code = "DATA_ERROR"


class MalformedCsv(DataError):
    code = "MALFORMED_CSV"


class UnknownLabelColumn(DataError):
    code = "UNKNOWN_LABEL_COLUMN"


class EmptyDataset(DataError):
    code = "EMPTY_DATASET"


class ClassTooSmall(DataError):
    code = "CLASS_TOO_SMALL"


class DimensionMismatch(ProtolensError, ValueError):
    code = "DIMENSION_MISMATCH"


class LengthMismatch(ProtolensError, ValueError):
    code = "LENGTH_MISMATCH"


class InvalidParams(ProtolensError, ValueError):
    code = "INVALID_PARAMS"


class VersionMismatch(ProtolensError):
    code = "VERSION_MISMATCH"


class CorruptPayload(ProtolensError):
    code = "CORRUPT_PAYLOAD"


class TooManyFeatures(ProtolensError):
    code = "TOO_MANY_FEATURES"


class EmptyBackground(ProtolensError):
    code = "EMPTY_BACKGROUND"


class EmptyPrototypeSet(ProtolensError):
    code = "EMPTY_PROTOTYPE_SET"


class MTooLarge(ProtolensError):
    code = "M_TOO_LARGE"


class EmptyTestSet(ProtolensError):
    code = "EMPTY_TEST_SET"


class DegenerateClass(ProtolensError):
    code = "DEGENERATE_CLASS"


class AllZeroDifferences(ProtolensError, ValueError):
    code = "ALL_ZERO_DIFFERENCES"


class EmptyInput(ProtolensError, ValueError):
    code = "EMPTY_INPUT"


class UnknownInstanceId(ProtolensError):
    code = "UNKNOWN_INSTANCE_ID"
