"""Exception hierarchy.  Each class carries the CLI error code it maps to."""


class CSFMMError(Exception):
    code = "E_INTERNAL"


class ConfigurationError(CSFMMError, ValueError):
    code = "E_CONFIG"


class UnknownKernelError(ConfigurationError):
    code = "E_KERNEL"


class UnknownMethodError(ConfigurationError):
    code = "E_METHOD"


class InvalidFaceError(CSFMMError, ValueError):
    code = "E_FACE"


class OutOfCellError(CSFMMError, ValueError):
    code = "E_OUT_OF_CELL"


class SingularityError(CSFMMError, ValueError):
    code = "E_SINGULAR"


class DomainError(CSFMMError, ValueError):
    code = "E_DOMAIN"


class EmptyTreeError(CSFMMError, ValueError):
    code = "E_EMPTY"


class DegenerateReferenceError(CSFMMError, ZeroDivisionError):
    code = "E_REFERENCE"


class InputFormatError(CSFMMError, ValueError):
    code = "E_CSV"


class DimensionMismatchError(CSFMMError, ValueError):
    code = "E_DIM"
