"""Exception types shared across the package.

Every error carries a stable ``code`` string so the CLI and campaign logs can
report failures without depending on class names.
"""


class NfaqError(Exception):
    code = "ERROR"


class SchemaError(NfaqError):
    code = "SCHEMA_ERROR"

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DuplicateStateId(SchemaError):
    code = "DUPLICATE_STATE_ID"


class UnknownPrimitive(SchemaError):
    code = "UNKNOWN_PRIMITIVE"


class IspMismatch(NfaqError):
    code = "ISP_MISMATCH"


class UnboundPrimitive(NfaqError):
    code = "UNBOUND_PRIMITIVE"


class InvalidSpec(NfaqError):
    """Raised when an operation requires a spec that passes validation."""

    code = "INVALID_SPEC"

    def __init__(self, issues):
        self.issues = list(issues)
        rules = ", ".join(f"{i.state_id}:{i.rule}" for i in self.issues)
        super().__init__(f"spec failed validation ({rules})")


class ExtractionEmpty(NfaqError):
    code = "EXTRACTION_EMPTY"


class EnvFault(NfaqError):
    code = "ENV_FAULT"


class InvalidInsertionPoint(NfaqError):
    code = "INVALID_INSERTION_POINT"


class UnknownPage(NfaqError):
    code = "UNKNOWN_PAGE"


class EmptyInput(NfaqError):
    code = "EMPTY_INPUT"


class Degenerate(NfaqError):
    code = "DEGENERATE"


class NonpositiveIncome(NfaqError):
    code = "NONPOSITIVE_INCOME"


class ZeroBsl(NfaqError):
    code = "ZERO_BSL"


class EmptyCbg(NfaqError):
    code = "EMPTY_CBG"
