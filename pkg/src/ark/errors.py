"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class ArkError(Exception):
    """Base class for all toolkit errors."""


class FormatError(ArkError):
    """A container, image or document does not follow its binary layout."""


class CorruptionError(ArkError):
    """Integrity check (CRC) failed after decoding."""


class MalformedStreamError(ArkError):
    """A compressed token stream references data that does not exist."""


class UnrecoverableCodewordError(ArkError):
    """An inner RS codeword carries more damage than the code can correct."""


class UnrecoverableGroupError(ArkError):
    """Too many members of an outer-code group are missing."""

    def __init__(self, message: str, group_id: int | None = None):
        super().__init__(message if group_id is None else f"group {group_id}: {message}")
        self.group_id = group_id


class CapacityError(ArkError):
    """Payload does not fit the emblem geometry."""


class LocateError(ArkError):
    """Emblem frame could not be found or validated in an image."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class HeaderError(ArkError):
    """Emblem header failed its majority vote / CRC check."""


class EmblemDecodeError(ArkError):
    """One or more inner codewords of an emblem could not be corrected."""

    def __init__(self, message: str, failed: list[int], header=None):
        super().__init__(message)
        self.failed = failed
        self.header = header


class AssemblyError(ArkError):
    """Assembler source error; carries the offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TrapError(ArkError):
    """A virtual machine trapped (invalid opcode, bad address, ...)."""

    def __init__(self, pc: int, cause: str, state=None):
        super().__init__(f"trap at pc=0x{pc:04X}: {cause}")
        self.pc = pc
        self.cause = cause
        self.state = state


class StepLimitError(ArkError):
    """A virtual machine did not halt within its step budget."""

    def __init__(self, steps: int, state=None):
        super().__init__(f"no halt after {steps} steps")
        self.steps = steps
        self.state = state


class LettersError(ArkError):
    """Letter-encoded text contains a foreign character or odd length."""

    def __init__(self, position: int, message: str):
        super().__init__(f"position {position}: {message}")
        self.position = position


class BootstrapError(ArkError):
    """Bootstrap document is missing a section or fails its CRC."""

    def __init__(self, section: str, message: str):
        super().__init__(f"{section}: {message}")
        self.section = section
