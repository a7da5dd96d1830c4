"""Exception hierarchy.

Every error carries a fixed ``exit_code`` used by the CLI. The codes are part
of the public interface; do not renumber them.
"""

from __future__ import annotations


class SkillforgeError(Exception):
    exit_code = 1


# -- scene model -------------------------------------------------------------


class DegenerateBox(SkillforgeError, ValueError):
    exit_code = 20


class InvalidMask(SkillforgeError, ValueError):
    exit_code = 21


class MaskOutOfBounds(InvalidMask):
    exit_code = 22


# -- perception --------------------------------------------------------------


class FixtureMissing(SkillforgeError, LookupError):
    exit_code = 3


class BackendUnavailable(SkillforgeError):
    exit_code = 6


class BackendTimeout(BackendUnavailable):
    exit_code = 7


class NoMaskAvailable(SkillforgeError, LookupError):
    exit_code = 23


# -- planning / abstraction --------------------------------------------------


class EmptyInstruction(SkillforgeError, ValueError):
    exit_code = 4


class MalformedPlannerResponse(SkillforgeError, ValueError):
    exit_code = 5


class InconsistentPlanState(SkillforgeError):
    exit_code = 24


class UnparsablePhrase(SkillforgeError, ValueError):
    exit_code = 8


# -- library -----------------------------------------------------------------


class UnknownSkill(SkillforgeError, KeyError):
    exit_code = 9

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class IllegalTransition(SkillforgeError):
    exit_code = 10


class GranularityMismatch(SkillforgeError, ValueError):
    exit_code = 11


class LibraryIOError(SkillforgeError, OSError):
    exit_code = 12


class SchemaVersionMismatch(SkillforgeError):
    exit_code = 13


class CorruptLibrary(SkillforgeError):
    exit_code = 14


class UnknownField(CorruptLibrary):
    exit_code = 15


# -- execution / evaluation --------------------------------------------------


class SkillGap(SkillforgeError):
    exit_code = 16

    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__("missing skills: " + ", ".join(self.missing))


class SkillNotTrained(SkillforgeError):
    exit_code = 17


class UnknownCondition(SkillforgeError, LookupError):
    exit_code = 18


class InconsistentStageCount(SkillforgeError, ValueError):
    exit_code = 19


class EmptyResults(SkillforgeError, ValueError):
    exit_code = 25


class ConfigError(SkillforgeError):
    exit_code = 26


EXIT_CODES: dict[str, int] = {
    cls.__name__: cls.exit_code
    for cls in [
        SkillforgeError,
        FixtureMissing,
        EmptyInstruction,
        MalformedPlannerResponse,
        BackendUnavailable,
        BackendTimeout,
        UnparsablePhrase,
        UnknownSkill,
        IllegalTransition,
        GranularityMismatch,
        LibraryIOError,
        SchemaVersionMismatch,
        CorruptLibrary,
        UnknownField,
        SkillGap,
        SkillNotTrained,
        UnknownCondition,
        InconsistentStageCount,
        DegenerateBox,
        InvalidMask,
        MaskOutOfBounds,
        NoMaskAvailable,
        InconsistentPlanState,
        EmptyResults,
        ConfigError,
    ]
}
