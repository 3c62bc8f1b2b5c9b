"""Engine error hierarchy.

Every error carries a stable machine-readable ``code``; the HTTP layer and
the CLI translate codes, never exception class names, so the codes are part
of the compatibility contract.
"""
from __future__ import annotations

from typing import Any


class KnowledgeBaseError(Exception):
    """Base class for all engine errors."""

    code = "INTERNAL_ERROR"

    def __init__(self, message: str, detail: Any = None):
        super().__init__(message)
        self.message = message
        self.detail = detail


class PermissionDenied(KnowledgeBaseError):
    code = "PERMISSION_DENIED"


class UnknownActor(KnowledgeBaseError):
    code = "UNKNOWN_ACTOR"


class NotFound(KnowledgeBaseError):
    code = "NOT_FOUND"


class WrongType(KnowledgeBaseError):
    code = "WRONG_TYPE"


class EmptyTitle(KnowledgeBaseError):
    code = "EMPTY_TITLE"


class TemplateViolation(KnowledgeBaseError):
    code = "TEMPLATE_VIOLATION"


class UnknownTag(KnowledgeBaseError):
    code = "UNKNOWN_TAG"


class UnknownParent(KnowledgeBaseError):
    code = "UNKNOWN_PARENT"


class DuplicateSiblingLabel(KnowledgeBaseError):
    code = "DUPLICATE_SIBLING_LABEL"


class AlreadyValidated(KnowledgeBaseError):
    code = "ALREADY_VALIDATED"


class AlreadyDecided(KnowledgeBaseError):
    code = "ALREADY_DECIDED"


class SchemaViolation(KnowledgeBaseError):
    code = "SCHEMA_VIOLATION"


class DuplicateLink(KnowledgeBaseError):
    code = "DUPLICATE_LINK"


class IllegalTransition(KnowledgeBaseError):
    code = "ILLEGAL_TRANSITION"


class InvalidRequest(KnowledgeBaseError):
    code = "INVALID_REQUEST"


class DuplicateDocId(KnowledgeBaseError):
    code = "DUPLICATE_DOC_ID"


class UnknownReference(KnowledgeBaseError):
    code = "UNKNOWN_REFERENCE"


class Conflict(KnowledgeBaseError):
    code = "CONFLICT"


class MalformedStream(KnowledgeBaseError):
    code = "MALFORMED_STREAM"


class IoFailure(KnowledgeBaseError):
    code = "IO_FAILURE"


class VersionMismatch(KnowledgeBaseError):
    code = "VERSION_MISMATCH"
