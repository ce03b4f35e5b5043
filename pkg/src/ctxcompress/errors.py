"""Exception hierarchy shared by the engine, adapters and CLI."""

from __future__ import annotations


class CompressionError(Exception):
    """Base class for every error raised by ctxcompress."""


class InputError(CompressionError, ValueError):
    """Caller supplied invalid data (bad text, out-of-range parameter, ...)."""


class IngestError(InputError):
    """A corpus file could not be mapped into the canonical schema.

    ``locator`` names the offending record (file, line, index) so the
    message is actionable without re-reading the file.
    """

    def __init__(self, message: str, locator: str | None = None) -> None:
        self.locator = locator
        super().__init__(f"{locator}: {message}" if locator else message)


class PipelineError(CompressionError):
    """A stage of ``compress_step`` failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class GatewayError(CompressionError):
    """Remote model call failed after retries or returned garbage."""
