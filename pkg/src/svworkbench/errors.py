"""Exception hierarchy shared across the workbench."""


class WorkbenchError(Exception):
    """Base class for all workbench errors."""


class ConfigError(WorkbenchError):
    """Session configuration violates an invariant."""


class SequenceError(WorkbenchError):
    """Turn appended out of order."""


class BackendError(WorkbenchError):
    """A language-model backend failed or is unknown."""


class BackendTimeout(BackendError):
    """Remote backend timed out; safe to retry with the identical request."""


class MockFixtureMissing(BackendError):
    """The scripted mock backend has no entry for the requested prompt."""

    def __init__(self, template_id: str, prompt_hash: str, prompt_excerpt: str):
        super().__init__(
            f"no mock fixture for template={template_id!r} prompt-hash={prompt_hash}; "
            f"prompt starts: {prompt_excerpt!r}"
        )
        self.template_id = template_id
        self.prompt_hash = prompt_hash


class TemplateError(WorkbenchError):
    """Prompt template missing or rendered with incomplete variables."""


class EmptyQuery(WorkbenchError):
    """Query is empty after whitespace trim."""


class ClassificationError(WorkbenchError):
    """Backend intent reply could not be parsed; retryable."""


class PlanError(WorkbenchError):
    """Task plan references an unknown agent or breaks dataflow."""


class AlreadyComplete(WorkbenchError):
    """Resume attempted on a finished plan."""


class ParameterError(WorkbenchError):
    """Operation parameter out of range."""


class SearchUnavailable(WorkbenchError):
    """No web-search adapter configured; callers degrade to store-only retrieval."""


class PreconditionError(WorkbenchError):
    """Operation called with a violated precondition."""


class EmptyHierarchy(WorkbenchError):
    """No design modules found in the specification."""


class SummarizationError(WorkbenchError):
    """Module summarization failed (usually empty retrieval)."""

    def __init__(self, module: str, reason: str = "no specification chunks retrieved"):
        super().__init__(f"cannot summarize module {module!r}: {reason}")
        self.module = module


class GenerationError(WorkbenchError):
    """Backend output stayed unparseable after the formatting retry."""


class ThreatKbMissing(WorkbenchError):
    """Threat knowledge base store is empty or absent."""


class FlowSelectionError(WorkbenchError):
    """Backend would not produce a constrained flow choice."""


class CatalogMissing(WorkbenchError):
    """Vulnerability pattern catalog is empty or absent."""


class AnchoringError(WorkbenchError):
    """Design window exceeds the context limit even after anchoring."""

    def __init__(self, module: str, tokens: int, limit: int):
        super().__init__(
            f"module {module!r} needs {tokens} tokens after anchoring; limit is {limit}"
        )
        self.module = module


class ScenarioError(WorkbenchError):
    """Test scenario references unknown signals or stayed invalid after critic rounds."""

    def __init__(self, message: str, unknown_signals: list[str] | None = None):
        super().__init__(message)
        self.unknown_signals = unknown_signals or []


class TestbenchError(WorkbenchError):
    """Testbench generation kept failing the syntax checker."""

    def __init__(self, message: str, diagnostics: list | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class SimulatorError(WorkbenchError):
    """Simulator process failed or adapter is unregistered."""


class TraceFormatError(WorkbenchError):
    """Simulation log line could not be parsed."""

    def __init__(self, line_number: int, line: str):
        super().__init__(f"unparseable trace line {line_number}: {line!r}")
        self.line_number = line_number


class MetricError(WorkbenchError):
    """Metric requested over an empty result set."""


class ParseError(WorkbenchError):
    """Verilog source could not be parsed for ports."""
