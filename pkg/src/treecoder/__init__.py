"""treecoder: a tree-structured multi-agent code generation engine.

A user task is solved by a bounded tree of code agents: each node plans,
optionally delegates subtasks to children within a decaying degree budget,
implements on top of the children's verified code, validates in a
subprocess sandbox with a bounded debug loop, and returns upward. Errors
recover locally: ambiguous specs trigger bottom-up clarification, flawed
decompositions trigger top-down subtree replacement. A long-term vector
memory retrieves and consolidates prior experiences. All model access sits
behind provider interfaces, so the entire control plane runs deterministic
and offline under the scripted provider.
"""

from .errors import (
    AccountingError,
    ConfigError,
    MalformedResponseError,
    MemoryStoreError,
    MissingScriptEntry,
    ProviderError,
    SandboxInfraError,
    SuiteFormatError,
    TransportError,
    TreecoderError,
    WorkflowAborted,
)
from .harness import BenchmarkTask, RunReport, load_suite, report_tokens, run_suite, score_task, sweep
from .memory import MemoryConfig, MemoryRecord, MemoryStore, MergeStrategy, UpdateKind
from .model import (
    NodePath,
    NodeRecord,
    NodeStatus,
    SolutionArtifact,
    TaskSpec,
    TokenUsage,
    TreeConfig,
    degree_at,
    merge_usage,
)
from .orchestrator import EngineServices, Orchestrator, run_workflow
from .providers import (
    CallKey,
    CompletionRequest,
    CompletionResponse,
    EmbeddingVector,
    HashedBagOfTokensEmbedder,
    LiveProvider,
    LiveProviderConfig,
    Message,
    ResponseKind,
    ScriptEntry,
    ScriptedProvider,
)
from .sandbox import Sandbox, SandboxLimits, SandboxResult, Verdict
from .trace import RunTrace, TraceEvent, validate_tree_shape
from .verify import SuiteSource, TestSuite, Verifier

__version__ = "0.1.0"

__all__ = [
    "AccountingError",
    "BenchmarkTask",
    "CallKey",
    "CompletionRequest",
    "CompletionResponse",
    "ConfigError",
    "EmbeddingVector",
    "EngineServices",
    "HashedBagOfTokensEmbedder",
    "LiveProvider",
    "LiveProviderConfig",
    "MalformedResponseError",
    "MemoryConfig",
    "MemoryRecord",
    "MemoryStore",
    "MemoryStoreError",
    "MergeStrategy",
    "Message",
    "MissingScriptEntry",
    "NodePath",
    "NodeRecord",
    "NodeStatus",
    "Orchestrator",
    "ProviderError",
    "ResponseKind",
    "RunReport",
    "RunTrace",
    "Sandbox",
    "SandboxInfraError",
    "SandboxLimits",
    "SandboxResult",
    "ScriptEntry",
    "ScriptedProvider",
    "SolutionArtifact",
    "SuiteFormatError",
    "SuiteSource",
    "TaskSpec",
    "TestSuite",
    "TokenUsage",
    "TraceEvent",
    "TransportError",
    "TreeConfig",
    "TreecoderError",
    "UpdateKind",
    "Verdict",
    "Verifier",
    "WorkflowAborted",
    "degree_at",
    "load_suite",
    "merge_usage",
    "report_tokens",
    "run_suite",
    "run_workflow",
    "score_task",
    "sweep",
    "validate_tree_shape",
]
