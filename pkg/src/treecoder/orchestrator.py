"""The recursive workflow: each node plans, optionally delegates within its
degree budget, implements on top of its children's code, validates in the
sandbox, and returns upward — with bottom-up clarification and top-down
subtree replacement as the two localized recovery modes.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

from . import prompts, trace as tracing
from .errors import MalformedResponseError, ProviderError, WorkflowAborted
from .memory import MemoryRecord, MemoryStore, MergeStrategy
from .model import (
    NodePath,
    NodeRecord,
    NodeStatus,
    SolutionArtifact,
    TaskSpec,
    TokenUsage,
    TreeConfig,
    degree_at,
)
from .providers.base import (
    CallKey,
    CompletionProvider,
    CompletionRequest,
    CompletionResponse,
    Message,
    ResponseKind,
)
from .providers.parsing import (
    PlanVerdict,
    ReviewVerdict,
    extract_code_block,
    parse_plan,
    parse_review,
    parse_subtasks,
)
from .trace import RunTrace
from .verify import Verifier


@dataclass
class EngineServices:
    completion: CompletionProvider
    validator: Verifier
    memory: MemoryStore | None = None


class ModelRouter:
    """Single funnel for completions: assigns per-(path, phase) round
    numbers, charges every call to exactly one node's usage, and logs the
    per-call record into the trace."""

    def __init__(
        self,
        provider: CompletionProvider,
        trace: RunTrace,
        task_id: str = "",
        log_prompts: bool = True,
    ):
        self._provider = provider
        self._trace = trace
        self._task_id = task_id
        self._log_prompts = log_prompts
        self._rounds: dict[tuple[str, str], int] = {}
        self._usage: dict[str, TokenUsage] = {}
        self._lock = threading.Lock()

    def call(self, path: NodePath, phase: str, prompt: str, kind: ResponseKind) -> CompletionResponse:
        request = CompletionRequest.from_prompt(prompt, response_kind=kind)
        return self._dispatch(path, phase, request)

    def _dispatch(self, path: NodePath, phase: str, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            round_no = self._rounds.get((path.key(), phase), 0)
            self._rounds[(path.key(), phase)] = round_no + 1
        key = CallKey(path=path, phase=phase, round=round_no, task_id=self._task_id)
        response = self._provider.complete(request, key)
        delta = TokenUsage(
            input_tokens=response.input_tokens,
            output_tokens=response.output_tokens,
            completion_calls=1,
        )
        with self._lock:
            self._usage[path.key()] = self._usage.get(path.key(), TokenUsage()) + delta
        data = {
            "phase": phase,
            "round": round_no,
            "response_kind": request.response_kind.value,
            "input_tokens": response.input_tokens,
            "output_tokens": response.output_tokens,
        }
        if self._log_prompts:
            data["prompt"] = request.prompt_text()
        self._trace.append(tracing.MODEL_CALL, path, **data)
        return response

    def call_structured(
        self,
        path: NodePath,
        phase: str,
        prompt: str,
        kind: ResponseKind,
        parser,
        fallback=None,
    ):
        """Parse the response; on a malformed shape, retry once with the
        reformat instruction appended as a follow-up turn. If the retry is
        still malformed, ``fallback(content)`` decides the result; with no
        fallback the error propagates."""
        response = self.call(path, phase, prompt, kind)
        try:
            return parser(response.content)
        except MalformedResponseError:
            retry = CompletionRequest(
                messages=(
                    Message("user", prompt),
                    Message("assistant", response.content),
                    Message("user", prompts.REFORMAT_INSTRUCTION),
                ),
                response_kind=kind,
            )
            second = self._dispatch(path, phase, retry)
            try:
                return parser(second.content)
            except MalformedResponseError:
                if fallback is None:
                    raise
                return fallback(second.content)

    def with_trace(self, trace: RunTrace) -> ModelRouter:
        """A view over the same counters and usage ledger that logs into a
        different trace. Used for per-child buffers in parallel mode."""
        clone = object.__new__(ModelRouter)
        clone._provider = self._provider
        clone._trace = trace
        clone._task_id = self._task_id
        clone._log_prompts = self._log_prompts
        clone._rounds = self._rounds
        clone._usage = self._usage
        clone._lock = self._lock
        return clone

    def add_embed_calls(self, path: NodePath, calls: int, purpose: str) -> None:
        if calls <= 0:
            return
        with self._lock:
            self._usage[path.key()] = self._usage.get(path.key(), TokenUsage()) + TokenUsage(
                embedding_calls=calls
            )
        self._trace.append(tracing.EMBED_CALL, path, calls=calls, purpose=purpose)

    def usage_of(self, path: NodePath) -> TokenUsage:
        return self._usage.get(path.key(), TokenUsage())

    def total_usage(self) -> TokenUsage:
        total = TokenUsage()
        for usage in self._usage.values():
            total = total + usage
        return total


@dataclass
class _NodeCaller:
    """Verifier-facing adapter: all validation-phase calls route through
    the same funnel under this node's path."""

    router: ModelRouter
    path: NodePath

    def call(self, phase: str, prompt: str, kind: ResponseKind) -> str:
        return self.router.call(self.path, phase, prompt, kind).content


class Orchestrator:
    def __init__(
        self,
        config: TreeConfig,
        services: EngineServices,
        *,
        parallel_children: bool = False,
        log_prompts: bool = True,
        clock: Callable[[], float] | None = None,
    ):
        self.config = config
        self.services = services
        self.parallel_children = parallel_children
        self.log_prompts = log_prompts
        self.clock = clock

    def run(self, user_instruction: str, task_id: str = "") -> tuple[SolutionArtifact, RunTrace]:
        """Execute the whole workflow for one instruction.

        Raises WorkflowAborted (carrying the partial trace) if the provider
        fails after its own retries; config problems surface before any
        model call via TreeConfig validation.
        """
        if not user_instruction.strip():
            raise ValueError("user instruction must be non-empty")
        trace = RunTrace(clock=self.clock)
        router = ModelRouter(
            self.services.completion, trace, task_id=task_id, log_prompts=self.log_prompts
        )
        trace.append(
            tracing.RUN_START,
            NodePath(),
            task_id=task_id,
            max_height=self.config.max_height,
            initial_degree=self.config.initial_degree,
            degree_decay=self.config.degree_decay,
            max_verify_retries=self.config.max_verify_retries,
        )
        root_task = TaskSpec(
            description=user_instruction,
            parent_context="",
            path=NodePath(),
            degree_budget=degree_at(1, self.config),
        )
        try:
            artifact = self._execute(root_task, None, router, trace)
        except ProviderError as exc:
            totals = router.total_usage()
            trace.append(
                tracing.RUN_END,
                NodePath(),
                aborted=True,
                error=str(exc),
                **_usage_fields(totals),
            )
            raise WorkflowAborted(str(exc), trace) from exc
        trace.append(
            tracing.RUN_END,
            NodePath(),
            aborted=False,
            verified=artifact.verified,
            **_usage_fields(router.total_usage()),
        )
        return artifact, trace

    # One node's five phases.
    def _execute(
        self,
        task: TaskSpec,
        parent: NodeRecord | None,
        router: ModelRouter,
        trace: RunTrace,
    ) -> SolutionArtifact:
        config = self.config
        path = task.path
        height = path.height
        record = NodeRecord(path=path, task=task)
        trace.append(
            tracing.NODE_ENTER,
            path,
            height=height,
            degree_budget=task.degree_budget,
            description=task.description,
        )

        # Planning: retrieve memory, plan, clarify bottom-up if ambiguous.
        trace.append(tracing.PHASE, path, name="plan")
        retrieved = self._retrieve_memory(task, height, router, trace)
        plan, verdict = self._plan(task, retrieved, record, router, trace)
        rounds = 0
        while not verdict.proceed and rounds < config.max_clarification_rounds:
            rounds += 1
            question = verdict.question or "Please clarify the task."
            answer = self._answer_clarification(task, parent, question, router)
            record.clarifications.append((question, answer))
            trace.append(
                tracing.CLARIFICATION,
                path,
                question=question,
                refined_spec=answer,
                round=rounds,
                answered_by=parent.path.key() if parent is not None else "auto",
            )
            plan, verdict = self._plan(task, retrieved, record, router, trace)
        if not verdict.proceed:
            trace.append(tracing.WARNING, path, message="clarification budget exhausted; proceeding")
        record.plan = plan

        # Delegation: only below the height bound and with budget left.
        if height < config.max_height and task.degree_budget >= 1:
            trace.append(tracing.PHASE, path, name="delegate")
            subtasks = self._decompose(task, record, router, trace)
            if subtasks:
                record.status = NodeStatus.DELEGATING
                record.subtasks = subtasks
                record.child_results = self._run_children(record, router, trace)
                self._review_loop(record, router, trace)

        # Implementation: child code first, own code last.
        trace.append(tracing.PHASE, path, name="implement")
        candidate = self._implement(record, router, trace)
        if candidate is None:
            record.status = NodeStatus.FAILED
            artifact = SolutionArtifact(
                code=_assemble([r.code for r in record.child_results], ""),
                reasoning_trace=record.plan,
                verified=False,
            )
            record.solution = artifact
            trace.append(tracing.NODE_EXIT, path, status=record.status.value, **_usage_fields(router.usage_of(path)))
            return artifact
        record.status = NodeStatus.IMPLEMENTED

        # Validation: model-generated suite, bounded debug loop.
        trace.append(tracing.PHASE, path, name="validate")
        caller = _NodeCaller(router, path)
        validator = self.services.validator
        suite = validator.generate_tests(
            task.description,
            candidate,
            caller,
            on_regenerate=lambda msg: trace.append(tracing.WARNING, path, message=msg),
        )
        artifact, sandbox_results = validator.verify(
            candidate, suite, config.max_verify_retries, caller
        )
        for attempt, result in enumerate(sandbox_results):
            data = {"attempt": attempt, "verdict": result.verdict.value}
            if self.clock is not None:
                # Wall time is only logged under a real clock; deterministic
                # runs keep traces byte-stable across invocations.
                data["wall_time"] = result.wall_time
            trace.append(tracing.SANDBOX_RUN, path, **data)
        trace.append(
            tracing.VALIDATION,
            path,
            verified=artifact.verified,
            tests_run=artifact.tests_run,
            fix_iterations=artifact.fix_iterations,
        )
        artifact = artifact.with_trace(record.plan)

        # Return: memory update for verified work only, then hand upward.
        trace.append(tracing.PHASE, path, name="return")
        if artifact.verified and self.services.memory is not None:
            self._update_memory(task, record, artifact, height, router, trace)
        record.status = NodeStatus.VERIFIED if artifact.verified else NodeStatus.FAILED
        record.solution = artifact
        record.usage = router.usage_of(path)
        trace.append(tracing.NODE_EXIT, path, status=record.status.value, **_usage_fields(record.usage))
        return artifact

    def _retrieve_memory(self, task, height, router, trace):
        memory = self.services.memory
        if memory is None:
            return []
        records = memory.retrieve(task.description, height)
        router.add_embed_calls(task.path, 1, purpose="retrieve")
        trace.append(
            tracing.MEMORY_RETRIEVE,
            task.path,
            count=len(records),
            record_ids=[r.record_id for r in records],
        )
        return records

    def _plan(self, task, retrieved, record, router, trace) -> tuple[str, PlanVerdict]:
        prompt = prompts.plan_prompt(
            task.description,
            task.parent_context,
            prompts.memory_section(retrieved),
            record.clarifications,
        )

        def fallback(content: str):
            # Degrade to the raw text as the plan rather than losing the node.
            trace.append(
                tracing.WARNING,
                task.path,
                message="plan response malformed after reformat; proceeding with raw text",
            )
            return content.strip(), PlanVerdict(proceed=True)

        return router.call_structured(
            task.path, "plan", prompt, ResponseKind.PLAN_STEPS, parse_plan, fallback
        )

    def _answer_clarification(self, task, parent, question, router) -> str:
        if parent is None:
            return prompts.ROOT_AUTO_ANSWER
        prompt = prompts.clarify_answer_prompt(parent.plan, task.description, question)
        response = router.call(parent.path, "clarify_answer", prompt, ResponseKind.FREE_TEXT)
        answer = response.content.strip()
        return answer or prompts.ROOT_AUTO_ANSWER

    def _decompose(self, task, record, router, trace) -> list[TaskSpec]:
        prompt = prompts.decompose_prompt(task.description, record.plan, task.degree_budget)

        def fallback(content: str):
            trace.append(
                tracing.WARNING,
                task.path,
                message="subtask list malformed after reformat; skipping delegation",
            )
            return []

        proposals = router.call_structured(
            task.path, "decompose", prompt, ResponseKind.SUBTASK_LIST, parse_subtasks, fallback
        )
        return self._to_subtasks(task, record.plan, proposals, router, trace)

    def _to_subtasks(self, task, plan, proposals, router, trace) -> list[TaskSpec]:
        if len(proposals) > task.degree_budget:
            trace.append(
                tracing.DEGREE_TRUNCATION,
                task.path,
                proposed=len(proposals),
                kept=task.degree_budget,
            )
            proposals = proposals[: task.degree_budget]
        child_budget = degree_at(task.path.height + 1, self.config)
        subtasks = [
            TaskSpec(
                description=description,
                parent_context=(
                    f"Parent task: {task.description}\n"
                    f"Parent plan:\n{plan}\n"
                    f"You are implementing part {i + 1} of {len(proposals)}; expose your "
                    f"work as a self-contained definition the parent can call."
                ),
                path=task.path.child(i),
                degree_budget=child_budget,
            )
            for i, description in enumerate(proposals)
        ]
        if subtasks:
            trace.append(
                tracing.DELEGATE,
                task.path,
                count=len(subtasks),
                descriptions=[s.description for s in subtasks],
            )
        return subtasks

    def _run_children(self, record, router, trace) -> list[SolutionArtifact]:
        children = record.subtasks
        if not self.parallel_children or len(children) <= 1:
            return [self._execute(child, record, router, trace) for child in children]
        # Parallel siblings: each child logs into its own buffer through a
        # router view, and buffers are spliced back in sibling order so the
        # final trace keeps one total order.
        buffers = [RunTrace(clock=self.clock) for _ in children]
        with ThreadPoolExecutor(max_workers=len(children)) as pool:
            futures = [
                pool.submit(self._execute, child, record, router.with_trace(buffer), buffer)
                for child, buffer in zip(children, buffers)
            ]
            results = [f.result() for f in futures]
        for buffer in buffers:
            trace.splice(buffer)
        return results

    def _review_loop(self, record, router, trace) -> None:
        """Structure correction: review the children's results; on a flawed
        decomposition, discard them and re-execute only this subtree, at
        most max_structure_corrections times."""
        task = record.task
        while True:
            verdict = self._review(record, router, trace)
            if verdict.accept:
                return
            if record.structure_corrections >= self.config.max_structure_corrections:
                trace.append(tracing.CORRECTION_EXHAUSTED, task.path)
                return
            record.structure_corrections += 1
            trace.append(
                tracing.SUBTREE_REVISION,
                task.path,
                discarded_child_count=len(record.child_results),
                new_subtask_count=len(verdict.new_subtasks),
                revision_index=record.structure_corrections,
            )
            record.subtasks = self._to_subtasks(
                task, record.plan, list(verdict.new_subtasks), router, trace
            )
            record.child_results = self._run_children(record, router, trace)

    def _review(self, record, router, trace) -> ReviewVerdict:
        task = record.task
        prompt = prompts.review_prompt(
            task.description,
            record.plan,
            record.subtasks,
            record.child_results,
            task.degree_budget,
        )

        def fallback(content: str):
            trace.append(
                tracing.WARNING,
                task.path,
                message="review response malformed after reformat; accepting children",
            )
            return ReviewVerdict(accept=True)

        return router.call_structured(
            task.path, "review", prompt, ResponseKind.VERDICT_WITH_QUESTION, parse_review, fallback
        )

    def _implement(self, record, router, trace) -> str | None:
        """Returns the consolidated candidate, or None when the model
        produced nothing twice."""
        task = record.task
        prompt = prompts.implement_prompt(
            task.description, record.plan, record.subtasks, record.child_results
        )
        for _ in range(2):
            response = router.call(task.path, "implement", prompt, ResponseKind.CODE_BLOCK)
            if response.content.strip():
                own_code = extract_code_block(response.content)
                return _assemble([r.code for r in record.child_results], own_code)
        trace.append(tracing.WARNING, task.path, message="implement returned empty output twice")
        return None

    def _update_memory(self, task, record, artifact, height, router, trace) -> None:
        memory = self.services.memory
        consolidator = None
        if memory.config.merge_strategy is MergeStrategy.CONSOLIDATE:
            consolidator = self._consolidator(task.path, router)
        outcome = memory.update(
            MemoryRecord(
                description=task.description,
                reasoning_trace=record.plan,
                code=artifact.code,
                depth=height,
            ),
            consolidator=consolidator,
        )
        router.add_embed_calls(task.path, outcome.embed_calls, purpose="update")
        trace.append(
            tracing.MEMORY_UPDATE,
            task.path,
            outcome=outcome.kind.value,
            record_id=outcome.record_id,
        )

    def _consolidator(self, path: NodePath, router: ModelRouter):
        def merge(existing, incoming) -> tuple[str, str]:
            prompt = prompts.consolidate_prompt(existing, incoming)
            content = router.call(path, "consolidate", prompt, ResponseKind.FREE_TEXT).content
            first, _, rest = content.strip().partition("\n")
            return first.strip(), rest.strip()

        return merge


def _assemble(child_codes: list[str], own_code: str) -> str:
    """Consolidated candidate: child definitions first, the node's own code
    last. With no children, the model output passes through untouched."""
    parts = [code for code in child_codes if code]
    if not parts:
        return own_code
    return "\n\n".join(parts + [own_code])


def _usage_fields(usage: TokenUsage) -> dict:
    return {
        "input_tokens": usage.input_tokens,
        "output_tokens": usage.output_tokens,
        "completion_calls": usage.completion_calls,
        "embedding_calls": usage.embedding_calls,
    }


def run_workflow(
    user_instruction: str,
    config: TreeConfig,
    services: EngineServices,
    **kwargs,
) -> tuple[SolutionArtifact, RunTrace]:
    """Convenience wrapper around Orchestrator for one-shot runs."""
    return Orchestrator(config, services, **kwargs).run(user_instruction)
