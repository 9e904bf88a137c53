"""Key-node evaluation for web agents.

Annotated tasks define milestone conditions (key nodes); agents run inside a
deterministic mock-web environment; trajectories are scored by which
milestones they reach, in any order; dataset health is validated by replaying
recorded workflows.
"""

from .actions import (
    Action,
    ActionType,
    Click,
    FillForm,
    FillSearch,
    GoBack,
    GoogleSearch,
    Goto,
    Hover,
    Select,
    SwitchTab,
)
from .env import EnvState, StepRecord, reset, step
from .errors import (
    DanglingEdge,
    EmptyDocument,
    EmptyInput,
    IncompatiblePair,
    JudgeUnavailable,
    KeywebError,
    MalformedUrl,
    PolicyError,
    ProtocolViolation,
    SchemaError,
    SelectorNotFound,
    UnknownEntryUrl,
    UnknownTask,
    UnparseableReply,
    UnsupportedAction,
)
from .harness import (
    Decision,
    Memory,
    Policy,
    RandomPolicy,
    RewardSignal,
    RewardStatus,
    ScriptedPolicy,
    compute_budget,
    detect_loop,
    golden_reference_metadata,
    run_episode,
    scripted_policy,
    trajectory_from_jsonl,
    trajectory_to_jsonl,
)
from .judge import HttpJudge, JudgeVerdict, SemanticJudge, StubJudge
from .maintenance import (
    NodeHealth,
    ReplayStepResult,
    ResolutionTier,
    TaskValidity,
    WorkflowStatus,
    check_validity,
    render_validity_table,
    resolve_element,
)
from .matching import (
    MatchFunction,
    MatchResult,
    NormalizedUrl,
    PathReference,
    SemanticReference,
    Target,
    UrlComponent,
    UrlReference,
    ValueReference,
    check_compatibility,
    match_element_path,
    match_element_value,
    match_url,
    normalize_selector,
    normalize_url,
    parse_judge_reply,
    render_judge_reply,
)
from .observer import ElementNode, Observation, build_observation, map_content_upward
from .scoring import (
    EvalState,
    TaskReport,
    Termination,
    Trajectory,
    aggregate,
    completion_rate,
    efficiency_score,
    evaluate_step,
    evaluate_trajectory,
    finalize,
    has_score,
    new_eval_state,
    task_success,
)
from .service import (
    ServiceConfig,
    SessionEnvelope,
    SessionManager,
    parse_envelope,
    serve_stdio,
    start_server,
)
from .sitegraph import SiteGraph, load_site_graph, load_site_graph_file
from .tasks import (
    AnnotatedStep,
    Diagnostic,
    KeyNode,
    Suggestion,
    TaskSpec,
    parse_task_file,
    serialize_tasks,
    suggest_evaluation_function,
    validate_task,
)

__version__ = "0.1.0"
