"""Personalized mobile-agent pipeline built from user demonstrations, with an intention-alignment evaluator."""

from .dataset import Dataset, SftRecord, export_sft, load_dataset, load_sft, save_dataset
from .deployment import DeploymentConfig, RewriteResult, StepTrace, act, extract_sop, rewrite, run_step
from .extraction import ExtractionConfig, extract_explicit, run_extraction, update_implicit
from .grammar import Adapter, parse_action, render_action
from .llm import (
    ChatBackendConfig,
    ChatRequest,
    EmbedBackendConfig,
    EmbeddingVector,
    Message,
    chat,
    embed,
)
from .metrics import EvalReport, MatchPolicy, aggregate, evaluate_step, match_action, text_similarity
from .model import (
    Action,
    ActionKind,
    Direction,
    Habit,
    HabitRepository,
    Language,
    ScreenshotRef,
    Step,
    SupportTrajectory,
    Trajectory,
    UserProfile,
    actions_equal,
    validate_action,
)
from .sop_library import SOPEntry, SOPStore, cosine_similarity

__version__ = "0.1.0"
