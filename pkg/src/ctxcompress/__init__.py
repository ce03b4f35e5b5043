"""Adaptive context compression for long-running conversations."""

__version__ = "0.1.0"

from .budget import BudgetConfig, CompressedContext, Segment
from .errors import CompressionError, GatewayError, IngestError, InputError, PipelineError
from .gateway import Gateway, GatewayConfig, MockGateway
from .ingest import AdapterSpec, load, load_path, synthesize
from .metrics import ObjectiveReport, ObjectiveWeights, bleu
from .model import Conversation, QAPair, Query, Turn
from .pipeline import EngineConfig, StepResult, ThresholdConfig, compress_step, replay
from .scoring import ScoredTurn, ScoringWeights
from .tuning import TuneResult, tune

__all__ = [
    "AdapterSpec",
    "BudgetConfig",
    "CompressedContext",
    "CompressionError",
    "Conversation",
    "EngineConfig",
    "Gateway",
    "GatewayConfig",
    "GatewayError",
    "IngestError",
    "InputError",
    "MockGateway",
    "ObjectiveReport",
    "ObjectiveWeights",
    "PipelineError",
    "QAPair",
    "Query",
    "ScoredTurn",
    "ScoringWeights",
    "Segment",
    "StepResult",
    "ThresholdConfig",
    "TuneResult",
    "Turn",
    "bleu",
    "compress_step",
    "load",
    "load_path",
    "replay",
    "synthesize",
    "tune",
]
