"""certgate: certainty-gated retrieval augmentation for question answering.

A harness that asks a model for an answer plus a binary self-reported
certainty flag, measures how well that flag tracks actual correctness
(overconfidence, conservativeness, alignment), and uses it to trigger
top-1 document retrieval only when the model says it is unsure.
"""

from .core import (
    CERTAIN,
    UNCERTAIN,
    BoundaryMetrics,
    DecodeParams,
    ModelTurn,
    OutcomeTally,
    QAItem,
    RetrievalHit,
    tally_add,
)
from .dataset import load_dataset, sample_dataset, save_dataset
from .gateway import LLMGateway, ModelSpec, ResponseCache
from .metrics import (
    RelianceRecord,
    boundary_metrics,
    bucket_by_level,
    confidence_level,
    corruption_rate,
    overlap,
    relies_on_document,
    utilization_ratio,
)
from .parsing import OutputContract, answer_is_correct, parse_answer, parse_certainty
from .pipeline import (
    RunConfig,
    answer_adaptive,
    answer_static,
    elicit,
    reliance_study,
    run_experiment,
    run_reliance,
)
from .prompts import PromptTemplate, StrategyId, challenge_followup, load_templates, render
from .retrieval import (
    Bm25Params,
    CorpusStore,
    bm25_top1,
    corrupt_document,
    dense_top1,
    gold_document,
    ingest,
    precision_at_1,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryMetrics",
    "Bm25Params",
    "CERTAIN",
    "CorpusStore",
    "DecodeParams",
    "LLMGateway",
    "ModelSpec",
    "ModelTurn",
    "OutcomeTally",
    "OutputContract",
    "PromptTemplate",
    "QAItem",
    "RelianceRecord",
    "ResponseCache",
    "RetrievalHit",
    "RunConfig",
    "StrategyId",
    "UNCERTAIN",
    "answer_adaptive",
    "answer_is_correct",
    "answer_static",
    "bm25_top1",
    "boundary_metrics",
    "bucket_by_level",
    "challenge_followup",
    "confidence_level",
    "corrupt_document",
    "corruption_rate",
    "dense_top1",
    "elicit",
    "gold_document",
    "ingest",
    "load_dataset",
    "load_templates",
    "overlap",
    "parse_answer",
    "parse_certainty",
    "precision_at_1",
    "relies_on_document",
    "reliance_study",
    "render",
    "run_experiment",
    "run_reliance",
    "sample_dataset",
    "save_dataset",
    "tally_add",
    "utilization_ratio",
]
