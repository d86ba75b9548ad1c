"""Datamation authoring engine.

Turns a tabular dataset plus a data question (restricted natural language
or an explicit step script) into an executable analysis pipeline, and
compiles that pipeline into an animated unit-visualization document.
"""

from .compiler import Action, Compilation, CompiledStep, compile_pipeline, reorder, translate_op, caption_op
from .dataset import (
    Column,
    LinearizedQuery,
    Table,
    infer_column_kind,
    linearize_query,
    load_table,
    to_csv,
)
from .decomposer import (
    FeedbackRecord,
    FeedbackStore,
    MetricsReport,
    decompose,
    decompose_text,
    eval_metrics,
    record_feedback,
)
from .document import canonical_json, compile_datamation
from .executor import (
    ColumnView,
    Grouped,
    Ordered,
    RecordSet,
    Scalar,
    StepValue,
    eval_op,
    execute_pipeline,
)
from .qdmr import (
    Condition,
    Pipeline,
    QdmrOp,
    StepRef,
    ValidationError,
    dependency_graph,
    parse_pipeline,
    print_pipeline,
    validate_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Column",
    "ColumnView",
    "Compilation",
    "CompiledStep",
    "Condition",
    "FeedbackRecord",
    "FeedbackStore",
    "Grouped",
    "LinearizedQuery",
    "MetricsReport",
    "Ordered",
    "Pipeline",
    "QdmrOp",
    "RecordSet",
    "Scalar",
    "StepRef",
    "StepValue",
    "Table",
    "ValidationError",
    "canonical_json",
    "caption_op",
    "compile_datamation",
    "compile_pipeline",
    "decompose",
    "decompose_text",
    "dependency_graph",
    "eval_metrics",
    "eval_op",
    "execute_pipeline",
    "infer_column_kind",
    "linearize_query",
    "load_table",
    "parse_pipeline",
    "print_pipeline",
    "record_feedback",
    "reorder",
    "to_csv",
    "translate_op",
    "validate_pipeline",
]
