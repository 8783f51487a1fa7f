"""Multi-granular undergraduate thesis assessment pipeline."""

from .layout import (
    ElementKind,
    EmptyStream,
    LayoutElement,
    LayoutStream,
    MalformedRecord,
    classify_furniture,
    parse_layout_stream,
)
from .reconstruct import (
    EmptyDocument,
    Paragraph,
    Placeholder,
    ReconstructedDocument,
    SchemaViolation,
    Section,
    SectionBoundary,
    detect_sections,
    from_json,
    merge_paragraphs,
    reconstruct,
    to_json,
)
from .rubric import (
    Dimension,
    Score,
    WeightProfile,
    core_weighted_profile,
    custom_profile,
    uniform_profile,
)
from .prompting import (
    Exemplar,
    PromptBundle,
    PromptConfig,
    PromptMode,
    build_composite_prompt,
    build_stage_prompts,
    build_standard_prompt,
    format_exemplar,
    select_exemplars,
)
from .llmclient import (
    ChatClient,
    ChatRequest,
    ChatResponse,
    Message,
    MockProvider,
    PacingPolicy,
    mock_provider,
)
from .report import (
    AssessmentReport,
    DimensionAssessment,
    HolisticOnlyResult,
    aggregate_holistic,
    finalize_report,
    parse_reply,
    render,
)
from .evalharness import (
    DatasetRecord,
    EvalResult,
    ScoreSeries,
    dataset_stats,
    load_manifest,
    mae,
    mse,
    pcc,
    run_config_matrix,
)
from .pipeline import assess_document, load_document

__version__ = "0.1.0"
