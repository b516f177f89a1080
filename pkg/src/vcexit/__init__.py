"""Point-in-time backtesting of post-IPO venture capital exit-timing agents."""

__version__ = "0.1.0"

from .agents import (  # noqa: E402
    AgentConfig,
    ExitNow,
    ExitWithin,
    Hold,
    build_prompt,
    decide,
    parse_decision,
    render_decision,
)
from .evaluation import (  # noqa: E402
    ExitComparison,
    ImpliedExit,
    ReturnSeries,
    SummaryReport,
    compare_exit,
    cumulative_return,
    derive_implied_exit,
    hazard_correspondence,
    robustness_matrix,
    summarize_comparisons,
)
from .filings import (  # noqa: E402
    ActualExitRecord,
    OwnershipObservation,
    OwnershipSeries,
    VcEntity,
    derive_actual_exit,
    extract_holders,
    link_aliases,
    normalize_name,
    summarize_exits,
)
from .timeline import EventRecord, InfoPacket, Timeline, as_of, ingest_events, validate_timeline  # noqa: E402
