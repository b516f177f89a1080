from .client import ChatClient, ClientConfig, TokenBucket, cache_key, complete_with_cache
from .decisions import (
    EXIT_NOW,
    HOLD,
    Decision,
    ExitNow,
    ExitWithin,
    Hold,
    decision_from_label,
    is_exit,
    parse_decision,
    render_decision,
)
from .policies import (
    Agent,
    AgentConfig,
    AgentKind,
    AmbiguousFallback,
    FirmContext,
    build_agent,
    decide,
    hazard_peak_month,
)
from .prompts import (
    NO_THEORY_SENTINEL,
    THEORY_IDS,
    PromptTemplate,
    TheoryBlock,
    build_prompt,
    load_template,
    theory_blocks,
)

__all__ = [
    "Agent",
    "AgentConfig",
    "AgentKind",
    "AmbiguousFallback",
    "ChatClient",
    "ClientConfig",
    "Decision",
    "EXIT_NOW",
    "ExitNow",
    "ExitWithin",
    "FirmContext",
    "HOLD",
    "Hold",
    "NO_THEORY_SENTINEL",
    "PromptTemplate",
    "THEORY_IDS",
    "TheoryBlock",
    "TokenBucket",
    "build_agent",
    "build_prompt",
    "cache_key",
    "complete_with_cache",
    "decide",
    "decision_from_label",
    "hazard_peak_month",
    "is_exit",
    "load_template",
    "parse_decision",
    "render_decision",
    "theory_blocks",
]
