"""Programming-by-example synthesis with execution-guided bottom-up search
and automatic library learning."""

from .lang import (
    INT, BOOL, INT_LIST, Arrow, Ty, Term, EvalError, EvalLimits, LangError,
    evaluate, format_term, infer_type, parse_term, parse_type, term_size,
)
from .dsl import (
    DSLibrary, Operation, default_list_dsl, extend_with_abstraction,
    load_library, save_library, validate_dsl,
)
from .task import Task, TaskFormatError, load_tasks, parse_tasks, save_tasks
from .synthesis import (
    SearchConfig, SolveResult, UniformScorer, exhaustive_search, search,
)

__all__ = [
    "INT", "BOOL", "INT_LIST", "Arrow", "Ty", "Term", "EvalError",
    "EvalLimits", "LangError", "evaluate", "format_term", "infer_type",
    "parse_term", "parse_type", "term_size",
    "DSLibrary", "Operation", "default_list_dsl", "extend_with_abstraction",
    "load_library", "save_library", "validate_dsl",
    "Task", "TaskFormatError", "load_tasks", "parse_tasks", "save_tasks",
    "SearchConfig", "SolveResult", "UniformScorer", "exhaustive_search",
    "search",
]

__version__ = "0.1.0"
