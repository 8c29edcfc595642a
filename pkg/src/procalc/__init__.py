"""procalc: a tool-chaining agent engine for process-engineering
calculations with attributable reflection, program caching, retrieval-
augmented generation, and a four-stage tool-learning metric suite."""

from .errors import ProcalcError

__version__ = "0.1.0"

__all__ = ["ProcalcError", "__version__"]
