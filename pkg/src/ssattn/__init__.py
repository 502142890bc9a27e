"""Self-supervised attention trainer.

Trains a small transformer text classifier while teaching a per-token
importance head from the model's own behavior: occlude tokens, see whether
the prediction flips, and use the flips as supervision. The learned
importance can then reweight pooling.
"""

from .kernels import USING_COMPILED

__version__ = "0.1.0"

__all__ = ["USING_COMPILED", "__version__"]
