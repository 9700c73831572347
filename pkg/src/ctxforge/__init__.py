"""ctxforge: train image classifiers from one synthetic exemplar per class.

The training stream is generated, not collected: augmented objects are
composited over noise or recycled-composite contexts, locally refined by
sign-gradient ascent against the current model, and fed to a small conv net
trained from scratch.
"""

from .imageops import AugmentParams, Image
from .nn import Network, Tensor, model_spec

__version__ = "0.1.0"

__all__ = ["AugmentParams", "Image", "Network", "Tensor", "model_spec", "__version__"]
