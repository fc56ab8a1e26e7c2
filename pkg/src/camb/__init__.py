"""camb: train small conv classifiers under cross-entropy or contrastive
objectives, explain them with Grad-CAM / Eigen-CAM, and score the saliency
maps on faithfulness, coherence, continuity, contrastivity, and complexity.
"""

__version__ = "0.1.0"

from .tensor import Tensor, no_grad

__all__ = ["Tensor", "no_grad", "__version__"]
