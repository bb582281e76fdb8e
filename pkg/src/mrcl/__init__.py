"""KL-budgeted variational weight compression.

Trains a diagonal-Gaussian distribution over the weights of a small model
under an explicit KL budget, then transmits a random weight-set drawn from
it as block indices into a shared pseudo-random sample stream; a bit-exact
decoder rebuilds the weights from the indices and a public seed.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
