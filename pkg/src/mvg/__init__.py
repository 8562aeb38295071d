"""mvg: a bitext-trained generative sentence model with separate semantic
(von Mises-Fisher) and syntactic (Gaussian) latent variables, used for
exemplar-controlled paraphrase generation and translation."""

__version__ = "0.1.0"

from ._core import BACKEND as kernel_backend  # noqa: F401
