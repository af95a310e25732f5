"""Product question answering from reviews and attribute tables.

The package implements a question-aware review reader, a key-value
attribute memory, a pointer-equipped decoder and a Wasserstein
consistency critic, all on top of a small define-by-run float64
autodiff core that supports differentiating through gradient norms.
"""

import os

# Single-threaded BLAS keeps checkpoints bit-reproducible across runs.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
del _var, os

from paag.autograd import Tensor, backward, grad, grad_norm_of, no_grad  # noqa: E402

__all__ = ["Tensor", "backward", "grad", "grad_norm_of", "no_grad"]
__version__ = "0.1.0"
