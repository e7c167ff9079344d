"""Kernel backend selection.

The compiled extension (cykernels) is preferred; the numpy module
(npkernels) is the drop-in fallback. Set CONTHER_PUREPY=1 to force the
fallback, e.g. for benchmarking one against the other.
"""

import os

if os.environ.get("CONTHER_PUREPY"):
    from conther.kern import npkernels as impl

    COMPILED = False
else:
    try:
        from conther.kern import cykernels as impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        from conther.kern import npkernels as impl  # type: ignore[no-redef]

        COMPILED = False

softmax_rows = impl.softmax_rows
softmax_rows_grad = impl.softmax_rows_grad
layernorm_rows = impl.layernorm_rows
layernorm_rows_grad = impl.layernorm_rows_grad
softplus = impl.softplus
softplus_grad = impl.softplus_grad
tanh_grad = impl.tanh_grad
adam_update = impl.adam_update
