"""Kernel dispatch: compiled Cython extension if built, numpy fallback otherwise.

Set SSATTN_PURE=1 in the environment to force the numpy path. The active
implementation is chosen once at import; ``USING_COMPILED`` records the choice.
"""

import os

from . import ref

USING_COMPILED = False
_impl = ref

if os.environ.get("SSATTN_PURE", "") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        USING_COMPILED = True
    except ImportError:
        _impl = ref

softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
adam_step = _impl.adam_step
