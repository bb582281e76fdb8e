"""Backend selection for the hot kernels.

The compiled extension is preferred when importable; the numpy fallback is
always available. Exactly one backend is active per process so every
regenerated sample within a run is bit-identical, regardless of whether it
was produced in bulk (encoding) or individually (decoding). Set
MRCL_FORCE_PY=1 to pin the fallback, e.g. for the benchmark or tests.
"""

import os

from . import _kernels_py

if os.environ.get("MRCL_FORCE_PY"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl

        BACKEND = "c"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

normals = _impl.normals
log_weight_samples_from_p = _impl.log_weight_samples_from_p
log_ratio_samples_from_q = _impl.log_ratio_samples_from_q

# uniforms are integer-exact and therefore identical across backends; the
# numpy implementation is kept canonical so partition shuffles, proposal
# draws and selection uniforms never depend on the backend at all.
uniforms = _kernels_py.uniforms
