"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the
pure-Python twins are used. Set ``CLICKCASCADE_PURE_PYTHON=1`` to force the
fallback. Both backends give identical results.
"""

import os

from . import _pykernels

if os.environ.get("CLICKCASCADE_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND

rng_next = _impl.rng_next
rng_uniform = _impl.rng_uniform
rng_below = _impl.rng_below
rng_fill_uniform = _impl.rng_fill_uniform
bernoulli_pairs = _impl.bernoulli_pairs
cascade_step = _impl.cascade_step
gibbs_sweep = _impl.gibbs_sweep


def available_backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
