"""Kernel backend selection.

Two interchangeable backends implement the fused row-wise kernels:

* ``"c"``  — the Cython extension ``_speedups`` (built at install time)
* ``"py"`` — the numpy reference in :mod:`notifdt.diffcore.kernels.ref`

The compiled backend is preferred when importable. Set ``NOTIFDT_KERNELS=py``
(or ``c``) to force one, or call :func:`use_backend` at runtime (used by the
benchmark). Results are deterministic within a backend; across backends they
agree to float rounding only.
"""

import os

from . import ref

_BACKENDS = {"py": ref}
try:
    from . import _speedups

    _BACKENDS["c"] = _speedups
except ImportError:  # extension not built; numpy fallback
    _speedups = None


class KernelBackendError(RuntimeError):
    pass


def _pick_default():
    forced = os.environ.get("NOTIFDT_KERNELS", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise KernelBackendError(
                f"NOTIFDT_KERNELS={forced!r} requested but that backend is "
                f"unavailable (have: {sorted(_BACKENDS)})"
            )
        return forced
    return "c" if "c" in _BACKENDS else "py"


_active = _pick_default()


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return _active


def use_backend(name):
    """Switch the active backend; returns the previous backend name."""
    global _active
    if name not in _BACKENDS:
        raise KernelBackendError(f"unknown kernel backend {name!r}")
    prev = _active
    _active = name
    return prev


def _dispatch(fname):
    def call(*args):
        return getattr(_BACKENDS[_active], fname)(*args)

    call.__name__ = fname
    return call


layernorm_forward = _dispatch("layernorm_forward")
layernorm_backward = _dispatch("layernorm_backward")
masked_softmax_forward = _dispatch("masked_softmax_forward")
masked_softmax_backward = _dispatch("masked_softmax_backward")
gelu_forward = _dispatch("gelu_forward")
gelu_backward = _dispatch("gelu_backward")
pinball_forward = _dispatch("pinball_forward")
pinball_backward = _dispatch("pinball_backward")
softmax_xent_forward = _dispatch("softmax_xent_forward")
softmax_xent_backward = _dispatch("softmax_xent_backward")
