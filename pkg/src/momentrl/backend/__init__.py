"""Numeric kernel backend: compiled extension when built, numpy otherwise.

The hot inner loops (dense layers, the recurrent cell, the optimizer step)
run behind this facade. ``select("python")`` / ``select("native")`` switches
implementations at runtime, which the benchmark and the parity tests use;
everything else just calls the module-level functions.
"""

from __future__ import annotations

from momentrl.backend import python_backend as _py

ACT_IDENTITY = _py.ACT_IDENTITY
ACT_RELU = _py.ACT_RELU
ACT_SIGMOID = _py.ACT_SIGMOID
ACT_SOFTPLUS = _py.ACT_SOFTPLUS

try:
    from momentrl.backend import _native  # type: ignore[attr-defined]
except ImportError:
    _native = None

_KERNELS = ("dense_fwd", "dense_bwd", "gru_fwd", "gru_bwd", "adam_step")
_current = "python"


def limit_blas_threads(n: int = 1) -> None:
    """Clamp BLAS thread pools.

    Every matrix here is tiny (at most a few hundred rows), where
    multithreaded BLAS loses far more to synchronization than it gains;
    entry points call this once. No-op when threadpoolctl is unavailable.
    """
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    threadpool_limits(limits=n, user_api="blas")


def available_backends() -> tuple[str, ...]:
    return ("python", "native") if _native is not None else ("python",)


def backend_name() -> str:
    return _current


def select(name: str) -> str:
    """Bind the named implementation; returns the backend now in effect."""
    global _current
    if name == "native":
        if _native is None:
            raise RuntimeError("compiled backend is not built; run pip install to build it")
        impl = _native
    elif name == "python":
        impl = _py
    else:
        raise ValueError(f"unknown backend {name!r}; expected 'python' or 'native'")
    for fn in _KERNELS:
        globals()[fn] = getattr(impl, fn)
    _current = name
    return _current


select("native" if _native is not None else "python")
