"""Hot per-minibatch update kernels: numba-jitted with a pure-numpy fallback.

The backend is picked once at import time from the ESGD_BACKEND environment
variable ("numba" or "numpy"); default is numba when importable, numpy
otherwise. Both backends evaluate identical arithmetic expression trees
(no fastmath, no reassociation), so their outputs are bitwise equal and a
run is reproducible under either.

All kernels are pure: inputs are never written, fresh output arrays are
returned.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "active_backend",
    "available_backends",
    "get_backend",
    "plain_sgd_update",
    "sgd_update",
    "adam_update",
]


def _plain_sgd_np(p, g, lr):
    return p - lr * g


def _sgd_np(p, vel, g, lr, momentum, nesterov):
    vel_new = momentum * vel - lr * g
    if nesterov:
        p_new = p + momentum * vel_new - lr * g
    else:
        p_new = p + vel_new
    return p_new, vel_new


def _adam_np(p, m, v, g, lr, beta1, beta2, omb1, omb2, bc1, bc2, eps):
    m_new = beta1 * m + omb1 * g
    v_new = beta2 * v + omb2 * (g * g)
    p_new = p - lr * (m_new / bc1) / (np.sqrt(v_new / bc2) + eps)
    return p_new, m_new, v_new


_NUMPY_BACKEND = {
    "plain_sgd": _plain_sgd_np,
    "sgd": _sgd_np,
    "adam": _adam_np,
}

_BACKENDS: dict[str, dict] = {"numpy": _NUMPY_BACKEND}

try:
    from numba import njit

    @njit(cache=True)
    def _plain_sgd_nb(p, g, lr):
        out = np.empty_like(p)
        for i in range(p.shape[0]):
            out[i] = p[i] - lr * g[i]
        return out

    @njit(cache=True)
    def _sgd_nb(p, vel, g, lr, momentum, nesterov):
        p_new = np.empty_like(p)
        vel_new = np.empty_like(vel)
        for i in range(p.shape[0]):
            vn = momentum * vel[i] - lr * g[i]
            vel_new[i] = vn
            if nesterov:
                p_new[i] = p[i] + momentum * vn - lr * g[i]
            else:
                p_new[i] = p[i] + vn
        return p_new, vel_new

    @njit(cache=True)
    def _adam_nb(p, m, v, g, lr, beta1, beta2, omb1, omb2, bc1, bc2, eps):
        p_new = np.empty_like(p)
        m_new = np.empty_like(m)
        v_new = np.empty_like(v)
        for i in range(p.shape[0]):
            mn = beta1 * m[i] + omb1 * g[i]
            vn = beta2 * v[i] + omb2 * (g[i] * g[i])
            m_new[i] = mn
            v_new[i] = vn
            p_new[i] = p[i] - lr * (mn / bc1) / (np.sqrt(vn / bc2) + eps)
        return p_new, m_new, v_new

    _BACKENDS["numba"] = {
        "plain_sgd": _plain_sgd_nb,
        "sgd": _sgd_nb,
        "adam": _adam_nb,
    }
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    pass


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _resolve_backend() -> str:
    requested = os.environ.get("ESGD_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise RuntimeError(
                f"ESGD_BACKEND={requested!r} not available; "
                f"choose one of {available_backends()}"
            )
        return requested
    return "numba" if "numba" in _BACKENDS else "numpy"


_ACTIVE_NAME = _resolve_backend()
_ACTIVE = _BACKENDS[_ACTIVE_NAME]


def active_backend() -> str:
    return _ACTIVE_NAME


def get_backend(name: str | None = None) -> dict:
    """Kernel table for a backend, defaulting to the active one."""
    if name is None:
        return _ACTIVE
    return _BACKENDS[name]


def plain_sgd_update(p, g, lr, kernels=None):
    """theta' = theta - lr * g."""
    k = kernels or _ACTIVE
    return k["plain_sgd"](p, g, lr)


def sgd_update(p, vel, g, lr, momentum, nesterov, kernels=None):
    """Heavy-ball / Nesterov update.

    v' = momentum * v - lr * g
    theta' = theta + v'                       (heavy ball)
    theta' = theta + momentum * v' - lr * g   (nesterov)
    """
    k = kernels or _ACTIVE
    return k["sgd"](p, vel, g, lr, momentum, nesterov)


def adam_update(p, m, v, g, lr, beta1, beta2, eps, t, kernels=None):
    """Bias-corrected adam step at step counter t (t >= 1)."""
    k = kernels or _ACTIVE
    omb1 = 1.0 - beta1
    omb2 = 1.0 - beta2
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    return k["adam"](p, m, v, g, lr, beta1, beta2, omb1, omb2, bc1, bc2, eps)
