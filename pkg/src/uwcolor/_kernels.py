"""Hot per-pixel kernels with a numba fast path and a pure-numpy fallback.

The water forward/inverse model and the tone-curve sigmoid dominate runtime
on real image sizes (every pixel needs several exponentials). Each kernel
exists twice: ``*_numpy`` (vectorized reference) and, when numba is
importable, a compiled loop version. The active implementation is chosen at
import time; set ``UWCOLOR_DISABLE_NUMBA=1`` to force the numpy path.
``benchmarks/bench_kernels.py`` times the two against each other.

All kernels take/return plain float64 arrays; tagging, masking policy and
validation live in the calling modules.
"""

from __future__ import annotations

import math
import os

import numpy as np


def _want_numba() -> bool:
    if os.environ.get("UWCOLOR_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _want_numba()


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def degrade_numpy(j, z, valid, beta_d, beta_b, b_inf):
    """Apply attenuation + backscatter: I = J*exp(-bD*z) + Binf*(1-exp(-bB*z)).

    ``j``: (H, W, 3); ``z``/``valid``: (H, W). Invalid pixels are copied
    through unchanged.
    """
    zz = z[..., None]
    out = j * np.exp(-beta_d * zz) + b_inf * (1.0 - np.exp(-beta_b * zz))
    out = np.where(valid[..., None], out, j)
    return out


def restore_numpy(i, z, valid, beta_d, beta_b, b_inf):
    """Invert the degradation model.

    Returns ``(j_hat, clamped)``: the recovered image clamped to [0, 1] and a
    (H, W) mask of pixels where clamping changed a value. Invalid pixels are
    copied through with ``clamped`` False.
    """
    zz = z[..., None]
    raw = (i - b_inf * (1.0 - np.exp(-beta_b * zz))) * np.exp(beta_d * zz)
    j_hat = np.clip(raw, 0.0, 1.0)
    clamped = np.any(raw != j_hat, axis=-1) & valid
    j_hat = np.where(valid[..., None], j_hat, i)
    return j_hat, clamped


def transmission_numpy(z, beta_d):
    """Per-channel direct-signal transmission exp(-bD*z), shape (H, W, 3)."""
    return np.exp(-beta_d * z[..., None])


def tone_curve_numpy(v, strength, pivot):
    """Normalized logistic s-curve on [0, 1] pinned at the endpoints.

    strength 0 is the exact identity; larger values steepen the curve around
    the pivot.
    """
    if strength == 0.0:
        return v.copy()
    lo = 1.0 / (1.0 + math.exp(strength * pivot))
    hi = 1.0 / (1.0 + math.exp(-strength * (1.0 - pivot)))
    sig = 1.0 / (1.0 + np.exp(-strength * (v - pivot)))
    return (sig - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# numba loop versions
# ---------------------------------------------------------------------------

if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _degrade_nb(j, z, valid, beta_d, beta_b, b_inf):  # pragma: no cover
        h, w, _ = j.shape
        out = np.empty_like(j)
        for y in range(h):
            for x in range(w):
                if valid[y, x]:
                    for c in range(3):
                        td = math.exp(-beta_d[c] * z[y, x])
                        tb = math.exp(-beta_b[c] * z[y, x])
                        out[y, x, c] = j[y, x, c] * td + b_inf[c] * (1.0 - tb)
                else:
                    for c in range(3):
                        out[y, x, c] = j[y, x, c]
        return out

    @njit(cache=True)
    def _restore_nb(i, z, valid, beta_d, beta_b, b_inf):  # pragma: no cover
        h, w, _ = i.shape
        out = np.empty_like(i)
        clamped = np.zeros((h, w), dtype=np.bool_)
        for y in range(h):
            for x in range(w):
                if valid[y, x]:
                    for c in range(3):
                        tb = math.exp(-beta_b[c] * z[y, x])
                        raw = (i[y, x, c] - b_inf[c] * (1.0 - tb)) * math.exp(beta_d[c] * z[y, x])
                        if raw < 0.0:
                            out[y, x, c] = 0.0
                            clamped[y, x] = True
                        elif raw > 1.0:
                            out[y, x, c] = 1.0
                            clamped[y, x] = True
                        else:
                            out[y, x, c] = raw
                else:
                    for c in range(3):
                        out[y, x, c] = i[y, x, c]
        return out, clamped

    @njit(cache=True)
    def _transmission_nb(z, beta_d):  # pragma: no cover
        h, w = z.shape
        out = np.empty((h, w, 3))
        for y in range(h):
            for x in range(w):
                for c in range(3):
                    out[y, x, c] = math.exp(-beta_d[c] * z[y, x])
        return out

    @njit(cache=True)
    def _tone_curve_nb(v, strength, pivot):  # pragma: no cover
        flat = v.ravel()
        out = np.empty_like(flat)
        if strength == 0.0:
            out[:] = flat
        else:
            lo = 1.0 / (1.0 + math.exp(strength * pivot))
            hi = 1.0 / (1.0 + math.exp(-strength * (1.0 - pivot)))
            span = hi - lo
            for k in range(flat.size):
                sig = 1.0 / (1.0 + math.exp(-strength * (flat[k] - pivot)))
                out[k] = (sig - lo) / span
        return out.reshape(v.shape)

    degrade_numba = _degrade_nb
    restore_numba = _restore_nb
    transmission_numba = _transmission_nb
    tone_curve_numba = _tone_curve_nb

    degrade = _degrade_nb
    restore = _restore_nb
    transmission = _transmission_nb
    tone_curve = _tone_curve_nb
else:
    degrade_numba = None
    restore_numba = None
    transmission_numba = None
    tone_curve_numba = None

    degrade = degrade_numpy
    restore = restore_numpy
    transmission = transmission_numpy
    tone_curve = tone_curve_numpy
