from __future__ import annotations

import numpy as np
from scipy import special


def fab_p_value(s, b):
    """FAB p-value ``1 - |Phi(s + b) - Phi(-s)|`` for standardized statistic ``s``.

    Evaluated through upper/lower tails so that small p-values keep full
    relative precision; with ``b == 0`` it equals ``2 * Phi(-|s|)`` exactly.
    """
    s = np.asarray(s, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(b))):
        raise ValueError("fab_p_value needs finite s and b")
    sb = s + b
    # Phi(s+b) >= Phi(-s)  <=>  s + b >= -s
    upper = special.ndtr(-sb) + special.ndtr(-s)
    lower = special.ndtr(sb) + special.ndtr(s)
    out = np.where(sb >= -s, upper, lower)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def fab_offset(m_j: float, v_j: float, n: int) -> float:
    """Offset ``2 m / (v sqrt(n - 3))`` of the FAB p-value."""
    return 2.0 * m_j / (v_j * np.sqrt(n - 3.0))
