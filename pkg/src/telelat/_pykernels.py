"""Pure-Python detector kernels.

Used when the compiled ``_speedups`` extension is unavailable, and as the
reference the compiled kernels are tested against.  Both implementations
must produce bit-identical results: the filter update is evaluated as
``alpha * x + (1 - alpha) * y`` in that exact order.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def lowpass(x, alpha: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    if x.size == 0:
        return out
    beta = 1.0 - alpha
    y = float(x[0])
    out[0] = y
    xs = x.tolist()
    for i in range(1, len(xs)):
        y = alpha * xs[i] + beta * y
        out[i] = y
    return out


def initial_state():
    # (y_prev, primed, active, onset_t, peak, pending, cand_t)
    return (0.0, False, False, 0, 0.0, False, 0)


def run_detector(t, x, alpha: float, threshold: float, window_ns: int, state):
    """Filter ``x`` and advance the onset/completion state machine.

    Returns ``(events, state)`` where each event is ``(onset_t, completion_t,
    peak)`` for motions completed inside this chunk.
    """
    y, primed, active, onset_t, peak, pending, cand_t = state
    beta = 1.0 - alpha
    events = []
    ts = np.asarray(t, dtype=np.int64).tolist()
    xs = np.asarray(x, dtype=np.float64).tolist()
    for tn, xn in zip(ts, xs):
        if primed:
            y = alpha * xn + beta * y
        else:
            y = xn
            primed = True
        if active:
            if pending:
                if y > threshold:
                    if tn - cand_t > window_ns:
                        events.append((onset_t, cand_t, peak))
                        active = False
                        pending = False
                    else:
                        pending = False
                        if y > peak:
                            peak = y
                        continue
                else:
                    if tn - cand_t >= window_ns:
                        events.append((onset_t, cand_t, peak))
                        active = False
                        pending = False
                    continue
            elif y > threshold:
                if y > peak:
                    peak = y
                continue
            else:
                pending = True
                cand_t = tn
                continue
        if y > threshold:
            active = True
            onset_t = tn
            peak = y
    return events, (y, primed, active, onset_t, peak, pending, cand_t)
