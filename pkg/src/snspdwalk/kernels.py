"""Hot sequential loops.

Each ``*_py`` function is the reference implementation in plain Python over
numpy arrays; the unsuffixed name is the same function compiled with numba
when the accelerated backend is active (see ``_accel``).  Where a loop has
a reasonable numpy formulation the fallback uses that instead.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, jit


def _undershoot_py(x, amp, rise, tau_rf, tau_hp):
    """High-passed voltage of one pulse, ``x`` ps after its edge started.

    The pulse is a linear ramp to ``amp`` over ``rise`` followed by an
    exponential decay (``tau_rf``); the readout is a single-pole high-pass
    with time constant ``tau_hp``.  Output = input - low-passed input.
    """
    if tau_hp <= 0.0 or x <= 0.0:
        return 0.0
    h = tau_hp
    if x < rise:
        return amp * h / rise * (1.0 - math.exp(-x / h))
    s = x - rise
    low_at_peak = amp * (1.0 - h / rise * (1.0 - math.exp(-rise / h)))
    if abs(tau_rf - h) < 1e-9 * h:
        forced = amp * (s / h) * math.exp(-s / h)
    else:
        forced = amp * tau_rf / (tau_rf - h) * (math.exp(-s / tau_rf) - math.exp(-s / h))
    return amp * math.exp(-s / tau_rf) - low_at_peak * math.exp(-s / h) - forced


undershoot = jit(_undershoot_py)


def _detect_loop_py(t, u_abs, z, tau_b, tau_rf, rise, amax, vth, tau_hp, sigma,
                    eff_max, eff_exp, holdoff):
    """Sequential detector pass over exact photon times ``t`` (float ps).

    ``u_abs`` are uniforms for the absorption draws and ``z`` standard
    normals for timing noise, one per photon.  Returns (tag_time, photon
    index, amplitude) arrays truncated to the number of emitted tags.
    """
    n = t.shape[0]
    out_t = np.empty(n, np.float64)
    out_i = np.empty(n, np.int64)
    out_a = np.empty(n, np.float64)
    k = 0
    have_last = False
    t_last = 0.0
    a_last = 0.0
    holdoff_end = -np.inf
    for i in range(n):
        ti = t[i]
        if holdoff and ti < holdoff_end:
            continue
        if have_last:
            r = -math.expm1(-(ti - t_last) / tau_b)
        else:
            r = 1.0
        if u_abs[i] >= eff_max * r ** eff_exp:
            continue
        amp = amax * r
        if amp <= vth:
            continue
        u = 0.0
        if have_last and tau_hp > 0.0:
            u = _undershoot(ti - t_last, a_last, rise, tau_rf, tau_hp)
            if u >= vth:
                continue
        out_t[k] = ti + rise * (vth - u) / amp + sigma * z[i]
        out_i[k] = i
        out_a[k] = amp
        k += 1
        have_last = True
        t_last = ti
        a_last = amp
        holdoff_end = ti + rise + tau_rf * math.log(amp / vth)
    return out_t[:k], out_i[:k], out_a[:k]


# the loop body calls the helper through this module-level name so that the
# numba build resolves it to the compiled version
_undershoot = undershoot if USE_NUMBA else _undershoot_py
detect_loop = jit(_detect_loop_py)


def _pll_loop_py(t, period0, kp, ki):
    """Proportional-integral clock recovery over ordered times ``t`` (float ps).

    The reference tick is re-anchored at every tag.  For each tag the
    residual is the phase error against the model *before* that tag's
    update.  Returns (tick, residual, final_period, final_ref_time).
    """
    n = t.shape[0]
    ticks = np.zeros(n, np.int64)
    res = np.zeros(n, np.float64)
    period = period0
    if n == 0:
        return ticks, res, period, 0.0
    t_ref = t[0]
    n_ref = 0
    for i in range(1, n):
        x = t[i] - t_ref
        m = math.ceil(x / period - 0.5)
        e = x - m * period
        n_ref += m
        ticks[i] = n_ref
        res[i] = e
        t_ref += m * period + kp * e
        if m > 0:
            period += ki * e / m
    return ticks, res, period, t_ref


pll_loop = jit(_pll_loop_py)


def _deadtime_loop_py(t, deadtime):
    n = t.shape[0]
    keep = np.zeros(n, np.bool_)
    if n == 0:
        return keep
    keep[0] = True
    last = t[0]
    for i in range(1, n):
        if t[i] - last >= deadtime:
            keep[i] = True
            last = t[i]
    return keep


def deadtime_search(t, deadtime):
    """numpy fallback: hop from each kept tag to the first tag ``deadtime`` later."""
    n = t.shape[0]
    keep = np.zeros(n, np.bool_)
    i = 0
    while i < n:
        keep[i] = True
        i = max(i + 1, int(np.searchsorted(t, t[i] + deadtime, side="left")))
    return keep


deadtime_loop = jit(_deadtime_loop_py) if USE_NUMBA else deadtime_search


def _correct_chained_py(t, tp, dmed):
    """Correction using the *corrected* predecessor to form the gap.

    ``t`` is one channel's raw times; the first tag passes through.
    """
    n = t.shape[0]
    out = np.empty(n, np.int64)
    if n == 0:
        return out
    out[0] = t[0]
    for i in range(1, n):
        dt = float(t[i] - out[i - 1])
        if dt <= 0.0:
            dt = 1e-9
        out[i] = t[i] - np.int64(math.floor(np.interp(dt, tp, dmed) + 0.5))
    return out


correct_chained = jit(_correct_chained_py)
