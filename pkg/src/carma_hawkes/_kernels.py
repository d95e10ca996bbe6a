"""Compiled sequential recursions.

The state recursions underlying the likelihood, the compensator, and the
thinning simulator are inherently sequential, so they live here as numba
kernels.  All of them work in the eigenbasis of the companion matrix: with
A = V diag(eig) V^{-1}, propagating the state x over a gap dt reduces to an
elementwise complex multiply of y = V^{-1} x by exp(eig * dt).  Callers
prepare ``eig`` (eigenvalues), ``bv`` (row vector b' V) and ``w`` (V^{-1} e)
and read off intensities as mu + Re(bv . y).

None of these functions validate their inputs; the wrappers in the public
modules do.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Status codes shared by the thinning cores.
THIN_DONE = 0
THIN_NEED_DRAWS = 1
THIN_BOUND_VIOLATED = 2
THIN_OUT_FULL = 3


@njit(cache=True, nogil=True)
def event_states(times, eig, w):
    """Post-jump state (eigenbasis) after each event.

    Returns Y with Y[0] = 0 (state at time 0) and Y[k] the state immediately
    after the k-th event, so the state at any t in (T_k, T_{k+1}] is
    Y[k] * exp(eig * (t - T_k)).
    """
    n = times.shape[0]
    p = eig.shape[0]
    out = np.zeros((n + 1, p), np.complex128)
    t_prev = 0.0
    for k in range(n):
        dt = times[k] - t_prev
        for j in range(p):
            out[k + 1, j] = out[k, j] * np.exp(eig[j] * dt) + w[j]
        t_prev = times[k]
    return out


@njit(cache=True, nogil=True)
def event_states_biv(times, marks, eig1, w1, eig2, w2):
    """Bivariate analogue of :func:`event_states`, one block per component."""
    n = times.shape[0]
    p1 = eig1.shape[0]
    p2 = eig2.shape[0]
    out1 = np.zeros((n + 1, p1), np.complex128)
    out2 = np.zeros((n + 1, p2), np.complex128)
    t_prev = 0.0
    for k in range(n):
        dt = times[k] - t_prev
        for j in range(p1):
            out1[k + 1, j] = out1[k, j] * np.exp(eig1[j] * dt)
        for j in range(p2):
            out2[k + 1, j] = out2[k, j] * np.exp(eig2[j] * dt)
        if marks[k] > 0:
            for j in range(p1):
                out1[k + 1, j] += w1[j]
        else:
            for j in range(p2):
                out2[k + 1, j] += w2[j]
        t_prev = times[k]
    return out1, out2


@njit(cache=True, nogil=True)
def uni_loglik_core(times, eig, bv, w, mu):
    """Sum of log intensities (left limits) and the final post-jump state.

    Returns (sum_log, y, ok); ok is False when the intensity is not strictly
    positive at some event, which the caller signals as -inf.
    """
    p = eig.shape[0]
    y = np.zeros(p, np.complex128)
    t_prev = 0.0
    sum_log = 0.0
    for i in range(times.shape[0]):
        dt = times[i] - t_prev
        lam = mu
        for j in range(p):
            y[j] = y[j] * np.exp(eig[j] * dt)
            lam += (bv[j] * y[j]).real
        if not lam > 0.0:
            return 0.0, y, False
        sum_log += np.log(lam)
        for j in range(p):
            y[j] = y[j] + w[j]
        t_prev = times[i]
    return sum_log, y, True


@njit(cache=True, nogil=True)
def biv_loglik_core(times, marks, eig1, eig2, bv11, bv12, bv21, bv22, w1, w2, mu1, mu2):
    """Bivariate sum of log intensities and final post-jump states."""
    p1 = eig1.shape[0]
    p2 = eig2.shape[0]
    y1 = np.zeros(p1, np.complex128)
    y2 = np.zeros(p2, np.complex128)
    t_prev = 0.0
    sum_log = 0.0
    for i in range(times.shape[0]):
        dt = times[i] - t_prev
        for j in range(p1):
            y1[j] = y1[j] * np.exp(eig1[j] * dt)
        for j in range(p2):
            y2[j] = y2[j] * np.exp(eig2[j] * dt)
        if marks[i] > 0:
            lam = mu1
            for j in range(p1):
                lam += (bv11[j] * y1[j]).real
            for j in range(p2):
                lam += (bv12[j] * y2[j]).real
        else:
            lam = mu2
            for j in range(p1):
                lam += (bv21[j] * y1[j]).real
            for j in range(p2):
                lam += (bv22[j] * y2[j]).real
        if not lam > 0.0:
            return 0.0, y1, y2, False
        sum_log += np.log(lam)
        if marks[i] > 0:
            for j in range(p1):
                y1[j] = y1[j] + w1[j]
        else:
            for j in range(p2):
                y2[j] = y2[j] + w2[j]
        t_prev = times[i]
    return sum_log, y1, y2, True


@njit(cache=True, nogil=True)
def _phi(z, dt, eig):
    # integral of exp(eig * s) over (0, dt): (exp(z) - 1) / eig with z = eig * dt
    if abs(z) < 1e-8:
        return dt * (1.0 + 0.5 * z)
    return (np.exp(z) - 1.0) / eig


@njit(cache=True, nogil=True)
def uni_compensator_states(times, eig, bv, w):
    """Cumulative excitation integral and post-jump states at each event.

    acc[k] = integral of b' X_s over (0, T_k) (acc[0] = 0); Y as in
    :func:`event_states`.
    """
    n = times.shape[0]
    p = eig.shape[0]
    acc = np.zeros(n + 1)
    out = np.zeros((n + 1, p), np.complex128)
    t_prev = 0.0
    for k in range(n):
        dt = times[k] - t_prev
        a = acc[k]
        for j in range(p):
            z = eig[j] * dt
            a += (bv[j] * out[k, j] * _phi(z, dt, eig[j])).real
            out[k + 1, j] = out[k, j] * np.exp(z) + w[j]
        acc[k + 1] = a
        t_prev = times[k]
    return acc, out


@njit(cache=True, nogil=True)
def biv_compensator_states(times, marks, eig1, eig2, bv11, bv12, bv21, bv22, w1, w2):
    """Per-component excitation integrals and post-jump states at each event."""
    n = times.shape[0]
    p1 = eig1.shape[0]
    p2 = eig2.shape[0]
    acc1 = np.zeros(n + 1)
    acc2 = np.zeros(n + 1)
    out1 = np.zeros((n + 1, p1), np.complex128)
    out2 = np.zeros((n + 1, p2), np.complex128)
    t_prev = 0.0
    for k in range(n):
        dt = times[k] - t_prev
        a1 = acc1[k]
        a2 = acc2[k]
        for j in range(p1):
            z = eig1[j] * dt
            ph = _phi(z, dt, eig1[j])
            a1 += (bv11[j] * out1[k, j] * ph).real
            a2 += (bv21[j] * out1[k, j] * ph).real
            out1[k + 1, j] = out1[k, j] * np.exp(z)
        for j in range(p2):
            z = eig2[j] * dt
            ph = _phi(z, dt, eig2[j])
            a1 += (bv12[j] * out2[k, j] * ph).real
            a2 += (bv22[j] * out2[k, j] * ph).real
            out2[k + 1, j] = out2[k, j] * np.exp(z)
        if marks[k] > 0:
            for j in range(p1):
                out1[k + 1, j] += w1[j]
        else:
            for j in range(p2):
                out2[k + 1, j] += w2[j]
        acc1[k + 1] = a1
        acc2[k + 1] = a2
        t_prev = times[k]
    return acc1, acc2, out1, out2


@njit(cache=True, nogil=True)
def uni_thin_core(t, y, mu, eig, bv, w, horizon, cap, e_draws, u_draws, out, n_out):
    """Ogata thinning with a per-segment constant envelope.

    The envelope M = mu + sum_j |bv_j y_j| dominates
    lambda(t + s) = mu + Re(sum_j bv_j y_j exp(eig_j s)) for every s >= 0
    because Re(eig) < 0.  Proposals longer than ``cap`` only advance the
    clock (exact by memorylessness of the dominating Poisson process) so the
    envelope is refreshed at least once per ``cap`` time units.

    Consumes pre-drawn Exp(1) and U(0,1) arrays; returns
    (t, y, n_out, i_exp, i_unif, status).
    """
    p = eig.shape[0]
    i_e = 0
    i_u = 0
    while True:
        m = mu
        for j in range(p):
            m += abs(bv[j] * y[j])
        if i_e >= e_draws.shape[0] or i_u >= u_draws.shape[0]:
            return t, y, n_out, i_e, i_u, THIN_NEED_DRAWS
        gap = e_draws[i_e] / m
        i_e += 1
        if gap > cap:
            t += cap
            if t >= horizon:
                return t, y, n_out, i_e, i_u, THIN_DONE
            for j in range(p):
                y[j] = y[j] * np.exp(eig[j] * cap)
            continue
        t += gap
        if t > horizon:
            return t, y, n_out, i_e, i_u, THIN_DONE
        lam = mu
        for j in range(p):
            y[j] = y[j] * np.exp(eig[j] * gap)
            lam += (bv[j] * y[j]).real
        if lam > m * (1.0 + 1e-9) + 1e-12:
            return t, y, n_out, i_e, i_u, THIN_BOUND_VIOLATED
        u = u_draws[i_u]
        i_u += 1
        if u * m <= lam:
            out[n_out] = t
            n_out += 1
            for j in range(p):
                y[j] = y[j] + w[j]
            if n_out >= out.shape[0]:
                return t, y, n_out, i_e, i_u, THIN_OUT_FULL


@njit(cache=True, nogil=True)
def biv_thin_core(t, y1, y2, mu1, mu2, eig1, eig2, sv1, sv2, bv11, bv12, bv21, bv22,
                  w1, w2, horizon, cap, e_draws, u_draws, out, out_marks, n_out):
    """Bivariate thinning on the superposed intensity.

    sv1 = bv11 + bv21 and sv2 = bv12 + bv22 give the total intensity
    lambda_1 + lambda_2 = mu1 + mu2 + Re(sv1 . y1 + sv2 . y2); the envelope
    bounds it by mu1 + mu2 + sum |sv . y|.  Accepted points draw their mark
    with probability lambda_1 / (lambda_1 + lambda_2).  Consumes one uniform
    for the accept test and, on acceptance, one more for the mark.
    """
    p1 = eig1.shape[0]
    p2 = eig2.shape[0]
    mu = mu1 + mu2
    i_e = 0
    i_u = 0
    while True:
        m = mu
        for j in range(p1):
            m += abs(sv1[j] * y1[j])
        for j in range(p2):
            m += abs(sv2[j] * y2[j])
        if i_e >= e_draws.shape[0] or i_u + 1 >= u_draws.shape[0]:
            return t, y1, y2, n_out, i_e, i_u, THIN_NEED_DRAWS
        gap = e_draws[i_e] / m
        i_e += 1
        if gap > cap:
            t += cap
            if t >= horizon:
                return t, y1, y2, n_out, i_e, i_u, THIN_DONE
            for j in range(p1):
                y1[j] = y1[j] * np.exp(eig1[j] * cap)
            for j in range(p2):
                y2[j] = y2[j] * np.exp(eig2[j] * cap)
            continue
        t += gap
        if t > horizon:
            return t, y1, y2, n_out, i_e, i_u, THIN_DONE
        lam1 = mu1
        lam2 = mu2
        for j in range(p1):
            y1[j] = y1[j] * np.exp(eig1[j] * gap)
            lam1 += (bv11[j] * y1[j]).real
            lam2 += (bv21[j] * y1[j]).real
        for j in range(p2):
            y2[j] = y2[j] * np.exp(eig2[j] * gap)
            lam1 += (bv12[j] * y2[j]).real
            lam2 += (bv22[j] * y2[j]).real
        lam = lam1 + lam2
        if lam > m * (1.0 + 1e-9) + 1e-12:
            return t, y1, y2, n_out, i_e, i_u, THIN_BOUND_VIOLATED
        u = u_draws[i_u]
        i_u += 1
        if u * m <= lam:
            u_mark = u_draws[i_u]
            i_u += 1
            out[n_out] = t
            if u_mark * lam <= lam1:
                out_marks[n_out] = 1
                for j in range(p1):
                    y1[j] = y1[j] + w1[j]
            else:
                out_marks[n_out] = -1
                for j in range(p2):
                    y2[j] = y2[j] + w2[j]
            n_out += 1
            if n_out >= out.shape[0]:
                return t, y1, y2, n_out, i_e, i_u, THIN_OUT_FULL
