"""Compiled closed/open-loop simulation loop.

Everything evaluated per integrator stage lives here so that a one-second run
at the default 6.5 us step stays in compiled code.  The public entry points
are in :mod:`maglev_ff.sim`; this module only deals in arrays.
"""

import numpy as np
from numba import njit

from . import _kernels as K
from .feedback import pid_update
from .feedforward import PINV_RTOL, _fam_eval, _inverse_eval
from .scheduling import _jets_kernel
from .trajectory import pp_eval

# feedforward kernel identifiers
FF_NONE, FF_MASS, FF_ANN_GLOBAL, FF_NONLINEAR, FF_LPV_LOCAL, FF_LPV_IC, FF_ANN_LOCAL, FF_LPV_INV = range(8)
# feedback modes
FB_NONE, FB_PID, FB_PROP = range(3)

STATUS_OK, STATUS_RANK, STATUS_RELDEG, STATUS_SINGULAR = 0, 1, 2, 3


@njit(cache=True)
def ff_eval(kid, r, rd, rdd, q, qd, qdd, z, plant, c, inertia, inv, codes, sched_order, lB):
    """Feedforward wrench, internal-state derivative and status for one stage."""
    m, Ix, Iy, Iz = plant[0], plant[1], plant[2], plant[3]
    zdot = np.zeros(z.shape[0])
    if kid == FF_MASS:
        return inertia * rdd, zdot, 0
    if kid == FF_ANN_GLOBAL:
        return K.mass_apply(q, rdd, m, Ix, Iy, Iz), zdot, 0
    if kid == FF_NONLINEAR:
        return K.inverse_dynamics(r, rd, rdd, rd, m, Ix, Iy, Iz, c), zdot, 0
    if kid == FF_LPV_IC:
        return K.inverse_dynamics(q, qd, rdd, rd, m, Ix, Iy, Iz, c), zdot, 0
    if kid == FF_ANN_LOCAL:
        p = np.empty(2)
        p[0] = q[3]
        p[1] = q[4]
        B = _fam_eval(lB[0], lB[1], p, 0)
        U, s, Vt = np.linalg.svd(B, full_matrices=False)
        if s[-1] <= PINV_RTOL * s[0]:
            return np.zeros(6), zdot, 1
        Bp = (Vt.T / s) @ U.T
        return np.ascontiguousarray(Bp[:, 6:]) @ rdd, zdot, 0
    if kid == FF_LPV_LOCAL or kid == FF_LPV_INV:
        Es, Ei, As, Ai, Bs, Bi, Cs, Ci = inv
        derivs = np.empty((3, 6))
        derivs[0] = q
        derivs[1] = qd
        derivs[2] = qdd
        jets = _jets_kernel(derivs, codes, sched_order)
        pj = np.zeros((3, jets.shape[1]))
        pj[: sched_order + 1] = jets
        xdot, u, status = _inverse_eval(Es, Ei, As, Ai, Bs, Bi, Cs, Ci, pj, 2, z, rdd, PINV_RTOL)
        return u, xdot, status
    return np.zeros(6), zdot, 0


@njit(cache=True)
def _stage(t, x, z, qdd_est, ufb_hold, fb_mode, Kp, Kv, kid, plant, c, inertia, inv, codes, sched_order, lB,
           rk, rc, dk, dc, hints):
    ref, hints[0] = pp_eval(rk, rc, t, 2, hints[0])
    dist, hints[1] = pp_eval(dk, dc, t, 0, hints[1])
    q = x[:6]
    qd = x[6:]
    uff, zdot, status = ff_eval(kid, ref[0], ref[1], ref[2], q, qd, qdd_est, z, plant, c, inertia, inv, codes,
                                sched_order, lB)
    if fb_mode == FB_PROP:
        ufb = Kp @ (ref[0] - q) + Kv @ (ref[1] - qd)
    else:
        ufb = ufb_hold
    W = uff + ufb + dist[0]
    acc = K.accel(q, qd, W, plant[0], plant[1], plant[2], plant[3], c)
    if np.isnan(acc[0]):
        status = STATUS_SINGULAR
    xdot = np.empty(12)
    xdot[:6] = qd
    xdot[6:] = acc
    return xdot, zdot, ref, uff, ufb, dist[0], status


@njit(cache=True)
def _rk4(t, dt, x, z, qdd_est, ufb_hold, fb_mode, Kp, Kv, kid, plant, c, inertia, inv, codes, sched_order, lB,
         rk, rc, dk, dc, hints):
    k1x, k1z, _, _, _, _, s1 = _stage(t, x, z, qdd_est, ufb_hold, fb_mode, Kp, Kv, kid, plant, c, inertia, inv,
                                      codes, sched_order, lB, rk, rc, dk, dc, hints)
    k2x, k2z, _, _, _, _, s2 = _stage(t + 0.5 * dt, x + 0.5 * dt * k1x, z + 0.5 * dt * k1z, k1x[6:], ufb_hold,
                                      fb_mode, Kp, Kv, kid, plant, c, inertia, inv, codes, sched_order, lB,
                                      rk, rc, dk, dc, hints)
    k3x, k3z, _, _, _, _, s3 = _stage(t + 0.5 * dt, x + 0.5 * dt * k2x, z + 0.5 * dt * k2z, k2x[6:], ufb_hold,
                                      fb_mode, Kp, Kv, kid, plant, c, inertia, inv, codes, sched_order, lB,
                                      rk, rc, dk, dc, hints)
    k4x, k4z, _, _, _, _, s4 = _stage(t + dt, x + dt * k3x, z + dt * k3z, k3x[6:], ufb_hold, fb_mode, Kp, Kv,
                                      kid, plant, c, inertia, inv, codes, sched_order, lB, rk, rc, dk, dc, hints)
    status = max(max(s1, s2), max(s3, s4))
    x_new = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    z_new = z + (dt / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    return x_new, z_new, k4x[6:].copy(), status


@njit(cache=True)
def simulate(x0, z0, n_samples, substeps, Ts, kid, plant, c, inertia, inv, codes, sched_order, lB,
             rk, rc, dk, dc, breaks, fb_mode, kp, ki, kd, tau, Kp, Kv):
    """Integrate and record at every sample instant ``k Ts``.

    Returns (q, qd, r, rd, uff, ufb, d, status, fail_index).  PID output is
    computed from the sampled error and held over the sample period;
    proportional feedback and all feedforward laws act continuously.  An RK4
    step that would straddle one of the sorted ``breaks`` (kinks of the
    reference or disturbance) is split there, so piecewise-polynomial inputs
    are integrated without kink errors.  The scheduling acceleration passed to
    the feedforward is the plant acceleration of the previous stage.
    """
    h = Ts / substeps
    q_rec = np.empty((n_samples, 6))
    qd_rec = np.empty((n_samples, 6))
    r_rec = np.empty((n_samples, 6))
    rd_rec = np.empty((n_samples, 6))
    uff_rec = np.empty((n_samples, 6))
    ufb_rec = np.empty((n_samples, 6))
    d_rec = np.empty((n_samples, 6))
    x = x0.copy()
    z = z0.copy()
    qdd_est = np.zeros(6)
    ufb_hold = np.zeros(6)
    integ = np.zeros(6)
    prev_e = np.zeros(6)
    deriv = np.zeros(6)
    hints = np.zeros(2, dtype=np.int64)
    bp = 0
    n_bp = breaks.shape[0]
    for k in range(n_samples):
        t = k * Ts
        if fb_mode == FB_PID:
            ref, hints[0] = pp_eval(rk, rc, t, 2, hints[0])
            ufb_hold = pid_update(ref[0] - x[:6], integ, prev_e, deriv, kp, ki, kd, tau, Ts, k == 0)
        k1x, _, ref, uff, ufb, dist, status = _stage(t, x, z, qdd_est, ufb_hold, fb_mode, Kp, Kv, kid, plant, c,
                                                     inertia, inv, codes, sched_order, lB, rk, rc, dk, dc, hints)
        q_rec[k] = x[:6]
        qd_rec[k] = x[6:]
        r_rec[k] = ref[0]
        rd_rec[k] = ref[1]
        uff_rec[k] = uff
        ufb_rec[k] = ufb
        d_rec[k] = dist
        qdd_est = k1x[6:].copy()
        if status != 0:
            return q_rec, qd_rec, r_rec, rd_rec, uff_rec, ufb_rec, d_rec, status, k
        if k == n_samples - 1:
            break
        for s in range(substeps):
            t0 = t + s * h
            t1 = t + (s + 1) * h
            while bp < n_bp and breaks[bp] <= t0:
                bp += 1
            while bp < n_bp and breaks[bp] < t1:
                tb = breaks[bp]
                if tb - t0 > 1e-3 * h:
                    x, z, qdd_est, status = _rk4(t0, tb - t0, x, z, qdd_est, ufb_hold, fb_mode, Kp, Kv, kid, plant,
                                                 c, inertia, inv, codes, sched_order, lB, rk, rc, dk, dc, hints)
                    if status != 0:
                        return q_rec, qd_rec, r_rec, rd_rec, uff_rec, ufb_rec, d_rec, status, k
                    t0 = tb
                bp += 1
            x, z, qdd_est, status = _rk4(t0, t1 - t0, x, z, qdd_est, ufb_hold, fb_mode, Kp, Kv, kid, plant, c,
                                         inertia, inv, codes, sched_order, lB, rk, rc, dk, dc, hints)
            if status != 0:
                return q_rec, qd_rec, r_rec, rd_rec, uff_rec, ufb_rec, d_rec, status, k
    return q_rec, qd_rec, r_rec, rd_rec, uff_rec, ufb_rec, d_rec, 0, -1


@njit(cache=True)
def rk4_constant(x, W, h, n_steps, plant, c):
    """Plant-only RK4 with a constant wrench; NaNs flag a singular mass matrix."""
    for _ in range(n_steps):
        k1 = np.empty(12)
        k1[:6] = x[6:]
        k1[6:] = K.accel(x[:6], x[6:], W, plant[0], plant[1], plant[2], plant[3], c)
        x2 = x + 0.5 * h * k1
        k2 = np.empty(12)
        k2[:6] = x2[6:]
        k2[6:] = K.accel(x2[:6], x2[6:], W, plant[0], plant[1], plant[2], plant[3], c)
        x3 = x + 0.5 * h * k2
        k3 = np.empty(12)
        k3[:6] = x3[6:]
        k3[6:] = K.accel(x3[:6], x3[6:], W, plant[0], plant[1], plant[2], plant[3], c)
        x4 = x + h * k3
        k4 = np.empty(12)
        k4[:6] = x4[6:]
        k4[6:] = K.accel(x4[:6], x4[6:], W, plant[0], plant[1], plant[2], plant[3], c)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x
