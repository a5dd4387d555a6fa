"""Pure-NumPy implementations of the per-IMU-step inner loops.

Selected automatically when the compiled extension is unavailable (or when
VIOMC_PURE=1). Semantics are identical to `_native`; only speed differs.
"""
from __future__ import annotations

import numpy as np

from ..geom import exp_rotation, right_jacobian, skew
from ..geom import _log_unchecked as _log_so3

BACKEND_NAME = "pure"


def brownian_integrate(
    dt,
    xi_a,
    xi_w,
    alpha0,
    omega0,
    w0,
    pos0,
    vel0,
    v_min,
    v_max,
    t_min,
    t_max,
    w_bound,
    w_out,
    pos_out,
    vel_out,
    alpha_out,
    omega_out,
    rot_out,
):
    """Integrate the bounded random-walk-input trajectory sample by sample.

    Per step the input walks receive their increments, then the state
    advances by explicit Euler (rotation by exact composition with the
    sampled spatial rate). Box bounds reflect: a component about to cross
    has the matching input walk's sign flipped, and the *emitted* input at
    that step is adjusted so the state lands exactly on the bound. Clamping
    through the inputs (rather than by jumping the state) keeps the emitted
    input stream integration-consistent with the emitted states, so
    noiseless dead reckoning reproduces the trajectory exactly. Position
    bounds act one step ahead through the velocity for the same reason.
    """
    n = xi_a.shape[0]
    alpha = np.array(alpha0, dtype=float)  # input walk values
    omega = np.array(omega0, dtype=float)
    w = np.array(w0, dtype=float)
    pos = np.array(pos0, dtype=float)
    vel = np.array(vel0, dtype=float)
    rot = exp_rotation(w)
    for k in range(n):
        alpha += xi_a[k]
        omega += xi_w[k]
        eff_alpha = alpha.copy()  # emitted inputs for this step
        eff_omega = omega.copy()
        if k < n - 1:
            v_next = vel + alpha * dt
            p_next = pos + vel * dt
            for i in range(3):
                flip = False
                if v_next[i] >= v_max[i]:
                    v_next[i] = v_max[i]
                    eff_alpha[i] = (v_max[i] - vel[i]) / dt
                    flip = True
                elif v_next[i] <= v_min[i]:
                    v_next[i] = v_min[i]
                    eff_alpha[i] = (v_min[i] - vel[i]) / dt
                    flip = True
                # Would the position cross its bound on the *next* step?
                p_next2 = p_next[i] + v_next[i] * dt
                if p_next2 >= t_max[i]:
                    v_next[i] = (t_max[i] - p_next[i]) / dt
                    eff_alpha[i] = (v_next[i] - vel[i]) / dt
                    flip = True
                elif p_next2 <= t_min[i]:
                    v_next[i] = (t_min[i] - p_next[i]) / dt
                    eff_alpha[i] = (v_next[i] - vel[i]) / dt
                    flip = True
                if flip:
                    alpha[i] = -alpha[i]
            R_next = exp_rotation(omega * dt) @ rot
            w_next = _log_so3(R_next)
            w_clamped = False
            for i in range(3):
                if w_next[i] >= w_bound:
                    w_next[i] = w_bound
                    omega[i] = -omega[i]
                    w_clamped = True
                elif w_next[i] <= -w_bound:
                    w_next[i] = -w_bound
                    omega[i] = -omega[i]
                    w_clamped = True
            if w_clamped:
                R_next = exp_rotation(w_next)
                eff_omega = _log_so3(R_next @ rot.T) / dt
        alpha_out[k] = eff_alpha
        omega_out[k] = eff_omega
        w_out[k] = w
        pos_out[k] = pos
        vel_out[k] = vel
        rot_out[k] = rot
        if k == n - 1:
            break
        vel, pos, w, rot = v_next, p_next, w_next, R_next


def propagate_chunk(
    rot,
    pos,
    vel,
    bg,
    ba,
    P,
    gyro,
    accel,
    dt,
    var_g,
    var_a,
    var_bg,
    var_ba,
    gravity,
):
    """Strapdown propagation of the nominal state and error covariance.

    Mutates rot/pos/vel/P in place, one IMU sample at a time. The error
    state is ordered [dtheta, dT, dv, dbg, dba, features...]; feature blocks
    are static under propagation, so only the first 15 rows/columns of P
    couple. All nominal right-hand sides use the pre-update state, matching
    the trajectory generator's explicit Euler discretization.
    """
    n = P.shape[0]
    I3 = np.eye(3)
    for j in range(gyro.shape[0]):
        w_hat = (gyro[j] - bg) * dt
        a_hat = accel[j] - ba
        Rot = exp_rotation(w_hat)
        Jr = right_jacobian(w_hat)
        Ra = rot @ a_hat
        R_new = rot @ Rot

        pos += vel * dt
        vel += (Ra + gravity) * dt

        M = R_new @ Jr
        A_tb = -dt * M  # d(dtheta)/d(dbg)
        A_vt = -dt * skew(Ra)  # d(dv)/d(dtheta)
        A_vb = -dt * rot  # d(dv)/d(dba)
        rot[:] = R_new

        # P <- (I+D) P (I+D)^T + Q with D the sparse non-identity part of F.
        U = np.empty((9, n))
        U[0:3] = A_tb @ P[9:12]
        U[3:6] = dt * P[6:9]
        U[6:9] = A_vt @ P[0:3] + A_vb @ P[12:15]
        V = np.empty((9, 9))
        V[0:3] = A_tb @ U[:, 9:12].T
        V[3:6] = dt * U[:, 6:9].T
        V[6:9] = A_vt @ U[:, 0:3].T + A_vb @ U[:, 12:15].T
        P[0:9, :] += U
        P[:, 0:9] += U.T
        P[0:9, 0:9] += V

        P[0:3, 0:3] += (var_g * dt) * (M @ M.T)
        P[6:9, 6:9] += (var_a * dt) * I3
        P[9:12, 9:12] += (var_bg * dt) * I3
        P[12:15, 12:15] += (var_ba * dt) * I3
