# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: bounded-random-walk trajectory integration and
strapdown covariance propagation. Semantics mirror `pure` exactly; only
the arithmetic is hand-unrolled C."""
import numpy as np

from libc.math cimport M_PI, acos, cos, fabs, sin, sqrt

BACKEND_NAME = "native"

cdef double _SMALL = 1e-8


cdef inline void _skew(const double* v, double* K) noexcept nogil:
    K[0] = 0.0;   K[1] = -v[2]; K[2] = v[1]
    K[3] = v[2];  K[4] = 0.0;   K[5] = -v[0]
    K[6] = -v[1]; K[7] = v[0];  K[8] = 0.0


cdef inline void _mat3_mul(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            C[3 * i + j] = (
                A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j] + A[3 * i + 2] * B[6 + j]
            )


cdef inline void _mat3_vec(const double* A, const double* x, double* y) noexcept nogil:
    cdef int i
    for i in range(3):
        y[i] = A[3 * i] * x[0] + A[3 * i + 1] * x[1] + A[3 * i + 2] * x[2]


cdef void _exp_so3(const double* w, double* R) noexcept nogil:
    cdef double theta = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    cdef double a, b
    cdef double K[9]
    cdef double K2[9]
    cdef int i
    _skew(w, K)
    _mat3_mul(K, K, K2)
    if theta < _SMALL:
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = sin(theta) / theta
        b = (1.0 - cos(theta)) / (theta * theta)
    for i in range(9):
        R[i] = a * K[i] + b * K2[i]
    R[0] += 1.0
    R[4] += 1.0
    R[8] += 1.0


cdef void _log_so3(const double* R, double* w) noexcept nogil:
    cdef double tr = R[0] + R[4] + R[8]
    cdef double ct, theta, f, norm
    cdef double axis[3]
    cdef double Bd[3]
    cdef int i, k
    if tr > 3.0:
        tr = 3.0
    if tr < -1.0:
        tr = -1.0
    ct = (tr - 1.0) / 2.0
    if ct > 1.0:
        ct = 1.0
    if ct < -1.0:
        ct = -1.0
    theta = acos(ct)
    if theta < _SMALL:
        w[0] = 0.5 * (R[7] - R[5])
        w[1] = 0.5 * (R[2] - R[6])
        w[2] = 0.5 * (R[3] - R[1])
        return
    if M_PI - theta > 1e-4:
        f = theta / (2.0 * sin(theta))
        w[0] = f * (R[7] - R[5])
        w[1] = f * (R[2] - R[6])
        w[2] = f * (R[3] - R[1])
        return
    # Near pi: axis from the symmetric part, signs from off-diagonals,
    # then the fixed first-nonzero-positive convention.
    Bd[0] = (R[0] + 1.0) / 2.0
    Bd[1] = (R[4] + 1.0) / 2.0
    Bd[2] = (R[8] + 1.0) / 2.0
    for i in range(3):
        axis[i] = sqrt(Bd[i]) if Bd[i] > 0.0 else 0.0
    k = 0
    if axis[1] > axis[k]:
        k = 1
    if axis[2] > axis[k]:
        k = 2
    for i in range(3):
        if i != k and axis[i] > 0.0:
            # off-diagonal of (R + I)/2 is R[k, i]/2
            if R[3 * k + i] < 0.0:
                axis[i] = -axis[i]
    norm = sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2])
    for i in range(3):
        axis[i] /= norm
    for i in range(3):
        if fabs(axis[i]) > 1e-12:
            if axis[i] < 0.0:
                axis[0] = -axis[0]
                axis[1] = -axis[1]
                axis[2] = -axis[2]
            break
    w[0] = theta * axis[0]
    w[1] = theta * axis[1]
    w[2] = theta * axis[2]


cdef void _right_jacobian(const double* w, double* J) noexcept nogil:
    cdef double theta = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    cdef double a, b, t2
    cdef double K[9]
    cdef double K2[9]
    cdef int i
    _skew(w, K)
    _mat3_mul(K, K, K2)
    if theta < _SMALL:
        a = 0.5
        b = 1.0 / 6.0
    else:
        t2 = theta * theta
        a = (1.0 - cos(theta)) / t2
        b = (theta - sin(theta)) / (t2 * theta)
    for i in range(9):
        J[i] = -a * K[i] + b * K2[i]
    J[0] += 1.0
    J[4] += 1.0
    J[8] += 1.0


def brownian_integrate(
    double dt,
    double[:, ::1] xi_a,
    double[:, ::1] xi_w,
    double[::1] alpha0,
    double[::1] omega0,
    double[::1] w0,
    double[::1] pos0,
    double[::1] vel0,
    double[::1] v_min,
    double[::1] v_max,
    double[::1] t_min,
    double[::1] t_max,
    double w_bound,
    double[:, ::1] w_out,
    double[:, ::1] pos_out,
    double[:, ::1] vel_out,
    double[:, ::1] alpha_out,
    double[:, ::1] omega_out,
    double[:, :, ::1] rot_out,
):
    cdef Py_ssize_t n = xi_a.shape[0]
    cdef Py_ssize_t k
    cdef int i, j
    cdef bint flip, w_clamped
    cdef double p_next2
    cdef double alpha[3]
    cdef double omega[3]
    cdef double eff_alpha[3]
    cdef double eff_omega[3]
    cdef double w[3]
    cdef double pos[3]
    cdef double vel[3]
    cdef double rot[9]
    cdef double rot_T[9]
    cdef double v_next[3]
    cdef double p_next[3]
    cdef double w_next[3]
    cdef double th[3]
    cdef double Rd[9]
    cdef double R_next[9]
    cdef double R_rel[9]

    for i in range(3):
        alpha[i] = alpha0[i]
        omega[i] = omega0[i]
        w[i] = w0[i]
        pos[i] = pos0[i]
        vel[i] = vel0[i]
    _exp_so3(w, rot)

    with nogil:
        for k in range(n):
            for i in range(3):
                alpha[i] += xi_a[k, i]
                omega[i] += xi_w[k, i]
                eff_alpha[i] = alpha[i]
                eff_omega[i] = omega[i]
            if k < n - 1:
                for i in range(3):
                    v_next[i] = vel[i] + alpha[i] * dt
                    p_next[i] = pos[i] + vel[i] * dt
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
                for i in range(3):
                    th[i] = omega[i] * dt
                _exp_so3(th, Rd)
                _mat3_mul(Rd, rot, R_next)
                _log_so3(R_next, w_next)
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
                    _exp_so3(w_next, R_next)
                    for i in range(3):
                        for j in range(3):
                            rot_T[3 * i + j] = rot[3 * j + i]
                    _mat3_mul(R_next, rot_T, R_rel)
                    _log_so3(R_rel, eff_omega)
                    for i in range(3):
                        eff_omega[i] /= dt
            for i in range(3):
                alpha_out[k, i] = eff_alpha[i]
                omega_out[k, i] = eff_omega[i]
                w_out[k, i] = w[i]
                pos_out[k, i] = pos[i]
                vel_out[k, i] = vel[i]
            for i in range(3):
                for j in range(3):
                    rot_out[k, i, j] = rot[3 * i + j]
            if k == n - 1:
                break
            for i in range(3):
                vel[i] = v_next[i]
                pos[i] = p_next[i]
                w[i] = w_next[i]
            for i in range(9):
                rot[i] = R_next[i]


def propagate_chunk(
    double[:, ::1] rot,
    double[::1] pos,
    double[::1] vel,
    double[::1] bg,
    double[::1] ba,
    double[:, ::1] P,
    double[:, ::1] gyro,
    double[:, ::1] accel,
    double dt,
    double var_g,
    double var_a,
    double var_bg,
    double var_ba,
    double[::1] gravity,
):
    cdef Py_ssize_t n = P.shape[0]
    cdef Py_ssize_t steps = gyro.shape[0]
    cdef Py_ssize_t j, c, rr
    cdef int i, q
    cdef double w_hat[3]
    cdef double a_hat[3]
    cdef double th[3]
    cdef double Rot[9]
    cdef double Jr[9]
    cdef double Ra[3]
    cdef double Rc[9]
    cdef double R_new[9]
    cdef double M[9]
    cdef double MMt[9]
    cdef double A_tb[9]
    cdef double A_vt[9]
    cdef double A_vb[9]
    cdef double V[81]
    cdef double sk[9]
    cdef double qg = var_g * dt
    cdef double qa = var_a * dt
    cdef double qbg = var_bg * dt
    cdef double qba = var_ba * dt

    U_arr = np.empty((9, n))
    cdef double[:, ::1] U = U_arr

    with nogil:
        for j in range(steps):
            for i in range(3):
                w_hat[i] = gyro[j, i] - bg[i]
                a_hat[i] = accel[j, i] - ba[i]
                th[i] = w_hat[i] * dt
            for i in range(3):
                for q in range(3):
                    Rc[3 * i + q] = rot[i, q]
            _exp_so3(th, Rot)
            _right_jacobian(th, Jr)
            _mat3_vec(Rc, a_hat, Ra)
            _mat3_mul(Rc, Rot, R_new)

            for i in range(3):
                pos[i] += vel[i] * dt
            for i in range(3):
                vel[i] += (Ra[i] + gravity[i]) * dt

            _mat3_mul(R_new, Jr, M)
            _skew(Ra, sk)
            for i in range(9):
                A_tb[i] = -dt * M[i]
                A_vt[i] = -dt * sk[i]
                A_vb[i] = -dt * Rc[i]
            for i in range(3):
                for q in range(3):
                    rot[i, q] = R_new[3 * i + q]

            # U = Delta @ P over rows [0:9] (Delta is the sparse F - I).
            for c in range(n):
                for i in range(3):
                    U[i, c] = (
                        A_tb[3 * i] * P[9, c]
                        + A_tb[3 * i + 1] * P[10, c]
                        + A_tb[3 * i + 2] * P[11, c]
                    )
                    U[3 + i, c] = dt * P[6 + i, c]
                    U[6 + i, c] = (
                        A_vt[3 * i] * P[0, c]
                        + A_vt[3 * i + 1] * P[1, c]
                        + A_vt[3 * i + 2] * P[2, c]
                        + A_vb[3 * i] * P[12, c]
                        + A_vb[3 * i + 1] * P[13, c]
                        + A_vb[3 * i + 2] * P[14, c]
                    )
            # V = Delta @ U^T (9x9).
            for i in range(3):
                for q in range(9):
                    V[9 * i + q] = (
                        A_tb[3 * i] * U[q, 9]
                        + A_tb[3 * i + 1] * U[q, 10]
                        + A_tb[3 * i + 2] * U[q, 11]
                    )
                    V[9 * (3 + i) + q] = dt * U[q, 6 + i]
                    V[9 * (6 + i) + q] = (
                        A_vt[3 * i] * U[q, 0]
                        + A_vt[3 * i + 1] * U[q, 1]
                        + A_vt[3 * i + 2] * U[q, 2]
                        + A_vb[3 * i] * U[q, 12]
                        + A_vb[3 * i + 1] * U[q, 13]
                        + A_vb[3 * i + 2] * U[q, 14]
                    )
            # P += U rows, U^T cols, V corner.
            for i in range(9):
                for c in range(n):
                    P[i, c] += U[i, c]
            for rr in range(n):
                for i in range(9):
                    P[rr, i] += U[i, rr]
            for i in range(9):
                for q in range(9):
                    P[i, q] += V[9 * i + q]

            # Process noise.
            for i in range(3):
                for q in range(3):
                    MMt[3 * i + q] = (
                        M[3 * i] * M[3 * q]
                        + M[3 * i + 1] * M[3 * q + 1]
                        + M[3 * i + 2] * M[3 * q + 2]
                    )
            for i in range(3):
                for q in range(3):
                    P[i, q] += qg * MMt[3 * i + q]
            for i in range(3):
                P[6 + i, 6 + i] += qa
                P[9 + i, 9 + i] += qbg
                P[12 + i, 12 + i] += qba
