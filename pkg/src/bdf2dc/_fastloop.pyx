# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lockstep cascade loop for the built-in problems.

Mirrors the pure-Python engine operation for operation (same kernel
formulas, same correction expressions, same solver iterations and
termination tests) so both engines produce the same trajectories up to
floating-point reassociation in the dense linear solve.  Supported
problem kinds: 1 = scalar v' = v cos t, 2 = constant-matrix 3-dim linear
system, 3 = scalar v' = v - v^3.
"""

from libc.math cimport cos, fabs

from .errors import LinearSolveError, SolverDivergenceError


cdef inline double f_scalar(int kind, double t, double v) noexcept nogil:
    if kind == 1:
        return v * cos(t)
    return v - v * v * v


cdef inline double jac_scalar(int kind, double t, double v) noexcept nogil:
    if kind == 1:
        return cos(t)
    return 1.0 - 3.0 * v * v


cdef inline void f_lin3(const double* A, const double* v, double* out) noexcept nogil:
    out[0] = A[0] * v[0] + A[1] * v[1] + A[2] * v[2]
    out[1] = A[3] * v[0] + A[4] * v[1] + A[5] * v[2]
    out[2] = A[6] * v[0] + A[7] * v[1] + A[8] * v[2]


cdef int solve3(double* M, double* r, double* x) noexcept nogil:
    """Solve a 3x3 system by Gaussian elimination with partial pivoting."""
    cdef int k, i, j, p
    cdef double big, tmp, m
    for k in range(3):
        p = k
        big = fabs(M[3 * k + k])
        for i in range(k + 1, 3):
            if fabs(M[3 * i + k]) > big:
                big = fabs(M[3 * i + k])
                p = i
        if big == 0.0:
            return -1
        if p != k:
            for j in range(3):
                tmp = M[3 * k + j]; M[3 * k + j] = M[3 * p + j]; M[3 * p + j] = tmp
            tmp = r[k]; r[k] = r[p]; r[p] = tmp
        for i in range(k + 1, 3):
            m = M[3 * i + k] / M[3 * k + k]
            M[3 * i + k] = 0.0
            for j in range(k + 1, 3):
                M[3 * i + j] -= m * M[3 * k + j]
            r[i] -= m * r[k]
    for i in range(2, -1, -1):
        tmp = r[i]
        for j in range(i + 1, 3):
            tmp -= M[3 * i + j] * x[j]
        x[i] = tmp / M[3 * i + i]
    return 0


cdef int fixed_point_scalar(int kind, double a, double b, double t, double guess,
                            double tol, int max_iter,
                            double* out_v, double* out_f, double* out_res) noexcept nogil:
    cdef double v = guess, fv, res = 0.0
    cdef int it
    for it in range(max_iter + 1):
        fv = f_scalar(kind, t, v)
        res = fabs(a * v - b - fv)
        if res <= tol * a:
            out_v[0] = v
            out_f[0] = fv
            return 0
        v = (b + fv) / a
    out_res[0] = res
    return -1


cdef int newton_scalar(int kind, double a, double b, double t, double guess,
                       double tol, int max_iter,
                       double* out_v, double* out_f, double* out_res) noexcept nogil:
    cdef double v = guess
    cdef double fv = f_scalar(kind, t, v)
    cdef double res = fabs(a * v - fv - b)
    cdef double scale = a if a > 1.0 else 1.0
    cdef double denom
    cdef int it
    for it in range(max_iter):
        if res <= tol * scale * (1.0 + fabs(v)):
            out_v[0] = v
            out_f[0] = fv
            return 0
        denom = a - jac_scalar(kind, t, v)
        if denom == 0.0:
            out_res[0] = res
            return -2
        v = v - (a * v - fv - b) / denom
        fv = f_scalar(kind, t, v)
        res = fabs(a * v - fv - b)
    if res <= tol * scale * (1.0 + fabs(v)):
        out_v[0] = v
        out_f[0] = fv
        return 0
    out_res[0] = res
    return -1


cdef int fixed_point_3(const double* A, double a, const double* b, double t,
                       const double* guess, double tol, int max_iter,
                       double* out_v, double* out_f, double* out_res) noexcept nogil:
    cdef double v[3]
    cdef double fv[3]
    cdef double res = 0.0, rj
    cdef int it, j
    for j in range(3):
        v[j] = guess[j]
    for it in range(max_iter + 1):
        f_lin3(A, v, fv)
        res = 0.0
        for j in range(3):
            rj = fabs(a * v[j] - b[j] - fv[j])
            if rj > res:
                res = rj
        if res <= tol * a:
            for j in range(3):
                out_v[j] = v[j]
                out_f[j] = fv[j]
            return 0
        for j in range(3):
            v[j] = (b[j] + fv[j]) / a
    out_res[0] = res
    return -1


cdef int newton_3(const double* A, double a, const double* b, double t,
                  const double* guess, double tol, int max_iter,
                  double* out_v, double* out_f, double* out_res) noexcept nogil:
    cdef double v[3]
    cdef double fv[3]
    cdef double M[9]
    cdef double rhs[3]
    cdef double dv[3]
    cdef double res, vmax, rj
    cdef double scale = a if a > 1.0 else 1.0
    cdef int it, j, k
    for j in range(3):
        v[j] = guess[j]
    f_lin3(A, v, fv)
    res = 0.0
    for j in range(3):
        rj = fabs(a * v[j] - fv[j] - b[j])
        if rj > res:
            res = rj
    for it in range(max_iter):
        vmax = 0.0
        for j in range(3):
            if fabs(v[j]) > vmax:
                vmax = fabs(v[j])
        if res <= tol * scale * (1.0 + vmax):
            for j in range(3):
                out_v[j] = v[j]
                out_f[j] = fv[j]
            return 0
        for j in range(3):
            for k in range(3):
                M[3 * j + k] = -A[3 * j + k]
            M[3 * j + j] += a
            rhs[j] = a * v[j] - fv[j] - b[j]
        if solve3(M, rhs, dv) != 0:
            out_res[0] = res
            return -2
        for j in range(3):
            v[j] = v[j] - dv[j]
        f_lin3(A, v, fv)
        res = 0.0
        for j in range(3):
            rj = fabs(a * v[j] - fv[j] - b[j])
            if rj > res:
                res = rj
    vmax = 0.0
    for j in range(3):
        if fabs(v[j]) > vmax:
            vmax = fabs(v[j])
    if res <= tol * scale * (1.0 + vmax):
        for j in range(3):
            out_v[j] = v[j]
            out_f[j] = fv[j]
        return 0
    out_res[0] = res
    return -1


def run_cascade(int kind, const double[::1] params,
                const double[::1] levels, const double[::1] steps,
                const double[::1] ratios,
                const int[::1] codes, const int[::1] starts,
                const int[::1] sources,
                double[:, :, ::1] values, double[:, :, ::1] fvals,
                int use_newton, double tol, int max_fp, int max_nt,
                double corr_scale, const double[:, :, ::1] noise, int has_noise):
    """Advance all stages over levels 2..N in place.

    ``values``/``fvals`` arrive with rows below each stage's start level
    already filled (initial value plus starter levels).
    """
    cdef Py_ssize_t S = values.shape[0]
    cdef Py_ssize_t N = values.shape[1] - 1
    cdef Py_ssize_t d = values.shape[2]
    cdef double A[9]
    cdef double corr[3]
    cdef double bvec[3]
    cdef double guess[3]
    cdef double vout[3]
    cdef double fout[3]
    cdef double res[1]
    cdef Py_ssize_t n, s, j
    cdef int code, src, status
    cdef double t_n, tau_n, tau_nm1, tau_nm2, r, d0, d1, a, dq
    cdef double t1, t2, t3, g0, g1, g2, h0, h1, dd, coeff

    if kind == 2:
        for j in range(9):
            A[j] = params[j]

    for n in range(2, N + 1):
        tau_n = steps[n]
        tau_nm1 = steps[n - 1]
        t_n = levels[n]
        r = tau_n / tau_nm1
        d0 = (1.0 + 2.0 * r) / (1.0 + r)
        d1 = -r / (1.0 + r)
        a = d0 / tau_n
        for s in range(S):
            if n < starts[s]:
                continue
            code = codes[s]
            src = sources[s]
            # correction from the source stage's cached f-values
            for j in range(d):
                corr[j] = 0.0
            if code == 1:
                for j in range(d):
                    corr[j] = (tau_n / 3.0) * (
                        (fvals[src, n, j] - fvals[src, n - 1, j]) / tau_n
                        - (fvals[src, n - 1, j] - fvals[src, n - 2, j]) / tau_nm1
                    )
            elif code == 2 or code == 3:
                tau_nm2 = steps[n - 2]
                t1 = tau_nm2
                t2 = tau_nm2 + tau_nm1
                t3 = tau_nm2 + tau_nm1 + tau_n
                coeff = tau_n * (tau_n + tau_nm1) * (2.0 * tau_n + tau_nm1) / 12.0
                for j in range(d):
                    g0 = (fvals[src, n - 2, j] - fvals[src, n - 3, j]) / (t1 - 0.0)
                    g1 = (fvals[src, n - 1, j] - fvals[src, n - 2, j]) / (t2 - t1)
                    g2 = (fvals[src, n, j] - fvals[src, n - 1, j]) / (t3 - t2)
                    h0 = (g1 - g0) / (t2 - 0.0)
                    h1 = (g2 - g1) / (t3 - t1)
                    dd = (h1 - h0) / (t3 - 0.0)
                    corr[j] = (tau_n / 3.0) * (
                        (fvals[src, n, j] - fvals[src, n - 1, j]) / tau_n
                        - (fvals[src, n - 1, j] - fvals[src, n - 2, j]) / tau_nm1
                    ) + coeff * dd
            for j in range(d):
                dq = (values[s, n - 1, j] - values[s, n - 2, j]) / tau_nm1
                bvec[j] = a * values[s, n - 1, j] - d1 * dq
                if code != 0:
                    bvec[j] = bvec[j] - corr_scale * corr[j]
                if has_noise:
                    bvec[j] = bvec[j] + noise[s, n, j]
                guess[j] = values[s, n - 1, j]
            if d == 1:
                if use_newton:
                    status = newton_scalar(kind, a, bvec[0], t_n, guess[0],
                                           tol, max_nt, vout, fout, res)
                else:
                    status = fixed_point_scalar(kind, a, bvec[0], t_n, guess[0],
                                                tol, max_fp, vout, fout, res)
            else:
                if use_newton:
                    status = newton_3(A, a, bvec, t_n, guess, tol, max_nt,
                                      vout, fout, res)
                else:
                    status = fixed_point_3(A, a, bvec, t_n, guess, tol, max_fp,
                                           vout, fout, res)
            if status == -2:
                raise LinearSolveError(
                    "singular linearisation in stage %d at level %d (t=%g)"
                    % (s, n, t_n)
                )
            if status != 0:
                raise SolverDivergenceError(
                    "stage %d diverged at level %d (t=%g, residual %.3e)"
                    % (s, n, t_n, res[0]),
                    residual=res[0],
                    iterations=max_nt if use_newton else max_fp,
                )
            for j in range(d):
                values[s, n, j] = vout[j]
                fvals[s, n, j] = fout[j]
