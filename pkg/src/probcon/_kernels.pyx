# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the chi-squared combination integral.

Mirrors ``_kernels_py`` step for step; see there for the algorithm.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, atan, log1p, exp, fabs, isfinite, INFINITY

cnp.import_array()

cdef double SMALL_T = 1e-8
cdef int MAX_DEPTH = 60
cdef int STACK_CAP = 256

cdef double XGK[8]
cdef double WGK[8]
cdef double WG[4]
XGK[:] = [0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
          0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
          0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
          0.207784955007898467600689403773245, 0.0]
WGK[:] = [0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
          0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
          0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
          0.204432940075298892414161999234649, 0.209482141084727828012999174891714]
WG[:] = [0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
         0.381830050505118944950369775488975, 0.417959183673469387755102040816327]


cdef inline double _integrand(double t, const double* lam, const double* r, Py_ssize_t u,
                              double half_sum) nogil:
    cdef double phase = 0.0, log_env = 0.0, lt
    cdef Py_ssize_t k
    if fabs(t) < SMALL_T:
        return half_sum
    for k in range(u):
        lt = lam[k] * t
        phase += r[k] * atan(lt)
        log_env += r[k] * log1p(lt * lt)
    return sin(0.5 * phase) * exp(-0.25 * log_env) / t


cdef void _gk15(double a, double b, const double* lam, const double* r, Py_ssize_t u,
                double half_sum, double* k_out, double* e_out) nogil:
    cdef double c = 0.5 * (a + b), h = 0.5 * (b - a)
    cdef double fc = _integrand(c, lam, r, u, half_sum)
    cdef double resk = fc * WGK[7], resg = fc * WG[3]
    cdef double f1, f2
    cdef int j
    for j in range(7):
        f1 = _integrand(c - h * XGK[j], lam, r, u, half_sum)
        f2 = _integrand(c + h * XGK[j], lam, r, u, half_sum)
        resk += WGK[j] * (f1 + f2)
        if j % 2 == 1:
            resg += WG[j // 2] * (f1 + f2)
    k_out[0] = h * resk
    e_out[0] = fabs(h * resk - h * resg)


def chi2comb_integrand(t, lam, r):
    cdef double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    tarr = np.asarray(t, dtype=np.float64)
    flat = np.ascontiguousarray(tarr.ravel())
    cdef double[::1] tv = flat
    out = np.empty_like(flat)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, u = lv.shape[0]
    cdef double half_sum = 0.0
    for i in range(u):
        half_sum += 0.5 * rv[i] * lv[i]
    for i in range(tv.shape[0]):
        ov[i] = _integrand(tv[i], &lv[0] if u else NULL, &rv[0] if u else NULL, u, half_sum)
    return out.reshape(tarr.shape)


def chi2comb_integral(lam, r, double T, double abs_tol, Py_ssize_t max_subdivisions):
    cdef double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t u = lv.shape[0], i
    cdef double half_sum = 0.0
    for i in range(u):
        half_sum += 0.5 * rv[i] * lv[i]

    edges_list = [0.0]
    e = 1.0
    while e < T:
        edges_list.append(e)
        e *= 2.0
    edges_list.append(T)
    cdef double[::1] edges = np.asarray(edges_list, dtype=np.float64)
    cdef Py_ssize_t n_panels = edges.shape[0] - 1, p
    cdef double tol = abs_tol / n_panels
    cdef double total = 0.0, err = 0.0, pa, pb, width, a, b, c, k, ee, share
    cdef Py_ssize_t n_int = 0
    cdef bint converged = True
    cdef double sa[256]
    cdef double sb[256]
    cdef int sd[256]
    cdef int top, depth
    cdef const double* lp = &lv[0] if u else NULL
    cdef const double* rp = &rv[0] if u else NULL
    for p in range(n_panels):
        pa = edges[p]
        pb = edges[p + 1]
        width = pb - pa
        sa[0] = pa
        sb[0] = pb
        sd[0] = 0
        top = 1
        while top > 0:
            top -= 1
            a = sa[top]
            b = sb[top]
            depth = sd[top]
            _gk15(a, b, lp, rp, u, half_sum, &k, &ee)
            share = tol * (b - a) / width
            if ee <= share or depth >= MAX_DEPTH or n_int >= max_subdivisions or top + 2 > STACK_CAP:
                if not isfinite(k):
                    return k, INFINITY, n_int, False
                if ee > share:
                    converged = False
                total += k
                err += ee
                n_int += 1
            else:
                c = 0.5 * (a + b)
                sa[top] = c
                sb[top] = b
                sd[top] = depth + 1
                sa[top + 1] = a
                sb[top + 1] = c
                sd[top + 1] = depth + 1
                top += 2
    return total, err, n_int, converged
