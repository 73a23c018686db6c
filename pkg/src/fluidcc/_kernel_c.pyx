# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython tick kernel; must mirror fluidcc._kernel_py exactly.

Expression order matters: both kernels are required to produce bit-identical
float64 results so that simulation traces do not depend on the backend.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def run_ticks(int n_ticks,
              double[:, ::1] offers,
              double[::1] service,
              double[::1] qmax,
              double[::1] ecn,
              int[::1] order,
              int[::1] pf_start,
              int[::1] pf_flow,
              unsigned char[::1] pf_first,
              unsigned char[::1] pf_last,
              double[:, ::1] Q,
              double[::1] qtot,
              double[::1] carry,
              double[:, ::1] delivered,
              double[:, ::1] dropped,
              unsigned char[:, ::1] marked,
              double[:, ::1] qsum,
              double[:, ::1] tx,
              double[:, ::1] tx_pf):
    cdef int n_active = order.shape[0]
    cdef int t, i, j, p, f
    cdef bint mark
    cdef double a, total_arr, total, out, rem, drop_tot
    cdef double t_f, out_f, drop_f, q_f, new_qtot

    for t in range(n_ticks):
        for i in range(n_active):
            p = order[i]
            total_arr = 0.0
            for j in range(pf_start[i], pf_start[i + 1]):
                f = pf_flow[j]
                a = offers[t, f] if pf_first[j] else carry[f]
                carry[f] = a
                total_arr += a
            total = qtot[p] + total_arr
            out = total if total < service[p] else service[p]
            rem = total - out
            drop_tot = rem - qmax[p]
            if drop_tot < 0.0:
                drop_tot = 0.0
            mark = total > ecn[p]

            new_qtot = 0.0
            for j in range(pf_start[i], pf_start[i + 1]):
                f = pf_flow[j]
                a = carry[f]
                t_f = Q[p, f] + a
                out_f = out * (t_f / total) if total > 0.0 else 0.0
                drop_f = drop_tot * (a / total_arr) if total_arr > 0.0 else 0.0
                q_f = t_f - out_f - drop_f
                if q_f < 0.0:
                    q_f = 0.0
                Q[p, f] = q_f
                new_qtot += q_f
                carry[f] = out_f
                if drop_f > 0.0:
                    dropped[t, f] += drop_f
                if mark and t_f > 0.0:
                    marked[t, f] = 1
                tx_pf[p, f] += out_f
                if pf_last[j]:
                    delivered[t, f] += out_f
            qtot[p] = new_qtot
            tx[t, p] = out
            qsum[t, p] = new_qtot
