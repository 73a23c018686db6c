"""Pure-Python tick kernel for the fluid network model.

Reference implementation; `fluidcc._kernel_c` is a Cython build of the same
loop. Both must produce bit-identical results, which the test suite asserts,
so any semantic change here has to be mirrored there.

Per tick, ports are visited in topological order of the directed-port DAG so
that bytes cut through an entire route within one tick. At each port:

  out     = min(backlog + arrivals, service)
  dropped = max(0, backlog + arrivals - out - q_max)

Transmitted bytes are split across flows proportionally to each flow's share
of (backlog + arrivals) at the port; dropped bytes proportionally to each
flow's share of the tick's arrivals. A port marks all transiting flows in a
tick when backlog + arrivals exceeds its ECN threshold.
"""


def run_ticks(n_ticks, offers, service, qmax, ecn, order, pf_start, pf_flow,
              pf_first, pf_last, Q, qtot, carry, delivered, dropped, marked,
              qsum, tx, tx_pf):
    n_active = len(order)
    for t in range(n_ticks):
        for i in range(n_active):
            p = order[i]
            total_arr = 0.0
            for j in range(pf_start[i], pf_start[i + 1]):
                f = pf_flow[j]
                a = offers[t, f] if pf_first[j] else carry[f]
                carry[f] = a  # stash the arrival for the split pass below
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
