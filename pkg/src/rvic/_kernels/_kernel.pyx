# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled skill-discovery kernel.

Mirrors ``_reference.run_episodes`` statement for statement; the two must
stay bitwise identical (see tests/test_kernels.py).
"""
from libc.math cimport exp, log
from libc.string cimport memcpy

import numpy as np


cdef inline long _uidx(double u, long n) nogil:
    cdef long i = <long>(u * n)
    return i if i < n - 1 else n - 1


cdef void _predict(double* table, long lo1, long lo2, long stride, long K,
                   bint softmax, double alpha, double* out) nogil:
    cdef long k
    cdef double v, mx, total, e, c
    if softmax:
        mx = -1e308
        for k in range(K):
            v = table[lo1 + k * stride]
            if lo2 >= 0:
                v = v + table[lo2 + k * stride]
            out[k] = v
            if v > mx:
                mx = v
        total = 0.0
        for k in range(K):
            e = exp(out[k] - mx)
            out[k] = e
            total = total + e
    else:
        total = 0.0
        for k in range(K):
            c = table[lo1 + k * stride] + alpha
            out[k] = c
            total = total + c
    for k in range(K):
        out[k] = out[k] / total


def run_episodes(const long[:, ::1] trans,
                 double[:, :, ::1] q, double[:, :, ::1] q_act,
                 rel, rel_snap, double[:, ::1] abs_, double[:, ::1] abs_snap, long[:, ::1] pending,
                 const double[::1] eps, const double[:, ::1] uniforms, long[::1] counters, p,
                 long[::1] rec_skills, long[:, ::1] rec_states,
                 long[:, ::1] rec_actions, double[::1] rec_rewards):
    cdef long S = trans.shape[0], A = trans.shape[1]
    cdef long K = p.num_skills, T = p.episode_length, M = p.episodes_per_reset
    cdef double gamma = p.gamma, gamma_T = p.final_step_discount, beta = p.beta
    cdef double alpha = p.alpha, lam = p.decay, eta = p.learning_rate
    cdef bint softmax = p.family == 1
    cdef bint log_mode = p.reward_mode == 1
    cdef bint vic = p.baseline_mode == 1
    cdef bint dense = p.dense_reward
    cdef double slip = p.slip_prob
    cdef long U = p.refresh_period, actor_period = p.actor_update_period

    # rel/rel_snap are 3-d for counts and 2-d for softmax; work on flat views.
    cdef double[::1] R = np.asarray(rel).reshape(-1)
    cdef double[::1] RS = np.asarray(rel_snap).reshape(-1)
    cdef double* Q = &q[0, 0, 0]
    cdef double* QA = &q_act[0, 0, 0]
    cdef double* Bp = &abs_[0, 0]
    cdef double* BSp = &abs_snap[0, 0]
    cdef double* Rp = &R[0]
    cdef double* RSp = &RS[0]
    cdef const long* tr = &trans[0, 0]
    cdef size_t q_bytes = K * S * A * sizeof(double)

    cdef long n_ep = uniforms.shape[0]
    cdef long episode = counters[0], m = counters[1], s0 = counters[2]
    cdef long pred_updates = counters[3], policy_updates = counters[4], n_pending = counters[5]

    states_buf = np.zeros(T + 1, dtype=np.int64)
    actions_buf = np.zeros(T, dtype=np.int64)
    probs_buf = np.zeros(max(K, 1), dtype=np.float64)
    cdef long[::1] states = states_buf
    cdef long[::1] actions = actions_buf
    cdef double[::1] probs_mv = probs_buf
    cdef double* probs = &probs_mv[0]

    cdef long i, j, t, k, b, a, s, sT, skill, qbase, row, off, cell, base, a0, aT, idx
    cdef double epsilon, best, q_rel, q_abs, r, rt, gt, mx, target, g
    cdef const double* u

    with nogil:
        for i in range(n_ep):
            u = &uniforms[i, 0]
            epsilon = eps[i]
            if m == 0:
                s0 = _uidx(u[0], S)
            skill = _uidx(u[1], K)

            s = s0
            states[0] = s
            qbase = skill * S
            for t in range(T):
                off = 2 + 4 * t
                if u[off] < epsilon:
                    a = _uidx(u[off + 1], A)
                else:
                    row = (qbase + s) * A
                    best = QA[row]
                    a = 0
                    for b in range(1, A):
                        if QA[row + b] > best:
                            best = QA[row + b]
                            a = b
                actions[t] = a
                if u[off + 2] < slip:
                    a = _uidx(u[off + 3], A)
                s = tr[s * A + a]
                states[t + 1] = s
            sT = s

            if softmax:
                _predict(RSp, s0, S + sT, 2 * S, K, softmax, alpha, probs)
            else:
                _predict(RSp, s0 * S + sT, -1, S * S, K, softmax, alpha, probs)
            q_rel = probs[skill]
            if vic:
                r = log(q_rel) if log_mode else q_rel
            else:
                _predict(BSp, sT, -1, S, K, softmax, alpha, probs)
                q_abs = probs[skill]
                r = log(q_rel) - log(q_abs) if log_mode else q_rel - q_abs

            for t in range(T, 0, -1):
                rt = r if (dense or t == T) else 0.0
                gt = gamma if t < T else gamma_T
                row = (qbase + states[t]) * A
                mx = Q[row]
                for b in range(1, A):
                    if Q[row + b] > mx:
                        mx = Q[row + b]
                target = rt + gt * mx
                cell = (qbase + states[t - 1]) * A + actions[t - 1]
                Q[cell] = (1.0 - beta) * Q[cell] + beta * target
            policy_updates += 1
            if actor_period > 0 and policy_updates % actor_period == 0:
                memcpy(QA, Q, q_bytes)

            if softmax:
                _predict(Rp, s0, S + sT, 2 * S, K, softmax, alpha, probs)
                for k in range(K):
                    g = (1.0 if k == skill else 0.0) - probs[k]
                    Rp[k * 2 * S + s0] += eta * g
                    Rp[k * 2 * S + S + sT] += eta * g
                _predict(Bp, sT, -1, S, K, softmax, alpha, probs)
                for k in range(K):
                    g = (1.0 if k == skill else 0.0) - probs[k]
                    Bp[k * S + sT] += eta * g
            else:
                base = s0 * S + sT
                for k in range(K):
                    Rp[base + k * S * S] *= lam
                Rp[base + skill * S * S] += 1.0
                for k in range(K):
                    Bp[sT + k * S] *= lam
                Bp[sT + skill * S] += 1.0
            pending[n_pending, 0] = s0
            pending[n_pending, 1] = sT
            n_pending += 1
            pred_updates += 1
            if pred_updates % U == 0:
                for j in range(n_pending):
                    a0 = pending[j, 0]
                    aT = pending[j, 1]
                    for k in range(K):
                        if softmax:
                            idx = k * 2 * S + a0
                            RSp[idx] = Rp[idx]
                            idx = k * 2 * S + S + aT
                            RSp[idx] = Rp[idx]
                        else:
                            idx = k * S * S + a0 * S + aT
                            RSp[idx] = Rp[idx]
                        idx = k * S + aT
                        BSp[idx] = Bp[idx]
                n_pending = 0

            rec_skills[i] = skill
            rec_rewards[i] = r
            for t in range(T + 1):
                rec_states[i, t] = states[t]
            for t in range(T):
                rec_actions[i, t] = actions[t]

            episode += 1
            m += 1
            if m >= M:
                m = 0
            else:
                s0 = sT

    counters[0] = episode
    counters[1] = m
    counters[2] = s0
    counters[3] = pred_updates
    counters[4] = policy_updates
    counters[5] = n_pending
