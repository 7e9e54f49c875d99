"""Pure-Python skill-discovery kernel.

This is the fallback used when the compiled extension is unavailable, and the
readable statement of what the compiled kernel computes. Both must produce
bitwise-identical tables for identical inputs: keep the floating-point
expressions and their evaluation order in sync with ``_kernel.pyx``.

Tables arrive as numpy arrays, are flattened to Python lists for the duration
of the call (list indexing is several times faster than numpy scalar access)
and are written back in place before returning.
"""
from math import exp, log

import numpy as np

# Indices into the ``counters`` array.
EPISODE, CYCLE_POS, CHAIN_STATE, PRED_UPDATES, POLICY_UPDATES, N_PENDING = range(6)
# Per-episode uniforms: reset draw, skill draw, then 4 per step.
UNIFORMS_HEAD = 2
UNIFORMS_PER_STEP = 4


def run_episodes(trans, q, q_act, rel, rel_snap, abs_, abs_snap, pending,
                 eps, uniforms, counters, p,
                 rec_skills, rec_states, rec_actions, rec_rewards):
    n_states, n_actions = trans.shape
    K, T, M = p.num_skills, p.episode_length, p.episodes_per_reset
    gamma, gamma_T, beta = p.gamma, p.final_step_discount, p.beta
    alpha, lam, eta = p.alpha, p.decay, p.learning_rate
    softmax = p.family == 1
    log_mode = p.reward_mode == 1
    vic = p.baseline_mode == 1
    dense = p.dense_reward
    slip = p.slip_prob
    U, actor_period = p.refresh_period, p.actor_update_period
    S, A = n_states, n_actions

    tr = trans.ravel().tolist()
    Q = q.ravel().tolist()
    QA = q_act.ravel().tolist()
    R = rel.ravel().tolist()
    RS = rel_snap.ravel().tolist()
    B = abs_.ravel().tolist()
    BS = abs_snap.ravel().tolist()
    n_ep = uniforms.shape[0]
    U_all = uniforms.tolist()
    E = eps.tolist()

    episode, m, s0, pred_updates, policy_updates, n_pending = (int(c) for c in counters)
    # (s0, sT) groups touched since the last snapshot refresh; only these
    # differ between live and snapshot tables.
    P = pending.ravel().tolist()
    states = [0] * (T + 1)
    actions = [0] * T
    probs = [0.0] * K

    def predict(table, lo1, lo2, stride, out):
        # lo1/lo2: offsets of the skill-0 entry for the one or two active
        # features; stride: distance between consecutive skills. lo2 < 0
        # means a single feature.
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

    for i in range(n_ep):
        u = U_all[i]
        epsilon = E[i]
        if m == 0:
            s0 = min(int(u[0] * S), S - 1)
        skill = min(int(u[1] * K), K - 1)

        # rollout on the actor copy
        s = s0
        states[0] = s
        qbase = skill * S
        for t in range(T):
            off = UNIFORMS_HEAD + UNIFORMS_PER_STEP * t
            if u[off] < epsilon:
                a = min(int(u[off + 1] * A), A - 1)
            else:
                row = (qbase + s) * A
                best = QA[row]
                a = 0
                for b in range(1, A):
                    if QA[row + b] > best:
                        best = QA[row + b]
                        a = b
            # the chosen action is recorded and credited; slip only alters the move
            actions[t] = a
            if u[off + 2] < slip:
                a = min(int(u[off + 3] * A), A - 1)
            s = tr[s * A + a]
            states[t + 1] = s
        sT = s

        # intrinsic reward from the snapshot predictors
        if softmax:
            predict(RS, s0, S + sT, 2 * S, probs)
        else:
            predict(RS, s0 * S + sT, -1, S * S, probs)
        q_rel = probs[skill]
        if vic:
            r = log(q_rel) if log_mode else q_rel
        else:
            predict(BS, sT, -1, S, probs)
            q_abs = probs[skill]
            r = log(q_rel) - log(q_abs) if log_mode else q_rel - q_abs

        # backward one-step Q-learning sweep over the episode
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
            QA[:] = Q

        # predictor updates, relative then absolute
        if softmax:
            predict(R, s0, S + sT, 2 * S, probs)
            for k in range(K):
                g = (1.0 if k == skill else 0.0) - probs[k]
                R[k * 2 * S + s0] += eta * g
                R[k * 2 * S + S + sT] += eta * g
            predict(B, sT, -1, S, probs)
            for k in range(K):
                g = (1.0 if k == skill else 0.0) - probs[k]
                B[k * S + sT] += eta * g
        else:
            base = s0 * S + sT
            for k in range(K):
                R[base + k * S * S] *= lam
            R[base + skill * S * S] += 1.0
            for k in range(K):
                B[sT + k * S] *= lam
            B[sT + skill * S] += 1.0
        P[2 * n_pending] = s0
        P[2 * n_pending + 1] = sT
        n_pending += 1
        pred_updates += 1
        if pred_updates % U == 0:
            for j in range(n_pending):
                a0 = P[2 * j]
                aT = P[2 * j + 1]
                for k in range(K):
                    if softmax:
                        idx = k * 2 * S + a0
                        RS[idx] = R[idx]
                        idx = k * 2 * S + S + aT
                        RS[idx] = R[idx]
                    else:
                        idx = k * S * S + a0 * S + aT
                        RS[idx] = R[idx]
                    idx = k * S + aT
                    BS[idx] = B[idx]
            n_pending = 0

        rec_skills[i] = skill
        rec_rewards[i] = r
        for t in range(T):
            rec_states[i, t] = states[t]
            rec_actions[i, t] = actions[t]
        rec_states[i, T] = sT

        episode += 1
        m += 1
        if m >= M:
            m = 0
        else:
            s0 = sT

    q[...] = _reshape(Q, q)
    q_act[...] = _reshape(QA, q_act)
    rel[...] = _reshape(R, rel)
    rel_snap[...] = _reshape(RS, rel_snap)
    abs_[...] = _reshape(B, abs_)
    abs_snap[...] = _reshape(BS, abs_snap)
    pending[...] = _reshape(P, pending)
    counters[:] = (episode, m, s0, pred_updates, policy_updates, n_pending)


def _reshape(values, like):
    return np.asarray(values, dtype=like.dtype).reshape(like.shape)
