# cython: boundscheck=False, wraparound=True, cdivision=True
"""Compiled training kernels, BLAS-backed.

Provides the MLP forward/backward and Adam primitives (same API as
:mod:`animat.kernels.pure`) plus two fused hot-loop routines used when
this extension is available: ``policy_act`` (single-observation action
selection) and ``sac_update_fused`` (one full learner update).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "fast"


cdef void _gemm(char ta, char tb, double[:, ::1] a, double[:, ::1] b,
                double[:, ::1] c, double alpha, double beta) noexcept nogil:
    # Row-major C = alpha * op(A) @ op(B) + beta * C via column-major BLAS:
    # swap operands and flags so Fortran dgemm sees the transposed problem.
    cdef int m, n, k, lda, ldb, ldc
    if ta == b'N':
        m = a.shape[0]; k = a.shape[1]
    else:
        m = a.shape[1]; k = a.shape[0]
    if tb == b'N':
        n = b.shape[1]
    else:
        n = b.shape[0]
    lda = a.shape[1]
    ldb = b.shape[1]
    ldc = c.shape[1]
    dgemm(&tb, &ta, &n, &m, &k, &alpha, &b[0, 0], &ldb,
          &a[0, 0], &lda, &beta, &c[0, 0], &ldc)


def mlp_forward(x, weights, biases):
    """Run a ReLU MLP, returning all layer activations (last layer linear)."""
    cdef int n_layers = len(weights)
    cdef int i, r, cidx, rows, cols
    cdef double[:, ::1] z_v, prev
    cdef double[::1] b_v
    acts = [np.ascontiguousarray(x, dtype=np.float64)]
    for i in range(n_layers):
        w = weights[i]
        z = np.empty((acts[i].shape[0], w.shape[1]), dtype=np.float64)
        z_v = z
        prev = acts[i]
        _gemm(b'N', b'N', prev, w, z_v, 1.0, 0.0)
        b_v = biases[i]
        rows = z_v.shape[0]
        cols = z_v.shape[1]
        with nogil:
            for r in range(rows):
                for cidx in range(cols):
                    z_v[r, cidx] += b_v[cidx]
                    if i != n_layers - 1 and z_v[r, cidx] < 0.0:
                        z_v[r, cidx] = 0.0
        acts.append(z)
    return acts


def mlp_backward(acts, weights, d_out):
    """Backpropagate dL/d(final layer) to parameter gradients."""
    cdef int n_layers = len(weights)
    cdef int i, r, cidx, rows, cols
    cdef double[:, ::1] dz_v, da_v, dw_v, a_v
    cdef double[::1] db_v
    cdef double s
    d_weights = [None] * n_layers
    d_biases = [None] * n_layers
    dz = np.ascontiguousarray(d_out, dtype=np.float64)
    for i in range(n_layers - 1, -1, -1):
        a_prev = acts[i]
        w = weights[i]
        dw = np.empty_like(w)
        dw_v = dw
        a_v = a_prev
        dz_v = dz
        _gemm(b'T', b'N', a_v, dz_v, dw_v, 1.0, 0.0)
        db = np.empty(w.shape[1], dtype=np.float64)
        db_v = db
        rows = dz_v.shape[0]
        cols = dz_v.shape[1]
        with nogil:
            for cidx in range(cols):
                s = 0.0
                for r in range(rows):
                    s += dz_v[r, cidx]
                db_v[cidx] = s
        d_weights[i] = dw
        d_biases[i] = db
        if i > 0:
            da = np.empty_like(a_prev)
            da_v = da
            _gemm(b'N', b'T', dz_v, w, da_v, 1.0, 0.0)
            rows = da_v.shape[0]
            cols = da_v.shape[1]
            with nogil:
                for r in range(rows):
                    for cidx in range(cols):
                        if a_v[r, cidx] <= 0.0:
                            da_v[r, cidx] = 0.0
            dz = da
    return d_weights, d_biases


def adam_step(double[::1] param, double[::1] grad, double[::1] m,
              double[::1] v, long t, double lr, double beta1, double beta2,
              double eps):
    """One in-place Adam update on flat float64 arrays."""
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double c1 = 1.0 - beta1**t
    cdef double c2 = 1.0 - beta2**t
    cdef double g, m_hat, v_hat
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            m_hat = m[i] / c1
            v_hat = v[i] / c2
            param[i] -= lr * m_hat / (sqrt(v_hat) + eps)


def policy_act(obs, weights, biases, bint greedy, double u):
    """Action from the categorical policy: argmax or inverse-CDF sample.

    ``u`` is the caller-supplied uniform draw (unused when greedy), so the
    caller's RNG stream is consumed exactly as in the fallback path.
    """
    cdef double[:, ::1] logits = mlp_forward(obs.reshape(1, -1), weights, biases)[-1]
    cdef int n = logits.shape[1]
    cdef int i, best = 0
    cdef double zmax, total, acc, target
    if greedy:
        for i in range(1, n):
            if logits[0, i] > logits[0, best]:
                best = i
        return best
    zmax = logits[0, 0]
    for i in range(1, n):
        if logits[0, i] > zmax:
            zmax = logits[0, i]
    probs = np.empty(n)
    cdef double[::1] p = probs
    total = 0.0
    for i in range(n):
        p[i] = exp(logits[0, i] - zmax)
        total += p[i]
    target = u * total
    acc = 0.0
    for i in range(n):
        acc += p[i]
        if acc >= target:
            return i
    return n - 1


cdef void _log_softmax_rows(double[:, ::1] logits, double[:, ::1] logp,
                            double[:, ::1] probs) noexcept nogil:
    cdef Py_ssize_t b, a, rows = logits.shape[0], cols = logits.shape[1]
    cdef double zmax, lse
    for b in range(rows):
        zmax = logits[b, 0]
        for a in range(1, cols):
            if logits[b, a] > zmax:
                zmax = logits[b, a]
        lse = 0.0
        for a in range(cols):
            lse += exp(logits[b, a] - zmax)
        lse = zmax + log(lse)
        for a in range(cols):
            logp[b, a] = logits[b, a] - lse
            probs[b, a] = exp(logp[b, a])


cdef void _adam_all(opt, grads):
    opt.t += 1
    cdef long t = opt.t
    for p, g, m, v in zip(opt.params, grads, opt.m, opt.v):
        adam_step(p.ravel(), g.ravel(), m.ravel(), v.ravel(), t,
                  opt.lr, opt.beta1, opt.beta2, opt.eps)


def sac_update_fused(learner, obs, actions, rewards, next_obs, dones):
    """One full SAC update (critics, policy, temperature, polyak).

    Numerically equivalent to the step-by-step path in
    :class:`animat.rl.SacLearner` (same operation order; results may differ
    in the last float bits through BLAS summation order).
    """
    cdef double alpha = exp(learner.log_alpha[0])
    cdef double gamma = learner.config.discount
    cdef double tau = learner.config.polyak
    cdef double target_entropy = learner.target_entropy

    obs = np.ascontiguousarray(obs)
    next_obs = np.ascontiguousarray(next_obs)
    cdef long[::1] act_v = np.ascontiguousarray(actions, dtype=np.int64)
    cdef double[::1] rew_v = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef double[::1] done_v = np.ascontiguousarray(dones, dtype=np.float64)
    cdef Py_ssize_t batch = obs.shape[0]
    cdef Py_ssize_t n_act = learner.n_actions
    cdef Py_ssize_t b, a

    # soft value targets from the frozen critics and current policy
    logits2_arr = mlp_forward(next_obs, learner.policy.weights, learner.policy.biases)[-1]
    logp2 = np.empty_like(logits2_arr)
    probs2 = np.empty_like(logits2_arr)
    _log_softmax_rows(logits2_arr, logp2, probs2)
    cdef double[:, ::1] lp2 = logp2, p2 = probs2
    cdef double[:, ::1] q1t = mlp_forward(
        next_obs, learner.q1_target.weights, learner.q1_target.biases)[-1]
    cdef double[:, ::1] q2t = mlp_forward(
        next_obs, learner.q2_target.weights, learner.q2_target.biases)[-1]
    y_arr = np.empty(batch)
    cdef double[::1] y = y_arr
    cdef double v_next, qmin
    with nogil:
        for b in range(batch):
            v_next = 0.0
            for a in range(n_act):
                qmin = q1t[b, a] if q1t[b, a] < q2t[b, a] else q2t[b, a]
                v_next += p2[b, a] * (qmin - alpha * lp2[b, a])
            y[b] = rew_v[b] + gamma * (1.0 - done_v[b]) * v_next

    # twin critics
    cdef double q1_loss = 0.0, q2_loss = 0.0, err
    cdef double[:, ::1] q_v, dq_v
    losses = []
    for qnet, opt in ((learner.q1, learner.opt_q1), (learner.q2, learner.opt_q2)):
        acts = mlp_forward(obs, qnet.weights, qnet.biases)
        q_arr = acts[-1]
        dq_arr = np.zeros_like(q_arr)
        q_v = q_arr
        dq_v = dq_arr
        err = 0.0
        q1_loss = 0.0
        with nogil:
            for b in range(batch):
                err = q_v[b, act_v[b]] - y[b]
                q1_loss += err * err
                dq_v[b, act_v[b]] = 2.0 * err / batch
        losses.append(q1_loss / batch)
        dw, db = mlp_backward(acts, qnet.weights, dq_arr)
        _adam_all(opt, dw + db)

    # policy step against the updated critics
    cdef double[:, ::1] q1o = mlp_forward(obs, learner.q1.weights, learner.q1.biases)[-1]
    cdef double[:, ::1] q2o = mlp_forward(obs, learner.q2.weights, learner.q2.biases)[-1]
    acts_p = mlp_forward(obs, learner.policy.weights, learner.policy.biases)
    logits_arr = acts_p[-1]
    logp_a = np.empty_like(logits_arr)
    probs_a = np.empty_like(logits_arr)
    _log_softmax_rows(logits_arr, logp_a, probs_a)
    cdef double[:, ::1] lp = logp_a, pr = probs_a
    dlogits_arr = np.empty_like(logits_arr)
    cdef double[:, ::1] dlg = dlogits_arr
    cdef double pi_loss = 0.0, entropy = 0.0, row_mean, g
    with nogil:
        for b in range(batch):
            row_mean = 0.0
            for a in range(n_act):
                qmin = q1o[b, a] if q1o[b, a] < q2o[b, a] else q2o[b, a]
                g = alpha * lp[b, a] - qmin
                pi_loss += pr[b, a] * g
                entropy -= pr[b, a] * lp[b, a]
                dlg[b, a] = g + alpha
                row_mean += pr[b, a] * (g + alpha)
            for a in range(n_act):
                dlg[b, a] = pr[b, a] * (dlg[b, a] - row_mean) / batch
    pi_loss /= batch
    entropy /= batch
    dw, db = mlp_backward(acts_p, learner.policy.weights, dlogits_arr)
    _adam_all(learner.opt_policy, dw + db)

    # temperature toward the target entropy
    a_loss = alpha * (entropy - target_entropy)
    _adam_all(learner.opt_alpha, [np.array([a_loss])])

    # polyak target tracking
    cdef double[::1] tv, ov
    for target, online in ((learner.q1_target, learner.q1),
                           (learner.q2_target, learner.q2)):
        for tp, op in zip(target.parameters(), online.parameters()):
            tv = tp.ravel()
            ov = op.ravel()
            with nogil:
                for b in range(tv.shape[0]):
                    tv[b] = (1.0 - tau) * tv[b] + tau * ov[b]

    return {"q1_loss": losses[0], "q2_loss": losses[1], "policy_loss": pi_loss,
            "entropy": entropy, "alpha": exp(learner.log_alpha[0])}
