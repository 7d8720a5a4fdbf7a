"""Hot numeric loops.

Every function here is plain numpy that numba can also compile; see
``_accel.kernel``. Arguments must be C-contiguous float64 (or int64 / bool)
arrays so both paths see identical inputs.
"""
import numpy as np

from ._accel import kernel

ACT_TANH = 0
ACT_IDENTITY = 1

NORM_FLOOR = 1e-12

STATUS_OK = 0
STATUS_NONFINITE = 1


@kernel
def layer_offsets(dims):
    n_layers = dims.shape[0] - 1
    offs = np.empty(n_layers + 1, np.int64)
    o = 0
    for l in range(n_layers):
        offs[l] = o
        o += dims[l + 1] * dims[l] + dims[l + 1]
    offs[n_layers] = o
    return offs


@kernel
def encoder_forward(theta, dims, act, X):
    """Return the list of layer activations, input first, representation last."""
    acts = [X]
    a = X
    off = 0
    for l in range(dims.shape[0] - 1):
        n_in = dims[l]
        n_out = dims[l + 1]
        W = theta[off:off + n_out * n_in].reshape((n_out, n_in))
        off += n_out * n_in
        b = theta[off:off + n_out]
        off += n_out
        z = np.dot(a, W.T) + b
        if act == ACT_TANH:
            a = np.tanh(z)
        else:
            a = z
        acts.append(a)
    return acts


@kernel
def encoder_backward(theta, dims, act, acts, d_repr, grad):
    """Backpropagate ``d_repr`` (dLoss/dRepresentation) into ``grad`` (flat, in place)."""
    offs = layer_offsets(dims)
    delta = d_repr
    for l in range(dims.shape[0] - 2, -1, -1):
        n_in = dims[l]
        n_out = dims[l + 1]
        a_out = acts[l + 1]
        if act == ACT_TANH:
            dz = delta * (1.0 - a_out * a_out)
        else:
            dz = delta
        off = offs[l]
        gW = np.dot(dz.T, acts[l])
        grad[off:off + n_out * n_in] = gW.ravel()
        grad[off + n_out * n_in:off + n_out * n_in + n_out] = dz.sum(axis=0)
        if l > 0:
            W = theta[off:off + n_out * n_in].reshape((n_out, n_in))
            delta = np.dot(dz, W)


@kernel
def masked_residuals(pred, Y, M):
    """Per-task mean squared error and its derivative w.r.t. predictions.

    Returns (losses[K], counts[K], dpred[B, K]). Tasks with no valid rows get
    loss 0 and count 0; callers decide what that means.
    """
    B, K = pred.shape
    R = (pred - Y) * M
    counts = M.sum(axis=0)
    losses = np.zeros(K)
    dpred = np.zeros((B, K))
    for k in range(K):
        if counts[k] > 0:
            losses[k] = (R[:, k] * R[:, k]).sum() / counts[k]
            dpred[:, k] = 2.0 * R[:, k] / counts[k]
    return losses, counts, dpred


@kernel
def per_task_encoder_grads(theta, dims, act, acts, Wh, dpred, counts, out):
    """Fill ``out[k]`` with the encoder gradient of task k's loss (rows with count 0 untouched)."""
    K = Wh.shape[0]
    for k in range(K):
        if counts[k] > 0:
            d_repr = np.outer(dpred[:, k], Wh[k])
            encoder_backward(theta, dims, act, acts, d_repr, out[k])


@kernel
def cosine_matrix(grads, present):
    """Pairwise cosine similarity between rows of ``grads`` with validity flags."""
    K = grads.shape[0]
    norms = np.zeros(K)
    ok = np.zeros(K, np.bool_)
    for k in range(K):
        if present[k]:
            norms[k] = np.sqrt(np.dot(grads[k], grads[k]))
            ok[k] = norms[k] >= NORM_FLOOR
    G = np.zeros((K, K))
    V = np.zeros((K, K), np.bool_)
    for i in range(K):
        if not ok[i]:
            continue
        G[i, i] = 1.0
        V[i, i] = True
        for j in range(i + 1, K):
            if ok[j]:
                c = np.dot(grads[i], grads[j]) / (norms[i] * norms[j])
                if c > 1.0:
                    c = 1.0
                elif c < -1.0:
                    c = -1.0
                G[i, j] = c
                G[j, i] = c
                V[i, j] = True
                V[j, i] = True
    return G, V


@kernel
def sgd_train(theta, Wh, bh, dims, act, X, Y, M, order, batch_size, lr, log_interval):
    """Mini-batch SGD on the summed masked MSE, updating parameters in place.

    Every ``log_interval`` steps the per-task encoder gradients of the current
    batch are taken before the update and their cosine matrix is logged.

    Returns (status, fail_step, epoch_loss, log_steps, log_G, log_V, n_logs).
    """
    n_epochs, n = order.shape
    K = Y.shape[1]
    P = theta.shape[0]
    steps_per_epoch = (n + batch_size - 1) // batch_size
    n_logs_max = (n_epochs * steps_per_epoch) // log_interval
    log_steps = np.zeros(n_logs_max, np.int64)
    log_G = np.zeros((n_logs_max, K, K))
    log_V = np.zeros((n_logs_max, K, K), np.bool_)
    epoch_loss = np.zeros(n_epochs)
    grad = np.zeros(P)
    task_grads = np.zeros((K, P))
    step = 0
    n_logs = 0
    for e in range(n_epochs):
        acc = 0.0
        for s in range(steps_per_epoch):
            stop = min((s + 1) * batch_size, n)
            idx = order[e, s * batch_size:stop]
            Xb = X[idx]
            Yb = Y[idx]
            Mb = M[idx]
            step += 1
            acts = encoder_forward(theta, dims, act, Xb)
            H = acts[len(acts) - 1]
            pred = np.dot(H, Wh.T) + bh
            losses, counts, dpred = masked_residuals(pred, Yb, Mb)
            total = losses.sum()
            if not np.isfinite(total):
                return STATUS_NONFINITE, step, epoch_loss, log_steps, log_G, log_V, n_logs
            acc += total
            if step % log_interval == 0:
                present = counts > 0
                if present.sum() >= 2:
                    task_grads[:, :] = 0.0
                    per_task_encoder_grads(theta, dims, act, acts, Wh, dpred, counts, task_grads)
                    G, V = cosine_matrix(task_grads, present)
                    log_steps[n_logs] = step
                    log_G[n_logs] = G
                    log_V[n_logs] = V
                    n_logs += 1
            d_repr = np.dot(dpred, Wh)
            encoder_backward(theta, dims, act, acts, d_repr, grad)
            g_Wh = np.dot(dpred.T, H)
            g_bh = dpred.sum(axis=0)
            theta -= lr * grad
            Wh -= lr * g_Wh
            bh -= lr * g_bh
        epoch_loss[e] = acc / steps_per_epoch
    return STATUS_OK, step, epoch_loss, log_steps, log_G, log_V, n_logs


@kernel
def masked_pearson_rows(X, V, y):
    """Pearson correlation of each row of ``X`` with ``y`` over entries where ``V`` is true.

    Rows with fewer than 3 usable entries or zero variance yield NaN.
    """
    n_rows, m = X.shape
    out = np.empty(n_rows)
    for r in range(n_rows):
        c = 0
        sx = 0.0
        sy = 0.0
        for t in range(m):
            if V[r, t]:
                c += 1
                sx += X[r, t]
                sy += y[t]
        if c < 3:
            out[r] = np.nan
            continue
        mx = sx / c
        my = sy / c
        sxx = 0.0
        syy = 0.0
        sxy = 0.0
        for t in range(m):
            if V[r, t]:
                dx = X[r, t] - mx
                dy = y[t] - my
                sxx += dx * dx
                syy += dy * dy
                sxy += dx * dy
        if sxx <= 0.0 or syy <= 0.0:
            out[r] = np.nan
        else:
            out[r] = sxy / np.sqrt(sxx * syy)
    return out


@kernel
def mantel_null(A, VA, b, vb, iu, ju, perms):
    """Correlations of ``b`` against ``A`` with tasks relabelled by each row of ``perms``.

    ``b``/``vb`` are the upper-triangle values and flags of the fixed matrix at
    index pairs (iu, ju); ``A``/``VA`` are the full matrix being permuted.
    """
    n_perm = perms.shape[0]
    m = iu.shape[0]
    Xp = np.empty((n_perm, m))
    Vp = np.zeros((n_perm, m), np.bool_)
    for p in range(n_perm):
        for t in range(m):
            i = perms[p, iu[t]]
            j = perms[p, ju[t]]
            Xp[p, t] = A[i, j]
            Vp[p, t] = VA[i, j] and vb[t]
    return masked_pearson_rows(Xp, Vp, b)
