"""Hot numeric kernels, in numba and numpy flavours.

All kernels take raw CSR/CSC buffers (``data``, ``indices``, ``indptr``) plus
plain ndarrays, so the same Python source compiles under ``@njit`` and also
runs untouched as the fallback. The vectorised ``*_numpy`` variants below are
independent implementations (bincount / cumsum tricks rather than loops),
which keeps the fallback fast and doubles as an oracle for equivalence tests.

Public names (``cd_batch``, ``ifs_pass``, ``iss_pass``, ``scatter_matvec``,
``loss_sum_eval``, ``gap_eval``, ...) are bound to the active backend; the
``*_numpy`` / ``*_numba`` variants stay importable for equivalence tests and
the backend benchmark.
"""

from __future__ import annotations

import numpy as np

from .backend import NUMBA_ENABLED

__all__ = [
    "cd_epoch",
    "cd_batch",
    "cd_batch_masked",
    "ifs_pass",
    "iss_pass",
    "scatter_matvec",
    "loss_sum_eval",
    "gap_eval",
    "masked_col_sqnorms",
    "cd_epoch_numpy",
    "cd_batch_numpy",
    "cd_batch_masked_numpy",
    "ifs_pass_numpy",
    "iss_pass_numpy",
    "scatter_matvec_numpy",
    "loss_sum_eval_numpy",
    "gap_eval_numpy",
    "masked_col_sqnorms_numpy",
]


def _cd_epoch(indptr, indices, data, col_sqnorms, v, theta, order, alpha, beta, gamma, n):
    """One coordinate-descent epoch over the scaled dual.

    ``v`` holds (1/n) * G1 @ theta + g2_one and is updated in place as
    coordinates move; ``theta`` is updated in place. Returns the largest
    absolute coordinate change of the epoch.
    """
    inv_an = 1.0 / (alpha * n)
    inv_ann = 1.0 / (alpha * n * n)
    gn = gamma / n
    inv_n = 1.0 / n
    max_delta = 0.0
    for t in range(order.shape[0]):
        k = order[t]
        g = 0.0
        for q in range(indptr[k], indptr[k + 1]):
            vj = v[indices[q]]
            if vj > beta:
                g += data[q] * (vj - beta)
            elif vj < -beta:
                g += data[q] * (vj + beta)
        g = g * inv_an + gn * theta[k] - inv_n
        lk = col_sqnorms[k] * inv_ann + gn
        t_new = theta[k] - g / lk
        if t_new < 0.0:
            t_new = 0.0
        elif t_new > 1.0:
            t_new = 1.0
        delta = t_new - theta[k]
        if delta != 0.0:
            theta[k] = t_new
            step = delta * inv_n
            for q in range(indptr[k], indptr[k + 1]):
                v[indices[q]] += data[q] * step
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


def _cd_batch(indptr, indices, data, col_sqnorms, v, theta, orders, alpha, beta, gamma, n):
    """Run up to ``orders.shape[0]`` coordinate-descent epochs back to back.

    Duplicates the single-epoch loop so the whole batch stays inside one
    compiled call. Stops early once an epoch moves nothing at all (an exact
    fixpoint: every coordinate's update depends only on (v, theta[k]), so a
    zero-delta epoch repeats under any order). Returns (epochs_run, whether
    the batch ended on a fixpoint).
    """
    inv_an = 1.0 / (alpha * n)
    inv_ann = 1.0 / (alpha * n * n)
    gn = gamma / n
    inv_n = 1.0 / n
    epochs = 0
    for e in range(orders.shape[0]):
        max_delta = 0.0
        for t in range(orders.shape[1]):
            k = orders[e, t]
            g = 0.0
            for q in range(indptr[k], indptr[k + 1]):
                vj = v[indices[q]]
                if vj > beta:
                    g += data[q] * (vj - beta)
                elif vj < -beta:
                    g += data[q] * (vj + beta)
            g = g * inv_an + gn * theta[k] - inv_n
            lk = col_sqnorms[k] * inv_ann + gn
            t_new = theta[k] - g / lk
            if t_new < 0.0:
                t_new = 0.0
            elif t_new > 1.0:
                t_new = 1.0
            delta = t_new - theta[k]
            if delta != 0.0:
                theta[k] = t_new
                step = delta * inv_n
                for q in range(indptr[k], indptr[k + 1]):
                    v[indices[q]] += data[q] * step
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        epochs += 1
        if max_delta == 0.0:
            return epochs, True
    return epochs, False


def _cd_batch_masked(
    indptr, indices, data, sel_cols, row_mask, col_sqnorms, v, theta, orders,
    alpha, beta, gamma, n,
):
    """:func:`cd_batch` over a screened problem without slicing the design.

    Coordinate k lives on full column ``sel_cols[k]``; rows with
    ``row_mask`` False are screened features and are skipped entirely (their
    weights are fixed at zero, so neither the gradient nor the maintained
    ``v`` needs them; ``v`` entries at masked rows go stale and callers must
    not read them). ``v`` has full length and ``col_sqnorms`` is restricted
    to active rows, aligned with ``sel_cols``.
    """
    inv_an = 1.0 / (alpha * n)
    inv_ann = 1.0 / (alpha * n * n)
    gn = gamma / n
    inv_n = 1.0 / n
    epochs = 0
    for e in range(orders.shape[0]):
        max_delta = 0.0
        for t in range(orders.shape[1]):
            k = orders[e, t]
            col = sel_cols[k]
            g = 0.0
            for q in range(indptr[col], indptr[col + 1]):
                r = indices[q]
                if row_mask[r]:
                    vj = v[r]
                    if vj > beta:
                        g += data[q] * (vj - beta)
                    elif vj < -beta:
                        g += data[q] * (vj + beta)
            g = g * inv_an + gn * theta[k] - inv_n
            lk = col_sqnorms[k] * inv_ann + gn
            t_new = theta[k] - g / lk
            if t_new < 0.0:
                t_new = 0.0
            elif t_new > 1.0:
                t_new = 1.0
            delta = t_new - theta[k]
            if delta != 0.0:
                theta[k] = t_new
                step = delta * inv_n
                for q in range(indptr[col], indptr[col + 1]):
                    r = indices[q]
                    if row_mask[r]:
                        v[r] += data[q] * step
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        epochs += 1
        if max_delta == 0.0:
            return epochs, True
    return epochs, False


def _masked_col_sqnorms(indptr, indices, data, sel_cols, row_mask, out):
    """Per-selected-column squared norms over the rows ``row_mask`` keeps."""
    for t in range(sel_cols.shape[0]):
        col = sel_cols[t]
        acc = 0.0
        for q in range(indptr[col], indptr[col + 1]):
            if row_mask[indices[q]]:
                acc += data[q] * data[q]
        out[t] = acc


def _scatter_matvec(indptr, indices, data, coef, scale, out):
    """``out += scale * (matrix @ coef)`` for a compacted-major-axis matrix.

    The matrix is given by its major-axis triplet (CSC columns or CSR rows);
    ``coef`` runs over the major axis, ``out`` over the minor axis.
    """
    for k in range(coef.shape[0]):
        c = coef[k] * scale
        if c != 0.0:
            for q in range(indptr[k], indptr[k + 1]):
                out[indices[q]] += data[q] * c


def _loss_sum_eval(macc, gamma):
    """Sum of the smoothed hinge loss at margins ``1 - macc``."""
    half_over_gamma = 0.5 / gamma
    total = 0.0
    for i in range(macc.shape[0]):
        t = 1.0 - macc[i]
        if t > gamma:
            total += t - 0.5 * gamma
        elif t >= 0.0:
            total += t * t * half_over_gamma
    return total


def _gap_eval(
    csc_indptr, csc_indices, csc_data, csr_indptr, csr_indices, csr_data,
    u_init, dc, theta_hat, l_count, feat_mask, w_full, u, macc,
    alpha, beta, gamma,
):
    """Full duality gap of the extended iterate, in one pass.

    ``u_init`` carries the pinned-to-one samples' fixed share of the
    soft-threshold input; the undecided columns ``dc`` add theirs from
    ``theta_hat``. Primal weights land in ``w_full`` on unmasked rows
    (masked rows must already be zero and stay untouched); ``u`` and
    ``macc`` are scratch, left holding the soft-threshold input and the
    margin accumulator. Returns (primal, dual).
    """
    p = u.shape[0]
    n = macc.shape[0]
    inv_n = 1.0 / n
    inv_a = 1.0 / alpha
    for j in range(p):
        u[j] = u_init[j]
    for t in range(dc.shape[0]):
        c = theta_hat[t] * inv_n
        if c != 0.0:
            col = dc[t]
            for q in range(csc_indptr[col], csc_indptr[col + 1]):
                u[csc_indices[q]] += csc_data[q] * c
    dual_quad = 0.0
    w_sq = 0.0
    w_l1 = 0.0
    for j in range(p):
        uj = u[j]
        if uj > beta:
            st = uj - beta
        elif uj < -beta:
            st = uj + beta
        else:
            st = 0.0
        dual_quad += st * st
        if feat_mask[j]:
            w = st * inv_a
            w_full[j] = w
            w_sq += w * w
            if w < 0.0:
                w_l1 -= w
            else:
                w_l1 += w
    for i in range(n):
        macc[i] = 0.0
    for j in range(p):
        w = w_full[j]
        if w != 0.0:
            for q in range(csr_indptr[j], csr_indptr[j + 1]):
                macc[csr_indices[q]] += csr_data[q] * w
    half_over_gamma = 0.5 / gamma
    loss = 0.0
    for i in range(n):
        t_i = 1.0 - macc[i]
        if t_i > gamma:
            loss += t_i - 0.5 * gamma
        elif t_i >= 0.0:
            loss += t_i * t_i * half_over_gamma
    th_sq = l_count
    th_sum = l_count
    for t in range(theta_hat.shape[0]):
        th = theta_hat[t]
        th_sq += th * th
        th_sum += th
    primal = loss * inv_n + 0.5 * alpha * w_sq + beta * w_l1
    dual = dual_quad * (0.5 * inv_a) + 0.5 * gamma * inv_n * th_sq - th_sum * inv_n
    return primal, dual


def _ifs_pass(indptr, indices, data, feat_idx, status, pos, center, radius, n, out):
    """Feature-screening scores for the rows listed in ``feat_idx``.

    ``status`` classifies samples (0 = undecided, 1 = screened low-end,
    2 = screened high-end); ``pos`` maps an undecided sample to its slot in
    the compacted ball ``center``.
    """
    for t in range(feat_idx.shape[0]):
        i = feat_idx[t]
        acc = 0.0
        sq = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            s = indices[q]
            val = data[q]
            st = status[s]
            if st == 0:
                acc += val * center[pos[s]]
                sq += val * val
            elif st == 2:
                acc += val
        out[t] = (abs(acc) + np.sqrt(sq) * radius) / n


def _iss_pass(indptr, indices, data, samp_idx, feat_active, fpos, center, radius, out_u, out_l):
    """Sample margin bounds for the columns listed in ``samp_idx``.

    ``feat_active`` marks features still undecided; ``fpos`` maps them into
    the compacted ball ``center``.
    """
    for t in range(samp_idx.shape[0]):
        i = samp_idx[t]
        dot = 0.0
        sq = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            f = indices[q]
            if feat_active[f]:
                val = data[q]
                dot += val * center[fpos[f]]
                sq += val * val
        spread = np.sqrt(sq) * radius
        out_u[t] = 1.0 - dot + spread
        out_l[t] = 1.0 - dot - spread


cd_epoch_numpy = _cd_epoch
cd_batch_numpy = _cd_batch
cd_batch_masked_numpy = _cd_batch_masked


def scatter_matvec_numpy(indptr, indices, data, coef, scale, out):
    """Vectorised fallback for :func:`scatter_matvec` (bincount reduction)."""
    if coef.shape[0] == 0 or data.shape[0] == 0:
        return
    weights = data * np.repeat(coef * scale, np.diff(indptr))
    out += np.bincount(indices, weights=weights, minlength=out.shape[0])


def masked_col_sqnorms_numpy(indptr, indices, data, sel_cols, row_mask, out):
    """Vectorised fallback for :func:`masked_col_sqnorms` (cumsum trick)."""
    kept_sq = data * data * row_mask[indices]
    cum = np.concatenate(([0.0], np.cumsum(kept_sq)))
    out[:] = cum[indptr[sel_cols + 1]] - cum[indptr[sel_cols]]


def loss_sum_eval_numpy(macc, gamma):
    """Vectorised fallback for :func:`loss_sum_eval`."""
    t = 1.0 - macc
    quad = np.minimum(t[t >= 0.0], gamma)
    linear = t[t > gamma] - gamma
    return float(np.sum(quad * quad) * (0.5 / gamma) + np.sum(linear))


def gap_eval_numpy(
    csc_indptr, csc_indices, csc_data, csr_indptr, csr_indices, csr_data,
    u_init, dc, theta_hat, l_count, feat_mask, w_full, u, macc,
    alpha, beta, gamma,
):
    """Vectorised fallback for :func:`gap_eval`."""
    p = u.shape[0]
    n = macc.shape[0]
    u[:] = u_init
    counts = csc_indptr[dc + 1] - csc_indptr[dc]
    total = int(counts.sum())
    if total:
        starts = csc_indptr[dc]
        offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        pos = np.repeat(starts - offsets, counts) + np.arange(total)
        weights = csc_data[pos] * np.repeat(theta_hat / n, counts)
        u += np.bincount(csc_indices[pos], weights=weights, minlength=p)
    st = np.sign(u) * np.maximum(np.abs(u) - beta, 0.0)
    dual_quad = float(st @ st)
    w_active = st[feat_mask] / alpha
    w_full[feat_mask] = w_active
    w_sq = float(w_active @ w_active)
    w_l1 = float(np.abs(w_active).sum())
    macc.fill(0.0)
    scatter_matvec_numpy(csr_indptr, csr_indices, csr_data, w_full, 1.0, macc)
    loss = loss_sum_eval_numpy(macc, gamma)
    th_sq = float(theta_hat @ theta_hat) + l_count
    th_sum = float(theta_hat.sum()) + l_count
    primal = loss / n + 0.5 * alpha * w_sq + beta * w_l1
    dual = dual_quad / (2.0 * alpha) + 0.5 * gamma / n * th_sq - th_sum / n
    return primal, dual


def ifs_pass_numpy(indptr, indices, data, feat_idx, status, pos, center, radius, n, out):
    """Vectorised fallback for :func:`ifs_pass` built on scipy matvecs."""
    import scipy.sparse as sp

    n_rows = indptr.shape[0] - 1
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, status.shape[0]))
    undecided = status == 0
    c_full = np.zeros(status.shape[0])
    c_full[undecided] = center[pos[undecided]]
    c_full[status == 2] = 1.0
    acc = mat @ c_full
    sq_mat = sp.csr_matrix((data * data, indices, indptr), shape=mat.shape)
    sq = sq_mat @ undecided.astype(np.float64)
    out[:] = (np.abs(acc[feat_idx]) + np.sqrt(np.maximum(sq[feat_idx], 0.0)) * radius) / n


def iss_pass_numpy(indptr, indices, data, samp_idx, feat_active, fpos, center, radius, out_u, out_l):
    """Vectorised fallback for :func:`iss_pass` built on scipy matvecs."""
    import scipy.sparse as sp

    n_cols = indptr.shape[0] - 1
    p = feat_active.shape[0]
    mat = sp.csc_matrix((data, indices, indptr), shape=(p, n_cols))
    c_full = np.zeros(p)
    c_full[feat_active] = center[fpos[feat_active]]
    dots = c_full @ mat
    sq_mat = sp.csc_matrix((data * data, indices, indptr), shape=mat.shape)
    sq = feat_active.astype(np.float64) @ sq_mat
    spread = np.sqrt(np.maximum(sq[samp_idx], 0.0)) * radius
    out_u[:] = 1.0 - dots[samp_idx] + spread
    out_l[:] = 1.0 - dots[samp_idx] - spread


if NUMBA_ENABLED:
    from numba import njit

    cd_epoch_numba = njit(cache=True, nogil=True)(_cd_epoch)
    cd_batch_numba = njit(cache=True, nogil=True)(_cd_batch)
    cd_batch_masked_numba = njit(cache=True, nogil=True)(_cd_batch_masked)
    scatter_matvec_numba = njit(cache=True, nogil=True)(_scatter_matvec)
    loss_sum_eval_numba = njit(cache=True, nogil=True)(_loss_sum_eval)
    gap_eval_numba = njit(cache=True, nogil=True)(_gap_eval)
    masked_col_sqnorms_numba = njit(cache=True, nogil=True)(_masked_col_sqnorms)
    ifs_pass_numba = njit(cache=True, nogil=True)(_ifs_pass)
    iss_pass_numba = njit(cache=True, nogil=True)(_iss_pass)

    cd_epoch = cd_epoch_numba
    cd_batch = cd_batch_numba
    cd_batch_masked = cd_batch_masked_numba
    scatter_matvec = scatter_matvec_numba
    loss_sum_eval = loss_sum_eval_numba
    gap_eval = gap_eval_numba
    masked_col_sqnorms = masked_col_sqnorms_numba
    ifs_pass = ifs_pass_numba
    iss_pass = iss_pass_numba
else:
    cd_epoch = cd_epoch_numpy
    cd_batch = cd_batch_numpy
    cd_batch_masked = cd_batch_masked_numpy
    scatter_matvec = scatter_matvec_numpy
    loss_sum_eval = loss_sum_eval_numpy
    gap_eval = gap_eval_numpy
    masked_col_sqnorms = masked_col_sqnorms_numpy
    ifs_pass = ifs_pass_numpy
    iss_pass = iss_pass_numpy
