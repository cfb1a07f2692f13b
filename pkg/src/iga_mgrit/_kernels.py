"""Compiled sparse kernels.

Everything here runs without the GIL so that independent spatial solves can
be spread over a thread pool. Matrices are passed as raw CSR triplets
``(indptr, indices, data)``; several matrices of one multigrid hierarchy are
packed into shared arrays addressed through ``ptr_start`` offsets.
"""
import numba as nb
import numpy as np

_jit = {"nogil": True, "cache": True}

# h-multigrid schedule opcodes
OP_PRE, OP_RESTRICT, OP_COARSE, OP_PROLONG, OP_POST = 0, 1, 2, 3, 4


@nb.njit(**_jit)
def csr_matvec(indptr, indices, data, x, y):
    for i in range(indptr.size - 1):
        s = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            s += data[jj] * x[indices[jj]]
        y[i] = s


@nb.njit(**_jit)
def csr_residual(indptr, indices, data, b, x, r):
    """r = b - A x"""
    for i in range(indptr.size - 1):
        s = b[i]
        for jj in range(indptr[i], indptr[i + 1]):
            s -= data[jj] * x[indices[jj]]
        r[i] = s


@nb.njit(**_jit)
def _norm(v):
    s = 0.0
    for i in range(v.size):
        s += v[i] * v[i]
    return np.sqrt(s)


@nb.njit(**_jit)
def gs_forward(indptr, indices, data, b, x):
    for i in range(indptr.size - 1):
        s = b[i]
        d = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                d = data[jj]
            else:
                s -= data[jj] * x[j]
        x[i] = s / d


@nb.njit(**_jit)
def gs_backward(indptr, indices, data, b, x):
    for i in range(indptr.size - 2, -1, -1):
        s = b[i]
        d = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                d = data[jj]
            else:
                s -= data[jj] * x[j]
        x[i] = s / d


# ---------------------------------------------------------------------------
# ILUT


@nb.njit(**_jit)
def ilut_kernel(indptr, indices, data, tau, fill):
    """Row-wise ILU with threshold ``tau * ||row||_2`` and ``fill`` entries per factor row.

    Returns ``status`` (-1 on success, otherwise the failing row) and the
    factors: strict lower part of unit L, strict upper part of U and the
    diagonal of U, both factors in CSR with sorted columns.
    """
    n = indptr.size - 1
    cap = n * max(fill, 1) + 1
    lptr = np.zeros(n + 1, np.int64)
    lidx = np.empty(cap, np.int64)
    lval = np.empty(cap)
    uptr = np.zeros(n + 1, np.int64)
    uidx = np.empty(cap, np.int64)
    uval = np.empty(cap)
    udiag = np.zeros(n)
    w = np.zeros(n)
    nz = np.zeros(n, np.bool_)
    touched = np.empty(n, np.int64)
    nl = 0
    nu = 0
    for i in range(n):
        nt = 0
        rnorm = 0.0
        lowest = i
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            w[j] = data[jj]
            rnorm += data[jj] * data[jj]
            if not nz[j]:
                nz[j] = True
                touched[nt] = j
                nt += 1
            if j < lowest:
                lowest = j
        thr = tau * np.sqrt(rnorm)
        for k in range(lowest, i):
            if not nz[k] or w[k] == 0.0:
                continue
            wk = w[k] / udiag[k]
            if abs(wk) < thr:
                w[k] = 0.0
                continue
            w[k] = wk
            for jj in range(uptr[k], uptr[k + 1]):
                j = uidx[jj]
                if not nz[j]:
                    nz[j] = True
                    touched[nt] = j
                    nt += 1
                    w[j] = 0.0
                w[j] -= wk * uval[jj]
        if not nz[i] or w[i] == 0.0:
            for t in range(nt):
                w[touched[t]] = 0.0
                nz[touched[t]] = False
            return i, lptr, lidx, lval, uptr, uidx, uval, udiag
        udiag[i] = w[i]

        cols = np.sort(touched[:nt])
        lo_c = np.empty(nt, np.int64)
        lo_v = np.empty(nt)
        hi_c = np.empty(nt, np.int64)
        hi_v = np.empty(nt)
        nlo = 0
        nhi = 0
        for t in range(nt):
            j = cols[t]
            v = w[j]
            if j == i or v == 0.0 or abs(v) < thr:
                continue
            if j < i:
                lo_c[nlo] = j
                lo_v[nlo] = v
                nlo += 1
            else:
                hi_c[nhi] = j
                hi_v[nhi] = v
                nhi += 1
        # keep the largest entries; the diagonal counts towards the U budget
        keep_lo = min(nlo, fill)
        order = np.argsort(-np.abs(lo_v[:nlo]), kind="mergesort")[:keep_lo]
        sel = np.sort(order)
        for t in range(keep_lo):
            lidx[nl] = lo_c[sel[t]]
            lval[nl] = lo_v[sel[t]]
            nl += 1
        lptr[i + 1] = nl
        keep_hi = min(nhi, max(fill - 1, 0))
        order = np.argsort(-np.abs(hi_v[:nhi]), kind="mergesort")[:keep_hi]
        sel = np.sort(order)
        for t in range(keep_hi):
            uidx[nu] = hi_c[sel[t]]
            uval[nu] = hi_v[sel[t]]
            nu += 1
        uptr[i + 1] = nu

        for t in range(nt):
            w[touched[t]] = 0.0
            nz[touched[t]] = False
    return -1, lptr, lidx[:nl].copy(), lval[:nl].copy(), uptr, uidx[:nu].copy(), uval[:nu].copy(), udiag


@nb.njit(**_jit)
def ilut_solve(lptr, lidx, lval, uptr, uidx, uval, udiag, r, z):
    """z = U^{-1} L^{-1} r"""
    n = udiag.size
    for i in range(n):
        s = r[i]
        for jj in range(lptr[i], lptr[i + 1]):
            s -= lval[jj] * z[lidx[jj]]
        z[i] = s
    for i in range(n - 1, -1, -1):
        s = z[i]
        for jj in range(uptr[i], uptr[i + 1]):
            s -= uval[jj] * z[uidx[jj]]
        z[i] = s / udiag[i]


@nb.njit(**_jit)
def dense_lu_solve(lu, piv, b, x):
    """Solve with LAPACK-style ``getrf`` factors; ``x`` may alias ``b``."""
    n = b.size
    for i in range(n):
        x[i] = b[i]
    for i in range(n):
        p = piv[i]
        if p != i:
            t = x[i]
            x[i] = x[p]
            x[p] = t
    for i in range(n):
        s = x[i]
        for j in range(i):
            s -= lu[i, j] * x[j]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, n):
            s -= lu[i, j] * x[j]
        x[i] = s / lu[i, i]


# ---------------------------------------------------------------------------
# Conjugate gradient


@nb.njit(**_jit)
def cg_kernel(indptr, indices, data, dinv, b, x, rel_tol, max_iter, history):
    """Diagonally preconditioned CG. Returns (iterations, converged)."""
    n = b.size
    r = np.empty(n)
    z = np.empty(n)
    q = np.empty(n)
    csr_residual(indptr, indices, data, b, x, r)
    bnorm = _norm(b)
    target = rel_tol * bnorm
    rn = _norm(r)
    history[0] = rn
    if rn <= target:
        return 0, True
    for i in range(n):
        z[i] = dinv[i] * r[i]
    d = z.copy()
    rz = 0.0
    for i in range(n):
        rz += r[i] * z[i]
    for it in range(1, max_iter + 1):
        csr_matvec(indptr, indices, data, d, q)
        dq = 0.0
        for i in range(n):
            dq += d[i] * q[i]
        if dq <= 0.0:
            return -it, False
        alpha = rz / dq
        for i in range(n):
            x[i] += alpha * d[i]
            r[i] -= alpha * q[i]
        rn = _norm(r)
        history[it] = rn
        if rn <= target:
            return it, True
        for i in range(n):
            z[i] = dinv[i] * r[i]
        rz_new = 0.0
        for i in range(n):
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            d[i] = z[i] + beta * d[i]
    return max_iter, False


# ---------------------------------------------------------------------------
# p-multigrid


@nb.njit(**_jit)
def _rows(ptr_all, start, nrow):
    return ptr_all[start:start + nrow + 1]


@nb.njit(**_jit)
def hmg_cycle(h_ptr, h_idx, h_val, h_start, h_n,
              p_ptr, p_idx, p_val, p_start,
              r_ptr, r_idx, r_val, r_start,
              vec_off, lu, piv, schedule, gs_pre, gs_post,
              xs, bs, rs):
    """Run an h-multigrid schedule; level-0 data live at the start of ``xs``/``bs``."""
    for t in range(schedule.shape[0]):
        op = schedule[t, 0]
        l = schedule[t, 1]
        o0 = vec_off[l]
        o1 = vec_off[l + 1]
        x = xs[o0:o1]
        b = bs[o0:o1]
        ap = _rows(h_ptr, h_start[l], h_n[l])
        if op == OP_PRE:
            for _ in range(gs_pre):
                gs_forward(ap, h_idx, h_val, b, x)
        elif op == OP_POST:
            for _ in range(gs_post):
                gs_backward(ap, h_idx, h_val, b, x)
        elif op == OP_COARSE:
            dense_lu_solve(lu, piv, b, x)
        elif op == OP_RESTRICT:
            r = rs[o0:o1]
            csr_residual(ap, h_idx, h_val, b, x, r)
            c0 = vec_off[l + 1]
            c1 = vec_off[l + 2]
            rp = _rows(r_ptr, r_start[l], h_n[l + 1])
            csr_matvec(rp, r_idx, r_val, r, bs[c0:c1])
            xs[c0:c1] = 0.0
        else:
            c0 = vec_off[l + 1]
            c1 = vec_off[l + 2]
            pp = _rows(p_ptr, p_start[l], h_n[l])
            e = rs[o0:o1]
            csr_matvec(pp, p_idx, p_val, xs[c0:c1], e)
            for i in range(x.size):
                x[i] += e[i]


@nb.njit(**_jit)
def pmg_kernel(a_ptr, a_idx, a_val,
               l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, u_diag,
               pr_ptr, pr_idx, pr_val, rs_ptr, rs_idx, rs_val,
               h_ptr, h_idx, h_val, h_start, h_n,
               p_ptr, p_idx, p_val, p_start,
               r_ptr, r_idx, r_val, r_start,
               vec_off, lu, piv, schedule,
               nu1, nu2, gs_pre, gs_post,
               b, x, rel_tol, max_cycles, fixed):
    """p-multigrid solve of ``A x = b`` starting from ``x`` (updated in place).

    Cycles until ``||b - A x|| <= rel_tol ||b||`` or ``max_cycles``; with
    ``fixed`` set, exactly ``max_cycles`` cycles are done. Returns
    ``(cycles, converged, final residual norm)``.
    """
    n = b.size
    r = np.empty(n)
    z = np.empty(n)
    nh = vec_off[vec_off.size - 1]
    xs = np.zeros(nh)
    bs = np.zeros(nh)
    rs = np.zeros(nh)
    n1 = vec_off[1]
    bnorm = _norm(b)
    if bnorm == 0.0 and not fixed:
        x[:] = 0.0
        return 0, True, 0.0
    target = rel_tol * bnorm
    csr_residual(a_ptr, a_idx, a_val, b, x, r)
    rn = _norm(r)
    if not fixed and rn <= target:
        return 0, True, rn
    for cyc in range(1, max_cycles + 1):
        for _ in range(nu1):
            ilut_solve(l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, u_diag, r, z)
            for i in range(n):
                x[i] += z[i]
            csr_residual(a_ptr, a_idx, a_val, b, x, r)
        csr_matvec(rs_ptr, rs_idx, rs_val, r, bs[:n1])
        xs[:n1] = 0.0
        hmg_cycle(h_ptr, h_idx, h_val, h_start, h_n,
                  p_ptr, p_idx, p_val, p_start,
                  r_ptr, r_idx, r_val, r_start,
                  vec_off, lu, piv, schedule, gs_pre, gs_post, xs, bs, rs)
        csr_matvec(pr_ptr, pr_idx, pr_val, xs[:n1], z)
        for i in range(n):
            x[i] += z[i]
        csr_residual(a_ptr, a_idx, a_val, b, x, r)
        for _ in range(nu2):
            ilut_solve(l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, u_diag, r, z)
            for i in range(n):
                x[i] += z[i]
            csr_residual(a_ptr, a_idx, a_val, b, x, r)
        rn = _norm(r)
        if not fixed and rn <= target:
            return cyc, True, rn
    return max_cycles, fixed or rn <= target, rn
