"""Compiled inner loops for the multigrid smoother and residual."""

import numpy as np
from numba import njit


@njit(cache=True)
def _nb(i, n, periodic):
    im = i - 1
    ip = i + 1
    if periodic:
        if im < 0:
            im += n
        if ip >= n:
            ip -= n
    return im, ip


@njit(cache=True)
def gauss_seidel(u, f, c, px, py, sweeps, forward):
    """Lexicographic point Gauss-Seidel on the nine-slot stencil ``c``."""
    nx, ny = u.shape
    i0 = 0 if px else 1
    i1 = nx if px else nx - 1
    j0 = 0 if py else 1
    j1 = ny if py else ny - 1
    for _ in range(sweeps):
        for ii in range(i0, i1):
            i = ii if forward else i1 - 1 - (ii - i0)
            im, ip = _nb(i, nx, px)
            for jj in range(j0, j1):
                j = jj if forward else j1 - 1 - (jj - j0)
                jm, jp = _nb(j, ny, py)
                s = f[i, j]
                s -= c[0, 0, i, j] * u[im, jm] + c[0, 1, i, j] * u[im, j] + c[0, 2, i, j] * u[im, jp]
                s -= c[1, 0, i, j] * u[i, jm] + c[1, 2, i, j] * u[i, jp]
                s -= c[2, 0, i, j] * u[ip, jm] + c[2, 1, i, j] * u[ip, j] + c[2, 2, i, j] * u[ip, jp]
                u[i, j] = s / c[1, 1, i, j]


@njit(cache=True)
def residual(u, f, c, px, py):
    nx, ny = u.shape
    r = np.zeros_like(u)
    i0 = 0 if px else 1
    i1 = nx if px else nx - 1
    j0 = 0 if py else 1
    j1 = ny if py else ny - 1
    for i in range(i0, i1):
        im, ip = _nb(i, nx, px)
        for j in range(j0, j1):
            jm, jp = _nb(j, ny, py)
            s = c[0, 0, i, j] * u[im, jm] + c[0, 1, i, j] * u[im, j] + c[0, 2, i, j] * u[im, jp]
            s += c[1, 0, i, j] * u[i, jm] + c[1, 1, i, j] * u[i, j] + c[1, 2, i, j] * u[i, jp]
            s += c[2, 0, i, j] * u[ip, jm] + c[2, 1, i, j] * u[ip, j] + c[2, 2, i, j] * u[ip, jp]
            r[i, j] = f[i, j] - s
    return r


@njit(cache=True)
def winding_numbers(px, py, x0, y0, h, nx, ny):
    """Winding number of the closed polyline (px, py) about every grid node.

    Counts signed crossings of an upward vertical ray from each node, so the
    cost is O(nx * ny + nx * len(px)).
    """
    acc = np.zeros((nx, ny + 1), dtype=np.int64)
    n = px.shape[0]
    for k in range(n):
        xa = px[k]
        ya = py[k]
        xb = px[(k + 1) % n]
        yb = py[(k + 1) % n]
        if xa == xb:
            continue
        if xb > xa:
            lo, hi, sgn = xa, xb, -1
        else:
            lo, hi, sgn = xb, xa, 1
        # columns with lo <= x_i < hi
        ilo = int(np.ceil((lo - x0) / h))
        ihi = int(np.ceil((hi - x0) / h))
        for i in range(max(ilo, 0), min(ihi, nx)):
            xi = x0 + i * h
            if xi < lo or xi >= hi:
                continue
            t = (xi - xa) / (xb - xa)
            yc = ya + t * (yb - ya)
            # nodes with y_j < yc get the contribution
            jc = int(np.ceil((yc - y0) / h))
            if jc < 0:
                continue
            if jc > ny:
                jc = ny
            acc[i, 0] += sgn
            acc[i, jc] -= sgn
    out = np.zeros((nx, ny), dtype=np.int64)
    for i in range(nx):
        s = 0
        for j in range(ny):
            s += acc[i, j]
            out[i, j] = s
    return out


@njit(cache=True)
def _thomas(a, b, c, d, n):
    """Solve the tridiagonal system with sub a, diag b, super c (in place on copies)."""
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for k in range(1, n):
        m = b[k] - a[k] * cp[k - 1]
        cp[k] = c[k] / m
        dp[k] = (d[k] - a[k] * dp[k - 1]) / m
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for k in range(n - 2, -1, -1):
        x[k] = dp[k] - cp[k] * x[k + 1]
    return x


@njit(cache=True)
def _cyclic_thomas(a, b, c, d, n):
    """Periodic tridiagonal solve: a[0] couples to x[n-1], c[n-1] to x[0] (Sherman-Morrison)."""
    if n < 3:
        A = np.zeros((n, n))
        for k in range(n):
            A[k, k] += b[k]
            A[k, (k - 1) % n] += a[k]
            A[k, (k + 1) % n] += c[k]
        return np.linalg.solve(A, d)
    gamma = -b[0]
    bb = b.copy()
    bb[0] = b[0] - gamma
    bb[n - 1] = b[n - 1] - a[0] * c[n - 1] / gamma
    x = _thomas(a, bb, c, d, n)
    uvec = np.zeros(n)
    uvec[0] = gamma
    uvec[n - 1] = c[n - 1]
    z = _thomas(a, bb, c, uvec, n)
    fact = (x[0] + a[0] * x[n - 1] / gamma) / (1.0 + z[0] + a[0] * z[n - 1] / gamma)
    return x - fact * z


@njit(cache=True)
def _thomas_batch(a, b, c, d, cyclic):
    """Tridiagonal solves along axis 0 for every column of (m, L) arrays.

    With ``cyclic`` the first row couples to the last through ``a[0]`` and the
    last to the first through ``c[m-1]`` (Sherman-Morrison). The inner loops
    run over columns so memory is walked contiguously.
    """
    m, L = d.shape
    bb = b.copy()
    if cyclic:
        gamma = -b[0].copy()
        for l in range(L):
            bb[0, l] = b[0, l] - gamma[l]
            bb[m - 1, l] = b[m - 1, l] - a[0, l] * c[m - 1, l] / gamma[l]
    cp = np.empty((m, L))
    dp = np.empty((m, L))
    zp = np.empty((m, L)) if cyclic else dp
    for l in range(L):
        cp[0, l] = c[0, l] / bb[0, l]
        dp[0, l] = d[0, l] / bb[0, l]
        if cyclic:
            zp[0, l] = gamma[l] / bb[0, l]
    for k in range(1, m):
        for l in range(L):
            w = 1.0 / (bb[k, l] - a[k, l] * cp[k - 1, l])
            cp[k, l] = c[k, l] * w
            dp[k, l] = (d[k, l] - a[k, l] * dp[k - 1, l]) * w
            if cyclic:
                rhs_z = c[m - 1, l] if k == m - 1 else 0.0
                zp[k, l] = (rhs_z - a[k, l] * zp[k - 1, l]) * w
    x = np.empty((m, L))
    z = np.empty((m, L)) if cyclic else x
    for l in range(L):
        x[m - 1, l] = dp[m - 1, l]
        if cyclic:
            z[m - 1, l] = zp[m - 1, l]
    for k in range(m - 2, -1, -1):
        for l in range(L):
            x[k, l] = dp[k, l] - cp[k, l] * x[k + 1, l]
            if cyclic:
                z[k, l] = zp[k, l] - cp[k, l] * z[k + 1, l]
    if cyclic:
        for l in range(L):
            fact = (x[0, l] + a[0, l] * x[m - 1, l] / gamma[l]) / (1.0 + z[0, l] + a[0, l] * z[m - 1, l] / gamma[l])
            for k in range(m):
                x[k, l] -= fact * z[k, l]
    return x


@njit(cache=True)
def line_gauss_seidel(u, f, c, px, py, sweeps, forward):
    """Alternating zebra line Gauss-Seidel: lines along y, then lines along x.

    Within a pass, lines of one parity are independent and solved together;
    couplings along each line are exact (cyclic on periodic axes), all other
    stencil entries take the latest values. ``forward`` selects the parity
    order (even first or odd first).
    """
    nx, ny = u.shape
    i0 = 0 if px else 1
    i1 = nx if px else nx - 1
    j0 = 0 if py else 1
    j1 = ny if py else ny - 1
    mi = i1 - i0
    mj = j1 - j0
    for _ in range(sweeps):
        for pc in range(2):
            par = pc if forward else 1 - pc
            # lines of constant i with i - i0 = par (mod 2): unknowns along j
            L = (mi - par + 1) // 2
            if L > 0:
                a = np.empty((L, mj))
                b = np.empty((L, mj))
                cc = np.empty((L, mj))
                d = np.empty((L, mj))
                for l in range(L):
                    i = i0 + par + 2 * l
                    im, ip = _nb(i, nx, px)
                    for k in range(mj):
                        j = j0 + k
                        jm, jp = _nb(j, ny, py)
                        s = f[i, j]
                        s -= c[0, 0, i, j] * u[im, jm] + c[0, 1, i, j] * u[im, j] + c[0, 2, i, j] * u[im, jp]
                        s -= c[2, 0, i, j] * u[ip, jm] + c[2, 1, i, j] * u[ip, j] + c[2, 2, i, j] * u[ip, jp]
                        a[l, k] = c[1, 0, i, j]
                        b[l, k] = c[1, 1, i, j]
                        cc[l, k] = c[1, 2, i, j]
                        if not py:
                            if k == 0:
                                s -= a[l, k] * u[i, jm]
                                a[l, k] = 0.0
                            if k == mj - 1:
                                s -= cc[l, k] * u[i, jp]
                                cc[l, k] = 0.0
                        d[l, k] = s
                x = _thomas_batch(a.T.copy(), b.T.copy(), cc.T.copy(), d.T.copy(), py)
                for l in range(L):
                    i = i0 + par + 2 * l
                    for k in range(mj):
                        u[i, j0 + k] = x[k, l]
        for pc in range(2):
            par = pc if forward else 1 - pc
            # lines of constant j with j - j0 = par (mod 2): unknowns along i
            L = (mj - par + 1) // 2
            if L > 0:
                a = np.empty((mi, L))
                b = np.empty((mi, L))
                cc = np.empty((mi, L))
                d = np.empty((mi, L))
                for k in range(mi):
                    i = i0 + k
                    im, ip = _nb(i, nx, px)
                    for l in range(L):
                        j = j0 + par + 2 * l
                        jm, jp = _nb(j, ny, py)
                        s = f[i, j]
                        s -= c[0, 0, i, j] * u[im, jm] + c[1, 0, i, j] * u[i, jm] + c[2, 0, i, j] * u[ip, jm]
                        s -= c[0, 2, i, j] * u[im, jp] + c[1, 2, i, j] * u[i, jp] + c[2, 2, i, j] * u[ip, jp]
                        a[k, l] = c[0, 1, i, j]
                        b[k, l] = c[1, 1, i, j]
                        cc[k, l] = c[2, 1, i, j]
                        if not px:
                            if k == 0:
                                s -= a[k, l] * u[im, j]
                                a[k, l] = 0.0
                            if k == mi - 1:
                                s -= cc[k, l] * u[ip, j]
                                cc[k, l] = 0.0
                        d[k, l] = s
                x = _thomas_batch(a, b, cc, d, px)
                for k in range(mi):
                    for l in range(L):
                        u[i0 + k, j0 + par + 2 * l] = x[k, l]
