"""Compiled inner loops for the parity-blocked master equation.

A block holds the density-matrix entries between basis states of one total
photon-number parity, stored as separate real/imaginary arrays. Only the upper
triangle (``j >= i``) is read or written: the generator preserves Hermiticity,
so entries below the diagonal are implied by conjugation.

Per block the generator is described by

* ``energy``/``decay``: diagonal of the effective Hamiltonian
  ``E_i - i decay_i / 2`` (decay includes loss and dephasing ``n^2`` terms);
* ``nl``/``nr`` with ``gl``/``gr``: dephasing jump weights ``2 g n_i n_j``;
* ``offs``/``h``: off-diagonal Hamiltonian by diagonals,
  ``H[i, i + offs[q]] = h[q, i]`` with ``h = h_static + e(t) h_pump``;
  ``yrun`` lists the ``[start, stop)`` stretches where diagonal ``q`` is nonzero;
* ``src``/``coef``/``jrun``: photon-loss gather from the other parity block,
  ``out[i, j] += coef[m, i] coef[m, j] other[src[m, i], src[m, j]]``, where
  ``jrun`` rows ``(start, stop, shift)`` mark stretches with
  ``src[m, j] = j + shift``.
"""
from numba import njit


@njit(cache=True)
def current_pumps(hs_r, hs_i, hp_r, hp_i, e, hr, hi):
    for q in range(hr.shape[0]):
        for j in range(hr.shape[1]):
            hr[q, j] = hs_r[q, j] + e * hp_r[q, j]
            hi[q, j] = hs_i[q, j] + e * hp_i[q, j]


# Inner loops take zero-based slices and store to a single array each, which
# keeps LLVM's runtime alias checks within budget so the loops vectorize.


@njit(cache=True, fastmath=True, inline="always")
def _fill(z, v):
    for j in range(z.size):
        z[j] = v


@njit(cache=True, fastmath=True, inline="always")
def _mi_axpy(a, b, xr, xi, zr, zi):
    # z += -i (a + ib) x
    for j in range(zr.size):
        zr[j] += a * xi[j] + b * xr[j]
    for j in range(zi.size):
        zi[j] -= a * xr[j] - b * xi[j]


@njit(cache=True, fastmath=True, inline="always")
def _i_mul_conj(hr, hi, xr, xi, zr, zi):
    # z += i x conj(h), elementwise
    for j in range(zr.size):
        zr[j] += hi[j] * xr[j] - hr[j] * xi[j]
    for j in range(zi.size):
        zi[j] += hr[j] * xr[j] + hi[j] * xi[j]


@njit(cache=True, fastmath=True, inline="always")
def _elementwise(ei, di, nli, nri, energy, decay, nl, nr, xr, xi, zr, zi):
    # z += G x with G[j] = 2 (g n_i n_j) - (decay_i + decay_j)/2 + i (E_j - E_i)
    for j in range(zr.size):
        gre = 2.0 * (nli * nl[j] + nri * nr[j]) - 0.5 * (di + decay[j])
        zr[j] += gre * xr[j] - (energy[j] - ei) * xi[j]
    for j in range(zi.size):
        gre = 2.0 * (nli * nl[j] + nri * nr[j]) - 0.5 * (di + decay[j])
        zi[j] += gre * xi[j] + (energy[j] - ei) * xr[j]


@njit(cache=True, fastmath=True, inline="always")
def _scaled_add(ci, c, x, z):
    for j in range(z.size):
        z[j] += ci * c[j] * x[j]


@njit(cache=True, fastmath=True)
def row_derivative(i, R, I, oR, oI, energy, decay, nl, nr, gl, gr, offs, hr, hi, yrun, src, coef, jrun, zr, zi):
    """Fill ``zr/zi[i:]`` with row ``i`` (upper part) of the time derivative."""
    n = R.shape[0]
    nd = offs.shape[0]
    _fill(zr[i:], 0.0)
    _fill(zi[i:], 0.0)
    # -i H rho: rho rows i + o
    for q in range(nd):
        o = offs[q]
        k = i + o
        if k < 0 or k >= n:
            continue
        a = hr[q, i]
        b = hi[q, i]
        if a == 0.0 and b == 0.0:
            continue
        lo = i
        if k > i:
            for j in range(i, k):  # rho[k, j] below the diagonal
                xr = R[j, k]
                xi = -I[j, k]
                zr[j] += a * xi + b * xr
                zi[j] -= a * xr - b * xi
            lo = k
        _mi_axpy(a, b, R[k, lo:], I[k, lo:], zr[lo:], zi[lo:])
    # +i rho H^dag: columns j + o of row i
    Ri = R[i]
    Ii = I[i]
    for q in range(nd):
        o = offs[q]
        hq_r = hr[q]
        hq_i = hi[q]
        for r in range(yrun.shape[1]):
            j0 = yrun[q, r, 0]
            j1 = yrun[q, r, 1]
            if j1 <= j0:
                break
            if j1 <= i:
                continue
            if j0 < i:
                j0 = i
            if o < 0:
                jm = min(i - o, j1)
                for j in range(j0, jm):  # rho[i, j + o] below the diagonal
                    xr = R[j + o, i]
                    xi = -I[j + o, i]
                    a = hq_r[j]
                    b = hq_i[j]
                    zr[j] += b * xr - a * xi
                    zi[j] += a * xr + b * xi
                if jm > j0:
                    j0 = jm
            if j1 > j0:
                _i_mul_conj(hq_r[j0:j1], hq_i[j0:j1], Ri[j0 + o:j1 + o], Ii[j0 + o:j1 + o], zr[j0:j1], zi[j0:j1])
    # elementwise part
    _elementwise(
        energy[i], decay[i], gl * nl[i], gr * nr[i],
        energy[i:], decay[i:], nl[i:], nr[i:], Ri[i:], Ii[i:], zr[i:], zi[i:],
    )
    # photon loss from the other block
    for m in range(src.shape[0]):
        ci = coef[m, i]
        if ci == 0.0:
            continue
        s = src[m, i]
        oRs = oR[s]
        oIs = oI[s]
        cm = coef[m]
        for r in range(jrun.shape[1]):
            j0 = jrun[m, r, 0]
            j1 = jrun[m, r, 1]
            if j1 <= j0:
                break
            if j1 <= i:
                continue
            if j0 < i:
                j0 = i
            sh = jrun[m, r, 2]
            _scaled_add(ci, cm[j0:j1], oRs[j0 + sh:j1 + sh], zr[j0:j1])
            _scaled_add(ci, cm[j0:j1], oIs[j0 + sh:j1 + sh], zi[j0:j1])


@njit(cache=True, fastmath=True, inline="always")
def _combine(base, c, z, out):
    for j in range(z.size):
        out[j] = base[j] + c * z[j]


@njit(cache=True, fastmath=True, inline="always")
def _accumulate(c, z, out):
    for j in range(z.size):
        out[j] += c * z[j]


@njit(cache=True, fastmath=True)
def stage(R, I, oR, oI, T, hr, hi, zr, zi, baseR, baseI, accR, accI, nextR, nextI, c_acc, c_next, first, last):
    """One RK4 stage for one block.

    With ``k`` the derivative at the stage input ``(R, I)``:
    ``acc = base + c_acc k`` if ``first`` else ``acc += c_acc k``;
    ``next = base + c_next k`` unless ``last``, where ``base = acc + c_acc k``.
    """
    n = R.shape[0]
    energy, decay, nl, nr, gl, gr, offs, yrun, src, coef, jrun = T[0], T[1], T[2], T[3], T[4], T[5], T[6], T[11], T[12], T[13], T[14]
    for i in range(n):
        row_derivative(i, R, I, oR, oI, energy, decay, nl, nr, gl, gr, offs, hr, hi, yrun, src, coef, jrun, zr, zi)
        z_r = zr[i:]
        z_i = zi[i:]
        if last:
            _combine(accR[i, i:], c_acc, z_r, baseR[i, i:])
            _combine(accI[i, i:], c_acc, z_i, baseI[i, i:])
            continue
        if first:
            _combine(baseR[i, i:], c_acc, z_r, accR[i, i:])
            _combine(baseI[i, i:], c_acc, z_i, accI[i, i:])
        else:
            _accumulate(c_acc, z_r, accR[i, i:])
            _accumulate(c_acc, z_i, accI[i, i:])
        _combine(baseR[i, i:], c_next, z_r, nextR[i, i:])
        _combine(baseI[i, i:], c_next, z_i, nextI[i, i:])


@njit(cache=True)
def derivative(R, I, oR, oI, T, hr, hi, zr, zi, outR, outI):
    n = R.shape[0]
    for i in range(n):
        row_derivative(i, R, I, oR, oI, T[0], T[1], T[2], T[3], T[4], T[5], T[6], hr, hi, T[11], T[12], T[13], T[14], zr, zi)
        _combine(zr[i:], 0.0, zr[i:], outR[i, i:])
        _combine(zi[i:], 0.0, zi[i:], outI[i, i:])


@njit(cache=True)
def rk4_step(Ra, Ia, Rb, Ib, dt, e0, e1, e2, TA, TB, SA, SB):
    """One classical RK4 step of both parity blocks, in place.

    Scratch layout: (hr, hi, zr, zi, accR, accI, y1R, y1I, y2R, y2I).
    """
    h2 = 0.5 * dt
    h3 = dt / 3.0
    h6 = dt / 6.0
    # k1 from r -> y1
    current_pumps(TA[7], TA[8], TA[9], TA[10], e0, SA[0], SA[1])
    current_pumps(TB[7], TB[8], TB[9], TB[10], e0, SB[0], SB[1])
    stage(Ra, Ia, Rb, Ib, TA, SA[0], SA[1], SA[2], SA[3], Ra, Ia, SA[4], SA[5], SA[6], SA[7], h6, h2, True, False)
    stage(Rb, Ib, Ra, Ia, TB, SB[0], SB[1], SB[2], SB[3], Rb, Ib, SB[4], SB[5], SB[6], SB[7], h6, h2, True, False)
    # k2 from y1 -> y2
    current_pumps(TA[7], TA[8], TA[9], TA[10], e1, SA[0], SA[1])
    current_pumps(TB[7], TB[8], TB[9], TB[10], e1, SB[0], SB[1])
    stage(SA[6], SA[7], SB[6], SB[7], TA, SA[0], SA[1], SA[2], SA[3], Ra, Ia, SA[4], SA[5], SA[8], SA[9], h3, h2, False, False)
    stage(SB[6], SB[7], SA[6], SA[7], TB, SB[0], SB[1], SB[2], SB[3], Rb, Ib, SB[4], SB[5], SB[8], SB[9], h3, h2, False, False)
    # k3 from y2 -> y1
    stage(SA[8], SA[9], SB[8], SB[9], TA, SA[0], SA[1], SA[2], SA[3], Ra, Ia, SA[4], SA[5], SA[6], SA[7], h3, dt, False, False)
    stage(SB[8], SB[9], SA[8], SA[9], TB, SB[0], SB[1], SB[2], SB[3], Rb, Ib, SB[4], SB[5], SB[6], SB[7], h3, dt, False, False)
    # k4 from y1 -> r
    current_pumps(TA[7], TA[8], TA[9], TA[10], e2, SA[0], SA[1])
    current_pumps(TB[7], TB[8], TB[9], TB[10], e2, SB[0], SB[1])
    stage(SA[6], SA[7], SB[6], SB[7], TA, SA[0], SA[1], SA[2], SA[3], Ra, Ia, SA[4], SA[5], SA[6], SA[7], h6, 0.0, False, True)
    stage(SB[6], SB[7], SA[6], SA[7], TB, SB[0], SB[1], SB[2], SB[3], Rb, Ib, SB[4], SB[5], SB[6], SB[7], h6, 0.0, False, True)
