"""Compiled inner loops for batched trajectory and probe simulation.

These kernels advance a batch of independent realizations through one chunk
of pre-generated noise.  They are private: the public single-step operations
in :mod:`qunravel.trajectory` and :mod:`qunravel.cavity` define the reference
arithmetic, and the test suite checks the kernels against them.

All loops run in strict IEEE order (no fastmath), so results are bitwise
reproducible and independent of batch size and chunking.
"""

import numpy as np
from numba import njit

#: a post-step squared norm below this marks the trajectory as failed
FAIL_NORM2 = 1e-12


@njit(cache=True)
def _record_state(v, p_rec, psi_rec, proj, b, slot):
    C, m, _ = proj.shape
    n2 = 0.0
    for i in range(m):
        n2 += v[i].real * v[i].real + v[i].imag * v[i].imag
    for n in range(C):
        acc = 0.0
        for i in range(m):
            z = 0.0 + 0.0j
            for j in range(m):
                z += proj[n, i, j] * v[j]
            acc += (np.conj(v[i]) * z).real
        p_rec[b, slot, n] = acc / n2
    for i in range(m):
        psi_rec[b, slot, i] = v[i]


@njit(cache=True)
def ito_chunk(psi, proj, energies, dB, dt, renorm, stride, offset, n_total, p_rec, psi_rec, fail_step):
    """Euler-Maruyama steps of the explicit-drift form of the state equation."""
    B, m = psi.shape
    C = proj.shape[0]
    k = dB.shape[1]
    pp = np.empty((C, m), dtype=np.complex128)
    p = np.empty(C, dtype=np.float64)
    for b in range(B):
        if fail_step[b] >= 0:
            continue
        v = psi[b]
        for s in range(k):
            g = offset + s + 1
            n2 = 0.0
            for i in range(m):
                n2 += v[i].real * v[i].real + v[i].imag * v[i].imag
            if n2 < FAIL_NORM2:
                fail_step[b] = g
                break
            for n in range(C):
                acc = 0.0
                for i in range(m):
                    z = 0.0 + 0.0j
                    for j in range(m):
                        z += proj[n, i, j] * v[j]
                    pp[n, i] = z
                    acc += (np.conj(v[i]) * z).real
                p[n] = acc / n2
            psum = 0.0
            pdb = 0.0
            for n in range(C):
                psum += p[n] * p[n]
                pdb += p[n] * dB[b, s, n]
            scal = 1.0 + pdb - 0.5 * dt * psum
            for i in range(m):
                z = scal * v[i]
                for n in range(C):
                    w = complex((p[n] - 0.5) * dt - dB[b, s, n], -energies[n] * dt)
                    z += w * pp[n, i]
                v[i] = z
            n2 = 0.0
            for i in range(m):
                n2 += v[i].real * v[i].real + v[i].imag * v[i].imag
            if n2 < FAIL_NORM2:
                fail_step[b] = g
                break
            if renorm:
                inv = 1.0 / np.sqrt(n2)
                for i in range(m):
                    v[i] = v[i] * inv
            if g % stride == 0:
                _record_state(v, p_rec, psi_rec, proj, b, g // stride)
            elif g == n_total:
                _record_state(v, p_rec, psi_rec, proj, b, n_total // stride + 1)


@njit(cache=True)
def _midpoint_increment(v, db, proj, energies, dt, pp, p, out):
    """Full increment of the midpoint-form equation at state v."""
    C, m, _ = proj.shape
    n2 = 0.0
    for i in range(m):
        n2 += v[i].real * v[i].real + v[i].imag * v[i].imag
    if n2 < FAIL_NORM2:
        return False
    for n in range(C):
        acc = 0.0
        for i in range(m):
            z = 0.0 + 0.0j
            for j in range(m):
                z += proj[n, i, j] * v[j]
            pp[n, i] = z
            acc += (np.conj(v[i]) * z).real
        p[n] = acc / n2
    pk = 0.0
    for n in range(C):
        pk += p[n] * ((1.0 - 2.0 * p[n]) * dt + db[n])
    for i in range(m):
        z = pk * v[i]
        for n in range(C):
            dk = (1.0 - 2.0 * p[n]) * dt + db[n]
            z += complex(-dk, -energies[n] * dt) * pp[n, i]
        out[i] = z
    return True


@njit(cache=True)
def heun_chunk(psi, proj, energies, dB, dt, renorm, stride, offset, n_total, p_rec, psi_rec, fail_step):
    """Heun (midpoint-corrected) steps converging to the circle-product form."""
    B, m = psi.shape
    C = proj.shape[0]
    k = dB.shape[1]
    pp = np.empty((C, m), dtype=np.complex128)
    p = np.empty(C, dtype=np.float64)
    g1 = np.empty(m, dtype=np.complex128)
    g2 = np.empty(m, dtype=np.complex128)
    u = np.empty(m, dtype=np.complex128)
    for b in range(B):
        if fail_step[b] >= 0:
            continue
        v = psi[b]
        for s in range(k):
            g = offset + s + 1
            ok = _midpoint_increment(v, dB[b, s], proj, energies, dt, pp, p, g1)
            if not ok:
                fail_step[b] = g
                break
            for i in range(m):
                u[i] = v[i] + g1[i]
            ok = _midpoint_increment(u, dB[b, s], proj, energies, dt, pp, p, g2)
            if not ok:
                fail_step[b] = g
                break
            for i in range(m):
                v[i] = v[i] + 0.5 * (g1[i] + g2[i])
            n2 = 0.0
            for i in range(m):
                n2 += v[i].real * v[i].real + v[i].imag * v[i].imag
            if n2 < FAIL_NORM2:
                fail_step[b] = g
                break
            if renorm:
                inv = 1.0 / np.sqrt(n2)
                for i in range(m):
                    v[i] = v[i] * inv
            if g % stride == 0:
                _record_state(v, p_rec, psi_rec, proj, b, g // stride)
            elif g == n_total:
                _record_state(v, p_rec, psi_rec, proj, b, n_total // stride + 1)


@njit(cache=True)
def probe_chunk(amps, w_plus, w_minus, uniforms, plus_count, fail_step, offset):
    """Advance a batch of probe runs; amps holds per-level amplitude magnitudes."""
    R, C = amps.shape
    k = uniforms.shape[1]
    for r in range(R):
        if fail_step[r] >= 0:
            continue
        cnt = 0
        for s in range(k):
            sp = 0.0
            for n in range(C):
                ap = amps[r, n] * w_plus[n]
                sp += ap * ap
            if uniforms[r, s] < sp:
                cnt += 1
                z2 = 0.0
                for n in range(C):
                    amps[r, n] = amps[r, n] * w_plus[n]
                    z2 += amps[r, n] * amps[r, n]
            else:
                z2 = 0.0
                for n in range(C):
                    amps[r, n] = amps[r, n] * w_minus[n]
                    z2 += amps[r, n] * amps[r, n]
            if z2 < 1e-28:
                fail_step[r] = offset + s + 1
                break
            z = np.sqrt(z2)
            for n in range(C):
                amps[r, n] = amps[r, n] / z
        plus_count[r] += cnt
