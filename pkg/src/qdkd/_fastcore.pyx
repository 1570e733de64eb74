# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled round kernel.

This module replays the exact draw sequence documented in protocol.run_round
for the built-in strategies, using pre-embedded 18-dimensional operator
matrices handed in by the caller.  No physics is defined here; the matrices
come from quantum.embed_matrix and the random stream replicates
rng.SplitMix64 bit for bit.

Floating-point parity with the reference loop is part of the contract, so
the arithmetic mirrors numpy's evaluation order deliberately:

- squared magnitudes accumulate sequentially for 3 and 6 element blocks and
  in numpy's 8-accumulator pairwise tree for 9 element blocks;
- post-measurement renormalization multiplies by a reciprocal (numpy's
  complex-by-scalar division path) instead of dividing;
- the build compiles with FP contraction off so no fused multiply-adds
  sneak in.
"""

import numpy as np

from .errors import QdkdError

from libc.math cimport sqrt
from libc.stdint cimport int8_t, int64_t, uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9
cdef uint64_t MIX2 = 0x94D049BB133111EB
cdef double INV53 = 1.0 / 9007199254740992.0  # 2^-53


# ---------------------------------------------------------------------------
# random stream (see rng.SplitMix64)


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t _next_u64(uint64_t* s) noexcept nogil:
    s[0] = s[0] + GOLDEN
    return _mix64(s[0])


cdef inline double _uniform(uint64_t* s) noexcept nogil:
    return <double>(_next_u64(s) >> 11) * INV53


cdef inline int _bit(uint64_t* s) noexcept nogil:
    return 1 if _uniform(s) < 0.5 else 0


cdef inline bint _bernoulli(uint64_t* s, double p) noexcept nogil:
    return _uniform(s) < p


cdef inline int _choose3(uint64_t* s, double p0, double p1, double p2) noexcept nogil:
    cdef double u = _uniform(s)
    cdef double cum = p0
    if u < cum:
        return 0
    cum += p1
    if u < cum:
        return 1
    return 2


# ---------------------------------------------------------------------------
# state helpers on the flat (A, B, E) layout: index = a*9 + b*3 + e


cdef inline double _a2(double complex z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline void _matvec(double complex* m, double complex* x, double complex* y) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double complex acc
    for i in range(18):
        acc = 0
        for j in range(18):
            acc = acc + m[i * 18 + j] * x[j]
        y[i] = acc


cdef inline void _apply(double complex* m, double complex* st) noexcept nogil:
    cdef double complex tmp[18]
    cdef Py_ssize_t i
    _matvec(m, st, tmp)
    for i in range(18):
        st[i] = tmp[i]


cdef int _measure_photon(double complex* st, int mode_b, uint64_t* s, bint* err) noexcept nogil:
    """Destructive photodetection of B (mode_b=1) or E (mode_b=0); returns the
    outcome index (0=vac, 1, 2) and leaves the measured mode in vacuum."""
    cdef double probs[3]
    cdef double complex kept[6]
    cdef double acc, scl
    cdef Py_ssize_t lab, a, o, cell
    for lab in range(3):
        acc = 0.0
        for a in range(2):
            for o in range(3):
                if mode_b:
                    acc = acc + _a2(st[a * 9 + lab * 3 + o])
                else:
                    acc = acc + _a2(st[a * 9 + o * 3 + lab])
        probs[lab] = acc
    lab = _choose3(s, probs[0], probs[1], probs[2])
    if probs[lab] == 0.0:
        err[0] = True
        return 0
    scl = 1.0 / sqrt(probs[lab])
    for a in range(2):
        for o in range(3):
            cell = a * 9 + lab * 3 + o if mode_b else a * 9 + o * 3 + lab
            # complex-by-real product is componentwise: one rounding per
            # component, exactly numpy's divide-by-scalar result
            kept[a * 3 + o] = st[cell] * scl
    for cell in range(18):
        st[cell] = 0
    for a in range(2):
        for o in range(3):
            cell = a * 9 + o if mode_b else a * 9 + o * 3
            st[cell] = kept[a * 3 + o]
    return <int>lab


cdef inline double _sum9(double* v) noexcept nogil:
    # numpy's pairwise order for a 9-element reduction
    return (((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]))) + v[8]


cdef int _measure_qubit_label(double complex* st, uint64_t* s) noexcept nogil:
    """Alice's stored-qubit readout; only the label is needed downstream."""
    cdef double v[9]
    cdef double p0
    cdef Py_ssize_t i
    for i in range(9):
        v[i] = _a2(st[i])
    p0 = _sum9(v)
    return 0 if _uniform(s) < p0 else 1


cdef int _bell_label(double complex* st, uint64_t* s) noexcept nogil:
    """Joint interference readout label: 0 singlet, 1 triplet, 2 FAIL.
    The post-state is never consumed, so it is not built."""
    cdef double pm = 0.0, pp = 0.0, pf
    cdef double complex d, t
    cdef Py_ssize_t e
    for e in range(3):
        d = st[6 + e] - st[12 + e]
        pm = pm + _a2(d)
    for e in range(3):
        t = st[6 + e] + st[12 + e]
        pp = pp + _a2(t)
    pm = pm / 2.0
    pp = pp / 2.0
    pf = 1.0 - (pm + pp)
    if pf < 0.0:
        pf = 0.0
    return _choose3(s, pm, pp, pf)


# ---------------------------------------------------------------------------
# round loop


ctypedef struct Mats:
    double complex* z
    double complex* x
    double complex* sw
    double complex* v
    double complex* vd
    double complex* inj0
    double complex* inj1


ctypedef struct Cols:
    int8_t* mode
    int8_t* j
    int8_t* k
    int8_t* m
    int8_t* kva
    int8_t* jvb
    int8_t* evej
    int8_t* evek
    int8_t* branch
    int8_t* cmdet
    int8_t* cmbob
    int8_t* cmali
    int8_t* cmcor


cdef void _one_round(int kind, double p, double epsilon, uint64_t seed,
                     double cm_probability, double transmission,
                     double complex* init, Mats* mats, Cols* out,
                     Py_ssize_t i, bint* err) noexcept nogil:
    cdef uint64_t s = seed
    cdef double complex cur[18]
    cdef Py_ssize_t c
    cdef int j, k, branch, t, q, n, lab, alab, m
    cdef bint intercepts, detected, is_cm

    for c in range(18):
        cur[c] = init[c]

    j = _bit(&s)
    if j:
        _apply(mats.z, cur)

    branch = -1
    if kind >= 3:
        branch = 1 if _bernoulli(&s, p) else 0

    intercepts = kind == 1 or (kind >= 3 and branch == 1)
    if not intercepts:
        if not _bernoulli(&s, transmission):
            _measure_photon(cur, 1, &s, err)  # absorbed in the fiber
            if err[0]:
                return

    t = 0
    if kind == 1:
        _apply(mats.sw, cur)
    elif kind == 3 and branch == 1:
        _apply(mats.sw, cur)
    elif kind == 4 and branch == 1:
        lab = _measure_photon(cur, 1, &s, err)
        if err[0]:
            return
        t = 1 if lab == 2 else 0
        _apply(mats.v, cur)
        if t:
            _apply(mats.x, cur)

    is_cm = _bernoulli(&s, cm_probability)

    out.j[i] = <int8_t>j
    out.branch[i] = <int8_t>branch

    if is_cm:
        lab = _measure_photon(cur, 1, &s, err)
        if err[0]:
            return
        alab = _measure_qubit_label(cur, &s)
        detected = lab != 0
        out.mode[i] = 1
        out.k[i] = -1
        out.m[i] = -1
        out.kva[i] = -1
        out.jvb[i] = -1
        out.evej[i] = -1
        out.evek[i] = -1
        out.cmdet[i] = 1 if detected else 0
        out.cmbob[i] = <int8_t>(lab - 1) if detected else -1
        out.cmali[i] = <int8_t>alab
        out.cmcor[i] = 1 if (detected and lab - 1 == alab) else 0
        return

    k = _bit(&s)
    if k:
        _apply(mats.z, cur)

    q = -1
    n = -1
    if kind == 1:
        _apply(mats.sw, cur)
    elif kind == 2:
        q = 1 if _bernoulli(&s, (1.0 - epsilon) / 2.0) else 0
        if q:
            _apply(mats.z, cur)
    elif kind == 3:
        if branch == 1:
            q = _bit(&s)
            _apply(mats.sw, cur)
            if q:
                _apply(mats.z, cur)
        else:
            q = 1 if _bernoulli(&s, (1.0 - epsilon) / 2.0) else 0
            if q:
                _apply(mats.z, cur)
    elif kind == 4:
        if branch == 1:
            if t:
                _apply(mats.x, cur)
            _apply(mats.vd, cur)
            lab = _measure_photon(cur, 0, &s, err)
            if err[0]:
                return
            n = lab - 1 if lab >= 1 else -1
            _apply(mats.inj1 if t else mats.inj0, cur)
        else:
            q = 1 if _bernoulli(&s, (1.0 - epsilon) / 2.0) else 0
            if q:
                _apply(mats.z, cur)

    m = _bell_label(cur, &s)

    out.mode[i] = 0
    out.k[i] = <int8_t>k
    out.m[i] = <int8_t>m
    out.cmdet[i] = -1
    out.cmbob[i] = -1
    out.cmali[i] = -1
    out.cmcor[i] = -1
    if m < 2:
        out.kva[i] = <int8_t>(m ^ j)
        out.jvb[i] = <int8_t>(m ^ k)
        out.evej[i] = <int8_t>(m ^ q) if (kind == 3 and branch == 1) else -1
        out.evek[i] = <int8_t>n if (kind == 4 and branch == 1 and t == 1 and n >= 0) else -1
    else:
        out.kva[i] = -1
        out.jvb[i] = -1
        out.evej[i] = -1
        out.evek[i] = -1


def run_rounds(int kind, double p, double epsilon, object master_seed,
               object start, object count, double cm_probability,
               double transmission, object init_amps,
               object z, object x, object swap, object v, object vd,
               object inj0, object inj1):
    """Simulate `count` rounds starting at round index `start`.

    Returns a dict of int8 arrays, one entry per round; -1 marks a field the
    round shape did not produce (None in the reference engine).
    """
    cdef uint64_t master = <uint64_t>(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    cdef int64_t first = int(start)
    cdef Py_ssize_t n = int(count)
    cdef int knd = kind

    if not 0 <= knd <= 4:
        raise QdkdError(f"unknown kernel kind {kind!r}")

    names = ("mode", "j", "k", "m", "k_view_a", "j_view_b", "eve_j", "eve_k",
             "eve_branch", "cm_detected", "cm_bob", "cm_alice", "cm_correlated")
    arrays = {name: np.empty(n, dtype=np.int8) for name in names}
    if n == 0:
        return arrays

    init = np.array(init_amps, dtype=np.complex128, order="C", copy=True)
    if init.shape != (18,):
        raise QdkdError(f"initial state must have 18 amplitudes, got {init.shape}")
    mats_py = [np.array(mm, dtype=np.complex128, order="C", copy=True)
               for mm in (z, x, swap, v, vd, inj0, inj1)]
    for mm in mats_py:
        if mm.shape != (18, 18):
            raise QdkdError(f"operator matrix must be 18x18, got {mm.shape}")

    cdef double complex[::1] init_mv = init
    cdef double complex[:, ::1] z_mv = mats_py[0]
    cdef double complex[:, ::1] x_mv = mats_py[1]
    cdef double complex[:, ::1] sw_mv = mats_py[2]
    cdef double complex[:, ::1] v_mv = mats_py[3]
    cdef double complex[:, ::1] vd_mv = mats_py[4]
    cdef double complex[:, ::1] i0_mv = mats_py[5]
    cdef double complex[:, ::1] i1_mv = mats_py[6]

    cdef Mats mats
    mats.z = &z_mv[0, 0]
    mats.x = &x_mv[0, 0]
    mats.sw = &sw_mv[0, 0]
    mats.v = &v_mv[0, 0]
    mats.vd = &vd_mv[0, 0]
    mats.inj0 = &i0_mv[0, 0]
    mats.inj1 = &i1_mv[0, 0]

    cdef int8_t[::1] mode_mv = arrays["mode"]
    cdef int8_t[::1] j_mv = arrays["j"]
    cdef int8_t[::1] k_mv = arrays["k"]
    cdef int8_t[::1] m_mv = arrays["m"]
    cdef int8_t[::1] kva_mv = arrays["k_view_a"]
    cdef int8_t[::1] jvb_mv = arrays["j_view_b"]
    cdef int8_t[::1] evej_mv = arrays["eve_j"]
    cdef int8_t[::1] evek_mv = arrays["eve_k"]
    cdef int8_t[::1] branch_mv = arrays["eve_branch"]
    cdef int8_t[::1] cmdet_mv = arrays["cm_detected"]
    cdef int8_t[::1] cmbob_mv = arrays["cm_bob"]
    cdef int8_t[::1] cmali_mv = arrays["cm_alice"]
    cdef int8_t[::1] cmcor_mv = arrays["cm_correlated"]

    cdef Cols out
    out.mode = &mode_mv[0]
    out.j = &j_mv[0]
    out.k = &k_mv[0]
    out.m = &m_mv[0]
    out.kva = &kva_mv[0]
    out.jvb = &jvb_mv[0]
    out.evej = &evej_mv[0]
    out.evek = &evek_mv[0]
    out.branch = &branch_mv[0]
    out.cmdet = &cmdet_mv[0]
    out.cmbob = &cmbob_mv[0]
    out.cmali = &cmali_mv[0]
    out.cmcor = &cmcor_mv[0]

    cdef bint err = False
    cdef Py_ssize_t i
    cdef uint64_t seed
    with nogil:
        for i in range(n):
            seed = _mix64(master + GOLDEN * (<uint64_t>(first + i) + 1))
            _one_round(knd, p, epsilon, seed, cm_probability, transmission,
                       &init_mv[0], &mats, &out, i, &err)
            if err:
                break
    if err:
        raise QdkdError("measurement collapsed onto a zero-probability branch")
    return arrays
