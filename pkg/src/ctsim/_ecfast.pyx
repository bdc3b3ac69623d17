# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled secp256k1 point arithmetic.

Same module-level API as ``_ecpure`` (affine int pairs in, affine int pairs
or None out), but the field arithmetic runs on 4x64-bit limbs with 128-bit
intermediates instead of Python bignums. Reduction exploits the pseudo-
Mersenne prime p = 2^256 - 0x1000003D1.
"""

BACKEND_NAME = "fast"

ctypedef unsigned long long u64

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"

cdef u64 _MC = 0x1000003D1ULL  # 2^256 - p

# p and p-2, little-endian limbs
cdef u64 _P[4]
cdef u64 _PM2[4]
_P[0] = 0xFFFFFFFEFFFFFC2FULL
_P[1] = _P[2] = _P[3] = 0xFFFFFFFFFFFFFFFFULL
_PM2[0] = 0xFFFFFFFEFFFFFC2DULL
_PM2[1] = _PM2[2] = _PM2[3] = 0xFFFFFFFFFFFFFFFFULL

# Base point
GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
P = 2**256 - 2**32 - 977


# ---------------------------------------------------------------------------
# Field element helpers (values always kept fully reduced mod p)
# ---------------------------------------------------------------------------

cdef inline void fe_set(u64* r, const u64* a) noexcept nogil:
    r[0] = a[0]; r[1] = a[1]; r[2] = a[2]; r[3] = a[3]

cdef inline bint fe_is_zero(const u64* a) noexcept nogil:
    return (a[0] | a[1] | a[2] | a[3]) == 0

cdef inline bint fe_eq(const u64* a, const u64* b) noexcept nogil:
    return a[0] == b[0] and a[1] == b[1] and a[2] == b[2] and a[3] == b[3]

cdef inline bint fe_geq_p(const u64* a) noexcept nogil:
    cdef int i
    for i in range(3, -1, -1):
        if a[i] > _P[i]:
            return True
        if a[i] < _P[i]:
            return False
    return True

cdef inline void fe_sub_p(u64* r) noexcept nogil:
    # r -= p, assuming r >= p (mod 2^256 borrow arithmetic)
    cdef u128 t
    cdef u64 borrow = 0
    cdef int i
    for i in range(4):
        t = (<u128> r[i]) - _P[i] - borrow
        r[i] = <u64> t
        borrow = 1 if (t >> 64) else 0

cdef inline void fe_add(u64* r, const u64* a, const u64* b) noexcept nogil:
    cdef u128 t = 0
    cdef u64 carry = 0
    cdef int i
    for i in range(4):
        t = (<u128> a[i]) + b[i] + carry
        r[i] = <u64> t
        carry = <u64> (t >> 64)
    if carry or fe_geq_p(r):
        fe_sub_p(r)

cdef inline void fe_sub(u64* r, const u64* a, const u64* b) noexcept nogil:
    cdef u128 t
    cdef u64 borrow = 0, carry = 0
    cdef int i
    for i in range(4):
        t = (<u128> a[i]) - b[i] - borrow
        r[i] = <u64> t
        borrow = 1 if (t >> 64) else 0
    if borrow:
        for i in range(4):
            t = (<u128> r[i]) + _P[i] + carry
            r[i] = <u64> t
            carry = <u64> (t >> 64)

cdef void fe_mul(u64* r, const u64* a, const u64* b) noexcept nogil:
    cdef u64 m[8]
    cdef u128 t
    cdef u64 carry, overflow, cc
    cdef int i, j
    for i in range(8):
        m[i] = 0
    for i in range(4):
        carry = 0
        for j in range(4):
            t = (<u128> a[i]) * b[j] + m[i + j] + carry
            m[i + j] = <u64> t
            carry = <u64> (t >> 64)
        m[i + 4] = carry
    # fold the high 256 bits: hi * 2^256 == hi * MC (mod p)
    carry = 0
    for i in range(4):
        t = (<u128> m[4 + i]) * _MC + m[i] + carry
        r[i] = <u64> t
        carry = <u64> (t >> 64)
    overflow = carry
    while overflow:
        t = (<u128> overflow) * _MC + r[0]
        r[0] = <u64> t
        cc = <u64> (t >> 64)
        i = 1
        while cc and i < 4:
            t = (<u128> r[i]) + cc
            r[i] = <u64> t
            cc = <u64> (t >> 64)
            i += 1
        overflow = cc
    if fe_geq_p(r):
        fe_sub_p(r)

cdef void fe_inv(u64* r, const u64* a) noexcept nogil:
    # Fermat: a^(p-2) mod p, square-and-multiply over the fixed exponent.
    cdef u64 acc[4]
    cdef u64 base[4]
    cdef int limb, bit
    cdef bint started = False
    fe_set(base, a)
    acc[0] = 1; acc[1] = 0; acc[2] = 0; acc[3] = 0
    for limb in range(3, -1, -1):
        for bit in range(63, -1, -1):
            if started:
                fe_mul(acc, acc, acc)
            if (_PM2[limb] >> bit) & 1:
                if started:
                    fe_mul(acc, acc, base)
                else:
                    fe_set(acc, base)
                    started = True
    fe_set(r, acc)


# ---------------------------------------------------------------------------
# Jacobian point arithmetic (a = 0 curve)
# ---------------------------------------------------------------------------

cdef struct JP:
    u64 x[4]
    u64 y[4]
    u64 z[4]

cdef inline void jp_set_inf(JP* p) noexcept nogil:
    cdef int i
    for i in range(4):
        p.x[i] = 0; p.y[i] = 0; p.z[i] = 0
    p.y[0] = 1

cdef void jp_double(JP* r, const JP* p) noexcept nogil:
    cdef u64 a[4]
    cdef u64 b[4]
    cdef u64 c[4]
    cdef u64 t[4]
    if fe_is_zero(p.z) or fe_is_zero(p.y):
        jp_set_inf(r)
        return
    fe_mul(a, p.y, p.y)            # A = y^2
    fe_mul(b, p.x, a)              # x*A
    fe_add(b, b, b)
    fe_add(b, b, b)                # B = 4*x*A
    fe_mul(c, p.x, p.x)
    fe_add(t, c, c)
    fe_add(c, t, c)                # C = 3*x^2
    fe_mul(r.x, c, c)
    fe_sub(r.x, r.x, b)
    fe_sub(r.x, r.x, b)            # x3 = C^2 - 2B
    fe_mul(t, p.y, p.z)
    fe_add(r.z, t, t)              # z3 = 2*y*z
    fe_mul(a, a, a)                # A^2
    fe_add(a, a, a)
    fe_add(a, a, a)
    fe_add(a, a, a)                # 8*A^2
    fe_sub(t, b, r.x)
    fe_mul(t, c, t)
    fe_sub(r.y, t, a)              # y3 = C*(B - x3) - 8*A^2

cdef void jp_add_affine(JP* r, const JP* p, const u64* ax, const u64* ay) noexcept nogil:
    cdef u64 z1z1[4]
    cdef u64 u2[4]
    cdef u64 s2[4]
    cdef u64 h[4]
    cdef u64 rr[4]
    cdef u64 h2[4]
    cdef u64 h3[4]
    cdef u64 v[4]
    cdef u64 t[4]
    if fe_is_zero(p.z):
        fe_set(r.x, ax)
        fe_set(r.y, ay)
        r.z[0] = 1; r.z[1] = 0; r.z[2] = 0; r.z[3] = 0
        return
    fe_mul(z1z1, p.z, p.z)
    fe_mul(u2, ax, z1z1)
    fe_mul(s2, ay, z1z1)
    fe_mul(s2, s2, p.z)
    if fe_eq(u2, p.x):
        if not fe_eq(s2, p.y):
            jp_set_inf(r)
            return
        jp_double(r, p)
        return
    fe_sub(h, u2, p.x)
    fe_sub(rr, s2, p.y)
    fe_mul(h2, h, h)
    fe_mul(h3, h2, h)
    fe_mul(v, p.x, h2)
    fe_mul(r.x, rr, rr)
    fe_sub(r.x, r.x, h3)
    fe_sub(r.x, r.x, v)
    fe_sub(r.x, r.x, v)            # x3 = r^2 - h3 - 2v
    fe_sub(t, v, r.x)
    fe_mul(t, rr, t)
    fe_mul(h3, p.y, h3)
    fe_sub(r.y, t, h3)             # y3 = r*(v - x3) - y1*h3
    fe_mul(r.z, h, p.z)


# ---------------------------------------------------------------------------
# Conversions and Python-facing entry points
# ---------------------------------------------------------------------------

cdef void fe_from_int(u64* r, v):
    cdef int i
    for i in range(4):
        r[i] = <u64> (v & 0xFFFFFFFFFFFFFFFF)
        v >>= 64

cdef object fe_to_int(const u64* a):
    return (int(a[3]) << 192) | (int(a[2]) << 128) | (int(a[1]) << 64) | int(a[0])

cdef object jp_to_affine(JP* p):
    cdef u64 zi[4]
    cdef u64 zi2[4]
    cdef u64 ox[4]
    cdef u64 oy[4]
    if fe_is_zero(p.z):
        return None
    fe_inv(zi, p.z)
    fe_mul(zi2, zi, zi)
    fe_mul(ox, p.x, zi2)
    fe_mul(zi2, zi2, zi)
    fe_mul(oy, p.y, zi2)
    return (fe_to_int(ox), fe_to_int(oy))

cdef void _ladder(JP* acc, object k, const u64* ax, const u64* ay):
    cdef u64 kl[4]
    cdef int limb, bit
    fe_from_int(kl, k)  # scalar fits 256 bits; field limbs reused as plain storage
    jp_set_inf(acc)
    for limb in range(3, -1, -1):
        for bit in range(63, -1, -1):
            jp_double(acc, acc)
            if (kl[limb] >> bit) & 1:
                jp_add_affine(acc, acc, ax, ay)


def scalar_mult(k, px, py):
    """k * (px, py) in affine form, or None for the point at infinity."""
    cdef JP acc
    cdef u64 ax[4]
    cdef u64 ay[4]
    k = k % N
    if k == 0:
        return None
    fe_from_int(ax, px)
    fe_from_int(ay, py)
    _ladder(&acc, k, ax, ay)
    return jp_to_affine(&acc)


def scalar_base_mult(k):
    """k * G in affine form, or None for the point at infinity."""
    return scalar_mult(k, GX, GY)


def add_points(ax, ay, bx, by):
    """Affine point addition; returns None for the point at infinity."""
    cdef JP acc
    cdef u64 fx[4]
    cdef u64 fy[4]
    cdef u64 gx2[4]
    cdef u64 gy2[4]
    fe_from_int(fx, ax)
    fe_from_int(fy, ay)
    fe_from_int(gx2, bx)
    fe_from_int(gy2, by)
    fe_set(acc.x, fx)
    fe_set(acc.y, fy)
    acc.z[0] = 1; acc.z[1] = 0; acc.z[2] = 0; acc.z[3] = 0
    jp_add_affine(&acc, &acc, gx2, gy2)
    return jp_to_affine(&acc)


def shamir_mult(u1, u2, px, py):
    """u1*G + u2*(px, py) via an interleaved double-and-add ladder."""
    cdef JP acc
    cdef u64 k1[4]
    cdef u64 k2[4]
    cdef u64 gx[4]
    cdef u64 gy[4]
    cdef u64 ax[4]
    cdef u64 ay[4]
    cdef u64 gpx[4]
    cdef u64 gpy[4]
    cdef int limb, bit
    cdef bint b1, b2, have_gp
    u1 = u1 % N
    u2 = u2 % N
    fe_from_int(k1, u1)
    fe_from_int(k2, u2)
    fe_from_int(gx, GX)
    fe_from_int(gy, GY)
    fe_from_int(ax, px)
    fe_from_int(ay, py)
    gp = add_points(GX, GY, px, py)
    have_gp = gp is not None
    if have_gp:
        fe_from_int(gpx, gp[0])
        fe_from_int(gpy, gp[1])
    jp_set_inf(&acc)
    for limb in range(3, -1, -1):
        for bit in range(63, -1, -1):
            jp_double(&acc, &acc)
            b1 = (k1[limb] >> bit) & 1
            b2 = (k2[limb] >> bit) & 1
            if b1 and b2:
                if have_gp:
                    jp_add_affine(&acc, &acc, gpx, gpy)
            elif b1:
                jp_add_affine(&acc, &acc, gx, gy)
            elif b2:
                jp_add_affine(&acc, &acc, ax, ay)
    return jp_to_affine(&acc)


def is_on_curve(x, y):
    if not (0 <= x < P and 0 <= y < P):
        return False
    return (y * y - (x * x * x + 7)) % P == 0
