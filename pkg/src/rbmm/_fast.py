"""Compiled pairwise summation used by the time steppers.

Mirrors the vectorized formulas in ``rbmm.kernels``; the test suite checks the
two against each other.
"""

import math

import numba as nb
import numpy as np

KERNEL_CODES = {
    "BiotSavart": 0,
    "KellerSegel": 1,
    "SecondOrderSmooth": 2,
    "Morse": 3,
    "SingularDemo": 4,
    "K4Table": 5,
    "K5Table": 6,
    "K6Table": 7,
    "Steepness": 8,
    "Zero": 9,
}
SINGULAR_CODES = (0, 1, 4, 5, 6, 7)

# status codes
OK = 0
SINGULAR = 1
NONFINITE = 2


def pack_params(spec):
    """Flatten kernel parameters into the fixed layout read by ``_kernel``."""
    p = spec.params
    out = np.zeros(5)
    if spec.id == "KellerSegel":
        out[0] = p["C"]
    elif spec.id == "Morse":
        out[:4] = p["C_r"], p["l_r"], p["C_a"], p["l_a"]
    elif spec.id == "Steepness":
        out[0] = p["alpha"]
    return out


@nb.njit(cache=True, inline="always")
def _kernel(code, z0, z1, prm, delta):
    r2 = z0 * z0 + z1 * z1
    if r2 == 0.0 and code != 8 and code != 2 and code != 9:
        # zero at the origin for Morse and for every regularized kernel
        return 0.0, 0.0
    if code == 0:
        k0 = -z1 / r2
        k1 = z0 / r2
    elif code == 1:
        k0 = prm[0] * z0 / r2
        k1 = prm[0] * z1 / r2
    elif code == 2:
        k0 = z0 / (1.0 + r2)
        k1 = z1 / (1.0 + r2)
    elif code == 3:
        r = math.sqrt(r2)
        mag = prm[0] * math.exp(-r / prm[1]) - prm[2] * math.exp(-r / prm[3])
        k0 = mag * z0 / r
        k1 = mag * z1 / r
    elif code == 4:
        k0 = z0 / math.cosh(r2)
        k1 = math.cosh(z1) / r2
    elif code == 5:
        k0 = z0 / math.cosh(r2)
        k1 = math.exp(-z1 * z1) / math.sqrt(r2)
    elif code == 6:
        k0 = math.sinh(z0) / r2
        k1 = math.cosh(z1) / r2
    elif code == 7:
        r = math.sqrt(r2)
        mag = math.log(abs(-math.expm1(r2))) / (math.tan(r2) / 10.0 + 2.0 * math.pi)
        k0 = mag * z0 / r
        k1 = mag * z1 / r
    elif code == 8:
        a = prm[0]
        s = z0 - 1.0
        if s < -a:
            k0 = -1.0 / s
        elif s > a:
            k0 = 1.0 / s
        else:
            k0 = abs(s) / (a * a)
        k1 = 0.0
    else:
        k0 = 0.0
        k1 = 0.0
    if delta > 0.0:
        f = r2 / (r2 + delta * delta)
        k0 = k0 * f
        k1 = k1 * f
    return k0, k1


@nb.njit(cache=True)
def group_sums(x, v, groups, code, prm, delta, order, scale, out, bad):
    """Sum the kernel over each group, in index order, into ``out``.

    ``bad`` receives ``(status, i, j)`` for the first failing pair.
    """
    g, m = groups.shape
    d = x.shape[1]
    check_origin = delta == 0.0 and (code == 0 or code == 1 or code == 4
                                     or code == 5 or code == 6 or code == 7)
    for q in range(g):
        for a in range(m):
            i = groups[q, a]
            acc0 = 0.0
            acc1 = 0.0
            xi0 = x[i, 0]
            xi1 = x[i, 1] if d > 1 else 0.0
            for b in range(m):
                if b == a:
                    continue
                j = groups[q, b]
                z0 = xi0 - x[j, 0]
                z1 = xi1 - x[j, 1] if d > 1 else 0.0
                if check_origin and z0 == 0.0 and z1 == 0.0:
                    bad[0] = SINGULAR
                    bad[1] = i
                    bad[2] = j
                    return
                k0, k1 = _kernel(code, z0, z1, prm, delta)
                if order == 1:
                    acc0 += k0
                    acc1 += k1
                else:
                    w = math.sqrt(k0 * k0 + k1 * k1)
                    acc0 += w * (v[j, 0] - v[i, 0])
                    if d > 1:
                        acc1 += w * (v[j, 1] - v[i, 1])
            acc0 *= scale
            acc1 *= scale
            if not (math.isfinite(acc0) and math.isfinite(acc1)):
                bad[0] = NONFINITE
                bad[1] = i
                bad[2] = -1
                return
            out[i, 0] = acc0
            if d > 1:
                out[i, 1] = acc1
