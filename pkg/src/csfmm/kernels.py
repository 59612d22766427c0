"""Interaction kernels on the unit sphere.

All kernels depend on the pair ``(x, y)`` through ``1 - x.y`` (and ``x × y``
for Biot-Savart).  The hot loops use ``d = |x - y|**2 / 2``, which equals
``1 - x.y`` on the sphere but keeps full relative precision for close pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit

from .errors import DomainError, SingularityError, UnknownKernelError

INV_4PI = 1.0 / (4.0 * math.pi)
PI2_6 = math.pi**2 / 6.0
COINCIDENCE_TOL = 1e-14

LAPLACE, BIHARMONIC, BIOT_SAVART, SAL = 0, 1, 2, 3
KERNEL_NAMES = {"laplace": LAPLACE, "biharmonic": BIHARMONIC, "biot_savart": BIOT_SAVART, "sal": SAL}

RHO_SEAWATER_OVER_EARTH = 1025.0 / 5517.0


SAL_VARIANTS = ("series", "chord")


@dataclass(frozen=True)
class SalParams:
    """Load-Love-number fit ``k'_n ~ a1/n``, ``h'_n ~ b0 + b1/n`` and the
    seawater/Earth density ratio.

    ``variant`` selects the closed form.  ``"series"`` (default) sums the
    fitted Legendre series exactly::

        c * ((1 - b0) / g - (a1 - b1) * ln(s * (1 + s))),   s = g / 2

    with ``g = sqrt(2 (1 - x.y))``.  ``"chord"`` uses ``ln(g * (1 + g))`` in
    the logarithmic term instead, which does not match the series.
    """

    a1: float = -2.7
    b0: float = -6.21196
    b1: float = 6.1
    rho_ratio: float = RHO_SEAWATER_OVER_EARTH
    variant: str = "series"

    def __post_init__(self):
        if self.variant not in SAL_VARIANTS:
            raise ValueError(f"SAL variant must be one of {SAL_VARIANTS}, got {self.variant!r}")

    @property
    def log_scale(self) -> float:
        return 0.5 if self.variant == "series" else 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.b0, self.b1, self.rho_ratio, self.log_scale], dtype=float)


@dataclass(frozen=True)
class Kernel:
    name: str
    kind: int
    out_dim: int
    singular_at_coincidence: bool
    params: SalParams | None = None

    def param_array(self) -> np.ndarray:
        return (self.params or SalParams()).as_array()

    def __call__(self, x, y):
        return evaluate(self, x, y)


def get_kernel(name: str | Kernel, sal_params: SalParams | None = None) -> Kernel:
    if isinstance(name, Kernel):
        return name
    key = str(name).strip().lower().replace("-", "_")
    if key not in KERNEL_NAMES:
        raise UnknownKernelError(f"unknown kernel {name!r}; choose from {', '.join(KERNEL_NAMES)}")
    kind = KERNEL_NAMES[key]
    return Kernel(
        name=key,
        kind=kind,
        out_dim=3 if kind == BIOT_SAVART else 1,
        singular_at_coincidence=kind != BIHARMONIC,
        params=(sal_params or SalParams()) if kind == SAL else None,
    )


# ---------------------------------------------------------------------------
# dilogarithm


def _bernoulli_series_coefficients(count: int) -> np.ndarray:
    # B_{2k} / (2k+1)! for k = 1..count, via the Akiyama-Tanigawa algorithm
    m_max = 2 * count
    a = [Fraction(0)] * (m_max + 1)
    bern = []
    for m in range(m_max + 1):
        a[m] = Fraction(1, m + 1)
        for j in range(m, 0, -1):
            a[j - 1] = j * (a[j - 1] - a[j])
        bern.append(a[0])
    return np.array([float(bern[2 * k] / math.factorial(2 * k + 1)) for k in range(1, count + 1)])


_LI2_COEF = _bernoulli_series_coefficients(15)


@njit(cache=True)
def _li2_series(u):
    # Li2(1 - exp(-u)) = u - u^2/4 + sum_k B_2k u^(2k+1) / (2k+1)!,  0 <= u <= ln 2
    u2 = u * u
    s = 0.0
    p = u * u2
    for k in range(_LI2_COEF.shape[0]):
        t = _LI2_COEF[k] * p
        s += t
        if abs(t) < 1e-18 * abs(u):
            break
        p *= u2
    return u - 0.25 * u2 + s


@njit(cache=True)
def li2_complement(x, one_minus_x):
    """Li2(x) for 0 <= x <= 1, given ``1 - x`` computed accurately by the caller."""
    if x <= 0.5:
        return _li2_series(-math.log1p(-x)) if x > 0.0 else 0.0
    if one_minus_x <= 0.0:
        return PI2_6
    # reflection Li2(x) = pi^2/6 - ln(x) ln(1-x) - Li2(1-x)
    return PI2_6 - math.log(x) * math.log(one_minus_x) - _li2_series(-math.log(x))


@njit(cache=True)
def li2(x):
    """Real dilogarithm for x <= 1 (NaN above 1)."""
    if x > 1.0:
        return math.nan
    if x >= 0.0:
        return li2_complement(x, 1.0 - x)
    if x >= -1.0:
        return _li2_landen(x)
    # inversion: Li2(x) = -pi^2/6 - ln(-x)^2 / 2 - Li2(1/x)
    l = math.log(-x)
    return -PI2_6 - 0.5 * l * l - _li2_landen(1.0 / x)


@njit(cache=True)
def _li2_landen(x):
    # -1 <= x < 0: Li2(x) = -Li2(x/(x-1)) - ln(1-x)^2 / 2, with x/(x-1) in (0, 1/2]
    l = math.log1p(-x)
    return -_li2_series(l) - 0.5 * l * l


def dilog(x):
    """``dilog(x) = -int_0^x ln(1-t)/t dt`` for real ``x <= 1``."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr > 1.0):
        raise DomainError("dilog is real-valued only for x <= 1")
    out = _li2_array(arr.ravel()).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


@njit(cache=True)
def _li2_array(x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = li2(x[i])
    return out


# ---------------------------------------------------------------------------
# scalar kernels for the summation loops


@njit(cache=True)
def kernel_eval(kind, x0, x1, x2, y0, y1, y2, prm):
    """Kernel value at one pair; scalar kernels fill only the first slot."""
    dx = x0 - y0
    dy = x1 - y1
    dz = x2 - y2
    d = 0.5 * (dx * dx + dy * dy + dz * dz)
    if kind == LAPLACE:
        return -INV_4PI * math.log(d), 0.0, 0.0
    if kind == BIHARMONIC:
        return INV_4PI * li2_complement(1.0 - 0.5 * d, 0.5 * d), 0.0, 0.0
    if kind == BIOT_SAVART:
        c = -INV_4PI / d
        return c * (x1 * y2 - x2 * y1), c * (x2 * y0 - x0 * y2), c * (x0 * y1 - x1 * y0)
    # SAL closed form
    a1 = prm[0]
    b0 = prm[1]
    b1 = prm[2]
    g = math.sqrt(2.0 * d)
    s = prm[4] * g
    v = 3.0 * prm[3] * INV_4PI * ((1.0 - b0) / g - (a1 - b1) * math.log(s * (1.0 + s)))
    return v, 0.0, 0.0


@njit(cache=True)
def pair_distance(x0, x1, x2, y0, y1, y2):
    dx = x0 - y0
    dy = x1 - y1
    dz = x2 - y2
    return 0.5 * (dx * dx + dy * dy + dz * dz)


@njit(cache=True)
def _eval_pairs(kind, x, y, prm, out):
    for i in range(x.shape[0]):
        v0, v1, v2 = kernel_eval(kind, x[i, 0], x[i, 1], x[i, 2], y[i, 0], y[i, 1], y[i, 2], prm)
        out[i, 0] = v0
        out[i, 1] = v1
        out[i, 2] = v2


def evaluate(kernel: Kernel | str, x, y):
    """Vectorised kernel evaluation with broadcasting over leading axes.

    Returns shape ``broadcast.shape`` for scalar kernels and
    ``broadcast.shape + (3,)`` for Biot-Savart.  Raises
    :class:`SingularityError` for coincident pairs of a singular kernel.
    """
    kernel = get_kernel(kernel)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    shape = x.shape[:-1]
    xf = np.ascontiguousarray(x.reshape(-1, 3))
    yf = np.ascontiguousarray(y.reshape(-1, 3))
    if kernel.singular_at_coincidence:
        d = 0.5 * np.sum((xf - yf) ** 2, axis=1)
        if np.any(d < COINCIDENCE_TOL):
            raise SingularityError(f"{kernel.name} kernel is singular at coincident points")
    out = np.empty((len(xf), 3))
    _eval_pairs(kernel.kind, xf, yf, kernel.param_array(), out)
    if kernel.out_dim == 1:
        res = out[:, 0].reshape(shape)
        return float(res) if res.ndim == 0 else res
    return out.reshape(shape + (3,))


def eval_laplace(x, y):
    return evaluate("laplace", x, y)


def eval_biharmonic(x, y):
    return evaluate("biharmonic", x, y)


def eval_biot_savart(x, y):
    return evaluate("biot_savart", x, y)


def eval_sal(x, y, params: SalParams | None = None):
    return evaluate(get_kernel("sal", params), x, y)


def sal_closed_form(t, params: SalParams | None = None):
    """SAL kernel as a function of ``t = x.y``."""
    p = params or SalParams()
    g = np.sqrt(2.0 * (1.0 - np.asarray(t, dtype=float)))
    s = p.log_scale * g
    return 3.0 * p.rho_ratio * INV_4PI * ((1.0 - p.b0) / g - (p.a1 - p.b1) * np.log(s * (1.0 + s)))


def sal_legendre_partial_sums(t: float, terms: int, params: SalParams | None = None) -> np.ndarray:
    """Partial sums ``S_0..S_terms`` of the fitted-LLN Legendre series at ``t``.

    The ``n = 0`` term is ``(1 - b0) P_0``; for ``n >= 1`` the coefficient is
    ``(1 - b0) + (a1 - b1) / n``.  Used as an independent check of the closed
    form; the plain partial sums oscillate with amplitude ``O(terms**-0.5)``,
    so callers typically average them (Cesaro mean).
    """
    p = params or SalParams()
    return (3.0 * p.rho_ratio * INV_4PI) * _legendre_partial_sums(float(t), int(terms), 1.0 - p.b0, p.a1 - p.b1)


@njit(cache=True)
def _legendre_partial_sums(t, terms, c0, c1):
    out = np.empty(terms + 1)
    p_prev = 1.0
    p_cur = t
    acc = c0
    out[0] = acc
    for n in range(1, terms + 1):
        acc += (c0 + c1 / n) * p_cur
        out[n] = acc
        p_prev, p_cur = p_cur, ((2 * n + 1) * t * p_cur - n * p_prev) / (n + 1)
    return out
