"""Scaled lattice differences and the continuum fractional Laplacian."""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from ..errors import AccuracyError
from ..model_core import normalize_kernel
from .testfunctions import CosineMode


def discrete_ops(H, n: int, x, y, alpha: float):
    """The four scaled differences of ``H`` at lattice site ``x`` and jump ``y``.

    Returns ``(Delta_{x,y} H, nabla_x H, d_x H, d_{x,y} H)`` with
    ``N = n**(1/alpha)``:

    * ``Delta = H((x+y)/N) + H((x-y)/N) - 2 H(x/N)``
    * ``nabla = N/2 (H((x+1)/N) - H((x-1)/N))``
    * ``d_x = N (H((x+1)/N) - H(x/N))``
    * ``d_{x,y} = H((x+y)/N) - H(x/N)``
    """
    N = float(n) ** (1.0 / alpha)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h0 = H(x / N)
    hp = H((x + y) / N)
    hm = H((x - y) / N)
    lap = hp + hm - 2.0 * h0
    grad = 0.5 * N * (H((x + 1) / N) - H((x - 1) / N))
    fwd = N * (H((x + 1) / N) - h0)
    dxy = hp - h0
    return lap, grad, fwd, dxy


# ---------------------------------------------------------------------------


def _cos_tail(alpha: float, a: float) -> tuple[float, float]:
    """``int_a^inf cos(u) u^{-1-alpha} du`` after two integrations by parts.

    The remaining integrand decays like ``u^{-3-alpha}``, which the
    Fourier-weighted rule handles for every ``alpha`` in ``(0, 2)``.
    """
    # QAWF misbehaves when the first cycle starts near the singular end; take [a, 2 pi] directly
    b = max(a, 2.0 * math.pi)
    rest, err = quad(lambda u: u ** (-3.0 - alpha), b, np.inf, weight="cos", wvar=1.0, epsabs=1e-13, limlst=200)
    if b > a:
        head, e_head = quad(lambda u: math.cos(u) * u ** (-3.0 - alpha), a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
        rest, err = rest + head, err + e_head
    val = -math.sin(a) * a ** (-1.0 - alpha) + (1.0 + alpha) * (math.cos(a) * a ** (-2.0 - alpha) - (2.0 + alpha) * rest)
    return val, (1.0 + alpha) * (2.0 + alpha) * err


@lru_cache(maxsize=None)
def C_alpha(alpha: float) -> float:
    """``C(alpha) = int_R (1 - cos u) |u|^{-1-alpha} du`` by quadrature.

    ``[0, 1]`` uses the algebraic weight ``u^{1-alpha}`` on the smooth factor
    ``(1 - cos u)/u^2``; the oscillatory tail uses a Fourier-weighted rule.
    """
    def smooth(u):
        # 2 sin^2(u/2) avoids the cancellation in 1 - cos u
        if u == 0.0:
            return 0.5
        h = math.sin(0.5 * u)
        return 2.0 * h * h / (u * u)

    head, e1 = quad(smooth, 0.0, 1.0, weight="alg", wvar=(1.0 - alpha, 0.0), epsabs=1e-14, epsrel=1e-13, limit=200)
    cos_tail, e2 = _cos_tail(alpha, 1.0)
    val = 2.0 * (head + 1.0 / alpha - cos_tail)
    if e1 + e2 > 1e-10:
        raise AccuracyError(f"C(alpha) quadrature error {e1 + e2:.3g}")
    return val


def _second_diff_over_y2(H, x, y):
    if y < 1e-3:
        # Taylor: H''(x) + H''''(x) y^2 / 12 + O(y^4)
        return float(H.deriv(x, 2) + H.deriv(x, 4) * y * y / 12.0)
    return float((H(x + y) + H(x - y) - 2.0 * H(x)) / (y * y))


def frac_laplacian(H, x: float, alpha: float, c_alpha: float | None = None, tol: float = 1e-8) -> float:
    """``Delta^{alpha/2} H(x) = c_alpha int_0^inf [H(x+y) + H(x-y) - 2H(x)] y^{-1-alpha} dy``.

    The near part ``[0, 1]`` carries the algebraic weight ``y^{1-alpha}`` on
    the bounded second difference over ``y^2``; the far part is integrated
    over the decay window of ``H`` (or with a cosine weight for Fourier modes).
    """
    c = normalize_kernel(alpha) if c_alpha is None else c_alpha
    x = float(x)
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            near, e_near = quad(
                lambda y: _second_diff_over_y2(H, x, y), 0.0, 1.0,
                weight="alg", wvar=(1.0 - alpha, 0.0), epsabs=tol / 10, epsrel=1e-12, limit=200,
            )
            if isinstance(H, CosineMode):
                # H(x+y) + H(x-y) = 2 cos(kx + phase) cos(ky)
                k = abs(H.freq)
                if k == 0:
                    far, e_far = 2.0 * float(H(x)) / alpha, 0.0
                else:
                    # int_1^inf cos(ky) y^{-1-alpha} dy = k^alpha int_k^inf cos(u) u^{-1-alpha} du
                    osc, e_far = _cos_tail(alpha, k)
                    far = 2.0 * float(H(x)) * k**alpha * osc
                    e_far *= k**alpha
            else:
                R = H.cutoff if math.isfinite(H.cutoff) else 50.0
                ymax = max(2.0, abs(x - H.center) + R)
                f = lambda y: float(H(x + y) + H(x - y)) * y ** (-1.0 - alpha)  # noqa: E731
                far, e_far = quad(f, 1.0, ymax, epsabs=tol / 10, epsrel=1e-12, limit=400)
                if not math.isfinite(H.cutoff):
                    tail, e_tail = quad(f, ymax, np.inf, epsabs=tol / 10, limit=400)
                    far += tail
                    e_far += e_tail
        except IntegrationWarning as exc:
            raise AccuracyError(f"fractional Laplacian quadrature failed at x={x}: {exc}") from exc
    if e_near + e_far > tol:
        raise AccuracyError(f"fractional Laplacian error estimate {e_near + e_far:.3g} exceeds {tol}")
    return c * (near + far - 2.0 * float(H(x)) / alpha)


def fourier_symbol(alpha: float, k, c_alpha: float | None = None):
    """``lambda(k) = -c_alpha C(alpha) |k|^alpha``."""
    c = normalize_kernel(alpha) if c_alpha is None else c_alpha
    return -c * C_alpha(alpha) * np.abs(np.asarray(k, dtype=float)) ** alpha


def _shift_energy(H, y: float, span: float) -> float:
    """``int (H(x+y) - H(x))^2 dx`` over the decay window of ``H``."""
    lo, hi = -span - y, span
    return quad(lambda x: float(H(x + y) - H(x)) ** 2, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400)[0]


def quadratic_energy(H, alpha: float, c_alpha: float | None = None) -> float:
    """``E_quad(H) = 1/2 int int s(y) (H(x+y) - H(x))^2 dy dx`` with ``s(y) = c_alpha |y|^{-1-alpha}``.

    Nested quadrature in direct space: near ``y = 0`` the inner integral is
    ``O(y^2)``, so ``[0, 1]`` uses the algebraic weight ``y^{1-alpha}``; for
    large ``y`` it tends to ``2 int H^2``, integrated analytically.
    """
    c = normalize_kernel(alpha) if c_alpha is None else c_alpha
    R = H.cutoff if math.isfinite(getattr(H, "cutoff", math.inf)) else 50.0
    span = abs(getattr(H, "center", 0.0)) + R
    norm2 = quad(lambda x: float(H(x)) ** 2, -span, span, epsabs=1e-14, epsrel=1e-12, limit=400)[0]

    def near(y):
        if y < 1e-4:
            return quad(lambda x: float(H.deriv(x, 1)) ** 2, -span, span, epsabs=1e-14, limit=400)[0]
        return _shift_energy(H, y, span) / (y * y)

    a, _ = quad(near, 0.0, 1.0, weight="alg", wvar=(1.0 - alpha, 0.0), epsabs=1e-11, epsrel=1e-10, limit=200)
    ymax = 2.0 * span + 1.0
    b, _ = quad(lambda y: _shift_energy(H, y, span) * y ** (-1.0 - alpha), 1.0, ymax, epsabs=1e-11, epsrel=1e-10,
                limit=400)
    tail = 2.0 * norm2 * ymax ** (-alpha) / alpha
    # both signs of y contribute equally; the 1/2 cancels the factor 2
    return float(c * (a + b + tail))
