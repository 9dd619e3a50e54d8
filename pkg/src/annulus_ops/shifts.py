"""Exact weighted bilateral shift models on finitely supported sequences.

The models never materialize a truncated matrix: they act coefficientwise
on sequences supported on a finite index window, so every norm identity
holds to machine precision without truncation artifacts.  Negative powers
use the exact inverse recurrences, never numerical inversion.

Model kinds
-----------
MZT       forward shift with weight -1 into position 0, on the space with
          Gram weights r^{2n}/(1-r^2) for n >= 0 and 1/(1-r^2) for n < 0.
MZT_STAR  its adjoint on the same space.
EG6_T     the backward multiplier shift on the space with Gram weights
          1 + a^2 r^{2n}.
EG6_MZ    the plain forward shift on the EG6 space (the multiplication
          operator whose adjoint EG6_T is).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classes import AnnulusParams, alpha_form
from .core import Operator

__all__ = [
    "WINDOW_DEFAULT",
    "WindowOverflowError",
    "WeightedSeq",
    "ShiftModel",
    "MobiusShiftResult",
    "MisraPair",
    "shift_apply",
    "onb_vector",
    "eg5_defect",
    "eg6_beta_defect",
    "eg6_beta_defect_from_model",
    "mobius_shift_vectors",
    "mobius_closed_forms",
    "hardy_kernel",
    "misra_pair",
]

WINDOW_DEFAULT = (-256, 256)


class WindowOverflowError(RuntimeError):
    """Support would leave the index window.

    Carries ``required_window``, the smallest symmetric window that would
    have accommodated the operation.
    """

    def __init__(self, message: str, required_window: tuple[int, int]):
        super().__init__(message)
        self.required_window = required_window


@dataclass(frozen=True, eq=False)
class WeightedSeq:
    """Finitely supported sequence with a diagonal Gram rule.

    <f, g> = sum_n f_n conj(g_n) gram(n), evaluated exactly over the
    support.
    """

    support: dict
    gram: object  # callable index -> positive weight

    def __post_init__(self):
        clean = {int(n): complex(v) for n, v in self.support.items() if v != 0}
        object.__setattr__(self, "support", clean)

    def indices(self):
        return sorted(self.support)

    def norm_sq(self) -> float:
        return float(
            sum(abs(v) ** 2 * self.gram(n) for n, v in self.support.items())
        )

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def inner(self, other: "WeightedSeq") -> complex:
        total = 0j
        for n, v in self.support.items():
            w = other.support.get(n)
            if w is not None:
                total += v * np.conj(w) * self.gram(n)
        return complex(total)

    def add(self, other: "WeightedSeq") -> "WeightedSeq":
        out = dict(self.support)
        for n, v in other.support.items():
            out[n] = out.get(n, 0j) + v
        return WeightedSeq(out, self.gram)

    def scale(self, c: complex) -> "WeightedSeq":
        return WeightedSeq({n: c * v for n, v in self.support.items()}, self.gram)


def _gram_mzt(r: float):
    one = 1.0 / (1.0 - r * r)

    def gram(n: int) -> float:
        return r ** (2 * n) * one if n >= 0 else one

    return gram


def _gram_eg6(a: float, r: float):
    def gram(n: int) -> float:
        return 1.0 + a * a * r ** (2 * n)

    return gram


@dataclass(frozen=True)
class ShiftModel:
    kind: str
    r: float
    a: float | None = None
    window: tuple[int, int] = WINDOW_DEFAULT

    def __post_init__(self):
        if self.kind not in ("MZT", "MZT_STAR", "EG6_T", "EG6_MZ"):
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if not (0.0 < self.r < 1.0):
            raise ValueError("modulus r must lie in (0,1)")
        if self.kind.startswith("EG6"):
            if self.a is None or self.a <= 0:
                raise ValueError("EG6 models need a positive weight parameter a")
        if self.window[0] >= self.window[1]:
            raise ValueError("window must be a nonempty range")

    def gram(self):
        if self.kind.startswith("EG6"):
            return _gram_eg6(self.a, self.r)
        return _gram_mzt(self.r)

    def zero(self) -> WeightedSeq:
        return WeightedSeq({}, self.gram())

    def basis_delta(self, n: int, value: complex = 1.0) -> WeightedSeq:
        self._check_inside([n])
        return WeightedSeq({n: value}, self.gram())

    def _check_inside(self, indices) -> None:
        lo, hi = self.window
        for n in indices:
            if not (lo + 1 <= n <= hi - 1):
                need = max(abs(n) + 1, abs(lo), abs(hi))
                raise WindowOverflowError(
                    f"index {n} leaves the window [{lo}, {hi}] margin; "
                    f"a window of at least [-{need}, {need}] is required",
                    (-need, need),
                )

    def _step(self, f: WeightedSeq, forward: bool) -> WeightedSeq:
        r2 = self.r * self.r
        out: dict[int, complex] = {}
        if self.kind == "MZT":
            if forward:
                for n, v in f.support.items():
                    t = n + 1
                    out[t] = (-1.0 if t == 0 else 1.0) * v
            else:
                for n, v in f.support.items():
                    t = n - 1
                    out[t] = (-1.0 if t == -1 else 1.0) * v
        elif self.kind == "MZT_STAR":
            if forward:
                for n, v in f.support.items():
                    t = n - 1
                    if t == -1:
                        out[t] = -v
                    elif t >= 0:
                        out[t] = r2 * v
                    else:
                        out[t] = v
            else:
                for n, v in f.support.items():
                    t = n + 1
                    if t == 0:
                        out[t] = -v
                    elif t >= 1:
                        out[t] = v / r2
                    else:
                        out[t] = v
        elif self.kind == "EG6_T":
            gram = self.gram()
            if forward:
                for n, v in f.support.items():
                    t = n - 1
                    out[t] = (gram(n) / gram(t)) * v
            else:
                for n, v in f.support.items():
                    t = n + 1
                    out[t] = (gram(n) / gram(t)) * v
        else:  # EG6_MZ
            if forward:
                for n, v in f.support.items():
                    out[n + 1] = v
            else:
                for n, v in f.support.items():
                    out[n - 1] = v
        self._check_inside(out.keys())
        return WeightedSeq(out, f.gram)


def shift_apply(model: ShiftModel, power: int, f: WeightedSeq) -> WeightedSeq:
    """Apply the model operator raised to an integer power."""
    if power == 0:
        return WeightedSeq(dict(f.support), f.gram)
    forward = power > 0
    out = f
    for _ in range(abs(power)):
        out = model._step(out, forward)
    return out


def onb_vector(model: ShiftModel, n: int) -> WeightedSeq:
    """Orthonormal basis vector w_n of the MZT-family space:
    w_n = e_n r^{-n} sqrt(1-r^2) for n >= 0 and e_n sqrt(1-r^2) for n < 0."""
    if model.kind not in ("MZT", "MZT_STAR"):
        raise ValueError("orthonormal basis vectors are defined for the MZT family")
    root = math.sqrt(1.0 - model.r * model.r)
    coeff = root * model.r ** (-n) if n >= 0 else root
    return model.basis_delta(n, coeff)


def eg5_defect(params: AnnulusParams, s: float) -> float:
    """(1+s^2)||M* f||^2 - ||M*^2 f||^2 - s^2 ||f||^2 for f the unit-weight
    sequence supported at index 1; closed form -s^2 r^2."""
    if not (0.0 < s < 1.0):
        raise ValueError("s must lie in (0,1)")
    model = ShiftModel("MZT_STAR", params.r)
    f = model.basis_delta(1)
    mf = shift_apply(model, 1, f)
    m2f = shift_apply(model, 2, f)
    return (1.0 + s * s) * mf.norm_sq() - m2f.norm_sq() - s * s * f.norm_sq()


def _alpha_weight_ratio(a: float, r: float, n: int, m: int) -> float:
    """(1 + a^2 r^{2n}) / (1 + a^2 r^{2(n-m)})."""
    return (1.0 + a * a * r ** (2 * n)) / (1.0 + a * a * r ** (2 * (n - m)))


def eg6_beta_defect(a: float, params: AnnulusParams) -> float:
    """Second-defect quadratic form of the EG6 shift on the index-1 basis
    vector, via the closed weight-ratio formula."""
    if a <= 0:
        raise ValueError("a must be positive")
    r = params.r
    r2 = r * r
    w = [_alpha_weight_ratio(a, r, 1, m) for m in range(5)]  # w[m] = ratio at power m
    return (
        w[4]
        - 2.0 * (1.0 + r2) * w[3]
        + (1.0 + r2 * r2 + 4.0 * r2) * w[2]
        - 2.0 * r2 * (1.0 + r2) * w[1]
        + r2 * r2
    )


def eg6_beta_defect_from_model(a: float, params: AnnulusParams) -> float:
    """Same quantity computed through the shift action: the beta quadratic
    form on the index-1 basis vector divided by its squared norm."""
    if a <= 0:
        raise ValueError("a must be positive")
    r2 = params.r * params.r
    model = ShiftModel("EG6_T", params.r, a)
    f = model.basis_delta(1)
    norms = [shift_apply(model, m, f).norm_sq() for m in range(5)]
    combo = (
        norms[4]
        - 2.0 * (1.0 + r2) * norms[3]
        + (1.0 + r2 * r2 + 4.0 * r2) * norms[2]
        - 2.0 * r2 * (1.0 + r2) * norms[1]
        + r2 * r2 * norms[0]
    )
    return combo / f.norm_sq()


@dataclass(frozen=True)
class MobiusShiftResult:
    s_w0_normsq: float
    sinv_w0_normsq: float
    defect: float
    terms_used: int


def mobius_shift_vectors(
    params: AnnulusParams, lam0: complex, s: float, tol: float = 1e-10
) -> MobiusShiftResult:
    """Apply S = phi(M)* and its inverse to w_0 by geometric series through
    the shift action, phi being the disk automorphism with parameter lam0.

    Requires |lam0| < r so both series converge; truncation is certified
    by the geometric tail bounds |lam0|^N/(1-|lam0|) and the matching
    (|lam0|/r)-ratio bound for the inverse series.
    """
    lam0 = complex(lam0)
    mod = abs(lam0)
    r = params.r
    if mod >= r:
        raise ValueError(f"need |lam0| < r for convergence, got |lam0|={mod}, r={r}")
    # size the window to the slower of the two geometric series
    q = max(mod, mod / r)
    if q > 0:
        n_max = int(math.log(tol * (1.0 - q) / 4.0) / math.log(q)) + 16
    else:
        n_max = 8
    half = max(WINDOW_DEFAULT[1], n_max)
    model = ShiftModel("MZT_STAR", r, window=(-half, half))
    w0 = onb_vector(model, 0)

    # acc = sum_n lam0^n M*^n w0;  S w0 = M*(acc) - conj(lam0) acc
    acc = w0
    cur = w0
    coeff = 1.0 + 0j
    n_used = 1
    while True:
        tail = (abs(coeff) * mod / max(1e-300, 1.0 - mod)) * (1.0 + mod)
        if tail < tol:
            break
        cur = shift_apply(model, 1, cur)
        coeff *= lam0
        acc = acc.add(cur.scale(coeff))
        n_used += 1
    s_vec = shift_apply(model, 1, acc).add(acc.scale(-np.conj(lam0)))

    # acc2 = sum_n conj(lam0)^n M*^{-(n+1)} w0;  S^{-1} w0 = acc2 - lam0 M*(acc2)
    cur2 = shift_apply(model, -1, w0)
    acc2 = cur2
    coeff2 = 1.0 + 0j
    m_used = 1
    q = mod / r
    while True:
        term_norm = abs(coeff2) * r ** (-(m_used))
        tail = (term_norm * q / max(1e-300, 1.0 - q)) * (1.0 + mod)
        if tail < tol:
            break
        cur2 = shift_apply(model, -1, cur2)
        coeff2 *= np.conj(lam0)
        acc2 = acc2.add(cur2.scale(coeff2))
        m_used += 1
    sinv_vec = acc2.add(shift_apply(model, 1, acc2).scale(-lam0))

    s_normsq = s_vec.norm_sq()
    sinv_normsq = sinv_vec.norm_sq()
    defect = (1.0 + s * s) * w0.norm_sq() - s_normsq - s * s * sinv_normsq
    return MobiusShiftResult(s_normsq, sinv_normsq, defect, n_used + m_used)


def mobius_closed_forms(params: AnnulusParams, lam0: complex, s: float):
    """Closed forms: ||S w0||^2 = 1,
    ||S^{-1} w0||^2 = |lam0|^2 + (1-|lam0|^2)^2/(r^2-|lam0|^2),
    defect = s^2 (1-|lam0|^2)(r^2-1)/(r^2-|lam0|^2)."""
    m2 = abs(lam0) ** 2
    r2 = params.r**2
    sinv = m2 + (1.0 - m2) ** 2 / (r2 - m2)
    defect = s * s * (1.0 - m2) * (r2 - 1.0) / (r2 - m2)
    return 1.0, sinv, defect


def hardy_kernel(lam: complex, mu: complex, params: AnnulusParams, tol: float = 1e-12) -> complex:
    """Two-sided kernel series sum_n (lam conj(mu))^n / (1 + r^{2n}),
    summed until both geometric tails drop below tol."""
    lam, mu = complex(lam), complex(mu)
    r = params.r
    for name, z in (("lam", lam), ("mu", mu)):
        if not (r < abs(z) < 1.0):
            raise ValueError(
                f"{name} must lie strictly inside the open annulus; "
                f"|{name}|={abs(z)} violates {r} < |z| < 1 and the series diverges"
            )
    x = lam * np.conj(mu)
    ax = abs(x)
    total = 0j
    # n >= 0: |term| <= |x|^n, ratio |x| < 1
    term = 1.0 + 0j
    n = 0
    while True:
        total += term / (1.0 + r ** (2 * n))
        tail = ax ** (n + 1) / (1.0 - ax)
        if tail < tol / 2:
            break
        term *= x
        n += 1
    # n <= -1: term = x^{-m} r^{2m} / (r^{2m} + 1), ratio r^2/|x| < 1
    q = r * r / ax
    xinv = 1.0 / x
    term = xinv * r * r
    m = 1
    while True:
        total += term / (r ** (2 * m) + 1.0)
        tail = abs(term) * q / (1.0 - q)
        if tail < tol / 2:
            break
        term *= xinv * r * r
        m += 1
    return complex(total)


@dataclass(frozen=True, eq=False)
class MisraPair:
    A: Operator
    T: Operator
    a: float
    det_contraction_defect: float  # det(I - T*T) = 1 - 2a^2 - 2w^2 + w^4
    det_alpha: float
    det_alpha_star: float


def misra_pair(params: AnnulusParams, w: float) -> MisraPair:
    """The 2x2 pair A = [[w, a],[0,w]] with a = (1-w^2)(w^2-r^2) and its
    sqrt(2)-conjugated sibling T = [[w, sqrt(2) a],[0,w]]."""
    r = params.r
    if not (r < w < 1.0):
        raise ValueError(f"need r < w < 1, got r={r}, w={w}")
    a = (1.0 - w * w) * (w * w - r * r)
    A = Operator([[w, a], [0.0, w]])
    T = Operator([[w, math.sqrt(2.0) * a], [0.0, w]])
    det_defect = 1.0 - 2.0 * a * a - 2.0 * w * w + w**4
    alpha = alpha_form(T, params)
    alpha_star = alpha_form(T.h, params)
    return MisraPair(
        A,
        T,
        a,
        det_defect,
        float(np.linalg.det(alpha.mat).real),
        float(np.linalg.det(alpha_star.mat).real),
    )
