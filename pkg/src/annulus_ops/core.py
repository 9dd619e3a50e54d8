"""Dense complex-matrix primitives shared by every other module.

Operators are immutable square complex matrices.  Invertibility is never
assumed: it is certified through the singular spectrum before any inverse
power is formed.  One-variable function calculus (Laurent polynomials and
rational functions) is evaluated by Horner recurrences and linear solves,
not by symbolic inverses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HERM_TOL",
    "POLE_TOL",
    "ROOT_TOL",
    "INV_TOL_FACTOR",
    "SingularOperatorError",
    "PoleCollisionError",
    "Operator",
    "HermitianForm",
    "LaurentPolynomial",
    "RationalFunction",
    "PsdVerdict",
    "op_norm",
    "sigma_min",
    "spectrum",
    "is_psd",
    "operator_power",
    "apply_laurent",
    "apply_rational",
    "mobius_of_operator",
]

# Anti-Hermitian drift allowed before a form is symmetrized.
HERM_TOL = 1e-10
# Minimum distance between a denominator root and the spectrum (or a domain).
POLE_TOL = 1e-8
# Radius inside which a shared numerator/denominator root is cancelled.
ROOT_TOL = 1e-9
# sigma_min > INV_TOL_FACTOR * sigma_max certifies invertibility.
INV_TOL_FACTOR = 1e-10


class SingularOperatorError(np.linalg.LinAlgError):
    """An operation required a certified-invertible operator and got none."""


class PoleCollisionError(np.linalg.LinAlgError):
    """A denominator root sits too close to the spectrum of the operator."""


def _as_matrix(value) -> np.ndarray:
    if isinstance(value, Operator):
        return value.mat
    if isinstance(value, HermitianForm):
        return value.mat
    arr = np.asarray(value, dtype=complex)
    return arr


def _certify_invertible(mat: np.ndarray, what: str = "operator") -> None:
    s = np.linalg.svd(mat, compute_uv=False)
    if not s[-1] > INV_TOL_FACTOR * s[0] or s[-1] == 0.0:
        raise SingularOperatorError(
            f"{what} is not certifiably invertible: "
            f"sigma_min={s[-1]:.3e}, sigma_max={s[0]:.3e}"
        )


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix with finite entries."""

    mat: np.ndarray

    def __post_init__(self):
        arr = np.array(self.mat, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise ValueError(
                f"operator must be a nonempty square matrix, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr.view(float))):
            raise ValueError("operator entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "mat", arr)

    @classmethod
    def identity(cls, dim: int) -> "Operator":
        return cls(np.eye(dim, dtype=complex))

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def h(self) -> "Operator":
        """Adjoint (conjugate transpose)."""
        return Operator(self.mat.conj().T)

    def is_invertible(self) -> bool:
        try:
            _certify_invertible(self.mat)
        except SingularOperatorError:
            return False
        return True

    def inv(self) -> "Operator":
        _certify_invertible(self.mat)
        return Operator(np.linalg.inv(self.mat))

    def __matmul__(self, other: "Operator") -> "Operator":
        return Operator(self.mat @ other.mat)

    def __add__(self, other: "Operator") -> "Operator":
        return Operator(self.mat + other.mat)

    def __sub__(self, other: "Operator") -> "Operator":
        return Operator(self.mat - other.mat)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.mat * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.mat)


@dataclass(frozen=True, eq=False)
class HermitianForm:
    """Hermitian matrix, symmetrized as (H + H*)/2 on construction.

    Construction rejects input whose anti-Hermitian part exceeds
    HERM_TOL relative to the Frobenius norm; small drift from products
    of floating-point factors is folded away by the symmetrization.
    """

    mat: np.ndarray

    def __post_init__(self):
        arr = np.array(_as_matrix(self.mat), dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise ValueError(
                f"form must be a nonempty square matrix, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr.view(float))):
            raise ValueError("form entries must be finite")
        drift = np.linalg.norm(arr - arr.conj().T)
        scale = max(1.0, np.linalg.norm(arr))
        if drift > HERM_TOL * scale:
            raise ValueError(
                f"matrix is not Hermitian within tolerance: drift={drift:.3e}, "
                f"allowed={HERM_TOL * scale:.3e}"
            )
        sym = (arr + arr.conj().T) / 2.0
        sym.setflags(write=False)
        object.__setattr__(self, "mat", sym)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


@dataclass(frozen=True, eq=False)
class PsdVerdict:
    """Outcome of a positive-semidefiniteness test.

    ``witness`` is a unit eigenvector realizing ``min_eig`` when the test
    fails, else None.
    """

    psd: bool
    min_eig: float
    witness: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class LaurentPolynomial:
    """sum_i a_i z^i for min_deg <= i <= max_deg.

    Edge coefficients are trimmed to be nonzero except for the zero
    polynomial, which is stored as a single zero coefficient at degree 0.
    """

    min_deg: int
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.array(self.coeffs, dtype=complex))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("coeffs must be a nonempty 1-D array")
        if not np.all(np.isfinite(arr.view(float))):
            raise ValueError("coefficients must be finite")
        lo = int(self.min_deg)
        nz = np.nonzero(arr)[0]
        if nz.size == 0:
            lo, arr = 0, np.zeros(1, dtype=complex)
        else:
            first, last = nz[0], nz[-1]
            lo, arr = lo + int(first), arr[first : last + 1].copy()
        arr.setflags(write=False)
        object.__setattr__(self, "min_deg", lo)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def monomial(cls, k: int, coeff: complex = 1.0) -> "LaurentPolynomial":
        return cls(k, np.array([coeff], dtype=complex))

    @property
    def max_deg(self) -> int:
        return self.min_deg + self.coeffs.size - 1

    @property
    def degree(self) -> int:
        """Largest absolute exponent appearing in the polynomial."""
        return max(abs(self.min_deg), abs(self.max_deg))

    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        acc = np.zeros_like(z)
        for a in self.coeffs[::-1]:
            acc = acc * z + a
        if self.min_deg != 0:
            acc = acc * z ** float(self.min_deg)
        return acc


def _trim_high_zeros(arr: np.ndarray) -> np.ndarray:
    nz = np.nonzero(arr)[0]
    if nz.size == 0:
        return np.zeros(1, dtype=complex)
    return arr[: nz[-1] + 1]


def _poly_from_roots(roots: np.ndarray, lead: complex) -> np.ndarray:
    # ascending coefficients of lead * prod (z - root)
    desc = np.atleast_1d(np.poly(roots)) if roots.size else np.array([1.0 + 0j])
    return (lead * desc)[::-1].astype(complex)


@dataclass(frozen=True, eq=False)
class RationalFunction:
    """p/q in one variable with ascending coefficient arrays.

    Common numerator/denominator roots within ROOT_TOL are cancelled on
    construction, so the stored pair is coprime up to that tolerance.
    """

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = _trim_high_zeros(np.atleast_1d(np.array(self.num, dtype=complex)))
        den = _trim_high_zeros(np.atleast_1d(np.array(self.den, dtype=complex)))
        if den.size == 1 and den[0] == 0:
            raise ValueError("denominator is identically zero")
        if not (
            np.all(np.isfinite(num.view(float))) and np.all(np.isfinite(den.view(float)))
        ):
            raise ValueError("coefficients must be finite")
        num, den = self._cancel_common_roots(num, den)
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @staticmethod
    def _cancel_common_roots(num, den):
        if num.size <= 1 or den.size <= 1 or (num.size == 1 and num[0] == 0):
            return num, den
        nroots = list(np.roots(num[::-1]))
        droots = list(np.roots(den[::-1]))
        cancelled = False
        kept_d = []
        for rho in droots:
            hit = None
            for i, mu in enumerate(nroots):
                if abs(mu - rho) <= ROOT_TOL:
                    hit = i
                    break
            if hit is None:
                kept_d.append(rho)
            else:
                nroots.pop(hit)
                cancelled = True
        if not cancelled:
            return num, den
        num2 = _poly_from_roots(np.array(nroots), num[-1])
        den2 = _poly_from_roots(np.array(kept_d), den[-1])
        return num2, den2

    @classmethod
    def from_mobius(cls, lam0: complex) -> "RationalFunction":
        """(z - lam0) / (1 - conj(lam0) z)."""
        return cls(
            np.array([-lam0, 1.0], dtype=complex),
            np.array([1.0, -np.conj(lam0)], dtype=complex),
        )

    def poles(self) -> np.ndarray:
        if self.den.size == 1:
            return np.zeros(0, dtype=complex)
        return np.roots(self.den[::-1])

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        p = np.zeros_like(z)
        for a in self.num[::-1]:
            p = p * z + a
        q = np.zeros_like(z)
        for a in self.den[::-1]:
            q = q * z + a
        return p / q


def op_norm(M) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(_as_matrix(M), 2))


def sigma_min(M) -> float:
    """Smallest singular value."""
    return float(np.linalg.svd(_as_matrix(M), compute_uv=False)[-1])


def spectrum(M) -> np.ndarray:
    """Eigenvalues with multiplicity, in solver order."""
    return np.linalg.eigvals(_as_matrix(M))


def is_psd(H, tol: float = 1e-9) -> PsdVerdict:
    """PSD iff the smallest eigenvalue is >= -tol.

    Accepts a HermitianForm or anything convertible to one; the Hermitian
    eigenvalues come from a symmetric solver.
    """
    form = H if isinstance(H, HermitianForm) else HermitianForm(H)
    w, v = np.linalg.eigh(form.mat)
    lam = float(w[0])
    if lam >= -tol:
        return PsdVerdict(True, lam, None)
    return PsdVerdict(False, lam, v[:, 0].copy())


def operator_power(T, k: int) -> np.ndarray:
    """T**k for integer k; negative powers use the certified inverse."""
    a = _as_matrix(T)
    if k >= 0:
        return np.linalg.matrix_power(a, k)
    _certify_invertible(a)
    return np.linalg.matrix_power(np.linalg.inv(a), -k)


def _matrix_polynomial(a: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """sum_j coeffs[j] a^j by Horner; coeffs ascending from degree 0."""
    n = a.shape[0]
    out = np.eye(n, dtype=complex) * coeffs[-1]
    for c in coeffs[-2::-1]:
        out = out @ a + c * np.eye(n, dtype=complex)
    return out


def apply_laurent(T, f: LaurentPolynomial) -> Operator:
    """sum_i a_i T^i, split into Horner runs over T and over T^{-1}."""
    a = _as_matrix(T)
    n = a.shape[0]
    out = np.zeros((n, n), dtype=complex)
    pos = np.zeros(max(f.max_deg, 0) + 1, dtype=complex)
    neg = np.zeros(max(-f.min_deg, 0) + 1, dtype=complex)
    for offset, c in enumerate(f.coeffs):
        i = f.min_deg + offset
        if i >= 0:
            pos[i] = c
        else:
            neg[-i] = c
    if np.any(pos != 0):
        out += _matrix_polynomial(a, pos)
    if np.any(neg != 0):
        # neg[0] is always zero here, so the Horner run contributes only
        # the genuinely negative powers.
        _certify_invertible(a, "operator with negative Laurent powers")
        ainv = np.linalg.inv(a)
        out += _matrix_polynomial(ainv, neg)
    return Operator(out)


def apply_rational(T, f: RationalFunction) -> Operator:
    """p(T) q(T)^{-1} after checking the poles stay clear of the spectrum."""
    a = _as_matrix(T)
    eigs = np.linalg.eigvals(a)
    for rho in f.poles():
        gaps = np.abs(eigs - rho)
        j = int(np.argmin(gaps))
        if gaps[j] <= POLE_TOL:
            raise PoleCollisionError(
                f"denominator root {rho:.8g} lies within {gaps[j]:.3e} of "
                f"eigenvalue {eigs[j]:.8g}"
            )
    p = _matrix_polynomial(a, f.num)
    q = _matrix_polynomial(a, f.den)
    return Operator(np.linalg.solve(q.T, p.T).T)


def mobius_of_operator(T, lam0: complex) -> Operator:
    """(T - lam0 I)(I - conj(lam0) T)^{-1} for |lam0| < 1."""
    if abs(lam0) >= 1:
        raise ValueError(f"mobius parameter must satisfy |lam0| < 1, got {abs(lam0)}")
    a = _as_matrix(T)
    n = a.shape[0]
    eye = np.eye(n, dtype=complex)
    if lam0 != 0:
        pole = 1.0 / np.conj(lam0)
        eigs = np.linalg.eigvals(a)
        gaps = np.abs(eigs - pole)
        j = int(np.argmin(gaps))
        if gaps[j] <= POLE_TOL:
            raise PoleCollisionError(
                f"mobius pole {pole:.8g} lies within {gaps[j]:.3e} of "
                f"eigenvalue {eigs[j]:.8g}"
            )
    lhs = eye - np.conj(lam0) * a
    return Operator(np.linalg.solve(lhs.T, (a - lam0 * eye).T).T)
