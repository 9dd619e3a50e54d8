"""Defect forms, the induced commuting pair, and operator-class membership.

For a modulus r in (0,1) the classes are, from smallest to largest:

    Ar_contraction  (semi-decided by a budgeted inequality search)
      C_alpha       alpha(T*,T) = -T*^2 T^2 + (1+r^2) T*T - r^2 I  >= 0
      C_alpha_star  alpha of the adjoint
      C_1r          ||T|| <= 1 and ||r T^{-1}|| <= 1
      C_1           invertible contraction
      C_beta        invertible

plus the induced-pair mirrors (spherical contraction of the pair, the
second defect form) and the symmetric-annulus classes SA/PA/QA reached
through the scaling bridge T -> rT.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .core import (
    INV_TOL_FACTOR,
    HermitianForm,
    Operator,
    PsdVerdict,
    SingularOperatorError,
    is_psd,
    op_norm,
    sigma_min,
    spectrum,
)

if TYPE_CHECKING:  # pragma: no cover - import cycle guard
    from .vn import VnBudget

__all__ = [
    "REL_TOL",
    "AnnulusParams",
    "OperatorPair",
    "SphericalVerdict",
    "ArUnitaryVerdict",
    "ArIsometryVerdict",
    "ClassVerdict",
    "MembershipReport",
    "CLASS_ORDER",
    "alpha_form",
    "beta_form",
    "kappa_pair",
    "is_spherical",
    "delta_n",
    "is_Ar_unitary",
    "is_Ar_isometry",
    "canonical_split",
    "quantum_bridge",
    "classify",
]

# Default tolerance for PSD and residual predicates, relative to form norm.
REL_TOL = 1e-9


@dataclass(frozen=True)
class AnnulusParams:
    """Modulus r of the annulus {r < |z| < 1} plus derived constants."""

    r: float

    def __post_init__(self):
        if not (0.0 < self.r < 1.0):
            raise ValueError(f"annulus modulus must lie strictly in (0,1), got {self.r}")

    @property
    def one_plus_r2(self) -> float:
        return 1.0 + self.r * self.r

    @property
    def product_const(self) -> float:
        """r / (1 + r^2): product of the induced pair's components."""
        return self.r / (1.0 + self.r * self.r)


@dataclass(frozen=True, eq=False)
class OperatorPair:
    """Commuting pair of equal-dimension operators."""

    first: Operator
    second: Operator
    commute_defect: float = field(init=False)

    def __post_init__(self):
        if self.first.dim != self.second.dim:
            raise ValueError("pair components must have equal dimension")
        a, b = self.first.mat, self.second.mat
        object.__setattr__(self, "commute_defect", op_norm(a @ b - b @ a))

    @property
    def dim(self) -> int:
        return self.first.dim

    def require_commuting(self, rel: float = 1e-9) -> None:
        scale = max(op_norm(self.first), op_norm(self.second)) ** 2
        if self.commute_defect > rel * max(1.0, scale):
            raise ValueError(
                f"pair does not commute: defect {self.commute_defect:.3e} "
                f"exceeds {rel:.1e} * {max(1.0, scale):.3e}"
            )


@dataclass(frozen=True, eq=False)
class SphericalVerdict:
    ok: bool
    margin: float
    witness: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ArUnitaryVerdict:
    ok: bool
    normality_defect: float
    circle_defect: float


@dataclass(frozen=True, eq=False)
class ArIsometryVerdict:
    ok: bool
    residual: float
    alpha_residual: float


def alpha_form(T: Operator, p: AnnulusParams) -> HermitianForm:
    """-T*^2 T^2 + (1+r^2) T*T - r^2 I."""
    a = T.mat
    ah = a.conj().T
    n = a.shape[0]
    t2 = a @ a
    mat = -(t2.conj().T @ t2) + p.one_plus_r2 * (ah @ a) - (p.r**2) * np.eye(n)
    return HermitianForm(mat)


def beta_form(T: Operator, p: AnnulusParams) -> HermitianForm:
    """T*^4 T^4 - 2(1+r^2) T*^3 T^3 + (1+r^4+4r^2) T*^2 T^2
    - 2 r^2 (1+r^2) T*T + r^4 I."""
    a = T.mat
    n = a.shape[0]
    r2 = p.r**2
    c = p.one_plus_r2
    t2 = a @ a
    t3 = t2 @ a
    t4 = t3 @ a
    mat = (
        t4.conj().T @ t4
        - 2.0 * c * (t3.conj().T @ t3)
        + (1.0 + r2 * r2 + 4.0 * r2) * (t2.conj().T @ t2)
        - 2.0 * r2 * c * (a.conj().T @ a)
        + r2 * r2 * np.eye(n)
    )
    return HermitianForm(mat)


def kappa_pair(T: Operator, p: AnnulusParams) -> OperatorPair:
    """(T, r T^{-1}) scaled by 1/sqrt(1+r^2); components multiply to
    r/(1+r^2) times the identity."""
    c = np.sqrt(p.one_plus_r2)
    inv = T.inv()
    return OperatorPair(Operator(T.mat / c), Operator(p.r * inv.mat / c))


def is_spherical(
    pair: OperatorPair, kind: str = "contraction", tol: float = REL_TOL
) -> SphericalVerdict:
    """Test I - T1*T1 - T2*T2 against zero.

    contraction: the form is PSD (margin = its smallest eigenvalue);
    isometry: the form vanishes (margin = its norm, smaller is better);
    unitary: isometry plus normal components (margin also includes the
    commutator defects).
    """
    if kind not in ("contraction", "isometry", "unitary"):
        raise ValueError(f"unknown spherical kind {kind!r}")
    pair.require_commuting()
    a, b = pair.first.mat, pair.second.mat
    n = a.shape[0]
    form = np.eye(n) - a.conj().T @ a - b.conj().T @ b
    scale = max(1.0, float(np.linalg.norm(form)))
    if kind == "contraction":
        verdict = is_psd(HermitianForm(form), tol * scale)
        return SphericalVerdict(verdict.psd, verdict.min_eig, verdict.witness)
    residual = op_norm(form)
    if kind == "isometry":
        return SphericalVerdict(residual <= tol * scale, residual, None)
    defects = [residual]
    for comp in (a, b):
        defects.append(op_norm(comp.conj().T @ comp - comp @ comp.conj().T))
    worst = max(defects)
    norm_scale = max(1.0, op_norm(a) ** 2, op_norm(b) ** 2)
    return SphericalVerdict(worst <= tol * max(scale, norm_scale), worst, None)


def delta_n(pair: OperatorPair, n: int) -> HermitianForm:
    """(I - M)^n applied to the identity, M(A) = T1* A T1 + T2* A T2."""
    if n not in (1, 2):
        raise ValueError(f"defect order must be 1 or 2, got {n}")
    pair.require_commuting()
    a, b = pair.first.mat, pair.second.mat
    dim = pair.dim
    eye = np.eye(dim, dtype=complex)

    def step(x):
        return a.conj().T @ x @ a + b.conj().T @ x @ b

    m1 = step(eye)
    if n == 1:
        return HermitianForm(eye - m1)
    return HermitianForm(eye - 2.0 * m1 + step(m1))


def is_Ar_unitary(T: Operator, p: AnnulusParams, tol: float = REL_TOL) -> ArUnitaryVerdict:
    """Normal with (I - T*T)(T*T - r^2 I) = 0."""
    a = T.mat
    n = a.shape[0]
    gram = a.conj().T @ a
    normality = op_norm(gram - a @ a.conj().T)
    circle = op_norm((np.eye(n) - gram) @ (gram - p.r**2 * np.eye(n)))
    scale = max(1.0, op_norm(a) ** 2)
    ok = normality <= tol * scale and circle <= tol * scale**2
    return ArUnitaryVerdict(ok, normality, circle)


def is_Ar_isometry(V: Operator, p: AnnulusParams, tol: float = REL_TOL) -> ArIsometryVerdict:
    """V*V + r^2 V^{-*} V^{-1} = (1+r^2) I, cross-checked against the
    vanishing of the first defect form."""
    inv = V.inv()
    a = V.mat
    n = a.shape[0]
    residual = op_norm(
        a.conj().T @ a + p.r**2 * (inv.mat.conj().T @ inv.mat) - p.one_plus_r2 * np.eye(n)
    )
    alpha_res = op_norm(alpha_form(V, p))
    scale = max(1.0, op_norm(a) ** 2)
    ok = residual <= tol * p.one_plus_r2 * scale
    return ArIsometryVerdict(ok, residual, alpha_res)


def _orth(cols: np.ndarray) -> np.ndarray:
    if cols.size == 0 or cols.shape[1] == 0:
        return cols.reshape(cols.shape[0], 0)
    q, rr = np.linalg.qr(cols)
    keep = np.abs(np.diag(rr)) > 1e-12 * max(1.0, float(np.abs(rr).max()))
    return q[:, keep]


def _intersect(P: np.ndarray, Q: np.ndarray, angle_tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis of range(P) ∩ range(Q) via principal angles."""
    if P.shape[1] == 0 or Q.shape[1] == 0:
        return P[:, :0]
    M = P.conj().T @ Q
    u, s, vh = np.linalg.svd(M)
    keep = s >= 1.0 - angle_tol
    if not np.any(keep):
        return P[:, :0]
    return _orth(Q @ vh.conj().T[:, keep])


def canonical_split(
    T: Operator, p: AnnulusParams, tol: float = REL_TOL
) -> tuple[Operator, Operator]:
    """Orthogonal projectors (P_u, P_c): P_u spans the largest reducing
    subspace on which T restricts to an annulus unitary, P_c = I - P_u.

    Starting set: eigenvectors of the normal defect [T*, T] with small
    eigenvalue intersected with the numerical kernel of
    (I - T*T)(T*T - r^2 I); then the set is shrunk by intersecting with
    its images under T and T* until the dimension stabilizes, and the
    restriction is verified post hoc.
    """
    a = T.mat
    n = a.shape[0]
    eye = np.eye(n, dtype=complex)
    norm_scale = max(1.0, op_norm(a) ** 2)

    def attempt(cut: float) -> np.ndarray:
        comm = a.conj().T @ a - a @ a.conj().T
        w, v = np.linalg.eigh(comm)
        basis1 = v[:, np.abs(w) <= cut * norm_scale]
        gram = a.conj().T @ a
        circle = (eye - gram) @ (gram - p.r**2 * eye)
        u, s, vh = np.linalg.svd(circle)
        null = vh.conj().T[:, s <= cut * norm_scale**2]
        S = _intersect(basis1, null)
        for _ in range(n + 1):
            if S.shape[1] == 0:
                break
            nxt = _intersect(S, _orth(a @ S))
            nxt = _intersect(nxt, _orth(a.conj().T @ S))
            if nxt.shape[1] == S.shape[1]:
                S = nxt
                break
            S = nxt
        return S

    cut = max(tol, 1e-12)
    S = attempt(cut)
    for _ in range(3):
        if S.shape[1] == 0:
            break
        restr = S.conj().T @ a @ S
        inv_ok = (
            op_norm(a @ S - S @ restr) <= 100 * cut * max(1.0, op_norm(a))
            and op_norm(a.conj().T @ S - S @ (S.conj().T @ a.conj().T @ S))
            <= 100 * cut * max(1.0, op_norm(a))
        )
        if inv_ok and is_Ar_unitary(Operator(restr), p, 100 * cut).ok:
            break
        cut /= 10.0
        S = attempt(cut)
    else:
        if S.shape[1] != 0:
            S = S[:, :0]
    if S.shape[1] == 0:
        pu = np.zeros((n, n), dtype=complex)
    else:
        pu = S @ S.conj().T
    pu = (pu + pu.conj().T) / 2.0
    return Operator(pu), Operator(eye - pu)


@dataclass(frozen=True, eq=False)
class ClassVerdict:
    """Single class entry of a membership report."""

    status: str  # IN | OUT | UNDECIDED
    margin: float
    witness: object | None = None
    note: str = ""

    def to_jsonable(self) -> dict:
        out = {"verdict": self.status, "margin": self.margin}
        out["witness"] = _jsonable_witness(self.witness)
        if self.note:
            out["note"] = self.note
        return out


def _jsonable_witness(w):
    if w is None:
        return None
    if isinstance(w, np.ndarray):
        return {
            "type": "vector",
            "re": [float(x) for x in w.real],
            "im": [float(x) for x in w.imag],
        }
    if isinstance(w, complex):
        return {"type": "scalar", "re": w.real, "im": w.imag}
    if isinstance(w, dict):
        return w
    if hasattr(w, "to_jsonable"):
        return w.to_jsonable()
    return str(w)


CLASS_ORDER = [
    "Ar_contraction",
    "C_alpha",
    "C_alpha_star",
    "C_1r",
    "C_1",
    "C_beta",
    "kappa_spherical_contraction",
    "delta2_positive",
    "beta_positive",
    "PA",
    "QA",
    "SA",
]

# smaller class IN forces larger class IN
_CHAIN_EDGES = [
    ("Ar_contraction", "C_alpha"),
    ("C_alpha", "C_1r"),
    ("C_alpha_star", "C_1r"),
    ("C_1r", "C_1"),
    ("C_1", "C_beta"),
    ("SA", "PA"),
    ("PA", "QA"),
]

# classes whose verdicts must coincide
_EQUIVALENT = [
    ("C_alpha", "kappa_spherical_contraction"),
    ("delta2_positive", "beta_positive"),
]


@dataclass(frozen=True, eq=False)
class MembershipReport:
    classes: dict
    budget: dict
    chain_consistent: bool

    def to_jsonable(self) -> dict:
        out = {name: v.to_jsonable() for name, v in self.classes.items()}
        out["chain_consistent"] = self.chain_consistent
        out["budget"] = self.budget
        return out


def _check_chain(verdicts: dict) -> bool:
    for small, large in _CHAIN_EDGES:
        if verdicts[small].status == "IN" and verdicts[large].status == "OUT":
            return False
    for a, b in _EQUIVALENT:
        sa, sb = verdicts[a].status, verdicts[b].status
        if "UNDECIDED" not in (sa, sb) and sa != sb:
            return False
    return True


def quantum_bridge(T: Operator, p: AnnulusParams, budget=None, tol: float = REL_TOL):
    """Verdicts for the symmetric-annulus classes SA/PA/QA at modulus r.

    Each direct test is paired with its scaled twin (the corresponding
    class of rT at modulus r^2); the returned dict carries both verdicts
    and the agreement flags.
    """
    from .vn import VnBudget, spectral_test_on_radii, remap_monomial_agreement

    budget = budget or VnBudget()
    r = p.r
    n = T.dim
    svals = np.linalg.svd(T.mat, compute_uv=False)
    smax, smin = float(svals[0]), float(svals[-1])
    invertible = smin > INV_TOL_FACTOR * smax and smin > 0

    out: dict[str, ClassVerdict] = {}
    agreement: dict[str, bool] = {}

    if not invertible:
        for name in ("PA", "QA", "SA"):
            out[name] = ClassVerdict(
                "OUT", smin, {"type": "singular", "sigma_min": smin},
                note="requires certified invertibility",
            )
            agreement[name] = True
        return out, agreement

    inv_norm = 1.0 / smin
    # QA: ||T||, ||T^{-1}|| <= 1/r
    qa_margin = 1.0 / r - max(smax, inv_norm)
    qa_in = qa_margin >= -tol
    # scaled twin: rT in C_{1, r^2} means ||rT|| <= 1 and ||r^2 (rT)^{-1}|| <= 1
    qa_scaled_in = (r * smax <= 1.0 + tol) and (r * inv_norm <= 1.0 + tol)
    out["QA"] = ClassVerdict(
        "IN" if qa_in else "OUT",
        qa_margin,
        None if qa_in else {"type": "norm", "norm_T": smax, "norm_Tinv": inv_norm},
    )
    agreement["QA"] = qa_in == qa_scaled_in

    # PA: r^2 + r^{-2} - T*T - T^{-*}T^{-1} >= 0
    a = T.mat
    ainv = np.linalg.inv(a)
    pa_mat = (r**2 + r**-2) * np.eye(n) - a.conj().T @ a - ainv.conj().T @ ainv
    pa_form = HermitianForm(pa_mat)
    pa_scale = max(1.0, float(np.linalg.norm(pa_form.mat)))
    pa = is_psd(pa_form, tol * pa_scale)
    p2 = AnnulusParams(r * r)
    alpha_scaled = alpha_form(Operator(r * a), p2)
    pa_scaled = is_psd(alpha_scaled, tol * max(1.0, float(np.linalg.norm(alpha_scaled.mat))))
    out["PA"] = ClassVerdict(
        "IN" if pa.psd else "OUT", pa.min_eig, None if pa.psd else pa.witness
    )
    agreement["PA"] = pa.psd == pa_scaled.psd

    # SA: spectral-set test for {r <= |z| <= 1/r}; the search runs once in
    # the scaled picture and the deciding ratios are re-derived directly.
    if not (pa.psd and qa_in):
        culprit = "PA" if not pa.psd else "QA"
        out["SA"] = ClassVerdict(
            "OUT",
            min(pa.min_eig, qa_margin),
            {"type": "superset", "class": culprit},
            note="containment: outside a larger symmetric-annulus class",
        )
        agreement["SA"] = True
        return out, agreement

    scaled = spectral_test_on_radii(Operator(r * a), r * r, 1.0, budget)
    direct_gap = remap_monomial_agreement(T, r, budget)
    agreement["SA"] = direct_gap <= 1e-6
    note = f"budgeted semi-decision; direct/scaled monomial gap {direct_gap:.2e}"
    witness = None
    if scaled.status == "OUT":
        if scaled.escape is not None:
            witness = {"type": "eigenvalue", "re": scaled.escape.real, "im": scaled.escape.imag}
        elif scaled.certificate is not None:
            witness = scaled.certificate.to_jsonable()
    out["SA"] = ClassVerdict(scaled.status, 1.0 - scaled.best_ratio, witness, note=note)
    return out, agreement


def classify(T: Operator, p: AnnulusParams, budget=None, tol: float = REL_TOL) -> MembershipReport:
    """Full membership report across every recognized class.

    Semi-decided classes record the budget; a definite OUT at a larger
    class propagates downward (an operator outside C_alpha cannot be an
    annulus contraction), which keeps the report chain-consistent even
    when the budgeted search finds no violating function.
    """
    from .vn import VnBudget, ar_spectral_test
    from dataclasses import asdict

    budget = budget or VnBudget()
    n = T.dim
    svals = np.linalg.svd(T.mat, compute_uv=False)
    smax, smin = float(svals[0]), float(svals[-1])
    invertible = smin > INV_TOL_FACTOR * smax and smin > 0

    v: dict[str, ClassVerdict] = {}
    sing_witness = {"type": "singular", "sigma_min": smin}

    v["C_beta"] = ClassVerdict(
        "IN" if invertible else "OUT",
        smin,
        None if invertible else sing_witness,
    )

    c1_margin = 1.0 - smax
    c1_in = invertible and smax <= 1.0 + tol
    v["C_1"] = ClassVerdict(
        "IN" if c1_in else "OUT",
        c1_margin if invertible else smin,
        None if c1_in else (sing_witness if not invertible else {"type": "norm", "norm_T": smax}),
    )

    if invertible:
        r_inv_norm = p.r / smin
        c1r_margin = min(c1_margin, 1.0 - r_inv_norm)
        c1r_in = c1_in and r_inv_norm <= 1.0 + tol
        v["C_1r"] = ClassVerdict(
            "IN" if c1r_in else "OUT",
            c1r_margin,
            None
            if c1r_in
            else {"type": "norm", "norm_T": smax, "norm_rTinv": r_inv_norm},
        )
    else:
        v["C_1r"] = ClassVerdict("OUT", smin, sing_witness)

    alpha = alpha_form(T, p)
    alpha_scale = max(1.0, float(np.linalg.norm(alpha.mat)))
    pa = is_psd(alpha, tol * alpha_scale)
    calpha_in = invertible and pa.psd
    v["C_alpha"] = ClassVerdict(
        "IN" if calpha_in else "OUT",
        pa.min_eig if invertible else smin,
        None if calpha_in else (sing_witness if not invertible else pa.witness),
    )

    alpha_star = alpha_form(T.h, p)
    pas = is_psd(alpha_star, tol * max(1.0, float(np.linalg.norm(alpha_star.mat))))
    castar_in = invertible and pas.psd
    v["C_alpha_star"] = ClassVerdict(
        "IN" if castar_in else "OUT",
        pas.min_eig if invertible else smin,
        None if castar_in else (sing_witness if not invertible else pas.witness),
    )

    if invertible:
        pair = kappa_pair(T, p)
        sph = is_spherical(pair, "contraction", tol)
        v["kappa_spherical_contraction"] = ClassVerdict(
            "IN" if sph.ok else "OUT", sph.margin, None if sph.ok else sph.witness
        )
        d2 = delta_n(pair, 2)
        pd2 = is_psd(d2, tol * max(1.0, float(np.linalg.norm(d2.mat))))
        v["delta2_positive"] = ClassVerdict(
            "IN" if pd2.psd else "OUT", pd2.min_eig, None if pd2.psd else pd2.witness
        )
        beta = beta_form(T, p)
        pb = is_psd(beta, tol * max(1.0, float(np.linalg.norm(beta.mat))))
        v["beta_positive"] = ClassVerdict(
            "IN" if pb.psd else "OUT", pb.min_eig, None if pb.psd else pb.witness
        )
    else:
        for name in ("kappa_spherical_contraction", "delta2_positive", "beta_positive"):
            v[name] = ClassVerdict("OUT", smin, sing_witness, note="requires invertibility")

    qpa, _qagree = quantum_bridge(T, p, budget, tol)
    v.update(qpa)

    # annulus-contraction semi-decision with downward OUT propagation
    eigs = spectrum(T)
    mods = np.abs(eigs)
    escape_amt = np.maximum(p.r - mods, mods - 1.0)
    worst = int(np.argmax(escape_amt))
    if escape_amt[worst] > 1e-9:
        lam = complex(eigs[worst])
        v["Ar_contraction"] = ClassVerdict(
            "OUT",
            -float(escape_amt[worst]),
            {"type": "eigenvalue", "re": lam.real, "im": lam.imag},
            note="spectral escape",
        )
    else:
        blocked = next(
            (name for name in ("C_alpha", "C_1r", "C_1", "C_beta") if v[name].status == "OUT"),
            None,
        )
        if blocked is not None:
            v["Ar_contraction"] = ClassVerdict(
                "OUT",
                v[blocked].margin,
                {"type": "superset", "class": blocked},
                note="containment: outside a larger class, search skipped",
            )
        else:
            direct = ar_spectral_test(T, p, budget)
            witness = None
            if direct.certificate is not None:
                witness = direct.certificate.to_jsonable()
            v["Ar_contraction"] = ClassVerdict(
                direct.status,
                1.0 - direct.best_ratio,
                witness,
                note="budgeted semi-decision",
            )

    ordered = {name: v[name] for name in CLASS_ORDER}
    return MembershipReport(
        classes=ordered,
        budget=asdict(budget),
        chain_consistent=_check_chain(ordered),
    )
