"""Closed-form solvability constants and condition gates.

Every quantity here is an explicit function of the integrability exponent p,
the Lipschitz constant K of the delayed driver and the horizon T.  The
martingale-moment constants come in two regimes (p >= 2 and 1 < p < 2), and
each regime has its own z-control coefficient, a-priori coefficient and
contraction constant.  Power terms with exponents up to p^2 overflow easily
for large arguments, so everything is evaluated in log space.

Condition identifiers used throughout the package and the CLI:

  kt_product           2*K*T < 1, prerequisite of the z-control coefficient
  apriori_beta         the p-dependent a-priori coefficient < 1
  l2_existence         28*T*K*max(1, T) < 1, the square-integrable gate
  picard_contraction   the iteration contraction constant < 1 (1 < p < 2)

All functions are pure and stateless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

CONDITION_IDS = ("kt_product", "apriori_beta", "l2_existence", "picard_contraction")

BISECTION_TOL = 1e-10  # absolute tolerance of threshold searches


class ConditionViolatedError(RuntimeError):
    """Raised when a computation requires a condition that fails."""


def _powl(base: float, exponent: float) -> float:
    """base ** exponent through log space; base must be positive."""
    if base <= 0.0:
        raise ValueError(f"power base must be positive, got {base}")
    return math.exp(exponent * math.log(base))


def _check_p(p: float) -> None:
    if p <= 1.0:
        raise ValueError(f"exponent p must be > 1, got {p}")


def bdg_constant_high(p: float) -> float:
    """Martingale-moment constant for the regime p >= 2.

    Equals (p/(p-1))^(p^2/2) * (p(p-1)/2)^(p/2); value 4 at p = 2.
    """
    if p < 2.0:
        raise ValueError(f"high-exponent constant needs p >= 2, got {p}")
    return _powl(p / (p - 1.0), p * p / 2.0) * _powl(p * (p - 1.0) / 2.0, p / 2.0)


def bdg_constant_low(p: float) -> float:
    """Martingale-moment constant for the regime 1 < p < 2.

    Equals (4/p)^(p/4) * 4/(4-p).
    """
    if not 1.0 < p < 2.0:
        raise ValueError(f"low-exponent constant needs 1 < p < 2, got {p}")
    return _powl(4.0 / p, p / 4.0) * 4.0 / (4.0 - p)


def kt_product(K: float, T: float) -> float:
    """Value of the prerequisite product 2*K*T (must stay below 1)."""
    return 2.0 * K * T


def z_control_coefficient(p: float, K: float, T: float,
                          variant: str = "proof") -> float:
    """Coefficient multiplying E[sup|Y|^p] in the z-control estimate.

    The canonical ``proof`` variant is the expanded two-term expression; the
    compact ``statement`` variant [2(1-2TK)^{-1}(2K(T+1)+1)]^{p/2} is exposed
    for comparison.  Requires 2*K*T < 1.
    """
    _check_p(p)
    if K < 0.0 or T <= 0.0:
        raise ValueError("need K >= 0 and T > 0")
    if kt_product(K, T) >= 1.0:
        raise ConditionViolatedError(
            f"z-control coefficient needs 2*K*T < 1, got {kt_product(K, T)}"
        )
    if variant == "statement":
        return _powl(2.0 * (2.0 * K * (T + 1.0) + 1.0) / (1.0 - 2.0 * T * K), p / 2.0)
    if variant != "proof":
        raise ValueError(f"unknown variant {variant!r}, expected 'proof' or 'statement'")
    shrink = 1.0 / (1.0 - 2.0 * T * K)
    first_base = (K * T * T + 1.0) * shrink
    if p >= 2.0:
        return (
            _powl(2.0, p) * _powl(first_base, p / 2.0)
            + _powl(2.0, 2.0 * p + 1.0)
            * _powl(p / (p - 1.0), p * p)
            * _powl(p * (p - 1.0) / 2.0, p)
            * _powl(shrink, p)
        )
    return (
        _powl(2.0, 1.5 * p) * _powl(first_base, p / 2.0)
        + _powl(2.0, 2.0 * p + 1.0)
        * _powl(4.0 / p, p / 4.0)
        * _powl(shrink, p)
        / (4.0 - p)
    )


def apriori_coefficient(p: float, K: float, T: float) -> float:
    """Self-map coefficient of the a-priori bound; below 1 the bound closes.

    Uses the proof-variant z-control coefficient of the matching p regime.
    K = 0 gives 0.  Requires 2*K*T < 1 for K > 0.
    """
    _check_p(p)
    if K < 0.0 or T <= 0.0:
        raise ValueError("need K >= 0 and T > 0")
    if K == 0.0:
        return 0.0
    d = z_control_coefficient(p, K, T, variant="proof")
    doob = _powl(p / (p - 1.0), p)
    if p >= 2.0:
        return (
            _powl(2.0, 2.0 * p - 2.0) * doob * _powl(K, p / 2.0)
            * (_powl(T, p / 2.0) + _powl(2.0, p / 2.0 - 1.0) * _powl(K, p / 2.0) * d)
        )
    return (
        _powl(2.0, 2.5 * p - 2.0) * doob * _powl(K, p / 2.0)
        * (_powl(T, p / 2.0) + _powl(2.0, p - 1.0) * _powl(K, p / 2.0) * d)
    )


def l2_condition(K: float, T: float) -> tuple[float, bool]:
    """Value and pass flag of the square-integrable existence gate.

    Returns (28*T*K*max(1, T), value < 1).
    """
    if K < 0.0 or T <= 0.0:
        raise ValueError("need K >= 0 and T > 0")
    value = 28.0 * T * K * max(1.0, T)
    return value, value < 1.0


def picard_contraction_constant(p: float, K: float, T: float) -> float:
    """Contraction constant of the fixed-point iteration for 1 < p < 2.

    Geometric decay of iterate distances holds when this is below 1.
    Zero Lipschitz constant gives zero.
    """
    if not 1.0 < p < 2.0:
        raise ValueError(f"contraction constant needs 1 < p < 2, got {p}")
    if K < 0.0 or T <= 0.0:
        raise ValueError("need K >= 0 and T > 0")
    if K == 0.0:
        return 0.0
    lam = bdg_constant_low(p)
    bracket = 1.0 + _powl(2.0, p / 2.0 - 2.0) * (2.0 + lam * lam) * _powl(p / (p - 1.0), p)
    return (
        _powl(2.0, 2.0 * p - 1.0)
        * _powl(T, p / 2.0)
        * _powl(K, p / 2.0)
        * max(1.0, _powl(T, p / 2.0))
        * bracket
    )


def _condition_value(condition: str, p: float | None, K: float, T: float) -> float:
    if condition == "l2_existence":
        return l2_condition(K, T)[0]
    if condition == "apriori_beta":
        assert p is not None
        if kt_product(K, T) >= 1.0:
            return math.inf
        return apriori_coefficient(p, K, T)
    if condition == "picard_contraction":
        assert p is not None
        return picard_contraction_constant(p, K, T)
    raise ValueError(f"unknown condition {condition!r}")


def max_lipschitz_for_contraction(condition: str, T: float,
                                  p: float | None = None,
                                  tol: float = BISECTION_TOL) -> float:
    """Largest K for which ``condition`` still holds at horizon T.

    Bisection on the closed form to absolute tolerance ``tol``; the a-priori
    condition is additionally capped below 1/(2T) where its coefficient is
    defined.  ``p`` is required for the p-dependent conditions and must match
    their regime (any p > 1 for apriori_beta, 1 < p < 2 for
    picard_contraction); l2_existence ignores p.
    """
    if T <= 0.0:
        raise ValueError("need T > 0")
    if condition not in ("apriori_beta", "l2_existence", "picard_contraction"):
        raise ValueError(f"no threshold search for condition {condition!r}")
    if condition == "apriori_beta":
        if p is None or p <= 1.0:
            raise ValueError("apriori_beta threshold needs p > 1")
    if condition == "picard_contraction":
        if p is None or not 1.0 < p < 2.0:
            raise ValueError("picard_contraction threshold needs 1 < p < 2")

    def holds(K: float) -> bool:
        return _condition_value(condition, p, K, T) < 1.0

    if condition == "apriori_beta":
        hi = (1.0 - 1e-12) / (2.0 * T)
        if holds(hi):
            return hi
    else:
        hi = 1.0
        while holds(hi):
            hi *= 2.0
            if hi > 1e12:  # unreachable for these monotone forms, guards a hang
                return hi
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class ConditionCheck:
    """One evaluated condition with its pass flag and margin to the threshold."""

    id: str
    value: float | None
    holds: bool
    margin: float | None
    threshold: float = 1.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "value": self.value,
            "threshold": self.threshold,
            "holds": self.holds,
            "margin": self.margin,
        }


@dataclass(frozen=True)
class ConditionReport:
    """All explicit constants and condition gates evaluated at (p, K, T)."""

    p: float
    K: float
    T: float
    variant: str
    bdg_value: float
    d_value: float | None
    beta_value: float | None
    l2_value: float
    picard_c: float | None
    conditions: tuple[ConditionCheck, ...] = field(default_factory=tuple)

    def condition(self, cid: str) -> ConditionCheck:
        for check in self.conditions:
            if check.id == cid:
                return check
        raise KeyError(cid)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "K": self.K,
            "T": self.T,
            "variant": self.variant,
            "bdg_value": self.bdg_value,
            "d_value": self.d_value,
            "beta_value": self.beta_value,
            "l2_value": self.l2_value,
            "picard_c": self.picard_c,
            "conditions": [c.to_dict() for c in self.conditions],
        }


def _finite_check(cid: str, value: float | None) -> ConditionCheck:
    if value is None or not math.isfinite(value):
        return ConditionCheck(cid, None, False, None)
    return ConditionCheck(cid, value, 1.0 - value > 0.0, 1.0 - value)


def evaluate_conditions(p: float, K: float, T: float,
                        variant: str = "proof") -> ConditionReport:
    """Evaluate every applicable constant and condition gate at (p, K, T).

    Never raises on a violated condition; unsatisfiable entries carry a null
    value and a false flag instead.  The contraction entry only exists for
    1 < p < 2, the regime where its closed form is defined.
    """
    _check_p(p)
    if K < 0.0 or T <= 0.0:
        raise ValueError("need K >= 0 and T > 0")
    kt = kt_product(K, T)
    kt_ok = kt < 1.0
    bdg = bdg_constant_high(p) if p >= 2.0 else bdg_constant_low(p)
    d_value = z_control_coefficient(p, K, T, variant) if kt_ok else None
    beta = apriori_coefficient(p, K, T) if kt_ok else None
    l2_value, _ = l2_condition(K, T)
    picard_c = picard_contraction_constant(p, K, T) if 1.0 < p < 2.0 else None

    checks = [
        _finite_check("kt_product", kt),
        _finite_check("apriori_beta", beta),
        _finite_check("l2_existence", l2_value),
    ]
    if picard_c is not None:
        checks.append(_finite_check("picard_contraction", picard_c))
    return ConditionReport(
        p=p, K=K, T=T, variant=variant,
        bdg_value=bdg, d_value=d_value, beta_value=beta,
        l2_value=l2_value, picard_c=picard_c,
        conditions=tuple(checks),
    )
