"""Decaying stepsize policy alpha_k = s / (k + sigma) and its validity
checks.

A schedule is valid for a problem when s > 4 / l (strict) and the first
step obeys alpha_1 <= 1 / (L * MG1). MG1 is the first-step bound constant
on the weighted direction's second moment; its exact value involves a
non-constructive constant, so the harness uses 3/2 when M_V = 0 (the
known zero-variance-growth limit) and a conservative 2 otherwise, both
overridable.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import SmoothnessConstants, UsageError

#: exact MG1 limit when the variance bound has M_V = 0
MG1_ADDITIVE = 1.5
#: conservative default when M_V > 0 (the true constant is unknown)
MG1_GENERAL = 2.0


@dataclass(frozen=True)
class ValidityReport:
    s_gt_4_over_l: bool
    alpha1_leq_bound: bool
    bound_used: float
    assumed_MG1: float

    @property
    def valid(self) -> bool:
        return self.s_gt_4_over_l and self.alpha1_leq_bound

    def describe(self, s: float, sigma: float, l: float | None = None) -> str:
        alpha1 = s / (1.0 + sigma)
        if self.s_gt_4_over_l:
            line_s = "s > 4/l (strict inequality): ok"
        else:
            need = f" (requires s > {4.0 / l:.12g})" if l is not None else ""
            line_s = f"s > 4/l (strict inequality): VIOLATED{need}"
        lines = [
            f"s = {s}, sigma = {sigma}, alpha_1 = {alpha1:.12g}",
            line_s,
            f"alpha_1 <= 1/(L*MG1) = {self.bound_used:.12g} (MG1 = {self.assumed_MG1}): "
            f"{'ok' if self.alpha1_leq_bound else 'VIOLATED'}",
            f"schedule valid: {self.valid}",
        ]
        return "\n".join(lines)


def default_mg1(constants: SmoothnessConstants) -> float:
    return MG1_ADDITIVE if constants.M_V == 0.0 else MG1_GENERAL


def validate(
    s: float, sigma: float, constants: SmoothnessConstants, MG1: float
) -> ValidityReport:
    """Check s > 4/l (strict) and s/(1+sigma) <= 1/(L*MG1).

    The bound comparison allows one part in 1e12 of slack so that the
    automatically chosen sigma (which makes alpha_1 hit the bound exactly
    in real arithmetic) is not rejected for a rounding ulp.
    """
    if s <= 0.0 or sigma <= 0.0:
        raise UsageError("s and sigma must be positive")
    if MG1 <= 0.0:
        raise UsageError("MG1 must be positive")
    bound = 1.0 / (constants.L * MG1)
    alpha1 = s / (1.0 + sigma)
    return ValidityReport(
        s_gt_4_over_l=s > 4.0 / constants.l,
        alpha1_leq_bound=alpha1 <= bound * (1.0 + 1e-12),
        bound_used=bound,
        assumed_MG1=MG1,
    )


@dataclass(frozen=True)
class DecaySchedule:
    """alpha_k = s / (k + sigma), strictly decreasing and positive."""

    s: float
    sigma: float
    constraint_report: ValidityReport

    def alpha(self, k: int) -> float:
        return self.s / (k + self.sigma)

    @property
    def valid(self) -> bool:
        return self.constraint_report.valid

    def ident(self) -> str:
        return f"s={self.s!r},sigma={self.sigma!r}"

    @staticmethod
    def make(
        s: float,
        constants: SmoothnessConstants,
        sigma: float | None = None,
        MG1: float | None = None,
    ) -> "DecaySchedule":
        """Build and validate a schedule.

        When sigma is omitted it is set to s * L * MG1 - 1, the smallest
        value that keeps alpha_1 within its bound, giving the largest
        admissible early steps.
        """
        mg1 = default_mg1(constants) if MG1 is None else float(MG1)
        if sigma is None:
            sigma = s * constants.L * mg1 - 1.0
        report = validate(s, sigma, constants, mg1)
        return DecaySchedule(s=float(s), sigma=float(sigma), constraint_report=report)


@dataclass(frozen=True)
class FixedStepsize:
    """Constant stepsize stand-in with the same alpha(k) interface.

    Used by the fixed-step baselines (SGM, SVRG) and by hand-check tests;
    it carries no validity constraints.
    """

    alpha_const: float

    def alpha(self, k: int) -> float:
        return self.alpha_const

    def ident(self) -> str:
        return f"alpha={self.alpha_const!r}"
