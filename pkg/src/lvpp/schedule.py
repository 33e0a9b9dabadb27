"""Update rules for the proximal parameter alpha_k."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class Rule(enum.Enum):
    CONSTANT = "constant"
    CAPPED_GEOMETRIC = "geometric"
    DOUBLE_EXPONENTIAL = "double-exp"
    NEWTON_ADAPTIVE = "adaptive"


ADAPTIVE_FLOOR = 1e-8


@dataclass
class AlphaSchedule:
    """Stateful generator of proximal parameters.

    ``CONSTANT``
        ``alpha_k = alpha0``.
    ``CAPPED_GEOMETRIC``
        ``alpha_1 = alpha0``, ``alpha_k = min(c * alpha_{k-1}, C)``.
    ``DOUBLE_EXPONENTIAL``
        ``alpha_k = min(max(r**(q**k) - alpha_{k-1}, 1), C)`` seeded with
        ``alpha_0 = alpha0``.
    ``NEWTON_ADAPTIVE``
        ``alpha_1 = alpha0``; afterwards double when the previous subproblem
        took four Newton steps or fewer, halve when it took ten or more.
    """

    rule: Rule = Rule.CONSTANT
    alpha0: float = 1.0
    growth_c: float = 2.0
    cap_C: float = math.inf
    r: float = 1.5
    q: float = 1.5
    prev_alpha: float | None = field(default=None)

    def __post_init__(self):
        self.rule = Rule(self.rule)
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not self.cap_C > 0:
            raise ValueError("cap_C must be positive")
        if self.rule is Rule.CAPPED_GEOMETRIC and not self.growth_c > 0:
            raise ValueError("growth factor c must be positive")
        if self.rule is Rule.DOUBLE_EXPONENTIAL and not (self.r > 1 and self.q > 1):
            raise ValueError("double-exponential rule needs r > 1 and q > 1")

    @classmethod
    def constant(cls, alpha=1.0):
        return cls(Rule.CONSTANT, alpha0=alpha)

    @classmethod
    def geometric(cls, alpha1, c, cap=math.inf):
        return cls(Rule.CAPPED_GEOMETRIC, alpha0=alpha1, growth_c=c, cap_C=cap)

    @classmethod
    def double_exponential(cls, r=1.5, q=1.5, cap=100.0, alpha0=1.0):
        return cls(Rule.DOUBLE_EXPONENTIAL, alpha0=alpha0, r=r, q=q, cap_C=cap)

    @classmethod
    def newton_adaptive(cls, alpha1=1.0):
        return cls(Rule.NEWTON_ADAPTIVE, alpha0=alpha1)

    def reset(self):
        self.prev_alpha = None

    def next_alpha(self, k: int, prev_newton_iters: int = 0) -> float:
        if k < 1:
            raise ValueError("k starts at 1")
        if prev_newton_iters < 0:
            raise ValueError("Newton iteration count cannot be negative")
        rule = self.rule
        prev = self.prev_alpha
        if rule is Rule.CONSTANT:
            alpha = self.alpha0
        elif rule is Rule.CAPPED_GEOMETRIC:
            alpha = (
                min(self.alpha0, self.cap_C)
                if prev is None
                else min(self.growth_c * prev, self.cap_C)
            )
        elif rule is Rule.DOUBLE_EXPONENTIAL:
            if prev is None:
                prev = self.alpha0
            try:
                big = self.r ** (self.q**k)
            except OverflowError:
                big = math.inf
            # inf - inf would be nan once both terms overflow; the cap applies
            alpha = self.cap_C if math.isinf(big) else min(max(big - prev, 1.0), self.cap_C)
        else:
            if prev is None:
                alpha = self.alpha0
            elif prev_newton_iters <= 4:
                alpha = 2.0 * prev
            elif prev_newton_iters >= 10:
                alpha = max(prev / 2.0, ADAPTIVE_FLOOR)
            else:
                alpha = prev
        self.prev_alpha = alpha
        return alpha
