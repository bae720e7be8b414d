# -*- coding: utf-8 -*-
"""
Proximal step-size schedules and their theoretical error ratios.

Each schedule produces a positive sequence alpha_1, alpha_2, ... through
``next_alpha``.  For the variants with closed-form partial sums the module
also provides the limiting optimization-error ratios used to verify
sublinear/linear/superlinear iteration complexity, normalized so that the
initial Bregman distance equals one.
"""
import math
from dataclasses import dataclass


class ScheduleError(ValueError):
    pass


class _Schedule:
    """Base class: stateful generator of step sizes (one instance per solve)."""

    def __init__(self):
        self.k = 0
        self._prev = None

    def reset(self):
        self.k = 0
        self._prev = None

    def next_alpha(self):
        self.k += 1
        alpha = self._alpha(self.k)
        if not alpha > 0.0:
            raise ScheduleError(f"schedule produced nonpositive alpha_{self.k}")
        self._prev = alpha
        return alpha

    def __iter__(self):
        while True:
            yield self.next_alpha()

    def partial_sum(self, k):
        raise ScheduleError(f"{type(self).__name__} has no closed-form partial sum")


class Fixed(_Schedule):
    def __init__(self, alpha):
        super().__init__()
        if alpha <= 0:
            raise ScheduleError("Fixed schedule needs alpha > 0")
        self.alpha = float(alpha)

    def _alpha(self, k):
        return self.alpha

    def partial_sum(self, k):
        return k * self.alpha


class Arithmetic(_Schedule):
    """alpha_k = C * k (k+1) ... (k+m)."""

    def __init__(self, C=1.0, m=0):
        super().__init__()
        if C <= 0 or m < 0 or m != int(m):
            raise ScheduleError("Arithmetic schedule needs C > 0 and integer m >= 0")
        self.C = float(C)
        self.m = int(m)

    def _alpha(self, k):
        prod = 1.0
        for j in range(k, k + self.m + 1):
            prod *= j
        return self.C * prod

    def partial_sum(self, k):
        # hockey-stick identity: (m+2) sum_j<=k j..(j+m) = k (k+1) ... (k+m+1)
        prod = 1.0
        for j in range(k, k + self.m + 2):
            prod *= j
        return self.C * prod / (self.m + 2)


class Geometric(_Schedule):
    """alpha_k = C * mu^(k-1)."""

    def __init__(self, C=1.0, mu=2.0):
        super().__init__()
        if C <= 0 or mu <= 1:
            raise ScheduleError("Geometric schedule needs C > 0 and mu > 1")
        self.C = float(C)
        self.mu = float(mu)

    def _alpha(self, k):
        return self.C * self.mu ** (k - 1)

    def partial_sum(self, k):
        return self.C * (self.mu**k - 1.0) / (self.mu - 1.0)


class Factorial(_Schedule):
    """alpha_k = C * k * k!, with exact integer partial sums C((k+1)! - 1)."""

    def __init__(self, C=1.0):
        super().__init__()
        if C <= 0:
            raise ScheduleError("Factorial schedule needs C > 0")
        self.C = float(C)

    def _alpha(self, k):
        return self.C * k * math.factorial(k)

    def partial_sum(self, k):
        return self.C * (math.factorial(k + 1) - 1)


class DoubleExp(_Schedule):
    """Telescoping rule with partial sums r^(1/(q-1)) * r^(q^(k-1)), capped."""

    def __init__(self, r=1.5, q=1.5, cap=1e10):
        super().__init__()
        if r <= 1 or q <= 1 or cap <= 0:
            raise ScheduleError("DoubleExp schedule needs r, q > 1 and cap > 0")
        self.r = float(r)
        self.q = float(q)
        self.cap = float(cap)

    def log_partial_sum(self, k):
        return (1.0 / (self.q - 1.0) + self.q ** (k - 1)) * math.log(self.r)

    def _alpha(self, k):
        ls = self.log_partial_sum(k)
        if ls > math.log(self.cap) + 50.0:
            return self.cap
        if k == 1:
            raw = math.exp(ls)
        else:
            raw = math.exp(ls) - math.exp(self.log_partial_sum(k - 1))
        return min(raw, self.cap)

    def partial_sum(self, k):
        return math.exp(min(self.log_partial_sum(k), 700.0))


class PracticalDoubleExp(_Schedule):
    """Floored and capped double-exponential rule.

    alpha_k = min(max(alpha_1, r^(q^(k-1)) - alpha_(k-1)), cap); this is
    the variant used by the benchmark tables (superlinear until the cap).
    """

    def __init__(self, r=1.5, q=1.5, alpha1=1.0, cap=1e10):
        super().__init__()
        if r <= 1 or q <= 1 or alpha1 <= 0 or cap <= 0:
            raise ScheduleError("PracticalDoubleExp needs r, q > 1, alpha1 > 0, cap > 0")
        self.r = float(r)
        self.q = float(q)
        self.alpha1 = float(alpha1)
        self.cap = float(cap)

    def _alpha(self, k):
        if k == 1:
            return min(self.alpha1, self.cap)
        log_raw = self.q ** (k - 1) * math.log(self.r)
        raw = math.exp(min(log_raw, 700.0)) - self._prev
        return min(max(self.alpha1, raw), self.cap)


def theoretical_error_ratio(schedule, k):
    """Closed-form error ratio at iteration k with D(u*, u0) normalized to 1.

    Returns eps_(k+1)/eps_k for schedules with linear/sublinear orders and
    eps_(k+1)/eps_k^q for DoubleExp (the order-q ratio, identically r).
    """
    if k < 1:
        raise ScheduleError("theoretical_error_ratio needs k >= 1")
    if isinstance(schedule, DoubleExp):
        log_ratio = schedule.q * schedule.log_partial_sum(k) - schedule.log_partial_sum(k + 1)
        return math.exp(log_ratio)
    if isinstance(schedule, (Fixed, Arithmetic, Geometric, Factorial)):
        return schedule.partial_sum(k) / schedule.partial_sum(k + 1)
    raise ScheduleError(f"no closed-form ratio for {type(schedule).__name__}")


@dataclass
class OrderClass:
    kind: str  # "sublinear" | "linear" | "superlinear"
    order: float = 1.0
    rate: float = 1.0


def classify_order(ratios, q=1.0, tol=0.05):
    """Classify a tail of error ratios by its limiting value.

    ``ratios`` holds eps_(k+1)/eps_k^q samples; the limit is estimated from
    the final third of the sequence.
    """
    ratios = list(ratios)
    if len(ratios) < 5:
        raise ScheduleError("classify_order needs at least 5 ratio samples")
    tail = ratios[-max(3, len(ratios) // 3):]
    limit = sum(tail) / len(tail)
    if q > 1.0:
        return OrderClass("superlinear", order=q, rate=limit)
    if limit >= 1.0 - tol:
        return OrderClass("sublinear", order=1.0, rate=1.0)
    if limit <= tol:
        return OrderClass("superlinear", order=1.0, rate=0.0)
    return OrderClass("linear", order=1.0, rate=limit)


def parse_schedule(spec):
    """Parse a command-line schedule spec.

    Grammar: ``fixed:1.0 | geo:2.0 | arith:1:0 | fact:1.0 | dexp:1.5,1.5``.
    ``geo:MU`` uses C = 1; ``dexp:R,Q`` maps to the practical rule with
    floor 1 and cap 1e10.
    """
    try:
        name, _, rest = spec.partition(":")
        args = [a for a in rest.replace(",", ":").split(":") if a]
        if name == "fixed":
            return Fixed(float(args[0]))
        if name == "geo":
            return Geometric(1.0, float(args[0]))
        if name == "arith":
            return Arithmetic(float(args[0]), int(args[1]) if len(args) > 1 else 0)
        if name == "fact":
            return Factorial(float(args[0]))
        if name == "dexp":
            r, q = (float(args[0]), float(args[1])) if len(args) > 1 else (1.5, 1.5)
            return PracticalDoubleExp(r, q)
    except (IndexError, ValueError) as exc:
        raise ScheduleError(f"cannot parse schedule spec {spec!r}") from exc
    raise ScheduleError(f"unknown schedule kind {name!r}")
