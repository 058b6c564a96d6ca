"""Weight-sequence algebra shared by every layer of the package.

A parameter set is a pair (n, b) with b = (b_1, ..., b_n) a strictly
decreasing weight vector subject to

    b_1 < 1,       b_i < 1/2 for i >= 2,
    sum b_i > 1,   sum b_i**rc == 1,

where rc = r / (r - 1) is the conjugate exponent of the target r.  The
distortion constant C = 1 / (1 - 2 b_2) controls every estimate downstream,
so it is computed once here and carried around frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from bdx.errors import InfeasibleWeightsError

# Tolerance tiers.  ALGEBRA_TOL guards identities that hold exactly in real
# arithmetic; NORM_TOL guards norm comparisons that accumulate rounding.
ALGEBRA_TOL = 1e-12
NORM_TOL = 1e-9

# Slope of the linearly decreasing tail profile used by derive_weights.
DESCENT_ETA = 1e-3


@dataclass(frozen=True)
class Params:
    """Frozen parameter bundle.

    ``b`` is 0-indexed in code (b[0] is the lead weight); prose and error
    messages use the 1-based convention.  ``M_est`` is the empirical lower
    calibration constant; it stays None until an estimation pass fills it in.
    """

    n: int
    b: tuple[float, ...]
    r: float
    r_conj: float
    C: float
    tol: float = NORM_TOL
    tol_algebra: float = ALGEBRA_TOL
    M_est: float | None = None

    def with_m_est(self, value: float) -> "Params":
        return replace(self, M_est=value)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a constraint check: never raises, lists what failed.

    Each violation is (constraint name, residual); residual > 0 measures how
    far outside the feasible region the parameter sits.
    """

    ok: bool
    violations: tuple[tuple[str, float], ...] = field(default_factory=tuple)

    def describe(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{name} (residual {res:.3e})" for name, res in self.violations)


def make_params(
    n: int,
    r: float,
    b: tuple[float, ...] | list[float],
    tol: float = NORM_TOL,
    tol_algebra: float = ALGEBRA_TOL,
) -> Params:
    """Assemble a Params bundle, computing the conjugate exponent and C.

    Raises InfeasibleWeightsError when the weights fail validation, with the
    full violation list in the message.
    """
    if n < 2:
        raise InfeasibleWeightsError(f"need n >= 2 branches, got {n}")
    if r <= 1.0:
        raise InfeasibleWeightsError(f"target exponent must satisfy r > 1, got {r}")
    bt = tuple(float(x) for x in b)
    if len(bt) != n:
        raise InfeasibleWeightsError(f"weight vector has length {len(bt)}, expected n = {n}")
    r_conj = r / (r - 1.0)
    if bt[1] >= 0.5:
        raise InfeasibleWeightsError(
            f"b_2 = {bt[1]} >= 1/2 makes the distortion constant unbounded"
        )
    C = 1.0 / (1.0 - 2.0 * bt[1])
    params = Params(n=n, b=bt, r=r, r_conj=r_conj, C=C, tol=tol, tol_algebra=tol_algebra)
    report = validate(params)
    if not report.ok:
        raise InfeasibleWeightsError(f"weights infeasible: {report.describe()}")
    return params


def validate(params: Params) -> ValidationReport:
    """Check every constraint; report residuals instead of raising."""
    b = params.b
    rc = params.r_conj
    violations: list[tuple[str, float]] = []

    if b[0] >= 1.0:
        violations.append(("b_1 < 1", b[0] - 1.0))
    for i in range(1, params.n):
        if b[i] >= 0.5:
            violations.append((f"b_{i + 1} < 1/2", b[i] - 0.5))
    for i in range(params.n - 1):
        if b[i] <= b[i + 1]:
            violations.append((f"b_{i + 1} > b_{i + 2}", b[i + 1] - b[i]))
    if b[-1] <= 0.0:
        violations.append(("b_n > 0", -b[-1]))
    total = sum(b)
    if total <= 1.0:
        violations.append(("sum b_i > 1", 1.0 - total))
    mass = sum(x**rc for x in b)
    if abs(mass - 1.0) > params.tol_algebra:
        violations.append(("sum b_i**rc == 1", abs(mass - 1.0)))
    return ValidationReport(ok=not violations, violations=tuple(violations))


def derive_weights(n: int, r: float, b1: float) -> Params:
    """Fill in b_2..b_n given the lead weight, then validate.

    The tail follows a linearly decreasing profile w_i = 1 + eta*(n - i)
    scaled so that sum b_i**rc = 1 holds exactly.  The tiny slope keeps the
    descent strict without distorting the tail mass distribution.
    """
    if n < 2:
        raise InfeasibleWeightsError(f"need n >= 2 branches, got {n}")
    if r <= 1.0:
        raise InfeasibleWeightsError(f"target exponent must satisfy r > 1, got {r}")
    if not (0.0 < b1 < 1.0):
        raise InfeasibleWeightsError(f"lead weight must lie in (0, 1), got {b1}")
    rc = r / (r - 1.0)
    tail_mass = 1.0 - b1**rc
    if tail_mass <= 0.0:
        raise InfeasibleWeightsError(
            f"lead weight alone exhausts the conjugate mass: b_1**rc = {b1**rc}"
        )
    profile = [1.0 + DESCENT_ETA * (n - i) for i in range(2, n + 1)]
    scale = (tail_mass / sum(w**rc for w in profile)) ** (1.0 / rc)
    tail = [scale * w for w in profile]
    return make_params(n, r, (b1, *tail))


def example_params(n: int, tol: float = NORM_TOL) -> Params:
    """Canonical parameter sets used throughout the test-suite.

    Both have r = 2: the weights were chosen so the squares sum to 1.
    """
    if n == 2:
        return make_params(2, 2.0, (math.sqrt(0.84), 0.4), tol=tol)
    if n == 3:
        return make_params(3, 2.0, (0.9, 0.35, math.sqrt(0.0675)), tol=tol)
    raise InfeasibleWeightsError(f"no canonical example for n = {n}")


def params_to_text(params: Params) -> str:
    """Serialize as 'key = value' lines; inverse of params_from_text."""
    lines = [
        f"n = {params.n}",
        f"r = {params.r!r}",
        "b = " + ", ".join(repr(x) for x in params.b),
        f"tol = {params.tol!r}",
        f"tol_algebra = {params.tol_algebra!r}",
    ]
    if params.M_est is not None:
        lines.append(f"M_est = {params.M_est!r}")
    return "\n".join(lines) + "\n"


def params_from_text(text: str) -> Params:
    """Parse the 'key = value' format written by params_to_text."""
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        n = int(fields["n"])
        r = float(fields["r"])
        b = tuple(float(x) for x in fields["b"].split(","))
    except KeyError as exc:
        raise InfeasibleWeightsError(f"config is missing required key {exc}") from exc
    tol = float(fields.get("tol", NORM_TOL))
    tol_algebra = float(fields.get("tol_algebra", ALGEBRA_TOL))
    params = make_params(n, r, b, tol=tol, tol_algebra=tol_algebra)
    if "M_est" in fields:
        params = params.with_m_est(float(fields["M_est"]))
    return params
