"""Model parameters, nondimensionalization and the admissibility screen.

Unit conventions: lengths in the units of ``L`` and ``rho``, time in the
units implied by ``Dx`` (length^2/time), phases in radians.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum

log = logging.getLogger(__name__)


class ParameterError(ValueError):
    """Invalid parameter value; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class SigmaKind(str, Enum):
    LINEAR = "Linear"
    LOGISTIC = "Logistic"


@dataclass(frozen=True)
class ModelParams:
    J0: float = 0.0
    J: float = 0.0
    K: float = 0.0
    omega: float = 0.0
    Dx: float = 1.0
    Dtheta: float = 0.05
    rho: float = 1.0
    L: float = 10.0
    Rbar: float = 1.0
    dim: int = 1
    sigma_kind: SigmaKind = SigmaKind.LINEAR
    Rmax: float = 30.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "sigma_kind", SigmaKind(self.sigma_kind))
        except ValueError:
            raise ParameterError("sigma_kind", f"unknown kind {self.sigma_kind!r}") from None
        for name in ("J0", "J", "K", "omega", "Dx", "Dtheta", "rho", "L", "Rbar", "Rmax"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(name, f"expected a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(name, "must be finite")
        if self.Dx <= 0:
            raise ParameterError("Dx", "must be > 0")
        if self.Dtheta < 0:
            raise ParameterError("Dtheta", "must be >= 0")
        if self.rho <= 0:
            raise ParameterError("rho", "must be > 0")
        if self.L <= 0:
            raise ParameterError("L", "must be > 0")
        if self.Rbar <= 0:
            raise ParameterError("Rbar", "must be > 0")
        if self.dim not in (1, 2) or isinstance(self.dim, bool):
            raise ParameterError("dim", "must be 1 or 2")
        if self.sigma_kind is SigmaKind.LOGISTIC and self.Rmax <= 1:
            raise ParameterError("Rmax", "logistic sigma needs Rmax > 1")

    def replace(self, **changes) -> "ModelParams":
        d = asdict(self)
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_kind"] = self.sigma_kind.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(unknown[0], "unknown parameter key")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ParameterError("<root>", "expected a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class DimensionlessParams:
    J0_star: float = 0.0
    J_star: float = 0.0
    K_star: float = 0.0
    Dtheta_star: float = 0.0
    dim: int = 1

    def __post_init__(self):
        for name in ("J0_star", "J_star", "K_star", "Dtheta_star"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(name, f"expected a finite real, got {value!r}")
        if self.Dtheta_star < 0:
            raise ParameterError("Dtheta_star", "must be >= 0")
        if self.dim not in (1, 2) or isinstance(self.dim, bool):
            raise ParameterError("dim", "must be 1 or 2")

    def replace(self, **changes) -> "DimensionlessParams":
        d = asdict(self)
        d.update(changes)
        return DimensionlessParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DimensionlessParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(unknown[0], "unknown parameter key")
        return cls(**data)


def nondimensionalize(p: ModelParams) -> DimensionlessParams:
    """Map physical constants onto the four dimensionless groups."""
    if not isinstance(p, ModelParams):
        raise ParameterError("<params>", f"expected ModelParams, got {type(p).__name__}")
    d = p.dim
    adhesion_scale = p.Rbar * p.rho ** (d + 1) / p.Dx
    return DimensionlessParams(
        J0_star=adhesion_scale * p.J0,
        J_star=adhesion_scale * p.J,
        K_star=p.Rbar * p.rho ** (d + 2) / p.Dx * p.K,
        Dtheta_star=p.rho**2 * p.Dtheta / p.Dx,
        dim=d,
    )


@dataclass(frozen=True)
class AdmissibilityReport:
    passed: bool
    violations: tuple[str, ...] = ()

    def __bool__(self):
        return self.passed


# (name, lower, upper) open bounds; None means unbounded
_BOUNDS = {
    1: (("K_star", -math.pi, None),),
    2: (
        ("K_star", -1.4, None),
        ("J0_star", -7.3, 3.1),
        ("J_star", -3.65, 1.9),
    ),
}

_LABELS = {"K_star": "K*", "J0_star": "J0*", "J_star": "J*"}


def check_admissible(q: DimensionlessParams) -> AdmissibilityReport:
    """Check that no sub-interaction-length mode can dominate.

    Report only; never raises. In 1D the admissible range is K* > -pi with
    J0*, J* unconstrained; the 2D box is a (non-sharp) numerical estimate.
    """
    violations = []
    for name, lo, hi in _BOUNDS[q.dim]:
        value = getattr(q, name)
        label = _LABELS[name]
        if lo is not None and not value > lo:
            lo_text = "-pi" if lo == -math.pi else f"{lo:g}"
            violations.append(f"{label} > {lo_text}")
        if hi is not None and not value < hi:
            violations.append(f"{label} < {hi:g}")
    return AdmissibilityReport(passed=not violations, violations=tuple(violations))


def warn_if_inadmissible(q: DimensionlessParams) -> AdmissibilityReport:
    report = check_admissible(q)
    if not report:
        log.warning("parameters outside the admissible range: %s", ", ".join(report.violations))
    return report
