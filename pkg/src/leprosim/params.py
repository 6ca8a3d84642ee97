"""Biological parameter space of the within-host model.

Nine rates drive every formula in the package: recruitment (omega),
infection (beta), cytokine kill of susceptibles (gamma), natural schwann
cell death (mu1), cytokine kill of infected cells (delta), bacterial burst
(alpha), cytokine clearance of bacteria (either seven individual rates or
the aggregate y), and natural bacterial death (mu2).  All are per-day.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import DomainError

_N_CLEARANCES = 7


@dataclass(frozen=True)
class ParameterSet:
    """The nine biological rates (units 1/day; omega is cells/day).

    Cytokine clearance of bacteria may be given either as the aggregate
    ``y`` or as the seven individual rates ``cytokine_clearances``
    (IL-2, IL-7, TNF-a, IFN-g, IL-12, IL-15, IL-17); exactly one form must
    be supplied and everything downstream works with the aggregate.
    """

    omega: float
    beta: float
    gamma: float
    mu1: float
    delta: float
    alpha: float
    mu2: float
    y: float | None = None
    cytokine_clearances: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.y is None) == (self.cytokine_clearances is None):
            raise DomainError(
                "supply exactly one of 'y' or 'cytokine_clearances'")
        if self.cytokine_clearances is not None:
            rates = tuple(float(v) for v in self.cytokine_clearances)
            if len(rates) != _N_CLEARANCES:
                raise DomainError(
                    f"cytokine_clearances needs {_N_CLEARANCES} rates, "
                    f"got {len(rates)}")
            object.__setattr__(self, "cytokine_clearances", rates)
        for name in ("omega", "beta", "gamma", "mu1", "delta", "alpha", "mu2"):
            v = getattr(self, name)
            if not (v >= 0.0):
                raise DomainError(f"{name} must be >= 0, got {v}")
        for v in self.clearance_rates():
            if not (v >= 0.0):
                raise DomainError(f"cytokine clearance must be >= 0, got {v}")

    def clearance_rates(self) -> tuple[float, ...]:
        if self.cytokine_clearances is not None:
            return self.cytokine_clearances
        return (self.y,)

    @property
    def y_total(self) -> float:
        """Aggregate bacterial clearance rate by cytokines."""
        if self.y is not None:
            return self.y
        return sum(self.cytokine_clearances)

    def with_updates(self, **kwargs) -> "ParameterSet":
        """Copy with some rates replaced; 'y' overrides the clearance form."""
        if "y" in kwargs and self.cytokine_clearances is not None:
            kwargs.setdefault("cytokine_clearances", None)
        return dataclasses.replace(self, **kwargs)

    def as_dict(self) -> dict:
        d = {name: getattr(self, name)
             for name in ("omega", "beta", "gamma", "mu1", "delta", "alpha",
                          "mu2")}
        d["y"] = self.y_total
        return d


# Parameter sets used throughout the demo and acceptance scenarios:
# the clinically estimated baseline, a subcritical set (extinction regime)
# and a supercritical set (persistent infection regime).
PRESETS = {
    "table1": ParameterSet(omega=0.022, beta=3.44, gamma=0.1795, mu1=0.0018,
                           delta=0.2681, alpha=0.063, mu2=0.57, y=0.0003),
    "table2": ParameterSet(omega=1.090, beta=0.44, gamma=0.01795, mu1=0.0018,
                           delta=0.2681, alpha=0.0063, mu2=0.57, y=0.0003),
    "table3": ParameterSet(omega=20.90, beta=0.030, gamma=0.01795,
                           mu1=0.00018, delta=0.2681, alpha=0.2, mu2=0.57,
                           y=0.3),
}


def preset(name: str) -> ParameterSet:
    try:
        return PRESETS[name]
    except KeyError:
        raise DomainError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
