"""Drug-combination effectiveness via reproduction-number reduction.

Each drug modifies one rate: dapsone scales the burst rate by (1 - eps),
rifampin scales the infection rate by (1 - rho), clofazimine inflates the
susceptible cytokine-death rate to gamma/(1 - c).  The modified
reproduction number under a combination is

    R0bar = alpha(1-eps) * beta(1-rho) * omega
            / ((gamma/(1-c) + mu1)(delta+mu1)(y+mu2))

with only the enabled drugs' factors applied, and combinations are ranked
by the percentage reduction (R0 - R0bar)/R0 * 100.
"""

from __future__ import annotations

from dataclasses import dataclass

from .analysis import reproduction_number
from .control import MASKS, DrugMask
from .errors import DomainError
from .params import ParameterSet

#: clinical hazard ratios used to scale efficacies across drugs
HAZARD_RATIOS = {"rifampin": 0.26, "dapsone": 0.99, "clofazimine": 1.85}

#: efficacy levels of the ranking study
EFFICACY_LEVELS = {"LE": 0.3, "ME": 0.6, "HE": 0.9}

#: ranking rows, weakest to strongest by construction
RANKING_MASKS = ("rifampin", "dapsone", "clofazimine",
                 "rifampin+dapsone", "rifampin+clofazimine",
                 "dapsone+clofazimine", "mdt")


@dataclass(frozen=True)
class EfficacyProfile:
    rho: float = 0.0      # rifampin
    epsilon: float = 0.0  # dapsone
    c: float = 0.0        # clofazimine

    def __post_init__(self):
        for name in ("rho", "epsilon", "c"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise DomainError(f"{name} must lie in [0, 1), got {v}")


def modified_r0(params: ParameterSet, profile: EfficacyProfile,
                mask: DrugMask) -> float:
    """Reproduction number with the masked drugs' modifications applied."""
    eps = profile.epsilon if mask.dapsone else 0.0
    rho = profile.rho if mask.rifampin else 0.0
    c = profile.c if mask.clofazimine else 0.0
    gamma_eff = params.gamma / (1.0 - c)
    p = params.with_updates(alpha=params.alpha * (1.0 - eps),
                            beta=params.beta * (1.0 - rho),
                            gamma=gamma_eff)
    return reproduction_number(p)


def percent_reduction(params: ParameterSet, profile: EfficacyProfile,
                      mask: DrugMask) -> float:
    """(R0 - R0bar)/R0 * 100 for one combination."""
    r0 = reproduction_number(params)
    return (r0 - modified_r0(params, profile, mask)) / r0 * 100.0


def derive_efficacies(base: float, hazard_ratios=None) -> EfficacyProfile:
    """Scale drug efficacies from a rifampin anchor by inverse hazard ratio.

    rho = base, epsilon = base*HR_rif/HR_dap, c = base*HR_rif/HR_clo;
    the lower-hazard drug keeps the anchor value and the riskier drugs
    get proportionally less.
    """
    if not 0.0 < base < 1.0:
        raise DomainError("base efficacy must lie in (0, 1)")
    hr = dict(HAZARD_RATIOS)
    if hazard_ratios:
        hr.update(hazard_ratios)
    for name, v in hr.items():
        if not v > 0:
            raise DomainError(f"hazard ratio {name} must be > 0")
    rho = base
    epsilon = base * hr["rifampin"] / hr["dapsone"]
    c = base * hr["rifampin"] / hr["clofazimine"]
    if max(rho, epsilon, c) >= 1.0:
        raise DomainError("derived efficacy reached 1; lower the base or "
                          "revisit the hazard ratios")
    return EfficacyProfile(rho=rho, epsilon=epsilon, c=c)


@dataclass
class EffectivenessRow:
    combination: str
    reductions: dict      # level -> percent
    ranks: dict           # level -> rank (1 = weakest)


@dataclass
class EffectivenessTable:
    levels: tuple[str, ...]
    rows: list
    degenerate: bool = False


def rank_combinations(params: ParameterSet, bases=None, hazard_ratios=None,
                      profiles=None) -> EffectivenessTable:
    """Rank the seven drug combinations at each efficacy level.

    Ranks ascend with reduction (highest reduction gets the top rank).
    Ties keep the fixed combination order and flag the table degenerate.
    Profiles may be passed directly (level -> EfficacyProfile) to bypass
    the hazard-ratio derivation.
    """
    if bases is None:
        bases = dict(EFFICACY_LEVELS)
    levels = tuple(bases)
    if profiles is None:
        profiles = {lvl: derive_efficacies(base, hazard_ratios)
                    if base > 0 else EfficacyProfile()
                    for lvl, base in bases.items()}
    table = []
    for name in RANKING_MASKS:
        mask = MASKS[name]
        reductions = {lvl: percent_reduction(params, profiles[lvl], mask)
                      for lvl in levels}
        table.append(EffectivenessRow(combination=name,
                                      reductions=reductions, ranks={}))
    degenerate = False
    for lvl in levels:
        vals = [row.reductions[lvl] for row in table]
        if len(set(vals)) < len(vals):
            degenerate = True
        # stable argsort: ties keep the fixed row order
        order = sorted(range(len(vals)), key=lambda k: vals[k])
        for rank, k in enumerate(order, start=1):
            table[k].ranks[lvl] = rank
    return EffectivenessTable(levels=levels, rows=table,
                              degenerate=degenerate)


def write_ranking_csv(table: EffectivenessTable, path) -> None:
    cols = ["combination"]
    for lvl in table.levels:
        cols += [f"pct_{lvl}", f"rank_{lvl}"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in table.rows:
            cells = [row.combination]
            for lvl in table.levels:
                cells += [f"{row.reductions[lvl]:.17g}", str(row.ranks[lvl])]
            fh.write(",".join(cells) + "\n")
