"""Modified reproduction number, efficacy derivation and the ranking table."""

import numpy as np
import pytest

from leprosim import (DomainError, EfficacyProfile, MASKS, derive_efficacies,
                      modified_r0, percent_reduction, preset,
                      rank_combinations, reproduction_number)
from leprosim.effectiveness import write_ranking_csv

P = preset("table3")


def test_empty_mask_leaves_r0_unchanged():
    prof = EfficacyProfile(rho=0.3, epsilon=0.2, c=0.01)
    assert modified_r0(P, prof, MASKS["none"]) == reproduction_number(P)


def test_zero_efficacies_leave_r0_unchanged():
    prof = EfficacyProfile()
    assert modified_r0(P, prof, MASKS["mdt"]) == reproduction_number(P)


def test_rifampin_scales_r0_linearly():
    prof = EfficacyProfile(rho=0.3)
    assert modified_r0(P, prof, MASKS["rifampin"]) == pytest.approx(
        0.7 * reproduction_number(P), rel=1e-12)
    assert percent_reduction(P, prof, MASKS["rifampin"]) == pytest.approx(
        30.0, abs=1e-9)


def test_rifampin_column_exact():
    for rho, expected in ((0.3, 30.0), (0.6, 60.0), (0.9, 90.0)):
        got = percent_reduction(P, EfficacyProfile(rho=rho),
                                MASKS["rifampin"])
        assert got == pytest.approx(expected, abs=1e-9)


def test_full_efficacy_rejected():
    with pytest.raises(DomainError):
        EfficacyProfile(c=1.0)


def test_derive_efficacies_inverse_hazard_rule():
    prof = derive_efficacies(0.3)
    assert prof.rho == 0.3
    assert prof.epsilon == pytest.approx(0.3 * 0.26 / 0.99, rel=1e-12)
    assert prof.epsilon == pytest.approx(0.078788, abs=5e-7)
    assert prof.c == pytest.approx(0.3 * 0.26 / 1.85, rel=1e-12)
    assert prof.c == pytest.approx(0.042162, abs=5e-7)
    prof9 = derive_efficacies(0.9)
    assert prof9.epsilon == pytest.approx(0.236364, abs=5e-7)


def test_derive_efficacies_guards():
    with pytest.raises(DomainError):
        derive_efficacies(0.0)
    with pytest.raises(DomainError):
        derive_efficacies(0.5, {"dapsone": 0.1})  # epsilon would exceed 1
    with pytest.raises(DomainError):
        derive_efficacies(0.5, {"clofazimine": -1.0})


def test_dapsone_column_via_derivation():
    # factorized reduction 100*epsilon for the burst-rate-only drug
    for base, expected in ((0.3, 7.88), (0.6, 15.75), (0.9, 23.63)):
        prof = derive_efficacies(base)
        got = percent_reduction(P, prof, MASKS["dapsone"])
        assert got == pytest.approx(100.0 * prof.epsilon, rel=1e-12)
        assert got == pytest.approx(expected, abs=1e-2)


def test_rifampin_dapsone_pair_value():
    prof = derive_efficacies(0.3)
    got = percent_reduction(P, prof, MASKS["rifampin+dapsone"])
    assert got == pytest.approx(35.516, abs=1e-3)


def test_clofazimine_reduction_under_derived_efficacy():
    # the gamma-inflation route gives ~4.18% at the derived c=0.042162,
    # orders of magnitude above the published 0.0437% row, which no
    # derivable efficacy reproduces; the derived value is asserted instead
    prof = derive_efficacies(0.3)
    got = percent_reduction(P, prof, MASKS["clofazimine"])
    g1 = P.gamma + P.mu1
    expected = 100.0 * (1.0 - g1 / (P.gamma / (1.0 - prof.c) + P.mu1))
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(4.176, abs=2e-3)


def test_reduction_monotone_in_each_efficacy():
    grid = np.linspace(0.0, 0.9, 10)
    prev = -1.0
    for rho in grid:
        r = percent_reduction(P, EfficacyProfile(rho=rho), MASKS["mdt"])
        assert r >= prev
        prev = r
    prev = -1.0
    for c in np.linspace(0.0, 0.5, 10):
        r = percent_reduction(P, EfficacyProfile(c=c), MASKS["mdt"])
        assert r >= prev
        prev = r


def test_modified_r0_never_exceeds_baseline():
    rng = np.random.default_rng(0)
    r0 = reproduction_number(P)
    for _ in range(200):
        prof = EfficacyProfile(rho=rng.uniform(0, 0.99),
                               epsilon=rng.uniform(0, 0.99),
                               c=rng.uniform(0, 0.99))
        assert modified_r0(P, prof, MASKS["mdt"]) <= r0 + 1e-12


def test_rank_order_matches_expected_columns():
    table = rank_combinations(P)
    assert not table.degenerate
    expected_rank = {"clofazimine": 1, "dapsone": 2, "dapsone+clofazimine": 3,
                     "rifampin": 4, "rifampin+clofazimine": 5,
                     "rifampin+dapsone": 6, "mdt": 7}
    for row in table.rows:
        for lvl in table.levels:
            assert row.ranks[lvl] == expected_rank[row.combination], \
                (row.combination, lvl)


def test_rank_order_invariant_over_small_clofazimine_efficacy():
    for c in (1e-6, 0.005, 0.02, 0.04):
        profiles = {lvl: EfficacyProfile(rho=base,
                                         epsilon=base * 0.26 / 0.99, c=c)
                    for lvl, base in (("LE", 0.3), ("ME", 0.6), ("HE", 0.9))}
        table = rank_combinations(P, profiles=profiles)
        order = sorted(table.rows, key=lambda r: r.ranks["LE"])
        assert [r.combination for r in order] == [
            "clofazimine", "dapsone", "dapsone+clofazimine", "rifampin",
            "rifampin+clofazimine", "rifampin+dapsone", "mdt"]


def test_zero_bases_degenerate_with_fixed_order():
    table = rank_combinations(P, bases={"LE": 0.0})
    assert table.degenerate
    assert [row.ranks["LE"] for row in table.rows] == list(range(1, 8))
    assert all(row.reductions["LE"] == 0.0 for row in table.rows)


def test_composition_identity_without_clofazimine():
    prof = derive_efficacies(0.6)
    r_rif = percent_reduction(P, prof, MASKS["rifampin"])
    r_dap = percent_reduction(P, prof, MASKS["dapsone"])
    r_pair = percent_reduction(P, prof, MASKS["rifampin+dapsone"])
    composed = 100.0 * (1.0 - (1.0 - r_rif / 100.0) * (1.0 - r_dap / 100.0))
    assert r_pair == pytest.approx(composed, abs=1e-9)


def test_ranking_csv_layout(tmp_path):
    table = rank_combinations(P)
    path = tmp_path / "rank.csv"
    write_ranking_csv(table, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == ("combination,pct_LE,rank_LE,pct_ME,rank_ME,"
                        "pct_HE,rank_HE")
    assert len(lines) == 8
    assert lines[1].split(",")[0] == "rifampin"
