import math

import numpy as np
import pytest

import lesionsurv as ls
from lesionsurv.aggregation import RiskAggregator
from lesionsurv.harness import (
    BAND_STARS,
    GridAudit,
    PartitionPlan,
    Scheme,
    SchemeResult,
    make_partitions,
    make_scheme_label,
    run_grid,
    run_scheme,
    run_scheme_shared,
    summarize,
)
from lesionsurv.survival import ModelSpec


def quick_cohort(n_patients=24, seed=77, **overrides):
    kwargs = dict(
        n_patients=n_patients,
        lesion_count_pmf=(0.5, 0.5),
        n_features=3,
        n_informative=2,
        patient_latent_sd=0.8,
        lesion_noise_sd=0.5,
        hazard_link="max",
        baseline_scale=24.0,
        baseline_shape=1.4,
        censor_horizon=60.0,
        seed=seed,
    )
    kwargs.update(overrides)
    return ls.generate(ls.GenSpec(**kwargs))


def test_partition_sizes_round_two_thirds():
    cohort = quick_cohort(n_patients=115, seed=2)
    plan = make_partitions(cohort, 3, seed=9)
    for train, test in zip(plan.train, plan.test):
        assert len(train) == 77
        assert len(test) == 38
        assert set(train) & set(test) == set()
        assert set(train) | set(test) == set(cohort.patient_ids)


def test_partitions_deterministic_per_seed():
    cohort = quick_cohort()
    assert make_partitions(cohort, 5, seed=4) == make_partitions(cohort, 5, seed=4)
    assert make_partitions(cohort, 5, seed=4) != make_partitions(cohort, 5, seed=5)
    # iterations draw independent splits
    plan = make_partitions(cohort, 5, seed=4)
    assert len(set(plan.train)) > 1


def test_partitions_need_six_patients():
    cohort = quick_cohort(n_patients=5, seed=3)
    with pytest.raises(ValueError):
        make_partitions(cohort, 2, seed=1)


def test_partition_plan_validation_and_json_round_trip():
    cohort = quick_cohort(n_patients=9, seed=8)
    plan = make_partitions(cohort, 4, seed=6)
    assert PartitionPlan.from_json(plan.to_json()) == plan

    ids = plan.patient_ids
    with pytest.raises(ValueError):  # train size must be round(2n/3)
        PartitionPlan(1, ids, (ids[:3],), (ids[3:],))
    with pytest.raises(ValueError):  # overlap
        PartitionPlan(1, ids, (ids[:6],), (ids[5:],))
    with pytest.raises(ValueError):  # incomplete cover
        PartitionPlan(1, ids, (ids[:6],), (ids[6:8],))


def test_scheme_labels_and_validation():
    cox = ModelSpec.from_name("cox")
    assert Scheme("largest_roi", cox).label == "largest_roi+cox"
    assert (
        Scheme("all_roi", cox, RiskAggregator("max")).label == "all_roi_max+cox"
    )
    assert make_scheme_label("meta_histogram", None, "weibull") == "meta_histogram+weibull"
    with pytest.raises(ValueError):
        Scheme("all_roi", cox)  # aggregator missing
    with pytest.raises(ValueError):
        Scheme("largest_roi", cox, RiskAggregator("max"))  # aggregator misplaced
    with pytest.raises(ValueError):
        Scheme("best_roi", cox)


def test_scheme_result_accessors():
    result = SchemeResult("x", np.array([0.6, np.nan, 0.4, 0.7]))
    assert result.values.tolist() == [0.6, 0.4, 0.7]
    assert result.n_failed == 1
    assert result.median == 0.6
    assert result.n_below_half == 1
    empty = SchemeResult("y", np.array([np.nan, np.nan]))
    assert math.isnan(empty.median)


def test_largest_lesion_hazard_is_learned_from_largest_roi():
    # times depend only on the largest lesion and per-lesion noise is tiny,
    # so the largest-lesion design should rank held-out patients well
    cohort = quick_cohort(
        n_patients=200,
        seed=7,
        lesion_count_pmf=(0.3, 0.4, 0.3),
        n_features=5,
        n_informative=3,
        patient_latent_sd=1.0,
        lesion_noise_sd=1e-9,
        hazard_link="largest_only",
        baseline_scale=30.0,
        baseline_shape=1.5,
    )
    plan = make_partitions(cohort, 50, seed=7)
    result = run_scheme(cohort, Scheme("largest_roi", ModelSpec.from_name("cox")), plan)
    assert result.n_failed == 0
    assert result.median > 0.7
    assert np.isclose(result.median, 0.7510431918528246, rtol=1e-12)  # regression anchor


def test_failed_iterations_leave_nan_sentinels():
    # 2 events among 9 patients: many train splits have no events at all and
    # many 3-patient test splits have no comparable pairs
    cohort = quick_cohort(
        n_patients=9,
        seed=11,
        lesion_count_pmf=(0.5, 0.5),
        n_features=2,
        n_informative=1,
        patient_latent_sd=0.5,
        baseline_scale=200.0,
        baseline_shape=1.2,
        censor_horizon=10.0,
    )
    assert sum(p.response.event for p in cohort.patients) == 2
    plan = make_partitions(cohort, 40, seed=3)
    result = run_scheme(cohort, Scheme("largest_roi", ModelSpec.from_name("cox")), plan)
    assert result.n_failed == 28  # deterministic for this seed pair
    assert len(result.values) == 12


def test_single_lesion_cohort_collapses_across_schemes():
    # with one lesion per patient every strategy builds the same design and
    # every risk aggregator is the identity, so all c-index arrays coincide
    cohort = quick_cohort(lesion_count_pmf=(1.0,))
    plan = make_partitions(cohort, 6, seed=5)
    cox = ModelSpec.from_name("cox")
    schemes = [
        Scheme("largest_roi", cox),
        Scheme("random_roi", cox),
        Scheme("arithmetic_mean_roi", cox),
        Scheme("weighted_mean_roi", cox),
        Scheme("all_roi", cox, RiskAggregator("max")),
        Scheme("all_roi", cox, RiskAggregator("min")),
        Scheme("all_roi", cox, RiskAggregator("mean")),
        Scheme("all_roi", cox, RiskAggregator("weighted_mean")),
    ]
    audit = GridAudit()
    results = run_grid(cohort, schemes, plan, audit=audit)
    base = results[0].c_indices
    assert all(np.array_equal(r.c_indices, base) for r in results[1:])
    # 4 aggregator schemes share one fit per iteration: 5 groups x 6 iters
    assert audit.n_fits == 30
    assert audit.n_design_checks == 30
    assert audit.n_overlaps == 0
    assert [r.label for r in results] == [s.label for s in schemes]


def test_run_scheme_is_deterministic():
    cohort = quick_cohort(n_patients=18, seed=21)
    plan = make_partitions(cohort, 4, seed=2)
    scheme = Scheme("random_roi", ModelSpec.from_name("cox"))
    first = run_scheme(cohort, scheme, plan)
    second = run_scheme(cohort, scheme, plan)
    assert np.array_equal(first.c_indices, second.c_indices, equal_nan=True)


def test_plan_from_other_cohort_rejected():
    cohort = quick_cohort(n_patients=12, seed=31)
    other = quick_cohort(n_patients=11, seed=31)
    plan = make_partitions(other, 2, seed=1)
    with pytest.raises(ValueError):
        run_scheme(cohort, Scheme("largest_roi", ModelSpec.from_name("cox")), plan)


def test_aggregator_wiring_validation():
    cohort = quick_cohort(n_patients=12, seed=33)
    plan = make_partitions(cohort, 2, seed=1)
    cox = ModelSpec.from_name("cox")
    with pytest.raises(ValueError):
        run_scheme_shared(cohort, "all_roi", cox, plan, None)
    with pytest.raises(ValueError):
        run_scheme_shared(cohort, "largest_roi", cox, plan, [RiskAggregator("max")])


def test_summarize_reference_and_effect_bands():
    ref_vals = np.array([0.60, 0.70, 0.65, 0.72, 0.68])
    shifted = ref_vals + 0.05
    results = [
        SchemeResult("ref", ref_vals),
        SchemeResult("up", shifted),
        SchemeResult("const_hi", np.array([0.9, 0.9, 0.9])),
    ]
    rows = summarize(results, "ref")
    by_label = {row.label: row for row in rows}

    ref_row = by_label["ref"]
    assert ref_row.delta_median == 0.0
    assert ref_row.cohens_d == 0.0
    assert ref_row.band == "negligible"
    assert ref_row.stars == ""

    up = by_label["up"]
    assert np.isclose(up.delta_median, 0.05)
    assert up.cohens_d > 0.8  # constant shift of about one sd
    assert up.band == "large"
    assert up.stars == "***"
    assert up.c_min == ref_vals.min() + 0.05
    assert up.c_max == ref_vals.max() + 0.05

    # constant sample vs varying reference still gets a finite d; a constant
    # pair with sd zero on both sides would be +/- inf
    const = by_label["const_hi"]
    assert const.band == "large"

    both_const = summarize(
        [SchemeResult("a", np.array([0.5, 0.5])), SchemeResult("b", np.array([0.6, 0.6]))],
        "a",
    )
    assert both_const[1].cohens_d == math.inf
    assert both_const[1].band == "large"
    down = summarize(
        [SchemeResult("a", np.array([0.7, 0.7])), SchemeResult("b", np.array([0.6, 0.6]))],
        "a",
    )
    assert down[1].cohens_d == -math.inf

    with pytest.raises(ValueError):
        summarize(results, "missing")
    assert BAND_STARS == {"negligible": "", "small": "*", "medium": "**", "large": "***"}
