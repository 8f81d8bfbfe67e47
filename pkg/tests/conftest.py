import numpy as np
import pytest

from lesionsurv.cohort import Cohort, DesignMatrix, Lesion, Patient, SurvivalResponse
from lesionsurv.util import rng_from


def make_design(X, times, events, volumes=None, patient_ids=None):
    """Wrap plain arrays in a DesignMatrix with one row per patient."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, p = X.shape
    if patient_ids is None:
        patient_ids = tuple(f"p{i:03d}" for i in range(n))
    else:
        patient_ids = tuple(patient_ids)
    if volumes is None:
        volumes = np.ones(n)
    return DesignMatrix(
        schema=tuple(f"f{j}" for j in range(p)),
        patient_ids=patient_ids,
        row_ids=patient_ids,
        X=X,
        volumes=np.asarray(volumes, dtype=float),
        weights=np.ones(n),
        times=np.asarray(times, dtype=float),
        events=np.asarray(events, dtype=bool),
    )


def make_patient(patient_id, lesion_rows, time, event, schema_len=None):
    """lesion_rows: list of (roi_id, volume, feature list)."""
    lesions = [
        Lesion(roi_id=rid, volume=vol, features=np.asarray(fv, dtype=float))
        for rid, vol, fv in lesion_rows
    ]
    return Patient(
        patient_id=patient_id,
        lesions=lesions,
        response=SurvivalResponse(time=time, event=bool(event)),
    )


def make_cohort(patient_rows, schema=None):
    """patient_rows: list of (patient_id, lesion_rows, time, event)."""
    patients = [make_patient(*row) for row in patient_rows]
    if schema is None:
        p = len(patients[0].lesions[0].features)
        schema = tuple(f"f{j}" for j in range(p))
    return Cohort(schema=tuple(schema), patients=patients)


def random_cohort(seed, n_patients=30, max_lesions=4, n_features=3, event_rate=0.7):
    """Small random multi-lesion cohort for property tests."""
    rng = rng_from(1234, "cohort", seed)
    rows = []
    for i in range(n_patients):
        m = int(rng.integers(1, max_lesions + 1))
        lesion_rows = [
            (
                f"roi_{k:02d}",
                float(np.floor(rng.uniform(2, 500))),
                rng.normal(size=n_features),
            )
            for k in range(m)
        ]
        time = float(rng.exponential(12.0)) + 1e-3
        event = bool(rng.random() < event_rate)
        rows.append((f"pt_{i:04d}", lesion_rows, time, event))
    return make_cohort(rows)


@pytest.fixture
def survival_design():
    """Moderate single-row-per-patient design with censoring and some ties."""
    rng = rng_from(55, "design")
    n, p = 60, 3
    X = rng.normal(size=(n, p))
    times = np.round(rng.exponential(10.0, size=n), 1) + 0.1
    events = rng.random(n) < 0.7
    return make_design(X, times, events)
