"""Data model and CSV ingestion for multi-lesion survival cohorts.

A cohort is a set of patients, each carrying one or more lesions (feature
vectors extracted from contoured image regions) and a right-censored
time-to-event response. Models consume flat ``DesignMatrix`` objects with
one row per representative lesion or per lesion, built by the aggregation
module.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

MIN_LESION_VOLUME = 2.0


class IngestionError(ValueError):
    """Raised when an input file violates the cohort CSV contracts."""


@dataclass(frozen=True, eq=False)
class SurvivalResponse:
    """Right-censored response: follow-up time and event indicator."""

    time: float
    event: bool

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time > 0):
            raise ValueError(f"survival time must be positive and finite, got {self.time}")

    def equals(self, other: "SurvivalResponse") -> bool:
        return self.time == other.time and self.event == other.event


@dataclass(frozen=True, eq=False)
class Lesion:
    """One region of interest: identifier, voxel volume, feature vector."""

    roi_id: str
    volume: float
    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)
        if self.volume < MIN_LESION_VOLUME:
            raise ValueError(f"lesion {self.roi_id}: volume {self.volume} below {MIN_LESION_VOLUME}")
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"lesion {self.roi_id}: non-finite feature value")

    def equals(self, other: "Lesion") -> bool:
        return (
            self.roi_id == other.roi_id
            and self.volume == other.volume
            and self.features.shape == other.features.shape
            and bool(np.all(self.features == other.features))
        )


@dataclass(frozen=True, eq=False)
class Patient:
    patient_id: str
    lesions: tuple[Lesion, ...]
    response: SurvivalResponse | None = None

    def __post_init__(self):
        object.__setattr__(self, "lesions", tuple(self.lesions))
        if not self.lesions:
            raise ValueError(f"patient {self.patient_id}: needs at least one lesion")
        roi_ids = [l.roi_id for l in self.lesions]
        if len(set(roi_ids)) != len(roi_ids):
            raise ValueError(f"patient {self.patient_id}: duplicate roi_id")

    @property
    def n_lesions(self) -> int:
        return len(self.lesions)

    def largest_lesion(self) -> Lesion:
        """Largest lesion by volume; ties broken by smallest roi_id."""
        return min(self.lesions, key=lambda l: (-l.volume, l.roi_id))

    def equals(self, other: "Patient") -> bool:
        if self.patient_id != other.patient_id or self.n_lesions != other.n_lesions:
            return False
        if (self.response is None) != (other.response is None):
            return False
        if self.response is not None and not self.response.equals(other.response):
            return False
        return all(a.equals(b) for a, b in zip(self.lesions, other.lesions))


@dataclass(frozen=True, eq=False)
class Cohort:
    """Patients sharing one ordered feature schema."""

    schema: tuple[str, ...]
    patients: tuple[Patient, ...]

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "patients", tuple(self.patients))
        ids = [p.patient_id for p in self.patients]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate patient_id in cohort")
        p = len(self.schema)
        for pat in self.patients:
            for les in pat.lesions:
                if les.features.shape != (p,):
                    raise ValueError(
                        f"patient {pat.patient_id} lesion {les.roi_id}: "
                        f"{les.features.shape[0]} features, schema has {p}"
                    )

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @property
    def n_lesions(self) -> int:
        return sum(p.n_lesions for p in self.patients)

    @property
    def patient_ids(self) -> tuple[str, ...]:
        return tuple(p.patient_id for p in self.patients)

    def subset(self, patient_ids: Iterable[str]) -> "Cohort":
        """Sub-cohort restricted to the given ids, preserving cohort order."""
        wanted = set(patient_ids)
        missing = wanted - set(self.patient_ids)
        if missing:
            raise KeyError(f"unknown patient ids: {sorted(missing)}")
        return Cohort(self.schema, tuple(p for p in self.patients if p.patient_id in wanted))

    def with_responses(self, responses: dict[str, SurvivalResponse]) -> "Cohort":
        missing = [p.patient_id for p in self.patients if p.patient_id not in responses]
        if missing:
            raise IngestionError(f"missing outcomes for patients: {missing}")
        patients = tuple(
            Patient(p.patient_id, p.lesions, responses[p.patient_id]) for p in self.patients
        )
        return Cohort(self.schema, patients)

    def equals(self, other: "Cohort") -> bool:
        return (
            self.schema == other.schema
            and self.n_patients == other.n_patients
            and all(a.equals(b) for a, b in zip(self.patients, other.patients))
        )


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Flat model input: one row per representative ROI or per lesion.

    Each row keeps a back-pointer to its patient, the lesion volume (used by
    volume-weighted risk aggregation), and a copy of the patient's response.
    """

    schema: tuple[str, ...]
    patient_ids: tuple[str, ...]
    row_ids: tuple[str, ...]
    X: np.ndarray
    volumes: np.ndarray
    weights: np.ndarray
    times: np.ndarray
    events: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        for name in ("X", "volumes", "weights", "times", "events"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        n = len(self.patient_ids)
        if self.X.shape != (n, len(self.schema)):
            raise ValueError(f"X shape {self.X.shape} inconsistent with {n} rows x {len(self.schema)} features")
        for name in ("volumes", "weights", "times", "events"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have {n} entries")

    @property
    def n_rows(self) -> int:
        return len(self.patient_ids)

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    def with_X(self, X: np.ndarray, schema: Sequence[str] | None = None) -> "DesignMatrix":
        return DesignMatrix(
            tuple(schema) if schema is not None else self.schema,
            self.patient_ids, self.row_ids, X,
            self.volumes, self.weights, self.times, self.events,
        )

    def drop_features(self, names: Iterable[str]) -> "DesignMatrix":
        """Remove the named feature columns (replay of a fitted filter)."""
        drop = set(names)
        unknown = drop - set(self.schema)
        if unknown:
            raise KeyError(f"unknown features: {sorted(unknown)}")
        keep = [j for j, name in enumerate(self.schema) if name not in drop]
        return self.with_X(self.X[:, keep], [self.schema[j] for j in keep])


@dataclass(frozen=True)
class StandardizeParams:
    """Per-feature affine transform fitted on training data."""

    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "sds", np.asarray(self.sds, dtype=float))


def standardize(
    design: DesignMatrix, params: StandardizeParams | None = None
) -> tuple[DesignMatrix, StandardizeParams]:
    """Center and scale feature columns to mean 0, sample sd 1.

    When ``params`` is given (test-set use) the stored transform is applied
    verbatim; nothing is re-estimated. Columns that are constant on the data
    used for fitting are left centered, with sd recorded as 1.
    """
    X = design.X
    if params is None:
        means = X.mean(axis=0)
        if X.shape[0] > 1:
            sds = X.std(axis=0, ddof=1)
        else:
            sds = np.zeros(X.shape[1])
        # a numerically constant column yields a tiny but nonzero sd; treat it
        # as degenerate rather than amplifying rounding noise
        degenerate = sds <= 1e-12 * np.maximum(1.0, np.abs(means))
        sds = np.where(degenerate, 1.0, sds)
        params = StandardizeParams(means, sds)
    else:
        if params.means.shape != (design.n_features,) or params.sds.shape != (design.n_features,):
            raise ValueError("standardization params do not match design schema")
    return design.with_X((X - params.means) / params.sds), params


def _parse_cell(raw: str, column: str, row_number: int) -> float:
    raw = raw.strip()
    if raw == "":
        raise IngestionError(f"row {row_number}: blank value in column '{column}'")
    try:
        value = float(raw)
    except ValueError:
        raise IngestionError(f"row {row_number}: cannot parse '{raw}' in column '{column}'") from None
    if not math.isfinite(value):
        raise IngestionError(f"row {row_number}: non-finite value in column '{column}'")
    return value


def load_lesions(
    path,
    schema_policy: str = "infer",
    expected_schema: Sequence[str] | None = None,
) -> Cohort:
    """Read a lesions.csv (``patient_id,roi_id,volume,<features...>``).

    Returns a cohort without responses. Lesions smaller than two voxels are
    dropped with a warning; duplicate ``(patient_id, roi_id)`` pairs and
    malformed numeric cells are rejected.
    """
    if schema_policy not in ("infer", "strict"):
        raise ValueError(f"unknown schema_policy '{schema_policy}'")
    if schema_policy == "strict" and expected_schema is None:
        raise ValueError("schema_policy='strict' requires expected_schema")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, header row required") from None
        if len(header) < 3 or header[:3] != ["patient_id", "roi_id", "volume"]:
            raise IngestionError(f"{path}: header must start with patient_id,roi_id,volume")
        schema = tuple(h.strip() for h in header[3:])
        if schema_policy == "strict" and schema != tuple(expected_schema):
            raise IngestionError(
                f"{path}: schema mismatch, expected {list(expected_schema)}, found {list(schema)}"
            )

        seen: set[tuple[str, str]] = set()
        by_patient: dict[str, list[Lesion]] = {}
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + len(schema):
                raise IngestionError(f"row {row_number}: expected {3 + len(schema)} cells, got {len(row)}")
            patient_id, roi_id = row[0].strip(), row[1].strip()
            if not patient_id or not roi_id:
                raise IngestionError(f"row {row_number}: blank patient_id or roi_id")
            key = (patient_id, roi_id)
            if key in seen:
                raise IngestionError(f"row {row_number}: duplicate lesion {key}")
            seen.add(key)
            volume = _parse_cell(row[2], "volume", row_number)
            if volume < MIN_LESION_VOLUME:
                log.warning(
                    "row %d: lesion (%s, %s) dropped, volume %g below %g voxels",
                    row_number, patient_id, roi_id, volume, MIN_LESION_VOLUME,
                )
                continue
            features = np.array(
                [_parse_cell(row[3 + j], schema[j], row_number) for j in range(len(schema))]
            )
            by_patient.setdefault(patient_id, []).append(Lesion(roi_id, volume, features))

    patients = tuple(Patient(pid, tuple(lesions)) for pid, lesions in by_patient.items())
    return Cohort(schema, patients)


def load_outcomes(path, cohort: Cohort) -> Cohort:
    """Attach outcomes.csv (``patient_id,time,event``) to an existing cohort.

    Every cohort patient must appear exactly once; unknown or repeated ids,
    non-positive times, and event values outside {0, 1} are rejected.
    """
    known = set(cohort.patient_ids)
    responses: dict[str, SurvivalResponse] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file, header row required") from None
        if [h.strip() for h in header] != ["patient_id", "time", "event"]:
            raise IngestionError(f"{path}: header must be patient_id,time,event")
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise IngestionError(f"row {row_number}: expected 3 cells, got {len(row)}")
            patient_id = row[0].strip()
            if patient_id not in known:
                raise IngestionError(f"row {row_number}: unknown patient '{patient_id}'")
            if patient_id in responses:
                raise IngestionError(f"row {row_number}: duplicate outcome for '{patient_id}'")
            time = _parse_cell(row[1], "time", row_number)
            if time <= 0:
                raise IngestionError(f"row {row_number}: time must be positive, got {time}")
            event = _parse_cell(row[2], "event", row_number)
            if event not in (0.0, 1.0):
                raise IngestionError(f"row {row_number}: event must be 0 or 1, got {row[2].strip()}")
            responses[patient_id] = SurvivalResponse(time, bool(event))
    return cohort.with_responses(responses)


def _fmt(value: float) -> str:
    # repr round-trips floats exactly; integral values are written compactly
    if float(value) == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_lesions(cohort: Cohort, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "roi_id", "volume"] + list(cohort.schema))
        for patient in cohort.patients:
            for lesion in patient.lesions:
                writer.writerow(
                    [patient.patient_id, lesion.roi_id, _fmt(lesion.volume)]
                    + [_fmt(v) for v in lesion.features]
                )


def write_outcomes(cohort: Cohort, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "time", "event"])
        for patient in cohort.patients:
            if patient.response is None:
                raise ValueError(f"patient {patient.patient_id} has no response")
            writer.writerow(
                [patient.patient_id, _fmt(patient.response.time), int(patient.response.event)]
            )
