"""Planted-signal synthetic cohorts for desk-scale verification.

Each patient gets a latent feature vector; lesions are noisy copies of it.
A per-lesion linear score over the informative features drives a Weibull
proportional-hazards event time through a configurable link (max / mean /
min over lesions, or the score of the largest lesion only), so downstream
aggregation strategies can be checked against a known ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort, Lesion, Patient, SurvivalResponse
from .util import rng_from

HAZARD_LINKS = ("max", "mean", "min", "largest_only")

VOLUME_RANGE = (2.0, 1.0e4)  # log-uniform draw, voxels


@dataclass(frozen=True)
class GenSpec:
    n_patients: int
    lesion_count_pmf: tuple[float, ...]  # probabilities for 1..k_max lesions
    n_features: int
    n_informative: int
    patient_latent_sd: float
    lesion_noise_sd: float
    hazard_link: str
    baseline_scale: float
    baseline_shape: float
    censor_horizon: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "lesion_count_pmf", tuple(float(p) for p in self.lesion_count_pmf))
        if self.n_patients < 1:
            raise ValueError("n_patients must be positive")
        pmf = np.asarray(self.lesion_count_pmf)
        if pmf.size == 0 or np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-9:
            raise ValueError("lesion_count_pmf must be non-negative and sum to 1")
        if self.n_features < 1:
            raise ValueError("n_features must be positive")
        if not (0 <= self.n_informative <= self.n_features):
            raise ValueError(
                f"n_informative must lie in [0, n_features], got {self.n_informative} > {self.n_features}"
            )
        if self.patient_latent_sd < 0 or self.lesion_noise_sd < 0:
            raise ValueError("latent and noise sds must be non-negative")
        if self.hazard_link not in HAZARD_LINKS:
            raise ValueError(f"unknown hazard_link '{self.hazard_link}'")
        if self.baseline_scale <= 0 or self.baseline_shape <= 0 or self.censor_horizon <= 0:
            raise ValueError("baseline_scale, baseline_shape, censor_horizon must be positive")

    def to_dict(self) -> dict:
        return {
            "n_patients": self.n_patients,
            "lesion_count_pmf": list(self.lesion_count_pmf),
            "n_features": self.n_features,
            "n_informative": self.n_informative,
            "patient_latent_sd": self.patient_latent_sd,
            "lesion_noise_sd": self.lesion_noise_sd,
            "hazard_link": self.hazard_link,
            "baseline_scale": self.baseline_scale,
            "baseline_shape": self.baseline_shape,
            "censor_horizon": self.censor_horizon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenSpec":
        return cls(
            n_patients=int(data["n_patients"]),
            lesion_count_pmf=tuple(data["lesion_count_pmf"]),
            n_features=int(data["n_features"]),
            n_informative=int(data["n_informative"]),
            patient_latent_sd=float(data["patient_latent_sd"]),
            lesion_noise_sd=float(data["lesion_noise_sd"]),
            hazard_link=data["hazard_link"],
            baseline_scale=float(data["baseline_scale"]),
            baseline_shape=float(data["baseline_shape"]),
            censor_horizon=float(data["censor_horizon"]),
            seed=int(data["seed"]),
        )


def generate(spec: GenSpec) -> Cohort:
    """Draw a cohort from the spec. Deterministic for a given spec."""
    rng = rng_from(spec.seed, "synthgen")
    schema = tuple(f"feat_{j:03d}" for j in range(spec.n_features))

    # score weights fixed by the seed; unit norm so the score scale is set by
    # the latent / noise sds alone
    weights = rng.normal(size=spec.n_informative)
    norm = np.linalg.norm(weights)
    if norm > 0:
        weights = weights / norm

    counts = rng.choice(
        np.arange(1, len(spec.lesion_count_pmf) + 1),
        size=spec.n_patients,
        p=np.asarray(spec.lesion_count_pmf),
    )

    log_lo, log_hi = math.log(VOLUME_RANGE[0]), math.log(VOLUME_RANGE[1])
    patients = []
    for i in range(spec.n_patients):
        m = int(counts[i])
        latent = rng.normal(scale=spec.patient_latent_sd, size=spec.n_features)
        noise = rng.normal(scale=spec.lesion_noise_sd, size=(m, spec.n_features))
        features = latent[None, :] + noise
        scores = features[:, : spec.n_informative] @ weights
        volumes = np.floor(np.exp(rng.uniform(log_lo, log_hi, size=m))).astype(float)
        volumes = np.maximum(volumes, VOLUME_RANGE[0])

        if spec.hazard_link == "largest_only":
            # pair volumes with scores by rank so the largest lesion carries
            # the hazard-driving score, mimicking a dominant primary tumour
            vol_sorted = np.sort(volumes)
            score_order = np.argsort(scores, kind="stable")
            paired = np.empty(m)
            paired[score_order] = vol_sorted
            volumes = paired
            link_score = float(scores[np.argmax(volumes)])
        elif spec.hazard_link == "max":
            link_score = float(scores.max())
        elif spec.hazard_link == "mean":
            link_score = float(scores.mean())
        else:
            link_score = float(scores.min())

        multiplier = math.exp(link_score)
        u = rng.uniform()
        event_time = spec.baseline_scale * (-math.log(u) / multiplier) ** (1.0 / spec.baseline_shape)
        censor_time = min(spec.censor_horizon, rng.uniform(0.0, 2.0 * spec.censor_horizon))
        time = min(event_time, censor_time)
        event = event_time <= censor_time
        time = max(time, 1e-9)

        lesions = tuple(
            Lesion(f"roi_{k:02d}", float(volumes[k]), features[k]) for k in range(m)
        )
        patients.append(
            Patient(f"pt_{i:04d}", lesions, SurvivalResponse(float(time), bool(event)))
        )

    return Cohort(schema, tuple(patients))
