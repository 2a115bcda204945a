"""Deterministic synthetic brain-score sessions.

Random numbers come from numpy's PCG64 bit generator. Session ``k`` of a
dataset (0-based position in output order) draws from::

    np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, noisy, k])))

and each session consumes, in order: two level-jitter normals (relaxed,
focused), one uniform transition centre, 180 noise normals, 180 outlier
uniforms. Output order is ``for j in range(sessions_per_class): for c in
LabelClass``, and the profile for per-class index ``j`` is
``profiles[j % len(profiles)]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError
from .signal_model import SESSION_LENGTH, Dataset, Gender, LabelClass, RawSession


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    gender: Gender
    relaxed_level: float
    focused_level: float
    level_jitter: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "gender", Gender(self.gender))
        if not self.focused_level > self.relaxed_level:
            raise DataError("focused_level must exceed relaxed_level")
        if self.level_jitter < 0:
            raise DataError("level_jitter must be >= 0")

    @classmethod
    def male(cls, subject_id: str, **kw) -> "SubjectProfile":
        return cls(subject_id, Gender.MALE, kw.pop("relaxed_level", 58.0),
                   kw.pop("focused_level", 78.0), **kw)

    @classmethod
    def female(cls, subject_id: str, **kw) -> "SubjectProfile":
        return cls(subject_id, Gender.FEMALE, kw.pop("relaxed_level", 45.0),
                   kw.pop("focused_level", 70.0), **kw)


def default_profiles() -> tuple[SubjectProfile, ...]:
    return (
        SubjectProfile.male("S1"),
        SubjectProfile.female("S2"),
        SubjectProfile.male("S3"),
        SubjectProfile.female("S4"),
    )


@dataclass(frozen=True)
class GenSpec:
    sessions_per_class: int = 200
    profiles: tuple[SubjectProfile, ...] = field(default_factory=default_profiles)
    quiet_noise_std: float = 1.5
    noisy_noise_std: float = 6.0
    outlier_rate: float = 0.01
    outlier_magnitude: float = 40.0
    transition_center_range: tuple[float, float] = (0.35, 0.65)
    transition_steepness: float = 0.08

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(self, "transition_center_range", tuple(self.transition_center_range))
        if self.sessions_per_class < 1:
            raise DataError("sessions_per_class must be >= 1")
        if not self.profiles:
            raise DataError("at least one subject profile is required")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise DataError("outlier_rate must be in [0, 1]")
        if self.quiet_noise_std < 0 or self.noisy_noise_std < 0:
            raise DataError("noise stddevs must be >= 0")
        lo, hi = self.transition_center_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise DataError("transition_center_range must be a sub-interval of [0, 1]")
        if self.transition_steepness <= 0:
            raise DataError("transition_steepness must be positive")

    def noise_std(self, noisy: bool) -> float:
        return self.noisy_noise_std if noisy else self.quiet_noise_std

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profiles"] = [dict(asdict(p), gender=p.gender.value) for p in self.profiles]
        d["transition_center_range"] = list(self.transition_center_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        d = dict(d)
        d["profiles"] = tuple(SubjectProfile(**p) for p in d["profiles"])
        return cls(**d)


def logistic_ramp(n: int, lo: float, hi: float, center: float, width: float) -> np.ndarray:
    """Logistic curve rescaled so index 0 is exactly ``lo`` and index n-1 exactly ``hi``."""
    t = np.arange(n, dtype=np.float64)
    s = 1.0 / (1.0 + np.exp(-(t - center) / width))
    s = (s - s[0]) / (s[-1] - s[0])
    return lo + (hi - lo) * s


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def generate_session(cls: LabelClass, profile: SubjectProfile, spec: GenSpec,
                     noisy: bool, seed) -> RawSession:
    rng = _rng(seed)
    n = SESSION_LENGTH
    relaxed = profile.relaxed_level + profile.level_jitter * rng.standard_normal()
    focused = profile.focused_level + profile.level_jitter * rng.standard_normal()
    lo_c, hi_c = spec.transition_center_range
    center = rng.uniform(lo_c, hi_c) * n
    width = spec.transition_steepness * n

    cls = LabelClass(cls)
    if cls is LabelClass.RELAXED:
        clean = np.full(n, relaxed)
    elif cls is LabelClass.FOCUSED:
        clean = np.full(n, focused)
    elif cls is LabelClass.RELAXED_TO_FOCUSED:
        clean = logistic_ramp(n, relaxed, focused, center, width)
    else:
        clean = logistic_ramp(n, focused, relaxed, center, width)

    noise = spec.noise_std(noisy) * rng.standard_normal(n)
    spikes = (rng.random(n) < spec.outlier_rate) * spec.outlier_magnitude
    return RawSession(
        values=clean + noise + spikes,
        label=cls,
        subject_id=profile.subject_id,
        gender=profile.gender,
        noisy=noisy,
    )


def generate_dataset(spec: GenSpec, noisy: bool, seed: int) -> Dataset:
    sessions = []
    k = 0
    for j in range(spec.sessions_per_class):
        profile = spec.profiles[j % len(spec.profiles)]
        for cls in LabelClass:
            sessions.append(generate_session(cls, profile, spec, noisy, [seed, int(noisy), k]))
            k += 1
    meta = {"generator": "synthgen", "seed": seed, "noisy": noisy, "spec": spec.to_dict()}
    return Dataset(tuple(sessions), meta)
