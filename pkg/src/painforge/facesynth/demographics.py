"""Demographic profiles and exact-marginal identity sampling."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError, ParameterError
from ..rng import STREAM_DEMOGRAPHICS, derive_seed, keyed_rng

AGE_GROUPS = ("Young", "Elderly")
ETHNICITIES = ("Latino", "White", "South Asian", "Black", "Middle Eastern",
               "East Asian")
GENDERS = ("Man", "Woman")

# Published identity counts for the full-scale dataset.
REFERENCE_AGE_COUNTS = {"Young": 1563, "Elderly": 937}
REFERENCE_ETHNICITY_COUNTS = {"Latino": 646, "White": 460, "South Asian": 469,
                              "Black": 82, "Middle Eastern": 585,
                              "East Asian": 258}
REFERENCE_GENDER_COUNTS = {"Man": 1723, "Woman": 777}


@dataclass(frozen=True)
class DemographicProfile:
    age_group: str
    ethnicity: str
    gender: str
    identity_seed: int

    def __post_init__(self):
        if self.age_group not in AGE_GROUPS:
            raise ParameterError(f"unknown age group {self.age_group!r}")
        if self.ethnicity not in ETHNICITIES:
            raise ParameterError(f"unknown ethnicity {self.ethnicity!r}")
        if self.gender not in GENDERS:
            raise ParameterError(f"unknown gender {self.gender!r}")


def reference_config() -> dict:
    """Marginal counts of the published 2,500-identity distribution."""
    return {"age": dict(REFERENCE_AGE_COUNTS),
            "ethnicity": dict(REFERENCE_ETHNICITY_COUNTS),
            "gender": dict(REFERENCE_GENDER_COUNTS)}


def scale_config(config: dict, total: int) -> dict:
    """Rescale marginal counts to a new total with largest-remainder rounding."""
    if total < 1:
        raise ConfigError(f"total must be >= 1, got {total}")
    scaled = {}
    for category, counts in config.items():
        base = sum(counts.values())
        exact = {k: v * total / base for k, v in counts.items()}
        floors = {k: int(x) for k, x in exact.items()}
        short = total - sum(floors.values())
        by_remainder = sorted(counts, key=lambda k: (floors[k] - exact[k], k))
        for k in by_remainder[:short]:
            floors[k] += 1
        scaled[category] = floors
    return scaled


def _validate_config(config: dict) -> int:
    expected = {"age": AGE_GROUPS, "ethnicity": ETHNICITIES, "gender": GENDERS}
    if set(config) != set(expected):
        raise ConfigError(
            f"config must have categories {sorted(expected)}, got {sorted(config)}")
    totals = {}
    for category, allowed in expected.items():
        counts = config[category]
        unknown = set(counts) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown {category} groups: {sorted(unknown)}")
        if any(v < 0 for v in counts.values()):
            raise ConfigError(f"negative count in {category}")
        totals[category] = sum(counts.values())
    if len(set(totals.values())) != 1:
        raise ConfigError(f"marginal totals disagree across categories: {totals}")
    return next(iter(totals.values()))


def sample_demographics(config: dict, seed: int) -> list[DemographicProfile]:
    """Build profiles whose marginal counts match ``config`` exactly.

    Each category's pool is shuffled independently, so the joint assignment
    varies with the seed while every marginal is exact by construction.
    """
    total = _validate_config(config)
    pools = []
    for tag, category, order in (
            (0, "age", AGE_GROUPS),
            (1, "ethnicity", ETHNICITIES),
            (2, "gender", GENDERS)):
        pool = [group for group in order
                for _ in range(config[category].get(group, 0))]
        rng = keyed_rng(seed, STREAM_DEMOGRAPHICS, tag)
        pool = [pool[i] for i in rng.permutation(total)]
        pools.append(pool)
    return [DemographicProfile(age_group=pools[0][i], ethnicity=pools[1][i],
                               gender=pools[2][i],
                               identity_seed=derive_seed(seed, 7, i))
            for i in range(total)]
