"""Seeded preference profiles and capacities for Monte-Carlo markets.

Every agent draws its list from its own substream, keyed by the master seed,
the side and the agent index, so adding agents never changes the lists of
the ones already there.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .model import PreferenceProfile, is_permutation


class Kind(str, enum.Enum):
    IMPARTIAL_CULTURE = "impartialCulture"
    MALLOWS_MIXTURE = "mallowsMixture"


class Side(str, enum.Enum):
    STUDENTS = "students"
    COLLEGES = "colleges"

    @property
    def code(self) -> int:
        return 0 if self is Side.STUDENTS else 1


class CapacityMethod(str, enum.Enum):
    METHOD1 = "method1"
    METHOD2 = "method2"


# stream tags appended to the seed key; agent streams use the agent index
_REFERENCE_TAG = 1 << 32
_CAPACITY_TAG = 1 << 33


def substream(*key: int) -> np.random.Generator:
    """Independent generator for an integer key such as ``(seed, side, agent)``."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass(frozen=True)
class MallowsComponent:
    reference: tuple[int, ...]
    weight: float
    phi: float


@dataclass(frozen=True)
class GeneratorSpec:
    """How one side of a market ranks the other side.

    ``side`` names the agents holding the lists: student lists rank colleges
    and college lists rank students.
    """

    kind: Kind = Kind.IMPARTIAL_CULTURE
    components: tuple[MallowsComponent, ...] = ()
    seed: int = 0
    side: Side = Side.STUDENTS

    def __post_init__(self):
        object.__setattr__(self, "kind", _enum(Kind, self.kind))
        object.__setattr__(self, "side", _enum(Side, self.side))
        object.__setattr__(self, "components", tuple(self.components))
        if self.kind is Kind.IMPARTIAL_CULTURE:
            if self.components:
                raise ConfigurationError("impartial culture takes no mixture components")
            return
        if not self.components:
            raise ConfigurationError("a Mallows mixture needs at least one component")
        for comp in self.components:
            if not 0.0 <= comp.phi <= 1.0:
                raise ConfigurationError(f"phi must lie in [0, 1], got {comp.phi}")
            if not comp.weight > 0:
                raise ConfigurationError(f"mixture weights must be positive, got {comp.weight}")
            if not is_permutation(comp.reference, len(comp.reference)):
                raise ConfigurationError("a reference ranking must be a permutation")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"mixture weights must sum to 1, got {total}")

    @classmethod
    def impartial(cls, seed: int = 0, side: Side | str = Side.STUDENTS) -> "GeneratorSpec":
        return cls(Kind.IMPARTIAL_CULTURE, (), seed, side)

    @classmethod
    def mallows(
        cls,
        references: Sequence[Sequence[int]],
        phi: float,
        seed: int = 0,
        side: Side | str = Side.STUDENTS,
        weights: Sequence[float] | None = None,
    ) -> "GeneratorSpec":
        if weights is None:
            weights = [1.0 / len(references)] * len(references)
        comps = tuple(
            MallowsComponent(tuple(int(x) for x in ref), float(w), float(phi))
            for ref, w in zip(references, weights, strict=True)
        )
        return cls(Kind.MALLOWS_MIXTURE, comps, seed, side)

    @classmethod
    def random_mixture(
        cls, n_items: int, size: int, phi: float, seed: int = 0, side: Side | str = Side.STUDENTS
    ) -> "GeneratorSpec":
        """Equal-weight mixture of ``size`` uniformly drawn reference rankings."""
        if size < 1:
            raise ConfigurationError("mixture size must be at least 1")
        side = _enum(Side, side)
        rng = substream(seed, side.code, _REFERENCE_TAG)
        refs = [rng.permutation(n_items) for _ in range(size)]
        return cls.mallows(refs, phi, seed, side)

    def check_items(self, n_items: int) -> None:
        for comp in self.components:
            if len(comp.reference) != n_items:
                raise ConfigurationError(
                    f"reference ranking has {len(comp.reference)} items, expected {n_items}"
                )


@dataclass(frozen=True)
class CapacitySpec:
    method: CapacityMethod = CapacityMethod.METHOD1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", _enum(CapacityMethod, self.method))


def _enum(cls, value):
    try:
        return cls(value)
    except ValueError:
        raise ConfigurationError(f"invalid {cls.__name__} {value!r}") from None


def mallows_insertion(reference: Sequence[int], phi: float, rng: np.random.Generator) -> np.ndarray:
    """Repeated insertion: the i-th reference item goes to position ``j <= i``
    (1-based) with weight ``phi**(i - j)``."""
    out: list[int] = []
    for i, item in enumerate(reference, start=1):
        if phi == 0.0:
            out.append(int(item))
            continue
        w = np.power(phi, np.arange(i - 1, -1, -1, dtype=float))
        cdf = np.cumsum(w)
        j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        out.insert(min(j, i - 1), int(item))
    return np.asarray(out, dtype=np.int64)


def sample_ranking(spec: GeneratorSpec, n_items: int, rng: np.random.Generator) -> np.ndarray:
    """One strict ranking of ``n_items`` items, best first."""
    if spec.kind is Kind.IMPARTIAL_CULTURE:
        return rng.permutation(n_items).astype(np.int64)
    spec.check_items(n_items)
    comps = spec.components
    k = 0
    if len(comps) > 1:
        k = int(rng.choice(len(comps), p=[c.weight for c in comps]))
    return mallows_insertion(comps[k].reference, comps[k].phi, rng)


def gen_rankings(spec: GeneratorSpec, n_agents: int, n_items: int) -> np.ndarray:
    rows = [
        sample_ranking(spec, n_items, substream(spec.seed, spec.side.code, agent))
        for agent in range(n_agents)
    ]
    return np.stack(rows) if rows else np.empty((0, n_items), dtype=np.int64)


def gen_profile(
    n_students: int, n_colleges: int, student_spec: GeneratorSpec, college_spec: GeneratorSpec
) -> PreferenceProfile:
    if n_students < 1 or n_colleges < 1:
        raise ConfigurationError("markets need at least one student and one college")
    if student_spec.side is not Side.STUDENTS or college_spec.side is not Side.COLLEGES:
        raise ConfigurationError("generator specs are bound to the wrong side")
    return PreferenceProfile(
        gen_rankings(student_spec, n_students, n_colleges),
        gen_rankings(college_spec, n_colleges, n_students),
    )


def gen_capacities(n_students: int, n_colleges: int, spec: CapacitySpec) -> np.ndarray:
    """Method 1 draws each quota uniformly from ``1..ceil(S/C)``.  Method 2
    starts from the very same draw and then adds seats to uniformly chosen
    colleges until every student could be placed."""
    if n_colleges < 1:
        raise ConfigurationError("need at least one college")
    rng = substream(spec.seed, _CAPACITY_TAG)
    hi = max(1, math.ceil(n_students / n_colleges))
    caps = rng.integers(1, hi + 1, size=n_colleges).astype(np.int64)
    if spec.method is CapacityMethod.METHOD2:
        while caps.sum() < n_students:
            caps[rng.integers(n_colleges)] += 1
    return caps


@dataclass(frozen=True)
class GeneratorConfig:
    """Side-independent generator settings as they appear in experiment
    configurations; bound to a side and seed by :meth:`spec`."""

    kind: Kind = Kind.IMPARTIAL_CULTURE
    phi: float = 0.0
    mixture_size: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", _enum(Kind, self.kind))
        if self.kind is Kind.MALLOWS_MIXTURE:
            if not 0.0 <= self.phi <= 1.0:
                raise ConfigurationError(f"phi must lie in [0, 1], got {self.phi}")
            if self.mixture_size < 1:
                raise ConfigurationError("mixtureSize must be at least 1")

    @property
    def label(self) -> str:
        if self.kind is Kind.IMPARTIAL_CULTURE:
            return "IC"
        return f"MM(phi={self.phi:g},k={self.mixture_size})"

    def spec(self, n_items: int, seed: int, side: Side | str) -> GeneratorSpec:
        if self.kind is Kind.IMPARTIAL_CULTURE:
            return GeneratorSpec.impartial(seed, side)
        return GeneratorSpec.random_mixture(n_items, self.mixture_size, self.phi, seed, side)

    def to_dict(self) -> dict:
        if self.kind is Kind.IMPARTIAL_CULTURE:
            return {"kind": self.kind.value}
        return {"kind": self.kind.value, "phi": self.phi, "mixtureSize": self.mixture_size}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        unknown = set(d) - {"kind", "phi", "mixtureSize"}
        if unknown:
            raise ConfigurationError(f"unknown generator fields {sorted(unknown)}")
        kind = _enum(Kind, d.get("kind", Kind.IMPARTIAL_CULTURE.value))
        if kind is Kind.IMPARTIAL_CULTURE:
            return cls(kind)
        return cls(kind, float(d.get("phi", 0.5)), int(d.get("mixtureSize", 1)))
