"""Synthetic implicit-feedback corpora with a planted meta-feature -> winner rule."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .interactions import InteractionDataset, from_token_pairs
from .metafeatures import MetaFeatureVector


@dataclass(frozen=True)
class Profile:
    """Generative knobs for one dataset.

    Users belong to one of ``groups`` communities and items are split into
    the same number of blocks; with ``overlap`` an item also belongs to the
    next community's block. Each interaction goes to the user's own block with
    probability ``affinity`` (``bundle`` consecutive block items at a time),
    otherwise to an item drawn by global Zipf popularity with exponent ``skew``.
    """

    n_users: int
    n_items: int
    mean_degree: float
    groups: int = 1
    affinity: float = 0.0
    skew: float = 1.0
    overlap: float = 0.0
    bundle: int = 1


def generate(profile: Profile, rng: np.random.Generator) -> InteractionDataset:
    nu, ni, g = profile.n_users, profile.n_items, profile.groups
    pop = 1.0 / np.arange(1, ni + 1) ** profile.skew
    pop = pop[rng.permutation(ni)]
    global_p = pop / pop.sum()
    blocks = [list(range(k, ni, g)) for k in range(g)]
    shared = rng.random(ni) < profile.overlap
    for i in np.flatnonzero(shared):
        blocks[(i % g + 1) % g].append(int(i))
    blocks = [np.array(sorted(b)) for b in blocks]
    user_group = rng.integers(0, g, nu)
    lo = max(5, int(profile.mean_degree * 0.5))
    hi = max(lo + 1, int(profile.mean_degree * 1.5))
    pairs = []
    for u in range(nu):
        d = min(int(rng.integers(lo, hi + 1)), ni)
        block = blocks[user_group[u]]
        n_block = min(int(rng.binomial(d, profile.affinity)), len(block))
        chosen: set[int] = set()
        if n_block:
            b = max(1, profile.bundle)
            starts = rng.permutation(max(1, len(block) // b))
            for s in starts:
                chosen.update(block[s * b : s * b + b].tolist())
                if len(chosen) >= n_block:
                    break
        while len(chosen) < d:
            chosen.update(rng.choice(ni, d - len(chosen), p=global_p).tolist())
        pairs.extend((f"u{u}", f"i{i}") for i in sorted(chosen))
    return from_token_pairs(pairs)


# Planted regimes: meta-feature condition -> expected winning combo.
# Ranges were chosen so the winner is stable under the default zoo.
REGIMES = {
    "popularity": {
        "winner": "Popularity-0",
        "n_users": (400, 1000),
        "n_items": (150, 300),
        "mean_degree": (6, 10),
        "groups": (1, 20),
        "affinity": (0.0, 0.0),
        "skew": (0.8, 1.2),
        "overlap": (0.0, 0.5),
        "bundle": (1, 3),
    },
    "bundles-dense": {
        "winner": "EASE-0",
        "n_users": (300, 600),
        "n_items": (60, 100),
        "mean_degree": (14, 20),
        "groups": (1, 1),
        "affinity": (0.6, 0.8),
        "skew": (0.3, 0.3),
        "overlap": (0.5, 0.5),
        "bundle": (3, 3),
    },
    "bundles-wide": {
        "winner": "ItemKNN-0",
        "n_users": (200, 300),
        "n_items": (400, 600),
        "mean_degree": (30, 40),
        "groups": (3, 3),
        "affinity": (0.4, 0.7),
        "skew": (0.3, 0.3),
        "overlap": (0.5, 0.5),
        "bundle": (3, 6),
    },
}


def sample_profile(regime: str, rng: np.random.Generator) -> Profile:
    r = REGIMES[regime]

    def pick(key, integer=False):
        lo, hi = r[key]
        return int(rng.integers(lo, hi + 1)) if integer else float(rng.uniform(lo, hi))

    return Profile(
        n_users=pick("n_users", True),
        n_items=pick("n_items", True),
        mean_degree=pick("mean_degree"),
        groups=pick("groups", True),
        affinity=pick("affinity"),
        skew=pick("skew"),
        overlap=pick("overlap"),
        bundle=pick("bundle", True),
    )


RULES = {"regimes": REGIMES}


def planted_winner(features: MetaFeatureVector) -> str:
    """The combo the ``regimes`` rule says should win, read off the meta-features alone."""
    if features.item_user_ratio > 1.0:
        return "ItemKNN-0"
    if features.density >= 0.1:
        return "EASE-0"
    return "Popularity-0"


def generate_corpus(
    n_datasets: int,
    seed: int,
    rule: str = "regimes",
    max_interactions: int = 20_000,
) -> list[tuple[str, str, InteractionDataset]]:
    """``(name, regime, dataset)`` triples; regimes are dealt round-robin.

    Dataset ``d`` depends only on ``(seed, d)``, so growing the corpus keeps
    earlier datasets unchanged.
    """
    if n_datasets < 3:
        raise ConfigError(f"n_datasets must be >= 3, got {n_datasets}")
    if rule not in RULES:
        raise ConfigError(f"unknown planted rule {rule!r}; known: {', '.join(RULES)}")
    if max_interactions < 50:
        raise ConfigError(f"max_interactions must be >= 50, got {max_interactions}")
    regimes = list(RULES[rule])
    width = len(str(n_datasets - 1))
    out = []
    for d in range(n_datasets):
        regime = regimes[d % len(regimes)]
        rng = np.random.default_rng([seed, d])
        profile = sample_profile(regime, rng)
        # shrink the user base until the draw fits under the cap
        while True:
            ds = generate(profile, rng)
            if ds.n_interactions <= max_interactions:
                break
            profile = replace(profile, n_users=max(10, int(profile.n_users * 0.8)))
        out.append((f"synth{d:0{width}d}", regime, ds))
    return out
