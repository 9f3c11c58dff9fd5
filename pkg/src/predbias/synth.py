"""Seed-deterministic synthetic triplet datasets with planted label ambiguity.

The generator plants a long-tailed predicate marginal (Zipf with a chosen
exponent) and a parent structure: the first ``num_common`` predicates are
frequent "common" predicates, every remaining predicate is "informative" and
owns a context set (subject-label, object-label pairs) that is a subset of
its parent's context set. With probability ``ambiguity_rate`` a triplet
generated for an informative predicate is written down with the parent's
label instead, so shared contexts carry systematically ambiguous annotations.

Generation weights are compensated for the expected relabeling so the labeled
train marginal stays Zipf-shaped; without compensation the head labels would
absorb the flipped mass and distort the exponent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, ImageRecord, ObjectInstance, TripletAnnotation, Vocabulary
from .errors import ConfigError

# Informative predicates use this fraction of a common pool as their own
# context set (at least one context). Keeping the fraction well below 1/2
# leaves every parent a reserve of contexts no child shares.
INFORMATIVE_CONTEXT_FRACTION = 0.15


@dataclass(frozen=True)
class SynthConfig:
    num_objects: int
    num_predicates: int
    num_common: int
    zipf_exponent: float
    ambiguity_rate: float
    num_images: int
    objects_per_image: tuple[int, int]
    contexts_per_predicate: int
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects_per_image", tuple(int(v) for v in self.objects_per_image))
        if self.num_objects < 1:
            raise ConfigError("num_objects must be >= 1")
        if self.num_predicates < 2:
            raise ConfigError("num_predicates must be >= 2")
        if not (1 <= self.num_common < self.num_predicates):
            raise ConfigError("num_common must satisfy 1 <= num_common < num_predicates")
        if self.zipf_exponent < 0:
            raise ConfigError("zipf_exponent must be >= 0")
        if not (0.0 <= self.ambiguity_rate <= 1.0):
            raise ConfigError("ambiguity_rate must be in [0, 1]")
        if self.num_images < 1:
            raise ConfigError("num_images must be >= 1")
        lo, hi = self.objects_per_image
        if lo < 1 or hi < lo:
            raise ConfigError(f"objects_per_image range ({lo}, {hi}) is empty or invalid")
        if self.contexts_per_predicate < 1:
            raise ConfigError("contexts_per_predicate must be >= 1")

    def to_dict(self) -> dict:
        return {
            "num_objects": self.num_objects,
            "num_predicates": self.num_predicates,
            "num_common": self.num_common,
            "zipf_exponent": self.zipf_exponent,
            "ambiguity_rate": self.ambiguity_rate,
            "num_images": self.num_images,
            "objects_per_image": list(self.objects_per_image),
            "contexts_per_predicate": self.contexts_per_predicate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        fields = (
            "num_objects", "num_predicates", "num_common", "zipf_exponent",
            "ambiguity_rate", "num_images", "objects_per_image",
            "contexts_per_predicate", "seed",
        )
        for name in fields:
            if name not in doc:
                raise ConfigError(f"missing config field '{name}'")
        return cls(
            num_objects=int(doc["num_objects"]),
            num_predicates=int(doc["num_predicates"]),
            num_common=int(doc["num_common"]),
            zipf_exponent=float(doc["zipf_exponent"]),
            ambiguity_rate=float(doc["ambiguity_rate"]),
            num_images=int(doc["num_images"]),
            objects_per_image=tuple(doc["objects_per_image"]),
            contexts_per_predicate=int(doc["contexts_per_predicate"]),
            seed=int(doc["seed"]),
        )


@dataclass(frozen=True)
class SynthPlan:
    """Planted structure shared by the train and test splits of one config."""

    vocabulary: Vocabulary
    parent_of: tuple[int, ...]  # -1 for common predicates
    contexts: tuple[tuple[tuple[int, int], ...], ...]  # per predicate
    target_marginal: tuple[float, ...]  # intended labeled marginal (Zipf)
    generation_weights: tuple[float, ...]  # flip-compensated sampling weights


def zipf_weights(num_predicates: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, num_predicates + 1, dtype=np.float64)
    w = ranks ** (-exponent)
    return w / w.sum()


def _parent_map(num_predicates: int, num_common: int) -> np.ndarray:
    parent = np.full(num_predicates, -1, dtype=np.int64)
    tail = num_predicates - num_common
    for k in range(num_common, num_predicates):
        parent[k] = (k - num_common) * num_common // tail
    return parent


def _generation_weights(target: np.ndarray, parent: np.ndarray, rho: float) -> np.ndarray:
    """Solve for sampling weights whose expected labeled marginal equals ``target``.

    Informative k is labeled k with probability (1 - rho), so it must be
    generated at target/(1 - rho); each parent sheds the expected flip influx.
    """
    if rho == 0.0:
        return target.copy()
    informative = parent >= 0
    if rho >= 1.0 and informative.any():
        raise ConfigError("ambiguity_rate = 1 leaves informative predicates unreachable")
    gen = target.copy()
    gen[informative] = target[informative] / (1.0 - rho)
    for p in range(len(target)):
        children = np.flatnonzero(parent == p)
        if children.size:
            gen[p] = target[p] - (rho / (1.0 - rho)) * target[children].sum()
    if (gen <= 0).any():
        bad = int(np.flatnonzero(gen <= 0)[0])
        raise ConfigError(
            f"infeasible config: ambiguity_rate {rho} exceeds what common predicate "
            f"{bad} can absorb from its children under this zipf tail"
        )
    return gen / gen.sum()


def build_synth_plan(cfg: SynthConfig) -> SynthPlan:
    """Derive the planted structure for a config. Pure function of the config."""
    num_obj, num_pred, num_common = cfg.num_objects, cfg.num_predicates, cfg.num_common
    cpp = cfg.contexts_per_predicate
    if num_common * cpp > num_obj * num_obj:
        raise ConfigError(
            f"infeasible config: {num_common} common predicates x {cpp} contexts "
            f"exceed the {num_obj * num_obj} available label pairs"
        )
    rng = np.random.default_rng([cfg.seed, 0])
    vocab = Vocabulary(
        tuple(f"obj{i:02d}" for i in range(num_obj)),
        tuple(f"pred{i:02d}" for i in range(num_pred)),
    )
    parent = _parent_map(num_pred, num_common)
    target = zipf_weights(num_pred, cfg.zipf_exponent)
    gen = _generation_weights(target, parent, cfg.ambiguity_rate)

    flat = rng.choice(num_obj * num_obj, size=num_common * cpp, replace=False)
    pools = [
        [(int(v) // num_obj, int(v) % num_obj) for v in flat[p * cpp : (p + 1) * cpp]]
        for p in range(num_common)
    ]
    contexts: list[tuple[tuple[int, int], ...]] = [()] * num_pred
    for p in range(num_common):
        contexts[p] = tuple(pools[p])
    child_size = max(1, int(cpp * INFORMATIVE_CONTEXT_FRACTION))
    for p in range(num_common):
        children = [k for k in range(num_common, num_pred) if parent[k] == p]
        if not children:
            continue
        if len(children) * child_size <= cpp:
            # disjoint slices of the parent pool; the remainder stays parent-only
            order = rng.permutation(cpp)
            for i, k in enumerate(children):
                picks = order[i * child_size : (i + 1) * child_size]
                contexts[k] = tuple(pools[p][j] for j in sorted(int(v) for v in picks))
        else:
            size = min(child_size, cpp)
            for k in children:
                picks = rng.choice(cpp, size=size, replace=False)
                contexts[k] = tuple(pools[p][j] for j in sorted(int(v) for v in picks))

    return SynthPlan(
        vocabulary=vocab,
        parent_of=tuple(int(v) for v in parent),
        contexts=tuple(contexts),
        target_marginal=tuple(float(v) for v in target),
        generation_weights=tuple(float(v) for v in gen),
    )


def _generate_split(
    cfg: SynthConfig, plan: SynthPlan, rng: np.random.Generator, num_images: int, split_tag: str
) -> Dataset:
    lo, hi = cfg.objects_per_image
    num_pred = cfg.num_predicates
    gen_weights = np.asarray(plan.generation_weights)
    ctx_lens = np.array([len(c) for c in plan.contexts], dtype=np.int64)
    parent = plan.parent_of
    rho = cfg.ambiguity_rate

    n_objects = rng.integers(lo, hi + 1, size=num_images)
    triplets_per_image = n_objects // 2
    total = int(triplets_per_image.sum())
    preds = rng.choice(num_pred, size=total, p=gen_weights) if total else np.empty(0, np.int64)
    ctx_idx = rng.integers(0, ctx_lens[preds]) if total else np.empty(0, np.int64)
    flip_u = rng.random(total)
    odd = n_objects % 2 == 1
    distractor_labels = rng.integers(0, cfg.num_objects, size=int(odd.sum()))

    images = []
    pos = 0
    dpos = 0
    for i in range(num_images):
        objects: list[ObjectInstance] = []
        triplets: list[TripletAnnotation] = []
        t_count = int(triplets_per_image[i])
        for j in range(t_count):
            k = int(preds[pos])
            m, n = plan.contexts[k][int(ctx_idx[pos])]
            label = k
            if parent[k] >= 0 and flip_u[pos] < rho:
                label = parent[k]
            subj_id, obj_id = 2 * j, 2 * j + 1
            objects.append(ObjectInstance(subj_id, m))
            objects.append(ObjectInstance(obj_id, n))
            triplets.append(TripletAnnotation(subj_id, label, obj_id))
            pos += 1
        if odd[i]:
            objects.append(ObjectInstance(2 * t_count, int(distractor_labels[dpos])))
            dpos += 1
        images.append(ImageRecord(f"synth-{split_tag}-{i:06d}", tuple(objects), tuple(triplets)))
    return Dataset(plan.vocabulary, tuple(images), split_tag)


def generate_synthetic(cfg: SynthConfig) -> tuple[Dataset, Dataset]:
    """Generate (train, test) splits. Pure function of the config, seed included.

    The test split reuses the planted structure and draws num_images // 5
    images (at least one) from the same process.
    """
    plan = build_synth_plan(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    train = _generate_split(cfg, plan, rng, cfg.num_images, "train")
    test = _generate_split(cfg, plan, rng, max(1, cfg.num_images // 5), "test")
    return train, test
