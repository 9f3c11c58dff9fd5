"""Relationship-triplet dataset model and line-delimited JSON I/O.

A dataset is a vocabulary (object labels, predicate labels) plus a list of
images. Each image holds object instances and at most one predicate
annotation per ordered instance pair. Validation is total: any structure
that constructs successfully satisfies every invariant below.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np

from .artifacts import canonical_json_bytes, sha256_of_bytes, write_bytes_once
from .errors import DatasetError

logger = logging.getLogger(__name__)

SPLIT_TAGS = ("train", "val", "test", "adjusted")


@dataclass(frozen=True)
class Vocabulary:
    """Stable label-index mapping for object and predicate names."""

    object_labels: tuple[str, ...]
    predicate_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "object_labels", tuple(self.object_labels))
        object.__setattr__(self, "predicate_labels", tuple(self.predicate_labels))
        if len(self.object_labels) < 1:
            raise DatasetError("vocabulary needs at least one object label")
        if len(self.predicate_labels) < 2:
            raise DatasetError("vocabulary needs at least two predicate labels")
        if len(set(self.object_labels)) != len(self.object_labels):
            raise DatasetError("duplicate object labels in vocabulary")
        if len(set(self.predicate_labels)) != len(self.predicate_labels):
            raise DatasetError("duplicate predicate labels in vocabulary")

    @property
    def num_objects(self) -> int:
        return len(self.object_labels)

    @property
    def num_predicates(self) -> int:
        return len(self.predicate_labels)

    @cached_property
    def _object_index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.object_labels)}

    @cached_property
    def _predicate_index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.predicate_labels)}

    def object_index(self, label: str) -> int:
        try:
            return self._object_index[label]
        except KeyError:
            raise DatasetError(f"unknown object label {label!r}") from None

    def predicate_index(self, label: str) -> int:
        try:
            return self._predicate_index[label]
        except KeyError:
            raise DatasetError(f"unknown predicate label {label!r}") from None

    def to_dict(self) -> dict:
        return {
            "object_labels": list(self.object_labels),
            "predicate_labels": list(self.predicate_labels),
        }

    def digest(self) -> str:
        """Content digest of the canonical form; used to pin artifacts to a vocabulary."""
        return sha256_of_bytes(canonical_json_bytes(self.to_dict()))


@dataclass(frozen=True)
class ObjectInstance:
    """One detected/annotated object in an image. bbox is (x, y, w, h) or None."""

    instance_id: int
    label_index: int
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        if type(self.instance_id) is not int or self.instance_id < 0:
            raise DatasetError(f"instance_id must be a non-negative int, got {self.instance_id!r}")
        if type(self.label_index) is not int or self.label_index < 0:
            raise DatasetError(f"label_index must be a non-negative int, got {self.label_index!r}")
        if self.bbox is not None:
            bbox = tuple(float(v) for v in self.bbox)
            if len(bbox) != 4:
                raise DatasetError("bbox must have exactly four entries (x, y, w, h)")
            if bbox[2] <= 0 or bbox[3] <= 0:
                raise DatasetError(f"bbox width/height must be positive, got {bbox}")
            object.__setattr__(self, "bbox", bbox)


@dataclass(frozen=True)
class TripletAnnotation:
    """Ordered (subject, predicate, object) annotation over instance ids."""

    subject_id: int
    predicate_index: int
    object_id: int

    def __post_init__(self) -> None:
        for name in ("subject_id", "object_id", "predicate_index"):
            value = getattr(self, name)
            if type(value) is not int or value < 0:
                raise DatasetError(f"{name} must be a non-negative int, got {value!r}")
        if self.subject_id == self.object_id:
            raise DatasetError(f"subject and object must differ, both are {self.subject_id}")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    objects: tuple[ObjectInstance, ...]
    triplets: tuple[TripletAnnotation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "triplets", tuple(self.triplets))
        if not isinstance(self.image_id, str) or not self.image_id:
            raise DatasetError(f"image_id must be a non-empty string, got {self.image_id!r}")
        ids = [o.instance_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise DatasetError(f"duplicate instance_id in image {self.image_id!r}")
        known = set(ids)
        pairs: set[tuple[int, int]] = set()
        for t in self.triplets:
            if t.subject_id not in known:
                raise DatasetError(f"dangling subject_id {t.subject_id} in image {self.image_id!r}")
            if t.object_id not in known:
                raise DatasetError(f"dangling object_id {t.object_id} in image {self.image_id!r}")
            pair = (t.subject_id, t.object_id)
            if pair in pairs:
                raise DatasetError(f"duplicate pair annotation {pair} in image {self.image_id!r}")
            pairs.add(pair)

    @cached_property
    def label_by_id(self) -> dict[int, int]:
        return {o.instance_id: o.label_index for o in self.objects}


@dataclass(frozen=True)
class Dataset:
    vocabulary: Vocabulary
    images: tuple[ImageRecord, ...]
    split_tag: str = "train"

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", tuple(self.images))
        if self.split_tag not in SPLIT_TAGS:
            raise DatasetError(f"split_tag must be one of {SPLIT_TAGS}, got {self.split_tag!r}")
        num_objects = self.vocabulary.num_objects
        num_predicates = self.vocabulary.num_predicates
        seen_ids: set[str] = set()
        total = 0
        for image in self.images:
            if image.image_id in seen_ids:
                raise DatasetError(f"duplicate image_id {image.image_id!r}")
            seen_ids.add(image.image_id)
            for obj in image.objects:
                if obj.label_index >= num_objects:
                    raise DatasetError(
                        f"label_index {obj.label_index} out of range in image {image.image_id!r}"
                    )
            for t in image.triplets:
                if t.predicate_index >= num_predicates:
                    raise DatasetError(
                        f"predicate_index {t.predicate_index} out of range in image {image.image_id!r}"
                    )
            total += len(image.triplets)
        if self.split_tag == "train" and total < 1:
            raise DatasetError("a train split needs at least one triplet")

    @property
    def num_triplets(self) -> int:
        return sum(len(img.triplets) for img in self.images)

    def iter_triplets(self) -> Iterator[tuple[ImageRecord, TripletAnnotation]]:
        for image in self.images:
            for t in image.triplets:
                yield image, t


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    data = (json.dumps(vocab.to_dict(), sort_keys=True, indent=2, ensure_ascii=True) + "\n").encode()
    write_bytes_once(path, data)


def load_vocabulary(path: str | Path) -> Vocabulary:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"vocabulary file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"vocabulary file {path} is not valid JSON: {exc}") from exc
    for key in ("object_labels", "predicate_labels"):
        if key not in doc or not isinstance(doc[key], list):
            raise DatasetError(f"vocabulary file {path} is missing the {key!r} array")
    return Vocabulary(tuple(doc["object_labels"]), tuple(doc["predicate_labels"]))


def _image_to_line(image: ImageRecord, vocab: Vocabulary) -> str:
    objects = []
    for o in image.objects:
        entry: dict = {"id": o.instance_id, "label": vocab.object_labels[o.label_index]}
        if o.bbox is not None:
            entry["bbox"] = list(o.bbox)
        objects.append(entry)
    triplets = [
        {"subj": t.subject_id, "pred": vocab.predicate_labels[t.predicate_index], "obj": t.object_id}
        for t in image.triplets
    ]
    doc = {"image_id": image.image_id, "objects": objects, "triplets": triplets}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def dataset_to_bytes(ds: Dataset) -> bytes:
    lines = [_image_to_line(image, ds.vocabulary) for image in ds.images]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write one image per line. Byte-deterministic for a given dataset."""
    write_bytes_once(path, dataset_to_bytes(ds))


def dataset_digest(ds: Dataset) -> str:
    return sha256_of_bytes(dataset_to_bytes(ds))


def _parse_image(doc: dict, vocab: Vocabulary, line_no: int) -> tuple[ImageRecord, int]:
    where = f"line {line_no}"
    if not isinstance(doc, dict):
        raise DatasetError(f"{where}: expected a JSON object per line")
    image_id = doc.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise DatasetError(f"{where}: missing or invalid image_id")
    objects = []
    for entry in doc.get("objects", []):
        if not isinstance(entry, dict) or "id" not in entry or "label" not in entry:
            raise DatasetError(f"{where}: malformed object entry in image {image_id!r}")
        if not isinstance(entry["id"], int) or isinstance(entry["id"], bool):
            raise DatasetError(f"{where}: object id must be an integer in image {image_id!r}")
        try:
            label_index = vocab.object_index(entry["label"])
        except DatasetError as exc:
            raise DatasetError(f"{where}: {exc}") from None
        bbox = entry.get("bbox")
        if bbox is not None:
            if not isinstance(bbox, list) or len(bbox) != 4:
                raise DatasetError(f"{where}: bbox must be a 4-element array in image {image_id!r}")
            bbox = tuple(float(v) for v in bbox)
        try:
            objects.append(ObjectInstance(entry["id"], label_index, bbox))
        except DatasetError as exc:
            raise DatasetError(f"{where}: {exc}") from None
    triplets = []
    seen_pairs: set[tuple[int, int]] = set()
    dropped = 0
    for entry in doc.get("triplets", []):
        if not isinstance(entry, dict) or not {"subj", "pred", "obj"} <= set(entry):
            raise DatasetError(f"{where}: malformed triplet entry in image {image_id!r}")
        try:
            pred = vocab.predicate_index(entry["pred"])
        except DatasetError as exc:
            raise DatasetError(f"{where}: {exc}") from None
        pair = (entry["subj"], entry["obj"])
        if pair in seen_pairs:
            dropped += 1  # keep the first annotation for a pair, count the rest
            continue
        seen_pairs.add(pair)
        try:
            triplets.append(TripletAnnotation(entry["subj"], pred, entry["obj"]))
        except DatasetError as exc:
            raise DatasetError(f"{where}: {exc}") from None
    try:
        return ImageRecord(image_id, tuple(objects), tuple(triplets)), dropped
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def load_dataset(path: str | Path, vocab: Vocabulary, split_tag: str = "train") -> Dataset:
    """Load a line-delimited dataset file, resolving labels against ``vocab``.

    Repeated annotations for the same ordered pair within an image are
    dropped keep-first; the total dropped count is logged as a warning.
    Everything else malformed is rejected with the offending line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DatasetError(f"dataset file not found: {path}") from None
    images = []
    dropped_total = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {line_no}: parse error: {exc.msg}") from None
        image, dropped = _parse_image(doc, vocab, line_no)
        images.append(image)
        dropped_total += dropped
    if dropped_total:
        logger.warning("dropped %d duplicate pair annotation(s) while loading %s", dropped_total, path)
    return Dataset(vocab, tuple(images), split_tag)


def predicate_frequencies(ds: Dataset) -> np.ndarray:
    """Empirical predicate marginal over all triplets. Sums to 1."""
    counts = np.zeros(ds.vocabulary.num_predicates, dtype=np.int64)
    for _, t in ds.iter_triplets():
        counts[t.predicate_index] += 1
    total = int(counts.sum())
    if total == 0:
        raise DatasetError("cannot compute predicate frequencies of an empty dataset")
    return counts / total


def predicate_counts(ds: Dataset) -> np.ndarray:
    counts = np.zeros(ds.vocabulary.num_predicates, dtype=np.int64)
    for _, t in ds.iter_triplets():
        counts[t.predicate_index] += 1
    return counts
