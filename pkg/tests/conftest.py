"""Shared builders for hand-sized vocabularies, images, and datasets."""

from predbias import (
    Dataset,
    ImageRecord,
    ObjectInstance,
    TripletAnnotation,
    Vocabulary,
)

OBJECT_NAMES = [
    "man", "street", "dog", "snow", "car",
    "tree", "woman", "table", "chair", "horse",
]
PREDICATE_NAMES = [
    "on", "near", "holding", "standing on", "riding",
    "under", "behind", "eating",
]


def make_vocab(num_objects=4, num_predicates=3):
    objects = [
        OBJECT_NAMES[i] if i < len(OBJECT_NAMES) else f"thing{i}"
        for i in range(num_objects)
    ]
    predicates = [
        PREDICATE_NAMES[i] if i < len(PREDICATE_NAMES) else f"rel{i}"
        for i in range(num_predicates)
    ]
    return Vocabulary(object_labels=objects, predicate_labels=predicates)


def make_image(image_id, labels, triplets):
    """Build an image whose object ids are 0..len(labels)-1.

    ``triplets`` is a list of (subject_id, predicate_index, object_id).
    """
    objects = [
        ObjectInstance(instance_id=i, label_index=label)
        for i, label in enumerate(labels)
    ]
    annotations = [
        TripletAnnotation(subject_id=s, object_id=o, predicate_index=p)
        for s, p, o in triplets
    ]
    return ImageRecord(image_id=image_id, objects=objects, triplets=annotations)


def make_dataset(vocab, images, split_tag="train"):
    return Dataset(vocabulary=vocab, images=list(images), split_tag=split_tag)
