"""Dataset container validation, file round-trips, and frequency counts."""

import json
import logging

import numpy as np
import pytest

from conftest import make_dataset, make_image, make_vocab
from predbias import (
    Dataset,
    DatasetError,
    ImageRecord,
    ObjectInstance,
    SynthConfig,
    TripletAnnotation,
    Vocabulary,
    generate_synthetic,
    load_dataset,
    load_vocabulary,
    predicate_counts,
    predicate_frequencies,
    save_dataset,
    save_vocabulary,
)
from predbias.dataset import dataset_to_bytes


class TestVocabulary:
    def test_duplicate_object_label_rejected(self):
        with pytest.raises(DatasetError):
            Vocabulary(object_labels=["man", "man"], predicate_labels=["on", "near"])

    def test_duplicate_predicate_label_rejected(self):
        with pytest.raises(DatasetError):
            Vocabulary(object_labels=["man", "dog"], predicate_labels=["on", "on"])

    def test_needs_two_predicates(self):
        with pytest.raises(DatasetError):
            Vocabulary(object_labels=["man"], predicate_labels=["on"])

    def test_indices_stable_across_round_trip(self, tmp_path):
        vocab = make_vocab(5, 4)
        path = tmp_path / "vocab.json"
        save_vocabulary(vocab, path)
        loaded = load_vocabulary(path)
        assert loaded == vocab
        for i, label in enumerate(vocab.object_labels):
            assert loaded.object_index(label) == i
        for i, label in enumerate(vocab.predicate_labels):
            assert loaded.predicate_index(label) == i

    def test_digest_tracks_content(self):
        a = make_vocab(3, 3)
        b = make_vocab(3, 4)
        assert a.digest() == make_vocab(3, 3).digest()
        assert a.digest() != b.digest()


class TestRecordValidation:
    def test_self_loop_rejected(self):
        with pytest.raises(DatasetError):
            TripletAnnotation(subject_id=1, object_id=1, predicate_index=0)

    def test_duplicate_ordered_pair_rejected(self):
        objects = [ObjectInstance(0, 0), ObjectInstance(1, 1)]
        triplets = [
            TripletAnnotation(subject_id=0, object_id=1, predicate_index=0),
            TripletAnnotation(subject_id=0, object_id=1, predicate_index=1),
        ]
        with pytest.raises(DatasetError):
            ImageRecord(image_id="img0", objects=objects, triplets=triplets)

    def test_reversed_pair_is_distinct(self):
        image = make_image("img0", [0, 1], [(0, 0, 1), (1, 1, 0)])
        assert len(image.triplets) == 2

    def test_dangling_instance_id_rejected(self):
        objects = [ObjectInstance(0, 0), ObjectInstance(1, 1)]
        triplets = [TripletAnnotation(subject_id=0, object_id=9, predicate_index=0)]
        with pytest.raises(DatasetError):
            ImageRecord(image_id="img0", objects=objects, triplets=triplets)

    def test_duplicate_instance_id_rejected(self):
        with pytest.raises(DatasetError):
            ImageRecord(
                image_id="img0",
                objects=[ObjectInstance(0, 0), ObjectInstance(0, 1)],
                triplets=[],
            )

    def test_bbox_needs_positive_extent(self):
        with pytest.raises(DatasetError):
            ObjectInstance(instance_id=0, label_index=0, bbox=(0, 0, 0, 5))

    def test_label_out_of_vocabulary_rejected(self):
        vocab = make_vocab(2, 2)
        image = make_image("img0", [0, 5], [])
        with pytest.raises(DatasetError):
            make_dataset(vocab, [image])

    def test_duplicate_image_id_rejected(self):
        vocab = make_vocab(2, 2)
        images = [make_image("img0", [0, 1], []), make_image("img0", [0, 1], [])]
        with pytest.raises(DatasetError):
            make_dataset(vocab, images)


class TestFileRoundTrip:
    def test_minimal_parse(self, tmp_path):
        """One image with a single man-on-street triplet."""
        vocab = Vocabulary(object_labels=["man", "street"], predicate_labels=["on", "near"])
        path = tmp_path / "data.jsonl"
        path.write_text(
            '{"image_id": "a", "objects": [{"id": 0, "label": "man"}, '
            '{"id": 1, "label": "street"}], '
            '"triplets": [{"subj": 0, "pred": "on", "obj": 1}]}\n'
        )
        ds = load_dataset(path, vocab)
        assert ds.num_triplets == 1
        assert len(ds.images) == 1
        assert ds.images[0].triplets[0].predicate_index == 0

    def test_round_trip_identity(self, tmp_path):
        vocab = make_vocab(4, 3)
        images = [
            make_image("a", [0, 1, 2], [(0, 0, 1), (2, 1, 0)]),
            make_image("b", [3, 0], [(0, 2, 1)]),
            make_image("c", [1, 2], []),
        ]
        ds = make_dataset(vocab, images)
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        assert load_dataset(path, vocab) == ds

    def test_round_trip_synthetic(self, tmp_path):
        cfg = SynthConfig(
            num_objects=10, num_predicates=6, num_common=2, zipf_exponent=1.0,
            ambiguity_rate=0.2, num_images=60, objects_per_image=(3, 5),
            contexts_per_predicate=8, seed=3,
        )
        train, _ = generate_synthetic(cfg)
        path = tmp_path / "train.jsonl"
        save_dataset(train, path)
        assert load_dataset(path, train.vocabulary) == train

    def test_serialization_is_byte_deterministic(self, tmp_path):
        vocab = make_vocab(3, 3)
        ds = make_dataset(vocab, [make_image("a", [0, 1], [(0, 1, 1)])])
        p1, p2 = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
        save_dataset(ds, p1)
        save_dataset(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert p1.read_bytes() == dataset_to_bytes(ds)

    def test_empty_test_split_round_trips(self, tmp_path):
        vocab = make_vocab(2, 2)
        ds = make_dataset(vocab, [], split_tag="test")
        path = tmp_path / "empty.jsonl"
        save_dataset(ds, path)
        loaded = load_dataset(path, vocab, split_tag="test")
        assert loaded.images == ()

    def test_empty_train_split_rejected(self):
        with pytest.raises(DatasetError, match="at least one triplet"):
            make_dataset(make_vocab(2, 2), [])

    def test_bbox_preserved(self, tmp_path):
        vocab = make_vocab(2, 2)
        image = ImageRecord(
            image_id="a",
            objects=[
                ObjectInstance(0, 0, bbox=(1.0, 2.0, 3.0, 4.0)),
                ObjectInstance(1, 1),
            ],
            triplets=[TripletAnnotation(subject_id=0, object_id=1, predicate_index=0)],
        )
        ds = make_dataset(vocab, [image])
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        loaded = load_dataset(path, vocab)
        assert loaded.images[0].objects[0].bbox == (1.0, 2.0, 3.0, 4.0)
        assert loaded.images[0].objects[1].bbox is None


class TestLoadErrors:
    def test_parse_error_reports_line_number(self, tmp_path):
        vocab = make_vocab(2, 2)
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"image_id": "a", "objects": [], "triplets": []}\n'
            "this is not json\n"
        )
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(path, vocab)

    def test_unknown_label_rejected(self, tmp_path):
        vocab = Vocabulary(object_labels=["man"], predicate_labels=["on", "near"])
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"image_id": "a", "objects": [{"id": 0, "label": "spaceship"}], "triplets": []}\n'
        )
        with pytest.raises(DatasetError, match="spaceship"):
            load_dataset(path, vocab)

    def test_dangling_id_names_the_image(self, tmp_path):
        vocab = Vocabulary(object_labels=["man", "street"], predicate_labels=["on", "near"])
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"image_id": "img_7", "objects": [{"id": 0, "label": "man"}], '
            '"triplets": [{"subj": 0, "pred": "on", "obj": 99}]}\n'
        )
        with pytest.raises(DatasetError, match="img_7"):
            load_dataset(path, vocab)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "absent.jsonl", make_vocab(2, 2))

    def test_duplicate_pair_deduplicated_keep_first(self, tmp_path, caplog):
        """A repeated ordered pair in a file keeps the first annotation only."""
        vocab = Vocabulary(object_labels=["man", "street"], predicate_labels=["on", "near"])
        path = tmp_path / "dup.jsonl"
        record = {
            "image_id": "a",
            "objects": [{"id": 0, "label": "man"}, {"id": 1, "label": "street"}],
            "triplets": [
                {"subj": 0, "pred": "near", "obj": 1},
                {"subj": 0, "pred": "on", "obj": 1},
            ],
        }
        path.write_text(json.dumps(record) + "\n")
        with caplog.at_level(logging.WARNING):
            ds = load_dataset(path, vocab)
        assert ds.num_triplets == 1
        assert ds.images[0].triplets[0].predicate_index == 1
        assert any("1" in rec.message and "duplicate" in rec.message for rec in caplog.records)


class TestPredicateFrequencies:
    def test_direct_count(self):
        vocab = make_vocab(3, 2)
        images = [
            make_image("a", [0, 1], [(0, 0, 1)]),
            make_image("b", [0, 1, 2], [(0, 0, 1), (1, 1, 2)]),
        ]
        ds = make_dataset(vocab, images)
        np.testing.assert_allclose(predicate_frequencies(ds), [2 / 3, 1 / 3])

    def test_single_predicate_dataset(self):
        vocab = make_vocab(2, 3)
        ds = make_dataset(vocab, [make_image("a", [0, 1], [(0, 2, 1), (1, 2, 0)])])
        np.testing.assert_array_equal(predicate_frequencies(ds), [0.0, 0.0, 1.0])

    def test_empty_dataset_rejected(self):
        ds = make_dataset(make_vocab(2, 2), [], split_tag="test")
        with pytest.raises(DatasetError):
            predicate_frequencies(ds)

    def test_sums_to_one(self):
        cfg = SynthConfig(
            num_objects=12, num_predicates=8, num_common=3, zipf_exponent=1.2,
            ambiguity_rate=0.3, num_images=80, objects_per_image=(3, 6),
            contexts_per_predicate=6, seed=11,
        )
        train, _ = generate_synthetic(cfg)
        assert abs(predicate_frequencies(train).sum() - 1.0) < 1e-12

    def test_permutation_equivariance(self):
        """Relabeling predicates permutes the frequency vector accordingly."""
        rng = np.random.default_rng(5)
        vocab = make_vocab(4, 5)
        images = []
        for i in range(30):
            preds = rng.integers(0, 5, size=2)
            images.append(
                make_image(f"img{i}", [0, 1, 2], [(0, int(preds[0]), 1), (1, int(preds[1]), 2)])
            )
        ds = make_dataset(vocab, images)
        perm = rng.permutation(5)
        permuted_vocab = Vocabulary(
            object_labels=list(vocab.object_labels),
            predicate_labels=[vocab.predicate_labels[int(j)] for j in perm],
        )
        inverse = np.argsort(perm)
        permuted_images = [
            make_image(
                img.image_id,
                [obj.label_index for obj in img.objects],
                [(t.subject_id, int(inverse[t.predicate_index]), t.object_id) for t in img.triplets],
            )
            for img in ds.images
        ]
        permuted = make_dataset(permuted_vocab, permuted_images)
        np.testing.assert_allclose(
            predicate_frequencies(permuted),
            predicate_frequencies(ds)[perm],
        )

    def test_matches_independent_recount(self):
        """Counts agree with a one-pass tally done by hand."""
        cfg = SynthConfig(
            num_objects=15, num_predicates=20, num_common=5, zipf_exponent=1.5,
            ambiguity_rate=0.3, num_images=200, objects_per_image=(3, 6),
            contexts_per_predicate=8, seed=7,
        )
        train, _ = generate_synthetic(cfg)
        tally = np.zeros(20, dtype=np.int64)
        for image in train.images:
            for t in image.triplets:
                tally[t.predicate_index] += 1
        np.testing.assert_array_equal(predicate_counts(train), tally)
        np.testing.assert_allclose(
            predicate_frequencies(train), tally / tally.sum(), atol=0, rtol=0
        )
