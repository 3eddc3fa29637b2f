"""
地理令牌系统 - token 标签测试
/tests/test_tags.py
"""
import pytest

from geotoken.backend.data.geodata import generate_dataset, make_sample
from geotoken.backend.data.tags import (
    TokenGeoTag,
    assign_token_coordinates,
    build_target,
    randomize_tags,
    tag_segments,
)
from geotoken.backend.data.vocab import TokenSeq, default_vocab, tokenize
from geotoken.backend.encoding.spherical import GeoAngles
from geotoken.backend.errors import DomainError, ParseError, SequenceLengthError


class TestAssignTokenCoordinates:

    def test_example_segments(self, example_sample):
        tokens = tokenize(example_sample.input_text, default_vocab)
        tags = assign_token_coordinates(example_sample, tokens)
        assert len(tags) == len(tokens) == 31

        origin = GeoAngles.from_degrees(46.4157, 21.0756)
        assert all(t == origin for t in tags.tags[:15])
        assert tags.tags[15] is None
        assert tags.tags[-1] is None

        lat, lon = tags.tags[16].to_degrees()
        assert lat == pytest.approx(46.3733, abs=1e-9)
        assert lon == pytest.approx(21.0888, abs=1e-9)
        assert len(set(tags.tags[16:30])) == 1

    def test_zero_displacement_shares_one_tag(self):
        sample = make_sample(-12.5, 100.25, 0.0, 0.0)
        tags = assign_token_coordinates(sample, tokenize(sample.input_text, default_vocab))
        non_special = {t for t in tags if t is not None}
        assert len(non_special) == 1

    def test_destination_longitude_wraps(self):
        sample = make_sample(0.0, 179.0, 0.0, 2.0)
        tags = assign_token_coordinates(sample, tokenize(sample.input_text, default_vocab))
        _, lon = tags.tags[-2].to_degrees()
        assert lon == pytest.approx(-179.0, abs=1e-9)

    def test_empty_displacement_rejected(self, example_sample):
        tokens = tokenize("46.4157,21.0756+,", default_vocab)
        with pytest.raises(ParseError):
            assign_token_coordinates(example_sample, tokens)

    def test_missing_eos_rejected(self, example_sample):
        ids = list(tokenize(example_sample.input_text, default_vocab))[:-1]
        with pytest.raises(ParseError):
            assign_token_coordinates(example_sample, TokenSeq(ids=tuple(ids)))

    def test_text_of_another_sample_rejected(self, example_sample):
        other = make_sample(1.0, 2.0, 3.0, 4.0)
        with pytest.raises(ParseError):
            assign_token_coordinates(example_sample, tokenize(other.input_text, default_vocab))


class TestTokenGeoTag:

    def test_identity(self):
        tags = TokenGeoTag.identity(4)
        assert len(tags) == 4 and tags.is_identity

    def test_shifted_keeps_missing_tags(self):
        a = GeoAngles(0.1, 0.2)
        tags = TokenGeoTag(tags=(a, None)).shifted(dlon=0.5)
        assert tags.tags[1] is None
        assert tags.tags[0].lon_theta == pytest.approx(0.7)

    def test_blocks_shape(self, example_sample):
        tokens = tokenize(example_sample.input_text, default_vocab)
        assert assign_token_coordinates(example_sample, tokens).blocks().shape == (len(tokens), 3, 3)

    def test_tag_segments_with_custom_angles(self, example_sample):
        tokens = tokenize(example_sample.input_text, default_vocab)
        a, b = GeoAngles(0.3, -0.3), GeoAngles(-0.2, 1.0)
        tags = tag_segments(tokens, a, b)
        assert tags.tags[0] == a and tags.tags[20] == b


class TestRandomizeTags:

    def test_deterministic(self):
        dataset = generate_dataset(20, seed=4)
        assert randomize_tags(dataset, seed=9) == randomize_tags(dataset, seed=9)
        assert randomize_tags(dataset, seed=9) != randomize_tags(dataset, seed=10)

    def test_segment_structure_matches_true_tags(self):
        dataset = generate_dataset(20, seed=4)
        for sample, fake in zip(dataset, randomize_tags(dataset, seed=1)):
            tokens = tokenize(sample.input_text, default_vocab)
            true = assign_token_coordinates(sample, tokens)
            assert [t is None for t in fake] == [t is None for t in true]
            assert fake != true

    def test_latitudes_in_range(self):
        dataset = generate_dataset(50, seed=4)
        for tags in randomize_tags(dataset, seed=2):
            for t in tags:
                if t is not None:
                    lat, lon = t.to_degrees()
                    assert -90.0 <= lat <= 90.0
                    assert -180.0 <= lon < 180.0

    def test_empty_dataset(self):
        with pytest.raises(DomainError):
            randomize_tags([], seed=0)


class TestBuildTarget:

    def test_padding_and_mask(self, example_sample):
        length = len(tokenize(example_sample.input_text, default_vocab))
        target, mask = build_target(example_sample, length)
        n = len(example_sample.target_text) + 1
        assert len(target) == len(mask) == length
        assert target[n - 1] == default_vocab.eos_id
        assert all(t == default_vocab.pad_id for t in target[n:])
        assert mask == [False] * n + [True] * (length - n)

    def test_target_longer_than_input(self, example_sample):
        with pytest.raises(SequenceLengthError):
            build_target(example_sample, 3)
