"""Illumination invariance, GIST, LDB, ORB, vocabulary/BoW, CNN ingestion and descriptor sets."""

import cv2
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from mpr.dataset import Modality
from mpr.descriptors import (
    VALID_CHANNELS,
    DescriptorKind,
    DescriptorVector,
    ExtractionParams,
    GistParams,
    check_channels,
    detect_and_describe,
    extract_all,
    extract_bow,
    extract_gist,
    extract_ldb,
    illumination_invariant_log,
    illumination_invariant_transform,
    ingest_external_descriptor,
    ldb_length,
    parse_channel,
)
from mpr.descriptors.cnn import write_f32
from mpr.descriptors.illumination import DEFAULT_ALPHA
from mpr.descriptors.vocabulary import Vocabulary, build_vocabulary
from mpr.errors import (
    DimensionMismatch,
    EmptyImage,
    InsufficientFeatures,
    InvalidChannel,
    MissingModality,
    ParseError,
    WrongChannelCount,
)

bgr_images = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12), st.just(3)))


def checkerboard(size=64, square=8):
    yy, xx = np.mgrid[:size, :size]
    return (((yy // square) + (xx // square)) % 2 * 255).astype(np.uint8)


def textured(seed=0, shape=(240, 320)):
    rng = np.random.default_rng(seed)
    img = cv2.GaussianBlur(rng.integers(0, 256, shape, np.uint8), (0, 0), 2.0)
    return cv2.normalize(img, None, 0, 255, cv2.NORM_MINMAX)


class TestIllumination:
    def test_default_alpha(self):
        """The sensor constant defaults to 0.48."""
        assert DEFAULT_ALPHA == 0.48

    @pytest.mark.parametrize("alpha", [0.1, 0.48, 0.9])
    def test_gray_pixels_give_one_half(self, alpha):
        """For R=G=B the logs cancel and the invariant is exactly 0.5."""
        img = np.repeat(np.arange(0, 256, 5, dtype=np.uint8)[:, None, None], 3, axis=2)
        assert np.allclose(illumination_invariant_log(img, alpha), 0.5, atol=1e-12)

    @given(bgr_images, st.floats(0.05, 0.95))
    def test_matches_per_pixel_formula(self, img, alpha):
        """Agrees with the reference formula on random images."""
        assert np.allclose(illumination_invariant_log(img, alpha), oracles.illumination_invariant(img, alpha))

    def test_exposure_change_is_a_constant_offset(self):
        """Doubling exposure shifts the pre-rescale invariant by one constant."""
        base = np.random.default_rng(3).integers(0, 128, (32, 32, 3), np.uint8)
        bright = (2 * base.astype(np.int64) + 1).astype(np.uint8)  # X' doubles exactly
        delta = illumination_invariant_log(bright) - illumination_invariant_log(base)
        assert np.ptp(delta) < 1e-12
        # each log term moves by log 2 and the weights 1, -alpha, -(1 - alpha) sum to zero
        assert abs(delta.flat[0]) < 1e-12

    def test_gray_image_maps_to_constant_raster(self):
        """Any gray image rescales to a flat 8-bit image."""
        img = np.dstack([textured(1, (20, 30))] * 3)
        out = illumination_invariant_transform(img)
        assert out.dtype == np.uint8 and out.shape == (20, 30)
        assert out.min() == out.max()

    def test_rescaled_to_full_range(self):
        """A colourful image spans 0..255 after rescaling."""
        rng = np.random.default_rng(4)
        out = illumination_invariant_transform(rng.integers(0, 256, (16, 16, 3), np.uint8))
        assert out.min() == 0 and out.max() == 255

    @pytest.mark.parametrize("shape", [(8, 8), (8, 8, 4), (8, 8, 1)])
    def test_wrong_channel_count(self, shape):
        """Anything but three channels is rejected."""
        with pytest.raises(WrongChannelCount):
            illumination_invariant_transform(np.zeros(shape, np.uint8))

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2])
    def test_alpha_domain(self, alpha):
        """alpha must lie strictly between 0 and 1."""
        with pytest.raises(ValueError):
            illumination_invariant_transform(np.zeros((2, 2, 3), np.uint8), alpha)


class TestGist:
    def test_default_dimension(self):
        """4 scales x 8 orientations x 4x4 cells = 512."""
        assert GistParams().dimension == 512
        assert extract_gist(textured()).shape == (512,)

    def test_constant_image_all_zero(self):
        """Contrast normalisation leaves no signal in a flat image."""
        assert not extract_gist(np.full((240, 320), 77, np.uint8)).any()

    def test_deterministic(self):
        """The same image twice gives bit-identical vectors."""
        img = textured(5)
        assert extract_gist(img).tobytes() == extract_gist(img.copy()).tobytes()

    def test_rotation_preserves_energy(self):
        """A 90 degree rotation keeps the descriptor norm within 2%."""
        img = textured(6, (128, 128))
        a = np.linalg.norm(extract_gist(img))
        b = np.linalg.norm(extract_gist(np.rot90(img).copy()))
        assert abs(a - b) / a < 0.02

    @pytest.mark.parametrize("seed", [0, 1])
    def test_matches_double_precision_reference(self, seed):
        """Equals an independent float64 FFT implementation to single precision."""
        img = textured(seed, (128, 128))
        assert img.min() == 0 and img.max() == 255
        ref = oracles.gist_reference(img.astype(np.float64))
        out = extract_gist(img)
        assert np.allclose(out, ref, rtol=1e-4, atol=1e-5 * ref.max())

    def test_bgr_input_accepted(self):
        """Colour images are converted to gray first."""
        img = textured(7)
        assert np.array_equal(extract_gist(np.dstack([img] * 3)), extract_gist(img))

    def test_empty_image(self):
        """A zero-size image is EmptyImage."""
        with pytest.raises(EmptyImage):
            extract_gist(np.zeros((0, 10), np.uint8))


class TestLdb:
    def test_default_length(self):
        """3 * (6 + 36 + 120 + 300) = 1386 bits."""
        assert ldb_length() == 1386 == 3 * (6 + 36 + 120 + 300)
        assert extract_ldb(textured()).shape == (1386,)

    @pytest.mark.parametrize("levels", [(2,), (3, 5), (1, 2, 3, 4, 5, 6)])
    def test_length_formula_against_enumeration(self, levels):
        """The closed form equals counting pairs directly."""
        assert ldb_length(levels) == oracles.ldb_length_by_enumeration(levels)
        assert extract_ldb(textured(), levels).size == ldb_length(levels)

    def test_constant_image_all_zero(self):
        """Every comparison ties and ties emit 0."""
        assert not extract_ldb(np.full((240, 320), 200, np.uint8)).any()

    def test_self_distance_zero(self):
        """An image compared with itself differs in no bit."""
        img = textured(8)
        assert np.count_nonzero(extract_ldb(img) ^ extract_ldb(img)) == 0

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_loop_reference(self, seed):
        """Bit-identical to a per-cell, per-pair reference on the 64x64 raster."""
        img = textured(seed)
        small = cv2.resize(img, (64, 64), interpolation=cv2.INTER_AREA)
        assert np.array_equal(extract_ldb(img), oracles.ldb_bits(small))

    def test_level_order_is_ascending(self):
        """Levels given out of order produce the ascending-order code."""
        img = textured(9)
        assert np.array_equal(extract_ldb(img, (4, 2)), extract_ldb(img, (2, 4)))

    def test_empty_image(self):
        """A zero-size image is EmptyImage."""
        with pytest.raises(EmptyImage):
            extract_ldb(np.zeros((5, 0), np.uint8))


class TestOrb:
    def test_constant_image_no_features(self):
        """No corners, no features."""
        assert detect_and_describe(np.full((64, 64), 128, np.uint8)).shape == (0, 32)

    def test_checkerboard_has_corners(self):
        """A 64x64 checkerboard yields at least 20 keypoints."""
        assert len(detect_and_describe(checkerboard())) >= 20

    def test_deterministic(self):
        """The same image gives the same descriptors in the same order."""
        img = textured(10)
        assert np.array_equal(detect_and_describe(img), detect_and_describe(img.copy()))

    def test_truncation_keeps_strongest(self):
        """Lowering max_keypoints keeps a prefix of the response-sorted list."""
        img = textured(11)
        full = detect_and_describe(img, 500)
        few = detect_and_describe(img, 40)
        assert len(few) == 40 and np.array_equal(few, full[:40])

    def test_packed_256_bit(self):
        """Each feature is 32 bytes."""
        f = detect_and_describe(textured(12))
        assert f.dtype == np.uint8 and f.shape[1] == 32

    def test_max_keypoints_domain(self):
        """At least one keypoint must be allowed."""
        with pytest.raises(ValueError):
            detect_and_describe(textured(), 0)


class TestVocabulary:
    def test_identical_features_single_word(self):
        """Ten copies of one feature make a one-word tree, not an error."""
        f = np.tile(np.arange(32, dtype=np.uint8), (10, 1))
        vocab = build_vocabulary(f, k=2, depth=3)
        assert vocab.word_count == 1
        assert set(vocab.quantize(f).tolist()) == {0}

    def test_fewer_features_than_k(self):
        """Clusters cannot be seeded from fewer than k features."""
        with pytest.raises(InsufficientFeatures):
            build_vocabulary(np.zeros((3, 32), np.uint8), k=4)

    def test_capacity_bound(self):
        """k=10, L=3 on 10,000 random features has at most 1000 words."""
        f = np.random.default_rng(0).integers(0, 256, (10_000, 32), np.uint8)
        vocab = build_vocabulary(f, 10, 3, 0)
        assert 1 < vocab.word_count <= 1000

    def test_seeded_bit_identical(self):
        """Same seed and input serialise to identical bytes."""
        f = np.random.default_rng(1).integers(0, 256, (600, 32), np.uint8)
        assert build_vocabulary(f, 4, 3, 7).to_bytes() == build_vocabulary(f, 4, 3, 7).to_bytes()

    def test_serialisation_round_trip(self, tmp_path, vocab):
        """Saving and loading reproduces the tree exactly."""
        vocab.save(tmp_path / "v.bin")
        back = Vocabulary.load(tmp_path / "v.bin")
        assert back == vocab and back.to_bytes() == vocab.to_bytes()

    def test_bad_magic(self):
        """Foreign files are rejected."""
        with pytest.raises(ParseError):
            Vocabulary.from_bytes(b"NOTAVOC!" + bytes(12))

    def test_truncated_file(self, vocab):
        """A cut-off node table is rejected."""
        with pytest.raises(ParseError):
            Vocabulary.from_bytes(vocab.to_bytes()[:-5])

    def test_word_ids_are_stable_and_dense(self, vocab):
        """Leaves carry ids 0..W-1 once each."""
        ids = vocab.words[vocab.words >= 0]
        assert sorted(ids.tolist()) == list(range(vocab.word_count))
        assert vocab.word_count <= vocab.k ** vocab.depth

    def test_quantize_matches_reference_descent(self, vocab):
        """Vectorised descent equals a node-by-node reference."""
        f = np.random.default_rng(2).integers(0, 256, (150, 32), np.uint8)
        assert vocab.quantize(f).tolist() == [oracles.descend(vocab, x) for x in f]


class TestBow:
    def test_single_word_histogram(self, vocab):
        """Features that all land on one word give a one-hot histogram."""
        leaf = int(np.flatnonzero(vocab.words == 7)[0])
        feats = np.tile(vocab.medoids[leaf], (5, 1))
        word = vocab.quantize(feats[:1])[0]
        vec = extract_bow(feats, vocab)
        assert vec.payload[word] == 1.0 and vec.payload.sum() == 1.0

    def test_empty_feature_list_degenerate(self, vocab):
        """No features gives a zero vector flagged degenerate."""
        vec = extract_bow(np.zeros((0, 32), np.uint8), vocab)
        assert vec.degenerate and not vec.payload.any()
        assert vec.dimension == vocab.word_count

    @given(st.integers(1, 300), st.integers(0, 10_000))
    def test_histogram_sums_to_one(self, vocab, n, seed):
        """Any non-empty input yields non-negative entries summing to 1 +- 1e-9."""
        f = np.random.default_rng(seed).integers(0, 256, (n, 32), np.uint8)
        p = extract_bow(f, vocab).payload
        assert (p >= 0).all() and abs(p.sum() - 1.0) <= 1e-9


class TestCnn:
    def test_unit_norm(self, tmp_path):
        """256 floats with expected dimension 256 come back L2-normalised."""
        write_f32(tmp_path / "a.f32", np.random.default_rng(0).normal(size=256))
        vec = ingest_external_descriptor(tmp_path / "a.f32", 256)
        assert abs(np.linalg.norm(vec.payload) - 1.0) <= 1e-6
        assert vec.channel == (DescriptorKind.CNN, Modality.COLOR)

    def test_dimension_mismatch(self, tmp_path):
        """200 floats where 256 are expected is DimensionMismatch."""
        write_f32(tmp_path / "a.f32", np.ones(200))
        with pytest.raises(DimensionMismatch):
            ingest_external_descriptor(tmp_path / "a.f32", 256)

    def test_zero_vector(self, tmp_path):
        """A zero vector cannot be normalised."""
        write_f32(tmp_path / "a.f32", np.zeros(256))
        with pytest.raises(ParseError):
            ingest_external_descriptor(tmp_path / "a.f32", 256)

    def test_ragged_file(self, tmp_path):
        """A byte count that is not a multiple of 4 is ParseError."""
        (tmp_path / "a.f32").write_bytes(b"\x00" * 10)
        with pytest.raises(ParseError):
            ingest_external_descriptor(tmp_path / "a.f32")


class TestDescriptorSets:
    def test_channel_matrix(self):
        """Nine valid channels: LDB and GIST on every modality, BoW on colour and infrared, CNN on colour."""
        names = {f"{k.value}.{m.dirname}" for k, m in VALID_CHANNELS}
        assert len(VALID_CHANNELS) == 9
        assert names == {
            "bow.color", "bow.infrared", "gist.color", "gist.depth", "gist.infrared",
            "ldb.color", "ldb.depth", "ldb.infrared", "cnn.color",
        }

    @pytest.mark.parametrize("name", ["cnn.depth", "cnn.infrared", "bow.depth"])
    def test_invalid_channels(self, name):
        """Channels outside the matrix are InvalidChannel."""
        with pytest.raises(InvalidChannel):
            check_channels([parse_channel(name)])

    def test_all_channels_nine_entries(self, synth_pair, vocab, tmp_path):
        """Every channel enabled yields nine descriptors of stable dimension."""
        frame = synth_pair[0][0]
        write_f32(tmp_path / "000000.f32", np.arange(1, 65))
        ds = extract_all(frame, VALID_CHANNELS, vocab, tmp_path)
        assert len(ds) == 9 and ds.channels() == list(VALID_CHANNELS)
        dims = {f"{k.value}.{m.dirname}": ds[(k, m)].dimension for k, m in VALID_CHANNELS}
        assert dims["ldb.depth"] == 1386 and dims["gist.infrared"] == 512
        assert dims["bow.color"] == vocab.word_count and dims["cnn.color"] == 64

    def test_single_channel(self, synth_pair):
        """Only LDB on colour gives one entry, computed on the invariant image."""
        frame = synth_pair[0][0]
        ch = parse_channel("ldb.color")
        ds = extract_all(frame, [ch], None)
        assert len(ds) == 1
        expect = extract_ldb(illumination_invariant_transform(frame.images[Modality.COLOR]))
        assert np.array_equal(ds[ch].payload, expect)

    def test_request_cnn_depth(self, synth_pair):
        """CNN on depth is rejected before any extraction."""
        with pytest.raises(InvalidChannel):
            extract_all(synth_pair[0][0], [(DescriptorKind.CNN, Modality.DEPTH)])

    def test_missing_cnn_directory(self, synth_pair):
        """The CNN channel needs its descriptor directory."""
        with pytest.raises(MissingModality):
            extract_all(synth_pair[0][0], [parse_channel("cnn.color")])

    def test_deterministic_and_dimension_stable(self, synth_pair, vocab):
        """Repeated extraction is bit-identical and dimensions agree across frames."""
        chans = [c for c in VALID_CHANNELS if c[0] is not DescriptorKind.CNN]
        a = extract_all(synth_pair[0][2], chans, vocab)
        b = extract_all(synth_pair[0][2], chans, vocab)
        c = extract_all(synth_pair[0][5], chans, vocab)
        for ch in chans:
            assert a[ch].payload.tobytes() == b[ch].payload.tobytes()
            assert a[ch].dimension == c[ch].dimension

    def test_non_finite_payload_rejected(self):
        """Real payloads must be finite."""
        with pytest.raises(ValueError):
            DescriptorVector(DescriptorKind.GIST, Modality.COLOR, np.array([1.0, np.nan]))

    def test_custom_extraction_params(self, synth_pair):
        """LDB levels are taken from the extraction parameters."""
        ch = parse_channel("ldb.infrared")
        ds = extract_all(synth_pair[0][0], [ch], params=ExtractionParams(ldb_levels=(2, 3)))
        assert ds[ch].dimension == 3 * (6 + 36)
