"""Unit tests for the score and self-attention datasets."""

import json

import numpy as np
import pytest

from polyattn.attention import score_attention
from polyattn.datasets import (
    Label,
    ScoreVector,
    build_selfattn_instance,
    from_document,
    instance_from_matrices,
    read_document,
    read_matrix_csv,
    realize_matrix,
    sample_score,
    sample_selfattn_instance,
    selfattn_shape,
    to_document,
    write_document,
    write_matrix_csv,
)
from polyattn.exceptions import ResourceError, ValidationError


class TestScoreDataset:
    """Tests for sample_score and ScoreVector."""

    def test_d1_has_one_spike(self):
        """Test that a D1 vector has exactly one 32 and the rest in [2, 4]."""
        s = sample_score(4, 'd1', 11)

        assert np.sum(s.entries == 32.0) == 1
        assert s.entries[s.spike_index] == 32.0
        others = np.delete(s.entries, s.spike_index)
        assert np.all((others >= 2) & (others <= 4))

    def test_d0_has_no_spike(self):
        """Test that a D0 vector has every entry in [2, 4]."""
        s = sample_score(4, Label.D0, 11)

        assert s.spike_index is None
        assert np.all((s.entries >= 2) & (s.entries <= 4))

    def test_same_seed_same_vector(self):
        """Test that sampling is deterministic in the seed."""
        np.testing.assert_array_equal(sample_score(64, 'd1', 5).entries, sample_score(64, 'd1', 5).entries)
        assert not np.array_equal(sample_score(64, 'd0', 5).entries, sample_score(64, 'd0', 6).entries)

    def test_labelled_vector_is_validated(self):
        """Test that a D0 label on an out-of-band vector raises ValidationError."""
        with pytest.raises(ValidationError, match=r"\[2, 4\]"):
            ScoreVector(np.array([2.0, 5.0]), 'd0')

    def test_spike_must_be_32(self):
        """Test that a D1 spike other than 32 is rejected."""
        with pytest.raises(ValidationError, match="32"):
            ScoreVector(np.array([2.0, 31.0]), 'd1', 1)

    def test_unknown_label(self):
        """Test that labels other than d0 / d1 are rejected."""
        with pytest.raises(ValidationError):
            sample_score(4, 'd2', 0)

    def test_realize_matrix(self):
        """Test the canonical witness A = [s, 0, 0], x = e_0."""
        pair = realize_matrix(ScoreVector(np.array([2.0, 4.0])), 3)

        np.testing.assert_array_equal(pair.matrix, [[2.0, 0.0, 0.0], [4.0, 0.0, 0.0]])
        np.testing.assert_array_equal(pair.weight, [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(pair.product(), [2.0, 4.0])

    def test_realized_pair_gives_same_attention(self):
        """Test that f of A x equals f of s."""
        s = sample_score(32, 'd1', 3)
        pair = realize_matrix(s, 4)

        np.testing.assert_array_equal(score_attention(pair.product(), 4.0).f, score_attention(s, 4.0).f)


class TestSelfAttnInstance:
    """Tests for the structured self-attention matrices."""

    def test_example_layout(self, example_instance):
        """Test the materialised n=9, d=5, t=3 layout."""
        matrix = example_instance.materialize()

        assert matrix.shape == (9, 5)
        np.testing.assert_array_equal(matrix[:, 0], [0, 1, 0, 0, 0, 0, 0, 0, 0])
        np.testing.assert_array_equal(matrix[:, -1], 0.5)
        for column in range(1, 4):
            nonzero = matrix[:, column][matrix[:, column] != 0]
            assert nonzero.shape == (3,)
            assert np.all(nonzero == 0.5)

    def test_row_sums(self, example_instance):
        """Test that the spike row sums to a + 1 and every other row to 1."""
        sums = example_instance.row_sums()

        assert sums[1] == pytest.approx(2.0)
        np.testing.assert_allclose(np.delete(sums, 1), 1.0)
        np.testing.assert_allclose(example_instance.materialize().sum(axis=1), sums)

    def test_structured_products_match_dense(self, example_instance):
        """Test matvec and rmatvec against the materialised matrix."""
        rng = np.random.default_rng(1)
        matrix = example_instance.materialize()
        v = rng.normal(size=5)
        w = rng.normal(size=9)

        np.testing.assert_allclose(example_instance.matvec(v), matrix @ v, atol=1e-14)
        np.testing.assert_allclose(example_instance.rmatvec(w), matrix.T @ w, atol=1e-14)
        np.testing.assert_array_equal(example_instance.row(1), matrix[1])

    def test_special_column(self, example_instance):
        """Test that the special Type II column holds b in the spike row."""
        assert example_instance.materialize()[1, example_instance.special_column] == 0.5

    @pytest.mark.parametrize(
        "kwargs, constraint",
        [
            ({'b': 0.4, 'c': 0.5}, "b + c = 1"),
            ({'b': 0.05, 'c': 0.95}, "b >= 0.1"),
            ({'b': 0.95, 'c': 0.05}, "c >= 0.1"),
            ({'n': 10}, "n = (d - 2) * t"),
            ({'j3': 9}, "j3 in [n]"),
            ({'a': 0.5}, "a1 >= 0.7"),
            ({'label': 'd0'}, "a0 in (0, 0.1)"),
        ],
    )
    def test_validation_names_the_constraint(self, kwargs, constraint):
        """Test that each invalid parameter raises ValidationError naming its constraint."""
        params = dict(n=9, d=5, t=3, j3=1, a=1.0, b=0.5, c=0.5, label='d1')
        params.update(kwargs)

        with pytest.raises(ValidationError) as excinfo:
            build_selfattn_instance(**params)

        assert excinfo.value.constraint == constraint

    def test_shape_completion(self):
        """Test that any two of n, d, t determine the third."""
        assert selfattn_shape(n=1024, t=32) == (1024, 34, 32)
        assert selfattn_shape(n=1024, d=34) == (1024, 34, 32)
        assert selfattn_shape(d=5, t=3) == (9, 5, 3)

    def test_shape_must_divide(self):
        """Test that t not dividing n is rejected."""
        with pytest.raises(ValidationError):
            selfattn_shape(n=10, t=3)

    def test_sampled_spike_row(self):
        """Test that the sampled spike row is in range and deterministic."""
        a = sample_selfattn_instance(1024, 34, 32, 1.0, 0.5, 0.5, 'd1', 9)
        b = sample_selfattn_instance(1024, 34, 32, 1.0, 0.5, 0.5, 'd1', 9)

        assert 0 <= a.j3 < 1024
        assert a == b

    def test_materialize_cap(self):
        """Test that materialising above the cap raises ResourceError."""
        inst = build_selfattn_instance(64, 34, 2, 0, 0.05, 0.5, 0.5, 'd0')

        with pytest.raises(ResourceError):
            inst.materialize(limit=32)

    def test_instance_from_matrices(self, example_instance):
        """Test that explicit A1 = A2 = A3 matrices are recovered."""
        matrix = example_instance.materialize()

        assert instance_from_matrices(matrix, matrix, matrix, 'd1') == example_instance

    def test_instance_from_unequal_matrices(self, example_instance):
        """Test that different A1 and A2 are rejected."""
        matrix = example_instance.materialize()
        other = matrix.copy()
        other[0, -1] = 0.4

        with pytest.raises(ValidationError, match="A1 = A2 = A3"):
            instance_from_matrices(matrix, other, matrix, 'd1')


class TestDocuments:
    """Tests for the JSON and CSV forms."""

    def test_selfattn_document_is_one_based(self, example_instance):
        """Test that j3 is written 1-based and read back 0-based."""
        doc = to_document(example_instance, 42)

        assert doc['params']['j3'] == 2
        assert doc['kind'] == 'selfattn'
        assert from_document(doc) == example_instance

    def test_score_document(self):
        """Test that a score document keeps entries and the 1-based spike."""
        s = sample_score(16, 'd1', 3)
        doc = to_document(s, 3)
        back = from_document(json.loads(json.dumps(doc)))

        assert doc['params']['spike_index'] == s.spike_index + 1
        assert back.spike_index == s.spike_index
        np.testing.assert_array_equal(back.entries, s.entries)

    def test_score_document_without_entries_is_resampled(self):
        """Test that a document with only n and seed regenerates the vector."""
        doc = {'schema_version': 1, 'kind': 'score', 'params': {'n': 16}, 'seed': 3, 'label': 'd1'}

        np.testing.assert_array_equal(from_document(doc).entries, sample_score(16, 'd1', 3).entries)

    def test_wrong_schema_version(self, example_instance):
        """Test that an unknown schema version is rejected."""
        doc = to_document(example_instance, 0)
        doc['schema_version'] = 99

        with pytest.raises(ValidationError):
            from_document(doc)

    @pytest.mark.parametrize('missing', ['d', 'j3', 'a'])
    def test_selfattn_document_missing_param(self, example_instance, missing):
        """Test that a missing parameter names the field instead of raising KeyError."""
        doc = to_document(example_instance, 0)
        del doc['params'][missing]

        with pytest.raises(ValidationError, match=rf'params\.{missing} present'):
            from_document(doc)

    def test_selfattn_document_wrong_type(self, example_instance):
        """Test that a non-integer shape parameter is rejected."""
        doc = to_document(example_instance, 0)
        doc['params']['n'] = '9'

        with pytest.raises(ValidationError, match='params.n is an integer'):
            from_document(doc)

    def test_score_document_without_entries_needs_seed(self):
        """Test that resampling a score vector requires the seed."""
        doc = {'schema_version': 1, 'kind': 'score', 'params': {'n': 16}, 'label': 'd1'}

        with pytest.raises(ValidationError, match='seed present'):
            from_document(doc)

    def test_score_document_entries_must_be_numbers(self):
        """Test that non-numeric entries are rejected."""
        doc = {'schema_version': 1, 'kind': 'score', 'params': {'n': 2, 'entries': [2.0, 'x']}, 'seed': 1}

        with pytest.raises(ValidationError, match='params.entries'):
            from_document(doc)

    def test_invalid_json_file(self, tmp_path):
        """Test that an unparsable file is a ValidationError."""
        path = tmp_path / 'broken.json'
        path.write_text('{not json', encoding='utf-8')

        with pytest.raises(ValidationError, match='valid JSON'):
            read_document(path)

    def test_write_is_byte_identical(self, tmp_path, example_instance):
        """Test that writing the same instance twice gives identical files."""
        first, second = tmp_path / 'a.json', tmp_path / 'b.json'
        write_document(to_document(example_instance, 1), first)
        write_document(to_document(example_instance, 1), second)

        assert first.read_bytes() == second.read_bytes()
        assert read_document(first) == example_instance

    def test_matrix_csv(self, tmp_path, example_instance):
        """Test that the CSV has one line per row and no header."""
        path = tmp_path / 'a.csv'
        write_matrix_csv(example_instance.materialize(), path)
        lines = path.read_text(encoding='utf-8').splitlines()

        assert len(lines) == 9
        assert lines[1].split(',') == ['1', '0', '0.5', '0', '0.5']

    def test_matrix_csv_reads_back(self, tmp_path, example_instance):
        """Test that read_matrix_csv returns the matrix write_matrix_csv wrote."""
        path = tmp_path / 'a.csv'
        write_matrix_csv(example_instance.materialize(), path)

        np.testing.assert_array_equal(read_matrix_csv(path), example_instance.materialize())

    def test_matrix_csv_rejects_text(self, tmp_path):
        """Test that a non-numeric CSV raises ValidationError."""
        path = tmp_path / 'a.csv'
        path.write_text("1,x\n", encoding='utf-8')

        with pytest.raises(ValidationError):
            read_matrix_csv(path)
