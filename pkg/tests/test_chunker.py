import random
import sys

import pytest
from hypothesis import given, settings, strategies as st

from korpus.chunker import (
    Chunk, SubprocessTranslator, Translator, TranslatorSpec, chunk_document,
    chunk_sentences, identity_translator, split_sentences, translate_chunks,
)
from korpus.core import tokenize

from conftest import de_text, make_doc


class TestSplitSentences:
    def test_clear_boundary(self):
        assert split_sentences("Das ist gut. Wirklich gut.") == ["Das ist gut.", "Wirklich gut."]

    def test_abbreviations_do_not_split(self):
        assert split_sentences("Dr. Müller kam z.B. spät.") == ["Dr. Müller kam z.B. spät."]

    def test_empty(self):
        assert split_sentences("") == []
        assert split_sentences("   \n ") == []

    def test_question_and_exclamation(self):
        got = split_sentences("Wie bitte? Na gut! Dann los.")
        assert got == ["Wie bitte?", "Na gut!", "Dann los."]

    def test_digit_starts_sentence(self):
        assert split_sentences("Es begann 1990. 25 Jahre später war es anders.") == \
            ["Es begann 1990.", "25 Jahre später war es anders."]

    def test_lowercase_continuation_not_split(self):
        assert split_sentences("Der Satz bricht hier ab. und geht klein weiter") == \
            ["Der Satz bricht hier ab. und geht klein weiter"]

    def test_losslessness(self):
        text = "Heute ist es kalt.  Morgen   wird es z.B. wärmer! Oder?  Nr. 7 bleibt offen."
        sentences = split_sentences(text)
        assert " ".join(sentences) == " ".join(text.split())
        assert all(s for s in sentences)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_losslessness_random_texts(self, seed):
        rng = random.Random(seed)
        text = de_text(rng, rng.randrange(0, 6))
        sentences = split_sentences(text)
        assert " ".join(sentences) == " ".join(text.split())
        assert all(sentences)


class TestChunkSentences:
    def test_greedy_packing_trace(self):
        counts = {"s1": 60, "s2": 60, "s3": 60}
        chunks = chunk_sentences(["s1", "s2", "s3"], 128, token_counter=counts.get)
        assert [list(c.sentences) for c in chunks] == [["s1", "s2"], ["s3"]]
        assert [c.token_count for c in chunks] == [120, 60]
        assert [c.index for c in chunks] == [0, 1]

    def test_single_small_sentence(self):
        chunks = chunk_sentences(["zehn token"], 128, token_counter=lambda s: 10)
        assert len(chunks) == 1 and not chunks[0].oversized

    def test_oversized_sentence_kept_whole(self):
        chunks = chunk_sentences(["riesig"], 128, token_counter=lambda s: 200)
        assert len(chunks) == 1
        assert chunks[0].oversized and chunks[0].token_count == 200

    def test_oversized_between_normal(self):
        counts = {"a": 50, "b": 300, "c": 50}
        chunks = chunk_sentences(["a", "b", "c"], 128, token_counter=counts.get)
        assert [list(c.sentences) for c in chunks] == [["a"], ["b"], ["c"]]
        assert [c.oversized for c in chunks] == [False, True, False]

    def test_default_counter_is_whitespace_tokens(self):
        chunks = chunk_sentences(["ein zwei drei"], 2)
        assert chunks[0].oversized and chunks[0].token_count == 3

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            chunk_sentences(["x"], 0)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.integers(1, 40), min_size=0, max_size=30),
        st.integers(1, 64),
    )
    def test_invariants(self, lengths, budget):
        sentences = [f"s{i}" for i in range(len(lengths))]
        table = dict(zip(sentences, lengths))
        chunks = chunk_sentences(sentences, budget, token_counter=table.get)
        # losslessness
        assert [s for c in chunks for s in c.sentences] == sentences
        for c in chunks:
            if not c.oversized:
                assert c.token_count <= budget
            else:
                assert len(c.sentences) == 1
        # indices sequential
        assert [c.index for c in chunks] == list(range(len(chunks)))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 30), min_size=1, max_size=25))
    def test_chunk_count_monotone_in_budget(self, lengths):
        sentences = [f"s{i}" for i in range(len(lengths))]
        table = dict(zip(sentences, lengths))
        previous = None
        for budget in (4, 8, 16, 32, 64):
            n = len(chunk_sentences(sentences, budget, token_counter=table.get))
            if previous is not None:
                assert n <= previous
            previous = n


class TestChunkDocument:
    def test_flat_map_reproduces_split(self, rng):
        doc = make_doc("d", de_text(rng, 8))
        chunks = chunk_document(doc, 30)
        assert [s for c in chunks for s in c.sentences] == split_sentences(doc.text)
        assert all(c.doc_id == "d" for c in chunks)

    def test_chunk_token_count_matches_text(self, rng):
        doc = make_doc("d", de_text(rng, 5))
        for c in chunk_document(doc, 40):
            assert c.token_count == len(tokenize(c.text))


class TestTranslation:
    def test_identity(self, rng):
        chunks = chunk_document(make_doc("d", de_text(rng, 4)), 32)
        results = translate_chunks(chunks, identity_translator())
        assert [r.text for r in results] == [c.text for c in chunks]
        assert all(r.error is None for r in results)

    def test_reversing_mock_preserves_order(self, rng):
        chunks = chunk_document(make_doc("d", de_text(rng, 4)), 32)
        reverser = Translator(TranslatorSpec("reverse"), lambda s: " ".join(reversed(s.split())))
        results = translate_chunks(chunks, reverser)
        for chunk, result in zip(chunks, results):
            assert result.text == " ".join(reversed(chunk.text.split()))

    def test_failure_recorded_pipeline_continues(self):
        chunks = [
            Chunk("d", 0, ("eins",), 1),
            Chunk("d", 1, ("zwei",), 1),
            Chunk("d", 2, ("drei",), 1),
        ]

        def flaky(text):
            if text == "zwei":
                raise RuntimeError("kaputt")
            return text

        results = translate_chunks(chunks, Translator(TranslatorSpec("flaky"), flaky))
        assert [r.error is None for r in results] == [True, False, True]
        assert results[1].text is None and "kaputt" in results[1].error

    def test_beam_size_validated(self):
        with pytest.raises(ValueError):
            TranslatorSpec("bad", beam_size=0)

    def test_spec_reference_values(self):
        spec = identity_translator().spec
        assert spec.beam_size == 1 and spec.max_context == 156


class TestSubprocessTranslator:
    def test_line_protocol_round_trip(self, rng):
        chunks = chunk_document(make_doc("d", de_text(rng, 3)), 32)
        cat = SubprocessTranslator([sys.executable, "-c",
                                    "import sys; sys.stdout.write(sys.stdin.read())"])
        results = translate_chunks(chunks, cat)
        assert [r.text for r in results] == [c.text for c in chunks]

    def test_uppercasing_command(self):
        chunks = [Chunk("d", 0, ("hallo welt",), 2)]
        upper = SubprocessTranslator([sys.executable, "-c",
                                      "import sys; sys.stdout.write(sys.stdin.read().upper())"])
        results = translate_chunks(chunks, upper)
        assert results[0].text == "HALLO WELT"

    def test_failing_command_reports_all_chunks(self):
        chunks = [Chunk("d", 0, ("x",), 1), Chunk("d", 1, ("y",), 1)]
        boom = SubprocessTranslator([sys.executable, "-c", "import sys; sys.exit(3)"])
        results = translate_chunks(chunks, boom)
        assert all(r.error is not None for r in results)

    def test_short_output_flags_missing_chunks(self):
        chunks = [Chunk("d", 0, ("x",), 1), Chunk("d", 1, ("y",), 1)]
        one_line = SubprocessTranslator([sys.executable, "-c",
                                         "import sys; sys.stdin.read(); print('nur eine')"])
        results = translate_chunks(chunks, one_line)
        assert results[0].text == "nur eine"
        assert results[1].error is not None
