from __future__ import annotations

import json
import random

import pytest

from tripletext.backends import CountingBackend, MockBackend, SyntheticCompletionBackend
from tripletext.disambiguate import (
    DEFAULT_PROMPT_PREFIX,
    MissingTemplateError,
    PromptFieldError,
    PromptSpec,
    StoreError,
    TemplateExtractionFailure,
    TemplateStore,
    apply_template,
    build_prompt,
    disambiguate,
    ensure_templates,
    fallback_template,
    first_triple_per_predicate,
    load_manual_templates,
    mine_template,
)
from tripletext.model import DataInstance, Template, Triple


class TestBuildPrompt:
    def test_default_prompt_ends_with_query(self):
        prompt = build_prompt(Triple("Apollo 11", "operator", "NASA"))
        assert prompt.endswith("Table: Apollo 11 | operator | NASA\nText:")
        assert prompt.startswith(DEFAULT_PROMPT_PREFIX)

    def test_one_blank_line_separates_prefix_and_query(self):
        prompt = build_prompt(Triple("Apollo 11", "operator", "NASA"))
        expected = DEFAULT_PROMPT_PREFIX + "\n\nTable: Apollo 11 | operator | NASA\nText:"
        assert prompt == expected

    def test_empty_prefix(self):
        spec = PromptSpec(prefix="")
        prompt = build_prompt(Triple("Michael", "birth Place", "USA"), spec)
        assert prompt == "Table: Michael | birth Place | USA\nText:"

    def test_pipe_in_field_rejected(self):
        with pytest.raises(PromptFieldError):
            build_prompt(Triple("a | b", "p", "o"))

    def test_prefix_matches_checked_in_fixture(self, data_dir):
        fixture = (data_dir / "prompt_prefix.txt").read_bytes()
        assert DEFAULT_PROMPT_PREFIX.encode("utf-8") == fixture

    def test_defaults(self):
        spec = PromptSpec()
        assert spec.stop_sequence == "\n"
        assert spec.max_new_tokens == 256
        assert spec.temperature == 0.0


class TestMineTemplate:
    def test_worked_example(self):
        triple = Triple("Michael", "birth Place", "USA")
        template = mine_template(triple, "Michael was born in the USA.")
        assert template.pattern == "<subject> was born in the <object>."
        assert template.provenance == "llm"
        assert template.source_triple == triple

    def test_release_example(self):
        template = mine_template(Triple("Fearless", "time", "2008"), "Fearless was released in 2008.")
        assert template.pattern == "<subject> was released in <object>."

    def test_longest_field_bound_first(self):
        template = mine_template(Triple("A B", "rel", "B"), "A B likes B.")
        assert template.pattern == "<subject> likes <object>."

    def test_missing_object_fails_with_sentence(self):
        with pytest.raises(TemplateExtractionFailure) as excinfo:
            mine_template(Triple("Michael", "birth Place", "USA"), "Michael was born abroad.")
        assert excinfo.value.sentence == "Michael was born abroad."

    def test_overlapping_spans_fail(self):
        # the only occurrence of the object lies inside the subject span
        with pytest.raises(TemplateExtractionFailure):
            mine_template(Triple("A B", "rel", "B"), "A B likes nothing.")

    def test_word_boundaries_respected(self):
        # "USA" must not bind inside "USAF"
        template = mine_template(
            Triple("Michael", "birth Place", "USA"),
            "Michael of the USAF was born in the USA.",
        )
        assert template.pattern == "<subject> of the USAF was born in the <object>."

    def test_case_insensitive_fallback(self):
        template = mine_template(Triple("Michael", "birth Place", "USA"), "michael lives in the usa.")
        assert template.pattern == "<subject> lives in the <object>."

    def test_terminal_period_added(self):
        template = mine_template(Triple("Michael", "birth Place", "USA"), "Michael was born in the USA")
        assert template.pattern.endswith("<object>.")

    def test_round_trip_byte_exact(self):
        rng = random.Random(5)
        carriers = [
            "{s} was born in {o}.",
            "The monument {s} is made of {o}.",
            "{s} serves the city of {o}.",
            "In 2001, {s} joined {o} as director.",
        ]
        for _ in range(50):
            subject = rng.choice(["Alan Shepard", "Agra Airport", "Bandeja paisa"])
            object_ = rng.choice(["New Hampshire", "Uttar Pradesh", "Colombia"])
            sentence = rng.choice(carriers).format(s=subject, o=object_)
            triple = Triple(subject, "pred", object_)
            template = mine_template(triple, sentence)
            assert apply_template(template, triple) == sentence


class TestApplyTemplate:
    def test_substitution(self):
        template = Template("birthPlace", "<subject> was born in <object>", None, "manual")
        triple = Triple("Alan Shepard", "birthPlace", "New Hampshire")
        assert apply_template(template, triple) == "Alan Shepard was born in New Hampshire."

    def test_degenerate_pattern_still_substitutes(self):
        template = Template("p", "<subject> <object>", None, "manual")
        assert apply_template(template, Triple("Alan Shepard", "p", "New Hampshire")) == (
            "Alan Shepard New Hampshire."
        )

    def test_predicate_mismatch_rejected(self):
        template = Template("birthPlace", "<subject> was born in <object>", None, "manual")
        with pytest.raises(ValueError, match="predicate"):
            apply_template(template, Triple("a", "deathPlace", "b"))


class TestFallbackTemplate:
    def test_camel_case_predicate(self):
        assert fallback_template("birthPlace").pattern == "<subject> birth place <object>"

    def test_plain_predicate(self):
        template = fallback_template("operator")
        assert template.pattern == "<subject> operator <object>"
        assert template.provenance == "fallback"
        assert template.source_triple is None


class TestTemplateStore:
    def _template(self, predicate="p"):
        return Template(predicate, "<subject> x <object>", None, "manual")

    def test_duplicate_rejected(self):
        store = TemplateStore()
        store.add(self._template())
        with pytest.raises(StoreError):
            store.add(self._template())

    def test_save_load_round_trip(self, tmp_path):
        store = TemplateStore()
        store.add(mine_template(Triple("Michael", "birthPlace", "USA"), "Michael was born in the USA."))
        store.add(self._template("manualPred"))
        path = tmp_path / "store.json"
        store.save(path)
        assert TemplateStore.load(path) == store

    def test_sorted_keys_and_stable_bytes(self, tmp_path):
        store = TemplateStore()
        store.add(self._template("zeta"), created_at="2024-01-01T00:00:00+00:00")
        store.add(self._template("alpha"), created_at="2024-01-01T00:00:00+00:00")
        payload = store.to_json()
        assert payload.index('"alpha"') < payload.index('"zeta"')
        assert payload == store.to_json()

    def test_content_hash_ignores_timestamps(self):
        a = TemplateStore()
        a.add(self._template(), created_at="2024-01-01T00:00:00+00:00")
        b = TemplateStore()
        b.add(self._template(), created_at="2030-12-31T23:59:59+00:00")
        assert a.content_hash() == b.content_hash()
        assert a != b

    def test_missing_template_error_names_predicate(self):
        with pytest.raises(MissingTemplateError, match="mystery"):
            TemplateStore().get("mystery")

    def test_provenance_counts(self):
        store = TemplateStore()
        store.add(self._template("a"))
        store.add(fallback_template("b"))
        assert store.provenance_counts == {"llm": 0, "manual": 1, "fallback": 1}


class TestLoadManualTemplates:
    def test_single_entry(self, tmp_path):
        path = tmp_path / "manual.json"
        path.write_text(json.dumps({"birthPlace": "<subject> was born in <object>"}))
        store = load_manual_templates(path)
        assert len(store) == 1
        assert store.get("birthPlace").provenance == "manual"

    def test_duplicate_keys_rejected(self, tmp_path):
        path = tmp_path / "manual.json"
        path.write_text('{"p": "<subject> a <object>", "p": "<subject> b <object>"}')
        with pytest.raises(StoreError, match="duplicate"):
            load_manual_templates(path)

    def test_empty_file_empty_store(self, tmp_path):
        path = tmp_path / "manual.json"
        path.write_text("{}")
        assert len(load_manual_templates(path)) == 0

    def test_pattern_without_placeholder_rejected(self, tmp_path):
        path = tmp_path / "manual.json"
        path.write_text(json.dumps({"p": "no placeholders here"}))
        with pytest.raises(StoreError, match="'p'"):
            load_manual_templates(path)


def corpus_with_predicates(*predicates, repeat=3):
    instances = []
    for i in range(repeat):
        for j, predicate in enumerate(predicates):
            instances.append(
                DataInstance(
                    f"i{i}-{j}",
                    (Triple(f"Subject{j}", predicate, f"Object{j}"),),
                )
            )
    return instances


class TestEnsureTemplates:
    def test_one_call_per_missing_predicate(self):
        corpus = corpus_with_predicates("alpha", "beta", "gamma")
        backend = CountingBackend(SyntheticCompletionBackend())
        store = TemplateStore()
        report = ensure_templates(corpus, store, backend)
        assert backend.completion_calls == 3
        assert report.backend_calls == 3
        assert len(store) == 3
        assert all(t.provenance == "llm" for t in store.entries.values())

    def test_rerun_hits_cache(self):
        corpus = corpus_with_predicates("alpha", "beta")
        backend = CountingBackend(SyntheticCompletionBackend())
        store = TemplateStore()
        ensure_templates(corpus, store, backend)
        report = ensure_templates(corpus, store, backend)
        assert backend.completion_calls == 2
        assert report.backend_calls == 0

    def test_offline_mode_uses_fallbacks(self):
        corpus = corpus_with_predicates("birthPlace")
        store = TemplateStore()
        report = ensure_templates(corpus, store, llm_backend=None)
        assert report.backend_calls == 0
        assert store.get("birthPlace").provenance == "fallback"

    def test_first_corpus_occurrence_is_sampled(self):
        instances = [
            DataInstance("a", (Triple("First Subject", "pred", "First Object"),)),
            DataInstance("b", (Triple("Second Subject", "pred", "Second Object"),)),
        ]
        assert first_triple_per_predicate(instances)["pred"].subject == "First Subject"
        prompt = build_prompt(instances[0].triples[0])
        backend = MockBackend({prompt: " The First Subject thing is First Object."})
        store = TemplateStore()
        report = ensure_templates(instances, store, backend)
        assert report.mined == ["pred"]

    def test_backend_failure_falls_back_with_warning(self):
        corpus = corpus_with_predicates("alpha")
        backend = MockBackend({}, unknown="error")
        store = TemplateStore()
        report = ensure_templates(corpus, store, backend)
        assert report.backend_calls == 1
        assert store.get("alpha").provenance == "fallback"
        assert report.warnings and "backend failure" in report.warnings[0]

    def test_extraction_failure_falls_back(self):
        corpus = corpus_with_predicates("alpha")
        prompt = build_prompt(corpus[0].triples[0])
        backend = MockBackend({prompt: " Nothing relevant at all."})
        store = TemplateStore()
        report = ensure_templates(corpus, store, backend)
        assert store.get("alpha").provenance == "fallback"
        assert report.fell_back == ["alpha"]
        assert "extraction failed" in report.warnings[0]

    def test_parallel_run_matches_serial_and_respects_cap(self):
        corpus = corpus_with_predicates(*(f"pred{i}" for i in range(12)))
        serial_store = TemplateStore()
        ensure_templates(corpus, serial_store, SyntheticCompletionBackend())
        backend = CountingBackend(SyntheticCompletionBackend())
        parallel_store = TemplateStore()
        ensure_templates(corpus, parallel_store, backend, parallelism=4)
        assert backend.max_in_flight <= 4
        assert parallel_store.content_hash() == serial_store.content_hash()


class TestDisambiguate:
    def test_mined_sentences_in_triple_order(self):
        instance = DataInstance(
            "fig",
            (
                Triple("Apollo 11", "operator", "NASA"),
                Triple("Alan Shepard", "birthPlace", "New Hampshire"),
            ),
        )
        store = TemplateStore()
        store.add(
            mine_template(Triple("Apollo 11", "operator", "NASA"), "Apollo 11 is operated by NASA.")
        )
        store.add(
            mine_template(
                Triple("Alan Shepard", "birthPlace", "New Hampshire"),
                "Alan Shepard was born in New Hampshire.",
            )
        )
        sentences = disambiguate(instance, store)
        assert [s.text for s in sentences] == [
            "Apollo 11 is operated by NASA.",
            "Alan Shepard was born in New Hampshire.",
        ]
        assert [s.triple_index for s in sentences] == [0, 1]

    def test_sentence_count_matches_triple_count(self, fixture_corpus):
        store = TemplateStore()
        ensure_templates(fixture_corpus, store, llm_backend=None)
        for instance in fixture_corpus:
            sentences = disambiguate(instance, store)
            assert len(sentences) == len(instance.triples)
            assert [s.triple_index for s in sentences] == list(range(len(instance.triples)))

    def test_missing_template_names_predicate(self):
        instance = DataInstance("x", (Triple("a", "enigma", "b"),))
        with pytest.raises(MissingTemplateError, match="enigma"):
            disambiguate(instance, TemplateStore())
