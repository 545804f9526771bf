from __future__ import annotations

import pytest

from repoctx.dar import DarConfig
from repoctx.hybrid import (
    DEPENDENCIES_HEADER,
    SIMILAR_HEADER,
    RetrievedContext,
    hydra_retrieve,
    load_contexts,
    render_prompt,
    save_contexts,
    task_text,
)
from repoctx.oracle import query_for
from repoctx.scorers import ConstantScorer, OracleScorer
from repoctx.similarity import Bm25Index, RankedHit, bm25_topk, Bm25Params


def minirepo_query(graph):
    return query_for(graph, "main.py::is_url::Function")


def run_hydra(graph, threshold: float = 0.25, k_sim: int = 5, budget: int = 16000):
    scorer = OracleScorer(graph)
    config = DarConfig(scorer=scorer, threshold=threshold)
    index = Bm25Index.from_units(iter(graph))
    return hydra_retrieve(
        graph, index, minirepo_query(graph), config, k_sim=k_sim, budget=budget
    )


class TestHydraRetrieve:
    def test_dependencies_come_from_classifier(self, minirepo_graph):
        context = run_hydra(minirepo_graph)
        assert set(context.dependency_units) == {
            "utils.py::MAX_LEN::Variable",
            "utils.py::is_full_string::Function",
        }

    def test_exemplars_skip_anchor_and_dependencies(self, minirepo_graph):
        context = run_hydra(minirepo_graph)
        hit_ids = {hit.doc_id for hit in context.exemplar_hits}
        assert context.anchor_id not in hit_ids
        assert hit_ids.isdisjoint(set(context.dependency_units))

    def test_deduplication_does_not_backfill(self, minirepo_graph):
        index = Bm25Index.from_units(iter(minirepo_graph))
        query = minirepo_query(minirepo_graph)
        raw_hits = bm25_topk(
            index,
            Bm25Params(),
            query.text,
            k=2,
            exclude={query.anchor_id},
        )
        context = run_hydra(minirepo_graph, k_sim=2)
        dependency_ids = set(context.dependency_units)
        expected = [hit for hit in raw_hits if hit.doc_id not in dependency_ids]
        assert [hit.doc_id for hit in context.exemplar_hits] == [
            hit.doc_id for hit in expected
        ]
        assert len(context.exemplar_hits) <= 2

    def test_latency_is_recorded(self, minirepo_graph):
        context = run_hydra(minirepo_graph)
        assert context.retrieval_latency_ms > 0.0

    def test_prompt_sections_in_order(self, minirepo_graph):
        context = run_hydra(minirepo_graph)
        prompt = context.rendered_prompt
        dep_pos = prompt.index(DEPENDENCIES_HEADER)
        task = task_text(minirepo_graph, context.anchor_id)
        assert task in prompt
        if SIMILAR_HEADER in prompt:
            assert dep_pos < prompt.index(SIMILAR_HEADER) < prompt.index(task)
        assert prompt.rstrip().endswith(task)

    def test_prompt_contains_dependency_bodies(self, minirepo_graph):
        context = run_hydra(minirepo_graph)
        for unit_id in context.dependency_units:
            unit = minirepo_graph.lookup(unit_id)
            assert unit.body_text in context.rendered_prompt
            assert f"# {unit.file_path}" in context.rendered_prompt

    def test_retrieval_is_deterministic(self, minirepo_graph):
        first = run_hydra(minirepo_graph)
        second = run_hydra(minirepo_graph)
        assert first.dependency_units == second.dependency_units
        assert [h.doc_id for h in first.exemplar_hits] == [
            h.doc_id for h in second.exemplar_hits
        ]
        assert first.rendered_prompt == second.rendered_prompt


class TestSupersumption:
    def test_method_dropped_when_class_retrieved(self, classrepo_graph):
        context = RetrievedContext(
            anchor_id="board.py::square_board::Function",
            dependency_units=(
                "shapes.py::Square::Class",
                "shapes.py::Square.area::Function",
            ),
            exemplar_hits=(),
            rendered_prompt="",
            retrieval_latency_ms=0.0,
        )
        prompt = render_prompt(context, classrepo_graph)
        class_unit = classrepo_graph.lookup("shapes.py::Square::Class")
        method_unit = classrepo_graph.lookup("shapes.py::Square.area::Function")
        assert class_unit.body_text in prompt
        assert prompt.count(method_unit.body_text) == 1  # only inside the class

    def test_method_kept_without_its_class(self, classrepo_graph):
        context = RetrievedContext(
            anchor_id="board.py::square_board::Function",
            dependency_units=("shapes.py::Square.area::Function",),
            exemplar_hits=(),
            rendered_prompt="",
            retrieval_latency_ms=0.0,
        )
        prompt = render_prompt(context, classrepo_graph)
        method_unit = classrepo_graph.lookup("shapes.py::Square.area::Function")
        assert method_unit.body_text in prompt

    def test_supersumption_spans_both_lists(self, classrepo_graph):
        context = RetrievedContext(
            anchor_id="board.py::square_board::Function",
            dependency_units=("shapes.py::Square.area::Function",),
            exemplar_hits=(RankedHit("shapes.py::Square::Class", 1.0, 1),),
            rendered_prompt="",
            retrieval_latency_ms=0.0,
        )
        prompt = render_prompt(context, classrepo_graph)
        method_unit = classrepo_graph.lookup("shapes.py::Square.area::Function")
        dep_section = prompt.split(SIMILAR_HEADER)[0]
        assert method_unit.body_text not in dep_section


class TestBudget:
    def test_exemplars_dropped_before_dependencies(self, minirepo_graph):
        full = run_hydra(minirepo_graph)
        task = task_text(minirepo_graph, full.anchor_id)
        with_deps_only = render_prompt(
            RetrievedContext(
                anchor_id=full.anchor_id,
                dependency_units=full.dependency_units,
                exemplar_hits=(),
                rendered_prompt="",
                retrieval_latency_ms=0.0,
            ),
            minirepo_graph,
        )
        budget = len(with_deps_only)
        trimmed = render_prompt(full, minirepo_graph, budget=budget)
        assert SIMILAR_HEADER not in trimmed
        assert DEPENDENCIES_HEADER in trimmed
        assert len(trimmed) <= budget
        assert trimmed.rstrip().endswith(task)

    def test_tight_budget_keeps_only_task(self, minirepo_graph):
        full = run_hydra(minirepo_graph)
        task = task_text(minirepo_graph, full.anchor_id)
        trimmed = render_prompt(full, minirepo_graph, budget=len(task))
        assert trimmed == task

    def test_budget_below_task_rejected(self, minirepo_graph):
        full = run_hydra(minirepo_graph)
        task = task_text(minirepo_graph, full.anchor_id)
        with pytest.raises(ValueError):
            render_prompt(full, minirepo_graph, budget=len(task) - 1)

    def test_dependencies_dropped_from_list_end(self, minirepo_graph):
        context = RetrievedContext(
            anchor_id="main.py::is_url::Function",
            dependency_units=(
                "utils.py::is_full_string::Function",
                "utils.py::MAX_LEN::Variable",
            ),
            exemplar_hits=(),
            rendered_prompt="",
            retrieval_latency_ms=0.0,
        )
        full = render_prompt(context, minirepo_graph)
        trimmed = render_prompt(context, minirepo_graph, budget=len(full) - 1)
        first = minirepo_graph.lookup("utils.py::is_full_string::Function")
        second = minirepo_graph.lookup("utils.py::MAX_LEN::Variable")
        assert first.body_text in trimmed
        assert second.body_text not in trimmed


class TestRetrievedContext:
    def test_cross_list_duplicates_rejected(self):
        with pytest.raises(ValueError):
            RetrievedContext(
                anchor_id="a.py::f::Function",
                dependency_units=("a.py::g::Function",),
                exemplar_hits=(RankedHit("a.py::g::Function", 1.0, 1),),
                rendered_prompt="",
                retrieval_latency_ms=0.0,
            )

    def test_anchor_in_either_list_rejected(self):
        with pytest.raises(ValueError):
            RetrievedContext(
                anchor_id="a.py::f::Function",
                dependency_units=("a.py::f::Function",),
                exemplar_hits=(),
                rendered_prompt="",
                retrieval_latency_ms=0.0,
            )
        with pytest.raises(ValueError):
            RetrievedContext(
                anchor_id="a.py::f::Function",
                dependency_units=(),
                exemplar_hits=(RankedHit("a.py::f::Function", 1.0, 1),),
                rendered_prompt="",
                retrieval_latency_ms=0.0,
            )

    def test_round_trip_through_jsonl(self, minirepo_graph, tmp_path):
        context = run_hydra(minirepo_graph)
        path = tmp_path / "contexts.jsonl"
        save_contexts(path, [context])
        (loaded,) = load_contexts(path)
        assert loaded == context


class TestTaskText:
    def test_task_is_signature_plus_docstring(self, minirepo_graph):
        text = task_text(minirepo_graph, "main.py::is_url::Function")
        unit = minirepo_graph.lookup("main.py::is_url::Function")
        assert text == unit.signature + "\n" + unit.docstring

    def test_task_has_no_section_header(self, minirepo_graph):
        text = task_text(minirepo_graph, "main.py::is_url::Function")
        assert not text.startswith("#")


class TestPlaceholderScorerEndToEnd:
    def test_constant_scorer_above_threshold_keeps_whole_scope(self, minirepo_graph):
        config = DarConfig(scorer=ConstantScorer(probability=0.9), threshold=0.25)
        index = Bm25Index.from_units(iter(minirepo_graph))
        context = hydra_retrieve(
            minirepo_graph, index, minirepo_query(minirepo_graph), config
        )
        assert len(context.dependency_units) == 4
        assert context.exemplar_hits == ()
