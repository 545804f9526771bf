from __future__ import annotations

import json
import textwrap

import pytest

from repoctx.graph import UnitKind
from repoctx.oracle import (
    CandidateScope,
    DependencyAnalyzer,
    Query,
    Triplet,
    analyze_dependencies,
    build_triplets,
    candidate_scope,
    dataset_stats,
    load_triplets,
    query_for,
    save_triplets,
    split_and_balance,
)

from conftest import REPO_NAMES


def scope_for(graph, anchor_id: str) -> CandidateScope:
    return candidate_scope(graph, anchor_id)


class TestQuery:
    def test_query_is_signature_plus_docstring(self, minirepo_graph):
        query = query_for(minirepo_graph, "main.py::is_url::Function")
        unit = minirepo_graph.lookup("main.py::is_url::Function")
        assert query.text == unit.signature + "\n" + unit.docstring
        assert query.anchor_id == unit.id

    def test_query_without_docstring_is_signature_only(self, classrepo_graph):
        anchor = "shapes.py::Square.__init__::Function"
        query = query_for(classrepo_graph, anchor)
        unit = classrepo_graph.lookup(anchor)
        assert unit.docstring is None
        assert query.text == unit.signature

    def test_query_requires_function_anchor(self, minirepo_graph):
        with pytest.raises(ValueError):
            query_for(minirepo_graph, "utils.py::MAX_LEN::Variable")


class TestCandidateScope:
    def test_scope_is_own_file_plus_one_hop_imports(self, minirepo_graph):
        scope = scope_for(minirepo_graph, "main.py::is_url::Function")
        assert set(scope.candidate_ids) == {
            "utils.py::MAX_LEN::Variable",
            "utils.py::is_full_string::Function",
            "utils.py::Formatter::Class",
            "utils.py::Formatter.camel::Function",
        }

    def test_scope_never_contains_anchor(self, fixture_graphs):
        for graph in fixture_graphs.values():
            for unit in graph:
                if unit.kind is not UnitKind.FUNCTION:
                    continue
                scope = scope_for(graph, unit.id)
                assert unit.id not in scope.candidate_ids

    def test_scope_ignores_transitive_imports(self, fixture_graphs):
        graph = fixture_graphs["relpkg"]
        scope = scope_for(graph, "app.py::main::Function")
        files = {cid.split("::")[0] for cid in scope.candidate_ids}
        assert files == {"engine/__init__.py"}

    def test_kind_filter_drops_kinds(self, minirepo_graph):
        scope = candidate_scope(
            minirepo_graph,
            "main.py::is_url::Function",
            kinds={UnitKind.FUNCTION},
        )
        assert set(scope.candidate_ids) == {
            "utils.py::is_full_string::Function",
            "utils.py::Formatter.camel::Function",
        }

    def test_method_toggle_drops_methods_only(self, minirepo_graph):
        scope = candidate_scope(
            minirepo_graph, "main.py::is_url::Function", include_methods=False
        )
        assert set(scope.candidate_ids) == {
            "utils.py::MAX_LEN::Variable",
            "utils.py::is_full_string::Function",
            "utils.py::Formatter::Class",
        }


class TestStaticDependencies:
    @pytest.mark.parametrize("repo", REPO_NAMES)
    def test_labels_match_exactly(self, repo, fixture_graphs, fixture_labels):
        graph = fixture_graphs[repo]
        labels = fixture_labels[repo]
        assert labels, repo
        mismatches = {}
        for anchor_id, expected in labels.items():
            found = analyze_dependencies(graph, anchor_id)
            if sorted(found) != sorted(expected):
                mismatches[anchor_id] = {
                    "expected": sorted(expected),
                    "found": sorted(found),
                }
        assert not mismatches, json.dumps(mismatches, indent=2)

    def test_label_corpus_is_large_enough(self, fixture_labels):
        total = sum(len(labels) for labels in fixture_labels.values())
        assert len(fixture_labels) >= 5
        assert total >= 30

    def test_dependencies_are_subset_of_scope(self, fixture_graphs):
        for graph in fixture_graphs.values():
            analyzer = DependencyAnalyzer(graph)
            for unit in graph:
                if unit.kind is not UnitKind.FUNCTION:
                    continue
                scope = scope_for(graph, unit.id)
                deps = analyzer.analyze(unit.id, scope)
                assert deps <= set(scope.candidate_ids)

    def test_unused_import_is_not_a_dependency(self, fixture_graphs):
        graph = fixture_graphs["shadowrepo"]
        deps = analyze_dependencies(graph, "ops.py::scaled_counter::Function")
        assert "state.py::COUNTER::Variable" not in deps
        assert deps == {"ops.py::SCALE::Variable", "state.py::bump::Function"}

    def test_function_match_requires_call(self, fixture_graphs):
        graph = fixture_graphs["classrepo"]
        deps = analyze_dependencies(graph, "board.py::describe::Function")
        assert "shapes.py::Shape::Class" in deps
        assert "shapes.py::Square::Class" not in deps

    def test_shadowed_names_do_not_match(self, fixture_graphs):
        graph = fixture_graphs["shadowrepo"]
        param = analyze_dependencies(graph, "ops.py::shadow_param::Function")
        assert "state.py::STEP::Variable" not in param
        assert param == {"state.py::bump::Function"}
        loop = analyze_dependencies(graph, "ops.py::shadow_loop::Function")
        assert "state.py::COUNTER::Variable" not in loop
        assert loop == {"state.py::STEP::Variable"}
        nested = analyze_dependencies(graph, "ops.py::shadow_nested::Function")
        assert "state.py::STEP::Variable" not in nested
        assert nested == {"state.py::bump::Function"}

    def test_global_statement_unshadows(self, fixture_graphs):
        graph = fixture_graphs["shadowrepo"]
        deps = analyze_dependencies(graph, "state.py::bump::Function")
        assert deps == {
            "state.py::COUNTER::Variable",
            "state.py::STEP::Variable",
        }

    def test_store_only_global_is_not_a_dependency(self, fixture_graphs):
        graph = fixture_graphs["shadowrepo"]
        assert analyze_dependencies(graph, "ops.py::late_global::Function") == set()

    def test_star_import_resolution(self, fixture_graphs):
        graph = fixture_graphs["starpkg"]
        deps = analyze_dependencies(graph, "pipeline.py::process_widget::Function")
        assert deps == {
            "constants.py::RETRY_LIMIT::Variable",
            "helpers.py::widget_name::Function",
            "helpers.py::widget_ready::Function",
        }

    def test_local_binding_beats_star_import(self, fixture_graphs):
        graph = fixture_graphs["starpkg"]
        deps = analyze_dependencies(graph, "pipeline.py::shadowed_limit::Function")
        assert "constants.py::RETRY_LIMIT::Variable" not in deps
        assert deps == {"helpers.py::widget_ready::Function"}

    def test_module_attribute_chain(self, fixture_graphs):
        graph = fixture_graphs["textkit"]
        deps = analyze_dependencies(graph, "textkit/report.py::render_report::Function")
        assert "textkit/strings.py::collapse_spaces::Function" in deps

    def test_decorator_is_a_call_dependency(self, fixture_graphs):
        graph = fixture_graphs["textkit"]
        deps = analyze_dependencies(graph, "textkit/clean.py::clean_line::Function")
        assert "textkit/trace.py::traced::Function" in deps

    def test_method_call_matches_all_scope_methods_with_name(
        self, fixture_graphs
    ):
        graph = fixture_graphs["classrepo"]
        deps = analyze_dependencies(graph, "shapes.py::Shape.render::Function")
        assert "shapes.py::Shape.area::Function" in deps
        assert "shapes.py::Square.area::Function" in deps

    def test_function_local_import_resolves(self, fixture_graphs):
        graph = fixture_graphs["shadowrepo"]
        assert analyze_dependencies(graph, "local.py::lazy_scale::Function") == {
            "ops.py::SCALE::Variable"
        }
        assert analyze_dependencies(graph, "local.py::lazy_bump::Function") == {
            "state.py::bump::Function"
        }


class TestAnalyzeBody:
    def test_matches_stored_body(self, minirepo_graph):
        analyzer = DependencyAnalyzer(minirepo_graph)
        anchor = "main.py::is_url::Function"
        scope = scope_for(minirepo_graph, anchor)
        unit = minirepo_graph.lookup(anchor)
        invoked, ok = analyzer.analyze_body(anchor, scope, unit.body_text)
        assert ok
        assert invoked == analyzer.analyze(anchor, scope)

    def test_alternative_body_changes_dependencies(self, minirepo_graph):
        analyzer = DependencyAnalyzer(minirepo_graph)
        anchor = "main.py::is_url::Function"
        scope = scope_for(minirepo_graph, anchor)
        body = textwrap.dedent(
            '''\
            def is_url(value):
                return is_full_string(value)
            '''
        )
        invoked, ok = analyzer.analyze_body(anchor, scope, body)
        assert ok
        assert invoked == {"utils.py::is_full_string::Function"}

    def test_unparseable_body_flags_failure(self, minirepo_graph):
        analyzer = DependencyAnalyzer(minirepo_graph)
        anchor = "main.py::is_url::Function"
        scope = scope_for(minirepo_graph, anchor)
        invoked, ok = analyzer.analyze_body(anchor, scope, "def broken(:\n")
        assert not ok
        assert invoked == set()


class TestTriplets:
    def test_one_triplet_per_function_with_candidates(self, minirepo_graph):
        triplets = build_triplets(minirepo_graph)
        anchors = {t.query.anchor_id for t in triplets}
        assert anchors == {
            "main.py::is_url::Function",
            "utils.py::is_full_string::Function",
            "utils.py::Formatter.camel::Function",
        }

    def test_positive_negative_partition(self, fixture_graphs):
        for graph in fixture_graphs.values():
            for triplet in build_triplets(graph):
                scope = scope_for(graph, triplet.query.anchor_id)
                positives = set(triplet.positives)
                negatives = set(triplet.negatives)
                assert positives | negatives == set(scope.candidate_ids)
                assert positives & negatives == set()
                assert triplet.query.anchor_id not in positives | negatives

    def test_minirepo_worked_example(self, minirepo_graph):
        triplets = {t.query.anchor_id: t for t in build_triplets(minirepo_graph)}
        triplet = triplets["main.py::is_url::Function"]
        assert set(triplet.positives) == {
            "utils.py::MAX_LEN::Variable",
            "utils.py::is_full_string::Function",
        }
        assert set(triplet.negatives) == {
            "utils.py::Formatter::Class",
            "utils.py::Formatter.camel::Function",
        }

    def test_kind_filter_narrows_triplets(self, minirepo_graph):
        triplets = {
            t.query.anchor_id: t
            for t in build_triplets(minirepo_graph, kinds={UnitKind.FUNCTION})
        }
        triplet = triplets["main.py::is_url::Function"]
        assert set(triplet.positives) == {"utils.py::is_full_string::Function"}
        assert set(triplet.negatives) == {"utils.py::Formatter.camel::Function"}

    def test_triplet_validation_rejects_overlap(self):
        query = Query(anchor_id="a.py::f::Function", text="def f():")
        with pytest.raises(ValueError):
            Triplet(
                query=query,
                positives=frozenset({"a.py::g::Function"}),
                negatives=frozenset({"a.py::g::Function"}),
            )

    def test_round_trip_through_jsonl(self, minirepo_graph, tmp_path):
        triplets = build_triplets(minirepo_graph)
        path = tmp_path / "triplets.jsonl"
        save_triplets(path, triplets)
        loaded = load_triplets(path)
        assert loaded == triplets


class TestSplits:
    def make_triplets(self, count: int) -> list[Triplet]:
        triplets = []
        for i in range(count):
            query = Query(anchor_id=f"m{i}.py::f{i}::Function", text=f"def f{i}():")
            positives = frozenset({f"m{i}.py::p{i}::Function"})
            negatives = frozenset(
                f"m{i}.py::n{i}_{j}::Variable" for j in range(3)
            )
            triplets.append(
                Triplet(query=query, positives=positives, negatives=negatives)
            )
        return triplets

    def test_split_sizes_follow_eight_one_one(self):
        split = split_and_balance(self.make_triplets(20), seed=0)
        assert len(split.train) == 16
        assert len(split.validation) == 2
        assert len(split.test) == 2

    def test_same_seed_same_split(self):
        triplets = self.make_triplets(20)
        a = split_and_balance(triplets, seed=5)
        b = split_and_balance(triplets, seed=5)
        assert a == b

    def test_different_seed_usually_differs(self):
        triplets = self.make_triplets(20)
        a = split_and_balance(triplets, seed=1)
        b = split_and_balance(triplets, seed=2)
        assert [t.query.anchor_id for t in a.train] != [
            t.query.anchor_id for t in b.train
        ]

    def test_train_negatives_downsampled_to_balance(self):
        split = split_and_balance(self.make_triplets(20), seed=0)
        stats = dataset_stats(split)
        train = stats["splits"]["train"]
        assert train["negative_pairs"] == train["positive_pairs"]

    def test_validation_and_test_keep_all_negatives(self):
        split = split_and_balance(self.make_triplets(20), seed=0)
        for part in (split.validation, split.test):
            for triplet in part:
                assert len(triplet.negatives) == 3

    def test_balancing_is_global_not_per_anchor(self):
        triplets = self.make_triplets(20)
        split = split_and_balance(triplets, seed=3)
        per_anchor = [len(t.negatives) for t in split.train]
        assert sum(per_anchor) == sum(len(t.positives) for t in split.train)
        assert min(per_anchor) < max(per_anchor) or len(set(per_anchor)) == 1
