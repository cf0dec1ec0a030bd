import random

import pytest

from cmdsift.core import Label, Origin
from cmdsift.fixtures import data_path
from cmdsift.synthgen import (
    GenerationError,
    MockBackend,
    PlanError,
    build_taxonomy,
    draft_plan,
    dump_taxonomy,
    emit_plan,
    expand_scenarios,
    generate_and_critique,
    generate_dataset,
    load_plan,
    parse_plan,
    parse_taxonomy,
    sample_mix,
)
from cmdsift.synthgen.generate import Mix, build_meta_prompt, check_coverage


class TestPlanFile:
    def test_bundled_plans_parse(self):
        for name in ("reverse_shell", "hacking_tools", "lotl"):
            plan = load_plan(str(data_path("plans", f"{name}.plan")))
            assert len(plan.strategies) == 2
            labels = {s.label for s in plan.strategies}
            assert labels == {Label.POSITIVE, Label.NEGATIVE}

    def test_round_trip(self, rs_plan):
        assert emit_plan(parse_plan(emit_plan(rs_plan))) == emit_plan(rs_plan)

    def test_unknown_key_rejected(self):
        with pytest.raises(PlanError, match="unknown plan key"):
            parse_plan("[plan]\nname = x\nbogus = 1\n")

    def test_missing_strategy_keys_rejected(self):
        with pytest.raises(PlanError, match="missing keys"):
            parse_plan("[plan]\nname = x\n[strategy s]\nlabel = positive\n")

    def test_empty_guidance_rejected(self):
        text = (
            "[plan]\nname = x\n[strategy s]\nlabel = positive\n"
            "overall_guidance = g\nfield_guidance =\n"
            "taxonomy_root = R\ntaxonomy_instruction = i\n"
        )
        with pytest.raises(PlanError):
            parse_plan(text)

    def test_draft_plan_parses_and_is_editable_text(self, mock_backend):
        text = draft_plan("generate data for a reverse shell detector", mock_backend)
        plan = parse_plan(text)
        assert plan.name == "reverse_shell"


class TestTaxonomy:
    def test_critic_adds_missing_binaries(self, rs_taxonomies):
        root = rs_taxonomies["malicious_reverse_shell"]
        by_binary = root.find((root.name, "By Binary"))
        names = {c.name.lower() for c in by_binary.children}
        assert {"bash", "netcat", "python", "socat", "perl"} <= names
        assert "awk" in names and "xterm" in names

    def test_depth_cap_one(self, rs_plan, mock_backend):
        import dataclasses

        shallow = dataclasses.replace(rs_plan)  # GenerationPlan is mutable; copy
        shallow = parse_plan(emit_plan(rs_plan))
        shallow.max_depth = 1
        strategy = shallow.strategies[0]
        root, _ = build_taxonomy(strategy, strategy.taxonomy_instruction, mock_backend, shallow)
        assert root.children
        assert all(not c.children for c in root.children)

    def test_same_seed_same_tree(self, rs_plan):
        strategy = rs_plan.strategies[0]
        a, _ = build_taxonomy(strategy, strategy.taxonomy_instruction, MockBackend(9), rs_plan)
        b, _ = build_taxonomy(strategy, strategy.taxonomy_instruction, MockBackend(9), rs_plan)
        assert dump_taxonomy(a) == dump_taxonomy(b)

    def test_empty_instruction_rejected(self, rs_plan, mock_backend):
        with pytest.raises(ValueError):
            build_taxonomy(rs_plan.strategies[0], "", mock_backend, rs_plan)

    def test_persistence_round_trip(self, rs_taxonomies):
        for root in rs_taxonomies.values():
            text = dump_taxonomy(root)
            assert dump_taxonomy(parse_taxonomy(text)) == text

    def test_leaf_paths_address_existing_leaves(self, rs_taxonomies):
        for root in rs_taxonomies.values():
            for path in root.leaf_paths():
                node = root.find(path)
                assert node is not None and not node.children

    def test_backend_failure_leaves_partial_tree_with_error_marker(self, rs_plan, mock_backend):
        from cmdsift.synthgen.backends import BackendError

        class FailsOnBinaries:
            def complete(self, prompt):
                if "PATH: Reverse Shell Techniques > By Binary" in prompt:
                    raise BackendError("injected outage")
                return mock_backend.complete(prompt)

            def judge(self, question):
                return mock_backend.judge(question)

        strategy = rs_plan.strategy("malicious_reverse_shell")
        root, stats = build_taxonomy(
            strategy, strategy.taxonomy_instruction, FailsOnBinaries(), rs_plan
        )
        assert stats.backend_failures > 0
        by_binary = root.find((root.name, "By Binary"))
        assert by_binary is not None
        assert by_binary.error is not None
        assert not by_binary.children  # partial tree, other branches intact
        assert root.find((root.name, "By Technique")).children

    def test_malformed_proposals_counted_and_skipped(self, rs_plan, mock_backend):
        class Garbles:
            def __init__(self):
                self.first = True

            def complete(self, prompt):
                if "TASK: propose_children" in prompt and self.first:
                    self.first = False
                    return "@@@ ??? !!!"  # nothing parseable as a concept name
                return mock_backend.complete(prompt)

            def judge(self, question):
                return mock_backend.judge(question)

        strategy = rs_plan.strategy("malicious_reverse_shell")
        root, stats = build_taxonomy(
            strategy, strategy.taxonomy_instruction, Garbles(), rs_plan
        )
        assert stats.malformed >= 1
        assert root.children  # the remaining proposals still built the level


class TestSampleMix:
    def test_degenerate_single_leaf(self, rs_plan, mock_backend):
        from cmdsift.synthgen.taxonomy import TaxonomyNode

        single = {
            s.name: TaxonomyNode("R", children=[TaxonomyNode("only")])
            for s in rs_plan.strategies
        }
        rng = random.Random(0)
        for _ in range(10):
            mix = sample_mix(rs_plan, single, rng)
            assert mix.leaf_path == ("R", "only")

    def test_uniform_strategy_split(self, rs_plan, rs_taxonomies):
        rng = random.Random(1)
        counts = {s.name: 0 for s in rs_plan.strategies}
        n = 10_000
        for _ in range(n):
            counts[sample_mix(rs_plan, rs_taxonomies, rng).strategy] += 1
        for name in counts:
            assert abs(counts[name] / n - 0.5) < 0.02

    def test_leaf_path_runs_root_to_leaf(self, rs_plan, rs_taxonomies):
        rng = random.Random(2)
        mix = sample_mix(rs_plan, rs_taxonomies, rng)
        root = rs_taxonomies[mix.strategy]
        assert mix.leaf_path[0] == root.name
        assert root.find(mix.leaf_path) is not None

    def test_empty_taxonomy_rejected(self, rs_plan):
        from cmdsift.synthgen.taxonomy import TaxonomyNode

        empty = {s.name: TaxonomyNode("R") for s in rs_plan.strategies}
        with pytest.raises(GenerationError):
            sample_mix(rs_plan, empty, random.Random(0))


class TestScenarios:
    def test_perl_network_mix_includes_port_masquerade(self, rs_plan, mock_backend):
        strategy = rs_plan.strategy("malicious_reverse_shell")
        mix = Mix(strategy.name, ("Reverse Shell Techniques", "By Binary", "Perl", "Network-based"))
        scenarios = expand_scenarios(mix, strategy, mock_backend, 3)
        assert len(scenarios) == 3
        assert any("8443" in s for s in scenarios)

    def test_k_one(self, rs_plan, mock_backend):
        strategy = rs_plan.strategy("malicious_reverse_shell")
        mix = Mix(strategy.name, ("Reverse Shell Techniques", "By Binary", "Bash"))
        assert len(expand_scenarios(mix, strategy, mock_backend, 1)) == 1

    def test_scenario_selection_varies_over_draws(self, rs_plan, rs_taxonomies, mock_backend):
        strategy = rs_plan.strategy("malicious_reverse_shell")
        mix = Mix(strategy.name, ("Reverse Shell Techniques", "By Binary", "Perl", "Network-based"))
        rng = random.Random(3)
        picked = set()
        scenarios = expand_scenarios(mix, strategy, mock_backend, 3)
        for _ in range(100):
            picked.add(rng.choice(scenarios))
        assert len(picked) >= 2


class TestGenerateAndCritique:
    def test_perl_sample_accepted_with_expected_class(self, rs_plan, mock_backend):
        strategy = rs_plan.strategy("malicious_reverse_shell")
        mix = Mix(strategy.name, ("Reverse Shell Techniques", "By Binary", "Perl", "Network-based"))
        scenario = "A simple, one-line Perl command using the IO::Socket::INET module."
        gen = generate_and_critique(
            build_meta_prompt(mix, strategy, scenario),
            strategy.label, mock_backend, mix=mix, scenario=scenario,
        )
        assert gen.accepted
        assert gen.classification == "reverse_shell"
        assert gen.score == 95
        assert "perl" in gen.command_line.lower()

    def test_benign_man_page_accepted_as_benign(self, rs_plan, mock_backend):
        strategy = rs_plan.strategy("benign_non_reverse_shell")
        mix = Mix(
            strategy.name,
            ("Legitimate Command Lines", "Software Development", "Documentation Access"),
        )
        scenario = "A developer reading the manual page for a tool."
        gen = generate_and_critique(
            build_meta_prompt(mix, strategy, scenario),
            strategy.label, mock_backend, mix=mix, scenario=scenario,
        )
        assert gen.accepted
        assert gen.classification == "benign"

    def test_yes_to_both_question_forms_discards(self, rs_plan, mock_backend):
        class AlwaysYes:
            def complete(self, prompt):
                return mock_backend.complete(prompt)

            def judge(self, question):
                return True, "sure"

        strategy = rs_plan.strategy("malicious_reverse_shell")
        mix = Mix(strategy.name, ("Reverse Shell Techniques", "By Binary", "Bash"))
        gen = generate_and_critique(
            build_meta_prompt(mix, strategy, "x"),
            strategy.label, AlwaysYes(), mix=mix, scenario="x",
        )
        assert not gen.accepted
        assert gen.discard_reason == "critic_disagreement"

    def test_no_to_both_forms_discards(self, rs_plan, mock_backend):
        class AlwaysNo:
            def complete(self, prompt):
                return mock_backend.complete(prompt)

            def judge(self, question):
                return False, "nope"

        strategy = rs_plan.strategy("malicious_reverse_shell")
        mix = Mix(strategy.name, ("Reverse Shell Techniques", "By Binary", "Bash"))
        gen = generate_and_critique(
            build_meta_prompt(mix, strategy, "x"),
            strategy.label, AlwaysNo(), mix=mix, scenario="x",
        )
        assert not gen.accepted

    def test_unparseable_generation_discarded(self, rs_plan, mock_backend):
        class Garbled:
            def complete(self, prompt):
                return "no structured fields here"

            def judge(self, question):
                return True, ""

        strategy = rs_plan.strategy("malicious_reverse_shell")
        mix = Mix(strategy.name, ("Reverse Shell Techniques", "By Binary", "Bash"))
        gen = generate_and_critique(
            build_meta_prompt(mix, strategy, "x"),
            strategy.label, Garbled(), mix=mix, scenario="x",
        )
        assert not gen.accepted
        assert gen.discard_reason == "unparseable"


class TestGenerateDataset:
    def test_small_balanced_run(self, rs_plan, rs_taxonomies, mock_backend):
        samples, generated, stats = generate_dataset(
            rs_plan, rs_taxonomies, {Label.POSITIVE: 5, Label.NEGATIVE: 5},
            mock_backend, seed=2, now_ms=1_700_000_000_000,
        )
        assert len(samples) == 10
        assert sum(1 for s in samples if s.label is Label.POSITIVE) == 5
        assert all(s.origin is Origin.SYNTHETIC for s in samples)
        assert all(s.labeled_at_ms == 1_700_000_000_000 for s in samples)

    def test_byte_stable_output(self, rs_plan, rs_taxonomies, tmp_path):
        from cmdsift.core import write_samples

        paths = []
        for run in range(2):
            samples, _, _ = generate_dataset(
                rs_plan, rs_taxonomies, {Label.POSITIVE: 15, Label.NEGATIVE: 15},
                MockBackend(seed=6), seed=9, now_ms=1_700_000_000_000,
            )
            p = tmp_path / f"run{run}.tsv"
            write_samples(str(p), samples)
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_accepted_samples_carry_resolvable_mix(self, rs_plan, rs_taxonomies, mock_backend):
        _, generated, _ = generate_dataset(
            rs_plan, rs_taxonomies, {Label.POSITIVE: 5, Label.NEGATIVE: 5},
            mock_backend, seed=4, now_ms=1_700_000_000_000,
        )
        for g in generated:
            if g.accepted:
                root = rs_taxonomies[g.mix.strategy]
                node = root.find(g.mix.leaf_path)
                assert node is not None and not node.children

    def test_coverage_floor_enforced(self, rs_plan, mock_backend):
        from cmdsift.synthgen.taxonomy import TaxonomyNode

        skimpy = {
            s.name: TaxonomyNode("R", children=[TaxonomyNode("one"), TaxonomyNode("two")])
            for s in rs_plan.strategies
        }
        with pytest.raises(GenerationError, match="below floor"):
            check_coverage(rs_plan, skimpy)

    def test_acceptance_floor_aborts_with_diagnostics(self, rs_plan, rs_taxonomies, mock_backend):
        class Stonewall:
            def complete(self, prompt):
                return mock_backend.complete(prompt)

            def judge(self, question):
                return False, "never plausible"

        with pytest.raises(GenerationError, match="acceptance rate"):
            generate_dataset(
                rs_plan, rs_taxonomies, {Label.POSITIVE: 50, Label.NEGATIVE: 50},
                Stonewall(), seed=1, now_ms=0,
            )
