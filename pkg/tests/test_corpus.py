"""Function extraction, repository loading, and split contracts."""

import json
import logging

import numpy as np
import pytest

from repocat import corpus


SIMPLE = """\
static int add(int a, int b) {
    return a + b;
}
"""

TWO_WITH_NOISE = """\
#include <stdio.h>
#define LOOP(x) while (x) { step(); }

/* a comment with a stray brace { and a fake int fake(void) { body } */
static const char *BANNER = "not a function() { nope }";

int first(void)
{
    if (ready) { emit('{'); }
    return 0;
}

struct point make_point(int x, int y) {
    struct point p = {x, y};
    return p;
}

int declared_only(int z);
int assigned = setup(1);
"""

CPP_SCOPES = """\
namespace audio {

class Mixer {
 public:
    int open(int card) {
        return card + 1;
    }
};

}  // namespace audio

extern "C" {
int c_entry(void) { return 0; }
}

std::string qualified::lookup(const std::string &key) {
    return key;
}
"""

UNBALANCED = """\
int fine(void) { return 1; }
int broken(void) {
    if (x) {
"""


class TestExtractFunctions:
    def test_simple_definition(self):
        result = corpus.extract_functions(SIMPLE, project="demo")
        assert len(result.functions) == 1
        fn = result.functions[0]
        assert fn.project_name == "demo"
        assert fn.function_name == "add"
        assert fn.body == SIMPLE.strip()
        assert result.diagnostics == []

    def test_noise_is_ignored(self):
        result = corpus.extract_functions(TWO_WITH_NOISE)
        names = [f.function_name for f in result.functions]
        assert names == ["first", "make_point"]
        first = result.functions[0]
        # Body starts at the declaration, not at the preceding noise.
        assert first.body.startswith("int first(void)")
        assert first.body.endswith("}")
        assert corpus.brace_balance(first.body) == 0

    def test_control_keywords_never_match(self):
        src = "int f(void) { for (;;) { if (g()) { h(); } } return 0; }"
        result = corpus.extract_functions(src)
        assert [f.function_name for f in result.functions] == ["f"]

    def test_nested_scopes_are_transparent(self):
        result = corpus.extract_functions(CPP_SCOPES)
        names = [f.function_name for f in result.functions]
        assert names == ["open", "c_entry", "lookup"]
        lookup = result.functions[2]
        assert lookup.body.startswith("std::string qualified::lookup")

    def test_local_blocks_do_not_spawn_candidates(self):
        src = "void outer(void) { helper(1); { inner_call(2); } }"
        result = corpus.extract_functions(src)
        assert [f.function_name for f in result.functions] == ["outer"]

    def test_unbalanced_eof_keeps_earlier_functions(self):
        result = corpus.extract_functions(UNBALANCED)
        assert [f.function_name for f in result.functions] == ["fine"]
        assert len(result.diagnostics) == 1
        assert "unbalanced" in result.diagnostics[0]
        assert "broken" in result.diagnostics[0]

    def test_binary_input_rejected(self):
        with pytest.raises(ValueError):
            corpus.extract_functions("int a(void) { \0 }")

    def test_declarations_and_calls_skipped(self):
        src = "int f(int);\nint x = f(3);\nint g(int a) { return f(a); }\n"
        result = corpus.extract_functions(src)
        assert [f.function_name for f in result.functions] == ["g"]

    def test_pointer_returns_and_ctor_inits(self):
        src = (
            "static char *dup_name(const char *s) { return strdup(s); }\n"
            "Mixer::Mixer(int card) : card_(card), open_(false) { init(); }\n"
        )
        result = corpus.extract_functions(src)
        assert [f.function_name for f in result.functions] == ["dup_name", "Mixer"]

    def test_every_body_brace_balances(self):
        for src in (SIMPLE, TWO_WITH_NOISE, CPP_SCOPES):
            for fn in corpus.extract_functions(src).functions:
                assert corpus.brace_balance(fn.body) == 0

    def test_bodies_cover_whole_definition(self):
        # signature tokens and final brace retained, trailing code excluded
        src = "int one() { return 1; }\nint two() { return 2; }\n"
        fns = corpus.extract_functions(src).functions
        assert fns[0].body == "int one() { return 1; }"
        assert fns[1].body == "int two() { return 2; }"


class TestLexer:
    def test_preprocessor_continuation(self):
        src = "#define BAD {{{ \\\n   still bad {{{\nint ok(void) { return 0; }\n"
        fns = corpus.extract_functions(src).functions
        assert [f.function_name for f in fns] == ["ok"]

    def test_string_with_escapes(self):
        src = 'int f(void) { puts("brace \\" {"); return 0; }'
        fns = corpus.extract_functions(src).functions
        assert len(fns) == 1
        assert corpus.brace_balance(src) == 0

    def test_unterminated_string_resyncs_at_newline(self):
        src = 'static char *s = "oops;\nint g(void) { return 2; }\n'
        fns = corpus.extract_functions(src).functions
        assert [f.function_name for f in fns] == ["g"]

    def test_brace_balance_ignores_comment_and_literal_braces(self):
        assert corpus.brace_balance("/* { */ '{' \"{\" // {") == 0
        assert corpus.brace_balance("{ }") == 0
        assert corpus.brace_balance("{ { }") == 1


def _write_project(root, name, files):
    pdir = root / name
    pdir.mkdir(parents=True)
    for fname, text in files.items():
        (pdir / fname).write_text(text)


class TestLoadRepository:
    def test_loads_labeled_projects(self, tmp_path):
        _write_project(tmp_path, "alsa", {"mix.c": SIMPLE})
        _write_project(tmp_path, "nethack", {"play.c": "int go(void) { return 7; }"})
        labels = {"alsa": "sound", "nethack": "games"}
        descriptions = {"alsa": "a sound mixer"}
        projects = corpus.load_repository(tmp_path, labels, descriptions)
        assert [p.name for p in projects] == ["alsa", "nethack"]
        assert projects[0].category == "sound"
        assert projects[0].description == "a sound mixer"
        assert projects[1].description == ""
        assert [f.function_name for f in projects[0].functions] == ["add"]
        assert all(f.project_name == "alsa" for f in projects[0].functions)

    def test_missing_directory_warns_and_skips(self, tmp_path, caplog):
        _write_project(tmp_path, "real", {"a.c": SIMPLE})
        with caplog.at_level(logging.WARNING, logger="repocat.corpus"):
            projects = corpus.load_repository(tmp_path, {"real": "x", "ghost": "y"})
        assert [p.name for p in projects] == ["real"]
        assert any("ghost" in rec.message for rec in caplog.records)

    def test_binary_file_skipped(self, tmp_path, caplog):
        _write_project(tmp_path, "p", {"good.c": SIMPLE})
        (tmp_path / "p" / "blob.c").write_bytes(b"\x00\x01\x02")
        with caplog.at_level(logging.WARNING, logger="repocat.corpus"):
            projects = corpus.load_repository(tmp_path, {"p": "x"})
        assert [f.function_name for f in projects[0].functions] == ["add"]
        assert any("binary" in rec.message for rec in caplog.records)

    def test_non_source_extensions_ignored(self, tmp_path):
        _write_project(tmp_path, "p", {"a.c": SIMPLE, "README.md": "int x(void) {}"})
        projects = corpus.load_repository(tmp_path, {"p": "x"})
        assert len(projects[0].functions) == 1

    def test_empty_project_dropped(self, tmp_path, caplog):
        _write_project(tmp_path, "empty", {"a.c": "int x;\n"})
        _write_project(tmp_path, "full", {"a.c": SIMPLE})
        with caplog.at_level(logging.WARNING, logger="repocat.corpus"):
            projects = corpus.load_repository(tmp_path, {"empty": "x", "full": "x"})
        assert [p.name for p in projects] == ["full"]

    def test_threaded_matches_serial(self, tmp_path):
        for i in range(4):
            _write_project(
                tmp_path, f"p{i}",
                {f"f{j}.c": f"int fn{i}_{j}(void) {{ return {j}; }}\n" for j in range(5)},
            )
        labels = {f"p{i}": "x" for i in range(4)}
        serial = corpus.load_repository(tmp_path, labels, threads=1)
        threaded = corpus.load_repository(tmp_path, labels, threads=4)
        assert [(p.name, [f.function_name for f in p.functions]) for p in serial] == [
            (p.name, [f.function_name for f in p.functions]) for p in threaded
        ]


def _fake_projects(categories, projects_per_cat, functions_per_project):
    projects = []
    for cat in categories:
        for p in range(projects_per_cat):
            name = f"{cat}{p:02d}"
            funcs = [
                corpus.FunctionRecord(name, f"fn{k}", f"int fn{k}(void) {{ return {k}; }}")
                for k in range(functions_per_project)
            ]
            projects.append(corpus.Project(name=name, category=cat, functions=funcs))
    return projects


class TestMakeSplits:
    def test_disjoint_and_balanced(self):
        projects = _fake_projects(["a", "b"], 5, 10)
        split = corpus.make_splits(projects, holdout_per_category=2, per_category_count=12, seed=3)
        holdout_names = {p.name for p in split.holdout_projects}
        assert len(split.holdout_projects) == 4
        assert sum(p.name.startswith("a") for p in split.holdout_projects) == 2
        # train functions never come from held-out projects
        assert all(fn.project_name not in holdout_names for fn, _ in split.train)
        # balanced: exactly per_category_count per category
        for cat in ("a", "b"):
            assert sum(1 for _, c in split.train if c == cat) == 12
        # undersampling without replacement: no duplicate functions
        keys = [(fn.project_name, fn.function_name) for fn, _ in split.train]
        assert len(keys) == len(set(keys))

    def test_deterministic_for_seed(self):
        projects = _fake_projects(["a", "b", "c"], 6, 8)
        s1 = corpus.make_splits(projects, 2, 20, seed=11)
        s2 = corpus.make_splits(projects, 2, 20, seed=11)
        s3 = corpus.make_splits(projects, 2, 20, seed=12)
        assert [p.name for p in s1.holdout_projects] == [p.name for p in s2.holdout_projects]
        assert [(f.project_name, f.function_name) for f, _ in s1.train] == [
            (f.project_name, f.function_name) for f, _ in s2.train
        ]
        assert [p.name for p in s1.holdout_projects] != [p.name for p in s3.holdout_projects]

    def test_too_few_projects_names_category(self):
        projects = _fake_projects(["thin", "thick"], 2, 10) + _fake_projects(["thick"], 3, 10)
        with pytest.raises(ValueError, match="thin"):
            corpus.make_splits(projects, holdout_per_category=2, per_category_count=5, seed=0)

    def test_too_few_functions_names_category(self):
        projects = _fake_projects(["small"], 3, 4)
        with pytest.raises(ValueError, match="small"):
            corpus.make_splits(projects, holdout_per_category=1, per_category_count=9, seed=0)

    def test_chance_of_holdout_selection_varies_with_seed(self):
        projects = _fake_projects(["a"], 8, 2)
        picks = {
            tuple(p.name for p in corpus.make_splits(projects, 2, 4, seed=s).holdout_projects)
            for s in range(10)
        }
        assert len(picks) > 1


def test_read_labels(tmp_path):
    path = tmp_path / "labels.jsonl"
    rows = [
        {"name": "alsa", "category": "sound", "description": "mixer lib"},
        {"name": "nethack", "category": "games"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    labels, descriptions = corpus.read_labels(path)
    assert labels == {"alsa": "sound", "nethack": "games"}
    assert descriptions == {"alsa": "mixer lib"}

    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"name": "x"}) + "\n")
    with pytest.raises(ValueError):
        corpus.read_labels(bad)

    dup = tmp_path / "dup.jsonl"
    dup.write_text(
        json.dumps({"name": "x", "category": "a"}) + "\n"
        + json.dumps({"name": "x", "category": "b"}) + "\n"
    )
    with pytest.raises(ValueError, match="duplicate"):
        corpus.read_labels(dup)
