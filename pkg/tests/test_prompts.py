import json

import pytest

from capenrich.errors import InputError
from capenrich.prompts import (
    PromptTemplate,
    builtin_templates,
    instantiate,
    load_templates,
)


class TestBuiltinSets:
    def test_set_sizes(self):
        assert len(builtin_templates("base")) == 1
        assert len(builtin_templates("diverse")) == 10

    def test_names_unique(self):
        names = [t.name for t in builtin_templates("diverse")]
        assert len(names) == len(set(names))

    def test_unknown_set(self):
        with pytest.raises(InputError):
            builtin_templates("fancy")

    def test_category_validated(self):
        with pytest.raises(InputError):
            PromptTemplate("bad", "the X", "COLORFUL")
        with pytest.raises(InputError):
            PromptTemplate("", "the X", "BASE")


def _by_name(name):
    return next(t for t in builtin_templates("diverse") if t.name == name)


class TestInstantiate:
    def test_placeholder_fills_each_distinct_head(self):
        lines = instantiate(_by_name("color"), "a dog beside a tree")
        assert lines == [
            "a dog beside a tree, the color of dog is",
            "a dog beside a tree, the color of tree is",
        ]

    def test_repeated_heads_fill_once(self):
        lines = instantiate(_by_name("color"), "a dog beside a dog")
        assert lines == ["a dog beside a dog, the color of dog is"]

    def test_placeholder_free_pattern_emitted_once(self):
        assert instantiate(_by_name("weather"), "a dog") == [
            "a dog, the weather is"
        ]

    def test_person_gate_blocks_without_person_head(self):
        assert instantiate(_by_name("wears"), "a dog on a mat") == []

    def test_person_gate_fills_first_person_head(self):
        lines = instantiate(_by_name("wears"), "a dog beside a woman and a man")
        assert lines == ["a dog beside a woman and a man, the woman wears"]

    def test_generic_prefix_framing(self):
        (line,) = instantiate(_by_name("there-is"), "a cat on a mat")
        assert line == "a cat on a mat, there is"

    def test_empty_generic_rejected(self):
        with pytest.raises(InputError):
            instantiate(_by_name("it-is"), "   ")

    def test_headless_generic_yields_nothing_for_x_patterns(self):
        assert instantiate(_by_name("number"), "running quickly") == []

    def test_base_template(self):
        (base,) = builtin_templates("base")
        assert instantiate(base, "a red hat") == ["a red hat, the hat"]


class TestLoadTemplates:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text(
            json.dumps(
                [
                    {"name": "size", "pattern": "the size of X is", "category": "ATTRIBUTE"},
                    {"name": "lead", "pattern": "nearby", "category": "OTHER"},
                ]
            )
        )
        loaded = load_templates(str(path))
        assert [t.name for t in loaded] == ["size", "lead"]
        assert loaded[0].pattern == "the size of X is"

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_templates(str(tmp_path / "nope.json"))

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text("[{]")
        with pytest.raises(InputError, match="line 1"):
            load_templates(str(path))

    def test_non_list_rejected(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text('{"name": "x"}')
        with pytest.raises(InputError, match="JSON list"):
            load_templates(str(path))

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text(json.dumps([{"name": "x", "pattern": "y"}]))
        with pytest.raises(InputError, match="templates\\[0\\]"):
            load_templates(str(path))

    def test_duplicate_name_rejected(self, tmp_path):
        path = tmp_path / "t.json"
        rec = {"name": "x", "pattern": "it is", "category": "OTHER"}
        path.write_text(json.dumps([rec, rec]))
        with pytest.raises(InputError, match="duplicate"):
            load_templates(str(path))
