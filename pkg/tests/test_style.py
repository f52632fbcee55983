"""Tests for dataset/style.py - tactile styling rules and location queries."""

import pytest

from tactile_maps.dataset.style import (
    build_query,
    compile_style,
    default_style_rules,
    parse_style,
    query_parts,
)
from tactile_maps.dataset.types import LocationType, QueryError, StyleError, StyleRule

from conftest import DATA_DIR


class TestCompileStyle:
    """Tests for style parameter compilation."""

    def test_arterial_rule(self):
        """A color rule compiles to feature|element|color."""
        rule = StyleRule("road.arterial", "all", "color:0xff00ff")
        assert compile_style([rule]) == ["feature:road.arterial|element:all|color:0xff00ff"]

    def test_visibility_rule(self):
        """A visibility rule compiles to feature|element|visibility."""
        rule = StyleRule("water", "labels", "visibility:off")
        assert compile_style([rule]) == ["feature:water|element:labels|visibility:off"]

    def test_empty(self):
        """No rules compile to no parameters."""
        assert compile_style([]) == []

    def test_default_rules_match_golden_file(self):
        """The default tactile style is pinned by a golden file, in order."""
        expected = (DATA_DIR / "style_rules.golden").read_text(encoding="utf-8").splitlines()
        assert compile_style(default_style_rules()) == expected
        assert len(expected) == 26

    def test_parse_inverts_compile(self):
        """parse_style recovers the rules from compiled parameters."""
        rules = default_style_rules()
        assert parse_style(compile_style(rules)) == rules

    @pytest.mark.parametrize(
        "feature,element,spec",
        [
            ("road.arterial", "all", "color:0xFF00FF"),
            ("road.arterial", "all", "color:ff00ff"),
            ("road.arterial", "all", "visibility:on"),
            ("Road", "all", "visibility:off"),
            ("road", "all elements", "visibility:off"),
        ],
    )
    def test_malformed_rules(self, feature, element, spec):
        """Rules outside the grammar are rejected when constructed."""
        with pytest.raises(StyleError):
            StyleRule(feature, element, spec)

    def test_malformed_parameter(self):
        """Parameters that are not three '|' parts are rejected."""
        with pytest.raises(StyleError, match="Malformed"):
            parse_style(["feature:water|visibility:off"])


class TestBuildQuery:
    """Tests for location query templates."""

    def test_city(self):
        """Cities are 'City, Province/State, Country'."""
        assert build_query(LocationType.city, "Ottawa", "Ontario", "Canada") == "Ottawa, Ontario, Canada"

    def test_uk_city(self):
        """UK cities are 'City, Country, UK'."""
        assert build_query(LocationType.city, "Leeds", "England", uk=True) == "Leeds, England, UK"

    def test_university(self):
        """Universities are 'Institution, Country'."""
        assert build_query("university", "McGill University", "Canada") == "McGill University, Canada"

    def test_hospital(self):
        """Hospitals carry an address and end in USA."""
        query = build_query(LocationType.hospital, "General Hospital", "1 Main St", "Springfield", "IL")
        assert query == "General Hospital, 1 Main St, Springfield, IL, USA"

    def test_parts_are_stripped(self):
        """Whitespace around parts is removed."""
        assert build_query("landmark", " Eiffel Tower ", "Paris", "France") == "Eiffel Tower, Paris, France"

    def test_empty_part(self):
        """A landmark with an empty name is an error naming the part."""
        with pytest.raises(QueryError, match="missing its name"):
            build_query(LocationType.landmark, "  ", "Paris", "France")

    def test_wrong_part_count(self):
        """The number of parts must match the template."""
        with pytest.raises(QueryError, match="needs 3 parts"):
            build_query(LocationType.city, "Ottawa", "Canada")

    def test_query_parts(self):
        """Templates are exposed per location type."""
        assert query_parts(LocationType.university) == ("institution", "country")
        assert query_parts(LocationType.city, uk=True) == ("city", "country")
