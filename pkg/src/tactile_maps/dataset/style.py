"""Tactile request styling and location query templates."""

import re
from typing import Dict, Iterable, List, Tuple

from .types import LocationType, QueryError, StyleError, StyleRule

_SPEC_RE = re.compile(r"^(?:color:0x[0-9a-f]{6}|visibility:off)$")
_NAME_RE = re.compile(r"^[a-z_]+(?:\.[a-z_]+)*$")

# (feature, element, specification), in request order
_DEFAULT_ROWS: Tuple[Tuple[str, str, str], ...] = (
    ("all", "all", "color:0xffffff"),
    ("administrative", "labels", "visibility:off"),
    ("landscape", "all", "color:0x000000"),
    ("landscape", "labels", "visibility:off"),
    ("landscape.man_made", "all", "color:0x00ffff"),
    ("landscape.man_made", "geometry.fill", "color:0xffffff"),
    ("landscape.man_made.building", "geometry.fill", "color:0x00ffff"),
    ("landscape.natural", "all", "color:0xffffff"),
    ("poi", "labels", "visibility:off"),
    ("poi", "geometry.fill", "color:0x00ff00"),
    ("poi.medical", "geometry.fill", "color:0x808080"),
    ("poi.place_of_worship", "geometry.fill", "visibility:off"),
    ("poi.school", "geometry.fill", "visibility:off"),
    ("road", "labels", "visibility:off"),
    ("road.highway", "all", "color:0xffff00"),
    ("road.highway", "geometry.fill", "color:0xffff00"),
    ("road.highway.controlled_access", "geometry.fill", "color:0xffff00"),
    ("road.arterial", "all", "color:0xff00ff"),
    ("road.arterial", "geometry.fill", "color:0xff00ff"),
    ("road.local", "all", "color:0xff00ff"),
    ("road.local", "geometry.fill", "color:0xff00ff"),
    ("transit", "all", "visibility:off"),
    ("transit", "labels", "visibility:off"),
    ("water", "all", "color:0x0000ff"),
    ("water", "geometry.fill", "color:0x0000ff"),
    ("water", "labels", "visibility:off"),
)


def validate_rule(rule: StyleRule) -> None:
    if not _NAME_RE.match(rule.feature):
        raise StyleError(f"Invalid style feature '{rule.feature}'")
    if not _NAME_RE.match(rule.element):
        raise StyleError(f"Invalid style element '{rule.element}'")
    if not _SPEC_RE.match(rule.specification):
        raise StyleError(
            f"Invalid style specification '{rule.specification}'. "
            "Use 'color:0xrrggbb' (lowercase hex) or 'visibility:off'"
        )


def default_style_rules() -> List[StyleRule]:
    return [StyleRule(f, e, s) for f, e, s in _DEFAULT_ROWS]


def compile_style(rules: Iterable[StyleRule]) -> List[str]:
    """One ``feature:<f>|element:<e>|<spec>`` parameter per rule, order kept."""
    compiled = []
    for rule in rules:
        validate_rule(rule)
        compiled.append(f"feature:{rule.feature}|element:{rule.element}|{rule.specification}")
    return compiled


def parse_style(params: Iterable[str]) -> List[StyleRule]:
    rules = []
    for param in params:
        parts = param.split("|")
        if (
            len(parts) != 3
            or not parts[0].startswith("feature:")
            or not parts[1].startswith("element:")
        ):
            raise StyleError(f"Malformed style parameter '{param}'")
        rules.append(
            StyleRule(parts[0][len("feature:"):], parts[1][len("element:"):], parts[2])
        )
    return rules


# === LOCATION QUERIES ===

_QUERY_PARTS: Dict[LocationType, Tuple[str, ...]] = {
    LocationType.city: ("city", "province/state", "country"),
    LocationType.landmark: ("name", "city/state", "country"),
    LocationType.university: ("institution", "country"),
    LocationType.hospital: ("hospital", "address", "city", "state"),
}
_UK_CITY_PARTS = ("city", "country")


def query_parts(location_type: LocationType, uk: bool = False) -> Tuple[str, ...]:
    location_type = LocationType(location_type)
    if uk and location_type == LocationType.city:
        return _UK_CITY_PARTS
    return _QUERY_PARTS[location_type]


def build_query(location_type: LocationType, *parts: str, uk: bool = False) -> str:
    """Format a location query for the map API.

    Examples:
        >>> build_query(LocationType.city, "Ottawa", "Ontario", "Canada")
        'Ottawa, Ontario, Canada'
        >>> build_query(LocationType.city, "Leeds", "England", uk=True)
        'Leeds, England, UK'
    """
    location_type = LocationType(location_type)
    expected = query_parts(location_type, uk)
    if len(parts) != len(expected):
        raise QueryError(
            f"{location_type.value} query needs {len(expected)} parts "
            f"({', '.join(expected)}), got {len(parts)}"
        )
    cleaned: List[str] = []
    for name, value in zip(expected, parts):
        if value is None or not str(value).strip():
            raise QueryError(f"{location_type.value} query is missing its {name}")
        cleaned.append(str(value).strip())

    if uk and location_type == LocationType.city:
        cleaned.append("UK")
    elif location_type == LocationType.hospital:
        cleaned.append("USA")
    return ", ".join(cleaned)
