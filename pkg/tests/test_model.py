import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rprbox.model import (
    REFERENCE_GEOMETRY,
    DegeneratePlatformError,
    GeometryError,
    ManipulatorGeometry,
    load_geometry,
    platform_angle,
)

REFERENCE_TEXT = """
# reference manipulator
a2x = 15.91
a3x = 0
a3y = 10     # A3 above A1
d1 = 17.04
d2 = 16.54
d3 = 20.84
"""


def test_load_reference_text():
    g = load_geometry(REFERENCE_TEXT)
    assert (g.a2x, g.a3x, g.a3y, g.d1, g.d2, g.d3) == (15.91, 0.0, 10.0, 17.04, 16.54, 20.84)
    assert g == REFERENCE_GEOMETRY
    assert not g.degenerate


def test_load_is_deterministic():
    a, b = load_geometry(REFERENCE_TEXT), load_geometry(REFERENCE_TEXT)
    assert a == b
    assert a.beta.hex() == b.beta.hex()
    assert load_geometry(a.to_text()) == a


@pytest.mark.parametrize(
    "text, message, field",
    [
        (REFERENCE_TEXT.replace("d1 = 17.04", "d1 = 0"), "non-positive edge", "d1"),
        (REFERENCE_TEXT.replace("d2 = 16.54", f"d2 = {17.04 + 20.84 + 1}"), "triangle inequality violated", "d2"),
        (REFERENCE_TEXT.replace("d3 = 20.84", ""), "missing key", "d3"),
        (REFERENCE_TEXT.replace("a3y = 10", "a3y = ten"), "cannot parse", "a3y"),
        (REFERENCE_TEXT.replace("d1 = 17.04", "d1 = nan"), "non-finite", "d1"),
        (REFERENCE_TEXT + "d4 = 3\n", "unknown key", "d4"),
        (REFERENCE_TEXT.replace("a2x = 15.91", "a2x = -1"), "a2x must be positive", "a2x"),
    ],
)
def test_load_rejects(text, message, field):
    with pytest.raises(GeometryError, match=message) as info:
        load_geometry(text)
    assert info.value.field == field


def test_platform_angle_equilateral():
    assert platform_angle(1, 1, 1) == pytest.approx(math.pi / 3, abs=1e-15)


def test_platform_angle_collinear_limit():
    assert platform_angle(1.0, 3.0, 2.0) == pytest.approx(math.pi, abs=1e-15)


def test_platform_angle_impossible():
    with pytest.raises(DegeneratePlatformError):
        platform_angle(1.0, 5.0, 1.0)


def test_platform_angle_reference_by_construction():
    d1, d2, d3 = 17.04, 16.54, 20.84
    beta = platform_angle(d1, d2, d3)
    # B1 at the origin, B2 on the x-axis, B3 rotated by beta from B1B2
    b3 = np.array([d3 * math.cos(beta), d3 * math.sin(beta)])
    assert abs(np.linalg.norm(b3 - [d1, 0.0]) - d2) / d2 < 1e-9
    assert beta == pytest.approx(0.882603, abs=1e-6)


def test_degenerate_flag_on_weak_triangle():
    g = ManipulatorGeometry(a2x=1, a3x=0, a3y=1, d1=1, d2=3, d3=2)
    assert g.degenerate
    assert g.beta == pytest.approx(math.pi)


def test_platform_closes_for_random_orientations():
    g = REFERENCE_GEOMETRY
    rng = np.random.default_rng(7)
    for alpha in rng.uniform(-10, 10, 1000):
        b2 = g.d1 * np.array([math.cos(alpha), math.sin(alpha)])
        b3 = g.d3 * np.array([math.cos(alpha + g.beta), math.sin(alpha + g.beta)])
        assert abs(np.linalg.norm(b2 - b3) - g.d2) < 1e-9


edges = st.floats(min_value=0.1, max_value=100.0)


@settings(max_examples=300, deadline=None)
@given(edges, edges, edges)
def test_law_of_cosines_roundtrip(d1, d2, d3):
    if not (d1 < d2 + d3 and d2 < d1 + d3 and d3 < d1 + d2):
        return
    beta = platform_angle(d1, d2, d3)
    assert 0.0 <= beta <= math.pi
    rebuilt = math.sqrt(max(0.0, d1 * d1 + d3 * d3 - 2 * d1 * d3 * math.cos(beta)))
    assert abs(rebuilt - d2) <= 1e-9 * d2 + 1e-12
