import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isotess.field import (EvalDomainError, ParseError, blend, builtin_field,
                           field_from_expr, gyroid, parse_field,
                           plane, sphere, torus)

TORUS_DSL = "(sqrt(x^2+y^2)-2)^2+z^2-1"


class TestParse:
    def test_point_on_unit_sphere(self):
        expr = parse_field("x^2+y^2+z^2-1")
        assert expr(1.0, 0.0, 0.0) == 0.0

    def test_center_of_unit_sphere(self):
        expr = parse_field("x^2+y^2+z^2-1")
        assert expr(0.0, 0.0, 0.0) == -1.0

    def test_torus_outer_equator(self):
        expr = parse_field(TORUS_DSL)
        assert expr(3.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_precedence(self):
        assert parse_field("2+3*4")(0, 0, 0) == 14.0
        assert parse_field("2*3^2")(0, 0, 0) == 18.0
        assert parse_field("2^3^2")(0, 0, 0) == 512.0  # right-assoc
        assert parse_field("-x^2")(3.0, 0, 0) == -9.0  # ^ binds over unary -
        assert parse_field("2^-2")(0, 0, 0) == 0.25
        assert parse_field("10-4-3")(0, 0, 0) == 3.0  # left-assoc

    def test_functions(self):
        assert parse_field("min(x,y,z)")(3.0, -1.0, 2.0) == -1.0
        assert parse_field("max(x,y)")(3.0, -1.0, 0.0) == 3.0
        assert parse_field("abs(x)")(-2.5, 0, 0) == 2.5
        assert parse_field("sin(x)^2+cos(x)^2")(0.7, 0, 0) == pytest.approx(1.0)

    def test_syntax_error_position(self):
        with pytest.raises(ParseError) as err:
            parse_field("x+^y")
        assert err.value.line == 1
        assert err.value.column == 3

    def test_unknown_identifier(self):
        with pytest.raises(ParseError, match="unknown identifier"):
            parse_field("x+w")

    def test_unknown_function(self):
        with pytest.raises(ParseError, match="unknown identifier"):
            parse_field("tan(x)")

    def test_arity_mismatch(self):
        with pytest.raises(ParseError, match="argument"):
            parse_field("sqrt(x,y)")
        with pytest.raises(ParseError, match="at least"):
            parse_field("min(x)")

    def test_unbalanced_parens(self):
        with pytest.raises(ParseError):
            parse_field("(x+y")

    def test_domain_error_on_sqrt_of_negative(self):
        field = field_from_expr("sqrt(x)")
        with pytest.raises(EvalDomainError):
            field.value((-1.0, 0.0, 0.0))


class TestRoundTrip:
    RNG = np.random.default_rng(42)

    @pytest.mark.parametrize("source", [
        "x^2+y^2+z^2-1",
        TORUS_DSL,
        "-x^2+3*y/(z+4)-sin(x*y)",
        "min(x, max(y, z))+exp(-x^2)",
        "abs(x-0.5)^3",
        "2^-x",
    ])
    def test_print_parse_same_evaluation(self, source):
        expr = parse_field(source)
        again = parse_field(expr.to_source())
        pts = self.RNG.uniform(-2, 2, (100, 3))
        for x, y, z in pts:
            a = expr(x, y, z)
            b = again(x, y, z)
            if math.isfinite(a):
                assert abs(a - b) < 1e-12

    def test_purity_bit_identical(self):
        field = field_from_expr(TORUS_DSL)
        p = (0.37, -1.24, 0.55)
        assert field.value(p) == field.value(p)
        g1, g2 = field.gradient(p), field.gradient(p)
        assert np.array_equal(g1, g2)


# hypothesis strategy for random expression trees
def exprs(depth=3):
    leaf = st.one_of(
        st.sampled_from(["x", "y", "z"]),
        st.floats(min_value=0.1, max_value=5.0).map(lambda v: f"{v!r}"),
    )
    def extend(children):
        unary = children.map(lambda a: f"sin({a})")
        binary = st.tuples(children, children, st.sampled_from("+-*")).map(
            lambda t: f"({t[0]}{t[2]}{t[1]})")
        call = st.tuples(children, children).map(lambda t: f"min({t[0]},{t[1]})")
        return st.one_of(unary, binary, call)
    return st.recursive(leaf, extend, max_leaves=8)


@settings(max_examples=60, deadline=None)
@given(source=exprs(), x=st.floats(-3, 3), y=st.floats(-3, 3), z=st.floats(-3, 3))
def test_round_trip_property(source, x, y, z):
    expr = parse_field(source)
    again = parse_field(expr.to_source())
    a, b = expr(x, y, z), again(x, y, z)
    assert a == b or (math.isnan(a) and math.isnan(b)) or abs(a - b) < 1e-12


class TestGradient:
    def test_sphere_analytic(self, unit_sphere):
        assert np.allclose(unit_sphere.gradient((1, 0, 0)), (2, 0, 0), atol=1e-15)

    def test_plane_constant_gradient(self):
        f = field_from_expr("z-0.5")
        for p in [(0, 0, 0), (3, -2, 10)]:
            assert np.allclose(f.gradient(p), (0, 0, 1), atol=1e-15)

    def test_dsl_torus_fd_vs_analytic(self):
        field = field_from_expr(TORUS_DSL)
        analytic = field.gradient((3.0, 0.0, 0.0))
        fd = field.fd_gradient((3.0, 0.0, 0.0), h=1e-5)
        assert np.all(np.abs(analytic - fd) < 1e-6)

    @pytest.mark.parametrize("make", [
        lambda: sphere((0.2, -0.3, 0.1), 1.3),
        lambda: torus(2.0, 1.0),
        lambda: plane((1.0, 2.0, -1.0), 0.3),
        lambda: gyroid(1.5),
        lambda: blend([sphere((-0.75, 0, 0), 1.0), sphere((0.75, 0, 0), 1.0)], 8.0),
    ])
    def test_fd_matches_analytic_at_random_points(self, make):
        # truncation O(h^2 f''') plus the unavoidable roundoff eps*|F|/h
        field = make()
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1.8, 1.8, (100, 3))
        if field.name.startswith("torus"):
            pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 0.3]
        for p in pts:
            g_true = field.gradient(p)
            h = 1e-5 * (1.0 + np.linalg.norm(p))
            g_fd = field.fd_gradient(p)
            third = _third_derivative_scale(field, p)
            bound = 10.0 * h * h * third + 1e-10 * (1.0 + abs(field.value(p))) / h * 1e-5
            bound = max(bound, 1e-9)
            assert np.all(np.abs(g_true - g_fd) <= bound), (p, g_true, g_fd, bound)

    def test_fd_mode_field(self):
        field = field_from_expr(TORUS_DSL, gradient_mode="fd")
        g = field.gradient((3.0, 0.0, 0.0))
        assert np.allclose(g, (2.0, 0.0, 0.0), atol=1e-6)


def _third_derivative_scale(field, p, h=1e-2):
    """Crude sampled bound on |f'''| along the axes."""
    out = 0.0
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        vals = [field.value(p + k * e) for k in (-2, -1, 0, 1, 2)]
        third = (vals[4] - 2 * vals[3] + 2 * vals[1] - vals[0]) / (2 * h ** 3)
        out = max(out, abs(third))
    return out


class TestBuiltins:
    def test_sphere_surface_point(self):
        assert builtin_field("sphere", center=(0, 0, 0), radius=1.0).value((0, 1, 0)) == 0.0

    def test_torus_tube_top(self):
        assert builtin_field("torus", major=2.0, minor=1.0).value((2, 0, 1)) == pytest.approx(0.0)

    def test_blend_midpoint_negative(self):
        f1 = sphere((-0.75, 0, 0), 1.0)
        f2 = sphere((0.75, 0, 0), 1.0)
        k = 8.0
        b = blend([f1, f2], k)
        got = b.value((0, 0, 0))
        # oracle: evaluate the documented smooth-min formula directly
        v1 = f1.value((0, 0, 0))
        v2 = f2.value((0, 0, 0))
        expected = -math.log(math.exp(-k * v1) + math.exp(-k * v2)) / k
        assert got == pytest.approx(expected, abs=1e-14)
        assert got < 0.0

    def test_invalid_parameters(self):
        from isotess.field import FieldError
        with pytest.raises(FieldError):
            sphere(radius=-1.0)
        with pytest.raises(FieldError):
            torus(1.0, 2.0)
        with pytest.raises(FieldError):
            plane((0, 0, 0), 1.0)
        with pytest.raises(FieldError):
            builtin_field("cube")

    def test_vectorized_matches_scalar(self, standard_torus):
        pts = np.random.default_rng(0).uniform(-3, 3, (50, 3))
        vals = standard_torus.values(pts)
        for p, v in zip(pts, vals):
            assert standard_torus.value(p) == v
