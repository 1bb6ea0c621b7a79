import numpy as np
import pytest

from fracmix.config import ConfigError, ExperimentConfig, compile_expression, parse_config, serialize, with_overrides

MINIMAL = """
# standard 1D run
[domain]
dimension = 1
resolution = 100
gamma0 = left

[operator]
s = 0.5

[solver]
delta = 1e-2
mu = 1e-2
dt = 1e-4
t_end = 0.1
"""


def test_minimal_file():
    cfg = parse_config(MINIMAL)
    assert cfg.domain.resolution == 100
    assert cfg.domain.gamma0 == ("left",)
    assert cfg.operator.s == 0.5
    sc = cfg.solver_config()
    assert (sc.delta, sc.mu, sc.dt, sc.t_end) == (1e-2, 1e-2, 1e-4, 0.1)


def test_exponent_out_of_range_message():
    with pytest.raises(ConfigError) as info:
        parse_config("[operator]\ns = 1.5\n")
    assert any("s must lie in (0,1)" in e and "line 2" in e for e in info.value.errors)


def test_all_errors_collected_with_lines():
    text = "[operator]\ns = 1.5\nbogus = 1\n[solver]\ndt = fast\n[nowhere]\nx = 1\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    errs = info.value.errors
    assert len(errs) == 4
    for line in (2, 3, 5, 6):
        assert any(e.startswith(f"line {line}:") for e in errs), errs


def test_missing_solver_section_defaults():
    cfg = parse_config("[domain]\nresolution = 40\n[sweep]\ndelta_grid = 1e-2, 5e-3\nmu_grid = 1e-2, 5e-3\n")
    assert cfg.solver == ExperimentConfig().solver
    assert "solver.dt" in cfg.defaulted
    assert "domain.resolution" not in cfg.defaulted


@pytest.mark.parametrize("text,fragment", [
    ("[domain]\ngamma0 =\n", "Gamma0 empty"),
    ("[domain]\ngamma0 = top\n", "unknown side"),
    ("[domain]\ndimension = 3\n", "must be 1 or 2"),
    ("[domain]\nresolution = 2.5\n", "type mismatch"),
    ("[domain]\ncoefficient = diagonal\na1 = __import__('os')\n", "invalid expression"),
    ("[solver]\nadapt = maybe\n", "type mismatch"),
    ("[solver]\ninitial = gaussian\n", "must be one of"),
    ("[sweep]\ndelta_grid = 1e-3, 1e-2\n", "strictly decreasing"),
    ("[sweep]\nmode = diagonal\ndelta_grid = 1e-2\nmu_grid = 1e-2, 5e-3\n", "equal length"),
    ("[solver]\ndt = 1\ndt = 2\n", "duplicate key"),
    ("dt = 1\n", "outside of any section"),
])
def test_constraint_violations(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert any(fragment in e for e in info.value.errors), info.value.errors


def test_serialize_round_trip():
    cfg = parse_config(MINIMAL)
    cfg = with_overrides(cfg, domain={"coefficient": "diagonal", "a1": "1 + x"},
                         output={"snapshot_times": (0.0, 0.05)}, solver={"adapt": True, "dt": 1 / 3 * 1e-4})
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert serialize(again) == serialize(cfg)


def test_digest_tracks_content():
    a = parse_config(MINIMAL)
    b = with_overrides(a, solver={"dt": 5e-5})
    assert a.digest() != b.digest()
    assert len(a.digest()) == 16


def test_expression_evaluator():
    f = compile_expression("1 + 0.5*sin(pi*x) * y**2")
    pts = np.array([[0.5, 2.0], [0.0, 1.0]])
    np.testing.assert_allclose(f(pts), [3.0, 1.0])
    np.testing.assert_allclose(compile_expression("2")(pts), [2.0, 2.0])
    for bad in ("x.real", "open('f')", "[x]", "lambda: 1"):
        with pytest.raises((ValueError, SyntaxError)):
            compile_expression(bad)


def test_coefficient_spec_from_config():
    from fracmix.mesh import build_coefficients, build_domain

    cfg = parse_config("[domain]\ndimension = 2\nresolution = 8\ncoefficient = full_symmetric\n"
                       "a11 = 2\na12 = 0.5\na22 = 1 + y\n")
    dom = build_domain(2, 8, cfg.domain.gamma0)
    c = build_coefficients(dom, cfg.domain.coefficient_spec())
    assert c.matrices[0, 0, 1] == 0.5
    assert c.lambda1 > 0
