import numpy as np
import pytest

from nullflow.frames import FrameKind
from nullflow.scenario import ScenarioError, builtin_names, load_scenario, loads_scenario

BASE = """\
[scenario]
kind = partially_null
[curve]
k1 = 1
k2 = 0.5
"""


def errors_of(text):
    with pytest.raises(ScenarioError) as info:
        loads_scenario(text, "t.ini")
    return info.value.errors


def test_builtins_cover_required_set():
    names = set(builtin_names())
    assert len(names) >= 6
    assert {"zero_flow_pn", "zero_flow_psn", "pn_exp_circle", "psn_parabola",
            "pn_inextensible", "pn_audit"} <= names


@pytest.mark.parametrize("name", builtin_names())
def test_every_builtin_loads(name):
    sc = load_scenario(name)
    assert sc.name == name
    assert load_scenario(f"builtin:{name}").name == name


def test_exp_circle_scenario():
    sc = load_scenario("pn_exp_circle")
    assert sc.kind is FrameKind.PARTIALLY_NULL
    assert sc.text["k2"] == "2*exp(s)"
    assert np.allclose(sc.curvatures.values(np.array([0.0, 1.0])), [[1, 2, 0], [1, 2 * np.e, 0]])


def test_minimal_scenario_defaults():
    sc = loads_scenario(BASE)
    assert sc.mode == "transport" and sc.refinements == 3 and sc.seed == 0
    assert sc.flow.is_zero()
    assert sc.steps == 10


def test_pn_k3_rule():
    errs = errors_of(BASE + "k3 = 1\n")
    assert len(errs) == 1
    assert "line 6" in errs[0] and "k3" in errs[0] and "must be 0" in errs[0]


def test_psn_k1_rule():
    errs = errors_of(BASE.replace("partially_null", "pseudo_null").replace("k1 = 1", "k1 = 2"))
    assert any("k1" in e and "0 or 1" in e for e in errs)


def test_empty_file():
    errs = errors_of("   \n")
    assert errs == ["line 1: parse error: empty scenario file"]


def test_all_errors_reported_at_once():
    text = BASE + "colour = blue\n[flow]\nc1 = s\nc2 = sin(q)\n[grid]\ndu = -1\n[extra]\n"
    errs = errors_of(text)
    joined = "\n".join(errs)
    assert len(errs) >= 5
    for fragment in ("unknown key", "c1", "expression error", "must be positive", "unknown section"):
        assert fragment in joined


def test_parse_error_has_line_number():
    errs = errors_of("[scenario]\nkind = pn\nthis line is junk\n")
    assert errs[0].startswith("line 3: parse error")
    errs = errors_of("kind = pn\n")
    assert errs[0].startswith("line 1:")


def test_explicit_frame_must_satisfy_relations():
    errs = errors_of(BASE + "frame = 0 1 0 0  0 0 1 0  1 0 0 1  -0.5 0 0 0.6\n")
    assert any("metric relations" in e for e in errs)
    errs = errors_of(BASE + "frame = 1 2 3\n")
    assert any("expected 16 numbers" in e for e in errs)


def test_position_mode_step_limit():
    errs = errors_of(BASE.replace("kind = partially_null", "kind = pn\nmode = position")
                     + "[grid]\ndu = 0.01\ndt = 0.02\nduration = 1\n")
    assert any("must not exceed du" in e for e in errs)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/scenario.ini")
