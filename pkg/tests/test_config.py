import numpy as np
import pytest

from l1verify.config import parse_config
from l1verify.errors import ConfigError

GOOD = """\
[problem]
name = vehicle

[parameters]
alpha = 1
X = 1

[schedule]
T = 2.3
tau1 = 1.3234426637128618
tau2 = 1.976557336287138
u1 = 1
u3 = -1
x0 = 0 0
xf = 1, 0
lambda0 = 1.944460826652248 0.8883746998125321

[tolerances]
margin_threshold = 1e-7
clarke_grid = 41
clarke_K = 1 0 0 1
richardson = no

[outputs]
report = out.json
"""


def test_parse_good_config():
    cfg = parse_config(GOOD, "good.ini")
    assert cfg.problem == "vehicle"
    assert cfg.parameters == {"alpha": 1.0, "X": 1.0}      # key case preserved
    assert np.allclose(cfg.schedule["xf"], [1.0, 0.0])
    assert cfg.options.clarke_grid == 41 and cfg.options.richardson is False
    assert cfg.options.clarke_K == [[1.0, 0.0], [0.0, 1.0]]
    assert cfg.outputs["report"] == "out.json"
    s = cfg.resolve_schedule()
    assert s.tau1 == pytest.approx(1.3234426637128618)


def _line(text, prefix):
    return next(i for i, l in enumerate(text.splitlines(), 1) if l.startswith(prefix))


def _expect(text, *fragments):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "c.ini")
    for f in fragments:
        assert f in str(info.value), str(info.value)


def test_bad_number_reports_line():
    text = GOOD.replace("tau1 = 1.3234426637128618", "tau1 = fast")
    _expect(text, f"c.ini:{_line(text, 'tau1')}:", "tau1")


def test_missing_lambda0_without_shoot():
    text = "\n".join(l for l in GOOD.splitlines() if not l.startswith("lambda0"))
    _expect(text, "lambda0", "[shoot]")


def test_shoot_block_replaces_lambda0():
    text = "\n".join(l for l in GOOD.splitlines() if not l.startswith("lambda0"))
    cfg = parse_config(text + "\n[shoot]\nlambda0 = 1 0.5\ntau1 = 0.92\ntau2 = 1.61\n")
    s = cfg.resolve_schedule()
    assert s.lambda0[0] == pytest.approx(1.944460826652248, rel=1e-8)


def test_unknown_problem_and_section():
    _expect(GOOD.replace("name = vehicle", "name = rocket"), "c.ini:2:", "rocket")
    _expect(GOOD + "\n[extras]\nx = 1\n", "unknown section")


def test_tolerance_validation():
    _expect(GOOD.replace("margin_threshold = 1e-7", "margin_threshold = -1"),
            f"c.ini:{_line(GOOD, 'margin_threshold')}:", "positive")
    _expect(GOOD.replace("clarke_grid = 41", "clarke_grid = 2.5"), "integer")
    _expect(GOOD.replace("clarke_K = 1 0 0 1", "clarke_K = 1 2 0 1"), "symmetric")
    _expect(GOOD + "\n[tolerances]\n", "c.ini")                       # duplicate section
    _expect(GOOD.replace("richardson = no", "speed = 3"), "unknown option")


def test_bad_bang_value():
    _expect(GOOD.replace("u3 = -1", "u3 = 0.5"), "u3")


def test_oracle_source_and_with_value():
    cfg = parse_config("[problem]\nname = vehicle\n[schedule]\nT = 2.3\nsource = oracle\n")
    s = cfg.with_value("T", 2.35).resolve_schedule()
    assert s.T == 2.35 and 0 < s.tau1 < s.tau2 < 2.35
    _expect("[problem]\nname = crossing\n[schedule]\nT = 2.3\nsource = oracle\n",
            "closed-form")
