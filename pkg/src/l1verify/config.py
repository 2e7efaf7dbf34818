"""Run configuration: INI sections parsed with configparser.

Example::

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
    xf = 1 0
    lambda0 = 1.9444608266522476 0.8883746998125318

    [tolerances]
    margin_threshold = 1e-7

Instead of ``tau1``, ``tau2`` and ``lambda0`` the schedule may say
``source = oracle`` (closed-form schedule of a registered benchmark) or the
file may carry a ``[shoot]`` section with a guess (``lambda0``, ``tau1``,
``tau2``).  Vectors are whitespace- or comma-separated numbers.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .extremal import ReferenceSchedule, shoot_extremal
from .geometry import get_problem_factory, get_schedule_oracle, registered_problems
from .pipeline import VerifyOptions

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
_KNOWN = {"problem", "parameters", "schedule", "shoot", "tolerances", "outputs"}
_BOOL_OPTIONS = {"richardson", "run_differentials", "run_clarke"}
_INT_OPTIONS = {"ra_samples", "clarke_grid"}


@dataclass
class RunConfig:
    problem: str
    parameters: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    shoot: Optional[dict] = None
    options: VerifyOptions = field(default_factory=VerifyOptions)
    outputs: dict = field(default_factory=dict)
    source: str = "<string>"

    def build_problem(self):
        return get_problem_factory(self.problem)(**self.parameters)

    def with_value(self, name: str, value: float) -> "RunConfig":
        """Copy with ``T`` or a problem parameter replaced."""
        params = dict(self.parameters)
        sched = dict(self.schedule)
        if name == "T":
            sched["T"] = value
        else:
            params[name] = value
        return RunConfig(self.problem, params, sched, self.shoot, self.options, self.outputs,
                         self.source)

    def resolve_schedule(self, guess=None) -> ReferenceSchedule:
        """Schedule from explicit values, a closed-form oracle, or shooting."""
        s = self.schedule
        if s.get("source") == "oracle":
            return get_schedule_oracle(self.problem)(self.parameters, s["T"])
        if self.shoot is not None:
            if guess is None:
                guess = (self.shoot["lambda0"], self.shoot["tau1"], self.shoot["tau2"])
            result = shoot_extremal(self.build_problem(), s["x0"], s["xf"], s["T"], s["u1"],
                                    s["u3"], guess)
            return result.schedule
        return ReferenceSchedule(s["T"], s["tau1"], s["tau2"], s["u1"], s["u3"], s["x0"],
                                 s["xf"], s["lambda0"])

    def echo(self) -> dict:
        return {"problem": self.problem, "parameters": self.parameters,
                "schedule": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                             for k, v in self.schedule.items()},
                "shoot": None if self.shoot is None else
                {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.shoot.items()},
                "outputs": self.outputs, "source": self.source}


def _line_index(text: str) -> dict:
    index, section = {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = lineno
            continue
        m = _KEY.match(line)
        if m and section is not None:
            index[(section, m.group(1).strip())] = lineno
    return index


class _Reader:
    def __init__(self, parser, index, source):
        self.parser, self.index, self.source = parser, index, source

    def where(self, section, key=None) -> str:
        line = self.index.get((section, key)) or self.index.get((section, None))
        return f"{self.source}:{line}" if line else self.source

    def fail(self, section, key, message):
        raise ConfigError(f"{self.where(section, key)}: [{section}] {key}: {message}")

    def number(self, section, key):
        raw = self.parser[section][key]
        try:
            return float(raw)
        except ValueError:
            self.fail(section, key, f"expected a number, got {raw!r}")

    def vector(self, section, key):
        raw = self.parser[section][key]
        try:
            values = [float(v) for v in re.split(r"[\s,]+", raw.strip()) if v]
        except ValueError:
            self.fail(section, key, f"expected numbers, got {raw!r}")
        if not values:
            self.fail(section, key, "empty vector")
        return np.array(values)

    def sign(self, section, key):
        value = self.number(section, key)
        if value not in (-1.0, 1.0):
            self.fail(section, key, "bang values must be -1 or 1")
        return int(value)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}".replace("\n", " ")) from exc
    r = _Reader(parser, _line_index(text), source)

    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError(f"{r.where(section)}: unknown section [{section}]")
    if not parser.has_section("problem") or "name" not in parser["problem"]:
        raise ConfigError(f"{source}: missing [problem] name")
    name = parser["problem"]["name"].strip()
    if name not in registered_problems():
        r.fail("problem", "name", f"unknown problem {name!r}; registered: {registered_problems()}")

    params = {}
    if parser.has_section("parameters"):
        params = {k: r.number("parameters", k) for k in parser["parameters"]}

    if not parser.has_section("schedule"):
        raise ConfigError(f"{source}: missing [schedule] section")
    sec = parser["schedule"]
    sched = {}
    if "T" not in sec:
        raise ConfigError(f"{r.where('schedule')}: [schedule] requires T")
    sched["T"] = r.number("schedule", "T")
    source_kind = sec.get("source", "explicit").strip()
    if source_kind not in ("explicit", "oracle"):
        r.fail("schedule", "source", "must be 'explicit' or 'oracle'")
    if source_kind == "oracle":
        try:
            get_schedule_oracle(name)
        except KeyError as exc:
            r.fail("schedule", "source", str(exc))
        sched["source"] = "oracle"
    else:
        for key in ("u1", "u3", "x0", "xf"):
            if key not in sec:
                raise ConfigError(f"{r.where('schedule')}: [schedule] requires {key}")
        sched["u1"] = r.sign("schedule", "u1")
        sched["u3"] = r.sign("schedule", "u3")
        sched["x0"] = r.vector("schedule", "x0")
        sched["xf"] = r.vector("schedule", "xf")
        for key in ("tau1", "tau2"):
            if key in sec:
                sched[key] = r.number("schedule", key)
        if "lambda0" in sec:
            sched["lambda0"] = r.vector("schedule", "lambda0")

    shoot = None
    if parser.has_section("shoot"):
        shoot = {}
        for key in ("lambda0", "tau1", "tau2"):
            if key not in parser["shoot"]:
                raise ConfigError(f"{r.where('shoot')}: [shoot] requires {key}")
        shoot["lambda0"] = r.vector("shoot", "lambda0")
        shoot["tau1"] = r.number("shoot", "tau1")
        shoot["tau2"] = r.number("shoot", "tau2")
    if source_kind == "explicit" and shoot is None:
        missing = [k for k in ("tau1", "tau2", "lambda0") if k not in sched]
        if missing:
            raise ConfigError(f"{r.where('schedule')}: [schedule] lacks {', '.join(missing)} "
                              "and there is no [shoot] section")

    opts = {}
    valid = {f.name for f in fields(VerifyOptions)}
    if parser.has_section("tolerances"):
        for key, raw in parser["tolerances"].items():
            if key not in valid:
                r.fail("tolerances", key, f"unknown option; valid: {sorted(valid)}")
            if key in _BOOL_OPTIONS:
                try:
                    opts[key] = parser["tolerances"].getboolean(key)
                except ValueError:
                    r.fail("tolerances", key, f"expected a boolean, got {raw!r}")
            elif key in _INT_OPTIONS:
                value = r.number("tolerances", key)
                if value != int(value) or value < 1:
                    r.fail("tolerances", key, "expected a positive integer")
                opts[key] = int(value)
            elif key == "clarke_K":
                vec = r.vector("tolerances", key)
                m = int(round(np.sqrt(vec.size)))
                if m * m != vec.size:
                    r.fail("tolerances", key, "expected n*n entries (row major)")
                K = vec.reshape(m, m)
                if not np.allclose(K, K.T):
                    r.fail("tolerances", key, "K must be symmetric")
                opts[key] = K.tolist()
            elif key == "clarke_sweep":
                opts[key] = tuple(r.vector("tolerances", key).tolist()) \
                    if raw.strip().lower() != "none" else None
            else:
                value = r.number("tolerances", key)
                if value < 0 or (value == 0 and key != "clarke_c"):
                    r.fail("tolerances", key, "overrides must be positive")
                opts[key] = value
    try:
        options = VerifyOptions(**opts)
    except ValueError as exc:
        raise ConfigError(f"{r.where('tolerances')}: {exc}") from exc

    outputs = dict(parser["outputs"]) if parser.has_section("outputs") else {}
    return RunConfig(name, params, sched, shoot, options, outputs, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))
