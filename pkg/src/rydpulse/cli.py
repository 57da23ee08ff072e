"""Command-line entry point: protocol runs, calibration, measurement trees and report comparison.

Subcommands
-----------
``run PROTOCOL`` (or ``gate3``, ``gate2``, ``sbs``, ``triangle [--fast]``)
    Simulate one protocol and write ``report.json``, one
    ``trajectory_<block>.csv`` per input block and, with ``--sweep``,
    ``sweep.csv``.
``calibrate``
    Recover pulse parameters and write a JSON parameter report.
``measure``
    Write the outcome tree of a measurement plan as JSON.
``compare REPORT REFERENCE``
    Field-by-field comparison; exit status 0 on pass, 1 on failure and 2 on
    a schema mismatch.

Run settings come from an optional INI file (``--config``) with sections
``[run]``, ``[physical]``, ``[overrides]``, ``[sweep]`` and ``[output]``;
command-line flags win over the file. Frequencies are ordinary MHz and
times are microseconds.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .calibrate import (
    DEFAULT_BOXES,
    IDEAL_BLOCKADE,
    OBJECTIVE_ORDER,
    CalibrationError,
    calibrate_all,
    default_objectives,
    verify_gate3,
    verify_preparation,
)
from .core import SystemConfig, b_field_to_delta, mhz_to_angular
from .measure import (
    embed_report,
    outcome_tree,
    parse_plan,
    sbs_state,
    triangle_state,
)
from .evolve import DEFAULT_TRAJECTORY_STEPS
from .metrics import (
    DEFAULT_TAU_US,
    DEFAULT_V_SAMPLES,
    ProtocolSetup,
    error_budget,
    sweep,
    write_sweep_csv,
)
from .protocols import (
    FAST_OMEGA,
    FAST_OMEGA2,
    FAST_OMEGA_EFF,
    GATE3_OMEGA1,
    GATE3_OMEGA2,
    PROTOCOLS,
    SBS_ETA,
    SBS_OMEGA,
    SBS_OMEGA_EFF,
    TRIANGLE_ETA,
    TRIANGLE_OMEGA,
    TRIANGLE_OMEGA_EFF,
    GateParams,
    ProtocolReport,
    correction_angles,
    run_gate2,
    run_gate3,
    run_preparation,
    sbs_params,
    triangle_params,
)

REPORT_SCHEMA = "rydpulse-report/1"
REFERENCE_SCHEMA = "rydpulse-reference/1"
CALIBRATION_SCHEMA = "rydpulse-calibration/1"
DEFAULT_V0_MHZ = 260.0

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

# anchor Rabi frequency (MHz) and its ratio to delta for each protocol
ANCHORS: dict[str, tuple[str, float, float]] = {
    "gate3": ("omega_over_delta", 3.25, GATE3_OMEGA1),
    "gate2": ("omega_over_delta", 3.25, GATE3_OMEGA1),
    "sbs": ("omega_eff_over_delta", 1.0, SBS_OMEGA_EFF),
    "triangle": ("omega_eff_over_delta", 1.0, TRIANGLE_OMEGA_EFF),
    # fast mode keeps the largest Rabi frequency of the standard triangle run
    "triangle_fast": ("omega_over_delta", TRIANGLE_OMEGA / TRIANGLE_OMEGA_EFF, FAST_OMEGA),
}

# (omega, eta, omega_eff) of the preparation protocols, Rabi values in units of delta
PREPARATION_DEFAULTS: dict[str, tuple[float, float, float]] = {
    "sbs": (SBS_OMEGA, SBS_ETA, SBS_OMEGA_EFF),
    "triangle": (TRIANGLE_OMEGA, TRIANGLE_ETA, TRIANGLE_OMEGA_EFF),
    "triangle_fast": (FAST_OMEGA, FAST_OMEGA2 / FAST_OMEGA, FAST_OMEGA_EFF),
}

_PREP = ("omega_over_delta", "eta", "omega_eff_over_delta", "t_p3_us", "third_pulse", "magnus_steps")
APPLICABLE: dict[str, tuple[str, ...]] = {
    "gate3": ("omega_over_delta", "omega2_over_delta", "omega2_phase"),
    "gate2": ("omega_over_delta", "stark_plus_mhz"),
    "sbs": _PREP,
    "triangle": _PREP + ("t_p1_us", "t_p2_us"),
    "triangle_fast": _PREP + ("t_p1_us", "t_p2_us"),
}


class ConfigError(ValueError):
    """Invalid run configuration, with the offending field and file line when known."""

    def __init__(self, message: str, field: str | None = None, source: str | None = None, line: int | None = None):
        self.field = field
        self.source = source
        self.line = line
        super().__init__(message)

    def __str__(self) -> str:
        where = ""
        if self.source:
            where = f"{self.source}:{self.line}: " if self.line else f"{self.source}: "
        name = f"{self.field}: " if self.field else ""
        return f"{where}{name}{self.args[0]}"


class NumericalError(RuntimeError):
    """A run produced non-finite numbers."""


# --------------------------------------------------------------------------
# value parsing

_PI_RE = re.compile(r"^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)?(?:[eE][+-]?\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_number(text: str) -> float:
    """Parse a float; multiples of ``pi`` such as ``-pi``, ``pi/2`` or ``0.5*pi`` are accepted."""
    text = str(text).strip()
    m = _PI_RE.match(text)
    if m:
        coef = m.group(1)
        if coef in ("", "+"):
            c = 1.0
        elif coef == "-":
            c = -1.0
        else:
            c = float(coef)
        return c * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
    return float(text)


def parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_epsilons(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive) or a comma-separated list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected start:stop:step, got {text!r}")
        a, b, step = (float(x) for x in parts)
        if step <= 0 or b < a:
            raise ValueError(f"bad range {text!r}")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        values = [round(a + k * step, 12) for k in range(n)]
    else:
        values = [float(x) for x in text.split(",") if x.strip()]
    if not values:
        raise ValueError("empty epsilon list")
    for e in values:
        if not 0.0 <= e < 1.0:
            raise ValueError(f"epsilon {e} outside [0, 1)")
    return values


def _positive(text: str) -> float:
    x = parse_number(text)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"expected a positive number, got {text!r}")
    return x


def _finite(text: str) -> float:
    x = parse_number(text)
    if not math.isfinite(x):
        raise ValueError(f"expected a finite number, got {text!r}")
    return x


def _epsilon(text: str) -> float:
    x = parse_number(text)
    if not 0.0 <= x < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {text!r}")
    return x


def _protocol(text: str) -> str:
    t = str(text).strip()
    if t not in PROTOCOLS:
        raise ValueError(f"unknown protocol {t!r}; choose from {', '.join(PROTOCOLS)}")
    return t


def _odd_samples(text: str) -> int:
    n = int(str(text).strip())
    if n < 3 or n % 2 == 0:
        raise ValueError(f"n_v_samples must be odd and at least 3, got {text!r}")
    return n


def _positive_int(text: str) -> int:
    n = int(str(text).strip())
    if n < 1:
        raise ValueError(f"expected a positive integer, got {text!r}")
    return n


def _third_pulse(text: str) -> str:
    t = str(text).strip()
    if t not in ("two_tone", "static"):
        raise ValueError(f"third_pulse must be 'two_tone' or 'static', got {t!r}")
    return t


# section -> key -> parser
SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "run": {"protocol": _protocol},
    "physical": {
        "omega_mhz": _positive,
        "delta_mhz": _positive,
        "b_gauss": _positive,
        "v0_mhz": _positive,
        "tau_us": _positive,
        "epsilon": _epsilon,
        "beta": _finite,
        "ideal_blockade": parse_bool,
    },
    "overrides": {
        "omega_over_delta": _positive,
        "omega2_over_delta": _positive,
        "omega2_phase": _finite,
        "eta": _finite,
        "omega_eff_over_delta": _positive,
        "t_p1_us": _positive,
        "t_p2_us": _positive,
        "t_p3_us": _positive,
        "stark_plus_mhz": _finite,
        "third_pulse": _third_pulse,
        "magnus_steps": _positive_int,
        "n_steps": _positive_int,
    },
    "sweep": {"epsilons": parse_epsilons, "n_v_samples": _odd_samples},
    "output": {"directory": str, "trajectories": parse_bool},
}


# --------------------------------------------------------------------------
# configuration


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of every ``key = value`` entry, keyed by (section, key)."""
    out: dict[tuple[str, str], int] = {}
    section = ""
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m:
            out.setdefault((section, m.group(1).strip().lower()), i)
    return out


def read_config(path: str | Path) -> dict[str, Any]:
    """Parse and validate an INI run configuration into flat ``section.key`` settings."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from exc
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", f"{exc.section}.{exc.option}", str(path), exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, str(path), exc.lineno) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("entry outside any [section]", None, str(path), exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", None, str(path), lineno) from exc
    lines = _key_lines(text)
    out: dict[str, Any] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            line = next((i for i, ln in enumerate(text.splitlines(), 1) if ln.strip() == f"[{section}]"), None)
            raise ConfigError(f"unknown section; expected one of {', '.join(SCHEMA)}", section, str(path), line)
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigError(
                    f"unknown key; expected one of {', '.join(SCHEMA[section])}", f"{section}.{key}", str(path), line
                )
            try:
                out[f"{section}.{key}"] = SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(str(exc), f"{section}.{key}", str(path), line) from exc
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of one protocol run.

    Frequencies are ordinary MHz, times microseconds, angles radians.
    ``overrides`` holds protocol parameters replacing the built-in defaults.
    """

    protocol: str
    omega_mhz: float
    delta_mhz: float
    v0_mhz: float
    tau_us: float = DEFAULT_TAU_US
    epsilon: float = 0.0
    beta: float | None = None
    ideal_blockade: bool = False
    b_gauss: float | None = None
    overrides: tuple[tuple[str, Any], ...] = ()
    epsilons: tuple[float, ...] = ()
    n_v_samples: int = DEFAULT_V_SAMPLES
    output: str = "."
    trajectories: bool = True

    @property
    def system(self) -> SystemConfig:
        return SystemConfig(
            delta=mhz_to_angular(self.delta_mhz),
            v0=mhz_to_angular(self.v0_mhz),
            tau=self.tau_us,
            epsilon=self.epsilon,
            n_atoms=3 if self.protocol.startswith("triangle") else 2,
            b_field_gauss=self.b_gauss,
        )

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "omega_mhz": self.omega_mhz,
            "delta_mhz": self.delta_mhz,
            "v0_mhz": self.v0_mhz,
            "tau_us": self.tau_us,
            "epsilon": self.epsilon,
            "beta": self.beta,
            "ideal_blockade": self.ideal_blockade,
            "b_gauss": self.b_gauss,
            "overrides": dict(self.overrides),
            "epsilons": list(self.epsilons),
            "n_v_samples": self.n_v_samples,
        }


def resolve_config(settings: dict[str, Any]) -> RunConfig:
    """Combine flat ``section.key`` settings into a :class:`RunConfig`, filling defaults."""
    protocol = settings.get("run.protocol")
    if protocol is None:
        raise ConfigError("no protocol given", "run.protocol")
    anchor_key, anchor_mhz, anchor_ratio = ANCHORS[protocol]
    overrides = {k.split(".", 1)[1]: v for k, v in settings.items() if k.startswith("overrides.")}
    for key in overrides:
        if key != "n_steps" and key not in APPLICABLE[protocol]:
            raise ConfigError(f"does not apply to {protocol}", f"overrides.{key}")
    ratio = overrides.get(anchor_key, anchor_ratio)

    b_gauss = settings.get("physical.b_gauss")
    delta_mhz = settings.get("physical.delta_mhz")
    if b_gauss is not None:
        from_field = b_field_to_delta(b_gauss) / (2 * math.pi)
        if delta_mhz is not None and abs(delta_mhz - from_field) > 1e-9 * from_field:
            raise ConfigError(
                f"delta_mhz={delta_mhz} disagrees with b_gauss={b_gauss} (implies {from_field})", "physical.delta_mhz"
            )
        delta_mhz = from_field
    omega_mhz = settings.get("physical.omega_mhz")
    if delta_mhz is None:
        omega_mhz = anchor_mhz if omega_mhz is None else omega_mhz
        delta_mhz = omega_mhz / ratio
    elif omega_mhz is None:
        omega_mhz = ratio * delta_mhz
    else:
        if anchor_key in overrides and abs(omega_mhz / delta_mhz - ratio) > 1e-12 * ratio:
            raise ConfigError(
                f"omega_mhz / delta_mhz contradicts overrides.{anchor_key}", "physical.omega_mhz"
            )
        overrides[anchor_key] = omega_mhz / delta_mhz

    beta = settings.get("physical.beta")
    if beta is not None and protocol not in ("gate3", "gate2"):
        raise ConfigError("beta applies only to gate3 and gate2", "physical.beta")
    cfg = RunConfig(
        protocol=protocol,
        omega_mhz=float(omega_mhz),
        delta_mhz=float(delta_mhz),
        v0_mhz=settings.get("physical.v0_mhz", DEFAULT_V0_MHZ),
        tau_us=settings.get("physical.tau_us", DEFAULT_TAU_US),
        epsilon=settings.get("physical.epsilon", 0.0),
        beta=beta,
        ideal_blockade=settings.get("physical.ideal_blockade", False),
        b_gauss=b_gauss,
        overrides=tuple(sorted(overrides.items())),
        epsilons=tuple(settings.get("sweep.epsilons", ())),
        n_v_samples=settings.get("sweep.n_v_samples", DEFAULT_V_SAMPLES),
        output=settings.get("output.directory", "."),
        trajectories=settings.get("output.trajectories", True),
    )
    try:
        cfg.system
    except ValueError as exc:
        raise ConfigError(str(exc), "physical") from exc
    return cfg


def build_setup(cfg: RunConfig) -> ProtocolSetup:
    """Protocol parameters (rad/us) for a resolved configuration."""
    ov = dict(cfg.overrides)
    delta = mhz_to_angular(cfg.delta_mhz)
    v = IDEAL_BLOCKADE * delta if cfg.ideal_blockade else mhz_to_angular(cfg.v0_mhz)
    if cfg.protocol in ("gate3", "gate2"):
        kw: dict[str, Any] = {"omega1": ov.get("omega_over_delta", GATE3_OMEGA1) * delta}
        if cfg.beta is not None:
            kw["beta"] = cfg.beta
        if cfg.protocol == "gate3":
            mag = ov.get("omega2_over_delta", abs(GATE3_OMEGA2))
            phase = ov.get("omega2_phase", float(np.angle(GATE3_OMEGA2)))
            kw["ratio_omega2"] = mag * np.exp(1j * phase)
            return ProtocolSetup("gate3", GateParams.gate3(delta, v, **kw))
        if "stark_plus_mhz" in ov:
            kw["stark_plus"] = mhz_to_angular(ov["stark_plus_mhz"])
        return ProtocolSetup("gate2", GateParams.gate2(delta, v, **kw))

    omega, eta, omega_eff = PREPARATION_DEFAULTS[cfg.protocol]
    omega = ov.get("omega_over_delta", omega) * delta
    eta = ov.get("eta", eta)
    omega_eff = ov.get("omega_eff_over_delta", omega_eff) * delta
    kw = {k: ov[k] for k in ("third_pulse", "magnus_steps") if k in ov}
    t_p3 = ov.get("t_p3_us")
    if cfg.protocol == "sbs":
        return ProtocolSetup("sbs", sbs_params(omega, eta, omega_eff, delta, v, t_p3=t_p3, **kw))
    p = triangle_params(
        omega,
        eta,
        omega_eff,
        delta,
        v,
        fast=cfg.protocol == "triangle_fast",
        t_p1=ov.get("t_p1_us"),
        t_p2=ov.get("t_p2_us"),
        t_p3=t_p3,
        **kw,
    )
    return ProtocolSetup(cfg.protocol, p)


# --------------------------------------------------------------------------
# report assembly


def dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline, no NaN."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _check_finite(obj: Any, path: str = "") -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}/{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}/{i}")
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise NumericalError(f"non-finite value at {path or '/'}")


def epsilon_key(eps: float) -> str:
    return f"{eps:.4f}".rstrip("0").rstrip(".") if eps else "0"


def run_report(setup: ProtocolSetup, n_steps: int = DEFAULT_TRAJECTORY_STEPS, keep: bool = False) -> ProtocolReport:
    """Nominal-interaction report with Rydberg times, optionally keeping trajectories."""
    if setup.protocol == "gate3":
        return run_gate3(setup.params, n_steps=n_steps, keep_trajectories=keep)
    if setup.protocol == "gate2":
        return run_gate2(setup.params, n_steps=n_steps, keep_trajectories=keep)
    return run_preparation(setup.protocol, setup.params, n_steps=n_steps, keep_trajectories=keep)


def run_protocol(cfg: RunConfig, out_dir: str | Path | None = None) -> dict:
    """Simulate ``cfg`` and write its artifacts; returns the report document."""
    out = Path(cfg.output if out_dir is None else out_dir)
    setup = build_setup(cfg)
    n_steps = dict(cfg.overrides).get("n_steps", DEFAULT_TRAJECTORY_STEPS)
    reference = run_report(setup, n_steps, keep=cfg.trajectories)
    budget = error_budget(setup, cfg.epsilon, cfg.tau_us, cfg.n_v_samples, reference)
    doc = {
        "schema": REPORT_SCHEMA,
        "config": cfg.to_dict(),
        "report": reference.to_dict(),
        "error_budget": budget.to_dict(),
        "correction_angles": correction_angles(reference),
    }
    budgets = []
    if cfg.epsilons:
        budgets = sweep(setup, cfg.epsilons, cfg.tau_us, cfg.n_v_samples, reference)
        doc["sweep"] = {epsilon_key(b.epsilon): b.to_dict() for b in budgets}
    _check_finite(doc)
    # single writer, after every worker result has been merged in order
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps(doc))
    for block, traj in reference.trajectories.items():
        traj.to_csv(out / f"trajectory_{block}.csv")
    if budgets:
        write_sweep_csv(out / "sweep.csv", budgets)
    return doc


# --------------------------------------------------------------------------
# comparison


class SchemaError(ValueError):
    """The two documents cannot be compared field by field."""


TOLERANCE_KINDS = ("abs", "rel", "factor", "angle", "max", "min")


def load_json(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SchemaError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return doc


def flatten(doc: Any, prefix: str = "") -> dict[str, Any]:
    """Leaves of a JSON document keyed by slash-separated paths (``/report/classes/uu/phase``)."""
    if isinstance(doc, dict):
        out: dict[str, Any] = {}
        for k, v in doc.items():
            out.update(flatten(v, f"{prefix}/{k}"))
        return out
    if isinstance(doc, list):
        out = {}
        for i, v in enumerate(doc):
            out.update(flatten(v, f"{prefix}/{i}"))
        return out
    return {prefix: doc}


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def within(actual: float, expected: float, tol: float, kind: str) -> bool:
    """Whether ``actual`` meets ``expected`` under a tolerance of the given kind.

    ``abs`` and ``rel`` bound the difference; ``factor`` accepts
    ``expected / tol <= actual <= expected * tol``; ``angle`` bounds the
    wrapped difference; ``max`` and ``min`` are one-sided bounds at ``expected``.
    """
    if kind == "abs":
        return abs(actual - expected) <= tol
    if kind == "rel":
        return abs(actual - expected) <= tol * abs(expected)
    if kind == "factor":
        lo, hi = sorted((expected / tol, expected * tol))
        return lo <= actual <= hi
    if kind == "angle":
        return abs(math.remainder(actual - expected, 2 * math.pi)) <= tol
    if kind == "max":
        return actual <= expected
    if kind == "min":
        return actual >= expected
    raise SchemaError(f"unknown tolerance kind {kind!r}")


def _check_reference(ref: dict) -> None:
    fields = ref.get("fields")
    if not isinstance(fields, dict) or not fields:
        raise SchemaError("reference has no 'fields' object")
    for path, spec in fields.items():
        if not isinstance(spec, dict) or not _is_number(spec.get("value")):
            raise SchemaError(f"reference field {path}: needs a numeric 'value'")
        kind = spec.get("kind", "abs")
        if kind not in TOLERANCE_KINDS:
            raise SchemaError(f"reference field {path}: unknown kind {kind!r}")
        if kind not in ("max", "min") and not _is_number(spec.get("tol")):
            raise SchemaError(f"reference field {path}: needs a numeric 'tol'")


def compare_documents(report: dict, reference: dict, tol: float | None = None) -> dict:
    """Compare a report with a reference file or with another report.

    A reference file (``schema = rydpulse-reference/1``) lists fields with a
    value, tolerance, tolerance kind and origin; ``tol`` then replaces every
    field's tolerance. Two reports of one schema are compared leaf by leaf,
    numbers to absolute tolerance ``tol`` (default exact) and everything
    else by equality.

    Raises
    ------
    SchemaError
        If the documents are of incompatible kinds or shapes.
    """
    failures = []
    if reference.get("schema") == REFERENCE_SCHEMA:
        _check_reference(reference)
        target = reference.get("target_schema", REPORT_SCHEMA)
        if report.get("schema") != target:
            raise SchemaError(f"reference expects a {target} document, got {report.get('schema')!r}")
        protocol = reference.get("protocol")
        actual_protocol = report.get("report", {}).get("protocol")
        if protocol is not None and actual_protocol is not None and protocol != actual_protocol:
            raise SchemaError(f"reference is for {protocol!r}, report is for {actual_protocol!r}")
        leaves = flatten(report)
        for path, spec in sorted(reference["fields"].items()):
            kind = spec.get("kind", "abs")
            t = spec.get("tol") if tol is None else tol
            entry = {
                "field": path,
                "expected": spec["value"],
                "tol": t,
                "kind": kind,
                "origin": spec.get("origin"),
            }
            if path not in leaves:
                failures.append(dict(entry, actual=None, reason="missing from report"))
                continue
            actual = leaves[path]
            if not _is_number(actual):
                failures.append(dict(entry, actual=actual, reason="not a number"))
            elif not within(float(actual), float(spec["value"]), t, kind):
                failures.append(dict(entry, actual=actual, reason="out of tolerance"))
        return {"mode": "reference", "status": "fail" if failures else "pass",
                "checked": len(reference["fields"]), "failures": failures}

    schema = report.get("schema")
    if schema not in (REPORT_SCHEMA, CALIBRATION_SCHEMA) or reference.get("schema") != schema:
        raise SchemaError(f"cannot compare schema {schema!r} with {reference.get('schema')!r}")
    a, b = flatten(report), flatten(reference)
    only_a, only_b = sorted(set(a) - set(b)), sorted(set(b) - set(a))
    if only_a or only_b:
        raise SchemaError(f"field sets differ: only in report {only_a[:5]}, only in reference {only_b[:5]}")
    t = 0.0 if tol is None else tol
    for path in sorted(a):
        x, y = a[path], b[path]
        if _is_number(x) and _is_number(y):
            ok = abs(float(x) - float(y)) <= t
        else:
            ok = x == y
        if not ok:
            failures.append({"field": path, "actual": x, "expected": y, "tol": t, "kind": "abs",
                             "reason": "differs"})
    return {"mode": "report", "status": "fail" if failures else "pass", "checked": len(a), "failures": failures}


def reference_path(name: str) -> Path:
    """Path of a shipped reference file such as ``"gate3"`` or ``"calibration"``."""
    path = Path(__file__).with_name("data") / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no shipped reference named {name!r}")
    return path


# --------------------------------------------------------------------------
# calibration and measurement


def calibration_document(
    names: Sequence[str] | None = None,
    perturb: float | None = None,
    box_rel: float = 0.3,
    restarts: int | None = None,
    verify: bool = True,
) -> dict:
    """Calibrate the chosen objectives and return the JSON parameter report.

    With ``perturb`` every search starts from the default values scaled by
    ``1 + perturb`` inside a box of relative half-width ``box_rel`` around
    that start; otherwise the fixed default boxes are used.
    """
    objs = default_objectives()
    starts, boxes = {}, {}
    if perturb is not None:
        for name, obj in objs.items():
            start = {k: v * (1.0 + perturb) for k, v in obj.reference.items()}
            starts[name] = start
            boxes[name] = obj.box_around(start, box_rel)
    kw = {} if restarts is None else {"restarts": restarts}
    results = calibrate_all(boxes, starts, names=names, **kw)
    doc: dict[str, Any] = {
        "schema": CALIBRATION_SCHEMA,
        "units": {"rabi": "units of delta", "t_p1, t_p2": "pi / |omega|", "t_p3": "pi / delta"},
        "seed": {"perturb": perturb, "box_rel": box_rel if perturb is not None else None},
        "boxes": {k: {p: list(b) for p, b in (boxes.get(k) or DEFAULT_BOXES[k]).items()} for k in results},
        "results": {k: r.to_dict() for k, r in results.items()},
    }
    if verify:
        doc["verification"] = verification(results)
    return doc


def verification(results: dict) -> dict:
    """Feed calibrated sets back through the full protocols at ideal blockade."""
    defaults = {k: dict(o.reference) for k, o in default_objectives().items()}

    def values(name: str) -> dict[str, float]:
        return results[name].values if name in results else defaults[name]

    out = {}
    if {"gate3_pulse1", "gate3_pulse2"} & set(results):
        leak = verify_gate3(values("gate3_pulse1")["omega1_over_delta"], values("gate3_pulse2")["omega2_over_delta"])
        out["gate3"] = {"leakage": leak, "max_leakage": max(leak.values())}
    if {"sbs_pair", "sbs_third"} & set(results):
        pops = verify_preparation("sbs", {**values("sbs_pair"), **values("sbs_third")})
        out["sbs"] = {"population": pops, "max_leakage": max(1 - p for p in pops.values())}
    if {"triangle_pair", "triangle_third"} & set(results):
        pops = verify_preparation("triangle", {**values("triangle_pair"), **values("triangle_third")})
        out["triangle"] = {"population": pops, "min_population": min(pops.values())}
    return out


def measurement_state(cfg: RunConfig | None, state: str, source: str):
    """The state to measure: the ideal target or the simulated final state."""
    if source == "ideal":
        return sbs_state(0.0, 0.0, 0.0) if state == "sbs" else triangle_state(0.0, 0.0, 0.0, 0.0)
    if cfg is None:
        raise ConfigError("a simulated state needs a run configuration", "--source")
    report = build_setup(cfg).run()
    return embed_report(report)


# --------------------------------------------------------------------------
# argument parsing

# flag -> (settings key, parser)
RUN_FLAGS: dict[str, str] = {
    "omega-mhz": "physical.omega_mhz",
    "delta-mhz": "physical.delta_mhz",
    "b-gauss": "physical.b_gauss",
    "v0-mhz": "physical.v0_mhz",
    "tau-us": "physical.tau_us",
    "epsilon": "physical.epsilon",
    "beta": "physical.beta",
    "omega-over-delta": "overrides.omega_over_delta",
    "omega2-over-delta": "overrides.omega2_over_delta",
    "omega2-phase": "overrides.omega2_phase",
    "eta": "overrides.eta",
    "omega-eff-over-delta": "overrides.omega_eff_over_delta",
    "t-p1-us": "overrides.t_p1_us",
    "t-p2-us": "overrides.t_p2_us",
    "t-p3-us": "overrides.t_p3_us",
    "stark-plus-mhz": "overrides.stark_plus_mhz",
    "third-pulse": "overrides.third_pulse",
    "magnus-steps": "overrides.magnus_steps",
    "n-steps": "overrides.n_steps",
    "sweep": "sweep.epsilons",
    "n-v-samples": "sweep.n_v_samples",
    "output": "output.directory",
}

_FLAG_HELP = {
    "omega-mhz": "anchor Rabi frequency in MHz (gates and fast triangle: first pulse; sbs, triangle: third pulse)",
    "delta-mhz": "half splitting of the Rydberg sublevels in MHz",
    "b-gauss": "magnetic field in gauss; sets delta",
    "v0-mhz": f"nominal pair interaction in MHz (default {DEFAULT_V0_MHZ:g})",
    "tau-us": f"Rydberg lifetime in us (default {DEFAULT_TAU_US:g})",
    "epsilon": "interaction spread of the error budget (default 0)",
    "beta": "commanded controlled phase of the gates, e.g. --beta=-pi",
    "sweep": "epsilon values as start:stop:step or a comma list",
    "n-v-samples": f"quadrature points of the interaction average (default {DEFAULT_V_SAMPLES})",
    "output": "output directory (default: current directory)",
}


def _add_run_flags(p: argparse.ArgumentParser, skip: tuple[str, ...] = ()) -> None:
    p.add_argument("--config", help="INI file with [run], [physical], [overrides], [sweep], [output]")
    for flag in RUN_FLAGS:
        if flag in skip:
            continue
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), help=_FLAG_HELP.get(flag))
    p.add_argument("--ideal-blockade", action="store_true", default=None,
                   help="replace the pair interaction by 1e6 delta")
    p.add_argument("--no-trajectories", dest="trajectories", action="store_false", default=None,
                   help="skip the per-block trajectory CSV files")


def config_from_args(args: argparse.Namespace, protocol: str | None) -> RunConfig:
    """Resolve file settings and flags; errors name the flag or the file line that caused them."""
    settings = settings_from_args(args, protocol)
    try:
        return resolve_config(settings)
    except ConfigError as exc:
        if exc.source is None and exc.field is not None:
            flag = next((f for f, k in RUN_FLAGS.items() if k == exc.field), None)
            if flag is not None and getattr(args, flag.replace("-", "_"), None) is not None:
                exc.field = f"--{flag}"
            elif getattr(args, "config", None):
                section, _, key = exc.field.partition(".")
                line = _key_lines(Path(args.config).read_text()).get((section, key))
                if line is not None:
                    exc.source, exc.line = args.config, line
        raise


def settings_from_args(args: argparse.Namespace, protocol: str | None) -> dict[str, Any]:
    """File settings overlaid by command-line flags."""
    settings = read_config(args.config) if getattr(args, "config", None) else {}
    if protocol is not None:
        settings["run.protocol"] = protocol
    for flag, key in RUN_FLAGS.items():
        if args.command == "measure" and flag == "output":
            continue
        raw = getattr(args, flag.replace("-", "_"), None)
        if raw is None:
            continue
        section, name = key.split(".")
        try:
            settings[key] = SCHEMA[section][name](raw)
        except ValueError as exc:
            raise ConfigError(str(exc), f"--{flag}") from exc
    if getattr(args, "ideal_blockade", None):
        settings["physical.ideal_blockade"] = True
    if getattr(args, "trajectories", None) is False:
        settings["output.trajectories"] = False
    return settings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydpulse",
        description="Simulate, calibrate and measure Rydberg-mediated nuclear-spin entangling protocols.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run any protocol")
    p.add_argument("protocol", nargs="?", choices=PROTOCOLS, help="protocol (or [run] protocol in --config)")
    _add_run_flags(p)
    for name, text in (("gate3", "three-pulse controlled-phase gate"), ("gate2", "two-pulse Stark-assisted gate"),
                       ("sbs", "two-atom Bell-pair preparation")):
        _add_run_flags(sub.add_parser(name, help=text))
    p = sub.add_parser("triangle", help="three-atom W/GHZ preparation")
    p.add_argument("--fast", action="store_true", help="use the fast parameter set")
    _add_run_flags(p)

    p = sub.add_parser("calibrate", help="recover pulse parameters")
    p.add_argument("--objective", action="append", choices=OBJECTIVE_ORDER,
                   help="objective to run (repeatable; default all)")
    p.add_argument("--perturb", type=float, help="start every search at default * (1 + PERTURB)")
    p.add_argument("--box-rel", type=float, default=0.3, help="relative half-width of the box around a perturbed start")
    p.add_argument("--restarts", type=int, help="box points tried after the first start")
    p.add_argument("--no-verify", dest="verify", action="store_false", help="skip the verification runs")
    p.add_argument("--output", help="output JSON file (default: stdout)")

    p = sub.add_parser("measure", help="outcome tree of a measurement plan")
    p.add_argument("--state", choices=("sbs", "triangle", "triangle_fast"), default="sbs")
    p.add_argument("--source", choices=("ideal", "simulated"), default="ideal",
                   help="ideal target state or the simulated final state")
    p.add_argument("--plan", help="comma list of atom:K or collective steps (default: every atom in order)")
    p.add_argument("--output", help="output JSON file (default: stdout)")
    _add_run_flags(p, skip=("output", "sweep", "n-v-samples"))

    p = sub.add_parser("compare", help="compare a report with a reference or another report")
    p.add_argument("report")
    p.add_argument("reference", help="reference JSON path or the name of a shipped reference")
    p.add_argument("--tol", type=float, help="replace every tolerance by this value")
    p.add_argument("--output", help="also write the diff JSON here")
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args: argparse.Namespace) -> int:
    protocol = args.protocol if args.command == "run" else args.command
    if args.command == "triangle" and args.fast:
        protocol = "triangle_fast"
    cfg = config_from_args(args, protocol)
    doc = run_protocol(cfg)
    summary = {
        "protocol": cfg.protocol,
        "output": str(Path(cfg.output)),
        "fidelity": doc["error_budget"]["fidelity"],
        "epsilon": cfg.epsilon,
    }
    sys.stdout.write(dumps(summary))
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    try:
        doc = calibration_document(args.objective, args.perturb, args.box_rel, args.restarts, args.verify)
    except CalibrationError as exc:
        sys.stderr.write(f"calibration did not converge: {exc}\n")
        sys.stderr.write(dumps({"best": exc.best.to_dict()}))
        return EXIT_NUMERICAL
    _emit(dumps(doc), args.output)
    return EXIT_OK


def _cmd_measure(args: argparse.Namespace) -> int:
    cfg = None
    if args.source == "simulated":
        cfg = config_from_args(args, args.state)
    n_atoms = 2 if args.state == "sbs" else 3
    plan = parse_plan(args.plan) if args.plan else [f"atom:{k}" for k in range(n_atoms)]
    for step in plan:
        if step.startswith("atom:") and int(step[5:]) >= n_atoms:
            raise ConfigError(f"atom index out of range for {n_atoms} atoms", "--plan")
    state = measurement_state(cfg, args.state, args.source)
    doc = {"schema": "rydpulse-outcomes/1", "state": args.state, "source": args.source, "plan": plan,
           "tree": outcome_tree(state, plan)}
    _emit(dumps(doc), args.output)
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    ref = args.reference
    if not Path(ref).exists() and re.fullmatch(r"[A-Za-z0-9_]+", ref):
        ref = reference_path(ref)
    result = compare_documents(load_json(args.report), load_json(ref), args.tol)
    text = dumps(result)
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text)
    return EXIT_OK if result["status"] == "pass" else EXIT_FAIL


COMMANDS = {
    "run": _cmd_run,
    "gate3": _cmd_run,
    "gate2": _cmd_run,
    "sbs": _cmd_run,
    "triangle": _cmd_run,
    "calibrate": _cmd_calibrate,
    "measure": _cmd_measure,
    "compare": _cmd_compare,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``rydpulse`` command; returns the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        sys.stderr.write(f"rydpulse: invalid configuration: {exc}\n")
        return EXIT_USAGE
    except (SchemaError, FileNotFoundError) as exc:
        sys.stderr.write(f"rydpulse: {exc}\n")
        return EXIT_USAGE
    except NumericalError as exc:
        sys.stderr.write(f"rydpulse: numerical failure: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
