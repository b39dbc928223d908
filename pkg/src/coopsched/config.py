"""Text format for :class:`~coopsched.harness.ScenarioConfig`.

Grammar, one statement per line, ``#`` starts a comment::

    key = value              # top-level scenario or team-wide sensor key
    [robot 3]                # following keys apply to robot 3 only
    q = 2
    sigma_rho = 0.2
    [windows]                # rows "interval = observer ids"
    [0,10] = none
    (10,20] = 3 5 7 9

Omitted keys keep their defaults. Without a ``[windows]`` section the
default window table applies; an empty ``[windows]`` section means no robot
ever measures.
"""

from __future__ import annotations

import dataclasses
import re

from coopsched.belief import SensorParams
from coopsched.harness import ConfigError, ScenarioConfig, Window
from coopsched.scheduling import POLICIES

SCENARIO_KEYS = {
    "n_robots": int, "dt": float, "duration": float, "spacing": float, "speed": float,
    "omega": float, "init_var": float, "q": int, "policy": str, "seed": int, "runs": int,
    "random_period": float, "truth_heading_noise": bool, "track_bound": bool,
}
SENSOR_KEYS = {f.name: float for f in dataclasses.fields(SensorParams)}
ROBOT_KEYS = {"q": int, **SENSOR_KEYS}

_SECTION = re.compile(r"^\[\s*(robot\s+(\S+)|windows)\s*\]$")
_WINDOW = re.compile(r"^([\[(])\s*([^,\s]+)\s*,\s*([^\]\s]+)\s*\]$")


def _error(lineno: int | None, msg: str) -> ConfigError:
    return ConfigError(f"line {lineno}: {msg}" if lineno is not None else msg)


def _convert(kind, raw: str, key: str, lineno: int):
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if kind is int:
            return int(raw, 10)
        if kind is float:
            return float(raw)
    except ValueError:
        raise _error(lineno, f"{key} expects {kind.__name__}, got {raw!r}") from None
    return raw


def _parse_window(lhs: str, rhs: str, lineno: int) -> Window:
    m = _WINDOW.match(lhs)
    if not m:
        raise _error(lineno, f"bad window interval {lhs!r}; expected (a,b] or [a,b]")
    start = _convert(float, m.group(2), "window start", lineno)
    end = _convert(float, m.group(3), "window end", lineno)
    if end < start:
        raise _error(lineno, f"window end {end} before start {start}")
    if rhs.lower() == "none":
        ids = ()
    else:
        ids = tuple(_convert(int, tok, "observer id", lineno) for tok in rhs.replace(",", " ").split())
    return Window(start, end, ids, closed_start=m.group(1) == "[")


def parse_config(text: str) -> ScenarioConfig:
    top: dict[str, object] = {}
    robots: dict[int, dict[str, object]] = {}
    windows: list[tuple[int, Window]] | None = None
    lines: dict[str, int] = {}
    section: int | str | None = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        stmt = line.split("#", 1)[0].strip()
        if not stmt:
            continue
        sec = _SECTION.match(stmt)
        if sec:
            if sec.group(1) == "windows":
                if windows is not None:
                    raise _error(lineno, "duplicate [windows] section")
                windows, section = [], "windows"
            else:
                rid = _convert(int, sec.group(2), "robot id", lineno)
                if rid in robots:
                    raise _error(lineno, f"duplicate [robot {rid}] section")
                robots[rid], section = {}, rid
                lines[f"robot {rid}"] = lineno
            continue
        if "=" not in stmt:
            raise _error(lineno, f"expected 'key = value', got {stmt!r}")
        lhs, rhs = (part.strip() for part in stmt.split("=", 1))
        if section == "windows":
            windows.append((lineno, _parse_window(lhs, rhs, lineno)))
            continue
        table, target = ((SCENARIO_KEYS | SENSOR_KEYS), top) if section is None else (ROBOT_KEYS, robots[section])
        if lhs not in table:
            where = "" if section is None else f" in [robot {section}]"
            raise _error(lineno, f"unknown key {lhs!r}{where}")
        if lhs in target:
            raise _error(lineno, f"duplicate key {lhs!r}")
        target[lhs] = _convert(table[lhs], rhs, lhs, lineno)
        if section is None:
            lines[lhs] = lineno

    if "policy" in top and top["policy"] not in POLICIES:
        raise _error(lines["policy"], f"unknown policy {top['policy']!r}; expected one of {', '.join(POLICIES)}")
    if windows is not None:
        ordered = sorted(windows, key=lambda lw: (lw[1].start, not lw[1].closed_start))
        for (_, prev), (lineno, w) in zip(ordered, ordered[1:]):
            if w.start < prev.end or (w.start == prev.end and w.closed_start):
                raise _error(lineno, f"window starting at {w.start} overlaps the one ending at {prev.end}")

    sensor_fields = {k: top.pop(k) for k in list(top) if k in SENSOR_KEYS}
    try:
        sensor = SensorParams(**sensor_fields)
    except ValueError as exc:
        raise _error(lines[next(iter(sensor_fields))] if sensor_fields else None, str(exc)) from None
    robot_sensors, robot_q = {}, {}
    for rid, fields in robots.items():
        if "q" in fields:
            robot_q[rid] = fields.pop("q")
        if fields:
            try:
                robot_sensors[rid] = dataclasses.replace(sensor, **fields)
            except ValueError as exc:
                raise _error(lines[f"robot {rid}"], str(exc)) from None
    try:
        return ScenarioConfig(**top, sensor=sensor, robot_sensors=robot_sensors, robot_q=robot_q,
                              windows=None if windows is None else tuple(w for _, w in windows))
    except ConfigError as exc:
        hits = [(m.start(), k) for k in lines if (m := re.search(rf"\b{re.escape(k)}\b", str(exc)))]
        raise _error(lines[min(hits)[1]] if hits else None, str(exc)) from None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Text that :func:`parse_config` maps back to an equal config."""
    out = []
    for key in SCENARIO_KEYS:
        out.append(f"{key} = {_fmt(getattr(cfg, key))}")
    for key in SENSOR_KEYS:
        out.append(f"{key} = {_fmt(getattr(cfg.sensor, key))}")
    for rid in sorted(set(cfg.robot_q) | set(cfg.robot_sensors)):
        out.append("")
        out.append(f"[robot {rid}]")
        if rid in cfg.robot_q:
            out.append(f"q = {cfg.robot_q[rid]}")
        if rid in cfg.robot_sensors:
            own = cfg.robot_sensors[rid]
            diff = [k for k in SENSOR_KEYS if getattr(own, k) != getattr(cfg.sensor, k)]
            # at least one key so the section still yields a per-robot entry
            for key in diff or ["sigma_rho"]:
                out.append(f"{key} = {_fmt(getattr(own, key))}")
    out.append("")
    out.append("[windows]")
    for w in cfg.windows:
        ids = " ".join(str(i) for i in w.observers) or "none"
        out.append(f"{'[' if w.closed_start else '('}{_fmt(float(w.start))},{_fmt(float(w.end))}] = {ids}")
    return "\n".join(out) + "\n"
