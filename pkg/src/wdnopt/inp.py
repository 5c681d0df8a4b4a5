"""Reader and writer for the EPANET-INP subset used by the toolkit.

Supported sections: [TITLE], [JUNCTIONS], [RESERVOIRS], [PIPES], [VALVES],
[PATTERNS], [TIMES], [OPTIONS]. Sections that only carry display or
water-quality data are ignored silently; any other section is skipped with a
warning. Tanks and pumps are rejected.
"""

from __future__ import annotations

import re
import warnings
from pathlib import Path

from .errors import ParseError, ValidationError
from .network import (
    DEFAULT_U_MAX,
    DEFAULT_U_MIN,
    Link,
    Node,
    Source,
    Times,
    assemble_network,
)

# flow unit -> factor to m^3/s
FLOW_UNITS = {
    "LPS": 1e-3,
    "LPM": 1e-3 / 60.0,
    "MLD": 1e3 / 86400.0,
    "CMH": 1.0 / 3600.0,
    "CMD": 1.0 / 86400.0,
}
US_UNITS = {"CFS", "GPM", "MGD", "IMGD", "AFD"}
DEFAULT_VALVE_K = 0.2

_SILENT = {
    "COORDINATES", "VERTICES", "LABELS", "BACKDROP", "TAGS", "REPORT", "QUALITY",
    "REACTIONS", "SOURCES", "MIXING", "ENERGY", "STATUS", "CONTROLS", "RULES",
    "DEMANDS", "EMITTERS", "CURVES", "END",
}
_UNSUPPORTED = {"TANKS", "PUMPS"}
_SECTION = re.compile(r"^\[([A-Za-z_]+)\]$")


def _clock_to_seconds(value, unit=None):
    value = value.strip()
    if ":" in value:
        parts = [float(p) for p in value.split(":")]
        while len(parts) < 3:
            parts.append(0.0)
        return parts[0] * 3600 + parts[1] * 60 + parts[2]
    x = float(value)
    unit = (unit or "HOURS").upper()
    if unit.startswith("SEC"):
        return x
    if unit.startswith("MIN"):
        return x * 60
    if unit.startswith("DAY"):
        return x * 86400
    return x * 3600


def _num(token, line, what):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected a number for {what}, got {token!r}", line) from None


def parse_sections(text):
    """Split an INP document into ``{section: [(line_no, tokens), ...]}``."""
    sections = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1).upper()
            sections.setdefault(current, [])
            continue
        if line.startswith("["):
            raise ParseError(f"malformed section header {line!r}", no)
        if current is None:
            raise ParseError("data before the first section header", no)
        sections[current].append((no, line.split()))
    return sections


def parse_network(text, u_max=DEFAULT_U_MAX, u_min=DEFAULT_U_MIN):
    """Parse an INP document into a validated :class:`NetworkModel`.

    Link direction follows the from -> to order in the file. Valves become
    local-loss links using their minor-loss coefficient.
    """
    sections = parse_sections(text)
    for name in sections:
        if name in _UNSUPPORTED and sections[name]:
            raise ValidationError(f"[{name}] is not supported (tanks and pumps are out of scope)", name)
        known = {"TITLE", "JUNCTIONS", "RESERVOIRS", "PIPES", "VALVES", "PATTERNS", "TIMES", "OPTIONS"}
        if name not in known and name not in _SILENT and name not in _UNSUPPORTED:
            warnings.warn(f"skipping unknown INP section [{name}]", stacklevel=2)

    options = {}
    for no, tok in sections.get("OPTIONS", []):
        if len(tok) >= 2:
            options[tok[0].upper()] = tok[1:]
    units = options.get("UNITS", ["LPS"])[0].upper()
    if units in US_UNITS:
        raise ValidationError(f"US flow units {units} are not supported; use SI (LPS, CMH, ...)", units)
    if units not in FLOW_UNITS:
        raise ParseError(f"unknown flow units {units!r}")
    headloss = options.get("HEADLOSS", ["H-W"])[0].upper()
    if headloss != "H-W":
        raise ValidationError(f"head-loss formula {headloss} is not supported (Hazen-Williams only)", headloss)
    fscale = FLOW_UNITS[units]
    default_pattern = options.get("PATTERN", [None])[0]
    demand_mult = float(options["DEMAND"][-1]) if "DEMAND" in options and len(options["DEMAND"]) >= 2 else 1.0

    patterns = {}
    for no, tok in sections.get("PATTERNS", []):
        patterns.setdefault(tok[0], []).extend(_num(t, no, f"pattern {tok[0]}") for t in tok[1:])
    if default_pattern is None and "1" in patterns:
        default_pattern = "1"

    junctions = []
    for no, tok in sections.get("JUNCTIONS", []):
        if len(tok) < 2:
            raise ParseError("junction needs at least id and elevation", no, "JUNCTIONS")
        demand = _num(tok[2], no, "demand") if len(tok) > 2 else 0.0
        pattern = tok[3] if len(tok) > 3 else default_pattern
        if pattern is not None and pattern not in patterns:
            raise ValidationError(f"junction {tok[0]!r} references unknown pattern {pattern!r}", pattern)
        if demand < 0:
            raise ValidationError(f"junction {tok[0]!r} has a negative base demand", tok[0])
        junctions.append(Node(tok[0], _num(tok[1], no, "elevation"), demand * fscale * demand_mult, pattern))

    reservoirs = []
    for no, tok in sections.get("RESERVOIRS", []):
        if len(tok) < 2:
            raise ParseError("reservoir needs id and head", no, "RESERVOIRS")
        pattern = tok[2] if len(tok) > 2 else None
        if pattern is not None and pattern not in patterns:
            raise ValidationError(f"reservoir {tok[0]!r} references unknown pattern {pattern!r}", pattern)
        reservoirs.append(Source(tok[0], _num(tok[1], no, "head"), pattern))

    links = []
    for no, tok in sections.get("PIPES", []):
        if len(tok) < 6:
            raise ParseError("pipe needs id, node1, node2, length, diameter, roughness", no, "PIPES")
        status = tok[7].upper() if len(tok) > 7 else "OPEN"
        if status == "CLOSED":
            continue
        links.append(
            Link(
                tok[0], tok[1], tok[2],
                length=_num(tok[3], no, "length"),
                diameter=_num(tok[4], no, "diameter") / 1000.0,
                hw_coeff=_num(tok[5], no, "roughness"),
            )
        )
    for no, tok in sections.get("VALVES", []):
        if len(tok) < 4:
            raise ParseError("valve needs id, node1, node2, diameter", no, "VALVES")
        k = _num(tok[6], no, "minor loss") if len(tok) > 6 else 0.0
        if k <= 0:
            k = DEFAULT_VALVE_K
        diameter = _num(tok[3], no, "diameter") / 1000.0
        # a valve's length only enters the SCC/AZP weights; use a nominal 1 m
        links.append(Link(tok[0], tok[1], tok[2], length=1.0, diameter=diameter, kind="valve", loss_coeff=k))

    times_opts = {}
    for no, tok in sections.get("TIMES", []):
        key = " ".join(t.upper() for t in tok[:-1]) if len(tok) > 1 else tok[0].upper()
        times_opts[key] = (tok, no)

    def _time(prefix, default):
        for key, (tok, no) in times_opts.items():
            if key.startswith(prefix):
                words = len(prefix.split())
                rest = tok[words:]
                if not rest:
                    raise ParseError(f"missing value for {prefix}", no, "TIMES")
                unit = rest[1] if len(rest) > 1 else None
                try:
                    return _clock_to_seconds(rest[0], unit)
                except ValueError:
                    raise ParseError(f"bad time value {rest[0]!r}", no, "TIMES") from None
        return default

    times = Times(
        duration_s=_time("DURATION", 0.0),
        hydraulic_step_s=_time("HYDRAULIC TIMESTEP", 3600.0),
        pattern_step_s=_time("PATTERN TIMESTEP", 3600.0),
    )
    title = " ".join(" ".join(t) for _, t in sections.get("TITLE", []))
    return assemble_network(junctions, reservoirs, links, patterns, times, title, u_max=u_max, u_min=u_min)


def read_network(path, **kwargs):
    """Parse the INP file at ``path``."""
    return parse_network(Path(path).read_text(encoding="utf-8", errors="replace"), **kwargs)


def format_network(model, units="LPS"):
    """Serialize a model back to the INP subset (round-trips through :func:`parse_network`)."""
    f = FLOW_UNITS[units]
    out = ["[TITLE]", model.title or "wdnopt network", "", "[JUNCTIONS]"]
    for n in model.nodes:
        pat = n.pattern or ""
        out.append(f"{n.id}\t{n.elevation:.6g}\t{n.base_demand / f:.10g}\t{pat}")
    out += ["", "[RESERVOIRS]"]
    for s in model.sources:
        out.append(f"{s.id}\t{s.head:.10g}\t{s.pattern or ''}")
    out += ["", "[PIPES]"]
    for l in model.links:
        if l.kind == "pipe":
            out.append(f"{l.id}\t{l.from_node}\t{l.to_node}\t{l.length:.10g}\t{l.diameter * 1000:.10g}\t{l.hw_coeff:.10g}\t0\tOpen")
    valves = [l for l in model.links if l.kind == "valve"]
    if valves:
        out += ["", "[VALVES]"]
        for l in valves:
            out.append(f"{l.id}\t{l.from_node}\t{l.to_node}\t{l.diameter * 1000:.10g}\tTCV\t0\t{l.loss_coeff:.10g}")
    if model.patterns:
        out += ["", "[PATTERNS]"]
        for pid, vals in model.patterns.items():
            vals = list(vals)
            for k in range(0, len(vals), 6):
                out.append(f"{pid}\t" + "\t".join(f"{v:.10g}" for v in vals[k : k + 6]))
    t = model.times

    def clock(s):
        h, rem = divmod(int(round(s)), 3600)
        return f"{h}:{rem // 60:02d}"

    out += [
        "", "[TIMES]",
        f"Duration\t{clock(t.duration_s)}",
        f"Hydraulic Timestep\t{clock(t.hydraulic_step_s)}",
        f"Pattern Timestep\t{clock(t.pattern_step_s)}",
        "", "[OPTIONS]", f"Units\t{units}", "Headloss\tH-W", "", "[END]", "",
    ]
    return "\n".join(out)
