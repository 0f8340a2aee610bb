"""MATPOWER case files reduced to what the DC measurement model needs."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import CaseParseError, CaseValidationError

BUS_TYPES = {1: "pq", 2: "pv", 3: "reference"}
_TYPE_CODES = {name: code for code, name in BUS_TYPES.items()}

# zero-based MATPOWER column indices
_BUS_ID, _BUS_TYPE, _BUS_PD = 0, 1, 2
_GEN_BUS, _GEN_PG, _GEN_STATUS = 0, 1, 7
_BR_FROM, _BR_TO, _BR_X, _BR_STATUS = 0, 1, 3, 10

_MATRICES = ("bus", "branch", "gen")
_ASSIGN = re.compile(r"^\s*(?:mpc\.)?([A-Za-z_]\w*)\s*=\s*(.*)$")


@dataclass(frozen=True)
class BusRecord:
    id: int
    type: str
    p_injection: float  # MW, generation minus load


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    reactance_x: float
    in_service: bool = True


@dataclass(frozen=True)
class GridCase:
    base_mva: float
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]
    reference_bus: int
    name: str = ""

    @property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def live_branches(self) -> tuple[BranchRecord, ...]:
        return tuple(br for br in self.branches if br.in_service)


def sensor_count(case: GridCase) -> int:
    """Flow meters at both ends of every live branch plus one injection meter per bus."""
    return 2 * len(case.live_branches) + len(case.buses)


def state_count(case: GridCase) -> int:
    return len(case.buses) - 1


def _strip_comment(line: str) -> str:
    # MATPOWER strings never contain '%' in the fields we read
    cut = line.find("%")
    return line if cut < 0 else line[:cut]


def _parse_rows(chunks, name):
    rows = []
    for lineno, text in chunks:
        for piece in text.split(";"):
            piece = piece.strip().strip(",")
            if not piece:
                continue
            try:
                rows.append(([float(tok) for tok in re.split(r"[\s,]+", piece)], lineno))
            except ValueError as exc:
                raise CaseParseError(f"malformed numeric field in {name}: {exc}", lineno) from None
    if rows:
        width = len(rows[0][0])
        for values, lineno in rows:
            if len(values) != width:
                raise CaseParseError(
                    f"{name} row has {len(values)} columns, expected {width}", lineno
                )
    return rows


def _scan(text: str):
    base_mva = None
    blocks: dict[str, list] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = _strip_comment(lines[i])
        i += 1
        m = _ASSIGN.match(line)
        if not m:
            continue
        key, rhs = m.group(1), m.group(2).strip()
        if rhs.startswith("[") or rhs.startswith("{"):
            close = "]" if rhs[0] == "[" else "}"
            body = rhs[1:]
            chunks = []
            while close not in body:
                chunks.append((lineno, body))
                if i >= len(lines):
                    raise CaseParseError(f"unterminated matrix '{key}'", lineno)
                lineno = i + 1
                body = _strip_comment(lines[i])
                i += 1
            chunks.append((lineno, body[: body.index(close)]))
            if key in _MATRICES and close == "]":
                blocks[key] = _parse_rows(chunks, key)
        elif key == "baseMVA":
            try:
                base_mva = float(rhs.rstrip(";").strip())
            except ValueError:
                raise CaseParseError(f"malformed baseMVA value {rhs!r}", lineno) from None
    return base_mva, blocks


def parse_case(text: str, name: str = "") -> GridCase:
    """Parse MATPOWER case text into a validated :class:`GridCase`.

    Only ``baseMVA``, ``bus`` (id/type/Pd), ``gen`` (bus/Pg/status, optional)
    and ``branch`` (from/to/x/status) are read; other columns and matrices are
    ignored. Row order is preserved.
    """
    base_mva, blocks = _scan(text)
    if base_mva is None:
        raise CaseParseError("missing baseMVA")
    for key in ("bus", "branch"):
        if key not in blocks:
            raise CaseParseError(f"missing '{key}' matrix")

    buses_raw = blocks["bus"]
    if buses_raw and len(buses_raw[0][0]) < 3:
        raise CaseParseError("bus matrix needs at least id, type and Pd columns", buses_raw[0][1])
    gen_p: dict[int, float] = {}
    for values, lineno in blocks.get("gen", []):
        if len(values) < 2:
            raise CaseParseError("gen matrix needs at least bus and Pg columns", lineno)
        status = values[_GEN_STATUS] if len(values) > _GEN_STATUS else 1.0
        if status > 0:
            bus = int(values[_GEN_BUS])
            gen_p[bus] = gen_p.get(bus, 0.0) + values[_GEN_PG]

    buses = []
    for values, lineno in buses_raw:
        code = int(values[_BUS_TYPE])
        if code not in BUS_TYPES:
            raise CaseValidationError(f"line {lineno}: unsupported bus type {code}")
        bus_id = int(values[_BUS_ID])
        buses.append(BusRecord(bus_id, BUS_TYPES[code], gen_p.get(bus_id, 0.0) - values[_BUS_PD]))

    branches = []
    for values, lineno in blocks["branch"]:
        if len(values) < 4:
            raise CaseParseError("branch matrix needs at least from, to, r, x columns", lineno)
        status = values[_BR_STATUS] if len(values) > _BR_STATUS else 1.0
        branches.append(
            BranchRecord(int(values[_BR_FROM]), int(values[_BR_TO]), values[_BR_X], status > 0)
        )

    refs = [b.id for b in buses if b.type == "reference"]
    case = GridCase(base_mva, tuple(buses), tuple(branches), refs[0] if len(refs) == 1 else -1, name)
    validate(case)
    return case


def validate(case: GridCase) -> None:
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise CaseValidationError("bus ids are not unique")
    refs = [b.id for b in case.buses if b.type == "reference"]
    if len(refs) != 1:
        raise CaseValidationError(f"expected exactly one reference bus, found {len(refs)}")
    if case.reference_bus != refs[0]:
        raise CaseValidationError("reference_bus does not match the bus table")
    known = set(ids)
    for k, br in enumerate(case.branches):
        if br.from_bus not in known or br.to_bus not in known:
            raise CaseValidationError(f"branch {k + 1} names an unknown bus")
        if br.reactance_x == 0:
            raise CaseValidationError(f"branch {k + 1} ({br.from_bus}-{br.to_bus}) has zero reactance")
    if not _connected(case):
        raise CaseValidationError("in-service branches do not connect every bus")


def _connected(case: GridCase) -> bool:
    adj: dict[int, list[int]] = {b.id: [] for b in case.buses}
    for br in case.live_branches:
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    seen = {case.reference_bus}
    queue = deque(seen)
    while queue:
        for nxt in adj[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(adj)


def render_case(case: GridCase) -> str:
    """Canonical MATPOWER text for ``case``; ``parse_case`` inverts it exactly."""
    out = [
        f"function mpc = {case.name or 'case'}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {case.base_mva!r};",
        "%\tbus_i\ttype\tPd",
        "mpc.bus = [",
    ]
    for b in case.buses:
        out.append(f"\t{b.id}\t{_TYPE_CODES[b.type]}\t{-b.p_injection + 0.0!r};")
    out += ["];", "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus", "mpc.branch = ["]
    for br in case.branches:
        out.append(
            f"\t{br.from_bus}\t{br.to_bus}\t0\t{br.reactance_x!r}\t0\t0\t0\t0\t0\t0\t{int(br.in_service)};"
        )
    out.append("];")
    return "\n".join(out) + "\n"


def fixture_names() -> list[str]:
    root = resources.files("blindfdi") / "fixtures"
    return sorted(p.name[:-2] for p in root.iterdir() if p.name.endswith(".m"))


def load_case(source: str | Path) -> GridCase:
    """Load a case from a file path or a bundled fixture name (``case14``, ``fixtures/case57``)."""
    path = Path(source)
    for candidate in (path, path.with_suffix(".m")):
        if candidate.is_file():
            return parse_case(candidate.read_text(), name=candidate.stem)
    stem = path.stem if path.suffix == ".m" else path.name
    bundled = resources.files("blindfdi") / "fixtures" / f"{stem}.m"
    if bundled.is_file():
        return parse_case(bundled.read_text(), name=stem)
    raise FileNotFoundError(f"no case file or bundled fixture named {str(source)!r}")
