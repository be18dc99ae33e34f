"""MATPOWER case parsing and the canonical JSON instance/solution files.

All quantities held by :class:`PowerNetwork` and :class:`UcInstance` are in
per-unit on the system base, except cost coefficients, which stay in the
$/MW units they were drawn in.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Any

import numpy as np

INSTANCE_VERSION = "acuc-instance/1"
SOLUTION_VERSION = "acuc-solution/1"

BUNDLED_CASES = ("case9", "case14", "case57", "case118", "case300")


class CaseParseError(ValueError):
    """Raised for malformed MATPOWER text."""


class ValidationError(ValueError):
    """Raised when parsed or loaded data breaks a structural invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    shunt: complex
    v_min: float
    v_max: float
    demand: complex


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    tap: float = 1.0
    shift: float = 0.0
    f_max: float = 0.0
    unlimited: bool = True


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float


@dataclass
class PowerNetwork:
    base_power: float
    buses: list[Bus]
    branches: list[Branch]
    generators: list[Generator]
    name: str = ""

    def __post_init__(self) -> None:
        self._index = {bus.id: k for k, bus in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def bus_index(self, bus_id: int) -> int:
        return self._index[bus_id]

    def validate(self) -> None:
        if len(self._index) != len(self.buses):
            raise ValidationError("duplicate bus ids")
        for k, br in enumerate(self.branches):
            for end in (br.from_bus, br.to_bus):
                if end not in self._index:
                    raise ValidationError(f"branch {k} references unknown bus {end}")
            if not br.tap > 0:
                raise ValidationError(f"branch {k} has non-positive tap {br.tap}")
        for k, bus in enumerate(self.buses):
            if bus.v_min > bus.v_max:
                raise ValidationError(f"bus {bus.id} has v_min > v_max")
        for k, gen in enumerate(self.generators):
            if gen.bus not in self._index:
                raise ValidationError(f"generator {k} references unknown bus {gen.bus}")
            if gen.p_min > gen.p_max or gen.q_min > gen.q_max:
                raise ValidationError(f"generator {k} has inverted limits")

    # vectorized views used by the matrix builders
    def gen_bus_index(self) -> np.ndarray:
        return np.array([self._index[g.bus] for g in self.generators], dtype=int)

    def branch_ends(self) -> tuple[np.ndarray, np.ndarray]:
        f = np.array([self._index[b.from_bus] for b in self.branches], dtype=int)
        t = np.array([self._index[b.to_bus] for b in self.branches], dtype=int)
        return f, t

    def base_demand(self) -> np.ndarray:
        return np.array([b.demand for b in self.buses], dtype=complex)


@dataclass(frozen=True)
class UcEconomics:
    alpha: float
    beta: float
    gamma: float
    gamma_up: float
    gamma_down: float
    ramp: float
    startup_ramp: float
    min_up: int
    min_down: int


@dataclass(frozen=True)
class InitialState:
    x0: int
    p0: float
    t0: int


@dataclass
class UcInstance:
    network: PowerNetwork
    horizon: int
    demand: np.ndarray  # |V| x T complex
    economics: list[UcEconomics]
    initial: list[InitialState] | None
    seed: int = 0
    name: str = ""

    def validate(self) -> None:
        self.network.validate()
        if self.horizon < 1:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if self.demand.shape != (self.network.n_bus, self.horizon):
            raise ValidationError(
                f"demand shape {self.demand.shape} does not match "
                f"({self.network.n_bus}, {self.horizon})"
            )
        if len(self.economics) != self.network.n_gen:
            raise ValidationError("economics length does not match generator count")
        if self.initial is not None and len(self.initial) != self.network.n_gen:
            raise ValidationError("initial state length does not match generator count")
        for k, e in enumerate(self.economics):
            if e.min_up < 1 or e.min_down < 1:
                raise ValidationError(f"generator {k}: minimum up/down times must be >= 1")
            if e.ramp < 0 or e.startup_ramp < 0:
                raise ValidationError(f"generator {k}: negative ramp limit")
            if min(e.alpha, e.beta, e.gamma, e.gamma_up, e.gamma_down) < 0:
                raise ValidationError(f"generator {k}: negative cost coefficient")

    def econ_array(self, attr: str) -> np.ndarray:
        return np.array([getattr(e, attr) for e in self.economics], dtype=float)


# ---------------------------------------------------------------------------
# MATPOWER parsing

_BUS_COLS, _GEN_COLS, _BRANCH_COLS = 13, 10, 11
_SECTION = re.compile(r"mpc\.(\w+)\s*=\s*\[", re.MULTILINE)
_BASE = re.compile(r"mpc\.baseMVA\s*=\s*([-+0-9.eE]+)")


def _matrix_rows(text: str, start: int, name: str) -> list[tuple[int, list[float]]]:
    """Rows of the bracketed matrix that opens at ``start``, with 1-based line numbers."""
    end = text.find("]", start)
    if end < 0:
        raise CaseParseError(f"unterminated matrix for mpc.{name}")
    line0 = text.count("\n", 0, start) + 1
    rows = []
    for offset, line in enumerate(text[start:end].split("\n")):
        line = line.split("%", 1)[0]
        for chunk in line.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                vals = [float(tok) for tok in chunk.replace(",", " ").split()]
            except ValueError as exc:
                raise CaseParseError(f"line {line0 + offset}: bad number in mpc.{name}: {exc}")
            rows.append((line0 + offset, vals))
    return rows


def _check_width(rows, width: int, name: str) -> None:
    for lineno, vals in rows:
        if len(vals) < width:
            raise CaseParseError(
                f"line {lineno}: mpc.{name} row has {len(vals)} columns, expected {width}"
            )


def parse_matpower(text: str, name: str = "") -> PowerNetwork:
    """Parse MATPOWER case text into a per-unit :class:`PowerNetwork`.

    Out-of-service generators and branches are skipped, as are generators
    with ``PMAX <= 0``. ``gencost`` is read for well-formedness only.
    """
    m = _BASE.search(text)
    if m is None:
        raise CaseParseError("missing mpc.baseMVA")
    base = float(m.group(1))
    sections = {}
    for sm in _SECTION.finditer(text):
        sections[sm.group(1)] = _matrix_rows(text, sm.end(), sm.group(1))
    for req in ("bus", "gen", "branch"):
        if req not in sections:
            raise CaseParseError(f"missing mpc.{req}")
    _check_width(sections["bus"], _BUS_COLS, "bus")
    _check_width(sections["gen"], _GEN_COLS, "gen")
    _check_width(sections["branch"], _BRANCH_COLS, "branch")

    buses = [
        Bus(
            id=int(r[0]),
            shunt=complex(r[4] / base, r[5] / base),
            v_min=r[12],
            v_max=r[11],
            demand=complex(r[2] / base, r[3] / base),
        )
        for _, r in sections["bus"]
    ]
    gens = [
        Generator(bus=int(r[0]), p_min=r[9] / base, p_max=r[8] / base,
                  q_min=r[4] / base, q_max=r[3] / base)
        for _, r in sections["gen"]
        if r[7] > 0 and r[8] > 0
    ]
    branches = []
    for _, r in sections["branch"]:
        if r[10] <= 0:
            continue
        branches.append(
            Branch(
                from_bus=int(r[0]), to_bus=int(r[1]), r=r[2], x=r[3], b=r[4],
                tap=r[8] if r[8] != 0 else 1.0,
                shift=math.radians(r[9]),
                f_max=r[5] / base,
                unlimited=r[5] == 0,
            )
        )
    net = PowerNetwork(base_power=base, buses=buses, branches=branches,
                       generators=gens, name=name)
    net.validate()
    return net


def load_case(path_or_name: str | Path) -> PowerNetwork:
    """Load a MATPOWER file by path, or a bundled case by name (e.g. ``"case57"``)."""
    p = Path(path_or_name)
    if p.exists():
        return parse_matpower(p.read_text(), name=p.stem)
    name = str(path_or_name).removesuffix(".m")
    if name not in BUNDLED_CASES:
        raise FileNotFoundError(path_or_name)
    text = resources.files("acuc.data").joinpath(f"{name}.m").read_text()
    return parse_matpower(text, name=name)


# ---------------------------------------------------------------------------
# JSON instance format

def _cpair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def _cval(pair) -> complex:
    return complex(float(pair[0]), float(pair[1]))


def instance_to_dict(inst: UcInstance) -> dict[str, Any]:
    net = inst.network
    return {
        "version": INSTANCE_VERSION,
        "name": inst.name or net.name,
        "base_mva": net.base_power,
        "buses": [
            {"id": b.id, "shunt": _cpair(b.shunt), "v_min": b.v_min,
             "v_max": b.v_max, "demand": _cpair(b.demand)}
            for b in net.buses
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x, "b": br.b,
             "tap": br.tap, "shift": br.shift, "f_max": br.f_max,
             "unlimited": br.unlimited}
            for br in net.branches
        ],
        "generators": [
            {"bus": g.bus, "p_min": g.p_min, "p_max": g.p_max,
             "q_min": g.q_min, "q_max": g.q_max}
            for g in net.generators
        ],
        "horizon": inst.horizon,
        "demand": [[_cpair(z) for z in row] for row in inst.demand],
        "economics": [
            {"alpha": e.alpha, "beta": e.beta, "gamma": e.gamma,
             "gamma_up": e.gamma_up, "gamma_down": e.gamma_down,
             "ramp": e.ramp, "startup_ramp": e.startup_ramp,
             "min_up": e.min_up, "min_down": e.min_down}
            for e in inst.economics
        ],
        "initial": None if inst.initial is None else [
            {"x0": s.x0, "p0": s.p0, "t0": s.t0} for s in inst.initial
        ],
        "seed": inst.seed,
    }


_REQUIRED = ("version", "base_mva", "buses", "branches", "generators",
             "horizon", "demand", "economics", "initial", "seed")


def instance_from_dict(d: dict[str, Any]) -> UcInstance:
    missing = [k for k in _REQUIRED if k not in d]
    if missing:
        raise ValidationError(f"instance file missing fields: {', '.join(missing)}")
    if d["version"] != INSTANCE_VERSION:
        raise ValidationError(f"unsupported instance version {d['version']!r}")
    try:
        net = PowerNetwork(
            base_power=float(d["base_mva"]),
            buses=[Bus(id=int(b["id"]), shunt=_cval(b["shunt"]), v_min=float(b["v_min"]),
                       v_max=float(b["v_max"]), demand=_cval(b["demand"]))
                   for b in d["buses"]],
            branches=[Branch(from_bus=int(b["from"]), to_bus=int(b["to"]), r=float(b["r"]),
                             x=float(b["x"]), b=float(b["b"]), tap=float(b["tap"]),
                             shift=float(b["shift"]), f_max=float(b["f_max"]),
                             unlimited=bool(b["unlimited"]))
                      for b in d["branches"]],
            generators=[Generator(bus=int(g["bus"]), p_min=float(g["p_min"]),
                                  p_max=float(g["p_max"]), q_min=float(g["q_min"]),
                                  q_max=float(g["q_max"]))
                        for g in d["generators"]],
            name=d.get("name", ""),
        )
        horizon = int(d["horizon"])
        rows = d["demand"]
        demand = np.array([[_cval(z) for z in row] for row in rows], dtype=complex)
        if demand.size == 0:
            demand = demand.reshape(len(rows), 0)
        econ = [UcEconomics(**{k: (int(v) if k in ("min_up", "min_down") else float(v))
                               for k, v in e.items()}) for e in d["economics"]]
        initial = None if d["initial"] is None else [
            InitialState(x0=int(s["x0"]), p0=float(s["p0"]), t0=int(s["t0"]))
            for s in d["initial"]
        ]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed instance file: {exc!r}") from exc
    inst = UcInstance(network=net, horizon=horizon, demand=demand, economics=econ,
                      initial=initial, seed=int(d["seed"]), name=d.get("name", ""))
    inst.validate()
    return inst


def _dump(obj: Any, sink: IO[str] | str | Path) -> None:
    text = json.dumps(obj, indent=1, sort_keys=False) + "\n"
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)


def _load(source: IO[str] | str | Path) -> Any:
    if isinstance(source, (str, Path)):
        return json.loads(Path(source).read_text())
    return json.load(source)


def write_instance(inst: UcInstance, sink: IO[str] | str | Path) -> None:
    _dump(instance_to_dict(inst), sink)


def read_instance(source: IO[str] | str | Path) -> UcInstance:
    return instance_from_dict(_load(source))


# ---------------------------------------------------------------------------
# Candidate schedules

@dataclass
class Schedule:
    """A candidate operating point: voltages, commitments and dispatch over the horizon."""

    v: np.ndarray  # |V| x T complex
    x: np.ndarray  # |G| x T
    p: np.ndarray
    q: np.ndarray
    c: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)


def write_solution(sched: Schedule, sink: IO[str] | str | Path) -> None:
    d = {
        "version": SOLUTION_VERSION,
        "v": [[_cpair(z) for z in row] for row in sched.v],
        "x": sched.x.tolist(),
        "p": sched.p.tolist(),
        "q": sched.q.tolist(),
        "c": None if sched.c is None else sched.c.tolist(),
        "meta": sched.meta,
    }
    _dump(d, sink)


def read_solution(source: IO[str] | str | Path) -> Schedule:
    d = _load(source)
    if d.get("version") != SOLUTION_VERSION:
        raise ValidationError(f"unsupported solution version {d.get('version')!r}")
    for key in ("v", "x", "p", "q"):
        if key not in d:
            raise ValidationError(f"solution file missing field {key!r}")
    v = np.array([[_cval(z) for z in row] for row in d["v"]], dtype=complex)
    return Schedule(
        v=v,
        x=np.array(d["x"], dtype=float),
        p=np.array(d["p"], dtype=float),
        q=np.array(d["q"], dtype=float),
        c=None if d.get("c") is None else np.array(d["c"], dtype=float),
        meta=d.get("meta", {}),
    )
