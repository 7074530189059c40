"""Scenario data model and ingestion.

Everything the operator specifies lives here: the mission area, cylindrical
obstacles, points of interest with prizes and time windows, the UAV
capabilities database, and the swarm configuration rule that picks agents
from it and lays out the formation.

Config objects hold plain tuples so they are immutable, hashable and compare
field-for-field; numerical modules convert to numpy arrays at the point of
use. The file format is YAML; see README for the schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import yaml

Vec3 = tuple[float, float, float]


class ScenarioError(ValueError):
    """Raised when a scenario file is malformed or violates an invariant.

    The message names the offending field path, e.g. ``pois[2].tw_close``.
    """


def _vec3(x, path: str) -> Vec3:
    try:
        vals = tuple(float(v) for v in x)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a 3-vector, got {x!r}") from None
    if len(vals) != 3:
        raise ScenarioError(f"{path}: expected 3 components, got {len(vals)}")
    return vals  # type: ignore[return-value]


def _vec2(x, path: str) -> tuple[float, float]:
    try:
        vals = tuple(float(v) for v in x)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a 2-vector, got {x!r}") from None
    if len(vals) != 2:
        raise ScenarioError(f"{path}: expected 2 components, got {len(vals)}")
    return vals  # type: ignore[return-value]


@dataclass(frozen=True)
class PoiRecord:
    """A point of interest: reward, service time and a visit time window."""

    id: int
    position: Vec3
    prize: float = 0.0
    tw_open: float = 0.0
    tw_close: float = math.inf
    service_time: float = 0.0

    def validate(self, path: str = "poi") -> None:
        if self.prize < 0:
            raise ScenarioError(f"{path}.prize: must be >= 0, got {self.prize}")
        if self.service_time < 0:
            raise ScenarioError(f"{path}.service_time: must be >= 0, got {self.service_time}")
        if self.tw_close < self.tw_open:
            raise ScenarioError(
                f"{path}.tw_close: window closes ({self.tw_close}) before it opens ({self.tw_open})"
            )


@dataclass(frozen=True)
class Obstacle:
    """Vertical cylinder obstacle: base at z=0, given radius and height."""

    center: tuple[float, float]
    radius: float
    height: float

    def validate(self, path: str = "obstacle") -> None:
        if self.radius <= 0:
            raise ScenarioError(f"{path}.radius: must be > 0, got {self.radius}")
        if self.height <= 0:
            raise ScenarioError(f"{path}.height: must be > 0, got {self.height}")


@dataclass(frozen=True)
class CapabilityRecord:
    """One row of the UAV capabilities database."""

    uav_id: int
    max_velocity: float
    max_flight_duration: float
    payload_sensors: tuple[str, ...] = ()
    body_radius: float = 0.3

    def validate(self, path: str = "agent") -> None:
        if self.max_velocity <= 0:
            raise ScenarioError(f"{path}.max_velocity: must be > 0, got {self.max_velocity}")
        if self.max_flight_duration <= 0:
            raise ScenarioError(
                f"{path}.max_flight_duration: must be > 0, got {self.max_flight_duration}"
            )
        if self.body_radius <= 0:
            raise ScenarioError(f"{path}.body_radius: must be > 0, got {self.body_radius}")


@dataclass(frozen=True)
class SwarmConfig:
    """Selected agents, their formation offsets and swarm-wide limits.

    The swarm is only as capable as its weakest member: ``swarm_v_max`` and
    ``swarm_t_max`` are minima over the selected agents. The central agent
    sits at offset (0,0,0) and acts as the trajectory reference.
    """

    agents: tuple[CapabilityRecord, ...]
    formation_offsets: tuple[Vec3, ...]
    central_index: int
    swarm_v_max: float
    swarm_t_max: float

    def validate(self, path: str = "swarm") -> None:
        n = len(self.agents)
        if n == 0:
            raise ScenarioError(f"{path}.agents: at least one agent required")
        if len(self.formation_offsets) != n:
            raise ScenarioError(
                f"{path}.formation_offsets: {len(self.formation_offsets)} offsets for {n} agents"
            )
        if not (0 <= self.central_index < n):
            raise ScenarioError(f"{path}.central_index: {self.central_index} out of range 0..{n - 1}")
        if any(abs(c) > 1e-12 for c in self.formation_offsets[self.central_index]):
            raise ScenarioError(
                f"{path}.formation_offsets[{self.central_index}]: central offset must be (0,0,0)"
            )
        for i, a in enumerate(self.agents):
            a.validate(f"{path}.agents[{i}]")
        v_min = min(a.max_velocity for a in self.agents)
        t_min = min(a.max_flight_duration for a in self.agents)
        if abs(self.swarm_v_max - v_min) > 1e-9:
            raise ScenarioError(f"{path}.swarm_v_max: must equal min agent velocity {v_min}")
        if abs(self.swarm_t_max - t_min) > 1e-9:
            raise ScenarioError(f"{path}.swarm_t_max: must equal min flight duration {t_min}")

    @property
    def central(self) -> CapabilityRecord:
        return self.agents[self.central_index]

    @property
    def body_radius(self) -> float:
        return max(a.body_radius for a in self.agents)


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully materialized mission scenario."""

    area_bounds: tuple[Vec3, Vec3]  # (min corner, max corner)
    obstacles: tuple[Obstacle, ...]
    pois: tuple[PoiRecord, ...]
    home: Vec3
    swarm: SwarmConfig
    seed: int = 0
    # Free-form overrides for planner/sim parameters, kept as loaded.
    params: tuple[tuple[str, float], ...] = ()

    def validate(self) -> None:
        lo, hi = self.area_bounds
        if any(l >= h for l, h in zip(lo, hi)):
            raise ScenarioError("area_bounds: min corner must be strictly below max corner")
        if not _inside(self.home, lo, hi):
            raise ScenarioError(f"home: {self.home} outside area_bounds")
        seen_ids = set()
        for i, p in enumerate(self.pois):
            p.validate(f"pois[{i}]")
            if p.id in seen_ids:
                raise ScenarioError(f"pois[{i}].id: duplicate id {p.id}")
            seen_ids.add(p.id)
            if not _inside(p.position, lo, hi):
                raise ScenarioError(f"pois[{i}].position: {p.position} outside area_bounds")
        for i, o in enumerate(self.obstacles):
            o.validate(f"obstacles[{i}]")
        self.swarm.validate("swarm")

    def param(self, key: str, default: float) -> float:
        for k, v in self.params:
            if k == key:
                return v
        return default


def _inside(p: Sequence[float], lo: Sequence[float], hi: Sequence[float]) -> bool:
    return all(l - 1e-9 <= x <= h + 1e-9 for x, l, h in zip(p, lo, hi))


# ---------------------------------------------------------------------------
# Swarm configuration rule
# ---------------------------------------------------------------------------


def formation_polygon(n_agents: int, edge_length: float) -> list[Vec3]:
    """Offsets for n agents: the central one at the origin, the other n-1 on
    a regular polygon in the horizontal plane with the given edge length.

    For two agents the single follower sits at ``edge_length`` from the
    center (a one-vertex polygon has no edge to fix the radius).
    """
    if n_agents < 1:
        raise ScenarioError("n_agents must be >= 1")
    offsets: list[Vec3] = [(0.0, 0.0, 0.0)]
    m = n_agents - 1
    if m == 0:
        return offsets
    if m == 1:
        return offsets + [(edge_length, 0.0, 0.0)]
    radius = edge_length / (2.0 * math.sin(math.pi / m))
    for k in range(m):
        ang = 2.0 * math.pi * k / m
        offsets.append((radius * math.cos(ang), radius * math.sin(ang), 0.0))
    return offsets


def configure_swarm(
    db: Sequence[CapabilityRecord],
    required_sensors: Iterable[str],
    n_agents: int,
    formation_edge: float = 4.0,
) -> SwarmConfig:
    """Select ``n_agents`` from the capabilities database and lay out the formation.

    Selection is a deterministic empirical rule: greedy set cover on the
    required sensor tags, remaining slots filled by longest endurance, ties
    broken by ascending uav_id. The central agent is the selected one that
    maximizes (endurance, velocity) lexicographically, preferring agents
    with an empty payload.

    Raises ScenarioError if the sensors cannot be covered with n_agents.
    """
    if n_agents < 1:
        raise ScenarioError("n_agents must be >= 1")
    if n_agents > len(db):
        raise ScenarioError(f"n_agents={n_agents} exceeds database size {len(db)}")
    needed = set(required_sensors)
    if needed - {s for a in db for s in a.payload_sensors}:
        missing = sorted(needed - {s for a in db for s in a.payload_sensors})
        raise ScenarioError(f"sensors {missing} not available in the database")

    pool = sorted(db, key=lambda a: a.uav_id)
    chosen: list[CapabilityRecord] = []
    uncovered = set(needed)
    while uncovered:
        if len(chosen) == n_agents:
            raise ScenarioError(
                f"cannot cover sensors {sorted(uncovered)} with {n_agents} agents"
            )
        best = max(
            (a for a in pool if a not in chosen),
            key=lambda a: (
                len(uncovered & set(a.payload_sensors)),
                a.max_flight_duration,
                -a.uav_id,
            ),
        )
        if not uncovered & set(best.payload_sensors):
            raise ScenarioError(
                f"cannot cover sensors {sorted(uncovered)} with {n_agents} agents"
            )
        chosen.append(best)
        uncovered -= set(best.payload_sensors)
    # Fill remaining slots with the longest-endurance agents.
    rest = sorted(
        (a for a in pool if a not in chosen),
        key=lambda a: (-a.max_flight_duration, a.uav_id),
    )
    chosen.extend(rest[: n_agents - len(chosen)])

    chosen.sort(key=lambda a: a.uav_id)
    central = _pick_central(chosen)
    central_index = chosen.index(central)

    polygon = formation_polygon(n_agents, formation_edge)
    offsets: list[Vec3] = [None] * n_agents  # type: ignore[list-item]
    offsets[central_index] = polygon[0]
    vertex = iter(polygon[1:])
    for i in range(n_agents):
        if i != central_index:
            offsets[i] = next(vertex)

    return SwarmConfig(
        agents=tuple(chosen),
        formation_offsets=tuple(offsets),
        central_index=central_index,
        swarm_v_max=min(a.max_velocity for a in chosen),
        swarm_t_max=min(a.max_flight_duration for a in chosen),
    )


def _pick_central(agents: Sequence[CapabilityRecord]) -> CapabilityRecord:
    unloaded = [a for a in agents if not a.payload_sensors]
    candidates = unloaded if unloaded else list(agents)
    return max(candidates, key=lambda a: (a.max_flight_duration, a.max_velocity, -a.uav_id))


# ---------------------------------------------------------------------------
# Obstacle field generation
# ---------------------------------------------------------------------------


def generate_obstacles(
    count: int,
    area_bounds: tuple[Vec3, Vec3],
    radius_range: tuple[float, float],
    height: float,
    seed: int,
    keep_clear: Sequence[Vec3] = (),
    clearance: float = 2.5,
    margin: float = 1.0,
) -> tuple[Obstacle, ...]:
    """Place ``count`` random cylinders inside the area, rejecting any whose
    surface comes within ``clearance`` of a keep-clear point (POIs, home).

    Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    lo, hi = area_bounds
    clear_xy = np.array([(p[0], p[1]) for p in keep_clear]).reshape(-1, 2)
    out: list[Obstacle] = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 200 * count:
            raise ScenarioError(
                f"obstacles.generate: could not place {count} cylinders with the given clearances"
            )
        r = float(rng.uniform(radius_range[0], radius_range[1]))
        x = float(rng.uniform(lo[0] + margin, hi[0] - margin))
        y = float(rng.uniform(lo[1] + margin, hi[1] - margin))
        if clear_xy.size:
            d = np.hypot(clear_xy[:, 0] - x, clear_xy[:, 1] - y).min()
            if d < clearance + r:
                continue
        out.append(Obstacle(center=(x, y), radius=r, height=float(height)))
    return tuple(out)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def load_scenario(path: str, seed_override: int | None = None) -> ScenarioConfig:
    """Load and validate a scenario YAML file.

    Obstacles may be given explicitly or as a ``generate`` block that is
    materialized deterministically from the scenario seed.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ScenarioError(f"parse error in {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return scenario_from_dict(raw, seed_override=seed_override)


def scenario_from_dict(raw: dict, seed_override: int | None = None) -> ScenarioConfig:
    for key in ("area", "home"):
        if key not in raw:
            raise ScenarioError(f"{key}: missing required section")
    area = raw["area"]
    if not isinstance(area, dict) or "min" not in area or "max" not in area:
        raise ScenarioError("area: must contain 'min' and 'max' corners")
    bounds = (_vec3(area["min"], "area.min"), _vec3(area["max"], "area.max"))
    home = _vec3(raw["home"], "home")
    seed = int(raw.get("seed", 0))
    if seed_override is not None:
        seed = int(seed_override)

    pois = []
    for i, p in enumerate(raw.get("pois", []) or []):
        if not isinstance(p, dict):
            raise ScenarioError(f"pois[{i}]: expected a mapping")
        try:
            rec = PoiRecord(
                id=int(p.get("id", i + 1)),
                position=_vec3(p["position"], f"pois[{i}].position"),
                prize=float(p.get("prize", 0.0)),
                tw_open=float(p.get("tw_open", 0.0)),
                tw_close=float(p["tw_close"]) if "tw_close" in p else math.inf,
                service_time=float(p.get("service_time", 0.0)),
            )
        except KeyError as e:
            raise ScenarioError(f"pois[{i}]: missing field {e.args[0]}") from None
        pois.append(rec)

    obstacles = _load_obstacles(raw.get("obstacles", []), bounds, pois, home, seed)
    swarm = _load_swarm(raw.get("swarm"), len(pois))
    params = tuple(
        (str(k), float(v)) for k, v in sorted((raw.get("params") or {}).items())
    )

    cfg = ScenarioConfig(
        area_bounds=bounds,
        obstacles=obstacles,
        pois=tuple(pois),
        home=home,
        swarm=swarm,
        seed=seed,
        params=params,
    )
    cfg.validate()
    return cfg


def _load_obstacles(spec, bounds, pois, home, seed) -> tuple[Obstacle, ...]:
    if isinstance(spec, dict) and "generate" in spec:
        g = spec["generate"]
        return generate_obstacles(
            count=int(g["count"]),
            area_bounds=bounds,
            radius_range=(float(g["radius_min"]), float(g["radius_max"])),
            height=float(g["height"]),
            seed=seed,
            keep_clear=[p.position for p in pois] + [home],
            clearance=float(g.get("clearance", 2.5)),
            margin=float(g.get("margin", 1.0)),
        )
    out = []
    for i, o in enumerate(spec or []):
        if not isinstance(o, dict):
            raise ScenarioError(f"obstacles[{i}]: expected a mapping")
        try:
            out.append(
                Obstacle(
                    center=_vec2(o["center"], f"obstacles[{i}].center"),
                    radius=float(o["radius"]),
                    height=float(o["height"]),
                )
            )
        except KeyError as e:
            raise ScenarioError(f"obstacles[{i}]: missing field {e.args[0]}") from None
    return tuple(out)


def _load_swarm(spec, n_pois: int) -> SwarmConfig:
    if spec is None:
        raise ScenarioError("swarm: missing required section")
    if not isinstance(spec, dict):
        raise ScenarioError("swarm: expected a mapping")
    agents = []
    for i, a in enumerate(spec.get("agents", []) or []):
        try:
            agents.append(
                CapabilityRecord(
                    uav_id=int(a["uav_id"]),
                    max_velocity=float(a["max_velocity"]),
                    max_flight_duration=float(a["max_flight_duration"]),
                    payload_sensors=tuple(str(s) for s in (a.get("payload_sensors") or [])),
                    body_radius=float(a.get("body_radius", 0.3)),
                )
            )
        except KeyError as e:
            raise ScenarioError(f"swarm.agents[{i}]: missing field {e.args[0]}") from None
    if not agents:
        raise ScenarioError("swarm.agents: at least one agent required")

    if "formation_offsets" in spec:
        offsets = tuple(
            _vec3(v, f"swarm.formation_offsets[{i}]")
            for i, v in enumerate(spec["formation_offsets"])
        )
        central = int(spec.get("central_index", 0))
        cfg = SwarmConfig(
            agents=tuple(agents),  # explicit offsets pair with file order
            formation_offsets=offsets,
            central_index=central,
            swarm_v_max=min(a.max_velocity for a in agents),
            swarm_t_max=min(a.max_flight_duration for a in agents),
        )
        cfg.validate("swarm")
        return cfg

    edge = float(spec.get("formation_edge", 4.0))
    required = set(spec.get("required_sensors", []) or [])
    n = int(spec.get("n_agents", len(agents)))
    return configure_swarm(agents, required, n, formation_edge=edge)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "seed": cfg.seed,
        "area": {"min": list(cfg.area_bounds[0]), "max": list(cfg.area_bounds[1])},
        "home": list(cfg.home),
        "obstacles": [
            {"center": list(o.center), "radius": o.radius, "height": o.height}
            for o in cfg.obstacles
        ],
        "pois": [
            {
                "id": p.id,
                "position": list(p.position),
                "prize": p.prize,
                "tw_open": p.tw_open,
                "tw_close": "inf" if math.isinf(p.tw_close) else p.tw_close,
                "service_time": p.service_time,
            }
            for p in cfg.pois
        ],
        "swarm": {
            "agents": [
                {
                    "uav_id": a.uav_id,
                    "max_velocity": a.max_velocity,
                    "max_flight_duration": a.max_flight_duration,
                    "payload_sensors": list(a.payload_sensors),
                    "body_radius": a.body_radius,
                }
                for a in cfg.swarm.agents
            ],
            "formation_offsets": [list(v) for v in cfg.swarm.formation_offsets],
            "central_index": cfg.swarm.central_index,
        },
        "params": {k: v for k, v in cfg.params},
    }


def save_scenario(cfg: ScenarioConfig, path: str) -> None:
    """Write a scenario with obstacles materialized; load(save(cfg)) == cfg."""
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(scenario_to_dict(cfg), f, sort_keys=False)
