"""Grid-dungeon gameplay simulator driven by profile-parameterized agents.

Each game is a pure function of (profile, seed, config): a stochastic agent
walks a small dungeon, choosing among 3-6 offered actions per step. Moral
and order axes of the profile become signed utility weights (Neutral axes
become exactly zero, making neutral behavior ambiguous by construction);
the motivation boosts one affinity channel of every offered action.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from profilebench.errors import ConfigInvalid, IoFailure
from profilebench.hashing import mix_seed
from profilebench.taxonomy import (
    LawAxis,
    MoralAxis,
    Motivation,
    Profile,
    PROFILES,
)
from profilebench.textgen import TEMPLATES, render_text


class ActionCategory(Enum):
    COMBAT = 0
    SOCIAL = 1
    ACQUISITIVE = 2
    EXPLORATORY = 3
    CAUTIOUS = 4


CATEGORIES: tuple[ActionCategory, ...] = tuple(ActionCategory)
_CATEGORY_NAME = {c: c.name.capitalize() for c in CATEGORIES}
_NAME_CATEGORY = {v: k for k, v in _CATEGORY_NAME.items()}

MOTIVATION_NAMES = ("Safety", "Speed", "Wanderlust", "Wealth")


class Entity(Enum):
    MONSTER = "Monster"
    MERCHANT = "Merchant"
    VILLAGER = "Villager"
    TREASURE = "Treasure"
    EXIT_PORTAL = "ExitPortal"


class Outcome(Enum):
    EXIT_REACHED = "ExitReached"
    DIED = "Died"
    STEP_LIMIT = "StepLimit"


@dataclass(frozen=True)
class SimConfig:
    width: int = 6
    height: int = 6
    max_steps: int = 40
    moral_gain: float = 2.8
    order_gain: float = 2.2
    motivation_gain: float = 2.4
    consistency_bonus: float = 0.7
    temperature: float = 1.0
    noise_scale: float = 0.8
    fight_death_chance: float = 0.05
    taunt_death_chance: float = 0.09
    monster_rate: float = 0.35
    merchant_rate: float = 0.30
    villager_rate: float = 0.30
    treasure_rate: float = 0.25

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ConfigInvalid(f"dungeon dimensions must be positive: {self.width}x{self.height}")
        if self.max_steps <= 0:
            raise ConfigInvalid(f"max_steps must be positive: {self.max_steps}")
        if self.temperature <= 0:
            raise ConfigInvalid(f"temperature must be positive: {self.temperature}")
        if self.noise_scale < 0:
            raise ConfigInvalid(f"noise_scale must be non-negative: {self.noise_scale}")
        for name in (
            "fight_death_chance",
            "taunt_death_chance",
            "monster_rate",
            "merchant_rate",
            "villager_rate",
            "treasure_rate",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigInvalid(f"{name} must lie in [0, 1]: {value}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigInvalid(f"unknown simulator config keys: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class Room:
    coords: tuple[int, int]
    entities: frozenset[Entity]
    description_seed: int


@dataclass(frozen=True)
class Dungeon:
    width: int
    height: int
    rooms: dict[tuple[int, int], Room]
    start: tuple[int, int]
    exit: tuple[int, int]

    @property
    def room_count(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class ActionInstance:
    category: ActionCategory
    moral_valence: float
    order_score: float
    motivation_affinity: dict[Motivation, float]
    text: str
    move_delta: tuple[int, int] | None = None
    kind: str = ""  # catalog id; drives death/exit semantics, not serialized


@dataclass(frozen=True)
class DecisionPoint:
    step: int
    room: tuple[int, int]
    available: tuple[ActionInstance, ...]
    chosen: int
    room_text: str
    action_text: str


@dataclass(frozen=True)
class Session:
    game_id: int
    profile: Profile
    seed: int
    decisions: tuple[DecisionPoint, ...]
    outcome: Outcome

    @property
    def length(self) -> int:
        return len(self.decisions)


@dataclass(frozen=True)
class AgentParams:
    w_moral: float
    w_order: float
    motivation_weights: dict[Motivation, float]
    temperature: float
    noise_scale: float


_MORAL_SIGN = {MoralAxis.GOOD: 1.0, MoralAxis.NEUTRAL: 0.0, MoralAxis.EVIL: -1.0}
_ORDER_SIGN = {LawAxis.LAWFUL: 1.0, LawAxis.NEUTRAL: 0.0, LawAxis.CHAOTIC: -1.0}


def derive_agent_params(profile: Profile, config: SimConfig) -> AgentParams:
    """Signed utility weights per axis; Neutral axes collapse to zero."""
    if config.moral_gain <= 0 or config.order_gain <= 0 or config.motivation_gain <= 0:
        raise ConfigInvalid("gains must be positive")
    weights = {m: 0.0 for m in Motivation}
    weights[profile.motivation] = config.motivation_gain
    return AgentParams(
        w_moral=_MORAL_SIGN[profile.alignment.moral_axis] * config.moral_gain,
        w_order=_ORDER_SIGN[profile.alignment.law_axis] * config.order_gain,
        motivation_weights=weights,
        temperature=config.temperature,
        noise_scale=config.noise_scale,
    )


@dataclass
class GameState:
    """Mutable per-game state the utility function conditions on."""

    position: tuple[int, int]
    visited: set[tuple[int, int]]
    prev_category: ActionCategory | None
    rng: np.random.Generator
    consistency_bonus: float


def action_utilities(
    params: AgentParams, state: GameState, available: list[ActionInstance]
) -> np.ndarray:
    """Utility per offered action: moral + order + motivation + consistency + noise."""
    n = len(available)
    u = np.zeros(n)
    for i, act in enumerate(available):
        u[i] = params.w_moral * act.moral_valence + params.w_order * act.order_score
        for m, w in params.motivation_weights.items():
            if w != 0.0:
                u[i] += w * act.motivation_affinity[m]
        if state.prev_category is not None and act.category is state.prev_category:
            u[i] += params.w_order * state.consistency_bonus
    if params.noise_scale > 0:
        u += params.noise_scale * state.rng.normal(size=n)
    return u


def softmax_policy(utilities: np.ndarray, temperature: float) -> np.ndarray:
    """Boltzmann policy over utilities, max-subtracted for overflow safety."""
    if temperature <= 0:
        raise ConfigInvalid(f"temperature must be positive: {temperature}")
    z = np.asarray(utilities, dtype=float) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def build_dungeon(seed: int, config: SimConfig) -> Dungeon:
    """Open W x H grid; exit seeded among far cells, entities seeded per room."""
    config.validate()
    rng = np.random.Generator(np.random.PCG64(mix_seed(seed, "dungeon")))
    w, h = config.width, config.height
    start = (0, 0)
    # Exit sits in the far half of the grid so every game starts with a trek.
    far = [(x, y) for x in range(w) for y in range(h) if x + y >= (w + h) // 2]
    exit_cell = far[int(rng.integers(len(far)))] if far else (w - 1, h - 1)
    if exit_cell == start:
        exit_cell = (w - 1, h - 1)
    rooms = {}
    for x in range(w):
        for y in range(h):
            entities = set()
            if rng.random() < config.monster_rate:
                entities.add(Entity.MONSTER)
            if rng.random() < config.merchant_rate:
                entities.add(Entity.MERCHANT)
            if rng.random() < config.villager_rate:
                entities.add(Entity.VILLAGER)
            if rng.random() < config.treasure_rate:
                entities.add(Entity.TREASURE)
            if (x, y) == exit_cell:
                entities.add(Entity.EXIT_PORTAL)
            rooms[(x, y)] = Room(
                coords=(x, y),
                entities=frozenset(entities),
                description_seed=mix_seed(seed, "room", x, y),
            )
    return Dungeon(width=w, height=h, rooms=rooms, start=start, exit=exit_cell)


# Static action catalog: (category, valence, order, base affinities).
# Dynamic affinities for movement/portal are computed at offer time.
def _aff(safety, speed, wanderlust, wealth) -> dict[Motivation, float]:
    return {
        Motivation.SAFETY: safety,
        Motivation.SPEED: speed,
        Motivation.WANDERLUST: wanderlust,
        Motivation.WEALTH: wealth,
    }


_CATALOG = {
    "fight_monster": (ActionCategory.COMBAT, 0.45, 0.10, _aff(0.05, 0.30, 0.20, 0.35)),
    "taunt_monster": (ActionCategory.COMBAT, -0.60, -0.30, _aff(0.02, 0.05, 0.25, 0.15)),
    "help_merchant": (ActionCategory.SOCIAL, 0.80, 0.15, _aff(0.30, 0.05, 0.15, 0.35)),
    "rob_merchant": (ActionCategory.ACQUISITIVE, -0.85, -0.30, _aff(0.05, 0.15, 0.10, 0.95)),
    "trade_merchant": (ActionCategory.ACQUISITIVE, 0.10, 0.60, _aff(0.40, 0.10, 0.10, 0.75)),
    "help_villager": (ActionCategory.SOCIAL, 0.90, 0.10, _aff(0.35, 0.05, 0.20, 0.05)),
    "threaten_villager": (ActionCategory.SOCIAL, -0.80, -0.20, _aff(0.10, 0.20, 0.05, 0.50)),
    "chat_villager": (ActionCategory.SOCIAL, 0.15, -0.10, _aff(0.30, 0.02, 0.50, 0.10)),
    "take_treasure": (ActionCategory.ACQUISITIVE, -0.05, -0.15, _aff(0.15, 0.20, 0.30, 1.00)),
    "rest": (ActionCategory.CAUTIOUS, 0.0, 0.50, _aff(0.90, 0.02, 0.10, 0.05)),
    "scout": (ActionCategory.CAUTIOUS, 0.0, 0.15, _aff(0.70, 0.15, 0.45, 0.20)),
    "search_room": (ActionCategory.CAUTIOUS, 0.0, -0.25, _aff(0.30, 0.02, 0.40, 0.60)),
    "smash": (ActionCategory.COMBAT, -0.25, -0.80, _aff(0.02, 0.05, 0.20, 0.30)),
}

_DIRECTIONS = {
    "north": (0, -1),
    "south": (0, 1),
    "east": (1, 0),
    "west": (-1, 0),
}
_DIRECTION_ORDER = ("north", "east", "south", "west")


def _catalog_action(kind: str, text: str) -> ActionInstance:
    category, valence, order, affinity = _CATALOG[kind]
    return ActionInstance(
        category=category,
        moral_valence=valence,
        order_score=order,
        motivation_affinity=dict(affinity),
        text=text,
        kind=kind,
    )


def _move_action(direction: str, target_unvisited: bool, toward_exit: bool, text: str) -> ActionInstance:
    return ActionInstance(
        category=ActionCategory.EXPLORATORY,
        moral_valence=0.0,
        order_score=0.0,
        motivation_affinity=_aff(
            0.50 if not target_unvisited else 0.20,
            0.85 if toward_exit else 0.10,
            0.90 if target_unvisited else 0.30,
            0.30,
        ),
        text=text,
        move_delta=_DIRECTIONS[direction],
        kind=f"move_{direction}",
    )


def _portal_action(text: str) -> ActionInstance:
    return ActionInstance(
        category=ActionCategory.EXPLORATORY,
        moral_valence=0.0,
        order_score=0.20,
        motivation_affinity=_aff(0.80, 1.00, 0.05, 0.20),
        text=text,
        kind="enter_portal",
    )


def _room_text(room: Room, step: int) -> str:
    parts = [render_text(TEMPLATES, "room_base", mix_seed(room.description_seed, step, 0))]
    order = [
        (Entity.MONSTER, "room_monster"),
        (Entity.MERCHANT, "room_merchant"),
        (Entity.VILLAGER, "room_villager"),
        (Entity.TREASURE, "room_treasure"),
        (Entity.EXIT_PORTAL, "room_exit"),
    ]
    for k, (entity, template_id) in enumerate(order, start=1):
        if entity in room.entities:
            parts.append(render_text(TEMPLATES, template_id, mix_seed(room.description_seed, step, k)))
    return " ".join(parts)


def _assemble_menu(
    dungeon: Dungeon,
    room: Room,
    state: GameState,
    game_seed: int,
    step: int,
) -> list[ActionInstance]:
    """Offer 3-6 actions: movement first, then entity actions, then fillers."""
    rng = state.rng
    x, y = state.position
    menu: list[ActionInstance] = []

    def text_for(kind: str, slot: int, overrides=None) -> str:
        template_id = "move" if kind.startswith("move_") else kind
        return render_text(
            TEMPLATES, template_id, mix_seed(game_seed, "text", step, slot), overrides
        )

    # Movement: always include one exit-approaching direction, plus one other.
    valid = []
    for name in _DIRECTION_ORDER:
        dx, dy = _DIRECTIONS[name]
        tx, ty = x + dx, y + dy
        if 0 <= tx < dungeon.width and 0 <= ty < dungeon.height:
            valid.append((name, (tx, ty)))
    def dist(p: tuple[int, int]) -> int:
        return abs(p[0] - dungeon.exit[0]) + abs(p[1] - dungeon.exit[1])

    here = dist((x, y))
    toward = [v for v in valid if dist(v[1]) < here]
    offered_moves = []
    if toward:
        offered_moves.append(toward[int(rng.integers(len(toward)))])
    others = [v for v in valid if v not in offered_moves]
    if others:
        offered_moves.append(others[int(rng.integers(len(others)))])
    for slot, (name, target) in enumerate(offered_moves):
        menu.append(
            _move_action(
                name,
                target_unvisited=target not in state.visited,
                toward_exit=dist(target) < here,
                text=text_for(f"move_{name}", slot, {"direction": name}),
            )
        )

    if Entity.EXIT_PORTAL in room.entities:
        menu.append(_portal_action(text_for("enter_portal", 2)))

    entity_kinds: list[str] = []
    if Entity.MONSTER in room.entities:
        entity_kinds += ["fight_monster", "taunt_monster"]
    if Entity.MERCHANT in room.entities:
        pair = ["help_merchant", "rob_merchant", "trade_merchant"]
        drop = int(rng.integers(3))
        entity_kinds += [k for i, k in enumerate(pair) if i != drop]
    if Entity.VILLAGER in room.entities:
        pair = ["help_villager", "threaten_villager", "chat_villager"]
        drop = int(rng.integers(3))
        entity_kinds += [k for i, k in enumerate(pair) if i != drop]
    if Entity.TREASURE in room.entities:
        entity_kinds.append("take_treasure")
    for slot, kind in enumerate(entity_kinds, start=3):
        if len(menu) >= 6:
            break
        menu.append(_catalog_action(kind, text_for(kind, slot)))

    fillers = ["rest", "scout", "search_room", "smash"]
    first = int(rng.integers(len(fillers)))
    ordered_fillers = fillers[first:] + fillers[:first]
    slot = 3 + len(entity_kinds)
    for kind in ordered_fillers:
        if len(menu) >= 6 or (len(menu) >= 3 and len(menu) - len(offered_moves) >= 3):
            break
        menu.append(_catalog_action(kind, text_for(kind, slot)))
        slot += 1
    while len(menu) < 3:  # pragma: no cover - fillers always reach 3 first
        menu.append(_catalog_action("rest", text_for("rest", slot)))
        slot += 1
    return menu


def play_game(profile: Profile, seed: int, config: SimConfig, game_id: int = 0) -> Session:
    """Deterministic playthrough; see module docstring for agent mechanics."""
    config.validate()
    dungeon = build_dungeon(seed, config)
    params = derive_agent_params(profile, config)
    state = GameState(
        position=dungeon.start,
        visited={dungeon.start},
        prev_category=None,
        rng=np.random.Generator(np.random.PCG64(mix_seed(seed, "play"))),
        consistency_bonus=config.consistency_bonus,
    )
    decisions: list[DecisionPoint] = []
    outcome = Outcome.STEP_LIMIT
    for step in range(config.max_steps):
        room = dungeon.rooms[state.position]
        menu = _assemble_menu(dungeon, room, state, seed, step)
        utilities = action_utilities(params, state, menu)
        probs = softmax_policy(utilities, params.temperature)
        pick = int(np.searchsorted(np.cumsum(probs), state.rng.random()))
        pick = min(pick, len(menu) - 1)
        chosen = menu[pick]
        decisions.append(
            DecisionPoint(
                step=step,
                room=state.position,
                available=tuple(menu),
                chosen=pick,
                room_text=_room_text(room, step),
                action_text=chosen.text,
            )
        )
        state.prev_category = chosen.category
        if chosen.kind == "enter_portal":
            outcome = Outcome.EXIT_REACHED
            break
        if chosen.kind in ("fight_monster", "taunt_monster"):
            p_death = (
                config.fight_death_chance
                if chosen.kind == "fight_monster"
                else config.taunt_death_chance
            )
            if state.rng.random() < p_death:
                outcome = Outcome.DIED
                break
        if chosen.move_delta is not None:
            dx, dy = chosen.move_delta
            state.position = (state.position[0] + dx, state.position[1] + dy)
            state.visited.add(state.position)
    return Session(
        game_id=game_id,
        profile=profile,
        seed=seed,
        decisions=tuple(decisions),
        outcome=outcome,
    )


def game_seed(master_seed: int, profile_idx: int, ordinal: int) -> int:
    """Per-game seed independent of generation order or parallelism."""
    return mix_seed(master_seed, profile_idx, ordinal)


def action_to_json(action: ActionInstance) -> dict:
    d = {
        "category": _CATEGORY_NAME[action.category],
        "valence": action.moral_valence,
        "order": action.order_score,
        "affinity": {
            MOTIVATION_NAMES[m.value]: action.motivation_affinity[m] for m in Motivation
        },
        "text": action.text,
    }
    if action.move_delta is not None:
        d["move"] = list(action.move_delta)
    return d


def action_from_json(d: dict) -> ActionInstance:
    return ActionInstance(
        category=_NAME_CATEGORY[d["category"]],
        moral_valence=d["valence"],
        order_score=d["order"],
        motivation_affinity={
            Motivation(i): d["affinity"][MOTIVATION_NAMES[i]] for i in range(4)
        },
        text=d["text"],
        move_delta=tuple(d["move"]) if "move" in d else None,
    )


def session_to_json(session: Session) -> dict:
    return {
        "game_id": session.game_id,
        "profile": session.profile.code,
        "seed": session.seed,
        "outcome": session.outcome.value,
        "decisions": [
            {
                "step": d.step,
                "room": list(d.room),
                "available": [action_to_json(a) for a in d.available],
                "chosen": d.chosen,
                "room_text": d.room_text,
                "action_text": d.action_text,
            }
            for d in session.decisions
        ],
    }


def session_from_json(d: dict) -> Session:
    return Session(
        game_id=d["game_id"],
        profile=Profile.from_code(d["profile"]),
        seed=d["seed"],
        outcome=Outcome(d["outcome"]),
        decisions=tuple(
            DecisionPoint(
                step=dec["step"],
                room=tuple(dec["room"]),
                available=tuple(action_from_json(a) for a in dec["available"]),
                chosen=dec["chosen"],
                room_text=dec["room_text"],
                action_text=dec["action_text"],
            )
            for dec in d["decisions"]
        ),
    )


def generate_sessions(
    master_seed: int, games_per_profile: int, config: SimConfig, threads: int = 1
) -> Iterable[Session]:
    """All sessions in canonical (profile, ordinal) order.

    Per-game seeds are derived, never drawn from a shared stream, so output
    is identical for any thread count.
    """
    if games_per_profile < 1:
        raise ConfigInvalid(f"games_per_profile must be >= 1: {games_per_profile}")
    config.validate()
    jobs = [
        (profile, ordinal)
        for profile in PROFILES
        for ordinal in range(games_per_profile)
    ]

    def run(job) -> Session:
        profile, ordinal = job
        gid = profile.index * games_per_profile + ordinal
        return play_game(profile, game_seed(master_seed, profile.index, ordinal), config, gid)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(run, jobs)
    else:
        for job in jobs:
            yield run(job)


def generate_corpus(
    master_seed: int,
    games_per_profile: int,
    config: SimConfig,
    sessions_path: str | Path,
    manifest_path: str | Path,
    threads: int = 1,
) -> dict:
    """Write sessions.jsonl and its manifest; returns the manifest dict."""
    counts = {p.code: 0 for p in PROFILES}
    try:
        with open(sessions_path, "w", encoding="utf-8") as fh:
            for session in generate_sessions(master_seed, games_per_profile, config, threads):
                counts[session.profile.code] += 1
                fh.write(json.dumps(session_to_json(session), separators=(",", ":")))
                fh.write("\n")
        manifest = {
            "format": "sessions-jsonl-v1",
            "master_seed": master_seed,
            "games_per_profile": games_per_profile,
            "counts": counts,
            "sim_config": config.to_dict(),
        }
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"corpus write failed: {exc}") from exc
    return manifest


def load_sessions(path: str | Path) -> Iterable[Session]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield session_from_json(json.loads(line))
    except OSError as exc:
        raise IoFailure(f"corpus read failed: {exc}") from exc
