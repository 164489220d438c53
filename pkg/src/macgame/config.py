"""Experiment configuration files and the shipped presets.

A config is a YAML document::

    name: table2_saturated_in
    mode: saturated            # or unsaturated
    noise_power: 1.0
    users:
      - {k_max: 3, l_max: 5, power_budget: 2.0}
    throughput:
      kind: sic_randomized     # matched_filter | sum | sum_capacity | sic_endpoint | sic_randomized
      partition: [[1], [2, 3]] # ordered blocks of 1-based user labels
    solver: {eps: 1.0e-8, max_sweeps: 500, init: phase1}
    sim: {horizon: 1000000, seed: 0}
    output: {format: csv, path: results}

Every user rides a birth-death channel with gain ``k / k_max`` and power
``p(l) = l``. Unsaturated users also need ``q_max``, ``queue_budget`` and
``arrival_rate`` (Poisson).
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .model import GameSpec, reference_user
from .throughput import PartitionScheme, ThroughputSelector, KINDS

PRESET_PACKAGE = "macgame.presets"

DEFAULTS = {
    "solver": {"eps": 1e-8, "max_sweeps": 500, "init": "phase1"},
    "sim": {"horizon": 1_000_000, "seed": 0},
    "output": {"format": "csv", "path": "results"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class UserConfig:
    k_max: int
    l_max: int
    power_budget: float
    q_max: Optional[int] = None
    queue_budget: Optional[float] = None
    arrival_rate: Optional[float] = None


@dataclass
class ExperimentConfig:
    name: str
    mode: str
    noise_power: float
    users: list
    throughput: dict
    solver: dict = field(default_factory=lambda: dict(DEFAULTS["solver"]))
    sim: dict = field(default_factory=lambda: dict(DEFAULTS["sim"]))
    output: dict = field(default_factory=lambda: dict(DEFAULTS["output"]))
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def partition(self) -> Optional[PartitionScheme]:
        blocks = self.throughput.get("partition")
        return None if blocks is None else PartitionScheme.from_labels(blocks)

    def selector(self) -> ThroughputSelector:
        kind = self.throughput["kind"]
        if kind == "sic_endpoint":
            return ThroughputSelector.sic_endpoint(self.throughput["m"])
        if kind == "sic_randomized":
            return ThroughputSelector.sic_randomized(self.partition)
        return ThroughputSelector(kind)

    def game(self) -> GameSpec:
        saturated = self.mode == "saturated"
        users = []
        for u in self.users:
            kw = dict(k_max=u.k_max, l_max=u.l_max, power_budget=u.power_budget)
            if not saturated:
                kw.update(q_max=u.q_max, queue_budget=u.queue_budget, arrival_rate=u.arrival_rate)
            users.append(reference_user(saturated, **kw))
        return GameSpec(tuple(users), self.noise_power, self.selector(), self.mode)

    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _require(doc: dict, key: str, path: str):
    if key not in doc or doc[key] is None:
        raise ConfigError("missing required field", f"{path}{key}")
    return doc[key]


def _number(value, path: str, kind=float, positive=False, minimum=None):
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", path)
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", path) from None
    if kind is int and out != float(value):
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if positive and not out > 0:
        raise ConfigError(f"must be positive, got {value!r}", path)
    if minimum is not None and out < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value!r}", path)
    return out


def parse_config(doc: Any, name: str = "config") -> ExperimentConfig:
    """Validate a parsed document and apply defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping")
    raw = copy.deepcopy(doc)
    mode = _require(doc, "mode", "")
    if mode not in ("saturated", "unsaturated"):
        raise ConfigError(f"must be 'saturated' or 'unsaturated', got {mode!r}", "mode")
    noise = _number(_require(doc, "noise_power", ""), "noise_power", positive=True)
    users_doc = _require(doc, "users", "")
    if not isinstance(users_doc, list) or not users_doc:
        raise ConfigError("must be a nonempty list", "users")
    users = []
    for idx, u in enumerate(users_doc):
        p = f"users[{idx}]."
        if not isinstance(u, dict):
            raise ConfigError("must be a mapping", p[:-1])
        uc = UserConfig(
            k_max=_number(_require(u, "k_max", p), p + "k_max", int, minimum=1),
            l_max=_number(_require(u, "l_max", p), p + "l_max", int, minimum=1),
            power_budget=_number(_require(u, "power_budget", p), p + "power_budget", positive=True),
        )
        if mode == "unsaturated":
            uc.q_max = _number(_require(u, "q_max", p), p + "q_max", int, minimum=1)
            uc.queue_budget = _number(_require(u, "queue_budget", p), p + "queue_budget", positive=True)
            uc.arrival_rate = _number(_require(u, "arrival_rate", p), p + "arrival_rate", minimum=0)
        else:
            for key in ("q_max", "queue_budget", "arrival_rate"):
                if u.get(key) is not None:
                    raise ConfigError("only allowed in unsaturated mode", p + key)
        users.append(uc)

    tp = _require(doc, "throughput", "")
    if not isinstance(tp, dict):
        raise ConfigError("must be a mapping", "throughput")
    kind = _require(tp, "kind", "throughput.")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}", "throughput.kind")
    throughput = {"kind": kind}
    if kind == "sic_endpoint":
        throughput["m"] = _number(_require(tp, "m", "throughput."), "throughput.m", int, minimum=1)
    if kind == "sic_randomized":
        blocks = _require(tp, "partition", "throughput.")
        try:
            PartitionScheme.from_labels(blocks)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "throughput.partition") from None
        throughput["partition"] = [list(b) for b in blocks]

    sections = {}
    for section, defaults in DEFAULTS.items():
        given = doc.get(section) or {}
        if not isinstance(given, dict):
            raise ConfigError("must be a mapping", section)
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown field(s) {sorted(unknown)}", section)
        sections[section] = {**defaults, **given}
    sv = sections["solver"]
    sv["eps"] = _number(sv["eps"], "solver.eps", positive=True)
    sv["max_sweeps"] = _number(sv["max_sweeps"], "solver.max_sweeps", int, minimum=0)
    if not isinstance(sv["init"], str):
        raise ConfigError("must be 'phase1', 'idle' or a measures file path", "solver.init")
    sections["sim"]["horizon"] = _number(sections["sim"]["horizon"], "sim.horizon", int, minimum=1)
    sections["sim"]["seed"] = _number(sections["sim"]["seed"], "sim.seed", int, minimum=0)
    if sections["output"]["format"] != "csv":
        raise ConfigError("only 'csv' is supported", "output.format")

    cfg = ExperimentConfig(
        name=str(doc.get("name", name)),
        mode=mode,
        noise_power=noise,
        users=users,
        throughput=throughput,
        raw=raw,
        **sections,
    )
    try:
        cfg.game()
    except ValueError as exc:
        raise ConfigError(str(exc), "throughput") from None
    return cfg


def preset_names() -> list[str]:
    return sorted(
        p.name[: -len(".yaml")]
        for p in resources.files(PRESET_PACKAGE).iterdir()
        if p.name.endswith(".yaml")
    )


def load_config(path) -> ExperimentConfig:
    """Load a config file, or a shipped preset when ``path`` names one."""
    p = Path(path)
    if not p.exists() and str(path) in preset_names():
        text = resources.files(PRESET_PACKAGE).joinpath(f"{path}.yaml").read_text()
        name = str(path)
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        name = p.stem
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"{where}{getattr(exc, 'problem', None) or exc}") from None
    return parse_config(doc, name)


# Published equilibrium throughputs, users in order 1, 2, 3. The saturated
# alpha(2, 1) game lists two equilibria.
TABLE2 = {
    ("in", "saturated"): [(0.5263, 0.5263, 0.5263)],
    ("in", "unsaturated"): [(0.4649, 0.4649, 0.4649)],
    ("a11", "saturated"): [(1.0644, 0.6969, 0.5068)],
    ("a11", "unsaturated"): [(0.6949, 0.5649, 0.4649)],
    ("a42", "saturated"): [(0.8836, 0.8836, 0.5082)],
    ("a42", "unsaturated"): [(0.6299, 0.6299, 0.4649)],
    ("a51", "saturated"): [(0.7566, 0.7566, 0.7566)],
    ("a51", "unsaturated"): [(0.5749, 0.5749, 0.5749)],
    ("a21", "saturated"): [(1.0644, 0.6035, 0.5987), (1.0644, 0.5987, 0.6035)],
    ("a21", "unsaturated"): [(0.6949, 0.5149, 0.5149)],
    ("s", "saturated"): [(1.6139, 1.6139, 1.6139)],
    ("s", "unsaturated"): [(1.3959, 1.3959, 1.3959)],
    ("sc", "saturated"): [(2.2789, 2.2789, 2.2789)],
    ("sc", "unsaturated"): [(1.7246, 1.7246, 1.7246)],
}

TABLE2_GAMES = ("in", "a11", "a42", "a51", "a21", "s", "sc")


def table2_preset(game: str, mode: str) -> str:
    return f"table2_{mode}_{game}"
