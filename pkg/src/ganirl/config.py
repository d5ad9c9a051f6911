"""Experiment configuration files.

INI syntax (``[section]`` headers, ``key = value`` lines, ``#`` comments).
Trajectory runs use ``[world]``, ``[cost]`` and ``[train]``; energy-model
runs use ``[ebm]``. Every key is optional and falls back to the defaults in
:data:`SCHEMA`. Errors carry the file name and line number.

``[cost] theta`` is a comma-separated vector, or ``random`` for a seeded
Gaussian draw (``theta_scale``, ``theta_seed``). ``[cost] goal = -1`` means
the last cell. ``[ebm] data_file`` names a probability table (one value per
line) relative to the config file; it overrides ``data``.
"""

from __future__ import annotations

import configparser
import hashlib
import os
import re
from dataclasses import dataclass

import numpy as np

from .cost import grid_features, linear_cost, tabular_cost
from .ebm import EbmConfig, load_distribution_table
from .mdp import ConfigError, build_gridworld
from .rng import stream
from .training import TrainConfig

SCHEMA = {
    "world": {"width": (int, 3), "height": (int, 3), "start": (int, 0), "horizon": (int, 5)},
    "cost": {
        "features": (str, "goal"),
        "goal": (int, -1),
        "theta": (str, "-2, 1.5, 1, 0"),
        "theta_scale": (float, 1.0),
        "theta_seed": (int, 0),
    },
    "train": {
        "n_demos": (int, 500),
        "n_gen_samples": (int, 500),
        "iterations": (int, 200),
        "step_size": (float, 0.1),
        "disc_steps": (int, 1),
        "damping": (float, 1.0),
        "expectations": (str, "empirical"),
        "b_mode": (str, "joint"),
        "init_policy": (str, "model"),
        "seed": (int, 0),
    },
    "ebm": {
        "width": (int, 8),
        "height": (int, 8),
        "data": (str, "bimodal"),
        "data_file": (str, ""),
        "data_seed": (int, 0),
        "generator": (str, "full"),
        "iterations": (int, 2000),
        "step_size": (float, 1.0),
        "gen_step_size": (float, 1.0),
        "gen_steps": (int, 1),
        "n_samples": (int, 500),
        "expectations": (str, "empirical"),
        "b_mode": (str, "joint"),
        "init_scale": (float, 1.0),
        "seed": (int, 0),
    },
}
TRAJECTORY_SECTIONS = ("world", "cost", "train")


class ConfigFileError(ConfigError):
    def __init__(self, source: str, lineno: int | None, message: str):
        where = f"{source}:{lineno}" if lineno else source
        super().__init__(f"{where}: {message}")
        self.lineno = lineno


@dataclass
class RunConfig:
    """Typed values for every schema key of the sections in use."""

    family: str  # "trajectory" or "ebm"
    values: dict  # section -> key -> typed value
    source: str = "<config>"
    base_dir: str = "."

    def echo(self) -> str:
        """Canonical INI text; feeding it back reproduces the run."""
        lines = []
        for section, entries in self.values.items():
            lines.append(f"[{section}]")
            for key, value in entries.items():
                lines.append(f"{key} = {_format(value)}")
            lines.append("")
        return "\n".join(lines)

    def content_hash(self) -> str:
        return git_blob_hash(self.echo().encode())

    @property
    def seed(self) -> int:
        return self.values["ebm" if self.family == "ebm" else "train"]["seed"]


def git_blob_hash(data: bytes) -> str:
    """SHA-1 of the object git would store for this content."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _format(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _locate(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        header = re.match(r"\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return lineno
    return None


def parse_config(text: str, source: str = "<config>", seed: int | None = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigFileError(source, exc.lineno, "key outside any [section]") from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigFileError(source, exc.lineno, exc.message.split(": ", 1)[-1]) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigFileError(source, lineno, f"cannot parse {line.strip()!r}") from None

    sections = parser.sections()
    for section in sections:
        if section not in SCHEMA:
            raise ConfigFileError(source, _locate(text, section), f"unknown section [{section}]")
    if "ebm" in sections and any(s in sections for s in TRAJECTORY_SECTIONS):
        raise ConfigFileError(source, _locate(text, "ebm"), "[ebm] cannot be combined with trajectory sections")
    family = "ebm" if "ebm" in sections else "trajectory"
    used = ("ebm",) if family == "ebm" else TRAJECTORY_SECTIONS

    values = {}
    for section in used:
        values[section] = {}
        given = parser[section] if parser.has_section(section) else {}
        for key in given:
            if key not in SCHEMA[section]:
                raise ConfigFileError(source, _locate(text, section, key), f"unknown key {key!r} in [{section}]")
        for key, (kind, default) in SCHEMA[section].items():
            if key not in given:
                values[section][key] = default
                continue
            raw = given[key].strip()
            try:
                values[section][key] = kind(raw)
            except ValueError:
                raise ConfigFileError(
                    source, _locate(text, section, key), f"{key} must be {kind.__name__}, got {raw!r}"
                ) from None
    seed_section = "ebm" if family == "ebm" else "train"
    if seed is not None:
        values[seed_section]["seed"] = int(seed)
    base_dir = os.path.dirname(os.path.abspath(source)) if os.path.exists(source) else "."
    run = RunConfig(family, values, source, base_dir)
    # build once so value errors surface here with line numbers
    try:
        build_ebm_config(run) if family == "ebm" else build_train_config(run)
    except ConfigFileError:
        raise
    except ConfigError as exc:
        key = _guess_key(str(exc), values)
        raise ConfigFileError(source, _locate(text, *key) if key else None, str(exc)) from None
    return run


def _guess_key(message: str, values: dict):
    """The schema key named earliest in an error message."""
    hits = [
        (message.find(key), -len(key), section, key)
        for section, entries in values.items()
        for key in entries
        if re.search(rf"\b{re.escape(key)}\b", message)
    ]
    return min(hits)[2:] if hits else None


def load_config(path, seed: int | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(str(path), None, f"cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), seed)


def _true_cost(run: RunConfig):
    w, c = run.values["world"], run.values["cost"]
    mdp = build_gridworld(w["width"], w["height"], w["start"], w["horizon"])
    n_cells = mdp.n_states * mdp.n_actions
    if c["features"] == "onehot":
        n_params = n_cells
    elif c["features"] == "goal":
        n_params = 4
    else:
        raise ConfigError(f"features must be goal or onehot, got {c['features']!r}")
    if c["theta"].strip() == "random":
        theta = c["theta_scale"] * stream(c["theta_seed"], "config-theta").standard_normal(n_params)
    else:
        try:
            theta = np.array([float(v) for v in c["theta"].split(",")])
        except ValueError:
            raise ConfigError(f"theta must be a comma-separated vector or random, got {c['theta']!r}") from None
    if theta.size != n_params:
        raise ConfigError(f"theta has {theta.size} entries, {c['features']} features need {n_params}")
    if c["features"] == "onehot":
        return tabular_cost(theta, (mdp.n_states, mdp.n_actions))
    goal = c["goal"] if c["goal"] >= 0 else mdp.n_states + c["goal"]
    return linear_cost(theta, grid_features(mdp, "goal", goal=goal))


def build_train_config(run: RunConfig) -> TrainConfig:
    if run.family != "trajectory":
        raise ConfigError("this run needs [world]/[cost]/[train] sections, not [ebm]")
    w, t = run.values["world"], run.values["train"]
    try:
        true_cost = _true_cost(run)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return TrainConfig(
        width=w["width"],
        height=w["height"],
        start=w["start"],
        horizon=w["horizon"],
        true_cost=true_cost,
        **{k: t[k] for k in t},
    )


def build_ebm_config(run: RunConfig) -> EbmConfig:
    if run.family != "ebm":
        raise ConfigError("this run needs an [ebm] section")
    e = dict(run.values["ebm"])
    data_file = e.pop("data_file")
    table = None
    if data_file:
        path = data_file if os.path.isabs(data_file) else os.path.join(run.base_dir, data_file)
        table = load_distribution_table(path)
        e["data"] = "table"
    return EbmConfig(data_table=table, **e)
