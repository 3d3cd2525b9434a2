"""TOML experiment recipes.

A recipe is a TOML document::

    algorithm = "sdcc"          # ddcc | sdcc | wmsr | plain
    horizon = 200
    seed = 1

    [graph]                     # kind = "erdos_renyi" (n, p_edge, seed?)
    n = 10                      #     or "edges" (edges = [[0, 1], ...] or edges_file)
    p_edge = 0.7

    [weights]                   # scheme = "perron" (gamma?) | "metropolis"
    [initial]                   # low/high, or values = [...]
    [protocol]                  # alpha, rho, delta, link_reliability
    [[misbehaving]]             # node, role, channel, target, kind + law parameters
    [monte_carlo]               # runs
    [msr]                       # trim
    [output]                    # dir, trace
    [analysis]                  # wasserstein, bounds
    [compare]                   # algorithms = [...]

Relative ``edges_file`` paths resolve against the recipe's directory.
Bundled recipes can be loaded by bare name (``fig1_ddcc`` ...).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .adversary import DeterministicErrorModel, Misbehavior, StochasticErrorModel, Window, gmm_from_triples
from .engine import ConfigError, GraphSpec, RunConfig

RECIPES = ("fig1_ddcc", "fig3_sdcc", "table2_batch", "fig4_wasserstein")


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig
    out_dir: Path | None = None
    trace: bool = True
    wasserstein: bool = True
    bounds: bool = True
    compare: tuple[str, ...] = ()
    source: str = "<memory>"

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, run=replace(self.run, seed=seed))


class _Section:
    """Dict wrapper that type-checks reads and rejects unknown keys."""

    def __init__(self, name: str, data: Any):
        if not isinstance(data, dict):
            raise ConfigError(f"[{name}] must be a table")
        self.name = name
        self.data = data
        self.used: set[str] = set()

    def get(self, key: str, kind, default=None, required: bool = False):
        self.used.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"[{self.name}] missing required key {key!r}")
            return default
        v = self.data[key]
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if kind is not None and (not isinstance(v, kind) or (kind in (int, float) and isinstance(v, bool))):
            raise ConfigError(f"[{self.name}] {key!r} has wrong type {type(v).__name__}")
        return v

    def finish(self) -> None:
        extra = set(self.data) - self.used
        if extra:
            raise ConfigError(f"[{self.name}] unknown keys: {sorted(extra)}")


def _float_list(sec: _Section, key: str):
    v = sec.get(key, list)
    if v is None:
        return None
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{sec.name}] {key!r} must be a list of numbers") from exc


def _window(sec: _Section) -> Window:
    w = sec.get("window", list)
    if w is None:
        return Window()
    if not 1 <= len(w) <= 2 or not all(isinstance(x, int) for x in w):
        raise ConfigError(f"[{sec.name}] window must be [start] or [start, end]")
    try:
        return Window(w[0], w[1] if len(w) == 2 else None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _misbehavior(idx: int, raw: Any) -> Misbehavior:
    sec = _Section(f"misbehaving.{idx}", raw)
    node = sec.get("node", int, required=True)
    role = sec.get("role", str, "malicious")
    channel = sec.get("channel", str, "state")
    target = sec.get("target", int)
    kind = sec.get("kind", str, required=True)
    window = _window(sec)
    try:
        if kind == "stochastic":
            comps = sec.get("components", list, required=True)
            model = StochasticErrorModel(sec.get("theta", float, 1.0), gmm_from_triples(comps), window)
        else:
            table = sec.get("table", dict, {})
            model = DeterministicErrorModel(
                kind,
                amplitude=sec.get("amplitude", float, 0.0),
                frequency=sec.get("frequency", float, 1.0),
                ratio=sec.get("ratio", float, 1.0),
                table={int(k): float(v) for k, v in table.items()},
                window=window,
            )
        out = Misbehavior(node, model, role, channel, target)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[misbehaving.{idx}] {exc}") from exc
    sec.finish()
    return out


def parse_config(data: dict, base_dir: Path | None = None, source: str = "<memory>") -> ExperimentConfig:
    known = {"algorithm", "horizon", "seed", "graph", "weights", "initial", "protocol", "misbehaving",
             "monte_carlo", "msr", "output", "analysis", "compare"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    top = _Section("top", {k: data[k] for k in ("algorithm", "horizon", "seed") if k in data})
    algorithm = top.get("algorithm", str, "ddcc")
    horizon = top.get("horizon", int)
    seed = top.get("seed", int, 0)

    g = _Section("graph", data.get("graph", {}))
    kind = g.get("kind", str, "erdos_renyi")
    edges = g.get("edges", list, [])
    edges_file = g.get("edges_file", str)
    if edges_file is not None:
        path = Path(edges_file)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"edge list file not found: {path}")
        edges_file = str(path)
    try:
        edge_tuple = tuple((int(a), int(b)) for a, b in edges)
    except (TypeError, ValueError) as exc:
        raise ConfigError("[graph] edges must be [[i, j], ...]") from exc
    graph = GraphSpec(
        kind=kind,
        n=g.get("n", int, 10),
        p_edge=g.get("p_edge", float, 0.7),
        seed=g.get("seed", int),
        edges=edge_tuple,
        edges_file=edges_file,
    )
    g.finish()

    w = _Section("weights", data.get("weights", {}))
    scheme = w.get("scheme", str, "perron")
    gamma = w.get("gamma", float)
    w.finish()

    ini = _Section("initial", data.get("initial", {}))
    values = _float_list(ini, "values")
    low_high = (ini.get("low", float, 0.0), ini.get("high", float, 2.0))
    ini.finish()
    if low_high[1] < low_high[0]:
        raise ConfigError("[initial] high must be >= low")

    pr = _Section("protocol", data.get("protocol", {}))
    alpha = pr.get("alpha", float, 5.0)
    rho = pr.get("rho", float, 0.9)
    delta = pr.get("delta", float)
    p = pr.get("link_reliability", float, 1.0)
    pr.finish()

    raw_mis = data.get("misbehaving", [])
    if not isinstance(raw_mis, list):
        raise ConfigError("misbehaving must be an array of tables ([[misbehaving]])")
    mis = tuple(_misbehavior(i, r) for i, r in enumerate(raw_mis))

    mc = _Section("monte_carlo", data.get("monte_carlo", {}))
    runs = mc.get("runs", int, 1)
    mc.finish()
    msr = _Section("msr", data.get("msr", {}))
    trim = msr.get("trim", int, 1)
    msr.finish()
    out = _Section("output", data.get("output", {}))
    out_dir = out.get("dir", str)
    trace = out.get("trace", bool, True)
    out.finish()
    an = _Section("analysis", data.get("analysis", {}))
    wass = an.get("wasserstein", bool, True)
    bounds = an.get("bounds", bool, True)
    an.finish()
    cmp_ = _Section("compare", data.get("compare", {}))
    algos = cmp_.get("algorithms", list, [])
    cmp_.finish()
    if not all(isinstance(a, str) for a in algos):
        raise ConfigError("[compare] algorithms must be strings")
    top.finish()

    run = RunConfig(
        graph=graph,
        weight_scheme=scheme,
        gamma=gamma,
        initial_values=values,
        initial_range=low_high,
        misbehaving=mis,
        algorithm=algorithm,
        alpha=alpha,
        rho=rho,
        delta=delta,
        link_reliability=p,
        horizon=horizon,
        seed=seed,
        runs=runs,
        msr_trim=trim,
    )
    if out_dir is not None and base_dir is not None and not Path(out_dir).is_absolute():
        out_dir = str(base_dir / out_dir)
    return ExperimentConfig(
        run=run,
        out_dir=Path(out_dir) if out_dir else None,
        trace=trace,
        wasserstein=wass,
        bounds=bounds,
        compare=tuple(algos),
        source=source,
    )


def loads(text: str, base_dir: Path | None = None, source: str = "<memory>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return parse_config(data, base_dir, source)


def recipe_text(name: str) -> str:
    if name not in RECIPES:
        raise ConfigError(f"unknown recipe {name!r}; bundled: {', '.join(RECIPES)}")
    return resources.files(__package__).joinpath("recipes", f"{name}.toml").read_text()


def load(path_or_name: str | Path) -> ExperimentConfig:
    """Load a recipe from a file path, or a bundled recipe by name."""
    p = Path(path_or_name)
    if p.is_file():
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {p}: {exc}") from exc
        return loads(text, p.parent, str(p))
    if str(path_or_name) in RECIPES:
        # bundled recipes write into the caller's directory, not the package
        return loads(recipe_text(str(path_or_name)), None, str(path_or_name))
    raise ConfigError(f"config not found: {path_or_name}")
