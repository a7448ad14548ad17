"""Sampling of structure graphs and dependency graphs with a target op count.

A structure graph has four layers of named items (bottom-up, e.g. ingredients
-> products -> supermarkets -> districts); each edge between adjacent layers
is one *instance* parameter ("Owner's Target"). Every (item, lower-layer
category) pair is an *abstract* parameter: the item's total over that
category, computed hierarchically (sum of child counts, or sum of
count x subtotal when the category sits more than one layer down).

Instance parameters get sampled arithmetic recipes whose operands may be any
previously placed parameter, which keeps the full parameter graph acyclic by
construction. The difficulty knob `op` of a graph is the number of "="
reduction clauses in the canonical solution of its query (each parameter
charges its decomposed chain length).
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping

from .errors import (ConfigError, GenerationInfeasibleError,
                     ResampleInfeasibleError, UnknownParameterError)
from .semantics import MODULUS, AggSpec, evaluate

N_LAYERS = 4

INSTANCE = "instance"
ABSTRACT = "abstract"


# ----------------------------- vocabulary -----------------------------

def load_universes() -> dict:
    """Load the category/item vocabulary packs shipped with the package."""
    text = resources.files("gsmgen.data").joinpath("universes.json").read_text("utf-8")
    packs = json.loads(text)
    for name, pack in packs.items():
        if len(pack["categories"]) != N_LAYERS or len(pack["items"]) != N_LAYERS:
            raise ConfigError(f"universe {name!r} must define {N_LAYERS} layers")
        seen: set[str] = set(pack["categories"])
        for pool in pack["items"]:
            for item in pool:
                if item in seen:
                    raise ConfigError(f"universe {name!r} reuses the name {item!r}")
                seen.add(item)
    return packs


_UNIVERSES = load_universes()


def param_name(owner: str, target: str) -> str:
    return f"{owner}'s {target}"


# ----------------------------- configuration -----------------------------

@dataclass(frozen=True)
class GenConfig:
    """Generation knobs; presets `med` and `hard` mirror the dataset families."""

    preset: str = "med"
    universe: str | None = None      # None: pick a vocabulary pack by seed
    layers: int = N_LAYERS
    items_min: int = 2
    items_max: int = 4
    edge_prob: float = 0.5
    rule_kind_weights: Mapping[str, float] = field(
        default_factory=lambda: {"const": 1.0, "single": 1.2, "sum": 1.7, "diff": 0.8})
    sum_arity_weights: Mapping[str, float] = field(
        default_factory=lambda: {"2": 0.72, "3": 0.20, "4": 0.08})
    modifier_weights: Mapping[str, float] = field(
        default_factory=lambda: {"none": 0.55, "offset": 0.30, "scale": 0.15})
    attempt_budget: int = 10_000
    structure_budget: int = 64       # fresh structure graphs tried per problem
    op_train_max: int = 15
    op_eval: tuple[int, ...] = (20, 21, 22, 23)
    context_len: int = 768

    def validated(self) -> "GenConfig":
        if self.layers != N_LAYERS:
            raise ConfigError(f"exactly {N_LAYERS} layers are supported, got {self.layers}")
        if self.items_min < 1:
            raise ConfigError("every layer needs at least one item")
        if self.items_max < self.items_min:
            raise ConfigError("items_max must be >= items_min")
        universes = [self.universe] if self.universe else sorted(_UNIVERSES)
        for name in universes:
            if name not in _UNIVERSES:
                raise ConfigError(f"unknown universe {name!r}")
            smallest = min(len(pool) for pool in _UNIVERSES[name]["items"])
            if self.items_max > smallest:
                raise ConfigError(
                    f"vocabulary pack {name!r} has layers of {smallest} items; "
                    f"cannot request up to {self.items_max}")
        if not 0 <= self.edge_prob <= 1:
            raise ConfigError("edge_prob must lie in [0,1]")
        return self


PRESETS = {
    "med": GenConfig(),
    "hard": GenConfig(preset="hard", items_min=3, items_max=5, edge_prob=0.62,
                      rule_kind_weights={"const": 0.7, "single": 1.1, "sum": 2.0, "diff": 0.8},
                      op_train_max=21, op_eval=(28, 29, 30, 31, 32), context_len=1024),
}

EVAL_CONTEXT_LEN = 2048

_CONFIG_KEYS = ("preset", "universe", "layers", "items_min", "items_max", "edge_prob",
                "rule_kind_weights", "sum_arity_weights", "modifier_weights",
                "attempt_budget", "structure_budget", "op_train_max", "op_eval", "context_len")


def preset_config(name: str) -> GenConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (expected one of {sorted(PRESETS)})")
    return PRESETS[name]


def load_config(path: str) -> GenConfig:
    """Read a declarative JSON config; unspecified keys fall back to the preset."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = preset_config(raw.get("preset", "med"))
    if "op_eval" in raw:
        raw["op_eval"] = tuple(raw["op_eval"])
    return replace(base, **raw).validated()


# ----------------------------- graph types -----------------------------

@dataclass(frozen=True)
class StructureGraph:
    universe: str
    categories: tuple[str, ...]              # per layer, bottom-up
    layers: tuple[tuple[str, ...], ...]      # item names per layer, bottom-up
    edges: tuple[tuple[str, str], ...]       # (owner, target), owner one layer up

    def item_layer(self) -> dict[str, int]:
        return {item: i for i, layer in enumerate(self.layers) for item in layer}

    def children(self) -> dict[str, tuple[str, ...]]:
        """Targets of each owner, in the target layer's canonical order."""
        rank = {item: (i, j) for i, layer in enumerate(self.layers)
                for j, item in enumerate(layer)}
        out: dict[str, list[str]] = {}
        for owner, target in self.edges:
            out.setdefault(owner, []).append(target)
        return {o: tuple(sorted(ts, key=rank.__getitem__)) for o, ts in out.items()}

    def validate(self) -> None:
        if len(self.layers) != N_LAYERS:
            raise ValueError("a structure graph has exactly four layers")
        names = [item for layer in self.layers for item in layer]
        if len(names) != len(set(names)):
            raise ValueError("item names must be unique within one problem")
        layer_of = self.item_layer()
        for owner, target in self.edges:
            if layer_of[owner] != layer_of[target] + 1:
                raise ValueError(f"edge {owner!r}->{target!r} does not connect adjacent layers")


@dataclass(frozen=True)
class Parameter:
    name: str
    kind: str                    # "instance" | "abstract"
    owner: str
    target: str                  # item name (instance) or category name (abstract)
    recipe: AggSpec              # terms refer to other parameter names
    operands: tuple[str, ...]    # direct dependencies, deduplicated, recipe order
    value: int
    chain_len: int


@dataclass(frozen=True)
class DependencyGraph:
    structure: StructureGraph
    params: Mapping[str, Parameter]   # insertion order = canonical enumeration
    query: str
    op: int

    def parameter(self, name: str) -> Parameter:
        try:
            return self.params[name]
        except KeyError:
            raise UnknownParameterError(name) from None


def _operands_of(recipe: AggSpec) -> tuple[str, ...]:
    seen: list[str] = []
    for term in recipe.terms:
        refs = term if isinstance(term, tuple) else (term,)
        for ref in refs:
            if ref not in seen:
                seen.append(ref)
    return tuple(seen)


def necessary_set(g: DependencyGraph) -> frozenset[str]:
    """Minimal ancestor closure of the query: exactly what a shortest solution defines."""
    out: set[str] = set()
    stack = [g.query]
    g.parameter(g.query)
    while stack:
        name = stack.pop()
        if name in out:
            continue
        out.add(name)
        stack.extend(g.parameter(name).operands)
    return frozenset(out)


def can_next(g: DependencyGraph, computed: Iterable[str], a: str) -> bool:
    """True iff `a` is not defined yet and all its operands are."""
    param = g.parameter(a)
    done = computed if isinstance(computed, (set, frozenset)) else set(computed)
    return a not in done and all(o in done for o in param.operands)


def closure_op(g: DependencyGraph, name: str) -> int:
    """Op count of the shortest solution answering `name`."""
    memo: dict[str, frozenset[str]] = {}
    closure = _closure(dict(g.params), name, memo)
    return sum(g.params[p].chain_len for p in closure)


def _closure(params: Mapping[str, Parameter], name: str,
             memo: dict[str, frozenset[str]]) -> frozenset[str]:
    cached = memo.get(name)
    if cached is not None:
        return cached
    acc: set[str] = {name}
    for dep in params[name].operands:
        acc |= _closure(params, dep, memo)
    out = frozenset(acc)
    memo[name] = out
    return out


def graph_digest(g: DependencyGraph) -> str:
    """Stable content hash of structure, recipes and query."""
    recipes = {}
    for name, p in g.params.items():
        r = p.recipe
        recipes[name] = [r.const, [list(t) if isinstance(t, tuple) else t for t in r.terms],
                         r.combine, r.offset, r.scale]
    blob = json.dumps({
        "universe": g.structure.universe,
        "categories": g.structure.categories,
        "layers": g.structure.layers,
        "edges": g.structure.edges,
        "recipes": recipes,
        "query": g.query,
        "op": g.op,
    }, sort_keys=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# ----------------------------- structure sampling -----------------------------

def sample_structure_graph(config: GenConfig, seed: int) -> StructureGraph:
    """Deterministic for fixed (config, seed)."""
    return _sample_structure(config, str(seed))


def _sample_structure(config: GenConfig, key: str) -> StructureGraph:
    config = config.validated()
    rng = random.Random(f"sg:{key}")
    universe = config.universe or rng.choice(sorted(_UNIVERSES))
    pack = _UNIVERSES[universe]
    layers = tuple(tuple(rng.sample(pool, rng.randint(config.items_min, config.items_max)))
                   for pool in pack["items"])
    edges: set[tuple[str, str]] = set()
    for level in range(1, N_LAYERS):
        for owner in layers[level]:
            for target in layers[level - 1]:
                if rng.random() < config.edge_prob:
                    edges.add((owner, target))
        # connectivity repair: every owner needs a child, every target a parent
        for owner in layers[level]:
            if not any(e[0] == owner for e in edges):
                edges.add((owner, rng.choice(layers[level - 1])))
        for target in layers[level - 1]:
            if not any(e[1] == target for e in edges):
                edges.add((rng.choice(layers[level]), target))
    rank = {item: (i, j) for i, layer in enumerate(layers) for j, item in enumerate(layer)}
    ordered = tuple(sorted(edges, key=lambda e: (rank[e[0]], rank[e[1]])))
    sg = StructureGraph(universe, tuple(pack["categories"]), layers, ordered)
    sg.validate()
    return sg


# ----------------------------- dependency sampling -----------------------------

def _abstract_catalog(sg: StructureGraph) -> tuple[list[tuple[str, str, int]], dict[str, frozenset[str]]]:
    """All abstract parameters as (owner, category, cat_layer) + instance-edge support sets.

    A total exists only when every child branch reaches the category's layer;
    generated structures guarantee this via connectivity repair, but graphs
    rebuilt from statement text may omit branches.
    """
    layer_of = sg.item_layer()
    children = sg.children()
    entries: list[tuple[str, str, int]] = []
    support: dict[str, frozenset[str]] = {}

    def exists(item: str, cat_layer: int) -> bool:
        kids = children.get(item, ())
        if not kids:
            return False
        if layer_of[item] - 1 == cat_layer:
            return True
        return all(exists(ch, cat_layer) for ch in kids)

    def support_of(item: str, cat_layer: int) -> frozenset[str]:
        name = param_name(item, sg.categories[cat_layer])
        cached = support.get(name)
        if cached is not None:
            return cached
        acc: set[str] = set()
        for child in children.get(item, ()):
            acc.add(param_name(item, child))
            if layer_of[child] > cat_layer:
                acc |= support_of(child, cat_layer)
        out = frozenset(acc)
        support[name] = out
        return out

    for level in range(1, N_LAYERS):
        for item in sg.layers[level]:
            for cat_layer in range(level - 1, -1, -1):
                if not exists(item, cat_layer):
                    continue
                entries.append((item, sg.categories[cat_layer], cat_layer))
                support_of(item, cat_layer)
    return entries, support


def _abstract_recipe(sg: StructureGraph, owner: str, cat_layer: int) -> AggSpec:
    layer_of = sg.item_layer()
    kids = sg.children()[owner]
    if layer_of[owner] - 1 == cat_layer:
        terms: tuple = tuple(param_name(owner, ch) for ch in kids)
    else:
        cat = sg.categories[cat_layer]
        terms = tuple((param_name(owner, ch), param_name(ch, cat)) for ch in kids)
    return AggSpec(terms=terms)


def _weighted_choice(rng: random.Random, weights: Mapping[str, float]) -> str:
    keys = sorted(weights)
    picks = rng.choices(keys, weights=[weights[k] for k in keys], k=1)
    return picks[0]


def _sample_rule(rng: random.Random, config: GenConfig, pool: list[str]) -> AggSpec:
    weights = dict(config.rule_kind_weights)
    if not pool:
        weights = {"const": 1.0}
    elif len(pool) < 2:
        weights.pop("sum", None)
        weights.pop("diff", None)
    kind = _weighted_choice(rng, weights)
    if kind == "const":
        return AggSpec(const=rng.randrange(MODULUS))
    if kind == "single":
        terms: tuple = (rng.choice(pool),)
        combine = "+"
    elif kind == "diff":
        terms = tuple(rng.sample(pool, 2))
        combine = "-"
    else:
        arity_w = {k: w for k, w in config.sum_arity_weights.items() if int(k) <= len(pool)}
        arity = int(_weighted_choice(rng, arity_w or {"2": 1.0}))
        terms = tuple(rng.sample(pool, arity))
        combine = "+"
    modifier = _weighted_choice(rng, config.modifier_weights)
    if modifier == "scale" and kind == "diff":
        modifier = "none"  # scaled differences are not part of the sentence grammar
    offset = rng.randint(1, MODULUS - 1) if modifier == "offset" else None
    scale = rng.randint(2, MODULUS - 1) if modifier == "scale" else None
    return AggSpec(terms=terms, combine=combine, offset=offset, scale=scale)


def _parameters(sg: StructureGraph, inst_recipes: dict[str, AggSpec],
                abstracts: list[tuple[str, str, int]]) -> dict[str, Parameter]:
    """Parameter table with recipes and chain lengths; values not yet evaluated."""
    order: list[tuple[str, Parameter]] = []
    for owner, target in sg.edges:
        name = param_name(owner, target)
        recipe = inst_recipes[name]
        order.append((name, Parameter(name, INSTANCE, owner, target, recipe,
                                      _operands_of(recipe), -1, recipe.chain_len())))
    for owner, cat, cat_layer in abstracts:
        name = param_name(owner, cat)
        recipe = _abstract_recipe(sg, owner, cat_layer)
        order.append((name, Parameter(name, ABSTRACT, owner, cat, recipe,
                                      _operands_of(recipe), -1, recipe.chain_len())))
    return dict(order)


def _with_values(params: dict[str, Parameter]) -> dict[str, Parameter]:
    values: dict[str, int] = {}
    visiting: set[str] = set()

    def value_of(name: str) -> int:
        if name in values:
            return values[name]
        if name in visiting:
            raise ValueError(f"parameter dependencies form a cycle at {name!r}")
        visiting.add(name)
        v = evaluate(params[name].recipe, _LazyEnv(value_of))
        visiting.discard(name)
        values[name] = v
        return v

    for name in params:
        value_of(name)
    return {name: replace(p, value=values[name]) for name, p in params.items()}


def _assemble(sg: StructureGraph, inst_recipes: dict[str, AggSpec],
              abstracts: list[tuple[str, str, int]]) -> dict[str, Parameter]:
    return _with_values(_parameters(sg, inst_recipes, abstracts))


class _LazyEnv(dict):
    """Mapping view that computes parameter values on demand."""

    def __init__(self, fn):
        super().__init__()
        self._fn = fn

    def __contains__(self, key) -> bool:  # all parameters resolve
        return True

    def __missing__(self, key):
        return self._fn(key)


def sample_dependency_graph(sg: StructureGraph, op_target: int, seed: int,
                            config: GenConfig | None = None) -> DependencyGraph:
    """Rejection-sample instance recipes until some query hits `op_target`.

    Raises GenerationInfeasibleError once the attempt budget runs out; the
    caller may widen the config (more items, denser rules) and retry.
    """
    if op_target < 1:
        raise ValueError("op_target must be >= 1")
    config = (config or preset_config("med")).validated()
    abstracts, support = _abstract_catalog(sg)
    inst_names = [param_name(o, t) for o, t in sg.edges]
    abstract_names = [param_name(o, c) for o, c, _ in abstracts]

    for attempt in range(config.attempt_budget):
        rng = random.Random(f"dep:{seed}:{attempt}")
        recipes: dict[str, AggSpec] = {}
        placed: list[str] = []
        placed_set: set[str] = set()
        open_abstracts = list(abstract_names)
        closed: list[str] = []
        for name in _shuffled(rng, inst_names):
            pool = placed + closed
            recipes[name] = _sample_rule(rng, config, pool)
            placed.append(name)
            placed_set.add(name)
            still_open = []
            for a in open_abstracts:
                if support[a] <= placed_set:
                    closed.append(a)
                else:
                    still_open.append(a)
            open_abstracts = still_open

        params = _parameters(sg, recipes, abstracts)
        upper = sum(p.chain_len for p in params.values())
        if op_target > upper:
            continue
        memo: dict[str, frozenset[str]] = {}
        matches = []
        for name, p in params.items():
            if p.kind == INSTANCE and p.recipe.const is not None:
                continue  # querying a bare constant makes a degenerate problem
            cl = _closure(params, name, memo)
            if sum(params[q].chain_len for q in cl) == op_target:
                matches.append(name)
        if matches:
            query = rng.choice(matches)
            return DependencyGraph(sg, _with_values(params), query, op_target)
    raise GenerationInfeasibleError(
        f"no query with op={op_target} found in {config.attempt_budget} attempts")


def _shuffled(rng: random.Random, items: list[str]) -> list[str]:
    out = list(items)
    rng.shuffle(out)
    return out


def sample_problem_graph(config: GenConfig, op_target: int, seed: int) -> DependencyGraph:
    """Structure + dependency sampling with fresh structures when rules can't reach op_target."""
    config = config.validated()
    last: GenerationInfeasibleError | None = None
    for s in range(config.structure_budget):
        sg = _sample_structure(config, f"{seed}:{s}")
        per_structure = replace(config, attempt_budget=max(1, config.attempt_budget // config.structure_budget))
        try:
            return sample_dependency_graph(sg, op_target, seed, per_structure)
        except GenerationInfeasibleError as exc:
            last = exc
    raise GenerationInfeasibleError(
        f"op={op_target} unreachable after {config.structure_budget} structures") from last


def reask(g: DependencyGraph, seed: int) -> DependencyGraph:
    """Resample the query uniformly among the other parameters; op is recomputed."""
    rng = random.Random(f"reask:{seed}")
    candidates = [name for name in g.params if name != g.query]
    if not candidates:
        raise ResampleInfeasibleError("graph has no alternative query")
    query = rng.choice(candidates)
    return replace(g, query=query, op=closure_op(g, query))
