import logging
from dataclasses import dataclass, field

import networkx as nx

from alphaforge.errors import (ConfigError, DataError, FactorCycleError, FactorReferenceError)
from alphaforge.expr import Expr, factor_refs

logger = logging.getLogger(__name__)

BOTTOM_REVERSAL = "BottomReversal"
VOLUME_PRICE_DIVERGENCE = "VolumePriceDivergence"
MOMENTUM_HERDING = "MomentumHerding"
UNCLASSIFIED = "Unclassified"
STRUCTURE_TAGS = (BOTTOM_REVERSAL, VOLUME_PRICE_DIVERGENCE, MOMENTUM_HERDING, UNCLASSIFIED)

# short names used when discussing the attribution heatmap
FACTOR_ALIASES = {
    "macd_rsi_product": "alpha_macd_rsi_product",
    "momentum5_rank": "alpha_momentum_5d_min_rank",
    "volume_above_adv20": "alpha_volume_above_adv20",
    "volatility_10d": "alpha_volatility_10d_rank_neg",
    "macd_times_lowdev": "alpha_macd_times_lowdev",
    "vwapdev_over_macd": "alpha_vwapdev_over_macd",
}


def alias_of(factor_name):
    for alias, name in FACTOR_ALIASES.items():
        if name == factor_name:
            return alias
    return ""


def resolve_factor_name(name):
    return FACTOR_ALIASES.get(name, name)


@dataclass(frozen=True)
class FactorDefinition:
    name: str
    expression: Expr
    structure_tag: str = UNCLASSIFIED
    line: int = field(default=0, compare=False)
    origin: str = field(default="<string>", compare=False)

    def to_source(self):
        tag = "" if self.structure_tag == UNCLASSIFIED else f" @{self.structure_tag}"
        return f"{self.name}{tag} = {self.expression.to_source()}"


class FactorSet:
    """
    Ordered collection of factor definitions plus their dependency graph

    File order is the model input order and the heatmap layout order.
    Construction rejects duplicate names, unresolved references and cycles.
    """

    def __init__(self, definitions):
        self.definitions = list(definitions)
        self._by_name = {}
        for definition in self.definitions:
            if definition.name in self._by_name:
                raise DataError(f"duplicate factor name {definition.name} at line {definition.line}")
            self._by_name[definition.name] = definition

        self.graph = nx.DiGraph()
        for definition in self.definitions:
            self.graph.add_node(definition.name)
        for definition in self.definitions:
            for ref in factor_refs(definition.expression):
                if ref not in self._by_name:
                    raise FactorReferenceError(
                        f"factor {definition.name} (line {definition.line}) references undefined factor {ref}")
                # edge points from dependency to dependent
                self.graph.add_edge(ref, definition.name)

        try:
            cycle = nx.find_cycle(self.graph)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle:
            raise FactorCycleError([edge[0] for edge in cycle])

    @property
    def names(self):
        return [d.name for d in self.definitions]

    def __len__(self):
        return len(self.definitions)

    def __iter__(self):
        return iter(self.definitions)

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name):
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown factor {name}") from None

    def index(self, name):
        return self.names.index(name)

    def dependencies(self, name):
        """Every factor `name` needs, directly or transitively"""
        return nx.ancestors(self.graph, name)

    def dependency_order(self):
        """Topological order that falls back to file order between independent factors"""
        position = {name: i for i, name in enumerate(self.names)}
        return list(nx.lexicographical_topological_sort(self.graph, key=position.__getitem__))

    def resolve_selection(self, names):
        """Map a user list (aliases allowed) onto factor names, keeping the given order"""
        selected = []
        for name in names:
            resolved = resolve_factor_name(name)
            if resolved not in self._by_name:
                raise ConfigError(f"factors include names unknown factor {name}")
            if resolved not in selected:
                selected.append(resolved)
        return selected

    def tags(self):
        return {d.name: d.structure_tag for d in self.definitions}

    def to_source(self):
        return "\n".join(d.to_source() for d in self.definitions) + "\n"

    def __repr__(self):
        return f"FactorSet({len(self)} factors)"
