"""Dictionary reduction through the graph of the thresholded inclusion matrix.

Row ``i`` / column ``j`` of the inclusion matrix is read as the edge
``i -> j``: observable ``i`` is used in the regression for observable ``j``.
An observable is kept if it is an output or an ancestor of an output.
Control-input rows never enter the graph and are always kept.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dictionary import Dictionary
from .exceptions import ConfigError


@dataclass(frozen=True)
class InclusionGraph:
    adjacency: np.ndarray
    control_rows: np.ndarray
    epsilon: float

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def successors(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.adjacency]

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]


@dataclass(frozen=True)
class Condensation:
    """Strongly connected components (reverse topological order) and the DAG between them."""

    components: list[list[int]]
    dag_edges: list[tuple[int, int]]
    node_to_component: list[int]


def threshold(Gamma, epsilon: float) -> InclusionGraph:
    """Binarise ``Gamma`` (``entry >= epsilon`` becomes an edge) and split off the control rows."""
    if not 0 < epsilon < 1:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    G = np.asarray(Gamma, dtype=float)
    if G.ndim != 2 or G.shape[0] < G.shape[1]:
        raise ConfigError(f"Gamma must have shape (L + l, L), got {G.shape}")
    if np.any((G < 0) | (G > 1)) or not np.all(np.isfinite(G)):
        raise ConfigError("Gamma entries must lie in [0, 1]")
    L = G.shape[1]
    mask = G >= epsilon
    return InclusionGraph(mask[:L].copy(), mask[L:].copy(), float(epsilon))


def _tarjan(succ: list[np.ndarray]) -> list[list[int]]:
    """Iterative Tarjan; components come out sinks first."""
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, pos = work[-1]
            nbrs = succ[v]
            if pos < len(nbrs):
                work[-1] = (v, pos + 1)
                w = int(nbrs[pos])
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def scc(g: InclusionGraph) -> Condensation:
    succ = g.successors()
    comps = _tarjan(succ)
    node_to = [0] * g.n_nodes
    for c, members in enumerate(comps):
        for v in members:
            node_to[v] = c
    edges = set()
    for v, nbrs in enumerate(succ):
        cv = node_to[v]
        for w in nbrs:
            cw = node_to[int(w)]
            if cw != cv:
                edges.add((cv, cw))
    return Condensation(comps, sorted(edges), node_to)


def ancestors(c: Condensation, output_nodes: Iterable[int]) -> set[int]:
    """All nodes of components that reach an output component, outputs included."""
    outs = {int(o) for o in output_nodes}
    if not outs:
        raise ConfigError("output node set must not be empty")
    n = len(c.node_to_component)
    if not all(0 <= o < n for o in outs):
        raise ConfigError("output node out of range")
    preds: list[list[int]] = [[] for _ in c.components]
    for a, b in c.dag_edges:
        preds[b].append(a)
    seen = {c.node_to_component[o] for o in outs}
    frontier = list(seen)
    while frontier:
        comp = frontier.pop()
        for p in preds[comp]:
            if p not in seen:
                seen.add(p)
                frontier.append(p)
    return {v for comp in seen for v in c.components[comp]}


def reduced_indices(Gamma, epsilon: float, output_nodes: Iterable[int]) -> list[int]:
    """Sorted observable indices kept by the reduction."""
    outs = list(output_nodes)
    keep = ancestors(scc(threshold(Gamma, epsilon)), outs) | set(outs)
    return sorted(keep)


def reduce_dictionary(dic: Dictionary, Gamma, epsilon: float) -> tuple[Dictionary, dict[int, int]]:
    """Keep outputs and their ancestors; returns the reduced dictionary and the old->new map."""
    G = np.asarray(Gamma, dtype=float)
    if G.shape != (len(dic) + dic.n_inputs, len(dic)):
        raise ConfigError(f"Gamma shape {G.shape} does not match dictionary of size {len(dic)} "
                          f"with {dic.n_inputs} inputs")
    return dic.subset(reduced_indices(G, epsilon, dic.output_indices))


def design_columns(index_map: dict[int, int], L: int, n_inputs: int) -> list[int]:
    """Columns of the full design matrix that survive: kept observables then every input."""
    return sorted(index_map) + [L + j for j in range(n_inputs)]


def export_json(Gamma, epsilon: float, output_nodes, labels=None) -> str:
    g = threshold(Gamma, epsilon)
    cond = scc(g)
    keep = reduced_indices(Gamma, epsilon, output_nodes)
    return json.dumps({
        "epsilon": epsilon,
        "Gamma": np.asarray(Gamma, dtype=float).tolist(),
        "Gamma_eps": np.vstack([g.adjacency, g.control_rows]).astype(int).tolist(),
        "components": cond.components,
        "dag_edges": [list(e) for e in cond.dag_edges],
        "kept": keep,
        "index_map": {str(old): new for new, old in enumerate(keep)},
        "labels": list(labels) if labels is not None else None,
    }, indent=2)


def export_edgelist(g: InclusionGraph, labels=None) -> str:
    """One ``source target`` pair per line (control inputs as ``u<j>``)."""
    name = (lambda i: str(labels[i])) if labels is not None else str
    lines = [f"{name(i)} {name(j)}" for i, j in g.edges()]
    for k, j in zip(*np.nonzero(g.control_rows)):
        lines.append(f"u{int(k)} {name(int(j))}")
    return "\n".join(lines) + ("\n" if lines else "")


class DictionaryReducer(TransformerMixin, BaseEstimator):
    """Learn the kept observables from an inclusion matrix, then select design-matrix columns.

    ``fit(Gamma, dictionary=...)`` stores ``dictionary_``, ``index_map_`` and
    ``columns_``; ``transform(Phi)`` returns the reduced design matrix.
    """

    def __init__(self, epsilon=0.1):
        self.epsilon = epsilon

    def fit(self, Gamma, y=None, dictionary: Dictionary | None = None):
        if dictionary is None:
            raise ConfigError("DictionaryReducer.fit needs the dictionary")
        self.dictionary_, self.index_map_ = reduce_dictionary(dictionary, Gamma, self.epsilon)
        self.columns_ = design_columns(self.index_map_, len(dictionary), dictionary.n_inputs)
        return self

    def transform(self, X):
        check_is_fitted(self, "columns_")
        return np.asarray(X)[:, self.columns_]
