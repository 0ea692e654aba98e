"""Hierarchical concept tree: loading, resolution, rank back-propagation,
and supercategory rollup.

The tree is immutable after load. A reload builds a fresh ``ConceptTree``
and callers swap the reference atomically; all query methods are therefore
safe for unrestricted concurrent reads.
"""

from __future__ import annotations

import enum
import urllib.parse
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union


class TaxonomyError(Exception):
    """Structural problem in a concept tree or its source file."""


class ConceptNotFound(TaxonomyError):
    """Lookup by name/alias found nothing (distinct from malformed input)."""

    def __init__(self, name: str):
        super().__init__(f"concept not found: {name!r}")
        self.name = name


class NoRankedAncestor(TaxonomyError):
    """A node has no ranked ancestor-or-self, so no rank label exists."""

    def __init__(self, name: str):
        super().__init__(f"node {name!r} has no ranked ancestor-or-self")
        self.name = name


class SupercategoryConfigError(TaxonomyError):
    """Supercategory map is invalid or was never validated against the tree."""


class Rank(enum.Enum):
    """Taxonomic ranks, coarse to fine, plus ``unranked`` for non-biological
    concepts (equipment, debris, geological features).

    Biological ranks are totally ordered; ``unranked`` is incomparable and is
    never matched by rank queries.
    """

    KINGDOM = "kingdom"
    PHYLUM = "phylum"
    CLASS = "class"
    ORDER = "order"
    FAMILY = "family"
    GENUS = "genus"
    SPECIES = "species"
    UNRANKED = "unranked"

    @property
    def is_biological(self) -> bool:
        return self is not Rank.UNRANKED

    @property
    def depth(self) -> int:
        """Position in the biological order, 0 = kingdom .. 6 = species."""
        if not self.is_biological:
            raise ValueError("unranked has no position in the rank order")
        return _BIOLOGICAL.index(self)

    def coarser_than(self, other: "Rank") -> bool:
        """Strict order; both ranks must be biological."""
        return self.depth < other.depth

    @classmethod
    def parse(cls, text: str) -> "Rank":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise TaxonomyError(f"unknown rank: {text!r}") from None


_BIOLOGICAL = [
    Rank.KINGDOM, Rank.PHYLUM, Rank.CLASS, Rank.ORDER,
    Rank.FAMILY, Rank.GENUS, Rank.SPECIES,
]

BIOLOGICAL_RANKS = tuple(_BIOLOGICAL)


@dataclass(frozen=True, eq=False)
class TaxonomyNode:
    """One concept in the tree. Identity is by object; names are unique
    case-insensitively across the tree (aliases included)."""

    name: str
    rank: Rank
    parent: Optional["TaxonomyNode"] = None
    aliases: frozenset[str] = frozenset()
    children: tuple["TaxonomyNode", ...] = ()

    def ancestors_or_self(self) -> Iterator["TaxonomyNode"]:
        """Yield self, then parents up to the root."""
        node: Optional[TaxonomyNode] = self
        while node is not None:
            yield node
            node = node.parent

    def __repr__(self) -> str:  # keep tracebacks readable
        return f"TaxonomyNode({self.name!r}, {self.rank.value})"


class ConceptTree:
    """Validated, immutable concept hierarchy with case-insensitive lookup."""

    def __init__(self, nodes: Sequence[TaxonomyNode], root: TaxonomyNode):
        self._nodes = {n.name: n for n in nodes}
        self.root = root
        self._index: dict[str, TaxonomyNode] = {}
        for n in nodes:
            self._index[n.name.casefold()] = n
            for alias in n.aliases:
                self._index[alias.casefold()] = n

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self) -> Iterator[TaxonomyNode]:
        return iter(self._nodes.values())

    def __contains__(self, node: TaxonomyNode) -> bool:
        return self._nodes.get(node.name) is node

    def resolve(self, name: str) -> TaxonomyNode:
        """Exact or alias match, case-insensitive. No fuzzy matching:
        misspellings must fail loudly."""
        if not isinstance(name, str) or not name.strip():
            raise TaxonomyError(f"malformed concept name: {name!r}")
        node = self._index.get(name.strip().casefold())
        if node is None:
            raise ConceptNotFound(name)
        return node

    def _require_member(self, node: TaxonomyNode) -> TaxonomyNode:
        if node not in self:
            raise TaxonomyError(f"node {node.name!r} is not part of this tree")
        return node

    def descendants(self, node: TaxonomyNode) -> set[TaxonomyNode]:
        """Transitive closure of children, self-inclusive."""
        self._require_member(node)
        out: set[TaxonomyNode] = set()
        queue = deque([node])
        while queue:
            cur = queue.popleft()
            out.add(cur)
            queue.extend(cur.children)
        return out

    def descendant_names(self, node: TaxonomyNode) -> set[str]:
        return {n.name for n in self.descendants(node)}

    def rank_label(self, node: TaxonomyNode, target: Rank) -> str:
        """Back-propagate a label to ``target`` rank.

        Returns the name of the ancestor-or-self holding exactly ``target``;
        when the rank is absent on the path (or the node is already coarser
        than ``target``) the deepest ranked ancestor-or-self that is coarser
        than or equal to ``target`` is used instead. In the degenerate case
        where every ranked ancestor is finer than ``target`` (tree rooted
        below the target rank) the coarsest available name is returned.
        """
        if not target.is_biological:
            raise ValueError("rank_label target must be a biological rank")
        self._require_member(node)
        chain = list(node.ancestors_or_self())  # deepest first
        ranked = [n for n in chain if n.rank.is_biological]
        if not ranked:
            raise NoRankedAncestor(node.name)
        for n in ranked:
            if n.rank is target:
                return n.name
        for n in ranked:
            if n.rank.depth <= target.depth:
                return n.name
        return ranked[-1].name

    def validate(self) -> None:
        """Re-check all structural invariants (used by tests and loaders)."""
        _validate_tree(list(self._nodes.values()), self.root)


def _validate_tree(nodes: list[TaxonomyNode], root: TaxonomyNode) -> None:
    roots = [n for n in nodes if n.parent is None]
    if len(roots) != 1 or roots[0] is not root:
        names = ", ".join(sorted(n.name for n in roots))
        raise TaxonomyError(f"tree must have exactly one root, found: {names}")

    # Reachability doubles as the acyclicity check: with unique parents,
    # any cycle is unreachable from the root.
    seen: set[int] = set()
    queue = deque([root])
    while queue:
        cur = queue.popleft()
        seen.add(id(cur))
        queue.extend(cur.children)
    if len(seen) != len(nodes):
        stranded = next(n for n in nodes if id(n) not in seen)
        raise TaxonomyError(
            f"cycle detected: node {stranded.name!r} is not reachable from the root"
        )

    taken: dict[str, str] = {}
    for n in nodes:
        for label in (n.name, *n.aliases):
            key = label.casefold()
            if key in taken:
                raise TaxonomyError(
                    f"duplicate name: {label!r} used by both "
                    f"{taken[key]!r} and {n.name!r}"
                )
            taken[key] = n.name

    for n in nodes:
        if not n.rank.is_biological:
            continue
        for anc in n.ancestors_or_self():
            if anc is n or not anc.rank.is_biological:
                continue
            if not anc.rank.coarser_than(n.rank):
                raise TaxonomyError(
                    f"rank inversion: {n.name!r} ({n.rank.value}) under "
                    f"{anc.name!r} ({anc.rank.value})"
                )
            break  # nearest ranked ancestor suffices; order is transitive


def build_tree(rows: Iterable[tuple[str, Rank, Optional[str], Iterable[str]]]) -> ConceptTree:
    """Build and validate a tree from (name, rank, parent name, aliases) rows."""
    rows = list(rows)
    if not rows:
        raise TaxonomyError("taxonomy source contains no nodes")

    by_name: dict[str, dict] = {}
    for name, rank, parent, aliases in rows:
        name = name.strip()
        if not name:
            raise TaxonomyError("node with empty name")
        key = name.casefold()
        if key in by_name:
            raise TaxonomyError(f"duplicate name: {name!r}")
        by_name[key] = {
            "name": name,
            "rank": rank,
            "parent": parent.strip() if parent and parent.strip() else None,
            "aliases": frozenset(a.strip() for a in aliases if a.strip()),
        }

    children_of: dict[str, list[str]] = {k: [] for k in by_name}
    root_keys = []
    for key, spec in by_name.items():
        if spec["parent"] is None:
            root_keys.append(key)
            continue
        pkey = spec["parent"].casefold()
        if pkey not in by_name:
            raise TaxonomyError(
                f"node {spec['name']!r} names unknown parent {spec['parent']!r}"
            )
        children_of[pkey].append(key)
    if not root_keys:
        # every node has a parent: pure cycle, name one participant
        raise TaxonomyError(
            f"cycle detected: no root; e.g. node "
            f"{next(iter(by_name.values()))['name']!r} has no parentless ancestor"
        )
    if len(root_keys) > 1:
        names = ", ".join(sorted(by_name[k]["name"] for k in root_keys))
        raise TaxonomyError(f"tree must have exactly one root, found: {names}")

    order: list[str] = []
    queue = deque(root_keys)
    while queue:
        key = queue.popleft()
        order.append(key)
        queue.extend(children_of[key])
    if len(order) != len(by_name):
        reached = set(order)
        stranded = next(k for k in by_name if k not in reached)
        raise TaxonomyError(
            f"cycle detected involving node {by_name[stranded]['name']!r}"
        )

    # Build top-down in BFS order (parents exist before children), then
    # freeze children tuples in a second pass.
    rebuilt: dict[str, TaxonomyNode] = {}
    for key in order:
        spec = by_name[key]
        parent = rebuilt[spec["parent"].casefold()] if spec["parent"] else None
        rebuilt[key] = TaxonomyNode(
            name=spec["name"], rank=spec["rank"], parent=parent,
            aliases=spec["aliases"], children=(),
        )
    for key in order:
        kids = tuple(rebuilt[c] for c in children_of[key])
        object.__setattr__(rebuilt[key], "children", kids)

    root = rebuilt[root_keys[0]]
    nodes = [rebuilt[k] for k in order]
    _validate_tree(nodes, root)
    return ConceptTree(nodes, root)


def parse_taxonomy_text(text: str) -> ConceptTree:
    """Parse the flat file format: one node per line,
    ``name<TAB>rank<TAB>parent-name<TAB>alias1|alias2...``.

    Parent and alias fields may be empty; blank lines and ``#`` comments are
    skipped. UTF-8, chosen for diffability and hand-authoring of fixtures.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise TaxonomyError(f"line {lineno}: expected name<TAB>rank, got {raw!r}")
        name = parts[0]
        rank = Rank.parse(parts[1])
        parent = parts[2] if len(parts) > 2 else None
        aliases = parts[3].split("|") if len(parts) > 3 and parts[3] else []
        rows.append((name, rank, parent, aliases))
    return build_tree(rows)


def load_taxonomy(source: Union[str, Path, "TaxonomyProvider"], *,
                  seed: Optional[str] = None) -> ConceptTree:
    """Load a validated tree from a file path or a provider handle.

    Providers are crawled: ``seed`` names any concept in the remote tree;
    the loader walks up to the root, then breadth-first down through
    children queries.
    """
    if isinstance(source, TaxonomyProvider):
        if seed is None:
            raise TaxonomyError("loading from a provider requires a seed concept name")
        return _crawl_provider(source, seed)
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TaxonomyError(f"cannot read taxonomy file {path}: {exc}") from exc
    return parse_taxonomy_text(text)


# --- providers -------------------------------------------------------------

@dataclass(frozen=True)
class ConceptInfo:
    """Lightweight lookup record shared by all providers."""

    name: str
    rank: Rank
    parent: Optional[str]
    aliases: tuple[str, ...] = ()
    children: tuple[str, ...] = ()


class TaxonomyProvider:
    """Abstract name-lookup interface. Both implementations must produce
    identical results for any tree expressible in the local file format."""

    def resolve(self, name: str) -> ConceptInfo:
        raise NotImplementedError

    def parent(self, name: str) -> Optional[ConceptInfo]:
        info = self.resolve(name)
        return self.resolve(info.parent) if info.parent else None

    def children(self, name: str) -> list[ConceptInfo]:
        info = self.resolve(name)
        return [self.resolve(c) for c in info.children]


class LocalTaxonomyProvider(TaxonomyProvider):
    """File-backed provider over an in-memory ``ConceptTree``."""

    def __init__(self, tree: ConceptTree):
        self.tree = tree

    def resolve(self, name: str) -> ConceptInfo:
        node = self.tree.resolve(name)
        return ConceptInfo(
            name=node.name,
            rank=node.rank,
            parent=node.parent.name if node.parent else None,
            aliases=tuple(sorted(node.aliases)),
            children=tuple(sorted(c.name for c in node.children)),
        )


class RemoteTaxonomyProvider(TaxonomyProvider):
    """Client for a WoRMS-style name-lookup service:
    ``GET <base>/taxa?name=<urlencoded>`` returning name/rank/parent
    (plus aliases and children) as JSON."""

    def __init__(self, base_url: str, session=None, timeout: float = 10.0):
        import requests

        self.base_url = base_url.rstrip("/")
        self._session = session or requests.Session()
        self._timeout = timeout

    def resolve(self, name: str) -> ConceptInfo:
        if not isinstance(name, str) or not name.strip():
            raise TaxonomyError(f"malformed concept name: {name!r}")
        url = f"{self.base_url}/taxa?name={urllib.parse.quote(name.strip())}"
        resp = self._session.get(url, timeout=self._timeout)
        if resp.status_code == 404:
            raise ConceptNotFound(name)
        resp.raise_for_status()
        doc = resp.json()
        return ConceptInfo(
            name=doc["name"],
            rank=Rank.parse(doc["rank"]),
            parent=doc.get("parent") or None,
            aliases=tuple(doc.get("aliases") or ()),
            children=tuple(doc.get("children") or ()),
        )


def _crawl_provider(provider: TaxonomyProvider, seed: str) -> ConceptTree:
    info = provider.resolve(seed)
    while info.parent:
        info = provider.resolve(info.parent)
    rows = []
    queue = deque([info])
    seen = set()
    while queue:
        cur = queue.popleft()
        if cur.name.casefold() in seen:
            raise TaxonomyError(f"cycle detected while crawling at {cur.name!r}")
        seen.add(cur.name.casefold())
        rows.append((cur.name, cur.rank, cur.parent, cur.aliases))
        queue.extend(provider.children(cur.name))
    return build_tree(rows)


# --- supercategories -------------------------------------------------------

@dataclass
class SupercategoryMap:
    """Coarse rollup: each supercategory is the union of taxonomy subtrees.

    ``entries`` is a list of (label, set of root node names). The map must be
    validated against a tree before use; overlap between supercategories is a
    hard configuration error, not first-match — silent precedence would
    corrupt confusion matrices.
    """

    entries: list[tuple[str, set[str]]]
    _label_by_node: dict[str, str] = field(default_factory=dict, repr=False)
    _validated_for: Optional[int] = field(default=None, repr=False)

    def validate(self, tree: ConceptTree) -> "SupercategoryMap":
        label_by_node: dict[str, str] = {}
        for label, root_names in self.entries:
            for root_name in root_names:
                root = tree.resolve(root_name)
                for node in tree.descendants(root):
                    prev = label_by_node.get(node.name)
                    if prev is not None and prev != label:
                        raise SupercategoryConfigError(
                            f"node {node.name!r} falls under both "
                            f"{prev!r} and {label!r}"
                        )
                    label_by_node[node.name] = label
        self._label_by_node = label_by_node
        self._validated_for = id(tree)
        return self

    def is_validated_for(self, tree: ConceptTree) -> bool:
        return self._validated_for == id(tree)


def supercategory_of(tree: ConceptTree, mapping: SupercategoryMap,
                     node: TaxonomyNode) -> Optional[str]:
    """Label of the unique supercategory containing an ancestor-or-self of
    ``node``; None when no root matches."""
    if not mapping.is_validated_for(tree):
        raise SupercategoryConfigError(
            "supercategory map was not validated against this tree"
        )
    tree._require_member(node)
    return mapping._label_by_node.get(node.name)


def parse_supercategory_text(text: str) -> SupercategoryMap:
    """Parse ``label<TAB>root1|root2...`` lines into an (unvalidated) map."""
    entries: list[tuple[str, set[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise TaxonomyError(
                f"line {lineno}: expected label<TAB>root1|root2..., got {raw!r}"
            )
        roots = {r.strip() for r in parts[1].split("|") if r.strip()}
        entries.append((parts[0].strip(), roots))
    if not entries:
        raise TaxonomyError("supercategory file contains no entries")
    return SupercategoryMap(entries)
