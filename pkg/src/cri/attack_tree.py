"""Abstract attack trees: AND/OR gates over atomic attacker actions.

A tree describes one high-level procedure for a technique without binding
it to concrete vulnerabilities. Leaves are action templates; gates say how
leaf outcomes combine (AND = all children, OR = any child).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError

GATES = ("AND", "OR")

# Leaf parameters that may override the technique's threat-intel record.
LEAF_PARAM_KEYS = ("p_success", "p_detect", "reward_success", "penalty_failure", "cost")


@dataclass(frozen=True)
class TreeLeaf:
    """Atomic attacker action template at the bottom of a tree."""

    name: str
    params: tuple[tuple[str, float], ...] = ()

    def param(self, key: str) -> float | None:
        for k, v in self.params:
            if k == key:
                return v
        return None


@dataclass(frozen=True)
class TreeGate:
    kind: str  # "AND" | "OR"
    children: tuple["TreeGate | TreeLeaf", ...]


@dataclass(frozen=True)
class AttackTree:
    """One procedure for `technique_id`, rooted at an AND/OR gate or a leaf."""

    id: str
    technique_id: str
    root: TreeGate | TreeLeaf

    def leaves(self) -> list[TreeLeaf]:
        """Leaves in depth-first order (stable across runs)."""
        out: list[TreeLeaf] = []

        def walk(node):
            if isinstance(node, TreeLeaf):
                out.append(node)
            else:
                for child in node.children:
                    walk(child)

        walk(self.root)
        return out

    def gate_satisfied(self, achieved: set[str]) -> bool:
        """Evaluate the gate formula given the set of achieved leaf names."""

        def walk(node) -> bool:
            if isinstance(node, TreeLeaf):
                return node.name in achieved
            if node.kind == "AND":
                return all(walk(c) for c in node.children)
            return any(walk(c) for c in node.children)

        return walk(self.root)


def success_probability(tree: AttackTree, leaf_probability) -> float:
    """Probability the root gate is satisfied when every leaf is attempted
    once, assuming independent leaf outcomes.

    AND combines as the product, OR as 1 - prod(1 - p). `leaf_probability`
    maps a TreeLeaf to its success probability.
    """

    def walk(node) -> float:
        if isinstance(node, TreeLeaf):
            return float(leaf_probability(node))
        if node.kind == "AND":
            prob = 1.0
            for child in node.children:
                prob *= walk(child)
            return prob
        fail = 1.0
        for child in node.children:
            fail *= 1.0 - walk(child)
        return 1.0 - fail

    return walk(tree.root)


def parse_tree_dict(obj: dict) -> AttackTree:
    """Build an AttackTree from its JSON object form."""
    if not isinstance(obj, dict):
        raise ValidationError("attack tree must be a JSON object")
    tree_id = obj.get("id")
    technique_id = obj.get("technique_id")
    if not tree_id or not technique_id:
        raise ValidationError("attack tree requires 'id' and 'technique_id'")
    if "root" not in obj:
        raise ValidationError(f"attack tree {tree_id!r} has no 'root'")

    seen_names: set[str] = set()

    def walk(node) -> TreeGate | TreeLeaf:
        if not isinstance(node, dict):
            raise ValidationError(f"attack tree {tree_id!r}: node must be an object")
        if "gate" in node:
            kind = node["gate"]
            if kind not in GATES:
                raise ValidationError(f"attack tree {tree_id!r}: unknown gate {kind!r}")
            children = node.get("children") or []
            if not children:
                raise ValidationError(f"attack tree {tree_id!r}: gate with no children")
            return TreeGate(kind, tuple(walk(c) for c in children))
        name = node.get("name")
        if not name:
            raise ValidationError(f"attack tree {tree_id!r}: leaf without a name")
        if name in seen_names:
            raise ValidationError(f"attack tree {tree_id!r}: duplicate leaf name {name!r}")
        seen_names.add(name)
        params = []
        for key in LEAF_PARAM_KEYS:
            if key in node:
                value = float(node[key])
                if key in ("p_success", "p_detect") and not 0.0 <= value <= 1.0:
                    raise ValidationError(
                        f"attack tree {tree_id!r}: leaf {name!r} {key}={value} outside [0,1]"
                    )
                params.append((key, value))
        return TreeLeaf(name, tuple(params))

    return AttackTree(id=tree_id, technique_id=technique_id, root=walk(obj["root"]))


def tree_to_dict(tree: AttackTree) -> dict:
    def walk(node):
        if isinstance(node, TreeLeaf):
            out = {"name": node.name}
            out.update({k: v for k, v in node.params})
            return out
        return {"gate": node.kind, "children": [walk(c) for c in node.children]}

    return {"id": tree.id, "technique_id": tree.technique_id, "root": walk(tree.root)}


@dataclass
class TreeLibrary:
    """Attack trees indexed by id; a flow may reference them per TTP node."""

    trees: dict[str, AttackTree] = field(default_factory=dict)

    def add(self, tree: AttackTree) -> None:
        if tree.id in self.trees:
            raise ValidationError(f"duplicate attack tree id {tree.id!r}")
        self.trees[tree.id] = tree

    def get(self, tree_id: str) -> AttackTree | None:
        return self.trees.get(tree_id)
