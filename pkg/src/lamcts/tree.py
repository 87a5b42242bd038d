"""Partition tree: recursive latent-action splits, UCB descent, path regions.

The tree is rebuilt from scratch at the start of every outer iteration. Any
leaf holding more than ``theta`` samples is split by a freshly trained latent
action; the good subset becomes the left child. A leaf whose samples cannot
be split is marked degenerate and left alone. Selection walks from the root
to a leaf following the larger UCB score, and the traversed (classifier,
side) constraints intersected with the box bounds form the sampling region.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Bounds, Dataset, SplitDegenerateError, StateError
from .partition import LatentAction, learn_latent_action


@dataclass
class PartitionNode:
    """Tree node over a subset of the dataset.

    ``n`` is the visit count (number of samples routed here) and ``v`` the
    cumulative reward sum, so ``v / n`` is the node's mean reward.
    """

    id: int
    parent: Optional[int]
    sample_ids: np.ndarray
    n: int
    v: float
    depth: int = 0
    left: Optional[int] = None
    right: Optional[int] = None
    action: Optional[LatentAction] = None
    degenerate: bool = False

    @property
    def is_leaf(self) -> bool:
        return self.action is None

    @property
    def mean_reward(self) -> float:
        return self.v / self.n


@dataclass
class Region:
    """Conjunction of (latent action, required side) constraints inside bounds."""

    bounds: Bounds
    constraints: list[tuple[LatentAction, bool]] = field(default_factory=list)  # True = good side

    def contains(self, x: np.ndarray) -> bool:
        return bool(self.contains_batch(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def contains_batch(self, x: np.ndarray) -> np.ndarray:
        """Membership mask for an (m, d) array of points.

        Constraints are checked deepest-first with short-circuiting: deep
        classifiers are the cheapest and the most selective, so most
        rejected points never reach the large root-level models.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mask = self.bounds.contains_batch(x)
        for action, want_good in reversed(self.constraints):
            if not mask.any():
                break
            sub = action.classify_batch(x[mask])
            if not want_good:
                sub = ~sub
            mask[np.nonzero(mask)[0][~sub]] = False
        return mask


def region_contains(region: Region, x: np.ndarray) -> bool:
    return region.contains(x)


@dataclass
class TreeConfig:
    theta: int = 20
    cp: float = 1.0
    svm_kernel: str = "rbf"
    svm_c: float = 1.0


@dataclass
class PartitionTree:
    nodes: list[PartitionNode]
    bounds: Bounds
    config: TreeConfig

    @property
    def root(self) -> PartitionNode:
        return self.nodes[0]

    @property
    def num_splits(self) -> int:
        return sum(1 for nd in self.nodes if not nd.is_leaf)

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes)

    def leaves(self) -> list[PartitionNode]:
        return [nd for nd in self.nodes if nd.is_leaf]

    def path_to(self, node_id: int) -> list[int]:
        path = [node_id]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)
        return path[::-1]

    def region_of(self, leaf_id: int) -> Region:
        """Region carved out by the root-to-leaf constraints."""
        path = self.path_to(leaf_id)
        constraints = []
        for parent_id, child_id in zip(path[:-1], path[1:]):
            parent = self.nodes[parent_id]
            constraints.append((parent.action, child_id == parent.left))
        return Region(bounds=self.bounds, constraints=constraints)

    def sibling_of(self, leaf_id: int) -> Optional[int]:
        parent = self.nodes[leaf_id].parent
        if parent is None:
            return None
        p = self.nodes[parent]
        return p.right if p.left == leaf_id else p.left


def build_tree(dataset: Dataset, config: TreeConfig) -> PartitionTree:
    """Rebuild the partition tree over the full dataset.

    Splits any unmarked leaf with more than ``config.theta`` samples until no
    leaf qualifies. Degenerate leaves (unsplittable samples) are marked and
    skipped rather than raising.
    """
    if len(dataset) == 0:
        raise StateError("cannot build a tree over an empty dataset")
    rewards = dataset.rewards()
    all_ids = np.arange(len(dataset))
    root = PartitionNode(
        id=0, parent=None, sample_ids=all_ids, n=len(all_ids), v=float(rewards.sum()), depth=0
    )
    tree = PartitionTree(nodes=[root], bounds=dataset.bounds, config=config)
    frontier = [0]
    while frontier:
        node_id = frontier.pop()
        node = tree.nodes[node_id]
        if node.n <= config.theta or node.degenerate:
            continue
        samples = [dataset.evals[i] for i in node.sample_ids]
        try:
            action, good_idx, bad_idx = learn_latent_action(
                samples, kernel=config.svm_kernel, c=config.svm_c
            )
        except SplitDegenerateError:
            node.degenerate = True
            continue
        for local_idx, is_left in ((good_idx, True), (bad_idx, False)):
            ids = node.sample_ids[local_idx]
            child = PartitionNode(
                id=len(tree.nodes),
                parent=node.id,
                sample_ids=ids,
                n=len(ids),
                v=float(rewards[ids].sum()),
                depth=node.depth + 1,
            )
            tree.nodes.append(child)
            if is_left:
                node.left = child.id
            else:
                node.right = child.id
            frontier.append(child.id)
        node.action = action
    return tree


def ucb_score(node: PartitionNode, parent_n: int, cp: float) -> float:
    """mean reward + 2 * cp * sqrt(2 * ln(parent visits) / node visits)."""
    if node.n == 0:
        return float("inf")
    exploit = node.v / node.n
    if cp == 0.0:
        return exploit
    return exploit + 2.0 * cp * np.sqrt(2.0 * np.log(parent_n) / node.n)


def select_path(tree: PartitionTree) -> tuple[int, Region]:
    """Descend from the root by UCB (ties to the good child); return leaf + region."""
    node = tree.root
    constraints = []
    while not node.is_leaf:
        left = tree.nodes[node.left]
        right = tree.nodes[node.right]
        go_left = ucb_score(left, node.n, tree.config.cp) >= ucb_score(right, node.n, tree.config.cp)
        constraints.append((node.action, go_left))
        node = left if go_left else right
    return node.id, Region(bounds=tree.bounds, constraints=constraints)


def leaf_mean(tree: PartitionTree, leaf_id: int) -> float:
    """Mean reward of the leaf's samples."""
    node = tree.nodes[leaf_id]
    return node.v / node.n
