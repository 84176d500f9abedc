"""The 25-joint Kinect V2 skeleton: topology, hop distances, body-part groups."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

# Canonical Kinect V2 joint order.
JOINT_NAMES = [
    "SpineBase", "SpineMid", "Neck", "Head",
    "ShoulderLeft", "ElbowLeft", "WristLeft", "HandLeft",
    "ShoulderRight", "ElbowRight", "WristRight", "HandRight",
    "HipLeft", "KneeLeft", "AnkleLeft", "FootLeft",
    "HipRight", "KneeRight", "AnkleRight", "FootRight",
    "SpineShoulder",
    "HandTipLeft", "ThumbLeft",
    "HandTipRight", "ThumbRight",
]

NUM_JOINTS = 25


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonTopology:
    """An undirected joint tree: 25 vertices, 24 bone edges."""

    joint_names: tuple = tuple(JOINT_NAMES)
    edges: tuple = ()

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    def index(self, name: str) -> int:
        return self.joint_names.index(name)

    def validate(self):
        v = self.num_joints
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < v and 0 <= j < v):
                raise TopologyError(f"edge ({i},{j}) out of range for {v} joints")
            key = (min(i, j), max(i, j))
            if i == j or key in seen:
                raise TopologyError(f"degenerate or duplicate edge ({i},{j})")
            seen.add(key)
        if len(self._components()) != 1:
            raise TopologyError("skeleton graph is not connected")

    def _components(self):
        adj = self.adjacency_lists()
        unvisited = set(range(self.num_joints))
        comps = []
        while unvisited:
            root = next(iter(unvisited))
            comp, stack = {root}, [root]
            while stack:
                for nb in adj[stack.pop()]:
                    if nb not in comp:
                        comp.add(nb)
                        stack.append(nb)
            comps.append(comp)
            unvisited -= comp
        return comps

    def adjacency_lists(self):
        adj = [[] for _ in range(self.num_joints)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj


def default_topology() -> SkeletonTopology:
    """The canonical Kinect V2 25-joint tree."""
    n = {name: i for i, name in enumerate(JOINT_NAMES)}
    bones = [
        ("SpineBase", "SpineMid"), ("SpineMid", "SpineShoulder"),
        ("SpineShoulder", "Neck"), ("Neck", "Head"),
        ("SpineShoulder", "ShoulderLeft"), ("ShoulderLeft", "ElbowLeft"),
        ("ElbowLeft", "WristLeft"), ("WristLeft", "HandLeft"),
        ("HandLeft", "HandTipLeft"), ("WristLeft", "ThumbLeft"),
        ("SpineShoulder", "ShoulderRight"), ("ShoulderRight", "ElbowRight"),
        ("ElbowRight", "WristRight"), ("WristRight", "HandRight"),
        ("HandRight", "HandTipRight"), ("WristRight", "ThumbRight"),
        ("SpineBase", "HipLeft"), ("HipLeft", "KneeLeft"),
        ("KneeLeft", "AnkleLeft"), ("AnkleLeft", "FootLeft"),
        ("SpineBase", "HipRight"), ("HipRight", "KneeRight"),
        ("KneeRight", "AnkleRight"), ("AnkleRight", "FootRight"),
    ]
    topo = SkeletonTopology(edges=tuple((n[a], n[b]) for a, b in bones))
    topo.validate()
    return topo


def spd(topology: SkeletonTopology) -> np.ndarray:
    """All-pairs shortest hop distances, by repeated BFS."""
    topology.validate()
    v = topology.num_joints
    adj = topology.adjacency_lists()
    d = np.full((v, v), -1, dtype=np.int64)
    for src in range(v):
        d[src, src] = 0
        frontier = [src]
        dist = 0
        while frontier:
            dist += 1
            nxt = []
            for node in frontier:
                for nb in adj[node]:
                    if d[src, nb] < 0:
                        d[src, nb] = dist
                        nxt.append(nb)
            frontier = nxt
    return d


@dataclass(frozen=True)
class HypergraphPartition:
    """Disjoint split of the joint set into named body-part groups."""

    groups: tuple          # tuple of frozensets of joint indices
    group_names: tuple

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    def validate(self, num_joints: int = NUM_JOINTS):
        if len(self.groups) != len(self.group_names):
            raise TopologyError("group/name count mismatch")
        covered = []
        for g in self.groups:
            covered.extend(g)
        if sorted(covered) != list(range(num_joints)):
            raise TopologyError(
                f"groups must partition joints 0..{num_joints - 1} exactly; got {sorted(covered)}")

    def group_of(self) -> np.ndarray:
        """Joint index -> group index."""
        out = np.empty(sum(len(g) for g in self.groups), dtype=np.int64)
        for gi, g in enumerate(self.groups):
            for j in g:
                out[j] = gi
        return out


def default_partition() -> HypergraphPartition:
    """Six body-part groups: forearms+hands, legs, spine+head, shoulders."""
    n = {name: i for i, name in enumerate(JOINT_NAMES)}
    spec = [
        ("left_arm", ["ElbowLeft", "WristLeft", "HandLeft", "HandTipLeft", "ThumbLeft"]),
        ("right_arm", ["ElbowRight", "WristRight", "HandRight", "HandTipRight", "ThumbRight"]),
        ("left_leg", ["HipLeft", "KneeLeft", "AnkleLeft", "FootLeft"]),
        ("right_leg", ["HipRight", "KneeRight", "AnkleRight", "FootRight"]),
        ("spine_head", ["SpineBase", "SpineMid", "SpineShoulder", "Neck", "Head"]),
        ("shoulders", ["ShoulderLeft", "ShoulderRight"]),
    ]
    p = HypergraphPartition(
        groups=tuple(frozenset(n[j] for j in joints) for _, joints in spec),
        group_names=tuple(name for name, _ in spec),
    )
    p.validate()
    return p


def membership_matrix(partition: HypergraphPartition, num_joints: int = NUM_JOINTS) -> Tensor:
    """One-hot joint-to-group matrix, shape [V, G]."""
    partition.validate(num_joints)
    m = np.zeros((num_joints, partition.num_groups))
    for gi, g in enumerate(partition.groups):
        for j in g:
            m[j, gi] = 1.0
    return Tensor(m)


def load_partition(path, joint_names=JOINT_NAMES) -> HypergraphPartition:
    """Parse a partition config: lines of ``group_name: Joint, Joint, ...``."""
    n = {name: i for i, name in enumerate(joint_names)}
    names, groups = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise TopologyError(f"{path}:{lineno}: expected 'group_name: joints...'")
            gname, rest = line.split(":", 1)
            members = set()
            for token in rest.split(","):
                token = token.strip()
                if token not in n:
                    raise TopologyError(f"{path}:{lineno}: unknown joint {token!r}")
                members.add(n[token])
            names.append(gname.strip())
            groups.append(frozenset(members))
    p = HypergraphPartition(groups=tuple(groups), group_names=tuple(names))
    p.validate(len(joint_names))
    return p


def save_partition(partition: HypergraphPartition, path, joint_names=JOINT_NAMES):
    with open(path, "w") as fh:
        for name, g in zip(partition.group_names, partition.groups):
            joints = ", ".join(joint_names[j] for j in sorted(g))
            fh.write(f"{name}: {joints}\n")
