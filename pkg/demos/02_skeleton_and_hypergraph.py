"""The 25-joint skeleton, its tree topology, and the body-part hypergraph.

The model needs three structural inputs: hop distances between joints
(for the positional bias), a partition of joints into body-part groups
(for subgraph attention and the attentive bias), and the joint ordering
itself. This script prints all three.
"""

import numpy as np

from rehabattn.skeleton import (JOINT_NAMES, default_partition, default_topology,
                                membership_matrix, spd)

topo = default_topology()
print(f"{topo.num_joints} joints, {len(topo.edges)} bones\n")

for i, name in enumerate(JOINT_NAMES):
    print(f"  {i:2d} {name}")

d = spd(topo)
print("\nshortest-path hop distances (corners of the matrix):")
print(d[:5, :5])
print("max hop distance on the tree:", d.max())
i, j = np.unravel_index(d.argmax(), d.shape)
print(f"farthest pair: {JOINT_NAMES[i]} <-> {JOINT_NAMES[j]}")

part = default_partition()
print("\nbody-part groups (hyperedges):")
for name, group in zip(part.group_names, part.groups):
    print(f"  {name:<12s} {[JOINT_NAMES[g] for g in group]}")

m = membership_matrix(part)
print("\nmembership matrix shape:", m.shape, "- each row is a one-hot group id")
print("every joint belongs to exactly one group:", bool((m.data.sum(axis=1) == 1).all()))
