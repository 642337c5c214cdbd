"""
Decomposing the fixture die into machining features
===================================================

Build the synthetic forging die, split its surfaces into HP / CP / FC / FF / B
features and print the interference relations between them.
"""
from forgecam.bmfe import extract_features
from forgecam.fixtures import fixture_die
from forgecam.topology import build_topology_graph, export_graph_dot

die = fixture_die()
print(f"{len(die.surfaces)} surfaces")

# each feature groups one or more surfaces of the same machining kind
features = extract_features(die)
print("census:", features.census())
for f in features:
    print(f"  {f.id:4s} {f.kind:3s} slope {f.mean_slope:5.1f} deg  z {f.z_extent[0]:7.2f}..{f.z_extent[1]:6.2f}  "
          f"{', '.join(f.surface_ids)}")

# shared boundaries become junctions (island / cavity / flank, opened / closed)
graph = build_topology_graph(die, features, index=features.index)
for e in graph.edges:
    print(f"  {e.source:4s} -> {e.target:4s} {e.relation.label()}")

# the graph also exports to Graphviz
print(export_graph_dot(graph)[:200], "...")
