import csv
import json
import os

from hybrid_core.io import mode_label


def write_quotient(quotient, directory, prefix="quotient"):
    """Node and edge lists as CSV plus a GraphViz rendering; returns the three paths."""
    os.makedirs(directory, exist_ok=True)
    nodes_path = os.path.join(directory, f"{prefix}_nodes.csv")
    edges_path = os.path.join(directory, f"{prefix}_edges.csv")
    dot_path = os.path.join(directory, f"{prefix}.dot")
    with open(nodes_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "mode", "initial", "labels", "rows"])
        for block in quotient.partition:
            writer.writerow([block.id, mode_label(block.mode), int(block.id in quotient.initial),
                             ";".join(sorted(block.labels)), json.dumps(block.polytope.to_dict())])
    with open(edges_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["src", "dst", "label"])
        for src, dst, label in sorted(quotient.edges, key=lambda e: (e[0], e[1], str(e[2]))):
            writer.writerow([src, dst, label])
    with open(dot_path, "w") as f:
        f.write(to_graphviz(quotient))
    return nodes_path, edges_path, dot_path


def to_graphviz(quotient, name="quotient"):
    lines = [f"digraph {name} {{"]
    for block in quotient.partition:
        shape = "doublecircle" if block.id in quotient.initial else "circle"
        label = f"{block.id}\\n{mode_label(block.mode)}"
        if block.labels:
            label += "\\n" + ",".join(sorted(block.labels))
        lines.append(f'  b{block.id} [shape={shape}, label="{label}"];')
    for src, dst, label in sorted(quotient.edges, key=lambda e: (e[0], e[1], str(e[2]))):
        lines.append(f'  b{src} -> b{dst} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
