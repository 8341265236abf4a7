import csv
import json

from hybrid_core.io import mode_label


def write_flowpipe_csv(flowpipes, path):
    """One row per section: mode, k, t_lo, t_hi and the section's constraint rows as JSON."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["mode", "k", "t_lo", "t_hi", "rows"])
        for flowpipe in flowpipes:
            for segment in flowpipe:
                writer.writerow([mode_label(flowpipe.mode), segment.k, repr(float(segment.t_lo)),
                                 repr(float(segment.t_hi)), json.dumps(segment.polytope.to_dict())])
    return path


def write_flowpipe_vertices(flowpipes, path, i=0, j=1):
    """Vertices of every section projected onto coordinates (i, j), for plotting."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["mode", "k", "vertex", f"x_{i}", f"x_{j}"])
        for flowpipe in flowpipes:
            for segment in flowpipe:
                for index, (u, v) in enumerate(segment.polytope.vertices_2d(i, j)):
                    writer.writerow([mode_label(flowpipe.mode), segment.k, index, repr(float(u)), repr(float(v))])
    return path
