import csv
import logging

import yaml

from backend.exceptions import ModelError
from hybrid_core.execution import Jump
from hybrid_core.serializers import ModelSerializer

logger = logging.getLogger(__name__)


def load_document(path):
    """YAML or JSON (a YAML subset) into plain Python data."""
    with open(path) as f:
        try:
            return yaml.safe_load(f)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = {"line": mark.line + 1, "column": mark.column + 1} if mark else {}
            raise ModelError(d={"document": [str(e)], **where}, m="unparseable_document")


def build_model(document):
    serializer = ModelSerializer(data=document)
    if not serializer.is_valid():
        raise ModelError(d=serializer.errors, m="invalid_model")
    return serializer.save()


def load_model(path):
    automaton = build_model(load_document(path))
    logger.info("Loaded %s from %s", automaton, path)
    return automaton


def mode_label(mode):
    if isinstance(mode, tuple):
        return "|".join(mode_label(m) for m in mode)
    return str(mode)


def _trace_rows(execution):
    """(time, mode, x, events) with the emitted events on jump rows."""
    for segment in execution:
        if isinstance(segment, Jump):
            yield segment.time, segment.post.mode, segment.post.x, "+".join(segment.emits)
        else:
            for t, x in zip(segment.times, segment.states):
                yield t, segment.mode, x, ""


def write_trace_csv(execution, path, extra_columns=None, events=False):
    """
    Header ``time,mode,x_0..x_{n-1}`` followed by the names of ``extra_columns``,
    a mapping name -> fn(time, mode, x), and an ``event`` column when ``events``.
    """
    extra_columns = extra_columns or {}
    dim = execution.automaton.dim
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time", "mode"] + [f"x_{i}" for i in range(dim)] + list(extra_columns)
                        + (["event"] if events else []))
        for t, mode, x, emitted in _trace_rows(execution):
            extra = [fn(t, mode, x) for fn in extra_columns.values()]
            row = [repr(float(t)), mode_label(mode)] + [repr(float(v)) for v in x] + extra
            writer.writerow(row + ([emitted] if events else []))
    return path


def write_series(path, rows, header=("time", "value")):
    """Two-column plot data."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    return path
