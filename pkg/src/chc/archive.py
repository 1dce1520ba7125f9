"""Synthesis archives and plain-text exports.

An archive is a single text file: a magic header line followed by one JSON
document (sorted keys, fixed indentation) holding the partition, the
symbolic-input family, the transition graph and the reachability sector.
Wall-clock timings are left out so that equal inputs give byte-identical
files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from chc.errors import ScenarioParseError
from chc.graph import ReachabilitySector, SymbolicInputFamily, TransitionGraph
from chc.partition import Partition, partition_from_dict, partition_to_dict
from chc.supervisor import RunLog, count_sign_changes
from chc.synthesis import Synthesis

MAGIC = "CHC-ARCHIVE"
VERSION = 1


def graph_to_dict(tg: TransitionGraph) -> dict:
    return {
        "n_nodes": int(tg.n_nodes),
        "tail": tg.tail.astype(int).tolist(),
        "head": tg.head.astype(int).tolist(),
        "input_id": tg.input_id.astype(int).tolist(),
        "endpoint": np.asarray(tg.endpoint, dtype=float).tolist(),
        "j1": np.asarray(tg.j1, dtype=float).tolist(),
        "j2": np.asarray(tg.j2, dtype=float).tolist(),
        "safe": np.asarray(tg.safe, dtype=bool).tolist(),
    }


def graph_from_dict(d: dict, n: int) -> TransitionGraph:
    endpoint = np.array(d["endpoint"], dtype=float).reshape(-1, n)
    return TransitionGraph(
        int(d["n_nodes"]),
        np.array(d["tail"], dtype=np.int64),
        np.array(d["head"], dtype=np.int64),
        np.array(d["input_id"], dtype=np.int64),
        endpoint,
        np.array(d["j1"], dtype=float),
        np.array(d["j2"], dtype=float),
        np.array(d["safe"], dtype=bool),
    )


def dumps_archive(synthesis: Synthesis, family: SymbolicInputFamily, scenario: dict | None = None) -> str:
    stats = {k: v for k, v in synthesis.stats.items() if not k.endswith("_s")}
    body = {
        "version": VERSION,
        "scenario": scenario,
        "family": family.to_dict(),
        "partition": partition_to_dict(synthesis.partition),
        "graph": graph_to_dict(synthesis.graph),
        "rs": synthesis.rs.to_dict(),
        "stats": stats,
    }
    return f"{MAGIC} v{VERSION}\n" + json.dumps(body, indent=1, sort_keys=True) + "\n"


def loads_archive(text: str) -> tuple[Synthesis, SymbolicInputFamily, dict | None]:
    header, _, rest = text.partition("\n")
    parts = header.split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise ScenarioParseError("not a synthesis archive (bad magic header)")
    if parts[1] != f"v{VERSION}":
        raise ScenarioParseError(f"unsupported archive version {parts[1]!r}")
    try:
        body = json.loads(rest)
        part: Partition = partition_from_dict(body["partition"])
        tg = graph_from_dict(body["graph"], part.n)
        rs = ReachabilitySector.from_dict(body["rs"])
        family = SymbolicInputFamily.from_dict(body["family"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioParseError(f"malformed archive: {exc!r}") from exc
    return Synthesis(part, tg, rs, dict(body.get("stats", {}))), family, body.get("scenario")


def save_archive(path, synthesis: Synthesis, family: SymbolicInputFamily, scenario: dict | None = None) -> None:
    Path(path).write_text(dumps_archive(synthesis, family, scenario))


def load_archive(path):
    return loads_archive(Path(path).read_text())


def graph_to_dot(tg: TransitionGraph, rs: ReachabilitySector | None = None, name: str = "TG") -> str:
    """Graphviz text; reachability-sector edges are drawn bold."""
    hops = set() if rs is None else {(q, h[0], h[1]) for q, h in rs.next_hop.items()}
    lines = [f"digraph {name} {{"]
    for q in range(tg.n_nodes):
        attr = ' [shape=doublecircle]' if rs is not None and q == rs.destination else ""
        lines.append(f"  {q}{attr};")
    for t, h, i, w in zip(tg.tail.tolist(), tg.head.tolist(), tg.input_id.tolist(), tg.j2.tolist()):
        style = ", style=bold" if (t, h, i) in hops else ""
        lines.append(f'  {t} -> {h} [label="{i}", weight="{w:.6g}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def nodes_csv(partition: Partition, rs: ReachabilitySector | None = None) -> str:
    n = partition.n
    header = (["element"] + [f"lower_{d}" for d in range(n)] + [f"upper_{d}" for d in range(n)]
              + [f"node_{d}" for d in range(n)] + ["unsafe", "next_hop", "input_id", "cost_to_go"])
    rows = []
    for el in partition.elements:
        hop = None if rs is None else rs.next_hop.get(el.index)
        cost = "" if rs is None else rs.cost_to_go.get(el.index, "")
        rows.append([el.index, *map(repr, el.lower.tolist()), *map(repr, el.upper.tolist()),
                     *map(repr, el.operating_node.tolist()), int(el.unsafe),
                     "" if hop is None else hop[0], "" if hop is None else hop[1],
                     cost if cost == "" else repr(float(cost))])
    return _csv(header, rows)


def edges_csv(tg: TransitionGraph) -> str:
    n = tg.endpoint.shape[1] if tg.endpoint.ndim == 2 else 0
    header = ["tail", "head", "input_id", "j1", "j2", "safe"] + [f"end_{d}" for d in range(n)]
    rows = [
        [int(t), int(h), int(i), repr(float(a)), repr(float(b)), int(s), *map(repr, e.tolist())]
        for t, h, i, a, b, s, e in zip(tg.tail, tg.head, tg.input_id, tg.j1, tg.j2, tg.safe, tg.endpoint)
    ]
    return _csv(header, rows)


def trajectory_csv(run: RunLog) -> str:
    times, states, modes, inputs, binary = run.arrays()
    n = states.shape[1]
    m = inputs.shape[1] if inputs.ndim == 2 else 0
    nb = len(binary[0]) if binary else 0
    header = (["time"] + [f"x{d}" for d in range(n)] + ["mode"] + [f"u{d}" for d in range(m)]
              + [f"b{d}" for d in range(nb)])
    rows = []
    for t, x, mode, u, b in zip(times, states, modes, inputs, binary):
        label = "" if mode is None else mode.value
        rows.append([repr(float(t)), *map(repr, x.tolist()), label, *map(repr, u.tolist()), *b])
    return _csv(header, rows)


def mode_summary(run: RunLog, swing_dim: int | None = None) -> dict:
    """Structured summary of the decision sequence.

    With ``swing_dim`` the summary also counts sign changes of that state
    component up to the first capture (all samples when never captured).
    """
    counts: dict[str, int] = {}
    switches = []
    prev = None
    for d in run.decisions:
        mode = d["mode"].value
        counts[mode] = counts.get(mode, 0) + 1
        if mode != prev:
            switches.append({"time": float(d["time"]), "mode": mode, "element": int(d["element"])})
        prev = mode
    out = {"status": run.status, "capture_time": run.capture_time, "counts": counts,
           "switches": switches, "message": run.message,
           "max_abs_input": run.max_abs_input().tolist()}
    if swing_dim is not None:
        times, states, *_ = run.arrays()
        upto = times <= run.capture_time if run.captured else np.ones(times.size, dtype=bool)
        out["swings"] = count_sign_changes(states[upto, swing_dim])
    return out
