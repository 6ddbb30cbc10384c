#!/usr/bin/env python3
"""Writes the importer fixtures and their expected values.

Everything expected here is computed in plain Python, straight from the
definitions (degree counts, same-file callers, BFS levels), without using
the C++ library. Run from this directory: python3 make_fixtures.py
"""
import collections
import csv
import io
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent


def dump(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")


# ---------------------------------------------------------------- statistics

def expected_stats(graph):
    ids = [f["id"] for f in graph["functions"]]
    file_of = {f["id"]: f["file"] for f in graph["functions"]}
    indeg = collections.Counter()
    outdeg = collections.Counter()
    callers = collections.defaultdict(set)
    edges = 0
    self_edges = 0
    for a, b in graph["edges"]:
        if a == b:
            self_edges += 1
            continue
        edges += 1
        outdeg[a] += 1
        indeg[b] += 1
        callers[b].add(a)

    def histogram(counter):
        values = [counter[i] for i in ids]
        if not values:
            return []
        hist = [0] * (max(values) + 1)
        for v in values:
            hist[v] += 1
        return hist

    internal = {i: bool(callers[i]) and all(file_of[c] == file_of[i] for c in callers[i])
                for i in ids}
    per_file = {}
    for i in ids:
        entry = per_file.setdefault(file_of[i], {"functions": 0, "internal": 0, "uncalled": 0})
        entry["functions"] += 1
        entry["internal"] += int(internal[i])
        entry["uncalled"] += int(not callers[i])
    n_internal = sum(internal.values())
    stats = {
        "functions": len(ids),
        "files": len(per_file),
        "edges": edges,
        "self_edges": self_edges,
        "in_degree_histogram": histogram(indeg),
        "out_degree_histogram": histogram(outdeg),
        "internal_functions": n_internal,
        "uncalled_functions": sum(1 for i in ids if not callers[i]),
        "internal_ratio": (n_internal / len(ids)) if ids else 0.0,
        "per_file": per_file,
    }
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "file", "in", "out", "internal"])
    for i in ids:
        w.writerow([i, file_of[i], indeg[i], outdeg[i], int(internal[i])])
    return stats, out.getvalue()


def synthetic_project(seed, n_files, n_functions):
    rng = random.Random(seed)
    files = [f"pkg/mod_{k}.py" for k in range(n_files)]
    functions = []
    for k in range(n_functions):
        fid = f"f{k}" if rng.random() < 0.9 else f"mod.func,{k}"
        functions.append({"id": fid, "file": rng.choice(files), "loc": rng.randint(1, 60)})
    edges = []
    for f in functions:
        for _ in range(rng.choice([0, 0, 1, 1, 2, 3, 5])):
            same = [g for g in functions if g["file"] == f["file"]]
            pool = same if rng.random() < 0.6 else functions
            g = rng.choice(pool)
            edges.append([f["id"], g["id"]])
    # a few repeated call sites
    for _ in range(n_functions // 5):
        if edges:
            edges.append(list(rng.choice(edges)))
    return {"functions": functions, "edges": edges}


def write_corpus():
    corpus = HERE / "corpus"
    corpus.mkdir(exist_ok=True)
    projects = {
        "tiny": {"functions": [{"id": "a", "file": "a.py", "loc": 3},
                               {"id": "b", "file": "a.py", "loc": 4},
                               {"id": "c", "file": "c.py", "loc": 5}],
                 "edges": [["a", "b"], ["a", "b"], ["b", "b"], ["c", "b"]]},
        "empty": {"functions": [], "edges": []},
        "alpha": synthetic_project(101, 3, 18),
        "beta": synthetic_project(202, 6, 45),
        "gamma": synthetic_project(303, 10, 120),
    }
    for name, graph in projects.items():
        dump(corpus / f"{name}.callgraph.json", graph)
        stats, rows = expected_stats(graph)
        dump(corpus / f"{name}.stats.json", stats)
        (corpus / f"{name}.stats.csv").write_text(rows, encoding="utf-8")


# ------------------------------------------------------------ regex compiler

REGEX_FUNCTIONS = [
    # (id, file, calls, code)
    ("re.compile", "re.py", ["re._compile"],
     "def compile(pattern, flags=0):\n    return _compile(pattern, flags)\n"),
    ("re.match", "re.py", ["re._compile"],
     "def match(pattern, string, flags=0):\n    return _compile(pattern, flags).match(string)\n"),
    ("re.search", "re.py", ["re._compile"],
     "def search(pattern, string, flags=0):\n    return _compile(pattern, flags).search(string)\n"),
    ("re._compile", "re.py", ["sre_compile.compile", "isstring"],
     "def _compile(pattern, flags):\n    if not isstring(pattern):\n        raise TypeError\n"
     "    return sre_compile.compile(pattern, flags)\n"),
    ("sre_compile.compile", "sre_compile.py",
     ["isstring", "sre_parse.parse", "sre_compile._code"],
     "def compile(p, flags=0):\n    if isstring(p):\n        p = sre_parse.parse(p, flags)\n"
     "    code = _code(p, flags)\n    return code\n"),
    ("sre_compile._code", "sre_compile.py",
     ["sre_compile._compile_info", "sre_compile._compile"],
     "def _code(p, flags):\n    code = []\n    _compile_info(code, p, flags)\n"
     "    _compile(code, p.data, flags)\n    return code\n"),
    ("sre_compile._compile_info", "sre_compile.py", ["sre_compile._simple"],
     "def _compile_info(code, pattern, flags):\n    lo, hi = pattern.getwidth()\n"
     "    return _simple(pattern)\n"),
    ("sre_compile._compile", "sre_compile.py",
     ["sre_compile._compile", "sre_compile._simple", "isnumber"],
     "def _compile(code, pattern, flags):\n    for op, av in pattern:\n"
     "        if isnumber(av):\n            code.append(av)\n"
     "        elif _simple(av):\n            _compile(code, av, flags)\n"),
    ("sre_compile._simple", "sre_compile.py", [],
     "def _simple(p):\n    return len(p) == 1\n"),
    ("sre_parse.parse", "sre_parse.py",
     ["sre_parse.Tokenizer", "sre_parse.Pattern", "sre_parse._parse_sub", "isstring"],
     "def parse(str, flags=0):\n    source = Tokenizer(str)\n    state = Pattern()\n"
     "    p = _parse_sub(source, state, flags)\n    return p\n"),
    ("sre_parse._parse_sub", "sre_parse.py", ["sre_parse._parse", "sre_parse.SubPattern"],
     "def _parse_sub(source, state, verbose):\n    items = [_parse(source, state, verbose)]\n"
     "    return SubPattern(state, items)\n"),
    ("sre_parse._parse", "sre_parse.py",
     ["sre_parse._escape", "sre_parse._parse_sub", "sre_parse.SubPattern"],
     "def _parse(source, state, verbose):\n    sub = SubPattern(state)\n"
     "    if source.match('\\\\'):\n        sub.append(_escape(source, state))\n"
     "    elif source.match('('):\n        sub.append(_parse_sub(source, state, verbose))\n"
     "    return sub\n"),
    ("sre_parse._escape", "sre_parse.py", ["isnumber"],
     "def _escape(source, escape, state):\n    code = escape[1:2]\n"
     "    if isnumber(code):\n        return int(code)\n    return code\n"),
    ("sre_parse.Pattern", "sre_parse.py", [],
     "class Pattern:\n    def __init__(self):\n        self.groupdict = {}\n"),
    ("sre_parse.SubPattern", "sre_parse.py", [],
     "class SubPattern:\n    def __init__(self, state, data=None):\n"
     "        self.state = state\n        self.data = data or []\n"),
    ("sre_parse.Tokenizer", "sre_parse.py", [],
     "class Tokenizer:\n    def __init__(self, string):\n        self.string = string\n"),
    ("isstring", "utils.py", [],
     "def isstring(obj):\n    return isinstance(obj, str)\n"),
    ("isnumber", "utils.py", [],
     "def isnumber(obj):\n    return isinstance(obj, int)\n"),
    ("test_parse", "tests/test_re.py", ["sre_parse.parse"],
     "def test_parse():\n    assert sre_parse.parse('a|b')\n"),
    ("test_compile", "tests/test_re.py", ["re.compile"],
     "def test_compile():\n    assert re.compile('a+')\n"),
    ("test_match", "tests/test_re.py", ["re.match", "re.search"],
     "def test_match():\n    assert re.match('a', 'a')\n    assert re.search('b', 'ab')\n"),
]

REGEX_ENTRIES = ["re.compile", "re.match", "re.search"]


def bfs_levels(ids, edges):
    callees = collections.defaultdict(list)
    has_caller = set()
    for a, b in edges:
        if a != b:
            callees[a].append(b)
            has_caller.add(b)
    level = {}
    frontier = [i for i in ids if i not in has_caller]
    depth = 1
    while frontier:
        nxt = []
        for v in frontier:
            if v in level:
                continue
            level[v] = depth
        for v in frontier:
            for w in callees[v]:
                if w not in level and w not in nxt:
                    nxt.append(w)
        frontier = [w for w in nxt if w not in level]
        depth += 1
    deepest = max(level.values(), default=0)
    cyclic = [i for i in ids if i not in level]
    for i in cyclic:
        level[i] = deepest + 1
    return level, cyclic


def classes_for(ids, edges, entries, level):
    callers = collections.defaultdict(set)
    for a, b in edges:
        if a != b:
            callers[b].add(a)
    out = {}
    for i in ids:
        if not callers[i]:
            out[i] = "Test" if entries is not None and i not in entries else "Regular"
        elif len({level[c] for c in callers[i]}) > 1:
            out[i] = "Utility"
        else:
            out[i] = "Regular"
    return out


def write_regex():
    functions = [{"id": i, "file": f, "loc": code.count("\n"), "code": code}
                 for i, f, _, code in REGEX_FUNCTIONS]
    edges = [[i, c] for i, _, calls, _ in REGEX_FUNCTIONS for c in calls]
    graph = {"functions": functions, "edges": edges, "entries": REGEX_ENTRIES}
    dump(HERE / "regex_compiler.callgraph.json", graph)
    ids = [f["id"] for f in functions]
    level, cyclic = bfs_levels(ids, edges)
    dump(HERE / "regex_compiler.expected.json", {
        "levels": level,
        "cyclic": cyclic,
        "classes": classes_for(ids, edges, set(REGEX_ENTRIES), level),
    })


if __name__ == "__main__":
    write_corpus()
    write_regex()
