#!/usr/bin/env python3
"""Independent enumeration of node/edge type registries for data/minilang.asdl."""
import re, sys, pathlib

path = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parents[2] / "data/minilang.asdl")
text = "\n".join(l.split("--")[0] for l in path.read_text().splitlines())
prims = []
for m in re.finditer(r"%primitive([^\n]*)", text):
    prims += m.group(1).split()
text = re.sub(r"%[^\n]*", "", text)
# productions: Name = ...  up to the next "Name ="
prods = re.split(r"\n(?=\s*\w+\s*=)", text.strip())
composites, labels = [], []
ctors = 0
for p in prods:
    p = p.strip()
    if not p:
        continue
    name, body = p.split("=", 1)
    composites.append(name.strip())
    alts = [a.strip() for a in body.split("|")]
    for a in alts:
        ctors += 1
        m = re.search(r"\((.*)\)", a, re.S)
        if not m:
            continue
        for f in m.group(1).split(","):
            lab = f.split()[-1]
            if lab not in labels:
                labels.append(lab)
node_types = composites + prims + ["subtoken"]
fwd = labels + ["NextSib", "NextToken", "subtoken_of"]
rev = [("LastToken" if e == "NextToken" else e + "_reverse") for e in fwd]
print("node_types", len(node_types), " ".join(node_types))
print("constructors", ctors)
print("edge_types", len(fwd + rev), " ".join(fwd + rev))
