"""Compile three features into the feature-tagging transducer and print it.

Each feature becomes a path  <f> tokens... <#id>  that leaves and re-enters
the start state; only the closing tag arc carries the feature weight.

Run: python3 demos/02_compile_features.py
"""

from deal.compiler import build_rtop
from deal.features import Model, parse_feature
from deal.fst import write_text

model = Model(1.0, [parse_feature("play <music_title> by", 1, 1.2),
                    parse_feature("play <music_artist>", 2, 0.8),
                    parse_feature("to <city> <state;rel=contains@1>", 3, -0.4)])
rtop = build_rtop(model)
print(f"{rtop.fst.num_states} states, {rtop.fst.num_arcs} arcs")
print("src dst ilabel olabel weight")
for line in write_text(rtop.fst).splitlines():
    f = line.split("\t")
    if len(f) == 5:
        f[2], f[3] = rtop.symbols.symbol(int(f[2])), rtop.symbols.symbol(int(f[3]))
        print("  ".join(f))
    else:
        print(f"final state {f[0]}, weight {f[1]}")
