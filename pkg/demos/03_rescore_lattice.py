"""Rescore a four-path lattice where the recognizer prefers a wrong split.

"play can you moon by harry styles" has the best acoustic/LM score, but the
graph knows a title "canyon moon" performed by "harry styles".  A title
feature plus a title-by-artist relation feature flip the decision.

Run: python3 demos/03_rescore_lattice.py
"""

import json

from deal.features import Model, parse_feature
from deal.fst import SymbolTable, Wfst, best_path
from deal.kg import parse_kg
from deal.rescorer import Rescorer, rescore_nbest

graph = parse_kg(json.dumps({
    "12345": {"names": {"canyon moon": {"word count": 2}},
              "types": {"music title": {"popularity": 0.0025}},
              "relationships": [{"relation": "performed by", "entity id": "67890",
                                 "popularity": 0.0021}]},
    "67890": {"names": {"harry styles": {"word count": 2}},
              "types": {"music artist": {"popularity": 0.5}},
              "relationships": [{"relation": "performed", "entity id": "12345",
                                 "popularity": 0.1}]},
}))

paths = [("play can you moon by harry styles", -9.5),
         ("play canyon moon by harry styles", -10.0),
         ("play can you moon by hairy styles", -11.0),
         ("play canyon moon by hairy styles", -11.5)]

# one branch per hypothesis, sharing start and final states
syms = SymbolTable()
lattice = Wfst(syms)
lattice.set_start(lattice.add_state())
end = lattice.add_state()
lattice.set_final(end)
for text, base in paths:
    s = lattice.start
    words = text.split()
    for i, w in enumerate(words):
        d = end if i == len(words) - 1 else lattice.add_state()
        lab = syms.add(w)
        lattice.add_arc(s, lab, lab, base if i == 0 else 0.0, d)
        s = d

model = Model(1.0, [parse_feature("play <music_title>", 1, 1.0),
                    parse_feature("<music_title> by <music_artist;rel=performed@1>", 2, 1.0)])

print("baseline best:", " ".join(best_path(lattice)[0]))
best, _ = Rescorer(model, graph).rescore(lattice)
print("rescored best:", " ".join(best.words), f"(total {best.total}, fires {best.fires()})")

print("\nsame hypotheses as an n-best list:")
for h in rescore_nbest([(t.split(), b) for t, b in paths], model, graph):
    print(f"  {h.total:6.2f}  base {h.base_score:6.2f}  {' '.join(h.words)}")
