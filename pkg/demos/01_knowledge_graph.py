"""Load the bundled toy knowledge graph and look at how non-terminals expand.

Run: python3 demos/01_knowledge_graph.py
"""

from deal.features import parse_token
from deal.toydata import toy_kg

graph = toy_kg()
print("types:", ", ".join(graph.types))
for t in graph.types:
    head, torso, tail = graph.strata[t]
    print(f"  {t:13s} {len(graph.ranked(t)):4d} entities, tier cutoffs {head}/{torso}/{tail}")

# the three most popular cities and the state each one is in
for cid in graph.ranked("city")[:3]:
    city = graph.entities[cid]
    sid = city.relationships[0].entity_id
    print(f"  rank {graph.rank(cid, 'city')}: {city.names[0].text} is in "
          f"{graph.entities[sid].names[0].text}")

# <state;rel=contains@1> only admits states that contain the city bound at position 1
first = graph.ranked("city")[0]
spec = parse_token("<state;rel=contains@1>")
print("states containing", graph.entities[first].names[0].text, "->",
      [" ".join(s) for s in graph.expand(spec, {first})])

# popularity and word-count conditions narrow the expansion
for tok in ("<city>", "<city;pop=head>", "<city;wc>=2>"):
    print(f"  {tok:16s} {len(graph.expand(parse_token(tok))):4d} surfaces")
