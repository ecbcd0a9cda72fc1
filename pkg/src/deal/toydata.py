"""Deterministic generator for the bundled toy knowledge graph and templates.

Entity names are built from consonant-vowel syllables so that many of them
are one character edit away from each other, which gives the noisy channel
plenty of plausible confusions.  ``write_bundle`` regenerates the files under
``deal/data``.
"""

from __future__ import annotations

import json
import random
from importlib import resources
from pathlib import Path

from .features import Template, load_templates
from .kg import KnowledgeGraph, load_kg
from .synth import load_confusions

CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"

STRATA = {
    "state": (5, 12, 20),
    "city": (30, 120, 300),
    "music artist": (10, 40, 80),
    "music title": (40, 160, 400),
}

ENTITY_TEMPLATES = """\
directions to <city> <state;rel=contains@1>\t0.20
weather in <city> <state;rel=contains@1>\t0.10
navigate to <city> <state;rel=contains@1>\t0.05
directions to <city>\t0.08
weather in <city>\t0.05
what time is it in <city>\t0.03
play <music_title> by <music_artist;rel=performed@1>\t0.20
play the song <music_title> by <music_artist;rel=performed@1>\t0.05
play <music_title>\t0.08
lyrics to <music_title>\t0.04
play <music_artist>\t0.06
play songs by <music_artist>\t0.04
play music by <music_artist>\t0.02
"""

GENERAL_TEMPLATES = """\
what is the weather today\t0.10
set a timer for ten minutes\t0.06
turn on the lights\t0.08
turn off the lights\t0.06
what time is it\t0.08
call mom\t0.05
tell me a joke\t0.04
set an alarm for seven\t0.05
remind me to buy milk\t0.03
what is on my calendar\t0.03
how is the traffic\t0.04
play some music\t0.06
pause the music\t0.04
skip this song\t0.04
turn up the volume\t0.03
good morning\t0.03
how far is the moon\t0.02
read my messages\t0.03
send a text to dad\t0.03
what is the news\t0.03
open the garage door\t0.02
lock the front door\t0.02
add eggs to my list\t0.02
how do you spell necessary\t0.01
"""

CONFUSIONS = """\
play\tpray,clay,lay
to\ttwo,too
by\tbuy,bye
in\tand,inn
directions\tdirection,corrections
weather\twhether,wetter
navigate\tnavigates
lyrics\tlyric,liquors
song\tsong,sung,long
songs\tsons,longs
music\tmagic,muse sick
the\ta,this
what\twatt,wait
time\tteam,thyme
is\tif,his
it\tit's,at
today\tto day,the day
ten\ttin,then
minutes\tminute,min its
lights\tlines,likes
call\tcoal,cool
mom\tmum,mob
joke\tchoke,yolk
seven\theaven,evan
milk\tsilk,mill
calendar\tcolander
traffic\tgraphic
pause\tpaws,pose
skip\tship,kip
volume\tvalium
morning\tmourning
moon\tmoan,noon
messages\tmassages
text\ttaxed,test
dad\tdead,dab
news\tnoose,nose
garage\tgarbage
door\tdoor,dour
lock\tlook,luck
eggs\tegg,legs
list\tlist,lest
spell\tsmell,spill
necessary\tnecessarily
"""


def _word(rng: random.Random, syllables: tuple[int, ...] = (2, 2, 2, 3)) -> str:
    return "".join(rng.choice(CONSONANTS) + rng.choice(VOWELS)
                   for _ in range(rng.choice(syllables)))


def _name(rng: random.Random, lengths: tuple[int, ...], prefixes: tuple[str, ...] = ()) -> str:
    n = rng.choice(lengths)
    words = [_word(rng) for _ in range(n)]
    if prefixes and n == 1 and rng.random() < 0.3:
        words.insert(0, rng.choice(prefixes))
    return " ".join(words)


def _sound_alike(rng: random.Random, name: str) -> str:
    """``name`` with one letter of one word swapped for another of the same class."""
    words = name.split()
    i = rng.randrange(len(words))
    w = words[i]
    j = rng.randrange(len(w))
    pool = VOWELS if w[j] in VOWELS else CONSONANTS
    if w[j] not in pool:  # prefixes such as "port" keep their letters
        return name
    words[i] = w[:j] + rng.choice([c for c in pool if c != w[j]]) + w[j + 1:]
    return " ".join(words)


def _popularities(rng: random.Random, n: int, exponent: float = 1.1) -> list[float]:
    pops = [1.0 / (r ** exponent) for r in range(1, n + 1)]
    total = sum(pops)
    pops = [round(p / total, 8) for p in pops]
    rng.shuffle(pops)
    return pops


def make_toy_kg(seed: int = 2021, n_states: int = 20, n_cities: int = 300,
                n_artists: int = 80, n_titles: int = 400) -> dict:
    """KG document with states/cities ("contains"/"is in") and
    titles/artists ("performed by"/"performed")."""
    rng = random.Random(seed)
    doc: dict = {}

    def add(prefix, i, name, type_name, pop):
        eid = f"{prefix}{i:04d}"
        doc[eid] = {"names": {name: {"word count": len(name.split())}},
                    "types": {type_name: {"popularity": pop}},
                    "relationships": []}
        return eid

    states = [add("s", i, _name(rng, (1, 1, 2), ("new", "north", "south")), "state", p)
              for i, p in enumerate(_popularities(rng, n_states))]
    cities = [add("c", i, _name(rng, (1, 1, 1, 2), ("port", "fort", "lake", "san")), "city", p)
              for i, p in enumerate(_popularities(rng, n_cities))]
    artists = [add("a", i, _name(rng, (1, 2, 2, 3), ("dj", "the", "lil")), "music artist", p)
               for i, p in enumerate(_popularities(rng, n_artists))]
    titles = [add("t", i, _name(rng, (1, 2, 2, 3, 4)), "music title", p)
              for i, p in enumerate(_popularities(rng, n_titles))]
    # sound-alike names: only context (e.g. the related entity) tells them apart
    for group in (cities, titles, artists):
        for k in range(1, len(group)):
            if rng.random() < 0.35:
                src = doc[group[rng.randrange(k)]]
                name = _sound_alike(rng, next(iter(src["names"])))
                doc[group[k]]["names"] = {name: {"word count": len(name.split())}}
    # a few entities carry a second, longer alias
    for eid in artists[::7] + cities[::11]:
        body = doc[eid]
        base = next(iter(body["names"]))
        alias = base + " " + _word(rng)
        body["names"][alias] = {"word count": len(alias.split())}

    state_pop = [doc[s]["types"]["state"]["popularity"] for s in states]
    for c in cities:
        s = rng.choices(states, weights=state_pop)[0]
        pop = doc[c]["types"]["city"]["popularity"]
        doc[c]["relationships"].append({"relation": "is in", "entity id": s, "popularity": pop})
        doc[s]["relationships"].append({"relation": "contains", "entity id": c,
                                        "popularity": pop})
    artist_pop = [doc[a]["types"]["music artist"]["popularity"] for a in artists]
    for t in titles:
        a = rng.choices(artists, weights=artist_pop)[0]
        pop = doc[t]["types"]["music title"]["popularity"]
        doc[t]["relationships"].append({"relation": "performed by", "entity id": a,
                                        "popularity": pop})
        doc[a]["relationships"].append({"relation": "performed", "entity id": t,
                                        "popularity": pop})
    doc["_strata"] = {t: dict(zip(("head", "torso", "tail"), c)) for t, c in STRATA.items()}
    return doc


FILES = {
    "toy_kg.json": lambda: json.dumps(make_toy_kg(), indent=1) + "\n",
    "templates.txt": lambda: ENTITY_TEMPLATES,
    "general_templates.txt": lambda: GENERAL_TEMPLATES,
    "confusions.txt": lambda: CONFUSIONS,
}


def data_path(name: str) -> Path:
    return Path(str(resources.files("deal") / "data" / name))


def write_bundle(directory: str | Path | None = None) -> None:
    directory = Path(directory) if directory else data_path("")
    directory.mkdir(parents=True, exist_ok=True)
    for name, make in FILES.items():
        (directory / name).write_text(make(), encoding="utf-8")


def toy_kg() -> KnowledgeGraph:
    return load_kg(data_path("toy_kg.json"))


def toy_templates() -> list[Template]:
    return load_templates(data_path("templates.txt"))


def general_templates() -> list[Template]:
    return load_templates(data_path("general_templates.txt"))


def toy_confusions() -> dict[str, list[str]]:
    return load_confusions(data_path("confusions.txt"))


if __name__ == "__main__":
    write_bundle()
