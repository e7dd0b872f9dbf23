"""Synthetic TPC-H ``lineitem`` dump in pg_dump COPY format.

Value distributions follow the dbgen rules (sparse order keys, retail price
formula, date offsets, return flag / line status cut-over, comment text taken
as random substrings of a grammar-generated text pool).
"""

from __future__ import annotations

import datetime as dt
import random

NOUNS = ("foxes ideas theodolites pinto beans instructions dependencies excuses "
         "platelets asymptotes courts dolphins multipliers sauternes warthogs frets "
         "dinos attainments somas Tiresias patterns forges braids hockey players "
         "frays warhorses dugouts notornis epitaphs pearls tithes waters orbits gifts "
         "sheaves depths sentiments decoys realms pains grouches escapades packages "
         "requests accounts deposits").split()
VERBS = ("sleep wake are cajole haggle nag use boost affix detect integrate maintain "
         "nod was lose sublate solve thrash promise engage hinder print x-ray breach "
         "eat grow impress mold poach serve run dazzle snooze doze unwind kindle play "
         "hang believe doubt").split()
ADJECTIVES = ("furious sly careful blithe quick fluffy slow quiet ruthless thin close "
              "dogged daring brave stealthy permanent enticing idle busy regular final "
              "ironic even bold silent").split()
ADVERBS = ("sometimes always never furiously slyly carefully blithely quickly "
           "fluffily slowly quietly ruthlessly thinly closely doggedly daringly "
           "bravely stealthily permanently enticingly idly busily regularly finally "
           "ironically evenly boldly silently").split()
PREPOSITIONS = ("about above across after against along among around at atop before "
                "behind beneath beside besides between beyond by despite during except "
                "for from inside into near of on outside over past since through "
                "throughout to toward under until up upon without with within").split()
AUXILIARIES = "do may might shall will would can could should must".split()
TERMINATORS = [".", ";", ":", "?", "!", "--"]

SHIP_INSTRUCT = ["DELIVER IN PERSON", "COLLECT COD", "NONE", "TAKE BACK RETURN"]
SHIP_MODE = ["REG AIR", "AIR", "RAIL", "SHIP", "TRUCK", "MAIL", "FOB"]

START = dt.date(1992, 1, 1)
END = dt.date(1998, 8, 2)
CURRENT = dt.date(1995, 6, 17)


def _sentence(rng: random.Random) -> str:
    noun_phrase = " ".join(filter(None, [
        rng.choice(ADJECTIVES) if rng.random() < 0.5 else "",
        rng.choice(ADJECTIVES) if rng.random() < 0.2 else "",
        rng.choice(NOUNS)]))
    verb_phrase = " ".join(filter(None, [
        rng.choice(AUXILIARIES) if rng.random() < 0.3 else "",
        rng.choice(VERBS),
        rng.choice(ADVERBS) if rng.random() < 0.5 else ""]))
    tail = ""
    if rng.random() < 0.5:
        tail = " " + rng.choice(PREPOSITIONS) + " the " + rng.choice(ADJECTIVES) + " " + rng.choice(NOUNS)
    return f"{noun_phrase} {verb_phrase}{tail}{rng.choice(TERMINATORS)}"


def text_pool(rng: random.Random, size: int) -> str:
    parts = []
    total = 0
    while total < size:
        s = _sentence(rng)
        parts.append(s)
        total += len(s) + 1
    return " ".join(parts)


def retail_price(partkey: int) -> float:
    return (90000 + ((partkey // 10) % 20001) + 100 * (partkey % 1000)) / 100.0


def lineitem_dump(size: int, seed: int = 1, scale: float = 0.00125) -> bytes:
    """Return roughly ``size`` octets of dump text (whole rows).

    ``scale`` is the TPC-H scale factor; it sets the part and supplier key
    ranges the way dbgen does (a ~1 MiB lineitem table is SF ~0.00125).
    """
    rng = random.Random(seed)
    parts = max(1, int(200_000 * scale))
    suppliers = max(1, int(10_000 * scale))
    pool = text_pool(rng, 300_000)
    head = (
        "--\n-- PostgreSQL database dump\n--\n\n"
        "SET statement_timeout = 0;\nSET client_encoding = 'UTF8';\n\n"
        "COPY public.lineitem (l_orderkey, l_partkey, l_suppkey, l_linenumber, "
        "l_quantity, l_extendedprice, l_discount, l_tax, l_returnflag, l_linestatus, "
        "l_shipdate, l_commitdate, l_receiptdate, l_shipinstruct, l_shipmode, "
        "l_comment) FROM stdin;\n")
    tail = "\\.\n\n--\n-- PostgreSQL database dump complete\n--\n"
    rows = [head]
    total = len(head) + len(tail)
    order_index = 0
    span = (END - START).days - 151
    while total < size:
        # dbgen order keys: 8 used, 24 skipped
        orderkey = (order_index // 8) * 32 + (order_index % 8) + 1
        order_index += 1
        orderdate = START + dt.timedelta(days=rng.randrange(span))
        for line in range(1, rng.randint(1, 7) + 1):
            partkey = rng.randint(1, parts)
            suppkey = (partkey + rng.randrange(4) * (suppliers // 4 + (partkey - 1) // suppliers)) % suppliers + 1
            qty = rng.randint(1, 50)
            price = qty * retail_price(partkey)
            discount = rng.randint(0, 10) / 100
            tax = rng.randint(0, 8) / 100
            ship = orderdate + dt.timedelta(days=rng.randint(1, 121))
            commit = orderdate + dt.timedelta(days=rng.randint(30, 90))
            receipt = ship + dt.timedelta(days=rng.randint(1, 30))
            rflag = rng.choice("RA") if receipt <= CURRENT else "N"
            status = "O" if ship > CURRENT else "F"
            clen = rng.randint(10, 43)
            cstart = rng.randrange(len(pool) - clen)
            comment = pool[cstart:cstart + clen]
            row = (f"{orderkey}\t{partkey}\t{suppkey}\t{line}\t{qty}\t{price:.2f}\t"
                   f"{discount:.2f}\t{tax:.2f}\t{rflag}\t{status}\t{ship}\t{commit}\t"
                   f"{receipt}\t{rng.choice(SHIP_INSTRUCT)}\t{rng.choice(SHIP_MODE)}\t"
                   f"{comment}\n")
            rows.append(row)
            total += len(row)
    rows.append(tail)
    return "".join(rows).encode("ascii")
