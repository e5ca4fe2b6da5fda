#!/usr/bin/env python3
"""Regenerates tests/fixtures/e2e: a 20-image scripted corpus.

Golden captions are derived here from the scripted answers and the wire
metadata, independently of the Rust implementation. Run from any directory;
output is deterministic.
"""

import datetime as dt
import json
import pathlib
import shutil
import struct
import zlib

OUT = pathlib.Path(__file__).resolve().parent / "e2e"
CREDIT = "Mandatory Credit: Pat Lee-Wire Photos"

HAWKS = {
    "team_name": "Riverton Hawks",
    "aliases": ["Hawks", "RIV"],
    "effective_date": "2025-09-01",
    "entries": [
        {"jersey": 7, "name": "Marcus Doyle", "position": "quarterback"},
        {"jersey": 22, "name": "Andre Whitfield", "position": "running back"},
        {"jersey": 88, "name": "Tomas Reyes", "position": "wide receiver"},
        {"jersey": 54, "name": "Caleb Ortiz", "position": "linebacker"},
        {"name": "Dana Pruitt", "position": "head coach"},
    ],
}
BEARS = {
    "team_name": "Lakeside Bears",
    "aliases": ["Bears", "LAK"],
    "effective_date": "2025-09-01",
    "entries": [
        {"jersey": 12, "name": "Jalen Brooks", "position": "quarterback"},
        {"jersey": 31, "name": "Owen Fischer", "position": "safety"},
        {"jersey": 81, "name": "Luis Moreno", "position": "tight end"},
        {"jersey": 97, "name": "Isaac Grant", "position": "defensive end"},
        {"name": "Rob Kessler", "position": "head coach"},
    ],
}
PLAYERS = {
    (r["team_name"], e["jersey"]): (e["name"], e["position"])
    for r in (HAWKS, BEARS)
    for e in r["entries"]
    if "jersey" in e
}

ACTIONS = {
    7: ("throws a pass", "throws the ball downfield"),
    22: ("runs with the ball", "carries the ball up the middle"),
    88: ("catches a pass", "makes a catch near the sideline"),
    54: ("tackles the ball carrier", "brings down the runner"),
    12: ("scrambles out of the pocket", "scrambles away from pressure"),
    31: ("breaks up a pass", "deflects a pass in the end zone"),
    81: ("catches a touchdown pass", "hauls in a touchdown catch"),
    97: ("sacks the quarterback", "records a sack"),
}

# (stem, true entities [(team, jersey, conf)], level1 answers, level2 kind)
#   level2 kind: "full" -> complete caption, "body" -> body only (repaired)
SCENARIOS = [
    ("img-001", [("Riverton Hawks", 7, "HIGH")], None, "full"),
    ("img-002", [("Lakeside Bears", 12, "HIGH"), ("Riverton Hawks", 54, "HIGH")], None, "full"),
    ("img-003", [("Riverton Hawks", 22, "HIGH"), ("Lakeside Bears", 31, "LOW")], None, "full"),
    ("img-004", [("Lakeside Bears", 81, "HIGH")], None, "full"),
    ("img-005", [("Riverton Hawks", 88, "HIGH")], None, "full"),
    ("img-006", [("Lakeside Bears", 97, "HIGH"), ("Riverton Hawks", 7, "HIGH")], None, "full"),
    ("img-007", [("Riverton Hawks", 54, "LOW")], None, "full"),
    ("img-008", [("Lakeside Bears", 31, "HIGH")], None, "full"),
    ("img-009", [("Riverton Hawks", 7, "HIGH"), ("Riverton Hawks", 88, "LOW")], None, "full"),
    ("img-010", [("Lakeside Bears", 12, "HIGH")], None, "full"),
    ("img-011", [("Riverton Hawks", 22, "HIGH")], None, "full"),
    ("img-012", [("Lakeside Bears", 81, "HIGH"), ("Riverton Hawks", 54, "HIGH")], None, "full"),
    ("img-013", [], ["NONE"], "full"),
    # Garbage first; the re-ask gets a valid answer.
    ("img-014", [("Riverton Hawks", 7, "HIGH")],
     ["Sure! I can see the quarterback.", "Riverton Hawks (7) [HIGH]"], "full"),
    ("img-015", [("Riverton Hawks", 7, "HIGH")], None, "body"),
    # Alias and lower-case confidence.
    ("img-016", [("Riverton Hawks", 22, "HIGH")], ["Hawks (22) [high]"], "full"),
    # Team not on any roster.
    ("img-017", [], ["Visitors (5) [HIGH]"], "full"),
    # Jersey not on the roster.
    ("img-018", [], ["Lakeside Bears (99) [HIGH]"], "full"),
    # Duplicate label; the HIGH one wins.
    ("img-019", [("Riverton Hawks", 88, "HIGH")],
     ["Riverton Hawks (88) [LOW]\nriverton  HAWKS (88) [HIGH]"], "full"),
    # CRLF and a blank line.
    ("img-020", [("Lakeside Bears", 97, "HIGH")], ["\r\nLakeside Bears (97) [HIGH]\r\n"], "full"),
]


def fmt_date(d):
    return f"{d.strftime('%b')} {d.day}, {d.year}"


def png(seed):
    w = h = 8
    rgb = bytes([(seed * 37) % 256, (seed * 91) % 256, (seed * 53) % 256])
    raw = b"".join(b"\x00" + rgb * w for _ in range(h))

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b""))


def phrase(team, jersey):
    name, pos = PLAYERS[(team, jersey)]
    return f"{team} {pos} {name} ({jersey})"


def body_for(entities, variant, generic):
    high = [(t, j) for t, j, c in entities if c == "HIGH" and (t, j) in PLAYERS]
    if not high:
        return generic
    parts = []
    for i, (t, j) in enumerate(high):
        action = ACTIONS[j][variant]
        parts.append(f"{phrase(t, j)} {action}" if i == 0 else f"{phrase(t, j)} reacts")
    return " as ".join(parts) + " during the game."


def main():
    if OUT.exists():
        shutil.rmtree(OUT)
    (OUT / "golden").mkdir(parents=True)

    with open(OUT / "rosters.jsonl", "w") as f:
        for r in (HAWKS, BEARS):
            f.write(json.dumps(r) + "\n")

    two_level = {"delay_ms": 0, "level1": {}, "level2": {}}
    direct = {"delay_ms": 0, "level1": {}, "level2": {}}
    aux = {}
    gt_lines = []
    sft = []

    for n, (stem, entities, l1, l2kind) in enumerate(SCENARIOS, start=1):
        date = dt.date(2025, 9, 7) + dt.timedelta(days=7 * (n - 1))
        home = n % 2 == 1
        meta = {
            "event_date": date.isoformat(),
            "location": "Riverton, Ohio, USA" if home else "Lakeside, Michigan, USA",
            "venue": "Hawks Field" if home else "Bear Den Stadium",
            "event_title": "Bears at Hawks" if home else "Hawks at Bears",
            "credit": CREDIT,
            "source_id": stem,
        }
        (OUT / f"{stem}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")
        (OUT / f"{stem}.png").write_bytes(png(n))

        if l1 is None:
            lines = [f"{t} ({j}) [{c}]" for t, j, c in entities]
            l1 = ["\n".join(lines)]
        two_level["level1"][stem] = l1 if len(l1) > 1 else l1[0]
        direct["level1"][stem] = two_level["level1"][stem]

        prefix = f"{fmt_date(date)}; {meta['location']}; "
        body = body_for(entities, 0, "Players line up before the snap during the game.")
        if l2kind == "full":
            answer = f"{prefix}{body} {CREDIT}"
            golden = answer
        else:
            # Body without segments or final period: the pipeline wraps it.
            answer = body.rstrip(".")
            golden = f"{prefix}{body} {CREDIT}"
        two_level["level2"][stem] = answer
        direct["level2"][stem] = f"{prefix}A football player in a helmet on the field. {CREDIT}"
        (OUT / "golden" / f"{stem}.txt").write_text(golden + "\n")

        reference = f"{prefix}{body_for(entities, 1, 'Players line up at the line of scrimmage.')} {CREDIT}"
        gt_dets = [{"team_ref": t, "jersey_number": j, "confidence": c} for t, j, c in entities]
        gt_lines.append(json.dumps({"source_id": stem, "detections": gt_dets, "caption": reference}))

        if entities:
            aux[stem] = [
                {"kind": "LOGO", "payload": entities[0][0], "score": 0.91},
                {"kind": "OCR_TEXT", "payload": str(entities[0][1]), "score": 0.77},
            ]
        sft.append(json.dumps({
            "image_ref": f"{stem}.png",
            "metadata": meta,
            "gt_detections": gt_dets,
            "gt_caption": reference,
            "aux": aux.get(stem, []),
        }))

    (OUT / "two_level.json").write_text(json.dumps(two_level, indent=2, sort_keys=True) + "\n")
    (OUT / "direct.json").write_text(json.dumps(direct, indent=2, sort_keys=True) + "\n")
    (OUT / "aux_annotations.json").write_text(json.dumps(aux, indent=2, sort_keys=True) + "\n")
    (OUT / "ground_truth.jsonl").write_text("\n".join(gt_lines) + "\n")
    (OUT / "sft_annotations.jsonl").write_text("\n".join(sft) + "\n")


if __name__ == "__main__":
    main()
