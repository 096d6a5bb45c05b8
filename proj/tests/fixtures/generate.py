#!/usr/bin/env python3
"""Regenerates the binary/test fixtures in this directory.

Outputs are deterministic for a fixed Pillow version and are checked in;
rerun only when the fixture design changes, and expect image hashes (and the
search fixture filenames derived from them) to move if Pillow's PNG encoder
changes.
"""

import hashlib
import json
import os
import sys

from PIL import Image, ImageDraw

HERE = os.path.dirname(os.path.abspath(__file__))


def write_bytes(rel, data):
    path = os.path.join(HERE, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        f.write(data)
    return path


def png_bytes(img):
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def sha(data):
    return hashlib.sha256(data).hexdigest()


def make_images():
    out = {}

    flower = Image.new("RGB", (32, 32), (34, 120, 40))  # green field
    d = ImageDraw.Draw(flower)
    d.ellipse((8, 8, 24, 24), fill=(200, 30, 60))  # red bloom
    d.ellipse((13, 13, 19, 19), fill=(240, 210, 60))  # yellow center
    out["images/flower.png"] = png_bytes(flower)

    chart = Image.new("RGB", (24, 24), (245, 245, 245))
    d = ImageDraw.Draw(chart)
    for i, h in enumerate([6, 12, 18]):
        d.rectangle((2 + i * 7, 22 - h, 7 + i * 7, 22), fill=(40, 80, 200))
    out["images/chart.png"] = png_bytes(chart)

    thumb_colors = {
        "thumb_rose": (220, 40, 80),
        "thumb_tulip": (240, 120, 40),
        "thumb_daisy": (250, 250, 240),
        "thumb_orchid": (170, 60, 200),
        "thumb_lily": (250, 230, 250),
    }
    for name, color in thumb_colors.items():
        out[f"images/{name}.png"] = png_bytes(Image.new("RGB", (8, 8), color))

    for rel, data in out.items():
        write_bytes(rel, data)
    return out


def normalized_text_key(query):
    return sha(" ".join(query.lower().split()).encode())


def write_search_fixture(kind, key, query, results):
    doc = {"kind": kind, "results": results}
    if query is not None:
        doc["query"] = query
    write_bytes(
        os.path.join("search", kind, key + ".json"),
        (json.dumps(doc, indent=2) + "\n").encode(),
    )


def make_search_fixtures(images):
    thumbs = {}
    for name in ["thumb_rose", "thumb_tulip", "thumb_daisy", "thumb_orchid", "thumb_lily"]:
        data = images[f"images/{name}.png"]
        thumbs[name] = sha(data)
        write_bytes(os.path.join("search", "thumbs", thumbs[name] + ".png"), data)

    flower_results = [
        {
            "title": "Rose (Rosa) - Flower Species Guide",
            "link": "https://flora.example/species/rose",
            "snippet": "Roses are woody perennials with layered red petals.",
            "thumbnail": thumbs["thumb_rose"],
        },
        {
            "title": "Tulip varieties - Garden Encyclopedia",
            "link": "https://flora.example/tulip",
            "snippet": "Tulips bloom in spring with cup-shaped flowers.",
            "thumbnail": thumbs["thumb_tulip"],
        },
        {
            "title": "Daisy (Bellis perennis) profile",
            "link": "https://flora.example/daisy",
            "snippet": "Daisies show white petals around a yellow disc.",
            "thumbnail": thumbs["thumb_daisy"],
        },
        {
            "title": "Orchid care and identification",
            "link": "https://flora.example/orchid",
            "snippet": "Orchids are exotic flowering plants.",
            "thumbnail": thumbs["thumb_orchid"],
        },
        {
            "title": "Lily species overview",
            "link": "https://flora.example/lily",
            "snippet": "Lilies grow from bulbs and flower in summer.",
            "thumbnail": thumbs["thumb_lily"],
        },
    ]
    write_search_fixture("image", sha(images["images/flower.png"]), None, flower_results)

    def text_results(n, topic):
        return [
            {
                "title": f"{topic} result {i + 1}",
                "link": f"https://ref.example/{topic.replace(' ', '-')}/{i + 1}",
                "snippet": f"Reference entry {i + 1} about {topic}.",
                "thumbnail": "",
            }
            for i in range(n)
        ]

    text_fixtures = {
        "capital of france": [
            {
                "title": "Paris - Capital of France",
                "link": "https://enc.example/paris",
                "snippet": "Paris is the capital and most populous city of France.",
                "thumbnail": "",
            }
        ]
        + text_results(4, "france"),
        "rose flower species": text_results(5, "rose species"),
        "three results query": text_results(3, "three"),
        "empty results query": [],
        "q one": text_results(2, "one"),
        "q two": text_results(1, "two"),
        "q three": text_results(1, "three pool"),
    }
    for query, results in text_fixtures.items():
        write_search_fixture("text", normalized_text_key(query), query, results)


def make_mocks():
    flower_demo = {
        "steps": [
            {
                "turn": 0,
                "respond": (
                    "<think>The flower is small; I will crop the bloom and look closer."
                    "</think><code>crop = image_1.crop((8, 8, 24, 24))\n"
                    "import matplotlib.pyplot as plt\n"
                    "plt.imshow(crop)\nplt.show()</code>"
                ),
            },
            {
                "turn": 1,
                "respond": (
                    "<think>The crop alone is not conclusive; search the web for this "
                    "image.</think><tool_call>{\"name\": \"image_search\"}</tool_call>"
                ),
            },
            {
                "turn": 2,
                "last_contains": "Rose (Rosa)",
                "respond": (
                    "<think>The top matches identify the flower as a rose."
                    "</think><answer>rose</answer>"
                ),
            },
            {
                "respond": (
                    "<think>Search results were inconclusive.</think>"
                    "<answer>unknown</answer>"
                )
            },
        ]
    }
    write_bytes("mocks/flower_demo.json", (json.dumps(flower_demo, indent=2) + "\n").encode())

    # Benchmark mock: per-item scripted behavior keyed by the item id embedded
    # in each question.  Tool mix gives deterministic stats; answers give
    # average accuracy 0.5 with all three integration items wrong.
    steps = []

    def item(qid, turns):
        for spec in turns:
            step = {"question_contains": qid}
            step.update(spec)
            steps.append(step)

    item("b01", [{"respond": "<think>A red layered bloom is a rose.</think><answer>rose</answer>"}])
    item(
        "b02",
        [
            {"turn": 0, "respond": "<think>Count with code.</think><code>print(2 + 3)</code>"},
            {"respond": "<think>Five objects.</think><answer>5</answer>"},
        ],
    )
    item(
        "b03",
        [
            {"turn": 0, "respond": "<think>Read the tallest bar.</think><code>print(max([6, 12, 18]) // 3)</code>"},
            {"respond": "<think>The ratio is 6.</think><answer>6</answer>"},
        ],
    )
    item(
        "b04",
        [
            {"turn": 0, "respond": "<think>Compute the product first.</think><code>v = 6 * 7\nprint(v)</code>"},
            {"turn": 1, "respond": "<think>Now verify by halving.</think><code>print(v - 0)</code>"},
            {"respond": "<think>Both agree.</think><answer>42</answer>"},
        ],
    )
    item("b05", [{"respond": "<think>Guessing between options.</think><answer>C</answer>"}])
    item(
        "b06",
        [
            {"turn": 0, "respond": "<think>Look this up.</think><tool_call>{\"name\": \"search\", \"arguments\": {\"query\": \"capital of france\"}}</tool_call>"},
            {"respond": "<think>The first result says Paris.</think><answer>Paris</answer>"},
        ],
    )
    item("b07", [{"respond": "<think>I believe it is 1900.</think><answer>1900</answer>"}])
    item(
        "b08",
        [
            {"turn": 0, "respond": "<think>Identify the product by image.</think><tool_call>{\"name\": \"image_search\"}</tool_call>"},
            {"respond": "<think>Matches point to a rose-themed item.</think><answer>rose</answer>"},
        ],
    )
    item(
        "b09",
        [
            {"turn": 0, "respond": "<think>Needs a lookup.</think><tool_call>{\"name\": \"search\", \"arguments\": {\"query\": \"q one\"}}</tool_call>"},
            {"respond": "<think>Unclear; committing.</think><answer>london</answer>"},
        ],
    )
    item(
        "b10",
        [
            {"turn": 0, "respond": "<think>Needs a lookup.</think><tool_call>{\"name\": \"search\", \"arguments\": {\"query\": \"q two\"}}</tool_call>"},
            {"respond": "<think>Still unsure.</think><answer>7</answer>"},
        ],
    )
    item(
        "b11",
        [
            {"turn": 0, "respond": "<think>Needs a lookup.</think><tool_call>{\"name\": \"search\", \"arguments\": {\"query\": \"q three\"}}</tool_call>"},
            {"respond": "<think>Going with blue.</think><answer>blue</answer>"},
        ],
    )
    item("b12", [{"respond": "<think>No idea.</think><answer>unsure</answer>"}])

    write_bytes("mocks/bench_mock.json", (json.dumps({"steps": steps}, indent=2) + "\n").encode())

    # Curation mock: pass/fail schedules per item and phase.  Counts are the
    # routing fixture: c01-c03 discard, c04-c07 RL, c08-c10 cold start.
    items = [
        {"question_contains": "c01", "correct_answer": "a1", "no_tool_pass": [0, 1, 2], "tool_pass": []},
        {"question_contains": "c02", "correct_answer": "a2", "no_tool_pass": [0, 1, 2, 3, 4, 5, 6, 7], "tool_pass": []},
        {"question_contains": "c03", "correct_answer": "a3", "no_tool_pass": [0, 2, 4, 6, 7], "tool_pass": []},
        {"question_contains": "c04", "correct_answer": "a4", "no_tool_pass": [], "tool_pass": [0, 1, 2, 3, 4, 5, 6, 7]},
        {"question_contains": "c05", "correct_answer": "a5", "no_tool_pass": [1, 5], "tool_pass": [0, 2, 4, 6]},
        {"question_contains": "c06", "correct_answer": "a6", "no_tool_pass": [3], "tool_pass": [7]},
        {"question_contains": "c07", "correct_answer": "a7", "no_tool_pass": [], "tool_pass": [1, 2, 3]},
        {"question_contains": "c08", "correct_answer": "a8", "no_tool_pass": [], "tool_pass": []},
        {"question_contains": "c09", "correct_answer": "a9", "no_tool_pass": [0, 4], "tool_pass": []},
        {"question_contains": "c10", "correct_answer": "a10", "no_tool_pass": [], "tool_pass": []},
    ]
    write_bytes("mocks/curation_mock.json", (json.dumps({"items": items}, indent=2) + "\n").encode())


def make_datasets():
    bench = [
        ("b01", "b01: What flower is depicted in the photo?", ["images/flower.png"], {"answer": "rose"}, ["perception"], "natural"),
        ("b02", "b02: How many objects are grouped on the table?", [], {"answer": "5", "answer_type": "numeric"}, ["perception"], "natural"),
        ("b03", "b03: What is the tallest-to-shortest bar ratio band in the chart?", ["images/chart.png"], {"answer": "6", "answer_type": "numeric"}, ["perception", "reasoning"], "chart"),
        ("b04", "b04: What is six times seven?", [], {"answer": "42", "answer_type": "numeric"}, ["reasoning"], "math"),
        ("b05", "b05: Which option completes the series? (A) 9 (B) 11 (C) 13", [], {"answer": "B", "answer_type": "multiple_choice"}, ["reasoning"], "math"),
        ("b06", "b06: What is the capital of France?", [], {"answer": "paris"}, ["search"], "knowledge"),
        ("b07", "b07: In which year was the pictured bridge opened?", [], {"answer": "1932", "answer_type": "numeric"}, ["search"], "knowledge"),
        ("b08", "b08: Which flower appears on this product label?", ["images/flower.png"], {"answer": "rose"}, ["perception", "search"], "product"),
        ("b09", "b09: Which city hosts the museum holding this painting?", [], {"answer": "paris"}, ["perception", "reasoning", "search"], "integration"),
        ("b10", "b10: How many floors has the tower shown behind the monument?", [], {"answer": "12", "answer_type": "numeric"}, ["perception", "reasoning", "search"], "integration"),
        ("b11", "b11: What jersey color did the winning team wear that season?", [], {"answer": "red"}, ["perception", "reasoning", "search"], "integration"),
        ("b12", "b12: What is the curator's favorite sculpture?", [], {"answer": "the thinker"}, [], "misc"),
    ]
    lines = []
    for bid, question, imgs, answer, labels, domain in bench:
        lines.append(
            json.dumps(
                {
                    "id": bid,
                    "question": question,
                    "images": imgs,
                    "answer": answer,
                    "labels": labels,
                    "domain": domain,
                },
                sort_keys=True,
            )
        )
    write_bytes("bench_12.jsonl", ("\n".join(lines) + "\n").encode())

    pool = []
    for i in range(1, 11):
        cid = f"c{i:02d}"
        pool.append(
            json.dumps(
                {
                    "id": cid,
                    "question": f"{cid}: curated training question {i}",
                    "images": [],
                    "answer": {"answer": f"a{i}"},
                    "source": "unit-pool",
                    "long_cot": cid == "c10",
                },
                sort_keys=True,
            )
        )
    write_bytes("curation_10.jsonl", ("\n".join(pool) + "\n").encode())


def main():
    images = make_images()
    make_search_fixtures(images)
    make_mocks()
    make_datasets()
    manifest = {}
    for root, _, files in os.walk(HERE):
        for name in sorted(files):
            if name == "generate.py":
                continue
            path = os.path.join(root, name)
            rel = os.path.relpath(path, HERE)
            with open(path, "rb") as f:
                manifest[rel] = sha(f.read())
    print(json.dumps(manifest, indent=2, sort_keys=True))


if __name__ == "__main__":
    sys.exit(main())
