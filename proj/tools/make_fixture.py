#!/usr/bin/env python3
"""Writes the synthetic 20-video canonical-jsonl corpus used by the tests.

Output is deterministic; the tests pin its sha256, so rerun only when the
fixture is meant to change.
"""
import argparse
import json
import random

SUBJECTS = [
    "a woman", "a man", "a child", "an old man", "a chef", "a cyclist", "a dog",
    "a girl", "a boy", "a teacher", "a mechanic", "a gardener", "a painter",
]
ACTIONS = [
    "opens the front door", "pours water into a glass", "ties a pair of shoes",
    "slices a loaf of bread", "waves at the camera", "picks up a red umbrella",
    "climbs a short ladder", "writes on a whiteboard", "feeds a cat",
    "plants a seedling in a pot", "rides an exercise bike",
    "folds a blue towel", "stirs a pot of soup", "reads a newspaper",
    "throws a ball across the yard", "washes a car", "lights a candle",
    "paints a fence white", "carries a box upstairs", "sweeps the floor",
    "checks a wristwatch", "closes a laptop", "hangs a coat on a hook",
    "waters the tomato plants", "answers a phone call", "rolls out dough",
]

# (scene count, duration profile); profiles shape scene lengths so the corpus
# covers the trimming cases: plain, long (prefix trimmed) and over budget.
LAYOUT = [
    (8, "short"), (7, "short"), (9, "short"), (7, "long"), (8, "short"), (7, "short"),
    (2, "short"), (2, "short"), (2, "long"),
    (3, "short"), (3, "long"), (4, "short"), (4, "short"), (5, "short"), (6, "long"),
    (3, "over"), (2, "over"),
    (1, "short"), (1, "long"),
    (5, "short"),
]


def scene_lengths(rng, n, profile):
    if profile == "short":
        return [round(rng.uniform(4.0, 14.0), 1) for _ in range(n)]
    if profile == "long":
        return [round(rng.uniform(20.0, 45.0), 1) for _ in range(n)]
    # first scene alone exceeds the 105 s budget
    return [round(rng.uniform(110.0, 140.0), 1)] + [round(rng.uniform(10.0, 30.0), 1) for _ in range(n - 1)]


def make_video(rng, idx, n, profile):
    subject = SUBJECTS[idx % len(SUBJECTS)]
    actions = rng.sample(ACTIONS, n)
    t = round(rng.uniform(0.0, 2.0), 1)
    scenes = []
    for action, length in zip(actions, scene_lengths(rng, n, profile)):
        end = round(t + length, 1)
        caption = f"{subject.capitalize()} {action}."
        scenes.append({"start_s": t, "end_s": end, "caption": caption})
        t = round(end + rng.choice([0.0, 0.0, 0.4, 1.2]), 1)
    vid = f"vid{idx:03d}"
    return {
        "video_id": vid,
        "media_path": f"media/{vid}.mp4",
        "duration_s": round(t + rng.uniform(0.0, 3.0), 1),
        "scenes": scenes,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/data/fixture_corpus.jsonl")
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    videos = [make_video(rng, i, n, p) for i, (n, p) in enumerate(LAYOUT)]
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        for v in videos:
            f.write(json.dumps(v, ensure_ascii=False, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
