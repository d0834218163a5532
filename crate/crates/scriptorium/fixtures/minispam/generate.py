"""Regenerates the mini spam corpus. Output is deterministic for a fixed seed."""

import json
import random
from pathlib import Path

SEED = 20230601
HERE = Path(__file__).parent

URLS = ["http://bit.ly/2xk9", "www.freegiftz.net", "http://tinyurl.com/q8e", "www.mybeats.co"]
PRIZES = ["iphone", "gift card", "ps5", "laptop", "amazon voucher"]
THINGS = ["daily vlogs", "guitar covers", "gaming videos", "prank videos", "makeup tutorials"]
PLATFORMS = ["instagram", "twitter", "tiktok", "soundcloud"]
ARTISTS = ["Katy", "Eminem", "Shakira", "Psy", "Rihanna"]

SPAM = [
    "check out my channel {url}",
    "Check out my new video, you will not regret it",
    "please subscribe to my channel for {thing}",
    "subscribe and like, I post {thing} every week",
    "win a free {prize} now at {url}",
    "FREE {prize} GIVEAWAY visit {url}",
    "I earn $500 a day working from home, visit {url}",
    "follow me on {platform} for {thing}",
    "go to {url} and claim your {prize}",
    "hey guys can you help me reach 1000 subs",
    "my cousin makes {thing}, give him a chance on {platform}",
    "CLICK HERE {url} BEST DEALS",
]
HAM = [
    "I love this song so much",
    "love the beat in this one",
    "this song brings back so many memories",
    "{artist} never disappoints",
    "who is still listening in {year}?",
    "the chorus gives me chills every time",
    "great video, the dancing is amazing",
    "this was playing at my wedding",
    "{artist} has the best voice",
    "I can't stop listening to this track",
    "the music video is so colorful",
    "my little sister dances to this every day",
    "this is my favorite song of all time",
    "saw {artist} live last summer, incredible show",
]


def render(template, rng):
    return template.format(
        url=rng.choice(URLS),
        prize=rng.choice(PRIZES),
        thing=rng.choice(THINGS),
        platform=rng.choice(PLATFORMS),
        artist=rng.choice(ARTISTS),
        year=rng.choice([2019, 2020, 2021, 2022, 2023]),
    )


def main():
    rng = random.Random(SEED)
    docs = []
    for i in range(200):
        spam = rng.random() < 0.5
        text = render(rng.choice(SPAM if spam else HAM), rng)
        docs.append({"text": text, "label": "spam" if spam else "ham"})
    splits = {"train": docs[:120], "valid": docs[120:160], "test": docs[160:]}
    for name, rows in splits.items():
        with open(HERE / f"{name}.jsonl", "w", encoding="utf-8", newline="\n") as out:
            for j, row in enumerate(rows):
                record = {"id": f"{name}-{j:03d}", "text": row["text"], "label": row["label"]}
                out.write(json.dumps(record, ensure_ascii=False) + "\n")
    classes = {"names": ["ham", "spam"], "positive_class": "spam", "prior": None}
    (HERE / "classes.json").write_text(json.dumps(classes) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
