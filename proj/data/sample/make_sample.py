"""Regenerates the sample dataset in this directory (deterministic)."""
import math
import random
import struct
import zlib
from pathlib import Path

HERE = Path(__file__).resolve().parent
W, H = 16, 12
# Cityscapes-style class ids.
ROAD, SIDEWALK, BUILDING, WALL, FENCE, POLE, VEGETATION, TERRAIN, SKY, CAR = 0, 1, 2, 3, 4, 5, 8, 9, 10, 13
CLASSES = [ROAD, SIDEWALK, BUILDING, WALL, FENCE, POLE, VEGETATION, TERRAIN, SKY, CAR]


def png(path, rgb):
    raw = b"".join(b"\x00" + bytes(rgb) * 8 for _ in range(8))
    def chunk(tag, data):
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    body = chunk(b"IHDR", struct.pack(">IIBBBBB", 8, 8, 8, 2, 0, 0, 0)) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")
    path.write_bytes(b"\x89PNG\r\n\x1a\n" + body)


def main():
    rng = random.Random(2024)
    (HERE / "segmaps").mkdir(exist_ok=True)
    (HERE / "histograms").mkdir(exist_ok=True)
    (HERE / "images").mkdir(exist_ok=True)
    manifest = ["image_id,segmap,histogram,wire,car_count,lat,lon"]
    latent = {}
    for i in range(24):
        image_id = f"img{i:03d}"
        weights = [rng.uniform(0.2, 3.0) for _ in CLASSES]
        labels = rng.choices(CLASSES, weights=weights, k=W * H)
        lines = [f"{W} {H}"] + [" ".join(str(v) for v in labels[r * W:(r + 1) * W]) for r in range(H)]
        (HERE / "segmaps" / f"{image_id}.txt").write_text("\n".join(lines) + "\n")
        spread = rng.randint(8, 200)
        centre = rng.randint(40, 215)
        hist = [0] * 256
        for _ in range(W * H * 4):
            hist[min(255, max(0, int(rng.gauss(centre, spread / 3))))] += 1
        (HERE / "histograms" / f"{image_id}.txt").write_text(" ".join(map(str, hist)) + "\n")
        wire = int(rng.random() < 0.4)
        cars = rng.randint(0, 6)
        manifest.append(f"{image_id},segmaps/{image_id}.txt,histograms/{image_id}.txt,{wire},{cars},"
                        f"{35.0 + rng.uniform(0, 0.05):.5f},{139.0 + rng.uniform(0, 0.05):.5f}")
        green = sum(1 for v in labels if v in (VEGETATION, TERRAIN)) / (W * H)
        walls = sum(1 for v in labels if v in (WALL, FENCE)) / (W * H)
        latent[image_id] = 4 * green - 3 * walls - 0.3 * cars - 0.5 * wire + rng.gauss(0, 0.3)
        if i < 6:
            png(HERE / "images" / f"{image_id}.png", [int(200 * green) + 30, 120, int(200 * walls) + 30])
    (HERE / "manifest.csv").write_text("\n".join(manifest) + "\n")

    ids = sorted(latent)
    log = []
    t = 1_700_000_000
    for k in range(240):
        a, b = rng.sample(ids, 2)
        p = 1 / (1 + math.exp(-(latent[a] - latent[b]) * 2))
        winner, loser = (a, b) if rng.random() < p else (b, a)
        t += rng.randint(1, 40)
        age = rng.choice(["18-24", "25-34", "35-44", "-"])
        gender = rng.choice(["female", "male", "-"])
        log.append(f"{t}\tsess{k // 20:02d}\t{winner}\t{loser}\t{age}\t{gender}\t-")
    (HERE / "comparisons.tsv").write_text("\n".join(log) + "\n")


if __name__ == "__main__":
    main()
