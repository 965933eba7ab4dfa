"""Write the occupancy map used by the unstructured scenario (plain PGM, 0 = occupied)."""
import argparse
from pathlib import Path

import numpy as np

RES = 0.05
WIDTH, HEIGHT = 12.0, 8.0
# (kind, cx, cy, a, b): axis-aligned boxes with half sizes a, b and discs with radius a
SHAPES = [
    ("box", 3.5, 3.0, 0.6, 0.5),
    ("box", 5.5, 5.4, 0.5, 0.6),
    ("disc", 7.5, 3.3, 0.5, 0.0),
    ("box", 9.5, 5.9, 0.5, 0.5),
    ("disc", 6.0, 1.5, 0.6, 0.0),
    ("box", 2.5, 6.5, 0.8, 0.3),
    ("disc", 10.3, 2.5, 0.5, 0.0),
]


def occupancy() -> np.ndarray:
    h, w = int(round(HEIGHT / RES)), int(round(WIDTH / RES))
    ys, xs = np.mgrid[0:h, 0:w]
    cx, cy = (xs + 0.5) * RES, (ys + 0.5) * RES
    occ = np.zeros((h, w), dtype=bool)
    for kind, x, y, a, b in SHAPES:
        if kind == "box":
            occ |= (np.abs(cx - x) <= a) & (np.abs(cy - y) <= b)
        else:
            occ |= np.hypot(cx - x, cy - y) <= a
    return occ


def write_pgm(path: Path, occ: np.ndarray) -> None:
    img = np.where(occ, 0, 255)[::-1]  # first image row is the top of the map
    lines = ["P2", f"{img.shape[1]} {img.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in img]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "scenarios" / "unstructured.pgm"))
    args = ap.parse_args()
    write_pgm(Path(args.out), occupancy())
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
