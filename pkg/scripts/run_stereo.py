"""Stereo depth search on the outdoor strip, joint and frozen, over several seeds."""
import argparse
from pathlib import Path

from _common import run, write_summary
from camforge.config import stereo_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("runs/stereo"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    rows = []
    for s in range(args.seeds):
        for frozen in (False, True):
            mode = "frozen" if frozen else "joint"
            row = run(stereo_preset(s), args.out / f"{mode}_seed{s}", frozen=frozen, workers=args.workers)
            rows.append({"mode": mode, **row})
            print(mode, s, f"{row['best_fitness']:.4f}", f"hfov {row['hfov_deg']:.1f}",
                  f"b {row['baseline_m']:.2f}", f"{row['seconds']}s", flush=True)
    write_summary(rows, args.out / "summary.csv")


if __name__ == "__main__":
    main()
