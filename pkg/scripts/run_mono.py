"""Mono multi-task search in day and night lighting; compares the selected pixel size."""
import argparse
import statistics
from pathlib import Path

from _common import run, write_summary
from camforge.config import mono_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--scenarios", nargs="+", default=["day", "night"], choices=["day", "night"])
    ap.add_argument("--schemes", nargs="+", default=["quantized"], choices=["quantized", "discrete"])
    ap.add_argument("--out", type=Path, default=Path("runs/mono"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    rows = []
    for s in range(args.seeds):
        for scen in args.scenarios:
            for scheme in args.schemes:
                row = run(mono_preset(scen, s, scheme), args.out / f"{scen}_{scheme}_seed{s}", workers=args.workers)
                rows.append({"scenario": scen, "scheme": scheme, **row})
                print(scen, scheme, s, f"{row['best_fitness']:.4f}", row["sensor_id"], row["pixel_um"],
                      f"{row['seconds']}s", flush=True)
    write_summary(rows, args.out / "summary.csv")
    for scen in args.scenarios:
        for scheme in args.schemes:
            px = [r["pixel_um"] for r in rows if r["scenario"] == scen and r["scheme"] == scheme]
            print(f"{scen} {scheme}: median pixel {statistics.median(px)} um over {len(px)} seeds")
    if len(args.schemes) == 2:
        for scen in args.scenarios:
            by = {(r["scheme"], r["seed"]): r["best_fitness"] for r in rows if r["scenario"] == scen}
            wins = sum(by["quantized", s] >= by["discrete", s] for s in range(args.seeds))
            print(f"{scen}: quantized >= discrete on {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
