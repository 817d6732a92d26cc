"""Shared helpers for the experiment runners."""
import csv
import time
from pathlib import Path

from camforge.config import build_space, build_task
from camforge.optimize.experiment import run_joint, write_history
from camforge.optimize.space import genome_fields


def run(cfg, out_dir: Path, frozen: bool = False, scheme=None, workers: int = 1) -> dict:
    """One search; writes its history CSV and returns a summary row."""
    task, space = build_task(cfg), build_space(cfg, scheme)
    t = time.perf_counter()
    r = run_joint(task, space, cfg.ga, cfg.training, frozen=frozen, workers=workers)
    secs = time.perf_counter() - t
    out_dir.mkdir(parents=True, exist_ok=True)
    write_history(r.history, out_dir / "history.csv")
    row = {"seed": cfg.master_seed, "best_fitness": r.best_fitness, "seconds": round(secs, 1)}
    row.update(genome_fields(r.best_genome, space))
    row.update(r.best_metrics)
    return row


def write_summary(rows: list[dict], path: Path) -> None:
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, keys)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {path}")
