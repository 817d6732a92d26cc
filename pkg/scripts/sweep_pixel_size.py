"""Fitness of fixed designs across catalog sensors with a pretrained detector.

Shows the resolution/noise trade-off behind the day/night comparison without
running the search.
"""
import argparse

import numpy as np

from camforge.camera import fov_to_focal
from camforge.config import build_space, build_task, mono_preset
from camforge.optimize.experiment import evaluate, pretrain
from camforge.optimize.space import Genome, SensorGene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sensors", default="IMX183,IMX378,AR0521,IMX392,IMX174,IMX425")
    ap.add_argument("--hfov", type=float, default=70.0)
    ap.add_argument("--pitch", type=float, default=-10.0)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    for scen in ("day", "night"):
        cfg = mono_preset(scen, 0)
        task, space = build_task(cfg), build_space(cfg)
        cat = space.sensor_param().catalog
        models = task.new_models()
        pretrain(task, space, models, cfg.ga, cfg.training)
        for sid in args.sensors.split(","):
            i = cat.index_of(sid)
            e = cat[i]
            g = Genome((args.pitch, min(fov_to_focal(args.hfov, e.sensor_w_mm), 20.0), SensorGene(i, e.triplet)))
            fs = [evaluate(task, g, space, models, (r, "sweep")).fitness for r in range(args.repeats)]
            print(f"{scen:5s} {sid:10s} {e.pixel_um:5.2f} um  fitness {np.mean(fs):.3f} +- {np.std(fs):.3f}", flush=True)


if __name__ == "__main__":
    main()
