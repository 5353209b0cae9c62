#!/usr/bin/env python3
"""Write a few ready-to-render scenario files for `rigview synth`."""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from rigview.synthgen import Occluder, Scenario

SCENARIOS = {
    # stationary rig, clean views: calibration sanity check
    "stationary.json": Scenario(
        width=640, height=480, fps=30.0, duration=300, n_cameras=5,
    ),
    # one rig move at the 700 s mark, sampled at 1 fps to keep it small
    "one_move.json": Scenario(
        width=320, height=240, fps=1.0, duration=1500, n_cameras=5,
        rig_moves=(700,),
    ),
    # a camera blocked for the first half of the recording
    "occluded_start.json": Scenario(
        width=320, height=240, fps=1.0, duration=300, n_cameras=5,
        occluders=(Occluder(camera=1, coverage=0.6, start=1, end=150),),
    ),
    # heavy alternating occlusion that forces per-frame view switching
    "alternating.json": Scenario(
        width=320, height=240, fps=30.0, duration=120, n_cameras=5,
        misalignment=1.4,
        occluders=(
            Occluder(camera=1, coverage=0.65, start=41, end=120, modulus=2, phase=0),
            Occluder(camera=2, coverage=0.65, start=41, end=120, modulus=2, phase=1),
            Occluder(camera=0, coverage=0.5, start=41, end=120),
            Occluder(camera=3, coverage=0.5, start=41, end=120),
            Occluder(camera=4, coverage=0.5, start=41, end=120),
        ),
    ),
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="scenarios", help="target directory")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, scenario in SCENARIOS.items():
        path = out / name
        path.write_text(json.dumps(scenario.to_json(), indent=1) + "\n")
        print(f"wrote {path}")
    print(f"\nrender one with: rigview synth --spec {out}/stationary.json --out scene")
    return 0


if __name__ == "__main__":
    sys.exit(main())
