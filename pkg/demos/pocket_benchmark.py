"""Run the entire benchmark pipeline at pocket scale.

Generates a 12-manoeuvre catalogue, prepares and splits it, tunes the
filter noise (short budget), trains the four networks briefly, runs all
eight estimators on the held-out test manoeuvres, and prints the two
comparison tables next to the published reference values. Expect a few
tens of seconds; the full-scale run (60 manoeuvres, budget 60, full
training) lives behind the same API with different config numbers.

Artifacts land in runs/pocket-demo/ — the same layout the CLI produces,
so `slipbench report --out runs/pocket-demo` can re-render them.
"""

import time
from pathlib import Path

from slipbench.config import RunConfig
from slipbench.pipeline import run_all

OUT = Path("runs/pocket-demo")


def main() -> None:
    config = RunConfig(
        seed=11,
        out_dir=str(OUT),
        catalogue="pocket",
        tuning_budget=5,
        nn_tuning_budget=0,
        ffnn_max_epochs=25,
        rnn_max_epochs=6,
        rnn_train_stride=4,
    )
    t0 = time.perf_counter()
    run_all(config)
    print(f"pipeline finished in {time.perf_counter() - t0:.0f} s\n")

    for family in ("model_based", "data_driven"):
        print((OUT / "report" / f"{family}.txt").read_text())
    print("Reference rows are the published full-scale results; at pocket")
    print("scale the absolute numbers differ (tiny test split, short")
    print("training) but the tyre-force columns already earn their keep.")


if __name__ == "__main__":
    main()
