"""Sequential MNIST -> Fashion-MNIST with and without consolidation.

Without consolidation the first task's accuracy collapses while the second is
learned; with it, updates that would pull settled weights off their levels are
damped and both tasks coexist. This demo runs a shortened schedule so it
finishes in a few minutes; the full experiment lives behind `memqnn train`.

Run:  python demos/05_sequential_tasks.py [data_dir]
      (data_dir defaults to ./data; fetch with `memqnn fetch-data` first)
"""

import sys
from pathlib import Path

from memqnn import TaskSpec, preset, run_sequential

data_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "data")
if not (data_dir / "mnist").exists():
    sys.exit(f"no datasets under {data_dir}; run `memqnn fetch-data --dest {data_dir}`")

short = [TaskSpec("mnist", 6), TaskSpec("fmnist", 4, dataset="fashion-mnist")]

for m_star in (0.0, 3.0):
    cfg = preset(
        "desk",
        tasks=short,
        pretrain_epochs=2,
        m_star=m_star,
        seed=11,
        data_dir=str(data_dir),
        out_dir=f"runs/demo05_mstar{m_star:g}",
        eval_batch=2000,
    )
    print(f"\n=== m* = {m_star:g} ===")
    res = run_sequential(cfg, log=print)
    peak = res.max_accuracy("mnist")
    final = res.final_accuracy("mnist")
    print(f"MNIST peak {peak:.2f}% -> after Fashion-MNIST {final:.2f}% "
          f"(drop {peak - final:.2f} points); Fashion-MNIST {res.final_accuracy('fmnist'):.2f}%")

print("\nThe m*=3 run keeps most of its MNIST accuracy; the m*=0 run gives it up.")
print("Metrics CSVs are under runs/demo05_mstar*/metrics.csv, one row per epoch.")
