"""Running a small benchmark grid and reading the CSV outputs.

Equivalent to:

    helmdd grid --k-list 8 --n-list 4,16 --tau-list 0.4,0.6 \
        --methods one_level,delta_k --media homogeneous \
        --n-cells 80 --out demo_grid_results
"""

from pathlib import Path

from helmdd.bench import RunConfig, run_grid

out = Path("demo_grid_results")
base = RunConfig(k=8.0, N=4, method="delta_k", tau=0.5, n_cells=80)
records = run_grid(base, ks=[8.0], Ns=[4, 16], taus=[0.4, 0.6],
                   methods=["one_level", "delta_k"], media=["homogeneous"],
                   out_dir=out)

print((out / "results.csv").read_text())
print("companion plot files:", sorted(p.name for p in out.glob("*.csv")))
