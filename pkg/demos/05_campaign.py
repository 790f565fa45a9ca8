"""A small Monte Carlo campaign, written to CSV like the command-line tool does.

Run: python3 demos/05_campaign.py [out_dir]
The same campaign from the shell:
    cellfree-sim run --config configs/desk.cfg --out out --drops 5 --pmax-dbm 0,10,20 \\
        --modes uc-fd-perfect-opt_gee,uc-fd-perfect-uni,cf-fd-perfect-opt_gee,cf-fd-perfect-uni
"""
import sys

from mmwave_cellfree import ScenarioConfig
from mmwave_cellfree.harness import RunMode, run_campaign, write_results

out = sys.argv[1] if len(sys.argv) > 1 else "campaign_out"
cfg = ScenarioConfig(num_aps=20, num_ms=4, n_ap=8, n_ms=4, drops=5)
modes = [RunMode.parse(f"{m}-fd-perfect-{a}") for m in ("uc", "cf") for a in ("opt_gee", "uni")]
res = run_campaign(cfg, [0, 10, 20], modes)
files = write_results(res, out)
print(f"{len(res.rows)} rows -> {files[0]}")

print(f"{'run':<32} {'dBm':>4} {'GEE':>8} {'sum-ASE':>8}")
for (run, p), (n, gm, gs, am, _) in res.aggregates().items():
    print(f"{run.label():<32} {p:>4g} {gm:8.2f} {am:8.2f}")
