"""Run every example config under configs/ and print a verdict summary.

Usage: python scripts/run_all_configs.py [--out DIR] [--threads N]
Run from the repository root so relative basis-file paths resolve.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from voltlift.cli import main as cli_main


def run_all(out_root, threads):
    # *_basis.json files are data referenced by configs, not configs
    configs = [c for c in sorted(Path("configs").glob("*.json"))
               if not c.stem.endswith("_basis")]
    failures = 0
    for cfg in configs:
        out = Path(out_root) / cfg.stem
        t0 = time.perf_counter()
        rc = cli_main(["run", "--config", str(cfg), "--out", str(out),
                       "--threads", str(threads)])
        dt = time.perf_counter() - t0
        verdict = {}
        vfile = out / "verdict.json"
        if vfile.exists():
            verdict = json.loads(vfile.read_text())
        status = "ok" if rc == 0 else f"exit {rc}"
        brief = {k: v for k, v in verdict.items()
                 if k in ("passed", "max_rel_err", "r_hat", "w1",
                          "spearman", "margin", "kl_budget")}
        print(f"{cfg.stem:<20} {status:<8} {dt:6.1f}s  {brief}")
        failures += rc != 0
    return failures


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out")
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()
    sys.exit(min(run_all(args.out, args.threads), 1))
