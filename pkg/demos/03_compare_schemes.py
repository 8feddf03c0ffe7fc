"""
Four hours of traffic under each provisioning scheme
=====================================================

Runs SQLR (both reward settings), the EKF baseline and two static clusters on
the bundled four-hour test profile. It prints the summary table and renders
the comparison plots. This takes about a minute on one core.

Run with ``python3 demos/03_compare_schemes.py [out_dir]``.
"""

import json
import sys
from pathlib import Path

from sqlr.harness.cli import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/demo-compare")
status = main(["compare", "--seed", "3", "--out", str(out)])
if status:
    sys.exit(status)

rows = json.loads((out / "summary.json").read_text())
best = min((r for r in rows if r["blocking"] <= 0.05), key=lambda r: r["vm_hours"])
print(f"\ncheapest scheme under 5% blocking: {best['scheme']} ({best['vm_hours']} VM-h)")

# plots read the run directories only; rerunning this step is cheap
main(["report", *(str(out / r["scheme"]) for r in rows)])
print("plots written under", out)
