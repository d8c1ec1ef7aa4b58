"""The batch workflow through the command-line entry point.

Equivalent shell session:

    incomepool simulate --seed 7 --regime partial:food --out work/panel.csv
    incomepool estimate --panel work/panel.csv --seed 7 -B 300 --splits --out-dir work/est
    incomepool unrestricted --panel work/panel.csv --seed 7 -B 300 --out-dir work/a1
"""

import tempfile
from pathlib import Path

from incomepool.cli import main

work = Path(tempfile.mkdtemp(prefix="incomepool-demo-"))
panel = work / "panel.csv"
steps = [
    ["simulate", "--seed", "7", "--regime", "partial:food", "--out", str(panel)],
    ["estimate", "--panel", str(panel), "--seed", "7", "-B", "300", "--splits",
     "--out-dir", str(work / "est"), "--print-summary"],
    ["unrestricted", "--panel", str(panel), "--seed", "7", "-B", "300", "--out-dir", str(work / "a1")],
]
for argv in steps:
    print("$ incomepool", " ".join(argv))
    print("exit code", main(argv))

for path in sorted(work.rglob("*")):
    if path.is_file():
        print(f"{path.relative_to(work)}  ({path.stat().st_size:,} bytes)")
print(f"\nOutputs are in {work}")
