"""Joint search on a task whose target hides a daily cycle.

The target is ``3 sin(2 pi hour / 24) + 0.5 load``.  A ridge model on the raw
``hour`` column cannot express the sine, so the root score is poor.  The
scripted proposer offers ``cyclic_encode(hour)`` among six decoys; the tree
search has to find it and the BO side then tunes the regularization.

    python demos/cyclic_search.py [output_dir]
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

from jointfe.cli import main
from jointfe.synthetic import write_cyclic_project


def demo(workdir: Path) -> None:
    config = write_cyclic_project(workdir / "project", n=240, seed=0, budget=50)
    print(f"project written to {config.parent}\n")
    main(["validate", str(config.parent / "data.csv"), str(config.parent / "schema.json")])
    print()
    out = workdir / "out"
    main(["run", str(config), "--output-dir", str(out)])
    print()
    main(["inspect", str(out / "report.json")])
    print("\nfirst curve rows:")
    print("\n".join((out / "curve.csv").read_text().splitlines()[:8]))


if __name__ == "__main__":
    if len(sys.argv) > 1:
        demo(Path(sys.argv[1]))
    else:
        with tempfile.TemporaryDirectory() as tmp:
            demo(Path(tmp))
