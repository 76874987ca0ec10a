#!/usr/bin/env python3
"""Regenerate the shipped demo fixture, demo config, and golden stage outputs.

Run from the repository root after any intentional change to the demo corpus:

    python scripts/build_demo_assets.py

The golden files are compared byte-for-byte by the acceptance suite, so a
regeneration is a deliberate, reviewed event.
"""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

from forge.demo import build_demo_run, write_demo_assets
from forge.stages import STORE_FILES

REPO = Path(__file__).resolve().parent.parent
GOLDEN = REPO / "tests" / "golden"
FIXTURES = REPO / "fixtures"


def main() -> None:
    write_demo_assets(FIXTURES)
    GOLDEN.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as td:
        artifacts = build_demo_run(td)
        for filename in STORE_FILES.values():
            source = artifacts.config.run_dir / filename
            shutil.copyfile(source, GOLDEN / filename)
            print(f"wrote {GOLDEN / filename}")
    print(f"wrote {FIXTURES / 'demo_fixture.json'}")
    print(f"wrote {FIXTURES / 'demo_config.toml'}")


if __name__ == "__main__":
    main()
