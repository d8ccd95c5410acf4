"""Run every scenario in a directory and print one summary line each.

    python scripts/run_scenarios.py [scenarios/]
"""

import sys
from pathlib import Path

from vsubmersion.harness import ConfigError, Scenario, run_scenario


def main(folder: str = "scenarios") -> int:
    bad = 0
    for path in sorted(Path(folder).glob("*.json")):
        try:
            report = run_scenario(Scenario.load(path))
        except ConfigError as exc:
            print(f"{path.name}: configuration error: {exc}")
            continue
        bad += not report.as_expected
        print(f"{path.name}: {report.summary()}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
