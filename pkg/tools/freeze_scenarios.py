#!/usr/bin/env python3
"""Regenerate the frozen scenario parameter files shipped with the package."""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mmar.scenarios import freeze_scenarios  # noqa: E402

if __name__ == "__main__":
    target = os.path.join(os.path.dirname(__file__), "..", "src", "mmar",
                          "scenario_params")
    freeze_scenarios(target)
    print(f"wrote scenario files to {os.path.abspath(target)}")
