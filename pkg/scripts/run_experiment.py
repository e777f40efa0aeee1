"""Run the bundled food preparation experiment and print the final scores.

Usage: python3 scripts/run_experiment.py [extra auxtasks flags...]
"""

import sys
from importlib.resources import files

from auxtasks.cli import main

if __name__ == "__main__":
    config = str(files("auxtasks.data") / "food_prep.yaml")
    sys.exit(main(["experiment", "--config", config, *sys.argv[1:]]))
