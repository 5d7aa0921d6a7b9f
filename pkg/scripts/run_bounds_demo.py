"""L1 distance of maxent densities against the moment-difference bound."""

from _common import run_one

if __name__ == "__main__":
    run_one("bounds-demo", __doc__, {"--m": {"type": int, "help": "moment order (2..5)"}})
