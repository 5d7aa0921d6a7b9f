"""Time-series correction on synthetic domains with a known linear offset."""

from _common import run_one

if __name__ == "__main__":
    run_one("scitsm-synth", __doc__, {
        "--k": {"type": int, "help": "series per domain"},
        "--noise": {"type": float, "help": "noise standard deviation"},
        "--domains": {"type": int, "help": "number of source domains"},
    })
