"""DIPALS with and without the variance-difference penalty on synthetic regression data."""

from _common import run_one

if __name__ == "__main__":
    run_one("dipals-synth", __doc__, {
        "--components": {"type": int, "help": "number of latent components"},
        "--n": {"type": int, "help": "rows per domain"},
    })
