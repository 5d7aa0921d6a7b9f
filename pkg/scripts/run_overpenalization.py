"""CMD and polynomial-kernel MMD on the mean over-penalization example."""

from _common import run_one

if __name__ == "__main__":
    run_one("overpenalization", __doc__, {"--n": {"type": int, "help": "sample size"}})
