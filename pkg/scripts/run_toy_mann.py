"""Shallow network versus CMD-regularized network on the toy shift data."""

from _common import run_one

if __name__ == "__main__":
    run_one("toy-mann", __doc__, {
        "--iters": {"type": int, "help": "training steps of the baseline"},
        "--hidden": {"type": int, "help": "hidden-layer width"},
        "--lambda": {"type": float, "help": "CMD weight of the adapted network"},
        "--m": {"type": int, "help": "highest CMD moment order"},
    })
