"""Target accuracy of the adapted toy network over one hyper-parameter."""

from _common import run_one

if __name__ == "__main__":
    run_one("sweep", __doc__, {
        "--param": {"choices": ["m", "hidden", "lambda"], "default": "m"},
        "--values": {"help": "'1..7' or a comma-separated list"},
        "--iters": {"type": int, "help": "training steps per run"},
    })
