"""The whole workflow through the command-line tool.

Each step is a separate process that reads and writes files, which is how
the tool is meant to be scripted: simulate -> sample -> train -> denoise ->
eval, then a sweep over the overlap factor C.
"""

import subprocess
import sys
import tempfile
from pathlib import Path

from pcartifact import multi_plane_cloud, write_ply


def run(*args):
    print("$ pcartifact", " ".join(args))
    out = subprocess.run([sys.executable, "-m", "pcartifact", *args], check=True,
                         capture_output=True, text=True).stdout
    if out.strip():
        print(out.rstrip())


with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    write_ply(multi_plane_cloud(8_000, seed=0), d / "train.ply")
    write_ply(multi_plane_cloud(8_000, seed=1), d / "test.ply")
    net = ["--depth", "2", "--base-channels", "8", "--normalization", "instance", "--steps", "60"]
    patches = ["--k", "512", "--C", "2", "--cube-side", "24"]

    run("simulate", str(d / "train.ply"), str(d / "train_noisy.ply"), "--qstep", "4")
    run("simulate", str(d / "test.ply"), str(d / "test_noisy.ply"), "--qstep", "4")
    run("sample", str(d / "train_noisy.ply"), str(d / "train.ply"), str(d / "pairs"), *patches)
    run("train", str(d / "pairs"), "--out", str(d / "net.npz"), *net)
    run("denoise", str(d / "test_noisy.ply"), str(d / "net.npz"), str(d / "test_clean.ply"), *patches)
    run("eval", str(d / "test_noisy.ply"), str(d / "test.ply"), "--name", "noisy")
    run("eval", str(d / "test_clean.ply"), str(d / "test.ply"), "--name", "cleaned")
    run("sweep-c", str(d / "test_noisy.ply"), str(d / "test.ply"), str(d / "net.npz"),
        "--values", "1", "2", "4", "--k", "512", "--cube-side", "24")
