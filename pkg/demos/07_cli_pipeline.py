"""
The command line, end to end
============================

The same pipeline through ``python3 -m fakebio`` on a small world. Each
step prints its resolved configuration; rerunning with the same seed
rewrites identical files.
"""

# %%
import subprocess
import sys
import tempfile
from pathlib import Path

work = Path(tempfile.mkdtemp())
man = work / "world" / "manifest.tsv"


def fakebio(*args):
    print("$ fakebio", " ".join(map(str, args)))
    done = subprocess.run([sys.executable, "-m", "fakebio", *map(str, args)], capture_output=True, text=True)
    print("\n".join(done.stdout.splitlines()[-12:]), done.stderr[-300:], sep="\n")
    return done.returncode


window = ["--t", "60", "--stride", "10"]
fakebio("synth", "--out", work / "world", "--identities", "8", "--videos-per-identity", "10", "--frames", "240")
fakebio("validate", man)
fakebio("train", "--manifest", man, "--out", work / "enc.bnet", "--t", "60", "--iterations", "150",
        "--identities-per-batch", "8", "--clips-per-identity", "4", "--progress-every", "50")
fakebio("enroll", "--manifest", man, "--checkpoint", work / "enc.bnet", "--out", work / "refs.bref", *window)
fakebio("evaluate", "--manifest", man, "--checkpoint", work / "enc.bnet", "--refs", work / "refs.bref",
        "--out", work / "report", *window)
print("exit code without --refs:", fakebio("evaluate", "--manifest", man, "--checkpoint", work / "enc.bnet",
                                           "--out", work / "r2"))
