import json
import os
import subprocess
import sys

CHILD = r"""
import json
from pairpotts import _accel, lattice, mcmc
from pairpotts.model import Params
g = lattice.build_box(2)
acc = mcmc.run_chain(g, Params(2, 3, 0.4, 0.5), mcmc.SamplerConfig(sweeps=300, burn_in=20, seed=9))
print(json.dumps({"jit": _accel.HAVE_NUMBA and not _accel.NUMBA_DISABLED, "acc": acc.to_json()}))
"""


def run(disable):
    env = dict(os.environ)
    env.pop("PAIRPOTTS_DISABLE_NUMBA", None)
    if disable:
        env["PAIRPOTTS_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", CHILD], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def test_fallback_is_bit_identical():
    fast = run(False)
    slow = run(True)
    assert not slow["jit"]
    assert fast["acc"] == slow["acc"]
