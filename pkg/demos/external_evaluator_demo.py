"""Attaching an external evaluation process over the wire protocol.

Writes a small client script that serves an objective via boxtune_client,
then drives a tuning run that talks to it through a child process, exactly
as a real compiler toolchain would attach.

Run: python3 demos/external_evaluator_demo.py
"""
import pathlib
import sys
import tempfile

import numpy as np

from boxtune import Parameter, Scenario, SearchSpace, run_bo_loop
from boxtune.interface import ExternalEvaluator

REPO = pathlib.Path(__file__).resolve().parents[1]

CLIENT_SOURCE = f"""\
import sys
sys.path.insert(0, {str(REPO / 'client' / 'src')!r})
from boxtune_client import serve

def measure(config):
    # pretend to compile and run a kernel; crash on a hidden bad region
    tile, unroll = config["tile"], config["unroll"]
    if tile * unroll > 64:
        raise RuntimeError("out of registers")   # -> reported infeasible
    return (tile - 12) ** 2 / 16 + (unroll - 3) ** 2 + 1.0

sys.exit(serve(measure))
"""

space = SearchSpace([
    Parameter.integer("tile", 1, 32),
    Parameter.integer("unroll", 1, 8),
])

with tempfile.TemporaryDirectory() as tmp:
    script = pathlib.Path(tmp) / "toolchain_client.py"
    script.write_text(CLIENT_SOURCE)

    scenario = Scenario(name="external-demo", space=space, budget=30, seed=1)
    evaluator = ExternalEvaluator([sys.executable, str(script)], space)
    try:
        run = run_bo_loop(scenario, evaluator, np.random.default_rng(1))
    finally:
        evaluator.close()  # always sends the terminate message

feasible = [r for r in run.history if r.feasible]
print(f"evaluations: {len(run.history)} total, {len(feasible)} feasible "
      f"({len(run.history) - len(feasible)} hit the hidden register limit)")
cfg, value = run.best_feasible()
print(f"best objective {value:.3f} at {space.as_dict(cfg)}")
print("\nevery value crossed the process boundary as line-delimited JSON;")
print("see boxtune/interface.py for the exact request/response schema")
