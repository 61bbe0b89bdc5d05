"""Evaluation-server shim for the boxtune wire protocol.

An external toolchain attaches to the tuner as a child process speaking
line-delimited JSON on its standard streams.  This package handles the
protocol so a user script only supplies the evaluation function::

    import sys
    from boxtune_client import serve

    def measure(config):
        runtime = compile_and_run(config)   # config is a plain dict;
        return runtime                      # permutations arrive as int lists

    sys.exit(serve(measure))

The evaluation callable may return a bare number (implicitly feasible) or an
``(objective, feasible)`` pair.  Raising any exception marks the
configuration infeasible, mirroring how a crashed or non-compiling schedule
is a hidden-constraint violation rather than a tuner error.
"""
from __future__ import annotations

import json
import sys

__all__ = ["ClientSession", "serve"]
__version__ = "0.1.0"


class ClientSession:
    """Serial request loop over a pair of line-oriented streams.

    Responds to every ``evaluate`` request exactly once, in order, and exits
    cleanly on ``terminate``.
    """

    def __init__(self, fn, input_stream=None, output_stream=None):
        self.fn = fn
        self.input = input_stream if input_stream is not None else sys.stdin
        self.output = output_stream if output_stream is not None else sys.stdout

    def _reply(self, payload: dict):
        self.output.write(json.dumps(payload) + "\n")
        self.output.flush()

    def _evaluate(self, configuration: dict) -> dict:
        try:
            result = self.fn(configuration)
        except Exception:
            # user-code failure means the configuration cannot be evaluated
            return {"feasible": False}
        if isinstance(result, tuple):
            objective, feasible = result
        else:
            objective, feasible = result, True
        if not feasible:
            return {"feasible": False}
        return {"objective": float(objective), "feasible": True}

    def run(self) -> int:
        """Serve until terminate or end of input; returns a process exit code."""
        for line in self.input:
            if not line.strip():
                continue
            try:
                request = json.loads(line)
                kind = request["type"]
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                self._reply({"error": f"cannot decode request: {exc}"})
                return 1
            if kind == "terminate":
                return 0
            if kind != "evaluate":
                self._reply({"error": f"unknown request type {kind!r}"})
                return 1
            try:
                configuration = request["configuration"]
            except KeyError:
                self._reply({"error": "evaluate request without configuration"})
                return 1
            self._reply(self._evaluate(configuration))
        return 0


def serve(fn, input_stream=None, output_stream=None) -> int:
    """Serve evaluations of ``fn`` over the wire protocol; returns an exit code."""
    return ClientSession(fn, input_stream, output_stream).run()
