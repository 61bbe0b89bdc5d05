"""Scenario files, the external-evaluator wire protocol, and CSV results.

Scenario files are JSON.  Schema (see README for the full reference)::

    {
      "name": "example",
      "parameters": [
        {"name": "tile", "kind": "ordinal", "values": [1, 2, 4], "transform": "log"},
        {"name": "x", "kind": "real", "range": [0.0, 1.0]},
        {"name": "order", "kind": "permutation", "size": 4, "metric": "spearman"}
      ],
      "constraints": ["tile >= 2"],
      "budget": 60,
      "doe_size": 10,            // optional
      "method": "bo",            // optional: bo | random-uniform | random-cot
      "seed": 0,                 // optional
      "ablations": {"disable_log_transforms": true},   // optional
      "evaluator": {"builtin": "quadratic-mixed"}      // or {"command": [...]}
    }

The wire protocol to an external evaluator is line-oriented JSON over the
child's standard streams.  One request per line::

    {"type": "evaluate", "configuration": {"tile": 4, "order": [2, 1, 3, 4]}}
    -> {"objective": 12.5, "feasible": true}        (objective optional if false)
    {"type": "terminate"}

The child is spawned once per run and answers strictly in order.
"""
from __future__ import annotations

import csv
import json
import queue
import subprocess
import threading
import warnings
from dataclasses import dataclass, fields
from typing import Optional

from .bench import builtin
from .constraints import ConstraintError
from .engine import EngineOptions, EvaluationRecord, TuningRun
from .space import Parameter, SearchSpace, SpaceError

PROTOCOL_TIMEOUT_DEFAULT = 600.0


class ScenarioError(ValueError):
    """Invalid scenario file; the message carries the offending field path."""


class ProtocolError(RuntimeError):
    """External evaluator broke the wire protocol."""


@dataclass
class Scenario:
    name: str
    space: SearchSpace
    budget: int
    method: str = "bo"
    seed: int = 0
    doe_size: Optional[int] = None
    options: EngineOptions = None
    evaluator_spec: Optional[dict] = None

    def __post_init__(self):
        if self.options is None:
            self.options = EngineOptions()


def _fail(path, message):
    raise ScenarioError(f"{path}: {message}")


def _get(obj, key, path, expected, required=True, default=None):
    if key not in obj:
        if required:
            _fail(f"{path}.{key}" if path else key, "missing field")
        return default
    value = obj[key]
    if expected is bool:
        if not isinstance(value, bool):
            _fail(f"{path}.{key}" if path else key, f"expected a boolean, got {value!r}")
    elif expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(f"{path}.{key}" if path else key, f"expected an integer, got {value!r}")
    elif expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(f"{path}.{key}" if path else key, f"expected a number, got {value!r}")
        value = float(value)
    elif not isinstance(value, expected):
        kind = getattr(expected, "__name__", str(expected))
        _fail(f"{path}.{key}" if path else key, f"expected {kind}, got {value!r}")
    return value


def _parse_parameter(obj, path) -> Parameter:
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    name = _get(obj, "name", path, str)
    kind = _get(obj, "kind", path, str)
    transform = _get(obj, "transform", path, str, required=False, default="none")
    try:
        if kind in ("real", "integer"):
            rng = _get(obj, "range", path, list)
            if len(rng) != 2:
                _fail(f"{path}.range", "expected [lo, hi]")
            if kind == "real":
                return Parameter.real(name, float(rng[0]), float(rng[1]),
                                      transform=transform)
            return Parameter.integer(name, int(rng[0]), int(rng[1]),
                                     transform=transform)
        if kind == "ordinal":
            values = _get(obj, "values", path, list)
            return Parameter.ordinal(name, values, transform=transform)
        if kind == "categorical":
            values = _get(obj, "values", path, list)
            return Parameter.categorical(name, [str(v) for v in values])
        if kind == "permutation":
            size = _get(obj, "size", path, int)
            metric = _get(obj, "metric", path, str, required=False, default="spearman")
            return Parameter.permutation(name, size, metric=metric)
    except SpaceError as exc:
        _fail(path, str(exc))
    _fail(f"{path}.kind", f"unknown parameter kind {kind!r}")


def _parse_ablations(obj, path) -> EngineOptions:
    options = EngineOptions()
    valid = {f.name for f in fields(EngineOptions)}
    for key, value in obj.items():
        if key not in valid or key == "threshold":
            _fail(f"{path}.{key}", "unknown ablation flag")
        if key in ("permutation_metric", "cot_sampling"):
            if not isinstance(value, str):
                _fail(f"{path}.{key}", f"expected a string, got {value!r}")
        elif key == "evaluation_timeout":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                _fail(f"{path}.{key}", f"expected a number, got {value!r}")
            value = float(value)
        elif not isinstance(value, bool):
            _fail(f"{path}.{key}", f"expected a boolean, got {value!r}")
        setattr(options, key, value)
    if options.cot_sampling not in ("leaf", "path"):
        _fail(f"{path}.cot_sampling", f"expected 'leaf' or 'path'")
    return options


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; errors carry JSON field paths."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")

    name = _get(raw, "name", "", str)
    params_raw = _get(raw, "parameters", "", list)
    if not params_raw:
        _fail("parameters", "at least one parameter is required")
    parameters = [_parse_parameter(p, f"parameters[{i}]")
                  for i, p in enumerate(params_raw)]
    constraints = _get(raw, "constraints", "", list, required=False, default=[])
    for i, c in enumerate(constraints):
        if not isinstance(c, str):
            _fail(f"constraints[{i}]", f"expected a string, got {c!r}")
    try:
        space = SearchSpace(parameters, constraints)
    except ConstraintError as exc:
        raise ScenarioError(f"constraints: {exc}") from exc
    except SpaceError as exc:
        raise ScenarioError(f"parameters: {exc}") from exc

    budget = _get(raw, "budget", "", int)
    if budget < 1:
        _fail("budget", "must be at least 1")
    doe = _get(raw, "doe_size", "", int, required=False)
    if doe is not None and doe < 1:
        _fail("doe_size", "must be at least 1")
    if doe is not None and budget < doe:
        _fail("budget", f"budget {budget} is smaller than doe_size {doe}")
    method = _get(raw, "method", "", str, required=False, default="bo")
    if method not in ("bo", "random-uniform", "random-cot"):
        _fail("method", f"unknown method {method!r}")
    seed = _get(raw, "seed", "", int, required=False, default=0)
    ablations = _get(raw, "ablations", "", dict, required=False, default={})
    options = _parse_ablations(ablations, "ablations")

    evaluator_spec = _get(raw, "evaluator", "", dict, required=False)
    if evaluator_spec is not None:
        has_builtin = "builtin" in evaluator_spec
        has_command = "command" in evaluator_spec
        if has_builtin == has_command:
            _fail("evaluator", "exactly one of 'builtin' or 'command' is required")
        if has_builtin and not isinstance(evaluator_spec["builtin"], str):
            _fail("evaluator.builtin", "expected a string")
        if has_command:
            cmd = evaluator_spec["command"]
            if (not isinstance(cmd, list) or not cmd
                    or not all(isinstance(c, str) for c in cmd)):
                _fail("evaluator.command", "expected a non-empty list of strings")

    return Scenario(name=name, space=space, budget=budget, method=method,
                    seed=seed, doe_size=doe, options=options,
                    evaluator_spec=evaluator_spec)


def make_evaluator(scenario: Scenario):
    """Instantiate the evaluator named by the scenario."""
    spec = scenario.evaluator_spec
    if spec is None:
        raise ScenarioError("evaluator: scenario does not define an evaluator")
    if "builtin" in spec:
        bench = builtin(spec["builtin"])
        if bench.space.names != scenario.space.names:
            raise ScenarioError(
                f"evaluator.builtin: benchmark {bench.name!r} expects parameters "
                f"{list(bench.space.names)}, scenario declares {list(scenario.space.names)}")
        return bench
    return ExternalEvaluator(spec["command"], scenario.space,
                             timeout=scenario.options.evaluation_timeout)


# --------------------------------------------------------------------------
# external evaluator protocol
# --------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, tuple):
        return [int(v) for v in value]
    return value


class ExternalEvaluator:
    """One long-lived child process evaluated over line-delimited JSON.

    A request that times out is recorded as infeasible (a schedule that never
    finishes is as useless as one that fails) and the wedged child is
    restarted for the next request.  Malformed responses abort the run.
    """

    def __init__(self, command, space: SearchSpace, timeout: float = PROTOCOL_TIMEOUT_DEFAULT):
        self.command = list(command)
        self.space = space
        self.timeout = timeout
        self.proc = None
        self._lines = None
        self._reader = None

    def _spawn(self):
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise ProtocolError(f"cannot start evaluator {self.command}: {exc}") from exc
        self._lines = queue.Queue()

        def pump(proc, out):
            for line in proc.stdout:
                out.put(line)
            out.put(None)  # EOF marker

        self._reader = threading.Thread(target=pump, args=(self.proc, self._lines),
                                        daemon=True)
        self._reader.start()

    def _send(self, obj):
        if self.proc is None or self.proc.poll() is not None:
            self._spawn()
        try:
            self.proc.stdin.write(json.dumps(obj) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"evaluator closed its input: {exc}") from exc

    def _kill(self):
        if self.proc is not None and self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()
        self.proc = None

    def __call__(self, cfg):
        request = {"type": "evaluate",
                   "configuration": {k: _jsonable(v)
                                     for k, v in self.space.as_dict(cfg).items()}}
        self._send(request)
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            warnings.warn(f"evaluation timed out after {self.timeout}s; "
                          f"recording the configuration as infeasible")
            self._kill()
            return None, False
        if line is None:
            raise ProtocolError("evaluator exited before answering")
        try:
            response = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed response line: {line.strip()!r}") from None
        if not isinstance(response, dict) or "feasible" not in response \
                or not isinstance(response["feasible"], bool):
            raise ProtocolError(f"response must carry a boolean 'feasible': {response!r}")
        feasible = response["feasible"]
        objective = response.get("objective")
        if feasible:
            if isinstance(objective, bool) or not isinstance(objective, (int, float)):
                raise ProtocolError(
                    f"feasible response needs a numeric 'objective': {response!r}")
            return float(objective), True
        return None, False

    def close(self):
        """Send terminate and reap the child; safe to call on abort paths."""
        if self.proc is None:
            return
        try:
            if self.proc.poll() is None:
                self.proc.stdin.write(json.dumps({"type": "terminate"}) + "\n")
                self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass
        try:
            self.proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self._kill()
        self.proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def evaluate_external(command, space: SearchSpace, cfg,
                      timeout: float = PROTOCOL_TIMEOUT_DEFAULT):
    """One-shot convenience wrapper: spawn, evaluate one configuration, terminate."""
    with ExternalEvaluator(command, space, timeout) as ev:
        return ev(cfg)


# --------------------------------------------------------------------------
# CSV results
# --------------------------------------------------------------------------

def _format_value(param: Parameter, value) -> str:
    if param.kind == "permutation":
        return ";".join(str(int(v)) for v in value)
    if param.kind == "real":
        return repr(float(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(param: Parameter, text: str):
    if param.kind == "permutation":
        return tuple(int(v) for v in text.split(";"))
    if param.kind == "real":
        return float(text)
    if param.kind == "integer":
        return int(text)
    if param.kind == "categorical":
        return text
    # ordinal: values may be ints or floats; match the declared domain
    for v in param.values:
        if str(v) == text or (isinstance(v, float) and repr(v) == text):
            return v
    raise ValueError(f"{param.name}: {text!r} is not in the ordinal domain")


def csv_header(space: SearchSpace) -> list[str]:
    return ["iteration", *space.names, "objective", "feasible", "phase", "timestamp"]


class ResultsWriter:
    """Streams records to CSV, flushing after every row so aborted runs keep
    their partial history."""

    def __init__(self, path, space: SearchSpace):
        self.space = space
        self._fh = open(path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(csv_header(space))
        self._fh.flush()

    def write(self, record: EvaluationRecord):
        row = [str(record.iteration)]
        row += [_format_value(p, v)
                for p, v in zip(self.space.parameters, record.configuration)]
        row.append("" if record.objective is None else repr(record.objective))
        row.append("true" if record.feasible else "false")
        row.append(record.phase)
        row.append(repr(record.timestamp))
        self._csv.writerow(row)
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_results(run: TuningRun, path):
    """Write a finished run's history to CSV."""
    with ResultsWriter(path, run.space) as writer:
        for record in run.history:
            writer.write(record)


def read_results(path, space: SearchSpace) -> list[EvaluationRecord]:
    """Parse a results CSV back into records (inverse of :class:`ResultsWriter`)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != csv_header(space):
        raise ValueError("CSV header does not match the space")
    records = []
    dim = space.dimension
    for cells in rows[1:]:
        iteration = int(cells[0])
        cfg = tuple(_parse_value(p, c)
                    for p, c in zip(space.parameters, cells[1:1 + dim]))
        objective_text, feasible_text, phase, ts = cells[1 + dim:5 + dim]
        records.append(EvaluationRecord(
            iteration=iteration,
            configuration=cfg,
            objective=None if objective_text == "" else float(objective_text),
            feasible=feasible_text == "true",
            phase=phase,
            timestamp=float(ts),
        ))
    return records
