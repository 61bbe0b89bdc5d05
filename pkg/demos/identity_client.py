"""Minimal external evaluator: serves objective = p1 over the wire protocol.

Used by scenarios/external-identity.json; run from the repository root so the
relative command path resolves:

    boxtune run --scenario scenarios/external-identity.json --output /tmp/id.csv
"""
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "client" / "src"))
from boxtune_client import serve

sys.exit(serve(lambda config: float(config["p1"])))
