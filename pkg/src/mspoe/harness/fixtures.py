"""Named model fixtures shipped with the package.

The induction fixture's weights are committed under ``mspoe/data`` and can
be regenerated bit-for-bit from :data:`INDUCTION_PARAMS`.
"""

import json
import os
from importlib import resources

from ..model import TransformerModel
from ..weights import load_weights, save_weights, sidecar_path
from .induction import InductionParams, build_induction_model
from .tasks import Vocab

INDUCTION_PARAMS = InductionParams()

FIXTURES = {"induction": "induction.mspe"}


def fixture_path(name):
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}")
    return str(resources.files("mspoe") / "data" / FIXTURES[name])


def write_fixture(path, params=INDUCTION_PARAMS):
    cfg, w, vocab = build_induction_model(params)
    save_weights(path, cfg, w, extra={"vocab": vocab.to_dict(), "induction_params": params.to_dict()})
    return path


def vocab_from_sidecar(path):
    side = sidecar_path(path)
    if not os.path.exists(side):
        return None
    with open(side, encoding="utf-8") as fh:
        doc = json.load(fh)
    return Vocab.from_dict(doc["vocab"]) if "vocab" in doc else None


def load_fixture(name="induction"):
    """``(TransformerModel, Vocab)`` for a shipped fixture."""
    path = fixture_path(name)
    cfg, w = load_weights(path)
    return TransformerModel(cfg, w), vocab_from_sidecar(path)
