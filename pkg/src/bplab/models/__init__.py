"""Shipped example model documents."""
from __future__ import annotations

import json
from importlib import resources

from bplab.model import ModelSpec, model_from_dict

NAMES = ("lf_single", "mixed_n2", "tables_n3", "two_point_env", "two_point_env_n1")


def load(name: str) -> ModelSpec:
    text = resources.files(__package__).joinpath(f"{name}.json").read_text()
    return model_from_dict(json.loads(text))
