"""Versioned JSON checkpoints: model config, named parameter arrays,
preprocessing config and training provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .network import ModelConfig, check_params
from .preprocess import PreprocessConfig

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict
    preprocess_config: PreprocessConfig
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model_config": self.model_config.to_dict(),
            "preprocess_config": self.preprocess_config.to_dict(),
            "params": [
                {"name": name, "shape": list(arr.shape), "values": arr.ravel().tolist()}
                for name, arr in self.params.items()
            ],
            "provenance": self.provenance,
        }

    def dumps(self) -> str:
        # json emits floats via repr(), which round-trips exactly
        return json.dumps(self.to_json(), indent=1, allow_nan=False) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_json(cls, obj: dict) -> "Checkpoint":
        try:
            version = obj["format_version"]
            if version != FORMAT_VERSION:
                raise DataError(f"unsupported checkpoint format_version {version}")
            config = ModelConfig.from_dict(obj["model_config"])
            params = {
                p["name"]: np.array(p["values"], dtype=np.float64).reshape(p["shape"])
                for p in obj["params"]
            }
            pre = PreprocessConfig.from_dict(obj["preprocess_config"])
            provenance = obj.get("provenance", {})
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"malformed checkpoint: {exc}") from exc
        try:
            check_params(config, params)
        except ValueError as exc:
            raise DataError(f"checkpoint parameters inconsistent: {exc}") from exc
        return cls(config, params, pre, provenance)

    @classmethod
    def loads(cls, text: str) -> "Checkpoint":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"checkpoint is not valid JSON: {exc}") from exc
        return cls.from_json(obj)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
