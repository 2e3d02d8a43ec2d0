"""Single-document JSON bundle for a trained model: basis + beta + theta."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec
from .model import AdditiveParams
from .weightnet import WeightNetParams

FORMAT_TAG = "awam-bundle-v1"


@dataclass
class ModelBundle:
    """Everything needed to reload and apply a trained model."""

    task: str
    spec: BasisSpec
    beta: AdditiveParams
    theta: WeightNetParams
    config: dict

    def to_json(self) -> str:
        doc = {
            "format": FORMAT_TAG,
            "task": self.task,
            "config": self.config,
            "basis": json.loads(self.spec.to_json()),
            "beta": self.beta.to_dict(),
            "weightnet": self.theta.to_dict(),
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelBundle":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != FORMAT_TAG:
            raise ValueError(f"{path}: not a {FORMAT_TAG} document")
        spec = BasisSpec.from_json(json.dumps(doc["basis"]))
        beta = AdditiveParams.from_dict(doc["beta"])
        theta = WeightNetParams.from_dict(doc["weightnet"])
        if beta.p != spec.p or beta.d != spec.d:
            raise ValueError(f"{path}: coefficient shape disagrees with basis")
        if not np.all(np.isfinite(beta.beta)):
            raise ValueError(f"{path}: non-finite coefficients")
        return cls(task=doc["task"], spec=spec, beta=beta, theta=theta,
                   config=doc.get("config", {}))
