"""JSON problem specifications and design files.

Floats are written with Python's shortest round-trip repr, so a design read
back from disk is bit-identical to the one that was written.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import jsonschema
from jsonschema.exceptions import best_match, relevance
import numpy as np

from .design import ApproximateDesign, Continuous, DesignSpace, Discrete, ExactDesign
from .glm import (Family, GlmModel, Indicator, Interaction, Intercept, Linear, Power, PredictorBasis)

_NUM = {"type": "number"}
_NUM_ARRAY = {"type": "array", "items": _NUM, "minItems": 1}
_MATRIX = {"type": "array", "items": _NUM_ARRAY, "minItems": 1}

_TERM = {
    "oneOf": [
        {"type": "object", "properties": {"type": {"const": "intercept"}},
         "required": ["type"], "additionalProperties": False},
        {"type": "object", "properties": {"type": {"const": "linear"}, "factor": {"type": "integer", "minimum": 0}},
         "required": ["type", "factor"], "additionalProperties": False},
        {"type": "object", "properties": {"type": {"const": "power"}, "factor": {"type": "integer", "minimum": 0},
                                          "exponent": _NUM},
         "required": ["type", "factor", "exponent"], "additionalProperties": False},
        {"type": "object", "properties": {"type": {"const": "interaction"},
                                          "factors": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                                      "minItems": 2}},
         "required": ["type", "factors"], "additionalProperties": False},
        {"type": "object", "properties": {"type": {"const": "indicator"}, "factor": {"type": "integer", "minimum": 0},
                                          "level": _NUM},
         "required": ["type", "factor", "level"], "additionalProperties": False},
    ]
}

_FACTOR = {
    "oneOf": [
        {"type": "object", "properties": {"kind": {"const": "continuous"}, "lower": _NUM, "upper": _NUM},
         "required": ["kind", "lower", "upper"], "additionalProperties": False},
        {"type": "object", "properties": {"kind": {"const": "discrete"}, "levels": _NUM_ARRAY},
         "required": ["kind", "levels"], "additionalProperties": False},
    ]
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"enum": ["bernoulli", "binomial", "poisson", "gamma", "inverse_gaussian", "normal"]},
        "link": {"enum": ["logit", "probit", "cloglog", "log", "identity", "inverse", "inverse_squared"]},
        "beta": _NUM_ARRAY,
        "constants": {
            "type": "object",
            "properties": {"n_trials": {"type": "integer", "minimum": 1}, "shape": _NUM,
                           "lambda": _NUM, "sigma2": _NUM},
            "additionalProperties": False,
        },
    },
    "required": ["family", "link", "beta"],
    "additionalProperties": False,
}

SPEC_SCHEMA = {
    "type": "object",
    "properties": {
        "model": MODEL_SCHEMA,
        "predictor": {"type": "array", "items": _TERM, "minItems": 1},
        "space": {
            "type": "object",
            "properties": {"factors": {"type": "array", "items": _FACTOR, "minItems": 1}, "grid": _MATRIX},
            "required": ["factors"],
            "additionalProperties": False,
        },
        "candidates": _MATRIX,
        "weights": _NUM_ARRAY,
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["model", "predictor"],
    "anyOf": [{"required": ["space"]}, {"required": ["candidates"]}],
    "additionalProperties": False,
}

STUDY_SCHEMA = {
    "type": "object",
    "properties": {
        "model": MODEL_SCHEMA,
        "predictor": SPEC_SCHEMA["properties"]["predictor"],
        "strata": {
            "type": "object",
            "properties": {"points": _MATRIX,
                           "sizes": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}},
            "required": ["points", "sizes"],
            "additionalProperties": False,
        },
        "n": {"type": "integer", "minimum": 1},
        "samplers": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {
                "oneOf": [{"enum": ["srswor", "full", "a_optimal"]},
                          {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}]
            },
        },
        "reps": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["model", "predictor", "strata", "n", "samplers"],
    "additionalProperties": False,
}

DESIGN_SCHEMA = {
    "type": "object",
    "properties": {
        "points": _MATRIX,
        "weights": _NUM_ARRAY,
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "spec": {"type": "object"},
    },
    "required": ["points"],
    "anyOf": [{"required": ["weights"]}, {"required": ["counts"]}],
}


class SpecError(ValueError):
    """Invalid input file; ``path`` is a JSON pointer to the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path


def _pointer(parts) -> str:
    return "/" + "/".join(str(p) for p in parts) if parts else ""


def validate(doc, schema):
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=relevance)
    if not errors:
        return
    err = errors[-1]
    while err.validator == "oneOf" and err.context:
        # report the branch whose "type"/"kind" tag matched, if exactly one did
        branches = {}
        for c in err.context:
            branches.setdefault(c.schema_path[0], []).append(c)
        tagged = [errs for errs in branches.values() if not any(c.validator == "const" for c in errs)]
        err = best_match(tagged[0]) if len(tagged) == 1 else best_match(err.context)
    path = list(err.absolute_path)
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        if extra:
            raise SpecError(f"unknown key {extra[0]!r}", _pointer(path + [extra[0]]))
    raise SpecError(err.message, _pointer(path))


_CONSTANT_NAME = {"binomial": "n_trials", "gamma": "shape", "inverse_gaussian": "lambda", "normal": "sigma2"}


def _term(t):
    kind = t["type"]
    if kind == "intercept":
        return Intercept()
    if kind == "linear":
        return Linear(t["factor"])
    if kind == "power":
        return Power(t["factor"], t["exponent"])
    if kind == "interaction":
        return Interaction(tuple(t["factors"]))
    return Indicator(t["factor"], t["level"])


def parse_model(model_doc, predictor_doc) -> GlmModel:
    fam = model_doc["family"]
    consts = model_doc.get("constants", {})
    allowed = _CONSTANT_NAME.get(fam)
    for key in consts:
        if key != allowed:
            raise SpecError(f"constant {key!r} does not apply to family {fam!r}", f"/model/constants/{key}")
    param = float(consts.get(allowed, 1.0)) if allowed else 1.0
    if fam == "binomial" and allowed not in consts:
        raise SpecError("binomial family needs constants.n_trials", "/model/constants")
    try:
        family = Family(fam, param)
        predictor = PredictorBasis(tuple(_term(t) for t in predictor_doc))
        return GlmModel(family, model_doc["link"], model_doc["beta"], predictor)
    except (ValueError, TypeError) as exc:
        raise SpecError(str(exc), "/model") from exc


def parse_space(space_doc) -> DesignSpace:
    factors = []
    for j, f in enumerate(space_doc["factors"]):
        try:
            factors.append(Continuous(f["lower"], f["upper"]) if f["kind"] == "continuous" else Discrete(tuple(f["levels"])))
        except ValueError as exc:
            raise SpecError(str(exc), f"/space/factors/{j}") from exc
    try:
        return DesignSpace(factors, space_doc.get("grid"))
    except ValueError as exc:
        raise SpecError(str(exc), "/space/grid") from exc


@dataclass
class Problem:
    model: GlmModel
    space: DesignSpace | None
    candidates: np.ndarray | None
    weights: np.ndarray | None
    seed: int | None
    doc: dict


def parse_spec(doc: dict) -> Problem:
    validate(doc, SPEC_SCHEMA)
    model = parse_model(doc["model"], doc["predictor"])
    space = parse_space(doc["space"]) if "space" in doc else None
    cand = None
    if "candidates" in doc:
        cand = np.array(doc["candidates"], dtype=float)
        if len({len(r) for r in doc["candidates"]}) != 1:
            raise SpecError("candidate rows must all have the same length", "/candidates")
        if len({tuple(r) for r in cand}) != cand.shape[0]:
            raise SpecError("candidate points must be distinct", "/candidates")
    d = space.d if space is not None else cand.shape[1]
    if model.predictor.max_factor() >= d:
        raise SpecError(f"predictor uses factor {model.predictor.max_factor()} but points have {d} coordinates",
                        "/predictor")
    w = None
    if "weights" in doc:
        if cand is None:
            raise SpecError("initial weights need a candidate set", "/weights")
        w = np.array(doc["weights"], dtype=float)
        if w.size != cand.shape[0] or np.any(w < 0) or w.sum() <= 0:
            raise SpecError("need one nonnegative weight per candidate, not all zero", "/weights")
    return Problem(model, space, cand, w, doc.get("seed"), doc)


def load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError(f"not valid JSON: {exc}") from exc


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def design_to_doc(design, **extra) -> dict:
    doc = {"points": design.points.tolist()}
    if isinstance(design, ExactDesign):
        doc["counts"] = design.counts.tolist()
    else:
        doc["weights"] = design.weights.tolist()
    doc.update(extra)
    return doc


def design_from_doc(doc: dict):
    validate(doc, DESIGN_SCHEMA)
    try:
        if "weights" in doc:
            return ApproximateDesign(doc["points"], doc["weights"])
        return ExactDesign(doc["points"], doc["counts"])
    except ValueError as exc:
        raise SpecError(str(exc), "/weights" if "weights" in doc else "/counts") from exc
