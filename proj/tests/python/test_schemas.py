import json
import pathlib

import jsonschema
import pytest
from referencing import Registry, Resource

import treealign

SCHEMAS = pathlib.Path(__file__).resolve().parents[2] / "schemas"


def _registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        doc = json.loads(path.read_text())
        resources.append((doc["$id"], Resource.from_contents(doc)))
    return Registry().with_resources(resources)


REGISTRY = _registry()


def validate(name, instance):
    schema = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
    jsonschema.Draft202012Validator(schema, registry=REGISTRY).validate(instance)


def test_schemas_are_valid():
    for path in SCHEMAS.glob("*.schema.json"):
        jsonschema.Draft202012Validator.check_schema(json.loads(path.read_text()))


def test_core_records_conform():
    for task in treealign.generate_tasks(7, 40):
        gold = treealign.gold_trajectory(task)
        validate("policy_next.request", {"task": task, "prefix_tokens": [0]})
        validate("policy_rollout.request",
                 {"task": task, "prefix_tokens": [], "temperature": 1.0, "top_p": 0.9, "seed": 3})
        validate("policy_rollout.response", gold)
        validate("prm_score.request", {"task": task, "trajectory": gold})
        n = sum(len(s["tokens"]) for s in gold["steps"])
        validate("prm_score.response", {"token_scores": [1.0] * n})


def test_rejects_bad_messages():
    with pytest.raises(jsonschema.ValidationError):
        validate("policy_next.response", {"probs": [1.2, -0.2]})
    with pytest.raises(jsonschema.ValidationError):
        validate("prm_score.response", {"scores": []})
    with pytest.raises(jsonschema.ValidationError):
        validate("health.response", {"status": "degraded"})
    validate("health.response", {"status": "ok", "model": "toy"})
