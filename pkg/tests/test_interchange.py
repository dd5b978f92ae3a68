"""Interchange documents: lossless round-trips and strict, located rejection."""

from __future__ import annotations

import copy
import json
import random

import pytest

from chainshell.interchange import DecodeError, decode_interchange, encode_interchange
from kbgen import random_kb


@pytest.fixture
def demo_doc(demo_kb):
    return encode_interchange(demo_kb)


class TestRoundTrip:
    def test_demo_round_trip_full_equality(self, demo_kb):
        assert decode_interchange(encode_interchange(demo_kb)) == demo_kb

    def test_version_and_order_survive(self, demo_kb):
        from dataclasses import replace

        versioned = replace(demo_kb, version=7, id="chest")
        doc = encode_interchange(versioned)
        assert doc["version"] == 7 and doc["id"] == "chest"
        back = decode_interchange(doc)
        assert back.version == 7 and back.id == "chest"
        assert [r.order_index for r in back.rulebases[0].rules] == [0, 1, 2]

    def test_documents_are_json_safe(self, demo_doc):
        assert decode_interchange(json.loads(json.dumps(demo_doc))) is not None

    def test_random_kbs_round_trip(self):
        rng = random.Random(4)
        for _ in range(100):
            kb = random_kb(rng)
            assert decode_interchange(encode_interchange(kb)) == kb


class TestRejection:
    def test_unknown_operator_with_path(self, demo_doc):
        doc = copy.deepcopy(demo_doc)
        doc["rulebases"][0]["rules"][0]["antecedents"][0]["operator"] = "like"
        with pytest.raises(DecodeError) as exc:
            decode_interchange(doc)
        assert exc.value.path == "rulebases[0].rules[0].antecedents[0].operator"
        assert "like" in exc.value.message

    def test_missing_version_names_the_field(self, demo_doc):
        doc = copy.deepcopy(demo_doc)
        del doc["version"]
        with pytest.raises(DecodeError) as exc:
            decode_interchange(doc)
        assert "version" in exc.value.message

    def test_unknown_value_kind(self, demo_doc):
        doc = copy.deepcopy(demo_doc)
        doc["rulebases"][0]["rules"][2]["consequents"][0]["value"]["kind"] = "complex"
        with pytest.raises(DecodeError) as exc:
            decode_interchange(doc)
        assert exc.value.path.startswith("rulebases[0].rules[2].consequents[0]")

    def test_non_finite_number_rejected(self, demo_doc):
        doc = copy.deepcopy(demo_doc)
        doc["rulebases"][0]["rules"][0]["antecedents"][0]["operand"] = {
            "kind": "number",
            "payload": float("inf"),
        }
        with pytest.raises(DecodeError) as exc:
            decode_interchange(doc)
        assert "finite" in exc.value.message

    def test_bool_payload_is_not_a_number(self, demo_doc):
        doc = copy.deepcopy(demo_doc)
        doc["rulebases"][0]["rules"][0]["antecedents"][0]["operand"] = {
            "kind": "number",
            "payload": True,
        }
        with pytest.raises(DecodeError):
            decode_interchange(doc)

    def test_unknown_field_rejected(self, demo_doc):
        doc = copy.deepcopy(demo_doc)
        doc["color"] = "blue"
        with pytest.raises(DecodeError) as exc:
            decode_interchange(doc)
        assert "color" in exc.value.message

    def test_empty_antecedents_rejected(self, demo_doc):
        doc = copy.deepcopy(demo_doc)
        doc["rulebases"][0]["rules"][1]["antecedents"] = []
        with pytest.raises(DecodeError) as exc:
            decode_interchange(doc)
        assert exc.value.path == "rulebases[0].rules[1].antecedents"

    def test_non_object_root(self):
        with pytest.raises(DecodeError):
            decode_interchange([1, 2, 3])

    def test_membership_operand_must_be_array(self, demo_doc):
        doc = copy.deepcopy(demo_doc)
        cond = doc["rulebases"][0]["rules"][0]["antecedents"][0]
        cond["operator"] = "in"
        cond["operand"] = {"kind": "boolean", "payload": True}
        with pytest.raises(DecodeError) as exc:
            decode_interchange(doc)
        assert "array" in exc.value.message
