import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from logsim import (
    DEFAULT_MASK_RULES,
    MaskRule,
    RawLogRecord,
    apply_masks,
    compile_rules,
    gen_synthetic,
    load_rules,
    parse_records,
)
from logsim.errors import ConfigError, ParseError, RecordRejectedError


def mask_one(text, rules=None):
    return apply_masks([RawLogRecord(0, text)], rules)[0].text


class TestParseRecords:
    def test_jsonl_basic(self):
        records = parse_records(
            ['{"text":"instruction cache parity error corrected","label":0}'])
        assert records == [
            RawLogRecord(0, "instruction cache parity error corrected", 0)]

    def test_empty_stream(self):
        assert parse_records([]) == []

    def test_plain_lines_keep_order(self):
        records = parse_records(["a", "b", "c"], fmt="plain")
        assert [(r.index, r.text) for r in records] == [(0, "a"), (1, "b"), (2, "c")]

    def test_optional_fields(self):
        [record] = parse_records(
            ['{"text":"x","label":1,"timestamp":"t0","block_id":"b7"}'])
        assert (record.label, record.timestamp, record.block_id) == (1, "t0", "b7")

    def test_malformed_json_raises_with_line_number(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_records(['{"text":"ok"}', "{nope"])

    def test_text_field_required(self):
        with pytest.raises(ParseError):
            parse_records(['{"label":0}'])

    @pytest.mark.parametrize("label", ["2", "true", '"1"', "0.5"])
    def test_bad_labels_rejected(self, label):
        with pytest.raises(ParseError):
            parse_records(['{"text":"x","label":%s}' % label])

    def test_empty_text_rejected_with_index(self):
        with pytest.raises(RecordRejectedError):
            parse_records(['{"text":"   "}'])

    def test_collect_mode_is_total(self):
        lines = ['{"text":"good"}', "broken", '{"text":""}', '{"text":"fine"}']
        records, rejections = parse_records(lines, errors="collect")
        assert len(records) + len(rejections) == len(lines)
        assert [r.text for r in records] == ["good", "fine"]
        assert [r.line_no for r in rejections] == [2, 3]

    @given(st.lists(st.text(alphabet=st.characters(blacklist_categories=["Cs"],
                                                   blacklist_characters="\n\r"),
                            min_size=0, max_size=30)))
    def test_collect_totality_property(self, texts):
        lines = [json.dumps({"text": t}) for t in texts]
        records, rejections = parse_records(lines, errors="collect")
        assert len(records) + len(rejections) == len(lines)


class TestMasking:
    def test_ip_rule(self):
        assert mask_one("connect from 10.0.0.1") == "connect from IP"

    def test_ip_with_port(self):
        assert mask_one("peer 192.168.0.7:8080 joined") == "peer IP joined"

    def test_path_rule(self):
        assert mask_one("open /var/log/a.log then /tmp/b") == "open PATH then PATH"

    def test_hex_and_num(self):
        assert mask_one("session 0xdeadbeef retries 3") == "session HEX retries NUM"

    def test_no_match_only_normalizes_whitespace(self):
        assert mask_one("plain  text\there") == "plain text here"

    def test_same_situation_logs_collapse(self):
        a = mask_one("connect from 10.0.0.1 pid 17")
        b = mask_one("connect from 172.16.4.9 pid 90210")
        assert a == b

    def test_priority_order_not_file_order(self):
        rules = [
            MaskRule("NUM", r"\b\d+\b", 40),
            MaskRule("IP", r"\b(?:\d{1,3}\.){3}\d{1,3}\b", 10),
        ]
        # IP runs first despite being listed second.
        assert mask_one("from 10.0.0.1", rules) == "from IP"

    def test_headers_must_be_uppercase(self):
        with pytest.raises(ConfigError):
            compile_rules([MaskRule("ip", r"\d+", 1)])

    def test_header_matching_a_pattern_rejected(self):
        # "NUM2" contains a digit and would be re-masked by the second rule.
        with pytest.raises(ConfigError):
            compile_rules([
                MaskRule("NUM2", r"x+", 1),
                MaskRule("D", r"\d", 2),
            ])

    def test_bad_pattern_rejected(self):
        with pytest.raises(ConfigError):
            compile_rules([MaskRule("BAD", r"(unclosed", 1)])

    def test_default_rules_validate(self):
        assert len(compile_rules(DEFAULT_MASK_RULES)) == 4

    @given(st.text(alphabet=st.characters(blacklist_categories=["Cs"]), max_size=80))
    def test_mask_idempotence(self, text):
        once = mask_one(text)
        assert mask_one(once) == once

    def test_load_rules_round_trip(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text(json.dumps([
            {"header": "UUID", "pattern": "[0-9a-f-]{36}", "priority": 5},
        ]))
        rules = load_rules(str(path))
        assert rules == [MaskRule("UUID", "[0-9a-f-]{36}", 5)]

    def test_load_rules_rejects_non_array(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text('{"header": "X"}')
        with pytest.raises(ConfigError):
            load_rules(str(path))


class TestGenSynthetic:
    def test_no_anomalies_two_types(self):
        records = gen_synthetic(2, 10, 0.0, 7)
        assert len(records) == 20
        assert all(r.label == 0 for r in records)
        masked = {s.text for s in apply_masks(records)}
        assert len(masked) == 2

    def test_deterministic(self):
        a = gen_synthetic(5, 100, 0.1, 7)
        b = gen_synthetic(5, 100, 0.1, 7)
        assert a == b

    def test_anomaly_fraction_within_one_record(self):
        records = gen_synthetic(5, 100, 0.1, 7)
        positives = sum(r.label for r in records)
        assert abs(positives - 0.1 * len(records)) <= 1

    def test_anomalies_stay_distinct_after_masking(self):
        records = gen_synthetic(4, 50, 0.1, 11)
        sequences = apply_masks(records)
        normal_texts = {s.text for s, r in zip(sequences, records) if r.label == 0}
        for sequence, record in zip(sequences, records):
            if record.label == 1:
                assert sequence.text not in normal_texts

    def test_parameter_validation(self):
        with pytest.raises(ConfigError):
            gen_synthetic(0, 10, 0.0, 1)
        with pytest.raises(ConfigError):
            gen_synthetic(1, 0, 0.0, 1)
        with pytest.raises(ConfigError):
            gen_synthetic(1, 10, 1.0, 1)
