import io
import random

import pytest

from varsets.chat_ingest import (
    ChatParseError,
    Transcript,
    Utterance,
    clean_utterance,
    filter_short,
    ingest_dir,
    parse_chat,
    parse_chat_file,
    read_utterances,
    select_budget,
    write_utterances,
)

from conftest import FIXTURES, make_unrelated


def test_parse_keeps_only_requested_tiers():
    transcript = parse_chat_file(FIXTURES / "straw.cha", keep_tiers={"MOT"})
    assert [u.speaker for u in transcript.utterances] == ["MOT"] * 4
    assert [u.text for u in transcript.utterances] == [
        "you wanna straw?",
        "here's your straw.",
        "uh oh.",
        "where's the straw?",
    ]


def test_parse_first_utterance_fields():
    transcript = parse_chat_file(FIXTURES / "straw.cha", keep_tiers={"MOT"})
    first = transcript.utterances[0]
    assert first.text == "you wanna straw?"
    assert first.words == ["you", "wanna", "straw?"]
    assert len(first.words) == 3
    assert first.speaker == "MOT"
    assert first.is_question
    assert first.source_file == "straw.cha"
    assert first.source_line == 7


def test_child_tier_excluded_by_default():
    transcript = parse_chat_file(FIXTURES / "straw.cha")
    assert all(u.speaker != "CHI" for u in transcript.utterances)


def test_bracket_annotation_stripped():
    assert clean_utterance("here's your [?] straw .") == "here's your straw."


def test_cleaning_rules():
    assert clean_utterance("<you want> [//] you need it .") == "you need it."
    assert clean_utterance("no [/] no way .") == "no way."
    assert clean_utterance("xxx what's that ?") == "what's that?"
    assert clean_utterance("&=laughs &-um look (a)bout here .") == "look about here."
    assert clean_utterance("gonna [: going to] eat ?") == "gonna eat?"
    assert clean_utterance("want it +...") == "want it."
    assert clean_utterance("0 .") == ""
    assert clean_utterance("xxx ?") == ""


def test_no_annotation_patterns_survive_cleaning():
    transcripts = ingest_dir(FIXTURES)
    for t in transcripts:
        for u in t.utterances:
            assert "[" not in u.text and "]" not in u.text
            assert "<" not in u.text and ">" not in u.text
            assert not any(w.startswith("&") for w in u.words)
            assert "xxx" not in u.words and "yyy" not in u.words


def test_malformed_tier_line_is_counted_not_fatal():
    transcript = parse_chat_file(FIXTURES / "animals.cha")
    assert len(transcript.skipped_lines) == 1
    texts = [u.text for u in transcript.utterances]
    assert "very good sweetie." in texts


def test_continuation_line_joined():
    transcript = parse_chat_file(FIXTURES / "animals.cha")
    assert "you can take the pig and the cat and put them there." in [
        u.text for u in transcript.utterances
    ]


def test_utterance_order_matches_file_order():
    transcript = parse_chat_file(FIXTURES / "animals.cha")
    lines = [u.source_line for u in transcript.utterances]
    assert lines == sorted(lines)
    assert all(u.source_file == "animals.cha" for u in transcript.utterances)


def test_non_utf8_is_hard_error():
    with pytest.raises(ChatParseError):
        parse_chat(b"*MOT:\thi there \xff\xfe .")


def test_filter_short_drops_fragments():
    utts = parse_chat_file(FIXTURES / "straw.cha", keep_tiers={"MOT"}).utterances
    kept = filter_short(utts)
    assert "uh oh." not in [u.text for u in kept]
    assert [u.text for u in kept] == [
        "you wanna straw?",
        "here's your straw.",
        "where's the straw?",
    ]


def test_filter_short_empty():
    assert filter_short([]) == []


def test_filter_short_is_subsequence():
    rng = random.Random(5)
    utts = [
        Utterance(" ".join(f"w{i}x{j}" for j in range(rng.randint(1, 6))), "MOT", "f", i)
        for i in range(200)
    ]
    kept = filter_short(utts, 3)
    assert all(len(u.words) >= 3 for u in kept)
    it = iter(utts)
    assert all(u in it for u in kept)  # subsequence check


def test_select_budget_hand_counted():
    words = [4, 5, 6]
    utts = [Utterance(" ".join(f"w{i}{j}" for j in range(n)), "MOT", "f", i) for i, n in enumerate(words)]
    t = Transcript(file_id="f", utterances=utts)
    selected = select_budget([t], 10)
    assert selected == utts[:2]
    assert sum(len(u.words) for u in selected) == 9


def test_select_budget_zero_and_tiny():
    utts = make_unrelated(3)
    t = Transcript(file_id="f", utterances=utts)
    assert select_budget([t], 0) == []
    assert select_budget([t], 2) == []  # smaller than the first utterance


def test_select_budget_prefix_property():
    # Oracle: brute-force prefix sums decide the cut-off point.
    rng = random.Random(11)
    for trial in range(25):
        utts = [
            Utterance(" ".join(f"t{trial}w{i}{j}" for j in range(rng.randint(1, 8))), "MOT", "f", i)
            for i in range(rng.randint(1, 40))
        ]
        budget = rng.randint(0, 120)
        prefix = 0
        expect = []
        for u in utts:
            if prefix + len(u.words) > budget:
                break
            expect.append(u)
            prefix += len(u.words)
        got = select_budget([Transcript(file_id="f", utterances=utts)], budget)
        assert got == expect
        total = sum(len(u.words) for u in got)
        assert total <= budget
        if len(got) < len(utts):
            assert total + len(utts[len(got)].words) > budget


def test_jsonl_round_trip_idempotent(tmp_path):
    transcripts = ingest_dir(FIXTURES)
    utts = [u for t in transcripts for u in t.utterances]
    path = tmp_path / "records.jsonl"
    digest1 = write_utterances(path, utts)
    back = read_utterances(path)
    assert back == utts
    digest2 = write_utterances(tmp_path / "again.jsonl", back)
    assert digest1 == digest2
