import numpy as np
import pytest

from amnet.data import (
    EOS, GO, PAD, UNK, DataError, Example, ParseError, Vocabulary, batchify,
    build_vocabulary, detokenize, find_task_file, load_task_data, make_batch,
    parse_babi_file, split_train_val, tokenize,
)
from amnet.synthetic import generate_task, write_task_files

SAMPLE = """1 Mary moved to the bathroom.
2 John went to the hallway.
3 Where is Mary? \tbathroom\t1
4 Daniel went back to the hallway.
5 Sandra moved to the garden.
6 Where is Daniel? \thallway\t4
1 Sandra travelled to the office.
2 Sandra went to the bathroom.
3 Where is Sandra? \tbathroom\t2
"""

PATHS = """1 The office is north of the bedroom.
2 The bedroom is north of the bathroom.
3 What is north of the bedroom? \toffice\t1
1 You are at the kitchen.
2 Go west.
3 How do you go from the kitchen to the garden? \tn,w\t1 2
"""


@pytest.fixture
def sample_file(tmp_path):
    p = tmp_path / "qa1_single-supporting-fact_train.txt"
    p.write_text(SAMPLE)
    return p


class TestParsing:
    def test_basic_example(self, sample_file):
        examples = parse_babi_file(sample_file)
        assert len(examples) == 3
        first = examples[0]
        assert first.story == [["mary", "moved", "to", "the", "bathroom"],
                               ["john", "went", "to", "the", "hallway"]]
        assert first.question == ["where", "is", "mary"]
        assert first.answer == ["bathroom"]
        assert first.supporting == [0]
        assert first.line_numbers == [1, 2]

    def test_questions_do_not_join_story(self, sample_file):
        examples = parse_babi_file(sample_file)
        second = examples[1]
        # 4 statements so far, no question text among them
        assert len(second.story) == 4
        assert second.line_numbers == [1, 2, 4, 5]
        assert ["where", "is", "mary"] not in second.story
        assert second.supporting == [2]

    def test_line_number_reset_starts_new_story(self, sample_file):
        examples = parse_babi_file(sample_file)
        third = examples[2]
        assert third.story == [["sandra", "travelled", "to", "the", "office"],
                               ["sandra", "went", "to", "the", "bathroom"]]

    def test_comma_answers_become_sequences(self, tmp_path):
        p = tmp_path / "qa19_path-finding_train.txt"
        p.write_text(PATHS)
        examples = parse_babi_file(p)
        assert examples[1].answer == ["n", "w"]
        assert examples[1].supporting == [0, 1]

    def test_malformed_lines(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("mary moved to the bathroom.\n")
        with pytest.raises(ParseError, match="bad.txt:1"):
            parse_babi_file(p)
        p.write_text("1 Where is Mary?\tbathroom\n")
        with pytest.raises(ParseError, match="question line"):
            parse_babi_file(p)

    def test_crlf_tolerated(self, tmp_path):
        p = tmp_path / "crlf.txt"
        p.write_bytes(SAMPLE.replace("\n", "\r\n").encode())
        assert len(parse_babi_file(p)) == 3

    def test_parsing_is_idempotent(self, sample_file):
        a = parse_babi_file(sample_file)
        b = parse_babi_file(sample_file)
        assert a == b

    def test_detokenize_round_trip(self, sample_file):
        examples = parse_babi_file(sample_file)
        got = detokenize(examples[0].story[0])
        original = "Mary moved to the bathroom."
        assert got == " ".join(tokenize(original))
        assert got == original.lower().rstrip(".")


class TestVocabulary:
    def test_empty_corpus_has_reserved_only(self):
        v = build_vocabulary([])
        assert len(v) == 4
        assert v.decode([PAD, GO, EOS, UNK]) == ["<pad>", "<go>", "<eos>", "<unk>"]

    def test_deterministic(self, sample_file):
        examples = parse_babi_file(sample_file)
        a = build_vocabulary(examples)
        b = build_vocabulary(examples)
        assert a.id_to_token == b.id_to_token

    def test_matches_token_set_scan(self, sample_file):
        examples = parse_babi_file(sample_file)
        v = build_vocabulary(examples)
        tokens = set()
        for line in SAMPLE.splitlines():
            body = line.split(" ", 1)[1].split("\t")[0]
            tokens.update(tokenize(body))
            if "\t" in line:
                tokens.update(tokenize(line.split("\t")[1]))
        assert len(v) == 4 + len(tokens)
        assert set(v.id_to_token[4:]) == tokens

    def test_bijection_and_lowercase(self, sample_file):
        v = build_vocabulary(parse_babi_file(sample_file))
        for i, tok in enumerate(v.id_to_token):
            assert tok == tok.lower()
            assert v.token_to_id[tok] == i

    def test_unknown_token_maps_to_unk(self, sample_file):
        v = build_vocabulary(parse_babi_file(sample_file))
        assert v.encode_token("zeppelin") == UNK
        with pytest.raises(DataError):
            v.encode_token("zeppelin", strict=True)

    def test_answers_always_in_vocabulary(self, sample_file):
        examples = parse_babi_file(sample_file)
        v = build_vocabulary(examples)
        for ex in examples:
            for tok in ex.answer:
                assert tok in v


class TestSplit:
    def test_ten_thousand(self):
        xs = list(range(10_000))
        train, val = split_train_val(xs)
        assert (len(train), len(val)) == (9_000, 1_000)
        assert train == xs[:9_000] and val == xs[9_000:]

    def test_proportional_with_warning(self):
        with pytest.warns(UserWarning):
            train, val = split_train_val(list(range(10)))
        assert (len(train), len(val)) == (9, 1)

    def test_partition(self):
        xs = list(range(10_000))
        train, val = split_train_val(xs)
        assert sorted(train + val) == xs


def encode_all(path):
    examples = parse_babi_file(path)
    vocab = build_vocabulary(examples)
    return [vocab.encode_example(e, strict=True) for e in examples], vocab


class TestBatching:
    def test_covers_every_example_once(self, sample_file):
        encoded, _ = encode_all(sample_file)
        encoded = encoded * 34  # 102 examples
        batches = batchify(encoded, batch_size=50, seed=7)
        assert [b.size for b in batches] == [50, 50, 2]
        seen = sorted(id(e) for b in batches for e in b.examples)
        assert seen == sorted(id(e) for e in encoded)

    def test_masks_sum_to_true_lengths(self, sample_file):
        encoded, _ = encode_all(sample_file)
        batch = make_batch(encoded)
        for i, e in enumerate(batch.examples):
            assert batch.sentence_mask[i].sum() == len(e.story)
            for j, sent in enumerate(e.story):
                assert batch.word_mask[i, j].sum() == len(sent)
            assert batch.question_mask[i].sum() == len(e.question)
            assert batch.answer_mask[i].sum() == len(e.answer) + 1  # EOS

    def test_answer_rows_end_with_eos(self, sample_file):
        encoded, _ = encode_all(sample_file)
        batch = make_batch(encoded)
        for i, e in enumerate(batch.examples):
            assert batch.answer[i, len(e.answer)] == EOS

    def test_shuffle_is_seeded(self, sample_file):
        encoded, _ = encode_all(sample_file)
        encoded = encoded * 20
        a = batchify(encoded, 8, seed=3)
        b = batchify(encoded, 8, seed=3)
        c = batchify(encoded, 8, seed=4)
        assert all(np.array_equal(x.story, y.story) for x, y in zip(a, b))
        assert any(not np.array_equal(x.story, y.story) for x, y in zip(a, c))


class TestSyntheticGenerator:
    @pytest.mark.parametrize("task,questions", [(1, 50), (4, 50), (12, 50)])
    def test_generated_files_parse(self, tmp_path, task, questions):
        train, test = write_task_files(tmp_path, task, n_train=questions,
                                       n_test=questions, seed=5)
        examples = parse_babi_file(train)
        assert len(examples) == questions
        for ex in examples:
            assert ex.story and ex.question and len(ex.answer) == 1
            assert all(0 <= s < len(ex.story) for s in ex.supporting)

    def test_deterministic(self):
        assert generate_task(1, 10, seed=9) == generate_task(1, 10, seed=9)
        assert generate_task(1, 10, seed=9) != generate_task(1, 10, seed=10)

    def test_task1_answer_is_latest_location(self, tmp_path):
        train, _ = write_task_files(tmp_path, 1, n_train=500, n_test=5, seed=11)
        for ex in parse_babi_file(train):
            actor = ex.question[-1]
            latest = None
            for sent in ex.story:
                if sent[0] == actor:
                    latest = sent[-1]
            assert latest == ex.answer[0]

    def test_task12_pairs_move_together(self, tmp_path):
        train, _ = write_task_files(tmp_path, 12, n_train=500, n_test=5, seed=12)
        for ex in parse_babi_file(train):
            actor = ex.question[-1]
            latest = None
            for sent in ex.story:
                if actor in sent[:3]:  # 'x and y ...'
                    latest = sent[-1]
            assert latest == ex.answer[0]

    def test_load_task_data(self, tmp_path):
        write_task_files(tmp_path, 1, n_train=10_000, n_test=1_000, seed=0)
        data = load_task_data(tmp_path, 1)
        assert len(data.train) == 9_000
        assert len(data.val) == 1_000
        assert len(data.test) == 1_000
        assert data.max_answer_len == 1
        assert data.max_sentence_len >= 5
        assert len(data.vocab) < 40

    def test_find_task_file_missing(self, tmp_path):
        with pytest.raises(DataError, match="qa3"):
            find_task_file(tmp_path, 3, "train")
