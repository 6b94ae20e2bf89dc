"""bAbi v1.2 task files: parsing, vocabulary, splits, padded batches.

A task file is a sequence of numbered lines; the number resetting to 1
starts a new story. Statement lines are plain sentences, question lines
carry tab-separated question, answer, and supporting line numbers. Each
question becomes one example whose story is every statement seen so far
in the current story, in order.

Text is lowercased and punctuation is dropped from token streams.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PAD", "GO", "EOS", "UNK", "RESERVED_TOKENS",
    "ParseError", "DataError", "Example", "EncodedExample", "Vocabulary", "Batch",
    "tokenize", "detokenize", "parse_babi_file", "build_vocabulary",
    "split_train_val", "batchify", "make_batch", "TaskData", "load_task_data",
    "find_task_file",
]

PAD, GO, EOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<go>", "<eos>", "<unk>")

_TOKEN_RE = re.compile(r"[\w']+")


class ParseError(ValueError):
    """A bAbi file line does not match the v1.2 format."""


class DataError(ValueError):
    """Dataset-level problem: missing files, out-of-vocabulary tokens, bad splits."""


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; periods and question marks are dropped."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens) -> str:
    return " ".join(tokens)


@dataclass
class Example:
    """One question with its reading material, as token strings."""

    story: list[list[str]]
    line_numbers: list[int]
    question: list[str]
    answer: list[str]
    supporting: list[int]  # indices into story


@dataclass
class EncodedExample:
    """Example with every token mapped to a vocabulary id."""

    story: list[list[int]]
    line_numbers: list[int]
    question: list[int]
    answer: list[int]
    supporting: list[int]


class Vocabulary:
    """Bijective token<->id map with PAD/GO/EOS/UNK reserved at 0..3."""

    def __init__(self, tokens):
        self.id_to_token: list[str] = list(RESERVED_TOKENS) + list(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode_token(self, token: str, strict: bool = False) -> int:
        tid = self.token_to_id.get(token)
        if tid is None:
            if strict:
                raise DataError(f"token {token!r} not in vocabulary")
            return UNK
        return tid

    def encode(self, tokens, strict: bool = False) -> list[int]:
        return [self.encode_token(t, strict) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def encode_example(self, ex: Example, strict: bool = False) -> EncodedExample:
        return EncodedExample(
            story=[self.encode(s, strict) for s in ex.story],
            line_numbers=list(ex.line_numbers),
            question=self.encode(ex.question, strict),
            answer=self.encode(ex.answer, strict),
            supporting=list(ex.supporting),
        )


def parse_babi_file(path) -> list[Example]:
    examples: list[Example] = []
    story: list[list[str]] = []
    line_numbers: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            head, _, rest = line.partition(" ")
            try:
                n = int(head)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: line does not start with a number") from None
            if n == 1:
                story, line_numbers = [], []
            if "\t" in rest:
                parts = rest.split("\t")
                if len(parts) < 3:
                    raise ParseError(
                        f"{path}:{lineno}: question line needs question<TAB>answer<TAB>support")
                question_text, answer_text, support_text = parts[0], parts[1], parts[2]
                question = tokenize(question_text)
                answer = [a.strip().lower() for a in answer_text.split(",") if a.strip()]
                if not question or not answer:
                    raise ParseError(f"{path}:{lineno}: empty question or answer")
                supporting = []
                for tok in support_text.split():
                    ref = int(tok)
                    if ref not in line_numbers:
                        raise ParseError(
                            f"{path}:{lineno}: supporting line {ref} is not a prior statement")
                    supporting.append(line_numbers.index(ref))
                examples.append(Example(
                    story=[list(s) for s in story],
                    line_numbers=list(line_numbers),
                    question=question,
                    answer=answer,
                    supporting=supporting,
                ))
            else:
                tokens = tokenize(rest)
                if not tokens:
                    raise ParseError(f"{path}:{lineno}: empty statement")
                story.append(tokens)
                line_numbers.append(n)
    return examples


def build_vocabulary(examples) -> Vocabulary:
    tokens: set[str] = set()
    for ex in examples:
        for sentence in ex.story:
            tokens.update(sentence)
        tokens.update(ex.question)
        tokens.update(ex.answer)
    return Vocabulary(sorted(tokens))


def split_train_val(examples):
    """First 9,000 / last 1,000 for the standard 10k sets; 90/10 otherwise."""
    n = len(examples)
    if n == 10_000:
        cut = 9_000
    else:
        warnings.warn(f"expected 10,000 examples, got {n}; using a proportional 90/10 split")
        cut = int(n * 0.9)
    return examples[:cut], examples[cut:]


@dataclass
class Batch:
    """Padded id arrays plus {0,1} masks marking real positions."""

    story: np.ndarray          # [B, S, Lw] int64
    word_mask: np.ndarray      # [B, S, Lw]
    sentence_mask: np.ndarray  # [B, S]
    question: np.ndarray       # [B, Lq]
    question_mask: np.ndarray  # [B, Lq]
    answer: np.ndarray         # [B, T] gold tokens then EOS, PAD beyond
    answer_mask: np.ndarray    # [B, T]
    examples: list[EncodedExample]

    @property
    def size(self) -> int:
        return len(self.examples)


def make_batch(examples) -> Batch:
    """Pad a group of encoded examples to its own max dimensions."""
    exs = list(examples)
    if not exs:
        raise DataError("cannot build an empty batch")
    b = len(exs)
    s_max = max(len(e.story) for e in exs)
    w_max = max((len(sent) for e in exs for sent in e.story), default=1)
    q_max = max(len(e.question) for e in exs)
    t_max = max(len(e.answer) for e in exs) + 1  # room for EOS

    story = np.full((b, s_max, w_max), PAD, dtype=np.int64)
    word_mask = np.zeros((b, s_max, w_max), dtype=np.float64)
    sentence_mask = np.zeros((b, s_max), dtype=np.float64)
    question = np.full((b, q_max), PAD, dtype=np.int64)
    question_mask = np.zeros((b, q_max), dtype=np.float64)
    answer = np.full((b, t_max), PAD, dtype=np.int64)
    answer_mask = np.zeros((b, t_max), dtype=np.float64)

    for i, e in enumerate(exs):
        for j, sent in enumerate(e.story):
            story[i, j, :len(sent)] = sent
            word_mask[i, j, :len(sent)] = 1.0
        sentence_mask[i, :len(e.story)] = 1.0
        question[i, :len(e.question)] = e.question
        question_mask[i, :len(e.question)] = 1.0
        gold = list(e.answer) + [EOS]
        answer[i, :len(gold)] = gold
        answer_mask[i, :len(gold)] = 1.0
    return Batch(story, word_mask, sentence_mask, question, question_mask,
                 answer, answer_mask, exs)


def batchify(examples, batch_size: int = 50, seed: int = 0) -> list[Batch]:
    """Shuffle (seeded) and cut into padded batches covering every example once."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    exs = list(examples)
    order = np.random.default_rng(seed).permutation(len(exs))
    return [make_batch([exs[j] for j in order[i:i + batch_size]])
            for i in range(0, len(exs), batch_size)]


# ---------------------------------------------------------------------------
# task loading


TASK_SLUGS = {
    1: "single-supporting-fact", 2: "two-supporting-facts", 3: "three-supporting-facts",
    4: "two-arg-relations", 5: "three-arg-relations", 6: "yes-no-questions",
    7: "counting", 8: "lists-sets", 9: "simple-negation", 10: "indefinite-knowledge",
    11: "basic-coreference", 12: "conjunction", 13: "compound-coreference",
    14: "time-reasoning", 15: "basic-deduction", 16: "basic-induction",
    17: "positional-reasoning", 18: "size-reasoning", 19: "path-finding",
    20: "agents-motivations",
}


def find_task_file(data_dir, task: int, split: str):
    """Locate qa{task}_*_{split}.txt under data_dir (en-10k naming)."""
    from pathlib import Path

    pattern = f"qa{task}_*_{split}.txt"
    hits = sorted(Path(data_dir).glob(pattern))
    if not hits:
        raise DataError(f"no bAbi file matching {Path(data_dir) / pattern}")
    return hits[0]


@dataclass
class TaskData:
    """Encoded train/val/test splits sharing one vocabulary."""

    vocab: Vocabulary
    train: list[EncodedExample]
    val: list[EncodedExample]
    test: list[EncodedExample]
    max_sentence_len: int
    max_answer_len: int


def load_task_data(data_dir, task: int, with_test: bool = True) -> TaskData:
    train_raw = parse_babi_file(find_task_file(data_dir, task, "train"))
    vocab = build_vocabulary(train_raw)
    train_split, val_split = split_train_val(train_raw)
    train = [vocab.encode_example(e, strict=True) for e in train_split]
    val = [vocab.encode_example(e, strict=True) for e in val_split]
    test = []
    if with_test:
        test_raw = parse_babi_file(find_task_file(data_dir, task, "test"))
        test = [vocab.encode_example(e) for e in test_raw]
    everything = train + val + test
    max_sentence_len = max(len(s) for e in everything for s in e.story)
    max_answer_len = max(len(e.answer) for e in everything)
    return TaskData(vocab, train, val, test, max_sentence_len, max_answer_len)
