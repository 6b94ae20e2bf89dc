"""The attentive memory network.

Pipeline: a question encoder produces a query state; a word-level
encoder (weight-tied with the question encoder) turns each sentence into
one vector; a bidirectional sentence-level encoder, initialized from the
question state, mixes those vectors; the memory module runs a few
attentive GRU steps over the sentence states, fed the question state at
every step; the decoder runs attentive GRU steps over the memory states
and projects each state onto the vocabulary.

All attention sites share one additive form: score each state against
the query through a tanh bottleneck, softmax, mix, then project the
concatenated context and candidate state back to width e. One embedding
matrix serves question, document and answer tokens.

Everything is batch-first ([B, e] states); single-example calls use B=1.
Sentence states for a batch live in one [B*S, e] tensor, row b*S+s
holding sentence s of example b.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from amnet.data import EOS, GO, DataError, Vocabulary, make_batch
from amnet.gru import (
    ConfigError, StackSpec, apply_dropout, gru_step, run_bidirectional, run_sequence,
)
from amnet.tensor import (
    ContractError, ShapeError, Tensor, add, concat_cols, constant,
    cross_entropy_rows, interleave_rows, matmul, mix_rows, mul, repeat_rows,
    reshape, scale, softmax_masked, sum_all, take_rows, tanh,
)

__all__ = [
    "AttentionParams", "AttentionRecord", "Checkpoint", "CheckpointError",
    "ForwardResult", "ModelConfig", "ModelParams", "attend",
    "attentive_cell_step", "decode_answer", "decode_greedy",
    "decode_teacher_forced", "encode_document", "encode_question",
    "forward_batch", "forward_example", "init_params", "load_checkpoint",
    "memory_module", "save_checkpoint",
]


@dataclass
class ModelConfig:
    """Architecture sizes. One width ``size`` serves every embedding and state."""

    size: int
    depth: int = 1
    memories: int = 1
    dropout: float = 0.0
    vocab_size: int = 5
    max_sentence_len: int = 16
    max_answer_len: int = 1

    def __post_init__(self):
        if self.size < 1:
            raise ConfigError(f"size must be positive, got {self.size}")
        if self.depth < 1:
            raise ConfigError(f"depth must be positive, got {self.depth}")
        if self.memories < 1:
            raise ConfigError(f"need at least one memory step, got {self.memories}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")
        if self.vocab_size < 5:
            raise ConfigError("vocabulary must hold the 4 reserved ids plus content")
        if self.max_sentence_len < 1 or self.max_answer_len < 1:
            raise ConfigError("sequence length caps must be positive")


@dataclass
class AttentionParams:
    """Additive attention: score i = v . tanh(W1 h_i + W2 query); then
    the context and candidate concat is mapped back to width e by proj."""

    w1: Tensor   # [e, e]
    w2: Tensor   # [e, e]
    v: Tensor    # [e, 1]
    proj: Tensor  # [2e, e]

    def named(self, prefix: str):
        for name in ("w1", "w2", "v", "proj"):
            yield f"{prefix}.{name}", getattr(self, name)

    @classmethod
    def create(cls, e: int, rng: np.random.Generator, dtype=np.float32,
               weight_scale: float = 0.5, score_scale: float = 1.0) -> "AttentionParams":
        def w(rows, cols, scale):
            return Tensor(rng.uniform(-scale, scale, (rows, cols)).astype(dtype),
                          requires_grad=True)

        return cls(w(e, e, weight_scale), w(e, e, weight_scale),
                   w(e, 1, score_scale), w(2 * e, e, weight_scale))


@dataclass
class ModelParams:
    """Every learned array. ``encoder`` is shared by the question encoder
    and the word-level document encoder (weight tying)."""

    embedding: Tensor
    encoder: StackSpec
    sentence_fwd: StackSpec
    sentence_bwd: StackSpec
    memory_cell: StackSpec
    decoder_cell: StackSpec
    memory_attention: AttentionParams
    decoder_attention: AttentionParams
    out_w: Tensor
    out_b: Tensor

    @property
    def dtype(self):
        return self.embedding.dtype

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = [("embedding", self.embedding)]
        named += list(self.encoder.named("encoder"))
        named += list(self.sentence_fwd.named("sentence_fwd"))
        named += list(self.sentence_bwd.named("sentence_bwd"))
        named += list(self.memory_cell.named("memory_cell"))
        named += list(self.decoder_cell.named("decoder_cell"))
        named += list(self.memory_attention.named("memory_attention"))
        named += list(self.decoder_attention.named("decoder_attention"))
        named += [("out_w", self.out_w), ("out_b", self.out_b)]
        return named

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Uniform weights, zero biases, fixed creation order.

    Weight matrices draw from +-0.5 and attention score vectors from +-1.0:
    wide enough that attention logits differentiate from the start. With a
    timid init (say +-0.08 everywhere) the attention stays uniform and
    training stalls near the answer-prior plateau for thousands of batches.
    """
    rng = np.random.default_rng(seed)
    e, v = config.size, config.vocab_size

    def w(rows, cols):
        return Tensor(rng.uniform(-0.5, 0.5, (rows, cols)).astype(dtype), requires_grad=True)

    return ModelParams(
        embedding=w(v, e),
        encoder=StackSpec.create(e, e, config.depth, rng, dtype),
        sentence_fwd=StackSpec.create(e, e, config.depth, rng, dtype),
        sentence_bwd=StackSpec.create(e, e, config.depth, rng, dtype),
        memory_cell=StackSpec.create(e, e, config.depth, rng, dtype),
        decoder_cell=StackSpec.create(e, e, config.depth, rng, dtype),
        memory_attention=AttentionParams.create(e, rng, dtype),
        decoder_attention=AttentionParams.create(e, rng, dtype),
        out_w=w(e, v),
        out_b=Tensor(np.zeros(v, dtype=dtype), requires_grad=True),
    )


@dataclass
class AttentionRecord:
    """Attention introspection for one example."""

    memory_attention: np.ndarray    # [m, |S|], each row sums to 1
    decoder_attention: np.ndarray   # [T, m], each row sums to 1
    memory_contexts: np.ndarray     # [m, e]


def attend(query: Tensor, states: Tensor, params: AttentionParams,
           mask=None, k: int | None = None):
    """Additive attention of ``query`` [B, e] over ``states`` [B*k, e].

    Returns (context [B, e], weights [B, k]). ``mask`` ([B, k]) hides
    padded states; with B=1 this is plain attention over k state rows.
    """
    b = query.shape[0]
    rows = states.shape[0]
    if k is None:
        if rows == 0 or rows % b:
            raise ContractError(f"cannot split {rows} states into {b} groups")
        k = rows // b
    if k < 1:
        raise ContractError("attend needs at least one state")
    if rows != b * k:
        raise ShapeError(f"{rows} state rows do not match batch {b} x k {k}")
    scores = matmul(states, params.w1)
    qpart = repeat_rows(matmul(query, params.w2), k)
    u = matmul(tanh(add(scores, qpart)), params.v)
    weights = softmax_masked(reshape(u, (b, k)),
                             np.ones((b, k)) if mask is None else mask)
    return mix_rows(weights, states), weights


def attentive_cell_step(x: Tensor, h_prev, states: Tensor, cell: StackSpec,
                        att: AttentionParams, mask=None, k: int | None = None, *,
                        dropout: float = 0.0, training: bool = False, rng=None):
    """One attentive recurrent step: candidate = gru(x, h); attend with the
    candidate as query; output = proj(context || candidate).

    ``h_prev`` is a [B, e] tensor (depth 1) or a per-layer list. Returns
    (output, new_states, weights, context); the output replaces the top
    layer's carried state.
    """
    hs = [h_prev] if isinstance(h_prev, Tensor) else list(h_prev)
    if len(hs) != cell.depth:
        raise ShapeError(f"{len(hs)} states for a depth-{cell.depth} cell")
    new_hs: list[Tensor] = []
    inp = x
    for layer, h in zip(cell.layers, hs):
        h_new = gru_step(inp, h, layer)
        new_hs.append(h_new)
        inp = apply_dropout(h_new, dropout, training, rng)
    candidate = new_hs[-1]
    context, weights = attend(candidate, states, att, mask, k)
    out = matmul(concat_cols(context, candidate), att.proj)
    new_hs[-1] = out
    return out, new_hs, weights, context


def _zeros_like_state(batch: int, e: int, dtype) -> Tensor:
    return constant(np.zeros((batch, e), dtype=dtype))


def _stack_init(first: Tensor, depth: int):
    b, e = first.shape
    return [first] + [_zeros_like_state(b, e, first.dtype) for _ in range(depth - 1)]


def encode_question(question_ids, question_mask, params: ModelParams,
                    config: ModelConfig, *, training: bool = False, rng=None) -> Tensor:
    """Final state of the (tied) encoder stack over the question, zero-initialized."""
    ids = np.atleast_2d(np.asarray(question_ids, dtype=np.int64))
    b, lq = ids.shape
    if lq == 0:
        raise ContractError("empty question")
    m = None
    if question_mask is not None:
        m = np.atleast_2d(np.asarray(question_mask, dtype=np.float64))
        if (m.sum(axis=1) == 0).any():
            raise ContractError("a question in the batch has no tokens")
        m = m.T
    steps = [take_rows(params.embedding, ids[:, t]) for t in range(lq)]
    h0 = _zeros_like_state(b, config.size, params.dtype)
    _, final = run_sequence(steps, h0, params.encoder, m,
                            dropout=config.dropout, training=training, rng=rng)
    return final


def encode_document(story_ids, word_mask, sentence_mask, h_que: Tensor,
                    params: ModelParams, config: ModelConfig, *,
                    training: bool = False, rng=None):
    """Word-level then sentence-level encoding.

    Returns (h_sen [B*S, e], h_sen_final [B, e], S): the sentence-level
    states to attend over (row b*S+s is sentence s of example b) and the
    fused final state. Both directions of the sentence-level encoder are
    initialized from the question state.
    """
    ids = np.asarray(story_ids, dtype=np.int64)
    if ids.ndim == 2:
        ids = ids[None]
    b, s, lw = ids.shape
    if s == 0 or lw == 0:
        raise ContractError("empty document")
    if sentence_mask is not None:
        sm = np.atleast_2d(np.asarray(sentence_mask, dtype=np.float64))
        if (sm.sum(axis=1) == 0).any():
            raise ContractError("a story in the batch has no sentences")
    else:
        sm = None

    # fold sentences into the batch: word-level runs once over [B*S] rows
    ids2 = ids.reshape(b * s, lw)
    wm = None
    if word_mask is not None:
        wm = np.asarray(word_mask, dtype=np.float64).reshape(b * s, lw).T
    steps = [take_rows(params.embedding, ids2[:, t]) for t in range(lw)]
    h0 = _zeros_like_state(b * s, config.size, params.dtype)
    _, h_wrd = run_sequence(steps, h0, params.encoder, wm,
                            dropout=config.dropout, training=training, rng=rng)

    # sentence-level bidirectional pass over the per-sentence vectors
    offsets = np.arange(b, dtype=np.int64) * s
    sen_steps = [take_rows(h_wrd, offsets + j) for j in range(s)]
    sen_states, sen_final = run_bidirectional(
        sen_steps, h_que, h_que, params.sentence_fwd, params.sentence_bwd,
        None if sm is None else sm.T,
        dropout=config.dropout, training=training, rng=rng)
    return interleave_rows(sen_states), sen_final, s


def memory_module(h_que: Tensor, h_sen: Tensor, sentence_mask, h_sen_final: Tensor,
                  params: ModelParams, config: ModelConfig, m: int | None = None, *,
                  training: bool = False, rng=None):
    """m attentive steps over the sentence states, fed the question state.

    The cell starts from the document encoding (m_0 = h_sen_final).
    Returns (memories, weights, contexts): m state tensors [B, e] plus the
    per-step attention rows and context vectors.
    """
    m = config.memories if m is None else m
    if m < 1:
        raise ConfigError("memory module needs at least one step")
    b = h_que.shape[0]
    hs = _stack_init(h_sen_final, params.memory_cell.depth)
    memories: list[Tensor] = []
    weights: list[Tensor] = []
    contexts: list[Tensor] = []
    k = h_sen.shape[0] // b
    for _ in range(m):
        out, hs, a, d = attentive_cell_step(
            h_que, hs, h_sen, params.memory_cell, params.memory_attention,
            sentence_mask, k, dropout=config.dropout, training=training, rng=rng)
        memories.append(out)
        weights.append(a)
        contexts.append(d)
    return memories, weights, contexts


def _decoder_logits(state: Tensor, params: ModelParams) -> Tensor:
    return add(matmul(state, params.out_w), params.out_b)


def decode_teacher_forced(memories, targets, params: ModelParams, config: ModelConfig, *,
                          training: bool = False, rng=None):
    """Gold tokens drive the decoder; one logit row per target position.

    Step 1 consumes the GO embedding, step t+1 the embedding of target t.
    Returns (logits per step, attention weights per step).
    """
    if targets is None:
        raise ContractError("teacher-forced decoding needs gold targets")
    tgt = np.atleast_2d(np.asarray(targets, dtype=np.int64))
    b, t_steps = tgt.shape
    if t_steps == 0:
        raise ContractError("teacher-forced decoding needs at least one target position")
    m_states = interleave_rows(memories)
    hs = _stack_init(memories[-1], params.decoder_cell.depth)
    prev = np.full(b, GO, dtype=np.int64)
    logits_per_step: list[Tensor] = []
    weights: list[Tensor] = []
    for t in range(t_steps):
        x = take_rows(params.embedding, prev)
        out, hs, a, _ = attentive_cell_step(
            x, hs, m_states, params.decoder_cell, params.decoder_attention,
            None, len(memories), dropout=config.dropout, training=training, rng=rng)
        logits_per_step.append(_decoder_logits(out, params))
        weights.append(a)
        prev = tgt[:, t]
    return logits_per_step, weights


def decode_greedy(memories, params: ModelParams, config: ModelConfig,
                  max_answer_len: int | None = None):
    """Free-running greedy decode; halts at EOS (all rows) or the length cap.

    Returns (tokens [B, steps], attention weights per step).
    """
    cap = (config.max_answer_len if max_answer_len is None else max_answer_len) + 1
    m_states = interleave_rows(memories)
    b = memories[0].shape[0]
    hs = _stack_init(memories[-1], params.decoder_cell.depth)
    prev = np.full(b, GO, dtype=np.int64)
    done = np.zeros(b, dtype=bool)
    steps: list[np.ndarray] = []
    weights: list[Tensor] = []
    for _ in range(cap):
        x = take_rows(params.embedding, prev)
        out, hs, a, _ = attentive_cell_step(
            x, hs, m_states, params.decoder_cell, params.decoder_attention,
            None, len(memories))
        ids = _decoder_logits(out, params).data.argmax(axis=1).astype(np.int64)
        steps.append(ids)
        weights.append(a)
        done |= ids == EOS
        if done.all():
            break
        prev = ids
    return np.stack(steps, axis=1), weights


def decode_answer(memories, params: ModelParams, config: ModelConfig, mode: str,
                  targets=None, max_answer_len: int | None = None, *,
                  training: bool = False, rng=None):
    """Dispatch on decoding mode; returns (logits per step, tokens, weights)."""
    if not memories:
        raise ContractError("decoder needs a non-empty memory matrix")
    if mode == "teacher_forced":
        logits_per_step, weights = decode_teacher_forced(
            memories, targets, params, config, training=training, rng=rng)
        return logits_per_step, None, weights
    if mode == "free_running":
        tokens, weights = decode_greedy(memories, params, config, max_answer_len)
        return None, tokens, weights
    raise ContractError(f"unknown decode mode {mode!r}")


def cut_at_eos(token_rows: np.ndarray) -> list[list[int]]:
    """Per row: the emitted ids before the first EOS (all of them if none)."""
    out = []
    for row in token_rows:
        hits = np.flatnonzero(row == EOS)
        out.append(row[:hits[0]].tolist() if hits.size else row.tolist())
    return out


@dataclass
class ForwardResult:
    loss: Tensor
    n_positions: int
    predictions: list[list[int]] | None = None
    records: list[AttentionRecord] | None = None
    memory_weights: list[Tensor] = field(default_factory=list)


def forward_batch(batch, params: ModelParams, config: ModelConfig, *,
                  training: bool = False, rng=None,
                  want_predictions: bool = False, want_records: bool = False) -> ForwardResult:
    """Teacher-forced loss over a padded batch; optionally free-running
    predictions and per-example attention records.

    Loss is the mean cross entropy over real answer positions (EOS included).
    """
    if training:
        top = max(batch.story.max(initial=0), batch.question.max(initial=0),
                  batch.answer.max(initial=0))
        if top >= config.vocab_size:
            raise DataError(f"token id {top} outside vocabulary of {config.vocab_size}")
    h_que = encode_question(batch.question, batch.question_mask, params, config,
                            training=training, rng=rng)
    h_sen, h_sen_final, _ = encode_document(batch.story, batch.word_mask,
                                            batch.sentence_mask, h_que, params, config,
                                            training=training, rng=rng)
    memories, mem_weights, mem_contexts = memory_module(
        h_que, h_sen, batch.sentence_mask, h_sen_final, params, config,
        training=training, rng=rng)
    logits_per_step, tf_weights = decode_teacher_forced(
        memories, batch.answer, params, config, training=training, rng=rng)

    per_row = None
    for t, logits in enumerate(logits_per_step):
        ce = cross_entropy_rows(logits, batch.answer[:, t])
        term = mul(ce, constant(batch.answer_mask[:, t].astype(ce.dtype)))
        per_row = term if per_row is None else add(per_row, term)
    n_positions = int(batch.answer_mask.sum())
    loss = scale(sum_all(per_row), 1.0 / n_positions)

    predictions = records = None
    if want_predictions or want_records:
        tokens, fr_weights = decode_greedy(memories, params, config)
        predictions = cut_at_eos(tokens)
        if want_records:
            records = _build_records(batch, predictions, mem_weights,
                                     mem_contexts, fr_weights)
    return ForwardResult(loss, n_positions, predictions, records, mem_weights)


def _build_records(batch, predictions, mem_weights, mem_contexts, dec_weights):
    records = []
    for i, ex in enumerate(batch.examples):
        n_sent = len(ex.story)
        mem = np.stack([w.data[i, :n_sent] for w in mem_weights])
        ctx = np.stack([c.data[i] for c in mem_contexts])
        t_i = min(len(predictions[i]) + 1, len(dec_weights))
        dec = np.stack([w.data[i] for w in dec_weights[:t_i]])
        records.append(AttentionRecord(mem, dec, ctx))
    return records


def forward_example(example, params: ModelParams, config: ModelConfig, *,
                    training: bool = False, rng=None):
    """Run one example; returns (loss, predicted token ids, AttentionRecord)."""
    batch = make_batch([example])
    res = forward_batch(batch, params, config, training=training, rng=rng,
                        want_predictions=True, want_records=True)
    return res.loss, res.predictions[0], res.records[0]


def predict_batch(batch, params: ModelParams, config: ModelConfig,
                  want_records: bool = False):
    """Inference only: free-running predictions, no loss.

    Returns (predictions, records) where records is None unless asked for.
    """
    h_que = encode_question(batch.question, batch.question_mask, params, config)
    h_sen, h_sen_final, _ = encode_document(batch.story, batch.word_mask,
                                            batch.sentence_mask, h_que, params, config)
    memories, mem_weights, mem_contexts = memory_module(
        h_que, h_sen, batch.sentence_mask, h_sen_final, params, config)
    tokens, fr_weights = decode_greedy(memories, params, config)
    predictions = cut_at_eos(tokens)
    records = None
    if want_records:
        records = _build_records(batch, predictions, mem_weights,
                                 mem_contexts, fr_weights)
    return predictions, records


# ---------------------------------------------------------------------------
# checkpoints


class CheckpointError(ValueError):
    """Checkpoint file is malformed, truncated, or structurally wrong."""


@dataclass
class Checkpoint:
    params: ModelParams
    config: ModelConfig
    vocab: Vocabulary | None


_MAGIC = b"AMN1"
_VERSION = 1
_CONFIG_FIELDS = ("size", "depth", "memories", "dropout", "vocab_size",
                  "max_sentence_len", "max_answer_len")


def save_checkpoint(params: ModelParams, config: ModelConfig, path,
                    vocab: Vocabulary | None = None) -> None:
    """Binary format: magic, u16 version, length-prefixed config lines,
    then named float32 arrays (rank u8, dims u32 LE, row-major payload)."""
    lines = [f"{name}={getattr(config, name)}" for name in _CONFIG_FIELDS]
    if vocab is not None:
        lines.append("vocab=" + " ".join(vocab.id_to_token[4:]))
    named = params.named_parameters()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<I", len(lines)))
        for line in lines:
            raw = line.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(struct.pack("<I", len(named)))
        for name, t in named:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            arr = np.ascontiguousarray(t.data, dtype="<f4")
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return raw


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != _MAGIC:
            raise CheckpointError("bad magic bytes; not an AMN checkpoint")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (n_lines,) = struct.unpack("<I", _read_exact(fh, 4, "config count"))
        fields: dict[str, str] = {}
        for _ in range(n_lines):
            (ln,) = struct.unpack("<I", _read_exact(fh, 4, "config line length"))
            key, _, value = _read_exact(fh, ln, "config line").decode("utf-8").partition("=")
            fields[key] = value
        try:
            config = ModelConfig(
                size=int(fields["size"]), depth=int(fields["depth"]),
                memories=int(fields["memories"]), dropout=float(fields["dropout"]),
                vocab_size=int(fields["vocab_size"]),
                max_sentence_len=int(fields["max_sentence_len"]),
                max_answer_len=int(fields["max_answer_len"]))
        except KeyError as missing:
            raise CheckpointError(f"checkpoint config lacks {missing}") from None
        vocab = None
        if "vocab" in fields:
            vocab = Vocabulary(fields["vocab"].split())
            if len(vocab) != config.vocab_size:
                raise CheckpointError("stored vocabulary disagrees with vocab_size")
        (n_arrays,) = struct.unpack("<I", _read_exact(fh, 4, "array count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(n_arrays):
            (ln,) = struct.unpack("<I", _read_exact(fh, 4, "array name length"))
            name = _read_exact(fh, ln, "array name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, "array rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "array dims"))
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            payload = _read_exact(fh, 4 * count, f"array {name} payload")
            arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    params = init_params(config, seed=0, dtype=np.float32)
    expected = params.named_parameters()
    missing = [n for n, _ in expected if n not in arrays]
    extra = sorted(set(arrays) - {n for n, _ in expected})
    if missing or extra:
        raise CheckpointError(f"array set mismatch: missing {missing}, extra {extra}")
    for name, t in expected:
        if arrays[name].shape != t.shape:
            raise CheckpointError(
                f"array {name} has shape {arrays[name].shape}, expected {t.shape}")
        t.data = arrays[name]
    return Checkpoint(params, config, vocab)
