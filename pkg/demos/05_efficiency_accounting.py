# The efficiency argument, made countable.
#
# The memory module attends over sentence states instead of re-reading
# the input per memory step. Count forward multiply-accumulates two ways
# (closed form, and counters instrumented into the tensor ops) and
# compare against a re-reading baseline that re-encodes the words for
# every memory it produces.

from amnet.analysis import count_ops, instrument_ops
from amnet.model import ModelConfig


def show(config, shape, label):
    formula = count_ops(config, shape)
    measured = instrument_ops(config, shape)
    print(f"-- {label}: |S|={shape[0]} sentences, {shape[1]} words each --")
    print(f"{'component':<24}{'formula':>12}{'instrumented':>14}")
    for field in ("question_encoder", "word_level_encoder", "sentence_level_encoder",
                  "memory_module", "decoder"):
        print(f"{field:<24}{getattr(formula, field):>12}{getattr(measured, field):>14}")
    print(f"{'re-reading baseline':<24}{formula.baseline_memory:>12}"
          f"{measured.baseline_memory:>14}")
    print(f"memory/baseline ratio: {formula.ratio:.4f}")
    print()


config = ModelConfig(size=32, depth=1, memories=3, vocab_size=40,
                     max_sentence_len=12, max_answer_len=1)

show(config, (20, 12, 5, 1), "20 sentences of 12 words")

# the attend-only module never touches words: double them, nothing moves
a = count_ops(config, (20, 12, 5, 1))
b = count_ops(config, (20, 24, 5, 1))
print(f"memory-module MACs at 12 words/sentence: {a.memory_module}")
print(f"memory-module MACs at 24 words/sentence: {b.memory_module}  (identical)")
print(f"baseline MACs grow instead: {a.baseline_memory} -> {b.baseline_memory}")
print()

print("ratio vs story length (size 32, one memory step):")
one = ModelConfig(size=32, depth=1, memories=1, vocab_size=40,
                  max_sentence_len=12, max_answer_len=1)
for s in (2, 5, 10, 20, 50, 100):
    r = count_ops(one, (s, 12, 5, 1))
    print(f"  |S|={s:>3}: memory {r.memory_module:>9} vs baseline "
          f"{r.baseline_memory:>10}  ratio {r.ratio:.4f}")
