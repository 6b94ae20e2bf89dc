# Train the location-tracking task end to end and look inside.
#
# Generates bAbi-format data, trains with the reference recipe (size 32,
# depth 1, one memory), then inspects: error rates, an attention heatmap
# for one story, and the symbolic oracle as a cross-check.
#
# Full run (a few minutes): python demos/04_train_task1.py
# Quick look  (~10 s):      python demos/04_train_task1.py --quick

import sys
import tempfile
from pathlib import Path

import numpy as np

from amnet.analysis import export_attention, oracle_task1
from amnet.data import load_task_data, make_batch
from amnet.model import ModelConfig, predict_batch
from amnet.synthetic import write_task_files
from amnet.training import TrainConfig, evaluate, train

quick = "--quick" in sys.argv
workdir = Path(tempfile.mkdtemp(prefix="amn_demo_"))
write_task_files(workdir, 1, n_train=10_000, n_test=1_000, seed=0)
data = load_task_data(workdir, 1)
print(f"data: {len(data.train)} train / {len(data.val)} val / {len(data.test)} test, "
      f"vocabulary {len(data.vocab)} tokens")

config = ModelConfig(size=32, depth=1, memories=1, dropout=0.0,
                     vocab_size=len(data.vocab),
                     max_sentence_len=data.max_sentence_len,
                     max_answer_len=data.max_answer_len)
cfg = TrainConfig(lr=0.01, max_grad_norm=5.0, batch_size=50, eval_every=1_000,
                  max_batches=60 if quick else 3_000,
                  target_val_error=0.0, seed=0)
result = train(config, cfg, data)
print(f"trained {result.batches} batches; best validation error "
      f"{result.best_val_error:.4f} at batch {result.best_batch}")
print(f"test error: {evaluate(result.params, config, data.test):.4f} "
      f"(solved means < 0.05)")

ex = data.val[0]
predictions, records = predict_batch(make_batch([ex]), result.params, config,
                                     want_records=True)
sentences = [" ".join(data.vocab.decode(s)) for s in ex.story]
print()
print("question:", " ".join(data.vocab.decode(ex.question)))
print("gold:", " ".join(data.vocab.decode(ex.answer)),
      "| predicted:", " ".join(data.vocab.decode(predictions[0])))
print("oracle agrees:",
      oracle_task1([data.vocab.decode(s) for s in ex.story],
                   data.vocab.decode(ex.question)) == data.vocab.decode(ex.answer)[0])
print()
print("memory attention over the story (one row per memory step):")
for i, row in enumerate(records[0].memory_attention, 1):
    peak = int(row.argmax())
    print(f"  step {i}: " + " ".join(f"{w:.2f}" for w in row) +
          f"   <- [{peak + 1}] {sentences[peak]}")

heat = workdir / "heatmap.tsv"
export_attention(records[0], sentences, heat)
print(f"\nfull heatmap written to {heat}")
