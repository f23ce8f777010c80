"""Batch runs, success-set correlation, and transfer tables.

Drives the same machinery as the CLI: writes run directories with
results.jsonl + adversarial PNGs, then derives the IoU correlation
matrix and a transfer table from them.
"""

import json
import sys
from pathlib import Path

from hazeattack import classifier, corpus, harness

OUT = Path(__file__).resolve().parent / "out" / "eval"
OUT.mkdir(parents=True, exist_ok=True)

corpus_dir = OUT / "corpus"
if not (corpus_dir / "labels.json").exists():
    corpus.make_corpus(corpus_dir, n_per_class=20, seed=5, size=64)

weights_path = OUT / "ref.bin"
report = classifier.train_reference(
    corpus.load_examples(corpus.load_corpus(corpus_dir)),
    seed=0, epochs=50, lr=0.03, batch_size=16, lr_decay=0.08)
classifier.save_weights(report.weights, weights_path)
print(f"reference model trained (train accuracy {report.final_train_accuracy:.2f})")

run_dirs = []
for attack_name in ("fgsm", "mifgsm", "iadvhaze"):
    cfg = harness.RunConfig(
        corpus_dir=str(corpus_dir), attack=attack_name,
        classifier=str(weights_path), output_dir=str(OUT / f"run-{attack_name}"),
        max_images=30)
    run_dir = harness.run_attack_batch(cfg)
    summary = json.loads((run_dir / "summary.json").read_text())
    print(f"{attack_name:>9}: overall success {summary['success_rate_overall']:.2f}, "
          f"mean PSNR {summary['mean_psnr']:.1f} dB")
    run_dirs.append(run_dir)

labels, matrix = harness.correlation_report(
    run_dirs, OUT / "correlation.csv", OUT / "correlation.png")
print("\nIoU correlation between attack success sets:")
for label, row in zip(labels, matrix):
    print(f"  {label:>9}: " + "  ".join(f"{v:.2f}" for v in row))

specs = [classifier.AdapterSpec(
    model_id="loopback",
    command=(sys.executable, "-m", "hazeattack", "logits",
             "--weights", str(weights_path)),
    n_classes=10)]
table = harness.transfer_report(run_dirs, specs, OUT / "transfer.csv",
                                OUT / "transfer.json")
print("\ntransfer table (loopback destination):")
print(table.to_csv())
print(f"reports written under {OUT}")
