"""Train a small reference CNN and attack it with haze, end to end.

Uses a reduced corpus and a short schedule so the whole script runs in
about a minute; the full evaluation recipe lives in the README and the
acceptance suite.
"""

from pathlib import Path

import numpy as np

from hazeattack import attack, classifier, corpus, imagecore

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

print("generating corpus and training (reduced sizes for the demo)...")
train = corpus.generate_examples(80, seed=0)
test = corpus.generate_examples(8, seed=1)
report = classifier.train_reference(train, seed=0, epochs=45, lr=0.03,
                                    batch_size=16, lr_decay=0.08)
clf = classifier.ReferenceClassifier(report.weights)
accuracy = np.mean([clf.predict(ex.image) == ex.label for ex in test])
print(f"train accuracy {report.final_train_accuracy:.3f}, "
      f"test accuracy {accuracy:.3f} on {len(test)} images")

depth = imagecore.synthetic_depth("v-ramp", 64, 64)
victims = [ex for ex in test if clf.predict(ex.image) == ex.label][:30]
cfg = attack.AttackConfig()  # n=10, mu=1.0, A0=0.9, beta0=0.1, alpha=0.01

results = {}
for name, run in (
    ("field haze", lambda ex: attack.attack_iadvhaze(ex.image, depth, clf, ex.label, cfg)),
    ("scalar haze", lambda ex: attack.attack_hadvhaze(ex.image, depth, clf, ex.label, cfg)),
    ("momentum noise", lambda ex: attack.baseline_mifgsm(ex.image, clf, ex.label)),
):
    outcome = [run(ex) for ex in victims]
    rate = np.mean([r.success for r in outcome])
    results[name] = (rate, outcome)
    print(f"{name:>15}: success {rate:.2f} over {len(victims)} initially-correct images")

wins = [r for r in results["field haze"][1] if r.success]
one = wins[0] if wins else results["field haze"][1][0]
print(f"\nexample attack: true={corpus.CLASS_NAMES[one.true_label]} "
      f"clean-pred={corpus.CLASS_NAMES[one.pred_clean]} "
      f"adv-pred={corpus.CLASS_NAMES[one.pred_adv]}")
print("loss trace:", " -> ".join(f"{v:.3f}" for v in one.loss_trace))
imagecore.save_image(victims[0].image, OUT / "attack_clean.png")
imagecore.save_image(one.adversarial, OUT / "attack_hazy.png")
print(f"clean/adversarial pair written to {OUT}")
