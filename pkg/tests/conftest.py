"""Shared fixtures.

The trained desk rig (corpus + reference CNN) is expensive (~6 min), so
it is session-scoped and built lazily; only the acceptance tests and the
end-to-end ordering checks request it.
"""

import dataclasses

import numpy as np
import pytest

from hazeattack import classifier as cl
from hazeattack import corpus as cp

TRAIN_PER_CLASS = 150
TEST_PER_CLASS = 40
TRAIN_SEED = 0
TEST_SEED = 1
EPOCHS = 60
LR = 0.03
LR_DECAY = 0.08
BATCH_SIZE = 16


@dataclasses.dataclass
class DeskRig:
    weights: cl.ReferenceCnnWeights
    clf: cl.ReferenceClassifier
    test_examples: list
    initially_correct: list
    test_accuracy: float
    train_accuracy: float


@pytest.fixture(scope="session")
def desk_rig():
    train = cp.generate_examples(TRAIN_PER_CLASS, seed=TRAIN_SEED)
    test = cp.generate_examples(TEST_PER_CLASS, seed=TEST_SEED)
    report = cl.train_reference(train, seed=TRAIN_SEED, epochs=EPOCHS, lr=LR,
                                batch_size=BATCH_SIZE, lr_decay=LR_DECAY)
    clf = cl.ReferenceClassifier(report.weights)
    xs = np.stack([cl.resize_bilinear(ex.image, 32, 32) for ex in test])
    ys = np.array([ex.label for ex in test])
    preds = cl.forward_batch(report.weights, xs).argmax(axis=1)
    accuracy = float(np.mean(preds == ys))
    correct = [ex for ex, p in zip(test, preds) if p == ex.label]
    return DeskRig(
        weights=report.weights,
        clf=clf,
        test_examples=test,
        initially_correct=correct,
        test_accuracy=accuracy,
        train_accuracy=report.final_train_accuracy,
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
