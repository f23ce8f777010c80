"""Quantitative evaluation: success rates, IoU overlap, transfer tables,
and perturbation / image-quality measures.

Image quality is reported as L-infinity / L2 / PSNR / SSIM of the
adversarial image against the clean one.  (A learned no-reference
quality score would need a pretrained natural-scene-statistics model,
which this toolkit deliberately does not ship.)
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def success_rate(results, mode: str = "overall") -> float:
    """Fraction of attacked images that end up misclassified.

    ``overall`` divides by the total number of images (initially
    misclassified images therefore count as successes).  ``initially-
    correct`` divides by the number of images the model classified
    correctly before the attack, isolating the attack's own effect.
    """
    if not results:
        raise ValueError("empty result list")
    if mode == "overall":
        return float(np.mean([r.pred_adv != r.true_label for r in results]))
    if mode == "initially-correct":
        correct = [r for r in results if r.pred_clean == r.true_label]
        if not correct:
            raise ValueError("no initially-correct images to evaluate")
        return float(np.mean([r.pred_adv != r.true_label for r in correct]))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SuccessSet:
    """The set of corpus images an attack fooled on one model."""

    attack_id: str
    model_id: str
    indices: frozenset
    corpus: frozenset

    def __post_init__(self):
        if not self.indices <= self.corpus:
            raise ValueError("success indices must be a subset of the corpus")


def iou_correlation(sets: list[SuccessSet]) -> np.ndarray:
    """Pairwise intersection-over-union of success sets.

    M[i][j] = |S_i & S_j| / |S_i | S_j|.  Two empty sets get IoU 1 by the
    0/0 convention (they agree everywhere).  All sets must cover the same
    corpus.
    """
    if not sets:
        raise ValueError("need at least one success set")
    corpus = sets[0].corpus
    for s in sets[1:]:
        if s.corpus != corpus:
            raise ValueError("success sets cover different corpora")
    n = len(sets)
    matrix = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            union = sets[i].indices | sets[j].indices
            if not union:
                matrix[i, j] = 1.0
            else:
                matrix[i, j] = len(sets[i].indices & sets[j].indices) / len(union)
    return matrix


# ---------------------------------------------------------------------------
# Perturbation / quality measures
# ---------------------------------------------------------------------------

PSNR_CAP_DB = 100.0
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2
_SSIM_WINDOW = 8


def linf(a: np.ndarray, b: np.ndarray) -> float:
    """Largest absolute component difference."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


def l2(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean norm of the component-wise difference."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with MAX = 1.0, capped at 100."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(-10.0 * np.log10(mse), PSNR_CAP_DB))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity with uniform 8x8 windows at stride 1.

    Window statistics use population moments; the per-window scores are
    averaged over all window positions and the three channels.
    """
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < _SSIM_WINDOW or a.shape[1] < _SSIM_WINDOW:
        raise ValueError(f"images must be at least {_SSIM_WINDOW}x{_SSIM_WINDOW} for SSIM")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    scores = []
    for c in range(a.shape[2]):
        wa = sliding_window_view(a[:, :, c], (_SSIM_WINDOW, _SSIM_WINDOW))
        wb = sliding_window_view(b[:, :, c], (_SSIM_WINDOW, _SSIM_WINDOW))
        mu_a = wa.mean(axis=(-1, -2))
        mu_b = wb.mean(axis=(-1, -2))
        var_a = (wa * wa).mean(axis=(-1, -2)) - mu_a * mu_a
        var_b = (wb * wb).mean(axis=(-1, -2)) - mu_b * mu_b
        cov = (wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
        den = (mu_a**2 + mu_b**2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Transferability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdversarialSet:
    """Adversarial images produced by one attack against one source model."""

    attack_id: str
    source_model_id: str
    items: tuple  # of (png_path, true_label)


@dataclass
class TransferTable:
    """Success rates of transferring each attack to each destination model.

    ``cells[(attack, source)][dest]`` is a success rate in [0, 1], or
    ``None`` for the excluded source==destination diagonal and for cells
    whose destination model failed (failures are listed in ``errors``).
    """

    destinations: list[str]
    rows: list[tuple[str, str]] = field(default_factory=list)
    cells: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["attack", "source"] + self.destinations)
        for key in self.rows:
            attack_id, source_id = key
            row = [attack_id, source_id]
            for dest in self.destinations:
                value = self.cells[key].get(dest)
                row.append("" if value is None else f"{value:.6f}")
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "destinations": self.destinations,
            "rows": [
                {
                    "attack": attack_id,
                    "source": source_id,
                    "cells": self.cells[(attack_id, source_id)],
                    "errors": self.errors.get((attack_id, source_id), {}),
                }
                for attack_id, source_id in self.rows
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def transfer_eval(adv_sets: list[AdversarialSet], models: list) -> TransferTable:
    """Classify every adversarial image with every non-source model.

    ``models`` are forward-only classifiers exposing ``.id`` and
    ``.logits_for_file(path)``.  A destination model failing on any image
    of a cell marks that cell absent (None) with the error recorded; it
    is never silently scored as zero.
    """
    table = TransferTable(destinations=[m.id for m in models])
    for adv_set in adv_sets:
        key = (adv_set.attack_id, adv_set.source_model_id)
        table.rows.append(key)
        table.cells[key] = {}
        for model in models:
            if model.id == adv_set.source_model_id:
                table.cells[key][model.id] = None  # white-box cell, excluded
                continue
            misclassified = 0
            try:
                for png_path, true_label in adv_set.items:
                    pred = int(model.logits_for_file(png_path).argmax())
                    if pred != int(true_label):
                        misclassified += 1
            except Exception as exc:  # adapter/process failures -> absent cell
                table.cells[key][model.id] = None
                table.errors.setdefault(key, {})[model.id] = str(exc)
                continue
            table.cells[key][model.id] = misclassified / len(adv_set.items)
    return table


def correlation_to_csv(labels: list[str], matrix: np.ndarray) -> str:
    """CSV rendering of an IoU correlation matrix with header labels."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([""] + labels)
    for label, row in zip(labels, matrix):
        writer.writerow([label] + [f"{v:.6f}" for v in row])
    return buf.getvalue()
