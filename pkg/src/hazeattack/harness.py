"""Batch execution, persistence, and report/figure emission.

A run directory is laid out as:

    run_config.json   echo of the resolved configuration
    results.jsonl     one record per successfully attacked image
    summary.json      success rates (both modes), metric means, failures
    adv/<image>.png   the adversarial renderings

Determinism contract: (corpus, config, seed, weights) fully determine
every output byte except wall-time fields; records are keyed by corpus
order, so worker scheduling cannot reorder them.  ``wall_ms`` is the
only volatile record field (see VOLATILE_RECORD_FIELDS).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path

import numpy as np
from PIL import Image as PilImage
from PIL import ImageDraw

from . import metrics
from .attack import (
    AttackConfig,
    AttackResult,
    attack_hadvhaze,
    attack_iadvhaze,
    baseline_fgsm,
    baseline_ifgsm,
    baseline_mifgsm,
)
from .classifier import AdapterSpec, ExternalAdapter, ReferenceClassifier, load_weights
from .corpus import CorpusItem, load_corpus
from .hazemodel import HazeScalars, haze_homogeneous
from .imagecore import load_depth, load_image, save_image, synthetic_depth

RECORD_VERSION = 1
VOLATILE_RECORD_FIELDS = ("wall_ms",)

ATTACK_NAMES = ("hadvhaze", "iadvhaze", "fgsm", "ifgsm", "mifgsm")
_HAZE_PARAM_KEYS = {f.name for f in dataclass_fields(AttackConfig)}
_NOISE_PARAM_KEYS = {"eps", "n", "mu"}


@dataclass
class RunConfig:
    """Configuration of one batch attack run (JSON-loadable)."""

    corpus_dir: str
    attack: str
    classifier: str
    output_dir: str
    depth_dir: str | None = None
    synthetic_depth: str = "v-ramp"
    attack_params: dict = field(default_factory=dict)
    model_id: str | None = None
    seed: int = 0
    parallelism: int = 1
    max_images: int | None = None

    def __post_init__(self):
        if self.attack not in ATTACK_NAMES:
            raise ValueError(f"unknown attack {self.attack!r}, expected one of {ATTACK_NAMES}")
        allowed = _HAZE_PARAM_KEYS if self.attack in ("hadvhaze", "iadvhaze") else _NOISE_PARAM_KEYS
        unknown = set(self.attack_params) - allowed
        if unknown:
            raise ValueError(f"unknown attack_params for {self.attack}: {sorted(unknown)}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.model_id is None:
            self.model_id = Path(self.classifier).stem

    @classmethod
    def from_json(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError("run config must be a JSON object")
        known = {f.name for f in dataclass_fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if overrides:
            data.update(overrides)
        return cls(**data)


def _resolve_depth(item: CorpusItem, shape, cfg: RunConfig):
    """Depth file if present, else the configured synthetic fallback."""
    if cfg.depth_dir is not None:
        candidate = Path(cfg.depth_dir) / (Path(item.image_id).stem + ".pfm")
        if candidate.is_file():
            depth = load_depth(candidate)
            if depth.shape != shape:
                raise ValueError(
                    f"depth {candidate} has shape {depth.shape}, image is {shape}")
            if depth.min() < 0.0 or depth.max() > 1.0:
                raise ValueError(
                    f"depth {candidate} is not normalized to [0, 1]; "
                    "export normalized depth maps")
            return depth, "file"
    return synthetic_depth(cfg.synthetic_depth, shape[0], shape[1]), \
        f"synthetic:{cfg.synthetic_depth}"


def _run_one_attack(img, depth, clf, label: int, cfg: RunConfig) -> AttackResult:
    params = dict(cfg.attack_params)
    if cfg.attack == "hadvhaze":
        return attack_hadvhaze(img, depth, clf, label, AttackConfig(**params))
    if cfg.attack == "iadvhaze":
        return attack_iadvhaze(img, depth, clf, label, AttackConfig(**params))
    if cfg.attack == "fgsm":
        params.pop("n", None)
        params.pop("mu", None)
        return baseline_fgsm(img, clf, label, **params)
    if cfg.attack == "ifgsm":
        params.pop("mu", None)
        return baseline_ifgsm(img, clf, label, **params)
    return baseline_mifgsm(img, clf, label, **params)


def run_attack_batch(cfg: RunConfig) -> Path:
    """Attack every corpus image; persist records, summary, and PNGs."""
    if cfg.depth_dir is not None and not Path(cfg.depth_dir).is_dir():
        raise FileNotFoundError(f"depth directory does not exist: {cfg.depth_dir}")
    items = load_corpus(cfg.corpus_dir)
    if cfg.max_images is not None:
        items = items[:cfg.max_images]
    if not items:
        raise ValueError(f"corpus {cfg.corpus_dir} contains no images")
    clf = ReferenceClassifier(load_weights(cfg.classifier), model_id=cfg.model_id)

    out_dir = Path(cfg.output_dir)
    adv_dir = out_dir / "adv"
    adv_dir.mkdir(parents=True, exist_ok=True)

    def work(item: CorpusItem):
        started = time.perf_counter()
        img = load_image(item.path)
        depth, depth_source = _resolve_depth(item, img.shape[:2], cfg)
        result = _run_one_attack(img, depth, clf, item.label, cfg)
        adv_path = adv_dir / item.image_id
        save_image(result.adversarial, adv_path)
        wall_ms = (time.perf_counter() - started) * 1000.0
        return {
            "v": RECORD_VERSION,
            "image_id": item.image_id,
            "true_label": item.label,
            "pred_clean": result.pred_clean,
            "pred_adv": result.pred_adv,
            "success": result.success,
            "loss_start": result.loss_trace[0],
            "loss_final": result.loss_trace[-1],
            "iterations_run": result.iterations_run,
            "linf": metrics.linf(result.adversarial, img),
            "l2": metrics.l2(result.adversarial, img),
            "psnr": metrics.psnr(result.adversarial, img),
            "ssim": metrics.ssim(result.adversarial, img),
            "depth_source": depth_source,
            "adv_png": str(Path("adv") / item.image_id),
            "wall_ms": wall_ms,
        }

    def safe(item):
        try:
            return work(item)
        except Exception as exc:
            return exc

    if cfg.parallelism == 1:
        outcomes = [safe(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            outcomes = list(pool.map(safe, items))

    failures: list[dict] = []
    ordered: list[dict] = []
    for item, outcome in zip(items, outcomes):
        if isinstance(outcome, Exception):
            failures.append({"image_id": item.image_id, "error": str(outcome)})
        else:
            ordered.append(outcome)

    with open(out_dir / "results.jsonl", "w") as f:
        for record in ordered:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    summary = _summarize(cfg, clf.id, ordered, failures)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    (out_dir / "run_config.json").write_text(json.dumps({
        "corpus_dir": str(cfg.corpus_dir),
        "attack": cfg.attack,
        "classifier": str(cfg.classifier),
        "output_dir": str(cfg.output_dir),
        "depth_dir": None if cfg.depth_dir is None else str(cfg.depth_dir),
        "synthetic_depth": cfg.synthetic_depth,
        "attack_params": cfg.attack_params,
        "model_id": cfg.model_id,
        "seed": cfg.seed,
        "parallelism": cfg.parallelism,
        "max_images": cfg.max_images,
    }, indent=2, sort_keys=True))
    return out_dir


def _summarize(cfg: RunConfig, model_id: str, records: list[dict],
               failures: list[dict]) -> dict:
    n_correct = sum(1 for r in records if r["pred_clean"] == r["true_label"])
    n_success = sum(1 for r in records if r["success"])
    n_success_correct = sum(
        1 for r in records if r["success"] and r["pred_clean"] == r["true_label"])
    mean = lambda key: (float(np.mean([r[key] for r in records])) if records else None)
    return {
        "v": RECORD_VERSION,
        "attack": cfg.attack,
        "model_id": model_id,
        "corpus_dir": str(cfg.corpus_dir),
        "n_images": len(records),
        "n_failures": len(failures),
        "n_initially_correct": n_correct,
        "success_rate_overall": n_success / len(records) if records else None,
        "success_rate_initially_correct": (
            n_success_correct / n_correct if n_correct else None),
        "mean_linf": mean("linf"),
        "mean_l2": mean("l2"),
        "mean_psnr": mean("psnr"),
        "mean_ssim": mean("ssim"),
        "failures": failures,
    }


def strip_volatile(jsonl_text: str) -> str:
    """Re-serialize JSONL records without the wall-time whitelist fields."""
    lines = []
    for line in jsonl_text.splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        for key in VOLATILE_RECORD_FIELDS:
            record.pop(key, None)
        lines.append(json.dumps(record, sort_keys=True))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Figure / table emission
# ---------------------------------------------------------------------------

def emit_haze_grid(image_path: str | Path, depth_path: str | Path | None,
                   a_values: list[float], b_values: list[float],
                   out_path: str | Path,
                   synthetic_kind: str = "v-ramp") -> Path:
    """Render a |a_values| x |b_values| contact sheet of homogeneous haze."""
    if not a_values or not b_values:
        raise ValueError("need at least one value for each parameter")
    img = load_image(image_path)
    if depth_path is not None:
        depth = load_depth(depth_path)
        if depth.shape != img.shape[:2]:
            raise ValueError("depth dimensions do not match the image")
        if depth.min() < 0.0 or depth.max() > 1.0:
            raise ValueError("depth must be normalized to [0, 1]")
    else:
        depth = synthetic_depth(synthetic_kind, img.shape[0], img.shape[1])

    h, w = img.shape[:2]
    caption_h = 14
    pad = 2
    cell_w, cell_h = w + pad, h + caption_h + pad
    sheet = PilImage.new(
        "RGB", (cell_w * len(b_values) + pad, cell_h * len(a_values) + pad),
        color=(245, 245, 245))
    draw = ImageDraw.Draw(sheet)
    for row, a in enumerate(a_values):
        for col, b in enumerate(b_values):
            hazy = haze_homogeneous(img, depth, HazeScalars(a, b))
            tile = PilImage.fromarray(
                np.floor(hazy * 255.0 + 0.5).astype(np.uint8), mode="RGB")
            x0 = pad + col * cell_w
            y0 = pad + row * cell_h
            sheet.paste(tile, (x0, y0))
            draw.text((x0 + 1, y0 + h + 1), f"A={a:g} b={b:g}", fill=(20, 20, 20))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    sheet.save(out_path, format="PNG")
    return out_path


def _load_run(run_dir: str | Path) -> tuple[dict, list[dict]]:
    run_dir = Path(run_dir)
    summary = json.loads((run_dir / "summary.json").read_text())
    records = [json.loads(line)
               for line in (run_dir / "results.jsonl").read_text().splitlines()
               if line.strip()]
    return summary, records


def _success_set_from_run(run_dir: str | Path) -> metrics.SuccessSet:
    summary, records = _load_run(run_dir)
    return metrics.SuccessSet(
        attack_id=summary["attack"],
        model_id=summary["model_id"],
        indices=frozenset(r["image_id"] for r in records if r["success"]),
        corpus=frozenset(r["image_id"] for r in records),
    )


def correlation_report(run_dirs: list, out_csv: str | Path,
                       out_png: str | Path | None = None):
    """IoU correlation of the success sets of several runs."""
    sets = [_success_set_from_run(d) for d in run_dirs]
    labels = []
    for s in sets:
        label = s.attack_id if sum(x.attack_id == s.attack_id for x in sets) == 1 \
            else f"{s.attack_id}@{s.model_id}"
        labels.append(label)
    matrix = metrics.iou_correlation(sets)
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    out_csv.write_text(metrics.correlation_to_csv(labels, matrix))
    if out_png is not None:
        _render_heatmap(labels, matrix, out_png)
    return labels, matrix


def _render_heatmap(labels: list[str], matrix: np.ndarray,
                    out_png: str | Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * len(labels),) * 2)
    im = ax.imshow(matrix, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, f"{matrix[i, j]:.2f}", ha="center", va="center",
                    color="white" if matrix[i, j] < 0.6 else "black", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def load_adapter_specs(path: str | Path) -> list[AdapterSpec]:
    """Read adapter specs from JSON: [{id, command, n_classes, timeout_s?}]."""
    entries = json.loads(Path(path).read_text())
    specs = []
    for entry in entries:
        specs.append(AdapterSpec(
            model_id=entry["id"],
            command=tuple(entry["command"]),
            n_classes=int(entry["n_classes"]),
            timeout_s=float(entry.get("timeout_s", 120.0)),
        ))
    return specs


def transfer_report(run_dirs: list, adapter_specs: list[AdapterSpec],
                    out_csv: str | Path, out_json: str | Path) -> metrics.TransferTable:
    """Evaluate persisted adversarial images under external models."""
    adv_sets = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        summary, records = _load_run(run_dir)
        items = tuple((run_dir / r["adv_png"], r["true_label"]) for r in records)
        adv_sets.append(metrics.AdversarialSet(
            attack_id=summary["attack"],
            source_model_id=summary["model_id"],
            items=items,
        ))
    models = [ExternalAdapter(spec) for spec in adapter_specs]
    table = metrics.transfer_eval(adv_sets, models)
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    out_csv.write_text(table.to_csv())
    Path(out_json).write_text(table.to_json())
    return table


def evaluate_corpus(corpus_dir: str | Path, clf,
                    max_images: int | None = None) -> dict:
    """Clean accuracy of a classifier over a corpus directory."""
    items = load_corpus(corpus_dir)
    if max_images is not None:
        items = items[:max_images]
    if not items:
        raise ValueError("corpus contains no images")
    per_image = []
    for item in items:
        pred = int(clf.logits_for_file(item.path).argmax())
        per_image.append({"image_id": item.image_id, "label": item.label,
                          "pred": pred, "correct": pred == item.label})
    accuracy = float(np.mean([p["correct"] for p in per_image]))
    return {"model_id": clf.id, "n_images": len(items),
            "accuracy": accuracy, "per_image": per_image}
