"""Evaluation: accuracies, confusion matrices, lifts, and report files.

Ties at argmax go to the lowest class index, so every reported number is
bit-reproducible. Reports carry two lifts whenever the label space is a
subset: one against the subset's own random baseline and one against the
full 36-class baseline, labeled, because the two denominators answer
different questions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from profilebench.errors import EmptyTestSet, IoFailure, SpaceMismatch
from profilebench.features import SequenceSample
from profilebench.hashing import stable_json_dumps
from profilebench.models.checkpoint import Checkpoint
from profilebench.models.training import forward_batch, neutral_correction
from profilebench.taxonomy import (
    ALIGNMENTS,
    LabelSpace,
    LabelSpaceKind,
    LawAxis,
    MoralAxis,
    Profile,
    map_label,
)

METRICS_VERSION = 1

ALIGN_SPACE = LabelSpace(LabelSpaceKind.ALIGNMENT9)
MOTIV_SPACE = LabelSpace(LabelSpaceKind.MOTIVATION4)

# alignment ranks with either axis at Neutral; the columns the bias metric watches
NEUTRAL_ALIGNMENT_RANKS = tuple(
    a.rank
    for a in ALIGNMENTS
    if a.law_axis is LawAxis.NEUTRAL or a.moral_axis is MoralAxis.NEUTRAL
)


def random_baseline(space: LabelSpace) -> float:
    return 1.0 / space.cardinality


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: np.ndarray  # (K, K) int64, rows = true

    @classmethod
    def from_predictions(cls, y_true: np.ndarray, y_pred: np.ndarray, labels: list[str]) -> "ConfusionMatrix":
        k = len(labels)
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (y_true, y_pred), 1)
        return cls(labels=labels, counts=counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def per_class(self) -> list[dict]:
        out = []
        col = self.counts.sum(axis=0)
        row = self.counts.sum(axis=1)
        diag = np.diag(self.counts)
        for i, label in enumerate(self.labels):
            out.append(
                {
                    "label": label,
                    "support": int(row[i]),
                    "precision": float(diag[i] / col[i]) if col[i] else 0.0,
                    "recall": float(diag[i] / row[i]) if row[i] else 0.0,
                }
            )
        return out

    def column_mass(self, columns: Sequence[int]) -> float:
        return float(self.counts[:, list(columns)].sum()) / self.total if self.total else 0.0

    def row_mass(self, rows: Sequence[int]) -> float:
        return float(self.counts[list(rows), :].sum()) / self.total if self.total else 0.0


MODEL_KINDS = ("baseline", "lstm_base", "lstm_multipool", "lstm_attention")
SUBSETS = ("all", "neutral_only", "non_neutral_only")
LAYOUTS = ("176", "530", "agg")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    model: str
    layout: str
    space_kind: LabelSpaceKind
    subset: str = "all"
    correct_neutral: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise SpaceMismatch(f"unknown model kind {self.model!r}")
        if self.subset not in SUBSETS:
            raise SpaceMismatch(f"unknown subset {self.subset!r}")
        if self.layout not in LAYOUTS:
            raise SpaceMismatch(f"unknown layout {self.layout!r}")
        needs = {
            LabelSpaceKind.NON_NEUTRAL_PROFILE16: "non_neutral_only",
            LabelSpaceKind.NEUTRAL_PROFILE20: "neutral_only",
        }.get(self.space_kind)
        if needs and self.subset != needs:
            raise SpaceMismatch(
                f"{self.space_kind.value} requires subset {needs}, got {self.subset}"
            )

    @property
    def space(self) -> LabelSpace:
        return LabelSpace(self.space_kind)


@dataclass
class Report:
    name: str
    dims: str
    space_tag: str
    n_samples: int
    n_games: int
    accuracies: dict[str, float]
    confusion_main: ConfusionMatrix
    confusion_align: ConfusionMatrix | None
    confusion_motiv: ConfusionMatrix | None
    random_baseline_subset: float
    random_baseline_full: float
    lift_subset: float
    lift_full: float
    neutral_column_mass: float | None
    neutral_prior: float | None
    config_digest: str = ""
    correction: dict | None = None
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        def cm(c: ConfusionMatrix | None):
            if c is None:
                return None
            return {"labels": c.labels, "counts": c.counts.tolist(), "per_class": c.per_class()}

        return {
            "metrics_version": METRICS_VERSION,
            "name": self.name,
            "dims": self.dims,
            "label_space": self.space_tag,
            "n_samples": self.n_samples,
            "n_games": self.n_games,
            "accuracies": self.accuracies,
            "random_baseline": {
                "subset_space": self.random_baseline_subset,
                "full_space": self.random_baseline_full,
            },
            "lift": {"vs_subset_baseline": self.lift_subset, "vs_full36_baseline": self.lift_full},
            "neutral_column_mass": self.neutral_column_mass,
            "neutral_prior": self.neutral_prior,
            "confusion": {
                "main": cm(self.confusion_main),
                "alignment": cm(self.confusion_align),
                "motivation": cm(self.confusion_motiv),
            },
            "correction": self.correction,
            "config_digest": self.config_digest,
            "failed": self.failed,
            "error": self.error,
        }


def failed_report(name: str, dims: str, space_tag: str, error: str) -> Report:
    empty = ConfusionMatrix(labels=[], counts=np.zeros((0, 0), dtype=np.int64))
    return Report(
        name=name,
        dims=dims,
        space_tag=space_tag,
        n_samples=0,
        n_games=0,
        accuracies={},
        confusion_main=empty,
        confusion_align=None,
        confusion_motiv=None,
        random_baseline_subset=0.0,
        random_baseline_full=0.0,
        lift_subset=0.0,
        lift_full=0.0,
        neutral_column_mass=None,
        neutral_prior=None,
        failed=True,
        error=error,
    )


def predict_logits(
    ckpt: Checkpoint, samples: Sequence[SequenceSample], batch_size: int = 256
) -> dict[str, np.ndarray]:
    """Per-head logits for every sample, in input order."""
    by_t: dict[int, list[int]] = {}
    for idx, s in enumerate(samples):
        by_t.setdefault(s.matrix.shape[0], []).append(idx)
    dtype = ckpt.params["fwd_W"].dtype
    outs: dict[str, list] = {"profile": [None] * len(samples), "align": [None] * len(samples), "motiv": [None] * len(samples)}
    for t in sorted(by_t):
        idxs = by_t[t]
        for s in range(0, len(idxs), batch_size):
            chunk = idxs[s : s + batch_size]
            X = np.stack([np.asarray(samples[i].matrix, dtype=dtype) for i in chunk])
            logits, _ = forward_batch(X, ckpt)
            for head in outs:
                for j, i in enumerate(chunk):
                    outs[head][i] = logits[head][j]
    return {head: np.stack(rows) for head, rows in outs.items()}


def _marginal_predictions(main_pred: np.ndarray, space: LabelSpace) -> tuple[np.ndarray, np.ndarray]:
    """Alignment/motivation implied by the main head's profile prediction."""
    from profilebench.taxonomy import admissible_profiles

    profiles = admissible_profiles(space)
    align_of = np.array([p.alignment.rank for p in profiles])
    motiv_of = np.array([p.motivation.value for p in profiles])
    return align_of[main_pred], motiv_of[main_pred]


def evaluate(
    ckpt: Checkpoint,
    samples: Sequence[SequenceSample],
    spec: ExperimentSpec,
    correction: dict | None = None,
    name: str | None = None,
    dims: str | None = None,
) -> Report:
    """Evaluate a checkpoint; predictions are per-head argmax (lowest index wins ties).

    `correction` is {"eta", "predicted", "prior"} with frequencies over the
    9 alignments. It adjusts the alignment head, and the main head too when
    the main space is alignment9.
    """
    spec.validate()
    if not samples:
        raise EmptyTestSet(f"no samples to evaluate for {spec.name}")
    space = spec.space
    if ckpt.label_space_tag != space.tag:
        raise SpaceMismatch(
            f"checkpoint space {ckpt.label_space_tag!r} != experiment space {space.tag!r}"
        )
    for s in samples:
        if not space.admits(s.profile):
            raise SpaceMismatch(f"sample profile {s.profile.code} outside {space.tag}")

    logits = predict_logits(ckpt, samples)
    main_logits = logits["profile"]
    align_logits = logits["align"]

    y_main = np.array([map_label(s.profile, space) for s in samples])
    y_align = np.array([map_label(s.profile, ALIGN_SPACE) for s in samples])
    y_motiv = np.array([map_label(s.profile, MOTIV_SPACE) for s in samples])

    correction_info = None
    if spec.correct_neutral:
        if correction is None:
            raise SpaceMismatch("neutral correction requested without calibration frequencies")
        eta = float(correction.get("eta", 1.0))
        predicted = np.asarray(correction["predicted"], dtype=float)
        prior = np.asarray(correction["prior"], dtype=float)
        main_is_align = space.kind is LabelSpaceKind.ALIGNMENT9
        # keep the raw view so the correction's effect is measurable
        raw_pred = (main_logits if main_is_align else align_logits).argmax(axis=1)
        raw_y = y_main if main_is_align else y_align
        align_logits = neutral_correction(align_logits, predicted, prior, eta)
        if main_is_align:
            main_logits = neutral_correction(main_logits, predicted, prior, eta)
        n = len(samples)
        correction_info = {
            "eta": eta,
            "predicted_freqs": [float(v) for v in predicted],
            "prior_freqs": [float(v) for v in prior],
            "test_predicted_freqs_uncorrected": [
                float(v) for v in np.bincount(raw_pred, minlength=9) / n
            ],
            "test_accuracy_uncorrected": float((raw_pred == raw_y).mean()),
            "neutral_column_mass_uncorrected": float(
                np.isin(raw_pred, list(NEUTRAL_ALIGNMENT_RANKS)).mean()
            ),
        }
        if "uncorrected_accuracy" in correction:
            correction_info["uncorrected_accuracy"] = correction["uncorrected_accuracy"]

    main_pred = main_logits.argmax(axis=1)
    align_pred = align_logits.argmax(axis=1)
    motiv_pred = logits["motiv"].argmax(axis=1)
    if correction_info is not None:
        corrected_pred = main_pred if space.kind is LabelSpaceKind.ALIGNMENT9 else align_pred
        correction_info["test_predicted_freqs_corrected"] = [
            float(v) for v in np.bincount(corrected_pred, minlength=9) / len(samples)
        ]

    confusion_main = ConfusionMatrix.from_predictions(y_main, main_pred, space.class_names())
    confusion_align = ConfusionMatrix.from_predictions(y_align, align_pred, ALIGN_SPACE.class_names())
    confusion_motiv = ConfusionMatrix.from_predictions(y_motiv, motiv_pred, MOTIV_SPACE.class_names())

    accuracies = {
        "main": confusion_main.accuracy,
        "alignment_head": confusion_align.accuracy,
        "motivation_head": confusion_motiv.accuracy,
    }
    if space.is_profile_space:
        am, mm = _marginal_predictions(main_pred, space)
        accuracies["alignment_marginal"] = float((am == y_align).mean())
        accuracies["motivation_marginal"] = float((mm == y_motiv).mean())

    sub_base = random_baseline(space)
    full_base = 1.0 / 36.0
    return Report(
        name=name or spec.name,
        dims=dims or spec.layout,
        space_tag=space.tag,
        n_samples=len(samples),
        n_games=len({s.game_id for s in samples}),
        accuracies=accuracies,
        confusion_main=confusion_main,
        confusion_align=confusion_align,
        confusion_motiv=confusion_motiv,
        random_baseline_subset=sub_base,
        random_baseline_full=full_base,
        lift_subset=confusion_main.accuracy / sub_base,
        lift_full=confusion_main.accuracy / full_base,
        neutral_column_mass=confusion_align.column_mass(NEUTRAL_ALIGNMENT_RANKS),
        neutral_prior=confusion_align.row_mass(NEUTRAL_ALIGNMENT_RANKS),
        correction=correction_info,
    )


def evaluate_class_predictions(
    profiles: Sequence[Profile],
    main_pred: np.ndarray,
    spec: ExperimentSpec,
    n_games: int,
    name: str | None = None,
    dims: str | None = None,
) -> Report:
    """Report from bare class predictions (used by the aggregate baseline)."""
    spec.validate()
    if len(profiles) == 0:
        raise EmptyTestSet(f"no samples to evaluate for {spec.name}")
    space = spec.space
    y_main = np.array([map_label(p, space) for p in profiles])
    y_align = np.array([map_label(p, ALIGN_SPACE) for p in profiles])
    y_motiv = np.array([map_label(p, MOTIV_SPACE) for p in profiles])
    confusion_main = ConfusionMatrix.from_predictions(y_main, main_pred, space.class_names())
    accuracies = {"main": confusion_main.accuracy}
    confusion_align = confusion_motiv = None
    if space.is_profile_space:
        am, mm = _marginal_predictions(main_pred, space)
        confusion_align = ConfusionMatrix.from_predictions(y_align, am, ALIGN_SPACE.class_names())
        confusion_motiv = ConfusionMatrix.from_predictions(y_motiv, mm, MOTIV_SPACE.class_names())
        accuracies["alignment_marginal"] = confusion_align.accuracy
        accuracies["motivation_marginal"] = confusion_motiv.accuracy
    sub_base = random_baseline(space)
    return Report(
        name=name or spec.name,
        dims=dims or spec.layout,
        space_tag=space.tag,
        n_samples=len(profiles),
        n_games=n_games,
        accuracies=accuracies,
        confusion_main=confusion_main,
        confusion_align=confusion_align,
        confusion_motiv=confusion_motiv,
        random_baseline_subset=sub_base,
        random_baseline_full=1.0 / 36.0,
        lift_subset=confusion_main.accuracy / sub_base,
        lift_full=confusion_main.accuracy * 36.0,
        neutral_column_mass=(
            confusion_align.column_mass(NEUTRAL_ALIGNMENT_RANKS) if confusion_align else None
        ),
        neutral_prior=(
            confusion_align.row_mass(NEUTRAL_ALIGNMENT_RANKS) if confusion_align else None
        ),
    )


# --- report files ----------------------------------------------------------


def _pct(x: float | None) -> str:
    return f"{100 * x:.1f}%" if x is not None else "-"


def table_rows(reports: Sequence[Report]) -> list[str]:
    lines = [
        "| Config | Dims | Alignment | Motivation | Profile | Lift (space) | Lift (36) |",
        "|---|---|---|---|---|---|---|",
    ]
    for r in reports:
        if r.failed:
            lines.append(f"| {r.name} | {r.dims} | FAILED | FAILED | FAILED | - | {r.error} |")
            continue
        align = r.accuracies.get("alignment_head", r.accuracies.get("alignment_marginal"))
        motiv = r.accuracies.get("motivation_head", r.accuracies.get("motivation_marginal"))
        lines.append(
            "| {} | {} | {} | {} | {} | {:.1f}x | {:.1f}x |".format(
                r.name, r.dims, _pct(align), _pct(motiv), _pct(r.accuracies.get("main")),
                r.lift_subset, r.lift_full,
            )
        )
    return lines


def write_table(path: str | Path, reports: Sequence[Report], title: str = "Results") -> None:
    lines = [f"# {title}", ""] + table_rows(reports) + [""]
    try:
        Path(path).write_text("\n".join(lines), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"table write failed: {exc}") from exc


def confusion_csv(matrix: ConfusionMatrix) -> str:
    header = "true\\pred," + ",".join(matrix.labels)
    lines = [header]
    for i, label in enumerate(matrix.labels):
        lines.append(label + "," + ",".join(str(int(v)) for v in matrix.counts[i]))
    return "\n".join(lines) + "\n"


def confusion_svg(matrix: ConfusionMatrix, title: str) -> str:
    """Grayscale confusion heatmap as a standalone SVG string.

    Pure text emission: one rect per cell, darker = more mass, label
    annotations on both axes. No plotting library involved.
    """
    k = len(matrix.labels)
    cell = max(10, min(24, 560 // max(k, 1)))
    margin_left, margin_top = 86, 64
    width = margin_left + k * cell + 20
    height = margin_top + k * cell + 20
    peak = int(matrix.counts.max()) if k else 0
    font = max(5, min(11, cell - 2))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin_left}" y="16" font-family="monospace" font-size="12">{title}</text>',
        f'<text x="{margin_left}" y="30" font-family="monospace" font-size="9">rows: true, columns: predicted</text>',
    ]
    for i in range(k):
        for j in range(k):
            frac = matrix.counts[i, j] / peak if peak else 0.0
            shade = int(round(255 * (1.0 - frac)))
            x = margin_left + j * cell
            y = margin_top + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},{shade})" stroke="rgb(200,200,200)" stroke-width="0.5"/>'
            )
    for i, label in enumerate(matrix.labels):
        y = margin_top + i * cell + cell // 2 + font // 2
        parts.append(
            f'<text x="{margin_left - 4}" y="{y}" font-family="monospace" '
            f'font-size="{font}" text-anchor="end">{label}</text>'
        )
        x = margin_left + i * cell + cell // 2
        parts.append(
            f'<text x="{x}" y="{margin_top - 4}" font-family="monospace" font-size="{font}" '
            f'text-anchor="start" transform="rotate(-60 {x} {margin_top - 4})">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: Report, directory: str | Path) -> list[Path]:
    """Write metrics.json, confusion CSV/SVG per space, and table.md."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        metrics_path = directory / "metrics.json"
        metrics_path.write_text(stable_json_dumps(report.to_dict()) + "\n", encoding="utf-8")
        written.append(metrics_path)
        matrices = [(report.space_tag, report.confusion_main)]
        if report.confusion_align is not None:
            matrices.append(("alignment9", report.confusion_align))
        if report.confusion_motiv is not None:
            matrices.append(("motivation4", report.confusion_motiv))
        seen = set()
        for tag, matrix in matrices:
            if tag in seen or matrix.total == 0:
                continue
            seen.add(tag)
            csv_path = directory / f"confusion_{tag}.csv"
            csv_path.write_text(confusion_csv(matrix), encoding="utf-8")
            svg_path = directory / f"confusion_{tag}.svg"
            svg_path.write_text(confusion_svg(matrix, f"{report.name} [{tag}]"), encoding="utf-8")
            written += [csv_path, svg_path]
        table_path = directory / "table.md"
        write_table(table_path, [report], title=report.name)
        written.append(table_path)
        return written
    except OSError as exc:
        raise IoFailure(f"report write failed: {exc}") from exc
