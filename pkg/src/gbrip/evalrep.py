"""Accuracy, Many/Medium/Few breakdowns, and disambiguation diagnostics."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import model as M

GROUPS = ("Many", "Medium", "Few")
GROUP_RULE = "classes sorted by training count (desc), split into contiguous terciles; remainder to Medium"


@dataclass
class EvalReport:
    overall_accuracy: float
    group_accuracy: dict
    per_class_accuracy: list
    group_classes: dict
    test_count: int
    disambiguation_rate: float | None = None
    prior_error: float | None = None

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["type"] = "eval"
        rec["group_rule"] = GROUP_RULE
        return rec

    def to_text(self) -> str:
        lines = [f"# group rule: {GROUP_RULE}", f"test_count={self.test_count}", f"overall_accuracy={self.overall_accuracy:.6f}"]
        for g in GROUPS:
            acc = self.group_accuracy[g]
            cls = ",".join(str(c) for c in self.group_classes[g])
            lines.append(f"group {g} classes=[{cls}] accuracy={'nan' if acc is None else f'{acc:.6f}'}")
        for c, acc in enumerate(self.per_class_accuracy):
            lines.append(f"class {c} accuracy={'nan' if acc is None else f'{acc:.6f}'}")
        if self.disambiguation_rate is not None:
            lines.append(f"disambiguation_rate={self.disambiguation_rate:.6f}")
        if self.prior_error is not None:
            lines.append(f"prior_error={self.prior_error:.6f}")
        return "\n".join(lines) + "\n"


def shot_groups(train_counts) -> dict:
    counts = np.asarray(train_counts)
    order = np.argsort(-counts, kind="stable")
    t = counts.shape[0] // 3
    return {
        "Many": sorted(order[:t].tolist()),
        "Medium": sorted(order[t:counts.shape[0] - t].tolist()),
        "Few": sorted(order[counts.shape[0] - t:].tolist()) if t else [],
    }


def accuracy_report(pred, labels, class_count, train_counts=None) -> EvalReport:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if labels.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty test set")
    correct = pred == labels
    per_class = []
    for c in range(class_count):
        rows = labels == c
        per_class.append(float(correct[rows].mean()) if rows.any() else None)
    if train_counts is None:
        train_counts = np.bincount(labels, minlength=class_count)
    groups = shot_groups(train_counts)
    group_acc = {}
    for g in GROUPS:
        rows = np.isin(labels, groups[g])
        group_acc[g] = float(correct[rows].mean()) if rows.any() else None
    return EvalReport(float(correct.mean()), group_acc, per_class, groups, int(labels.shape[0]))


def evaluate(params, test_features, test_labels, train_counts=None) -> EvalReport:
    """Unrestricted argmax predictions on test data (no candidate sets)."""
    test_features = np.asarray(test_features, dtype=np.float64)
    if test_features.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty test set")
    pred = M.predict(params, test_features)
    return accuracy_report(pred, test_labels, params.class_count, train_counts)


def disambiguation_rate(P, true_labels) -> float:
    P = np.asarray(P)
    return float((P.argmax(axis=1) == np.asarray(true_labels)).mean())


def prior_error(prior, train_labels, class_count) -> float:
    freq = np.bincount(train_labels, minlength=class_count) / len(train_labels)
    return float(np.abs(np.asarray(prior) - freq).sum())


def write_report(report: EvalReport, path) -> None:
    """Write ``path`` as structured text and ``path.jsonl`` alongside."""
    with open(path, "w") as fh:
        fh.write(report.to_text())
    with open(f"{path}.jsonl", "w") as fh:
        fh.write(json.dumps(report.to_record(), sort_keys=True) + "\n")


def read_record(path) -> dict:
    """Load the eval record from a ``.jsonl`` report (or its text sibling)."""
    path = str(path)
    if not path.endswith(".jsonl"):
        path = path + ".jsonl"
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("type") == "eval":
                return rec
    raise ValueError(f"{path}: no eval record")


def comparison_table(named_records) -> str:
    """Render runs side by side: overall, Many, Medium, Few, disambiguation."""
    head = f"{'run':<32} {'All':>7} {'Many':>7} {'Medium':>7} {'Few':>7} {'Disamb':>7}"
    lines = [head, "-" * len(head)]

    def pct(v):
        return f"{100 * v:7.2f}" if v is not None else f"{'-':>7}"

    for name, rec in named_records:
        g = rec["group_accuracy"]
        lines.append(
            f"{name[-32:]:<32} {pct(rec['overall_accuracy'])} {pct(g['Many'])} {pct(g['Medium'])} "
            f"{pct(g['Few'])} {pct(rec.get('disambiguation_rate'))}"
        )
    return "\n".join(lines) + "\n"
