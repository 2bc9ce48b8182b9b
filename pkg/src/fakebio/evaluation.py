"""Measurement protocol: ROC sweeps, crossover, AUC and distribution reports.

Everything here works on clip-level fakeness scores (see
:func:`fakebio.authentication.fakeness_score`); a clip is flagged fake at
threshold ``tau`` when ``score > 1 - tau``.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .authentication import DEFAULT_TAU_F, Gallery, Matcher, ReferenceSet, enroll_arrays, flagged, score_from_match, \
    verdict_from_match
from .biometrics import Signatures, VideoPart, extract_signatures
from .errors import DegenerateLabels, InsufficientClips, InsufficientGroups, NoCrossover, UnknownIdentity
from .metric_learning.encoder import EncoderParams

GRID_POINTS = 201
BIN_WIDTH = 0.02
HIST_EDGES = np.linspace(-1.0, 1.0, 101)
_PAIR_BLOCK = 512


@dataclass(frozen=True)
class EvalRecord:
    video_id: str
    start: int
    truth: str  # "real" | "fake"
    score: float
    match: object  # MatchResult
    identity: str = ""
    source_identity: str = ""
    target_identity: str = ""


@dataclass
class RocCurve:
    thresholds: np.ndarray
    real_acc: np.ndarray
    fake_acc: np.ndarray


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: float  # sum of the values, for the mean

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else float("nan")


def default_grid() -> np.ndarray:
    return np.linspace(0.0, 1.0, GRID_POINTS)


# --------------------------------------------------------------------------
# scoring


def evaluate_signatures(sigs: Signatures, refs: ReferenceSet | Matcher) -> list[EvalRecord]:
    if len(sigs) == 0:
        return []
    matcher = refs if isinstance(refs, Matcher) else Matcher(refs)
    matches = matcher.match_many(sigs.F, sigs.B)
    return [
        EvalRecord(str(sigs.video_id[k]), int(sigs.start[k]), str(sigs.truth[k]), score_from_match(m), m,
                   str(sigs.identity[k]), str(sigs.source[k]), str(sigs.target[k]))
        for k, m in enumerate(matches)
    ]


def evaluate_clips(parts: list[VideoPart], refs: ReferenceSet | Matcher, params: EncoderParams,
                   t: int, stride: int) -> list[EvalRecord]:
    """Window the test parts, embed them and score every clip."""
    if not parts:
        return []
    return evaluate_signatures(extract_signatures(params, parts, t, stride), refs)


def _split_scores(records) -> tuple[np.ndarray, np.ndarray]:
    real = np.array([r.score for r in records if r.truth == "real"], dtype=np.float64)
    fake = np.array([r.score for r in records if r.truth == "fake"], dtype=np.float64)
    if real.size == 0 or fake.size == 0:
        raise DegenerateLabels(f"need real and fake records, got {real.size} real and {fake.size} fake")
    return real, fake


def roc_sweep(records, thresholds=None) -> RocCurve:
    real, fake = _split_scores(records)
    taus = default_grid() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    real_acc = np.array([np.count_nonzero(~flagged(real, tau)) / real.size for tau in taus])
    fake_acc = np.array([np.count_nonzero(flagged(fake, tau)) / fake.size for tau in taus])
    return RocCurve(taus, real_acc, fake_acc)


def accuracy_at(records, tau_f: float = DEFAULT_TAU_F) -> tuple[float, float, float]:
    """(real accuracy, fake accuracy, their unweighted mean) at one threshold."""
    curve = roc_sweep(records, [tau_f])
    r, f = float(curve.real_acc[0]), float(curve.fake_acc[0])
    return r, f, (r + f) / 2


def crossover(curve: RocCurve) -> tuple[float, float]:
    """Threshold and accuracy where the real and fake curves meet.

    A grid point where both are equal is an exact hit; a run of such points
    is a plateau and its midpoint is returned. Otherwise the first sign
    change of ``real - fake`` is interpolated linearly.
    """
    tau, real, fake = curve.thresholds, curve.real_acc, curve.fake_acc
    diff = real - fake
    touch = np.flatnonzero(diff == 0)
    if touch.size:
        lo = hi = touch[0]
        while hi + 1 < len(diff) and diff[hi + 1] == 0:
            hi += 1
        return float((tau[lo] + tau[hi]) / 2), float(real[lo])
    for k in range(len(diff) - 1):
        if np.sign(diff[k]) != np.sign(diff[k + 1]):
            w = diff[k] / (diff[k] - diff[k + 1])
            return float(tau[k] + w * (tau[k + 1] - tau[k])), float(real[k] + w * (real[k + 1] - real[k]))
    raise NoCrossover("real and fake accuracy curves do not meet on the grid")


def auc(records) -> float:
    """Mann-Whitney AUC: P(score_fake > score_real), ties counted half."""
    real, fake = _split_scores(records)
    ranks = rankdata(np.concatenate([fake, real]))  # average ranks for ties
    u = ranks[: fake.size].sum() - fake.size * (fake.size + 1) / 2
    return float(u / (fake.size * real.size))


def auc_trapezoid(records) -> float:
    """Area under the (false-positive, true-positive) curve, fakes positive."""
    real, fake = _split_scores(records)
    cuts = np.unique(np.concatenate([real, fake]))[::-1]
    tpr = [0.0] + [np.count_nonzero(fake >= c) / fake.size for c in cuts]
    fpr = [0.0] + [np.count_nonzero(real >= c) / real.size for c in cuts]
    area = 0.0
    for k in range(1, len(tpr)):
        area += (fpr[k] - fpr[k - 1]) * (tpr[k] + tpr[k - 1]) / 2
    return area


def video_level_accuracy(records, tau_f: float = DEFAULT_TAU_F) -> tuple[float, float, float]:
    """Majority vote of clip verdicts per video; a tied vote counts as fake."""
    votes = defaultdict(list)
    truth = {}
    for r in records:
        votes[r.video_id].append(bool(flagged(r.score, tau_f)))
        truth[r.video_id] = r.truth
    per_class = {"real": [], "fake": []}
    for vid, v in votes.items():
        is_fake = 2 * sum(v) >= len(v)
        per_class[truth[vid]].append(is_fake == (truth[vid] == "fake"))
    if not per_class["real"] or not per_class["fake"]:
        raise DegenerateLabels("need real and fake videos")
    r, f = float(np.mean(per_class["real"])), float(np.mean(per_class["fake"]))
    return r, f, (r + f) / 2


def coverage_gaps(records, refs: ReferenceSet) -> list[str]:
    """Identities shown in test clips that have no reference gallery."""
    known = set(refs.identities)
    seen = {r.identity for r in records} | {r.source_identity for r in records if r.source_identity}
    return sorted(seen - known)


# --------------------------------------------------------------------------
# distributions


def _bin_counts(values: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(HIST_EDGES, values, side="right") - 1
    idx = np.clip(idx, 0, len(HIST_EDGES) - 2)  # 1.0 (and 1 + rounding) lands in the last bin
    return np.bincount(idx, minlength=len(HIST_EDGES) - 1)


def histogram(values) -> Histogram:
    values = np.asarray(values, dtype=np.float64).ravel()
    return Histogram(HIST_EDGES.copy(), _bin_counts(values), float(values.sum()))


def similarity_distributions(fakes: Signatures, refs: ReferenceSet, grouping: str) -> Histogram:
    """Best appearance similarity of each fake clip to its source or target gallery."""
    if grouping not in ("vs_source", "vs_target"):
        raise ValueError(f"grouping must be vs_source or vs_target, got {grouping!r}")
    names = fakes.source if grouping == "vs_source" else fakes.target
    known = set(refs.identities)
    sims = np.empty(len(fakes))
    for ident in sorted(set(names.tolist())):
        if ident not in known:
            raise UnknownIdentity(f"{ident} has no reference gallery")
        sel = names == ident
        sims[sel] = Gallery([ident], refs.F).best(fakes.F[sel])[1]
    return histogram(sims)


def behavior_context_distributions(B: np.ndarray, identity, context) -> dict[str, Histogram]:
    """Pairwise behavior similarities split by person and context.

    Every unordered pair of distinct clips is counted once. Pairs of the
    same person in different contexts and of different people in the same
    context are kept; different people in different contexts are ignored.
    """
    B = np.asarray(B, dtype=np.float64)
    ident = np.unique(np.asarray(identity), return_inverse=True)[1]
    ctx = np.unique(np.asarray(context), return_inverse=True)[1]
    n = len(B)
    names = ("same_person_same_context", "same_person_diff_context", "diff_person_same_context")
    counts = {k: np.zeros(len(HIST_EDGES) - 1, dtype=np.int64) for k in names}
    totals = dict.fromkeys(names, 0.0)
    for a in range(0, n, _PAIR_BLOCK):
        rows = slice(a, min(a + _PAIR_BLOCK, n))
        S = B[rows] @ B.T
        upper = np.arange(n)[None, :] > np.arange(a, rows.stop)[:, None]
        same_id = ident[rows, None] == ident[None, :]
        same_ctx = ctx[rows, None] == ctx[None, :]
        for k, mask in zip(names, (same_id & same_ctx, same_id & ~same_ctx, ~same_id & same_ctx)):
            vals = S[mask & upper]
            counts[k] += _bin_counts(vals)
            totals[k] += float(vals.sum())
    empty = [k for k in names if counts[k].sum() == 0]
    if empty:
        raise InsufficientGroups(f"no pairs for {', '.join(empty)}; need >= 2 identities and >= 2 contexts")
    return {k: Histogram(HIST_EDGES.copy(), counts[k], totals[k]) for k in names}


# --------------------------------------------------------------------------
# reference-set size ablation


def reference_ablation(ref: Signatures, test: Signatures, sizes, tau_f: float = DEFAULT_TAU_F,
                       trials: int = 5, seed: int = 0) -> dict[int, float]:
    """Average detection accuracy when each identity keeps only ``m`` reference clips.

    For every size and trial each identity's gallery is re-enrolled from
    ``m`` clips drawn without replacement, and the mean of the real and
    fake clip accuracies at ``tau_f`` is averaged over the trials.
    """
    idents = sorted(set(ref.identity.tolist()))
    rows = {i: np.flatnonzero(ref.identity == i) for i in idents}
    smallest = min(len(r) for r in rows.values())
    out = {}
    for m in sizes:
        if m < 1 or m > smallest:
            raise InsufficientClips(f"cannot draw {m} clips; the smallest identity has {smallest}")
        accs = []
        for trial in range(trials):
            rng = np.random.default_rng(np.random.SeedSequence([seed, m, trial]))
            keep = np.concatenate([np.sort(rng.choice(rows[i], size=m, replace=False)) for i in idents])
            refs = enroll_arrays(ref.identity[keep], ref.B[keep], ref.F[keep])
            accs.append(accuracy_at(evaluate_signatures(test, refs), tau_f)[2])
        out[int(m)] = float(np.mean(accs))
    return out


# --------------------------------------------------------------------------
# reports


def _fmt(x: float) -> str:
    return repr(float(x))


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "real_acc", "fake_acc"])
        for row in zip(curve.thresholds, curve.real_acc, curve.fake_acc):
            w.writerow([_fmt(v) for v in row])


def write_records_csv(records, path, tau_f: float = DEFAULT_TAU_F) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", "start", "truth", "identity", "source_identity", "target_identity", "score",
                    "i_f", "c_f", "i_b", "c_b", "verdict", "reason"])
        for r in records:
            v = verdict_from_match(r.match, tau_f)
            m = r.match
            w.writerow([r.video_id, r.start, r.truth, r.identity, r.source_identity or "-",
                        r.target_identity or "-", _fmt(r.score), m.i_f, _fmt(m.c_f), m.i_b, _fmt(m.c_b),
                        v.label, v.reason])


def write_histogram_csv(hist: Histogram, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            w.writerow([f"{lo:.2f}", f"{hi:.2f}", int(c)])


@dataclass
class Report:
    tau_f: float
    at_tau: tuple[float, float, float]
    crossover: tuple[float, float] | None
    auc: float
    video_level: tuple[float, float, float] | None
    gaps: list[str]
    means: dict[str, float]
    counts: tuple[int, int]

    def summary(self) -> str:
        r, f, a = self.at_tau
        lines = [
            f"clips: {self.counts[0]} real, {self.counts[1]} fake",
            f"accuracy at tau_f={self.tau_f:.4f}: real {r:.4f}  fake {f:.4f}  average {a:.4f}",
        ]
        if self.crossover is None:
            lines.append("crossover: none on the grid")
        else:
            lines.append(f"crossover: tau_f {self.crossover[0]:.4f}  accuracy {self.crossover[1]:.4f}")
        lines.append(f"auc: {self.auc:.6f}")
        if self.video_level is not None:
            vr, vf, va = self.video_level
            lines.append(f"video-level majority at tau_f={self.tau_f:.4f}: real {vr:.4f}  fake {vf:.4f}  "
                         f"average {va:.4f}")
        for k, v in self.means.items():
            lines.append(f"mean {k}: {v:.4f}")
        lines.append("coverage gaps: " + (", ".join(self.gaps) if self.gaps else "none"))
        return "\n".join(lines) + "\n"


def build_report(records, refs: ReferenceSet, tau_f: float = DEFAULT_TAU_F,
                 hists: dict[str, Histogram] | None = None) -> tuple[Report, RocCurve]:
    curve = roc_sweep(records)
    try:
        cross = crossover(curve)
    except NoCrossover:
        cross = None
    try:
        video = video_level_accuracy(records, tau_f)
    except DegenerateLabels:
        video = None
    n_real = sum(r.truth == "real" for r in records)
    means = {k: h.mean for k, h in (hists or {}).items()}
    report = Report(tau_f, accuracy_at(records, tau_f), cross, auc(records), video,
                    coverage_gaps(records, refs), means, (n_real, len(records) - n_real))
    return report, curve


def write_reports(out_dir, records, refs: ReferenceSet, tau_f: float = DEFAULT_TAU_F,
                  hists: dict[str, Histogram] | None = None) -> Report:
    """Write roc.csv, records.csv, hist_*.csv and summary.txt under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report, curve = build_report(records, refs, tau_f, hists)
    write_roc_csv(curve, out / "roc.csv")
    write_records_csv(records, out / "records.csv", tau_f)
    for name, h in (hists or {}).items():
        write_histogram_csv(h, out / f"hist_{name}.csv")
    (out / "summary.txt").write_text(report.summary(), encoding="utf-8")
    return report
