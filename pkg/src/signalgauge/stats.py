"""Paired two-tailed t-tests and significance matrices over experiment runs.

The Student-t tail is evaluated through the regularized incomplete beta
function, ``P(|T| > t) = I_x(df/2, 1/2)`` with ``x = df / (df + t^2)``,
using the Lentz continued fraction. No statistics library is involved.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass

from .errors import LengthMismatch, SignalGaugeError, TooFewSamples

ALPHA = 0.05
PAIRINGS = ("seeds", "checkpoints")

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 500


def _beta_cf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, df: float) -> float:
    """Two-tailed tail mass ``P(|T| >= |t|)`` of Student's t with ``df`` dof."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


def t_cdf(t: float, df: float) -> float:
    tail = t_two_tailed_p(t, df) / 2.0
    return 1.0 - tail if t >= 0 else tail


@dataclass
class TTestReport:
    config_a: str
    config_b: str
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    significant: bool
    mean_difference: float = 0.0
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def paired_t_test(a, b, config_a: str = "a", config_b: str = "b", alpha: float = ALPHA) -> TTestReport:
    """Two-tailed paired t-test of ``a`` against ``b``.

    Zero-variance differences are handled explicitly: all-equal pairs give
    ``t = 0, p = 1``; a constant non-zero shift gives ``t = +-inf, p = 0``
    with ``degenerate`` set.
    """
    a, b = list(map(float, a)), list(map(float, b))
    if len(a) != len(b):
        raise LengthMismatch(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise TooFewSamples(f"paired t-test needs at least 2 pairs, got {n}")
    d = [x - y for x, y in zip(a, b)]
    mean = math.fsum(d) / n
    ss = math.fsum((v - mean) ** 2 for v in d)
    sd = math.sqrt(ss / (n - 1))
    df = n - 1
    # differences equal to within rounding count as exactly constant
    scale = max(1.0, max(abs(v) for v in d))
    if sd <= 1e-12 * scale:
        if abs(mean) <= 1e-12 * scale:
            return TTestReport(config_a, config_b, 0.0, df, 1.0, False, mean, False)
        t = math.copysign(math.inf, mean)
        return TTestReport(config_a, config_b, t, df, 0.0, True, mean, True)
    t = mean / (sd / math.sqrt(n))
    p = t_two_tailed_p(t, df)
    return TTestReport(config_a, config_b, t, df, p, p < alpha, mean, False)


# --- significance matrices ------------------------------------------------


@dataclass
class SignificanceMatrix:
    config_ids: list
    pairing: str
    checkpoint: int | None
    cells: dict  # (config_a, config_b) -> TTestReport | error message

    def cell(self, a: str, b: str) -> TTestReport | str:
        if (a, b) in self.cells:
            return self.cells[(a, b)]
        rep = self.cells[(b, a)]
        if isinstance(rep, str):
            return rep
        return TTestReport(a, b, -rep.t_statistic, rep.degrees_of_freedom, rep.p_value,
                           rep.significant, -rep.mean_difference, rep.degenerate)

    def tests(self) -> list[TTestReport]:
        return [r for r in self.cells.values() if isinstance(r, TTestReport)]

    def significant_pairs(self) -> list[TTestReport]:
        return [r for r in self.tests() if r.significant]

    @property
    def bonferroni_factor(self) -> int:
        return max(1, len(self.cells))

    def rows(self) -> list[dict]:
        k = self.bonferroni_factor
        out = []
        for (a, b), rep in self.cells.items():
            if isinstance(rep, str):
                out.append({"config_a": a, "config_b": b, "error": rep})
                continue
            row = rep.to_dict()
            row["p_bonferroni"] = min(1.0, rep.p_value * k)
            out.append(row)
        return out

    def to_markdown(self) -> str:
        lines = [
            f"Pairing: {self.pairing}"
            + (f", checkpoint step {self.checkpoint}" if self.checkpoint is not None else ""),
            "",
            "| Config A | Config B | t | df | p | p < 0.05 | p (Bonferroni, supplementary) |",
            "|---|---|---:|---:|---:|:---:|---:|",
        ]
        for row in self.rows():
            if "error" in row:
                lines.append(f"| {row['config_a']} | {row['config_b']} | - | - | - | error: {row['error']} | - |")
                continue
            lines.append(
                f"| {row['config_a']} | {row['config_b']} | {row['t_statistic']:.4f} | "
                f"{row['degrees_of_freedom']} | {row['p_value']:.4f} | "
                f"{'yes' if row['significant'] else 'no'} | {row['p_bonferroni']:.4f} |"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["config_a", "config_b", "t_statistic", "degrees_of_freedom", "p_value",
                "significant", "p_bonferroni", "mean_difference", "degenerate", "error"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({c: row.get(c, "") for c in cols})
        return buf.getvalue()


def _vectors(report, pairing: str, checkpoint: int | None) -> dict[str, list[float]]:
    vecs = {}
    for cfg in report.config_ids:
        runs = sorted(report.runs[cfg], key=lambda r: r.seed)
        if pairing == "seeds":
            if checkpoint is None:
                vecs[cfg] = [r.final_test_accuracy for r in runs]
            else:
                vecs[cfg] = [r.checkpoint_accuracy[r.checkpoint_steps.index(checkpoint)] for r in runs]
        else:
            vecs[cfg] = report.mean_checkpoint_accuracy(cfg)
    return vecs


def significance_matrix(report, pairing: str = "seeds", checkpoint: int | None = None) -> SignificanceMatrix:
    """Paired tests over every unordered pair of configurations.

    ``seeds`` pairs per-seed accuracies (final accuracy, or the accuracy at
    ``checkpoint``); ``checkpoints`` pairs the seed-averaged accuracy curves.
    """
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}, got {pairing!r}")
    if len(report.config_ids) < 2:
        raise TooFewSamples("a significance matrix needs at least two configurations")
    vecs = _vectors(report, pairing, checkpoint)
    cells = {}
    for a, b in itertools.combinations(report.config_ids, 2):
        try:
            cells[(a, b)] = paired_t_test(vecs[a], vecs[b], a, b)
        except SignalGaugeError as exc:
            cells[(a, b)] = str(exc)
    return SignificanceMatrix(list(report.config_ids), pairing, checkpoint, cells)


# --- regime verdict -------------------------------------------------------

VERDICT_UNDERFLOW = "underflow: configuration-insensitive"
VERDICT_OVERFLOW = "overflow: configuration-sensitive"
VERDICT_INCONSISTENT = "inconsistent with the underflow/overflow hypothesis"
VERDICT_BALANCED = "balanced: no sensitivity prediction"


def dataset_verdict(regime, significant_count: int) -> tuple[str, bool]:
    """Verdict string and whether it disagrees with the regime's prediction."""
    from .architecture import InformationRegime

    regime = InformationRegime(regime)
    if regime is InformationRegime.UNDERFLOW:
        return (VERDICT_UNDERFLOW, False) if significant_count == 0 else (VERDICT_INCONSISTENT, True)
    if regime is InformationRegime.OVERFLOW:
        return (VERDICT_OVERFLOW, False) if significant_count > 0 else (VERDICT_INCONSISTENT, True)
    return VERDICT_BALANCED, False


def regime_verdict(mnist_like_matrix: SignificanceMatrix, cifar_like_matrix: SignificanceMatrix,
                   metrics_pair, names=("mnist", "cifar10"), bands=None) -> str:
    """Markdown report joining significance counts with each dataset's regime."""
    from .architecture import DEFAULT_BANDS, classify_regime

    bands = bands or DEFAULT_BANDS
    lines = ["# Regime verdict", ""]
    lines += ["| Dataset | ME (bits/pixel) | SNR | Regime | Significant pairs | Verdict |",
              "|---|---:|---:|---|---:|---|"]
    notes = []
    for name, matrix, metrics in zip(names, (mnist_like_matrix, cifar_like_matrix), metrics_pair):
        regime = classify_regime(metrics, bands)
        sig = len(matrix.significant_pairs())
        verdict, flagged = dataset_verdict(regime.regime, sig)
        mark = " (flagged)" if flagged else ""
        lines.append(
            f"| {name} | {metrics.me_bits_per_pixel:.3f} | {metrics.snr:.3f} | "
            f"{regime.regime.value} | {sig}/{len(matrix.cells)} | {verdict}{mark} |"
        )
        notes.append(f"- {name}: {regime.rationale_text}")
    return "\n".join(lines + ["", "Regime rationale:", *notes]) + "\n"
