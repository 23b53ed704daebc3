"""Test reports, CSV/JSON emission and run manifests."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .stats import ALPHA, Z_MAX, z_pvalue

CSV_COLUMNS = ("experiment", "functional", "n", "statistic", "p", "reference", "verdict")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".10g")
    return str(v)


@dataclass
class Row:
    """One functional of one experiment, with the rule that produced its verdict."""

    experiment: str
    functional: str
    n: int
    statistic: float
    p: float | None
    reference: float | None
    verdict: str
    rule: str
    se: float | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


@dataclass
class TestReport:
    experiment: str
    seed: int
    rows: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list:
        return [r for r in self.rows if not r.passed]

    def find(self, functional: str) -> Row:
        for r in self.rows:
            if r.functional == functional:
                return r
        raise KeyError(functional)

    # row builders ---------------------------------------------------------

    def z_row(self, functional: str, estimate: float, se: float, reference: float, n: int,
              z_max: float = Z_MAX) -> Row:
        """Pass iff ``|estimate - reference| <= z_max * se``."""
        z = (estimate - reference) / se if se > 0 else (0.0 if estimate == reference else math.inf)
        row = Row(self.experiment, functional, n, float(estimate), z_pvalue(z), float(reference),
                  _verdict(abs(z) <= z_max), f"|z|<={z_max:g}", float(se))
        self.rows.append(row)
        return row

    def p_row(self, functional: str, statistic: float, p: float, n: int, alpha: float = ALPHA,
              reference: float | None = None) -> Row:
        """Pass iff ``p > alpha``."""
        row = Row(self.experiment, functional, n, float(statistic), float(p), reference,
                  _verdict(p > alpha), f"p>{alpha:.3g}")
        self.rows.append(row)
        return row

    def bound_row(self, functional: str, statistic: float, bound: float, n: int,
                  reference: float | None = None) -> Row:
        """Pass iff ``statistic <= bound``."""
        row = Row(self.experiment, functional, n, float(statistic), None, reference,
                  _verdict(statistic <= bound), f"stat<={bound:g}")
        self.rows.append(row)
        return row

    def exact_row(self, functional: str, ok: bool, n: int, statistic: float = 0.0) -> Row:
        row = Row(self.experiment, functional, n, float(statistic), None, None, _verdict(ok), "exact")
        self.rows.append(row)
        return row

    def ks_rows(self, prefix: str, lhs: dict, rhs: dict, alpha: float = ALPHA) -> None:
        """Two-sample KS per functional, Bonferroni-adjusted across the group."""
        from .stats import ks_two_sample

        level = alpha / max(1, len(lhs))
        for name in lhs:
            d, p = ks_two_sample(lhs[name], rhs[name])
            self.p_row(f"{prefix}{name}", d, p, min(len(lhs[name]), len(rhs[name])), level)

    # emission -------------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "experiment": self.experiment,
            "seed": self.seed,
            "passed": self.passed,
            "rows": [asdict(r) for r in self.rows],
            "info": self.info,
        }
        return json.dumps(doc, indent=2, sort_keys=True, default=_json_default)

    def summary(self) -> str:
        lines = [f"{self.experiment}: {'PASS' if self.passed else 'FAIL'}"]
        for r in self.rows:
            lines.append(
                f"  {r.verdict}  {r.functional}  n={r.n} stat={_fmt(r.statistic)} "
                f"p={_fmt(r.p)} ref={_fmt(r.reference)} [{r.rule}]"
            )
        return "\n".join(lines)


def _json_default(o):
    try:
        import numpy as np

        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
    except ImportError:  # pragma: no cover
        pass
    return str(o)


@dataclass
class RunManifest:
    command: list
    config: dict
    seed: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    wall_seconds: float = 0.0
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)


def write_outputs(report: TestReport, manifest: RunManifest, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = report.experiment
    paths = {
        "csv": out / f"{stem}.csv",
        "json": out / f"{stem}.json",
        "manifest": out / f"{stem}.manifest.json",
    }
    paths["csv"].write_text(report.to_csv())
    paths["json"].write_text(report.to_json())
    manifest.outputs = {k: str(v) for k, v in paths.items()}
    paths["manifest"].write_text(manifest.to_json())
    return paths
