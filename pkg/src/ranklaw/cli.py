"""Command-line front end.

Chains the pipeline modules and writes plot-ready delimited files plus text
or machine-readable reports.  Identical configuration and inputs produce
byte-identical outputs; floats are formatted at 12 significant digits.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, corr, fit, ingest, rank, regime, stats, urnsim
from .errors import RanklawError

SCHEMA_VERSION = 1
LOCK_NAME = ".ranklaw.lock"


def _fmt(v: float) -> str:
    return format(v, ".12g")


class OutputDir:
    """Tracks files written by one run so failures leave no partial output."""

    def __init__(self, path: Path):
        self.path = path
        self.written: list[Path] = []
        path.mkdir(parents=True, exist_ok=True)
        self.lock = path / LOCK_NAME
        if self.lock.exists():
            raise RanklawError(f"output directory locked by another run: {self.lock}")
        self.lock.write_text(str(os.getpid()))

    def write(self, name: str, text: str) -> Path:
        target = self.path / name
        target.write_text(text)
        self.written.append(target)
        return target

    def rollback(self):
        for f in self.written:
            f.unlink(missing_ok=True)

    def release(self):
        self.lock.unlink(missing_ok=True)


def _load_panel(path: str) -> ingest.Panel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise RanklawError(f"ingest: cannot read {path}: {exc}") from exc
    return ingest.parse_panel(text)


def _load_ranked(path: str, window: list[int] | None) -> rank.RankedSeries:
    """Load a ranked series from either an exported ranking file or a panel."""
    text = Path(path).read_text()
    first = next(
        (l for l in text.splitlines() if l.strip() and not l.startswith("#")), ""
    )
    if first.replace("\t", ",").startswith("rank,"):
        entries = []
        delim = "\t" if "\t" in first else ","
        for line in text.splitlines()[1:]:
            if not line.strip() or line.startswith("#"):
                continue
            r, eid, value = line.split(delim)
            entries.append((eid, float(value)))
        return rank.rank_desc(dict(entries), rule=rank.TieBreak.ENTITY_ID,
                              criterion=Path(path).stem)
    panel = ingest.parse_panel(text)
    window = window or list(panel.years)
    averages = ingest.average_over_years(panel, window)
    names = {rec.entity_id: rec.name for rec in panel.records}
    return rank.rank_desc(averages, names=names, criterion=panel.quantity_label)


def _load_scatter(path: str) -> regime.ScatterSet:
    text = Path(path).read_text()
    lines = [l for l in text.splitlines() if l.strip() and not l.startswith("#")]
    if not lines:
        raise RanklawError(f"regime: empty scatter file {path}")
    delim = "\t" if "\t" in lines[0] else ","
    header = [h.strip() for h in lines[0].split(delim)]
    if header[:3] != ["entity_id", "x", "y"]:
        raise RanklawError("regime: scatter file must have columns entity_id,x,y")
    points = []
    for line in lines[1:]:
        eid, x, y = line.split(delim)[:3]
        points.append((eid, float(x), float(y)))
    return regime.ScatterSet(tuple(points))


def _tie_rule(name: str) -> rank.TieBreak:
    return {"lexical": rank.TieBreak.LEXICAL_NAME,
            "id": rank.TieBreak.ENTITY_ID,
            "average": rank.TieBreak.AVERAGE_RANK}[name]


def _machine_doc(section: str, pairs: dict) -> str:
    lines = [f"schema_version: {SCHEMA_VERSION}", f"section: {section}"]
    for key, value in pairs.items():
        if isinstance(value, float):
            value = _fmt(value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def cmd_ingest(args, out: OutputDir) -> None:
    panel = _load_panel(args.input)
    if args.merges:
        ledger = ingest.parse_merge_ledger(Path(args.merges).read_text())
        panel = ingest.apply_merge_ledger(panel, ledger)
    out.write("panel.csv", ingest.serialize_panel(panel))
    if args.population:
        pop = _load_panel(args.population)
        aggregates = ingest.aggregate_by_region(panel, pop)
        lines = ["region,n_cities,n_inhabitants,ati_mean"]
        for agg in aggregates:
            lines.append(
                f"{agg.region},{agg.n_cities},{_fmt(agg.n_inhabitants)},{_fmt(agg.ati_mean)}"
            )
        out.write("regions.csv", "\n".join(lines) + "\n")


def cmd_describe(args, out: OutputDir) -> None:
    panel = _load_panel(args.input)
    window = args.window or list(panel.years)
    sections = []
    machine: dict = {}
    for year in window:
        values = [v for v in panel.values_for_year(year).values() if v is not None]
        summary = stats.describe(values)
        sections.append(stats.format_summary(summary, label=f"[{year}]"))
        for key, value in stats.summary_key_values(summary).items():
            machine[f"{year}.{key}"] = value
    averages = ingest.average_over_years(panel, window)
    summary = stats.describe(list(averages.values()))
    sections.append(stats.format_summary(summary, label="[window average]"))
    for key, value in stats.summary_key_values(summary).items():
        machine[f"avg.{key}"] = value
    if args.format == "machine":
        out.write("describe.txt", _machine_doc("describe", machine))
    else:
        out.write("describe.txt", "\n".join(sections))


def cmd_rank(args, out: OutputDir) -> None:
    panel = _load_panel(args.input)
    window = args.window or list(panel.years)
    averages = ingest.average_over_years(panel, window)
    names = {rec.entity_id: rec.name for rec in panel.records}
    series = rank.rank_desc(averages, rule=_tie_rule(args.ties), names=names,
                            criterion=panel.quantity_label)
    out.write("ranked.csv", rank.export_ranked_series(series))


def cmd_corr(args, out: OutputDir) -> None:
    x = _load_ranked(args.input, args.window)
    y = _load_ranked(args.population, args.window)
    pairs = rank.pair_ranks(x, y)
    ids = [eid for eid, _, _ in pairs.entries]
    xv, yv = x.values(), y.values()
    report = corr.correlation_report(
        pairs, [xv[i] for i in ids], [yv[i] for i in ids]
    )
    doc = {
        "n": report.n, "p": report.p, "q": report.q,
        "p_plus_q": report.p + report.q, "p_minus_q": report.p - report.q,
        "ties_x": report.ties_x, "ties_y": report.ties_y,
        "kendall_tau": report.tau_a, "kendall_tau_b": report.tau_b,
        "sigma_tau": report.sigma_tau, "z": report.z,
        "spearman_rho": report.rho, "pearson_pi": report.pi,
    }
    if args.format == "machine":
        out.write("corr.txt", _machine_doc("corr", doc))
    else:
        width = max(len(k) for k in doc)
        body = "\n".join(
            f"{k:<{width}}  {_fmt(v) if isinstance(v, float) else v}"
            for k, v in doc.items()
        )
        out.write("corr.txt", body + "\n")
    diffs, summary, frac = rank.rank_diff_series(pairs)
    diff_doc = stats.format_summary(summary, label="[rank difference r_y - r_x]")
    diff_doc += f"fraction(<=0)  {_fmt(frac)}\n"
    out.write("rank_diff.txt", diff_doc)


def cmd_pairwise(args, out: OutputDir) -> None:
    panel = _load_panel(args.input)
    matrix = corr.pairwise_matrix(panel, args.window or None)
    out.write("pairwise_pq.csv", corr.format_pq_matrix(matrix))
    out.write("pairwise_tau_z.csv", corr.format_tau_z_matrix(matrix))


def cmd_fit(args, out: OutputDir) -> None:
    series = _load_ranked(args.input, args.window)
    if args.drop_top:
        series = fit.remove_top_outliers(series, args.drop_top)
    kind = fit.ModelKind(args.model)
    result = fit.fit_model(series, kind=kind, A=args.amplitude, scale=args.scale)
    out.write("fit_report.txt", fit.format_fit_report(result))
    out.write("fit_table.csv", fit.fit_table(series, result))
    outliers = fit.detect_outliers(series, result, threshold=args.threshold)
    out.write("fit_outliers.txt", "\n".join(outliers) + ("\n" if outliers else ""))


def cmd_regime(args, out: OutputDir) -> None:
    points = _load_scatter(args.input)
    exclude = tuple(args.exclude.split(",")) if args.exclude else ()
    split = regime.two_line_split(points, k=args.k_lines, outlier_ids=exclude)
    out.write("regime_split.csv", regime.export_split(points, split))
    intercept, slope, r2, int_se, slope_se = regime.inertia_axis(points)
    lines = [
        f"intercept: {_fmt(intercept)} +/- {_fmt(int_se)}",
        f"slope: {_fmt(slope)} +/- {_fmt(slope_se)}",
        f"r_squared: {_fmt(r2)}",
    ]
    xs = [p[1] for p in points.points]
    ys = [p[2] for p in points.points]
    if min(xs) > 0 and min(ys) > 0:
        c, beta, r2log = regime.loglog_power_fit(points)
        lines += [
            f"loglog_c: {_fmt(c)}",
            f"loglog_beta: {_fmt(beta)}",
            f"loglog_r_squared: {_fmt(r2log)}",
        ]
    out.write("regime_axis.txt", "\n".join(lines) + "\n")


def cmd_simulate(args, out: OutputDir) -> None:
    config = urnsim.UrnConfig(
        n_urns=args.urns, total_balls=args.balls, a=args.offset,
        k0=args.k0, capacity=args.capacity, seed=args.seed,
    )
    if args.replicates > 1:
        rows = urnsim.replicate_occupancies(config, args.replicates)
        out.write("simulate_summary.csv", urnsim.export_replicate_summary(rows))
    outcome = urnsim.simulate_urns(config)
    out.write("occupancy.csv", urnsim.export_outcome(outcome))


def cmd_report(args, out: OutputDir) -> None:
    ati = _load_panel(args.input)
    if args.merges:
        ledger = ingest.parse_merge_ledger(Path(args.merges).read_text())
        ati = ingest.apply_merge_ledger(ati, ledger)
    pop = _load_panel(args.population)
    window = args.window or list(ati.years)

    parts = [f"# ranklaw report (schema_version {SCHEMA_VERSION})", ""]

    averages = ingest.average_over_years(ati, window)
    parts.append(stats.format_summary(stats.describe(list(averages.values())),
                                      label="[summary: window-average values]"))

    names = {rec.entity_id: rec.name for rec in ati.records}
    x = rank.rank_desc(averages, names=names, criterion=ati.quantity_label)
    pop_values = {
        eid: v for eid, v in pop.values_for_year(pop.years[-1]).items()
    }
    y = rank.rank_desc(pop_values, names=names, criterion=pop.quantity_label)
    pairs = rank.pair_ranks(x, y)
    ids = [eid for eid, _, _ in pairs.entries]
    report = corr.correlation_report(
        pairs, [averages[i] for i in ids], [pop_values[i] for i in ids]
    )
    parts.append("[correlation]")
    parts.append(f"p+q          {report.p + report.q}")
    parts.append(f"p-q          {report.p - report.q}")
    parts.append(f"p            {report.p}")
    parts.append(f"q            {report.q}")
    parts.append(f"Kendall tau  {_fmt(report.tau_a)}")
    parts.append(f"sigma_tau    {_fmt(report.sigma_tau)}")
    parts.append(f"Z            {_fmt(report.z)}")
    parts.append(f"Spearman rho {_fmt(report.rho)}")
    parts.append(f"Pearson Pi   {_fmt(report.pi)}")
    parts.append("")

    kind = fit.ModelKind(args.model)
    result = fit.fit_model(x, kind=kind, A=args.amplitude, scale=args.scale)
    parts.append("[rank-size fit]")
    parts.append(fit.format_fit_report(result))

    points = regime.ScatterSet(
        tuple((eid, averages[eid], pop_values[eid]) for eid in ids),
        x_label=ati.quantity_label, y_label=pop.quantity_label,
    )
    exclude = tuple(args.exclude.split(",")) if args.exclude else ()
    split = regime.two_line_split(points, k=args.k_lines, outlier_ids=exclude)
    parts.append("[two-regime split]")
    parts.append("slopes: " + ",".join(_fmt(s) for s in split.slopes))
    parts.append(f"overall_slope: {_fmt(split.overall_slope)}")
    parts.append(f"objective: {_fmt(split.objective)}")
    parts.append(f"degenerate: {str(split.degenerate).lower()}")
    out.write("report.txt", "\n".join(parts) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranklaw",
        description="Rank-size law fitting and rank correlation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="input data file")
        p.add_argument("--out", default=None,
                       help="output directory (default $RANKLAW_OUT_DIR or .)")
        p.add_argument("--format", choices=["text", "machine"], default="text")
        p.add_argument("--window", type=int, nargs="*", default=None,
                       help="year window (default: all panel years)")

    p = sub.add_parser("ingest", help="parse, merge and serialize a panel")
    common(p)
    p.add_argument("--merges", help="merge ledger file")
    p.add_argument("--population", help="population panel for regional aggregation")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("describe", help="summary statistics per year column")
    common(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("rank", help="rank entities by window-average value")
    common(p)
    p.add_argument("--ties", choices=["lexical", "id", "average"], default="lexical")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("corr", help="rank correlation between two inputs")
    common(p)
    p.add_argument("--population", required=True,
                   help="second input (ranking file or panel)")
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("pairwise", help="year-pair Kendall matrices for one panel")
    common(p)
    p.set_defaults(func=cmd_pairwise)

    p = sub.add_parser("fit", help="fit a rank-size model")
    common(p)
    p.add_argument("--model", choices=[k.value for k in fit.ModelKind],
                   default="lavalette3")
    p.add_argument("--A", dest="amplitude", type=float, default=None,
                   help="fixed amplitude scale (default: order of magnitude of max)")
    p.add_argument("--scale", choices=["log", "linear"], default="log")
    p.add_argument("--drop-top", dest="drop_top", type=int, default=0,
                   help="remove the top K ranks before fitting")
    p.add_argument("--threshold", type=float, default=3.0,
                   help="outlier detection threshold in residual sigmas")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("regime", help="two-regime split of a scatter file")
    common(p)
    p.add_argument("--k-lines", dest="k_lines", type=int, choices=[2, 3], default=2)
    p.add_argument("--exclude", default="", help="comma-joined outlier entity ids")
    p.set_defaults(func=cmd_regime)

    p = sub.add_parser("simulate", help="preferential-attachment urn simulation")
    common(p, needs_input=False)
    p.add_argument("--urns", type=int, required=True)
    p.add_argument("--balls", type=int, required=True)
    p.add_argument("--a", dest="offset", type=float, default=1.0,
                   help="attachment offset")
    p.add_argument("--k0", type=int, default=1, help="initial balls per urn")
    p.add_argument("--capacity", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="full pipeline report")
    common(p)
    p.add_argument("--population", required=True)
    p.add_argument("--merges", default=None)
    p.add_argument("--model", choices=[k.value for k in fit.ModelKind],
                   default="lavalette3")
    p.add_argument("--A", dest="amplitude", type=float, default=None)
    p.add_argument("--scale", choices=["log", "linear"], default="log")
    p.add_argument("--k-lines", dest="k_lines", type=int, choices=[2, 3], default=2)
    p.add_argument("--exclude", default="")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_path = Path(args.out or os.environ.get("RANKLAW_OUT_DIR") or ".")
    try:
        out = OutputDir(out_path)
    except RanklawError as exc:
        print(f"ranklaw: {exc}", file=sys.stderr)
        return 1
    try:
        args.func(args, out)
    except (RanklawError, OSError, ValueError) as exc:
        out.rollback()
        print(f"ranklaw: {args.command}: {exc}", file=sys.stderr)
        return 1
    finally:
        out.release()
    return 0


if __name__ == "__main__":
    sys.exit(main())
