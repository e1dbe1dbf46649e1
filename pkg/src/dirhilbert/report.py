"""Report emission: delimited records, JSON, text summary and figures.

The CSV schema is fixed: m,#U,n,G,p,norm_f,levelset_fraction,ratio,
slope_flag,seconds with a mandatory header.  Formatting is deterministic,
so identical records produce identical bytes; the seconds column carries
wall-clock time and is the only field that varies between reruns of the
same configuration.  Figures are rendered next to the CSV.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CSV_HEADER = "m,#U,n,G,p,norm_f,levelset_fraction,ratio,slope_flag,seconds"
CSV_COLUMNS = tuple(CSV_HEADER.split(","))


def _fmt(value) -> str:
    if isinstance(value, float):
        if np.isnan(value):
            return "nan"
        return f"{value:.12g}"
    return str(value)


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    for record in records:
        row = record.csv_row()
        row["seconds"] = float(f"{row['seconds']:.3f}")
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def sweep_summary_text(result) -> str:
    cfg = result.config
    lines = [
        "sweep summary",
        "=============",
        f"n={cfg.n} depths={cfg.depths} p={list(cfg.p_values)} seed={cfg.seed}",
        f"level threshold factor={cfg.level_factor:g} "
        f"(target fraction > {cfg.mass_floor:g})",
        "",
    ]
    for record in result.records:
        lines.append(
            f"m={record.m} p={record.p:g} G={record.grid} "
            f"norm_f={_fmt(record.norm_f)} levelset={_fmt(record.levelset_fraction)} "
            f"ratio={_fmt(record.ratio)} [{record.slope_flag}]"
        )
    lines.append("")
    for key, slope in result.slopes.items():
        band = result.summary["slopes_in_band"].get(key, False)
        lines.append(
            f"least-squares slope of log(ratio) vs log(m) at p={key}: "
            f"{_fmt(slope)} (sqrt prediction 0.5, band [0.3, 0.7]: "
            f"{'ok' if band else 'out'})"
        )
    lines.append("")
    return "\n".join(lines)


def render_sweep_figures(result, outdir: Path) -> list[str]:
    """Render ratio growth, norm growth and level-set figures as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    ok = [r for r in result.records if r.slope_flag == "ok"]
    if not ok:
        return written

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for p in sorted({r.p for r in ok}):
        rows = sorted((r for r in ok if r.p == p), key=lambda r: r.m)
        ms = np.array([r.m for r in rows], dtype=float)
        ratios = np.array([r.ratio for r in rows])
        ax.loglog(ms, ratios, "o-", label=f"p={p:g}")
        if len(rows) >= 2:
            slope = result.slopes.get(str(float(p)), float("nan"))
            fit = ratios[0] * (ms / ms[0]) ** slope
            ax.loglog(ms, fit, "--", alpha=0.5)
    ref_m = np.array(sorted({r.m for r in ok}), dtype=float)
    ax.loglog(ref_m, np.sqrt(ref_m) * ok[0].ratio / np.sqrt(ok[0].m), ":",
              color="gray", label="sqrt(m) reference")
    ax.set_xlabel("tree depth m (log)")
    ax.set_ylabel("||T_U f||_p / ||f||_p (log)")
    ax.set_title("maximal transform growth")
    ax.legend()
    fig.tight_layout()
    path = outdir / "ratio_growth.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(str(path))

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for p in sorted({r.p for r in ok}):
        rows = sorted((r for r in ok if r.p == p), key=lambda r: r.m)
        ms = np.array([r.m for r in rows], dtype=float)
        ax.plot(ms, [r.norm_f / np.sqrt(r.m) for r in rows], "o-", label=f"p={p:g}")
    ax.set_xlabel("tree depth m")
    ax.set_ylabel("||f||_p / sqrt(m)")
    ax.set_title("test function norm growth")
    ax.legend()
    fig.tight_layout()
    path = outdir / "norm_growth.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(str(path))

    fig, ax = plt.subplots(figsize=(6, 4.5))
    seen = {}
    for r in ok:
        seen[r.m] = r.levelset_fraction
    ms = sorted(seen)
    ax.plot(ms, [seen[m] for m in ms], "o-", label="level-set fraction")
    ax.axhline(result.config.mass_floor, color="red", linestyle="--",
               label=f"required floor {result.config.mass_floor:g}")
    ax.set_xlabel("tree depth m")
    ax.set_ylabel(f"fraction of cells with max partial sum >= m * "
                  f"{result.config.level_factor:g}")
    ax.set_ylim(0, 1)
    ax.set_title("level-set bound")
    ax.legend()
    fig.tight_layout()
    path = outdir / "levelset.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(str(path))
    return written


def write_sweep_outputs(result, outdir, figures: bool = True) -> dict:
    """Write sweep.csv, report.json, summary.txt and figures under outdir."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_text = records_to_csv(result.records)
    (outdir / "sweep.csv").write_text(csv_text)
    payload = result.as_dict()
    (outdir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    (outdir / "summary.txt").write_text(sweep_summary_text(result))
    paths = {
        "csv": str(outdir / "sweep.csv"),
        "json": str(outdir / "report.json"),
        "summary": str(outdir / "summary.txt"),
    }
    if figures:
        paths["figures"] = render_sweep_figures(result, outdir / "figures")
    return paths


def write_verify_outputs(result, outdir) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "verify.json").write_text(
        json.dumps(result.as_dict(), indent=2, sort_keys=True, default=str)
    )
    lines = [f"verification: {'PASS' if result.passed else 'FAIL'}"]
    for name, check in result.checks.items():
        lines.append(f"  {name}: {'pass' if check.get('pass') else 'FAIL'}")
    (outdir / "verify.txt").write_text("\n".join(lines) + "\n")
    return {"json": str(outdir / "verify.json"), "text": str(outdir / "verify.txt")}
