"""Render error-versus-step-size plots from convergence sweep CSVs.

Each input CSV becomes one panel.  Data rows follow the solver harness
schema (tau, error_l2, error_hs, scheme, ...); '#'-prefixed metadata rows
carry the least-squares slopes, which are annotated verbatim rather than
recomputed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_REQUIRED = ("tau", "scheme")


class FiguresError(Exception):
    """Unusable input CSV or figure specification."""


@dataclass(frozen=True)
class Series:
    scheme: str
    label: str
    taus: tuple[float, ...]
    errors: tuple[float, ...]
    slope: float | None


@dataclass(frozen=True)
class FigureSpec:
    """One figure: a row of panels, one per input CSV.

    labels maps scheme names to legend text; unlisted schemes keep their
    own name.  reference_slopes draws dashed tau^p guide lines.  xlim and
    ylim, when given, apply to every panel.
    """

    csv_paths: tuple[str, ...]
    output: str
    labels: dict[str, str] = field(default_factory=dict)
    titles: tuple[str, ...] = ()
    reference_slopes: tuple[float, ...] = (1.0, 2.0)
    error_column: str = "error_l2"
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not self.csv_paths:
            raise FiguresError("no input CSV paths")
        if self.titles and len(self.titles) != len(self.csv_paths):
            raise FiguresError("titles must match csv_paths one to one")
        if not self.output.endswith((".png", ".svg")):
            raise FiguresError("output must be a .png or .svg path")


def load_spec(path: str) -> FigureSpec:
    """Read a FigureSpec from a JSON file."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return FigureSpec(
            csv_paths=tuple(doc["csv_paths"]),
            output=doc["output"],
            labels=dict(doc.get("labels", {})),
            titles=tuple(doc.get("titles", ())),
            reference_slopes=tuple(doc.get("reference_slopes", (1.0, 2.0))),
            error_column=doc.get("error_column", "error_l2"),
            xlim=tuple(doc["xlim"]) if "xlim" in doc else None,
            ylim=tuple(doc["ylim"]) if "ylim" in doc else None,
        )
    except KeyError as exc:
        raise FiguresError(f"spec file missing key {exc}") from exc


def _read_csv(path: str) -> tuple[list[dict], dict[str, float]]:
    rows: list[dict] = []
    slopes: dict[str, float] = {}
    header: list[str] | None = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split(",")
                if parts[0] == "slope" and len(parts) == 3:
                    slopes[parts[1]] = float(parts[2])
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(dict(zip(header, line.split(","))))
    return rows, slopes


def _panel_series(path: str, spec: FigureSpec) -> list[Series]:
    rows, slopes = _read_csv(path)
    if not rows:
        raise FiguresError(f"{path}: no data rows")
    missing = [c for c in (*_REQUIRED, spec.error_column)
               if c not in rows[0]]
    if missing:
        raise FiguresError(f"{path}: missing columns {missing}")
    grouped: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        grouped.setdefault(row["scheme"], []).append(
            (float(row["tau"]), float(row[spec.error_column])))
    out: list[Series] = []
    slope_key = "{}:hs" if spec.error_column == "error_hs" else "{}"
    for scheme in sorted(grouped):
        pts = sorted(grouped[scheme])
        slope = slopes.get(slope_key.format(scheme), slopes.get(scheme))
        out.append(Series(scheme, spec.labels.get(scheme, scheme),
                          tuple(t for t, _ in pts),
                          tuple(e for _, e in pts), slope))
    domains = {s.taus for s in out}
    if len(domains) != 1:
        raise FiguresError(f"{path}: series do not share the tau domain")
    return out


def _draw_panel(ax, series: list[Series], spec: FigureSpec,
                title: str | None) -> dict[str, float]:
    annotated: dict[str, float] = {}
    for s in series:
        label = s.label
        if s.slope is not None:
            label = f"{label} (slope {s.slope:g})"
            annotated[s.scheme] = s.slope
        ax.loglog(s.taus, s.errors, marker="o", label=label)
    tmin, tmax = min(series[0].taus), max(series[0].taus)
    anchor = min(min(s.errors) for s in series)
    for i, p in enumerate(spec.reference_slopes):
        scale = anchor * 0.5 ** (i + 1)
        ax.loglog([tmin, tmax],
                  [scale * (tmin / tmin) ** p, scale * (tmax / tmin) ** p],
                  linestyle="--", color="grey",
                  label=f"slope {p:g}")
    if spec.xlim:
        ax.set_xlim(*spec.xlim)
    if spec.ylim:
        ax.set_ylim(*spec.ylim)
    ax.set_xlabel(r"step size $\tau$")
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return annotated


def render(spec: FigureSpec) -> dict[str, dict[str, float]]:
    """Write the figure and return the slope annotations per panel.

    The returned mapping has one entry per CSV path, giving the slope
    annotated for each scheme; values are taken from the CSV metadata.
    """
    panels = [_panel_series(p, spec) for p in spec.csv_paths]
    plt.rcParams["svg.hashsalt"] = "figures"
    fig, axes = plt.subplots(1, len(panels),
                             figsize=(5.0 * len(panels), 4.0), dpi=110)
    if len(panels) == 1:
        axes = [axes]
    annotations: dict[str, dict[str, float]] = {}
    for i, (path, series) in enumerate(zip(spec.csv_paths, panels)):
        title = spec.titles[i] if spec.titles else None
        annotations[path] = _draw_panel(axes[i], series, spec, title)
    fig.tight_layout()
    fig.savefig(spec.output, metadata={"Date": None}
                if spec.output.endswith(".svg") else None)
    plt.close(fig)
    return annotations
