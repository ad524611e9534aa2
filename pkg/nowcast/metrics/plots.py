"""
Static SVG charts of evaluation reports, rendered from a Jinja template
"""
from pathlib import Path
from typing import Dict, List, Mapping, Union

from jinja2 import Environment, StrictUndefined

from nowcast.exceptions import DatasetIOError
from nowcast.metrics.report import MetricsReport


CHART_WIDTH = 480

CHART_HEIGHT = 320

MARGIN = 48

MODE_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")

HORIZON_CHART_TEMPLATE = """\
<svg xmlns="http://www.w3.org/2000/svg" width="{{ width }}" height="{{ height }}" viewBox="0 0 {{ width }} {{ height }}">
  <title>{{ title }}</title>
  <rect x="0" y="0" width="{{ width }}" height="{{ height }}" fill="white"/>
  <line x1="{{ left }}" y1="{{ bottom }}" x2="{{ right }}" y2="{{ bottom }}" stroke="black"/>
  <line x1="{{ left }}" y1="{{ top }}" x2="{{ left }}" y2="{{ bottom }}" stroke="black"/>
  {% for tick in x_ticks %}
  <text x="{{ tick.x }}" y="{{ bottom + 16 }}" font-size="11" text-anchor="middle">{{ tick.label }}</text>
  {% endfor %}
  {% for tick in y_ticks %}
  <line x1="{{ left }}" y1="{{ tick.y }}" x2="{{ right }}" y2="{{ tick.y }}" stroke="#dddddd"/>
  <text x="{{ left - 6 }}" y="{{ tick.y + 4 }}" font-size="11" text-anchor="end">{{ tick.label }}</text>
  {% endfor %}
  <text x="{{ (left + right) / 2 }}" y="{{ height - 8 }}" font-size="12" text-anchor="middle">horizon (s)</text>
  <text x="14" y="{{ (top + bottom) / 2 }}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {{ (top + bottom) / 2 }})">{{ y_label }}</text>
  {% for series in series_list %}
  <polyline class="mode" data-mode="{{ series.mode }}" fill="none" stroke="{{ series.color }}" stroke-width="2" points="{{ series.points }}"/>
  <text x="{{ right - 4 }}" y="{{ top + 14 * loop.index }}" font-size="11" text-anchor="end" fill="{{ series.color }}">{{ series.mode }}</text>
  {% endfor %}
</svg>
"""


def _environment() -> Environment:
    return Environment(autoescape=True, trim_blocks=True, lstrip_blocks=True, undefined=StrictUndefined)


def render_horizon_chart(reports: Mapping[str, MetricsReport], threshold: float = 10.0) -> str:
    """
    Line chart of mAP at one threshold against forecasting horizon, one polyline per mode

    Keyword arguments:
    reports -- reports keyed by evaluation mode
    threshold -- the mAP threshold in centimeters to plot (default: 10)
    """
    left, right = MARGIN, CHART_WIDTH - MARGIN / 2

    top, bottom = MARGIN / 2, CHART_HEIGHT - MARGIN

    horizons = sorted({offset for report in reports.values() for offset in report.per_horizon})

    span = max(horizons[-1] - horizons[0], 1e-9) if horizons else 1.0

    def x_of(offset: float) -> float:
        return round(left + (offset - horizons[0]) / span * (right - left), 2)

    def y_of(fraction: float) -> float:
        return round(bottom - fraction * (bottom - top), 2)

    series_list: List[Dict] = []

    for index, (mode, report) in enumerate(reports.items()):
        points = [
            f"{x_of(offset)},{y_of(stats.map_at.get(threshold, 0.0))}"
            for offset, stats in sorted(report.per_horizon.items())
        ]

        series_list.append({
            "mode": mode,
            "color": MODE_COLORS[index % len(MODE_COLORS)],
            "points": " ".join(points),
        })

    template = _environment().from_string(HORIZON_CHART_TEMPLATE)

    return template.render(
        title=f"mAP@{threshold:g}cm by horizon",
        width=CHART_WIDTH,
        height=CHART_HEIGHT,
        left=left,
        right=right,
        top=top,
        bottom=bottom,
        x_ticks=[{"x": x_of(offset), "label": f"t+{offset:g}" if offset else "t"} for offset in horizons],
        y_ticks=[{"y": y_of(step / 4), "label": f"{step * 25}%"} for step in range(5)],
        y_label=f"mAP@{threshold:g}cm",
        series_list=series_list,
    )


def write_horizon_chart(reports: Mapping[str, MetricsReport], path: Union[str, Path], threshold: float = 10.0) -> Path:
    """
    Render the horizon chart to a file

    Keyword arguments:
    reports -- reports keyed by evaluation mode
    path -- destination .svg file
    threshold -- the mAP threshold in centimeters to plot (default: 10)
    """
    path = Path(path)

    try:
        path.write_text(render_horizon_chart(reports, threshold))

    except OSError as os_err:
        raise DatasetIOError(f"unable to write chart: {os_err.strerror}", path=str(path)) from os_err

    return path
