from nowcast.metrics.metrics import (
    DEFAULT_THRESHOLDS_CM,
    ErrorAccumulator,
    add_metric,
    frame_errors,
    map_metric,
)
from nowcast.metrics.plots import render_horizon_chart, write_horizon_chart
from nowcast.metrics.report import (
    HorizonResults,
    MetricStats,
    MetricsReport,
    horizon_report,
    mode_gap,
    write_report_files,
)
