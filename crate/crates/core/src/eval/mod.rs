//! Stitching, hydrological metrics, grouped tables and attention export.

mod attention;
mod lag;
mod metrics;
mod stitch;

pub use attention::{collect_attention, write_attention};
pub use lag::precip_discharge_lag_correlation;
pub use metrics::{evaluate, index_rows, metrics, write_metrics_csv, Grouping, MetricRow, Metrics};
pub use stitch::{forecast_windows, read_windows_csv, stitch, write_windows_csv, ForecastFrame, WindowForecast};
