//! I-AUROC, P-AUROC and AUPRO.

mod components;
mod pro;
mod report;
mod roc;

pub use components::connected_components;
pub use pro::{aupro, pro_curve, pro_curve_with, ProCurve, DEFAULT_FPR_LIMIT, MAX_THRESHOLDS};
pub use report::{ClassMetrics, MetricReport};
pub use roc::{auroc, pixel_auroc, roc_curve, RocCurve};
