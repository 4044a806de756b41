use serde::{Deserialize, Serialize};

/// Metrics for one object class; `None` where the class lacks the inputs
/// (e.g. no ground-truth masks for pixel metrics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub i_auroc: f64,
    pub p_auroc: Option<f64>,
    pub aupro: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub classes: Vec<ClassMetrics>,
    pub mean_i_auroc: f64,
    pub mean_p_auroc: Option<f64>,
    pub mean_aupro: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<_>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricReport {
    pub fn new(classes: Vec<ClassMetrics>) -> Self {
        let mean_i_auroc = mean_of(classes.iter().map(|c| Some(c.i_auroc))).unwrap_or(f64::NAN);
        let mean_p_auroc = mean_of(classes.iter().map(|c| c.p_auroc));
        let mean_aupro = mean_of(classes.iter().map(|c| c.aupro));
        Self {
            classes,
            mean_i_auroc,
            mean_p_auroc,
            mean_aupro,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_skip_nothing_and_require_all() {
        let r = MetricReport::new(vec![
            ClassMetrics {
                class: "a".into(),
                i_auroc: 0.5,
                p_auroc: Some(0.9),
                aupro: None,
            },
            ClassMetrics {
                class: "b".into(),
                i_auroc: 1.0,
                p_auroc: Some(0.7),
                aupro: Some(0.8),
            },
        ]);
        assert_eq!(r.mean_i_auroc, 0.75);
        assert!((r.mean_p_auroc.unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(r.mean_aupro, None);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), r);
    }
}
