//! Insertion curves and the classifier-reinitialization sanity check.

mod blur;
mod insertion;
mod sanity;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

pub use blur::{blur_baseline, gaussian_kernel};
pub use insertion::{
    ascending_order, complementary_insertion_metric, descending_order, insertion_curve,
    insertion_metric, softmax, trapezoid_auc, InsertionCurve,
};
pub use sanity::{average_ranks, reinit_sanity_check, reinitialized_classifier, spearman};

use crate::error::{Error, Result};
use crate::imaging::AttributionMap;
use crate::network::Network;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Insertion Metric on the target label.
    Im,
    /// Complementary Insertion Metric on the other labels.
    Cim,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Im => "im",
            Metric::Cim => "cim",
        }
    }

    /// Scores `map` for an image given as raw `[0, 1]` values at network
    /// resolution.
    pub fn evaluate<T: Scalar>(
        self,
        net: &Network<T>,
        image: &Tensor<T>,
        map: &AttributionMap,
        target: usize,
        other_labels: &[usize],
        cfg: &MetricConfig,
    ) -> Result<InsertionCurve> {
        match self {
            Metric::Im => insertion_metric(net, image, map, target, cfg),
            Metric::Cim => {
                complementary_insertion_metric(net, image, map, target, other_labels, cfg)
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "im" => Ok(Metric::Im),
            "cim" => Ok(Metric::Cim),
            other => Err(Error::arg(format!(
                "unknown metric '{other}' (expected im or cim)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub steps: usize,
    /// Gaussian blur sigma in pixels for the insertion baseline.
    pub blur_sigma: f64,
    /// Kernel half-width; `None` means `round(2·sigma)`.
    pub blur_half_width: Option<usize>,
    /// Seed of the shuffle that breaks attribution ties.
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            blur_sigma: 5.0,
            blur_half_width: None,
            seed: 0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::arg("metric steps must be at least 1"));
        }
        if !self.blur_sigma.is_finite() || self.blur_sigma <= 0.0 {
            return Err(Error::arg("blur sigma must be positive"));
        }
        Ok(())
    }

    pub fn half_width(&self) -> usize {
        self.blur_half_width
            .unwrap_or_else(|| (2.0 * self.blur_sigma).round() as usize)
    }
}

/// `fraction,probability` rows.
pub fn write_curve_csv(curve: &InsertionCurve, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "fraction,probability")?;
    for (f, p) in curve.fractions.iter().zip(&curve.probabilities) {
        writeln!(out, "{f},{p:e}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub image_id: String,
    pub method: String,
    pub metric: String,
    pub auc: f64,
}

/// `image_id,method,metric,auc` rows.
pub fn write_summary_csv(rows: &[SummaryRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "image_id,method,metric,auc")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.image_id, r.method, r.metric, r.auc)?;
    }
    Ok(())
}
