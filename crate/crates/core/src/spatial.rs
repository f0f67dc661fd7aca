//! Geographic layer: neighbor-presence density, complexity gradients across
//! borders, and entry-lift diagnostics for relatedness signals.

use indexmap::IndexSet;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Axes, EntryExitRecord, SpatialGraph};
use crate::error::{Error, Result};
use crate::metrics::{ComplexityScores, DensityMatrix, SpecializationMatrix};

/// Weighted share of a location's spatial neighbors specialized in each
/// activity. Rows of locations without usable neighbors are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoDensityMatrix {
    axes: Axes,
    values: Array2<f64>,
    defined: Vec<bool>,
    /// Ids present in only one of the specialization matrix and the graph.
    pub unmatched: Vec<String>,
}

impl GeoDensityMatrix {
    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn is_defined(&self, location: &str) -> bool {
        self.axes.locations.get_index_of(location).is_some_and(|c| self.defined[c])
    }

    pub fn get(&self, location: &str, activity: &str) -> Option<f64> {
        let c = self.axes.locations.get_index_of(location)?;
        let p = self.axes.activities.get_index_of(activity)?;
        self.defined[c].then(|| self.values[[c, p]])
    }

    /// Long-format CSV; undefined rows are omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,activity,value\n");
        for (c, loc) in self.axes.locations.iter().enumerate() {
            if !self.defined[c] {
                continue;
            }
            for (p, act) in self.axes.activities.iter().enumerate() {
                out.push_str(&format!("{loc},{act},{}\n", self.values[[c, p]]));
            }
        }
        out
    }
}

fn unmatched(a: &IndexSet<String>, b: &IndexSet<String>) -> Vec<String> {
    let mut d: Vec<String> = a.symmetric_difference(b).cloned().collect();
    d.sort();
    d
}

/// `g[c,p] = Σ w(c,c′)·M[c′,p] / Σ w(c,c′)` over neighbors `c′` that appear
/// in `m`.
pub fn neighbor_density(m: &SpecializationMatrix, geo: &SpatialGraph) -> GeoDensityMatrix {
    let axes = m.axes().clone();
    let (nl, na) = axes.shape();
    let spec = m.values();
    let rows: Vec<Option<Vec<f64>>> = (0..nl)
        .into_par_iter()
        .map(|c| {
            let neighbors: Vec<(usize, f64)> = geo
                .neighbors(axes.location(c))
                .filter_map(|(n, w)| axes.locations.get_index_of(n).map(|j| (j, w)))
                .collect();
            let total: f64 = neighbors.iter().map(|(_, w)| w).sum();
            if total <= 0.0 {
                return None;
            }
            let row = (0..na)
                .map(|p| {
                    let held: f64 = neighbors.iter().filter(|(j, _)| spec[[*j, p]] == 1).map(|(_, w)| w).sum();
                    (held / total).min(1.0)
                })
                .collect();
            Some(row)
        })
        .collect();

    let mut values = Array2::zeros((nl, na));
    let mut defined = vec![false; nl];
    for (c, row) in rows.into_iter().enumerate() {
        if let Some(row) = row {
            defined[c] = true;
            for (p, v) in row.into_iter().enumerate() {
                values[[c, p]] = v;
            }
        }
    }
    let unmatched = unmatched(&axes.locations, geo.locations());
    GeoDensityMatrix { axes, values, defined, unmatched }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub location: String,
    pub eci: f64,
    /// `max(ECI_neighbor − ECI_self)`; `None` for isolated locations.
    pub max_gradient: Option<f64>,
    /// Weight-averaged `ECI_neighbor − ECI_self`.
    pub mean_gradient: Option<f64>,
    pub neighbors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    pub gradients: Vec<Gradient>,
    pub unmatched: Vec<String>,
}

impl GradientVector {
    pub fn get(&self, location: &str) -> Option<&Gradient> {
        self.gradients.iter().find(|g| g.location == location)
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("location,eci,max_gradient,mean_gradient,neighbors\n");
        for g in &self.gradients {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                g.location,
                g.eci,
                cell(g.max_gradient),
                cell(g.mean_gradient),
                g.neighbors
            ));
        }
        out
    }
}

/// Neighbor ECI differences for every scored location. Neighbors without a
/// score are ignored and listed in `unmatched`.
pub fn complexity_gradient(scores: &ComplexityScores, geo: &SpatialGraph) -> GradientVector {
    let gradients = scores
        .locations
        .iter()
        .zip(&scores.eci)
        .map(|(loc, &own)| {
            let diffs: Vec<(f64, f64)> = geo
                .neighbors(loc)
                .filter_map(|(n, w)| scores.eci_of(n).map(|e| (e - own, w)))
                .collect();
            let max_gradient = diffs.iter().map(|(d, _)| *d).reduce(f64::max);
            let total: f64 = diffs.iter().map(|(_, w)| w).sum();
            let mean_gradient = if diffs.is_empty() {
                None
            } else if total > 0.0 {
                Some(diffs.iter().map(|(d, w)| d * w).sum::<f64>() / total)
            } else {
                Some(diffs.iter().map(|(d, _)| d).sum::<f64>() / diffs.len() as f64)
            };
            Gradient { location: loc.clone(), eci: own, max_gradient, mean_gradient, neighbors: diffs.len() }
        })
        .collect();
    GradientVector { gradients, unmatched: unmatched(&scores.locations, geo.locations()) }
}

/// A (location, activity) signal evaluated at the baseline period.
pub trait Signal {
    fn name(&self) -> &str;
    fn value(&self, location: &str, activity: &str) -> Option<f64>;
}

impl Signal for DensityMatrix {
    fn name(&self) -> &str {
        "omega"
    }

    fn value(&self, location: &str, activity: &str) -> Option<f64> {
        self.get(location, activity)
    }
}

impl Signal for GeoDensityMatrix {
    fn name(&self) -> &str {
        "geo_density"
    }

    fn value(&self, location: &str, activity: &str) -> Option<f64> {
        self.get(location, activity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftStatus {
    Defined,
    /// Entries carry signal while non-entries average zero.
    Infinite,
    /// No entries, no non-entries, or a zero signal everywhere that entered.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub lo: f64,
    pub hi: f64,
    pub entry_rate: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub signal: String,
    /// Finite lift, or `None` with the reason in `status`.
    pub lift: Option<f64>,
    pub status: LiftStatus,
    pub mean_entries: Option<f64>,
    pub mean_non_entries: Option<f64>,
    pub entries: usize,
    pub non_entries: usize,
    /// Candidates where the signal is undefined.
    pub excluded: usize,
    pub deciles: Vec<Quantile>,
}

pub const DEFAULT_QUANTILES: usize = 10;

/// Mean signal among entries over mean among non-entries, across the
/// candidate universe (cells unspecialized at the baseline), plus entry
/// rates per equal-count signal bin.
pub fn entry_lift(rec: &EntryExitRecord, signal: &dyn Signal, quantiles: usize) -> Result<LiftReport> {
    if quantiles == 0 {
        return Err(Error::InvalidParameter("quantile count must be at least 1".into()));
    }
    let base = &rec.baseline;
    let axes = base.axes();
    let mut candidates: Vec<(f64, bool)> = Vec::new();
    let mut excluded = 0;
    for (c, loc) in axes.locations.iter().enumerate() {
        for (p, act) in axes.activities.iter().enumerate() {
            if base.values()[[c, p]] == 1 {
                continue;
            }
            match signal.value(loc, act) {
                Some(v) if v.is_finite() => {
                    candidates.push((v, rec.entries.contains(&(loc.clone(), act.clone()))));
                }
                _ => excluded += 1,
            }
        }
    }

    let mean = |entered: bool| -> Option<f64> {
        let xs: Vec<f64> = candidates.iter().filter(|(_, e)| *e == entered).map(|(v, _)| *v).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    let (mean_entries, mean_non_entries) = (mean(true), mean(false));
    let constant = candidates.windows(2).all(|w| w[0].0 == w[1].0);
    let (lift, status) = match (mean_entries, mean_non_entries) {
        (Some(_), Some(_)) if constant => (Some(1.0), LiftStatus::Defined),
        (Some(e), Some(n)) if n > 0.0 => (Some(e / n), LiftStatus::Defined),
        (Some(e), Some(_)) if e > 0.0 => (None, LiftStatus::Infinite),
        _ => (None, LiftStatus::Undefined),
    };

    // equal-count bins by signal rank; ties keep candidate order
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = candidates.len();
    let deciles = (0..quantiles)
        .filter_map(|k| {
            let bin = &candidates[k * n / quantiles..(k + 1) * n / quantiles];
            let first = bin.first()?;
            let hits = bin.iter().filter(|(_, e)| *e).count();
            Some(Quantile {
                lo: first.0,
                hi: bin[bin.len() - 1].0,
                entry_rate: hits as f64 / bin.len() as f64,
                count: bin.len(),
            })
        })
        .collect();

    let entries = candidates.iter().filter(|(_, e)| *e).count();
    Ok(LiftReport {
        signal: signal.name().to_string(),
        lift,
        status,
        mean_entries,
        mean_non_entries,
        entries,
        non_entries: n - entries,
        excluded,
        deciles,
    })
}
