//! Specialization, proximity, relatedness density and complexity metrics.
//!
//! Everything here is a pure function of an [`ActivityMatrix`] or of the
//! binary [`SpecializationMatrix`] derived from it. Complexity is computed
//! spectrally: ECI is the second eigenvector of the row-stochastic location
//! similarity `D⁻¹ M U⁻¹ Mᵀ`, obtained through its symmetric conjugate
//! `D^-½ M U⁻¹ Mᵀ D^-½` so a symmetric solver can be used.

use std::collections::{HashMap, VecDeque};

use indexmap::IndexSet;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{ActivityMatrix, Axes};
use crate::error::{Error, Result};
use crate::linalg::{pearson, standardize, symmetric_eigen};

/// Relative slack on the inclusive `RCA ≥ threshold` test. Absorbs the
/// rounding introduced by rescaling flows so specialization is invariant
/// under global rescaling.
pub const RCA_BOUNDARY_SLACK: f64 = 1e-12;

/// Minimum gap between the second and third eigenvalue for ECI/PCI to be
/// uniquely defined.
pub const SPECTRAL_GAP: f64 = 1e-10;

pub const SIGN_CONVENTION: &str =
    "corr(eci, diversity) >= 0; corr(pci, mean eci of specialized locations) >= 0";

/// Balassa revealed comparative advantage.
#[derive(Debug, Clone, PartialEq)]
pub struct RcaMatrix {
    axes: Axes,
    period: String,
    values: Array2<f64>,
}

impl RcaMatrix {
    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, location: &str, activity: &str) -> Option<f64> {
        let c = self.axes.locations.get_index_of(location)?;
        let p = self.axes.activities.get_index_of(activity)?;
        Some(self.values[[c, p]])
    }
}

pub fn rca(m: &ActivityMatrix) -> RcaMatrix {
    let x = m.values();
    let row: Array1<f64> = x.sum_axis(Axis(1));
    let col: Array1<f64> = x.sum_axis(Axis(0));
    let total: f64 = row.sum();
    let values = Array2::from_shape_fn(x.dim(), |(c, p)| (x[[c, p]] / row[c]) / (col[p] / total));
    RcaMatrix { axes: m.axes().clone(), period: m.period().to_string(), values }
}

/// Binary location×activity matrix: 1 where RCA reaches the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecializationMatrix {
    axes: Axes,
    period: String,
    threshold: f64,
    values: Array2<u8>,
}

impl SpecializationMatrix {
    pub fn from_binary(axes: Axes, threshold: f64, values: Array2<u8>) -> Result<Self> {
        if values.dim() != axes.shape() {
            return Err(Error::InvalidParameter(format!(
                "binary matrix shape {:?} does not match axes {:?}",
                values.dim(),
                axes.shape()
            )));
        }
        if values.iter().any(|v| *v > 1) {
            return Err(Error::InvalidParameter("specialization entries must be 0 or 1".into()));
        }
        Ok(Self { axes, period: String::new(), threshold, values })
    }

    pub fn with_period(mut self, period: impl Into<String>) -> Self {
        self.period = period.into();
        self
    }

    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    pub fn period(&self) -> &str {
        &self.period
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    pub fn is_specialized(&self, location: &str, activity: &str) -> Option<bool> {
        let c = self.axes.locations.get_index_of(location)?;
        let p = self.axes.activities.get_index_of(activity)?;
        Some(self.values[[c, p]] == 1)
    }

    /// Copy with the given cells of one location set to 1.
    pub fn with_added(&self, location: usize, activities: &[usize]) -> Self {
        let mut next = self.clone();
        for &p in activities {
            next.values[[location, p]] = 1;
        }
        next
    }

    pub fn to_csv(&self) -> String {
        long_csv(&self.axes.locations, &self.axes.activities, ("location", "activity"), |c, p| {
            f64::from(self.values[[c, p]])
        })
    }
}

pub fn binarize(r: &RcaMatrix, threshold: f64) -> Result<SpecializationMatrix> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "RCA threshold must be positive, got {threshold}"
        )));
    }
    let cut = threshold * (1.0 - RCA_BOUNDARY_SLACK);
    let values = r.values.mapv(|v| u8::from(v >= cut));
    Ok(SpecializationMatrix {
        axes: r.axes.clone(),
        period: r.period.clone(),
        threshold,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Margins {
    pub diversity: Vec<u32>,
    pub ubiquity: Vec<u32>,
}

pub fn margins(m: &SpecializationMatrix) -> Margins {
    let v = &m.values;
    Margins {
        diversity: v.rows().into_iter().map(|r| r.iter().map(|x| u32::from(*x)).sum()).collect(),
        ubiquity: v.columns().into_iter().map(|c| c.iter().map(|x| u32::from(*x)).sum()).collect(),
    }
}

/// Symmetric activity×activity similarity with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityNetwork {
    activities: IndexSet<String>,
    values: Array2<f64>,
}

impl ProximityNetwork {
    pub fn activities(&self) -> &IndexSet<String> {
        &self.activities
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, p: &str, q: &str) -> Option<f64> {
        let i = self.activities.get_index_of(p)?;
        let j = self.activities.get_index_of(q)?;
        Some(self.values[[i, j]])
    }

    pub fn to_csv(&self) -> String {
        long_csv(&self.activities, &self.activities, ("activity", "other"), |i, j| self.values[[i, j]])
    }
}

/// Minimum conditional probability of co-specialization:
/// `φ[p,q] = Σ_c M[c,p]·M[c,q] / max(k_p, k_q)`.
pub fn proximity(m: &SpecializationMatrix) -> ProximityNetwork {
    let mf = m.to_f64();
    let co = mf.t().dot(&mf);
    let ubiquity = co.diag().to_owned();
    let n = co.nrows();
    let values = Array2::from_shape_fn((n, n), |(p, q)| {
        let denom = ubiquity[p].max(ubiquity[q]);
        if p == q || denom == 0.0 {
            0.0
        } else {
            co[[p, q]] / denom
        }
    });
    ProximityNetwork { activities: m.axes.activities.clone(), values }
}

/// Relatedness density ω over (location, activity).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    axes: Axes,
    values: Array2<f64>,
}

impl DensityMatrix {
    pub fn from_parts(axes: Axes, values: Array2<f64>) -> Result<Self> {
        if values.dim() != axes.shape() {
            return Err(Error::InvalidParameter("density shape does not match axes".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("density values must lie in [0, 1]".into()));
        }
        Ok(Self { axes, values })
    }

    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, location: &str, activity: &str) -> Option<f64> {
        let c = self.axes.locations.get_index_of(location)?;
        let p = self.axes.activities.get_index_of(activity)?;
        Some(self.values[[c, p]])
    }

    pub fn to_csv(&self) -> String {
        long_csv(&self.axes.locations, &self.axes.activities, ("location", "activity"), |c, p| {
            self.values[[c, p]]
        })
    }
}

/// Density of one location row: `ω[p] = Σ_q active[q]·φ[p,q] / Σ_q φ[p,q]`,
/// zero for activities whose proximity row sums to zero.
pub fn density_row(active: &[bool], phi: &ProximityNetwork) -> Vec<f64> {
    let v = &phi.values;
    (0..v.nrows())
        .map(|p| {
            let row = v.row(p);
            let total: f64 = row.sum();
            if total == 0.0 {
                return 0.0;
            }
            let held: f64 = row.iter().zip(active).filter(|(_, a)| **a).map(|(x, _)| *x).sum();
            held / total
        })
        .collect()
}

pub fn relatedness_density(m: &SpecializationMatrix, phi: &ProximityNetwork) -> Result<DensityMatrix> {
    if m.axes.activities != phi.activities {
        return Err(Error::InvalidParameter(
            "specialization and proximity activity sets differ".into(),
        ));
    }
    let (nl, na) = m.axes.shape();
    let mut values = Array2::zeros((nl, na));
    for c in 0..nl {
        let active: Vec<bool> = m.values.row(c).iter().map(|x| *x == 1).collect();
        for (p, w) in density_row(&active, phi).into_iter().enumerate() {
            values[[c, p]] = w;
        }
    }
    Ok(DensityMatrix { axes: m.axes.clone(), values })
}

/// Standardized spectral complexity of locations (ECI) and activities (PCI).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScores {
    pub locations: IndexSet<String>,
    pub activities: IndexSet<String>,
    pub eci: Vec<f64>,
    pub pci: Vec<f64>,
    /// Second eigenvalue of the location similarity matrix.
    pub eigenvalue: f64,
    pub sign_convention: String,
}

impl ComplexityScores {
    pub fn eci_of(&self, location: &str) -> Option<f64> {
        self.locations.get_index_of(location).map(|i| self.eci[i])
    }

    pub fn pci_of(&self, activity: &str) -> Option<f64> {
        self.activities.get_index_of(activity).map(|i| self.pci[i])
    }
}

/// Connected components of the bipartite location–activity graph, each
/// listed by its location ids.
pub fn components(m: &SpecializationMatrix) -> Vec<Vec<String>> {
    let (nl, na) = m.axes.shape();
    let mut seen_loc = vec![false; nl];
    let mut seen_act = vec![false; na];
    let mut out = Vec::new();
    for start in 0..nl {
        if seen_loc[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen_loc[start] = true;
        while let Some(c) = queue.pop_front() {
            comp.push(c);
            for p in 0..na {
                if m.values[[c, p]] == 1 && !seen_act[p] {
                    seen_act[p] = true;
                    for c2 in 0..nl {
                        if m.values[[c2, p]] == 1 && !seen_loc[c2] {
                            seen_loc[c2] = true;
                            queue.push_back(c2);
                        }
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp.into_iter().map(|c| m.axes.location(c).to_string()).collect());
    }
    out
}

/// Second eigenvector of `diag(a)^-½ B diag(b)⁻¹ Bᵀ diag(a)^-½`, mapped back
/// to the row-stochastic matrix and standardized.
fn spectral_projection(b: &Array2<f64>, row_deg: &[f64], col_deg: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = b.nrows();
    let scaled = Array2::from_shape_fn(b.dim(), |(i, j)| b[[i, j]] / (row_deg[i].sqrt() * col_deg[j].sqrt()));
    let sim = scaled.dot(&scaled.t());
    let eig = symmetric_eigen(&sim);
    let second = eig.values[1];
    if n > 2 {
        let third = eig.values[2];
        if second - third < SPECTRAL_GAP {
            return Err(Error::DegenerateSpectrum { second, third });
        }
    }
    if n == 2 && second < SPECTRAL_GAP {
        // the second direction lies in the null space and carries no ordering
        return Err(Error::DegenerateSpectrum { second, third: 0.0 });
    }
    if eig.values[0] - second < SPECTRAL_GAP {
        return Err(Error::DegenerateSpectrum { second, third: eig.values[0] });
    }
    let mut raw: Vec<f64> = (0..n).map(|i| eig.vectors[[i, 1]] / row_deg[i].sqrt()).collect();
    share_within_patterns(b, &mut raw);
    let z = standardize(&raw).ok_or(Error::DegenerateSpectrum { second, third: second })?;
    Ok((z, second))
}

/// Rows with the same specialization pattern have equal scores in exact
/// arithmetic; replace each by its group mean so rounding cannot split ties.
fn share_within_patterns(b: &Array2<f64>, x: &mut [f64]) {
    let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for (i, row) in b.rows().into_iter().enumerate() {
        groups.entry(row.iter().map(|v| v.to_bits()).collect()).or_default().push(i);
    }
    for members in groups.values().filter(|m| m.len() > 1) {
        let mean = members.iter().map(|&i| x[i]).sum::<f64>() / members.len() as f64;
        members.iter().for_each(|&i| x[i] = mean);
    }
}

/// Flips `z` so that its correlation with `reference` is nonnegative. When
/// the correlation is undefined or zero, the clearly nonzero entry with the
/// lowest id is made positive.
fn orient(z: &mut [f64], reference: &[f64], ids: &IndexSet<String>) {
    let flip = match pearson(z, reference) {
        Some(r) if r.abs() > 1e-12 => r < 0.0,
        _ => (0..z.len())
            .filter(|&i| z[i].abs() > 1e-9)
            .min_by(|&a, &b| ids[a].cmp(&ids[b]))
            .is_some_and(|i| z[i] < 0.0),
    };
    if flip {
        z.iter_mut().for_each(|v| *v = -*v);
    }
}

pub fn eci_pci(m: &SpecializationMatrix) -> Result<ComplexityScores> {
    let (nl, na) = m.axes.shape();
    if nl < 2 || na < 2 {
        return Err(Error::InvalidParameter(format!(
            "complexity needs at least 2 locations and 2 activities, got {nl}×{na}"
        )));
    }
    let mg = margins(m);
    if let Some(c) = mg.diversity.iter().position(|d| *d == 0) {
        return Err(Error::InvalidParameter(format!(
            "location `{}` has no specializations",
            m.axes.location(c)
        )));
    }
    if let Some(p) = mg.ubiquity.iter().position(|u| *u == 0) {
        return Err(Error::InvalidParameter(format!(
            "activity `{}` has no specialized location",
            m.axes.activity(p)
        )));
    }
    let comps = components(m);
    if comps.len() > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    let mf = m.to_f64();
    let diversity: Vec<f64> = mg.diversity.iter().map(|d| f64::from(*d)).collect();
    let ubiquity: Vec<f64> = mg.ubiquity.iter().map(|u| f64::from(*u)).collect();

    let (mut eci, eigenvalue) = spectral_projection(&mf, &diversity, &ubiquity)?;
    orient(&mut eci, &diversity, &m.axes.locations);

    let (mut pci, _) = spectral_projection(&mf.t().to_owned(), &ubiquity, &diversity)?;
    let mean_eci: Vec<f64> = (0..na)
        .map(|p| (0..nl).map(|c| mf[[c, p]] * eci[c]).sum::<f64>() / ubiquity[p])
        .collect();
    orient(&mut pci, &mean_eci, &m.axes.activities);

    Ok(ComplexityScores {
        locations: m.axes.locations.clone(),
        activities: m.axes.activities.clone(),
        eci,
        pci,
        eigenvalue,
        sign_convention: SIGN_CONVENTION.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessScores {
    pub locations: IndexSet<String>,
    pub activities: IndexSet<String>,
    pub fitness: Vec<f64>,
    pub complexity: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Residual after each iteration.
    pub residuals: Vec<f64>,
}

pub const FITNESS_MAX_ITERS: usize = 1000;
pub const FITNESS_TOLERANCE: f64 = 1e-9;

/// Nonlinear Fitness–Complexity fixed point with mean normalization after
/// each half-step. Non-convergence is reported, not raised.
pub fn fitness_complexity(m: &SpecializationMatrix, max_iters: usize, tol: f64) -> Result<FitnessScores> {
    let mg = margins(m);
    if mg.diversity.contains(&0) || mg.ubiquity.contains(&0) {
        return Err(Error::InvalidParameter(
            "fitness needs every location and activity to hold a specialization".into(),
        ));
    }
    let (nl, na) = m.axes.shape();
    let v = &m.values;
    let mut fitness = vec![1.0; nl];
    let mut complexity = vec![1.0; na];
    let mut residuals = Vec::new();
    let mut converged = false;

    for _ in 0..max_iters {
        let mut f_next: Vec<f64> = (0..nl)
            .map(|c| (0..na).filter(|&p| v[[c, p]] == 1).map(|p| complexity[p]).sum())
            .collect();
        let mut q_next: Vec<f64> = (0..na)
            .map(|p| 1.0 / (0..nl).filter(|&c| v[[c, p]] == 1).map(|c| 1.0 / fitness[c]).sum::<f64>())
            .collect();
        normalize_mean(&mut f_next);
        normalize_mean(&mut q_next);
        let residual = fitness
            .iter()
            .zip(&f_next)
            .chain(complexity.iter().zip(&q_next))
            .map(|(old, new)| ((new - old) / old).abs())
            .fold(0.0, f64::max);
        fitness = f_next;
        complexity = q_next;
        residuals.push(residual);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    Ok(FitnessScores {
        locations: m.axes.locations.clone(),
        activities: m.axes.activities.clone(),
        fitness,
        complexity,
        iterations: residuals.len(),
        residual: residuals.last().copied().unwrap_or(0.0),
        converged,
        residuals,
    })
}

fn normalize_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v /= mean);
}

fn long_csv(
    rows: &IndexSet<String>,
    cols: &IndexSet<String>,
    header: (&str, &str),
    value: impl Fn(usize, usize) -> f64,
) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([header.0, header.1, "value"]).expect("in-memory csv write");
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            w.write_record([r.as_str(), c.as_str(), &value(i, j).to_string()])
                .expect("in-memory csv write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf8")
}
