//! Relatedness–value diagrams: quadrant labels, the strategic frontier and
//! the location-view dual.

use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::data::IndicatorVector;
use crate::error::{Error, Result};
use crate::linalg::{pearson, standardize};
use crate::metrics::{ComplexityScores, DensityMatrix, SpecializationMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Pci,
    Pgi,
    Pei,
    Custom,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Pci => "pci",
            ValueKind::Pgi => "pgi",
            ValueKind::Pei => "pei",
            ValueKind::Custom => "custom",
        })
    }
}

impl std::str::FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pci" => Ok(Self::Pci),
            "pgi" => Ok(Self::Pgi),
            "pei" => Ok(Self::Pei),
            "custom" => Ok(Self::Custom),
            _ => Err(Error::InvalidParameter(format!("unknown value kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

impl Orientation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Orientation::HigherIsBetter => v,
            Orientation::LowerIsBetter => -v,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::HigherIsBetter => Orientation::LowerIsBetter,
            Orientation::LowerIsBetter => Orientation::HigherIsBetter,
        }
    }
}

/// Per-activity score used on the value axis of a diagram. Activities
/// without a defined score are `None` and never become candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityValueVector {
    pub activities: IndexSet<String>,
    pub values: Vec<Option<f64>>,
    pub kind: ValueKind,
    pub orientation: Orientation,
    /// Activities left out because no location is specialized in them.
    pub excluded: Vec<String>,
}

impl ActivityValueVector {
    pub fn custom(
        activities: IndexSet<String>,
        values: Vec<f64>,
        orientation: Orientation,
    ) -> Result<Self> {
        if activities.len() != values.len() {
            return Err(Error::InvalidParameter("value vector length mismatch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("activity values must be finite".into()));
        }
        Ok(Self {
            activities,
            values: values.into_iter().map(Some).collect(),
            kind: ValueKind::Custom,
            orientation,
            excluded: Vec::new(),
        })
    }

    pub fn pci(scores: &ComplexityScores) -> Self {
        Self {
            activities: scores.activities.clone(),
            values: scores.pci.iter().copied().map(Some).collect(),
            kind: ValueKind::Pci,
            orientation: Orientation::HigherIsBetter,
            excluded: Vec::new(),
        }
    }

    pub fn get(&self, activity: &str) -> Option<f64> {
        self.activities.get_index_of(activity).and_then(|i| self.values[i])
    }

    /// Same scores with the sign and orientation both flipped.
    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.map(|x| -x)).collect(),
            orientation: self.orientation.flipped(),
            ..self.clone()
        }
    }
}

/// Specialization-weighted mean of a location indicator per activity,
/// before z-scoring. `None` for activities nobody is specialized in.
pub fn raw_activity_value(m: &SpecializationMatrix, ind: &IndicatorVector) -> Result<Vec<Option<f64>>> {
    let axes = m.axes();
    let values = m.values();
    let mut needed = vec![false; axes.locations.len()];
    for ((c, _), x) in values.indexed_iter() {
        if *x == 1 {
            needed[c] = true;
        }
    }
    let mut indicator = Vec::with_capacity(needed.len());
    for (c, need) in needed.iter().enumerate() {
        let id = axes.location(c);
        match ind.get(id) {
            Some(v) => indicator.push(v),
            None if *need => return Err(Error::MissingIndicator(id.to_string())),
            None => indicator.push(0.0),
        }
    }
    Ok(values
        .columns()
        .into_iter()
        .map(|col| {
            let (sum, count) = col
                .iter()
                .zip(&indicator)
                .filter(|(x, _)| **x == 1)
                .fold((0.0, 0u32), |(s, n), (_, v)| (s + v, n + 1));
            (count > 0).then(|| sum / f64::from(count))
        })
        .collect())
}

/// PGI/PEI-style activity scores: the mean indicator of an activity's
/// specialized locations, z-scored across activities. Lower is better.
pub fn activity_value(
    m: &SpecializationMatrix,
    ind: &IndicatorVector,
    kind: ValueKind,
) -> Result<ActivityValueVector> {
    if !matches!(kind, ValueKind::Pgi | ValueKind::Pei) {
        return Err(Error::InvalidParameter(format!(
            "indicator-based values support pgi and pei, not {kind}"
        )));
    }
    let raw = raw_activity_value(m, ind)?;
    let present: Vec<f64> = raw.iter().flatten().copied().collect();
    let z = standardize(&present).ok_or_else(|| {
        Error::InvalidParameter("indicator-based activity values are constant; cannot z-score".into())
    })?;
    let mut z = z.into_iter();
    let activities = m.axes().activities.clone();
    let excluded = raw
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(p, _)| activities[p].clone())
        .collect();
    let values = raw.iter().map(|v| v.and_then(|_| z.next())).collect();
    Ok(ActivityValueVector {
        activities,
        values,
        kind,
        orientation: Orientation::LowerIsBetter,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    LetItBe,
    WishYouWereHere,
    LongRoadAhead,
    StuckInTheMud,
}

impl Quadrant {
    pub fn classify(related: bool, desirable: bool) -> Self {
        match (related, desirable) {
            (true, true) => Quadrant::LetItBe,
            (false, true) => Quadrant::WishYouWereHere,
            (true, false) => Quadrant::LongRoadAhead,
            (false, false) => Quadrant::StuckInTheMud,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::LetItBe => "let_it_be",
            Quadrant::WishYouWereHere => "wish_you_were_here",
            Quadrant::LongRoadAhead => "long_road_ahead",
            Quadrant::StuckInTheMud => "stuck_in_the_mud",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantCounts {
    pub let_it_be: usize,
    pub wish_you_were_here: usize,
    pub long_road_ahead: usize,
    pub stuck_in_the_mud: usize,
}

impl QuadrantCounts {
    fn add(&mut self, q: Quadrant) {
        match q {
            Quadrant::LetItBe => self.let_it_be += 1,
            Quadrant::WishYouWereHere => self.wish_you_were_here += 1,
            Quadrant::LongRoadAhead => self.long_road_ahead += 1,
            Quadrant::StuckInTheMud => self.stuck_in_the_mud += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.let_it_be + self.wish_you_were_here + self.long_road_ahead + self.stuck_in_the_mud
    }
}

/// Quadrant cut-offs, in the units of ω and of the raw value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub relatedness: f64,
    pub value: f64,
}

/// Explicit cut-offs; `None` falls back to the median candidate ω and to 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub relatedness: Option<f64>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Pearson correlation between ω and the oriented value over candidates.
    pub corr: Option<f64>,
    pub counts: QuadrantCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityPoint {
    pub activity: String,
    pub omega: f64,
    pub value: f64,
    pub specialized: bool,
    pub quadrant: Option<Quadrant>,
    pub on_frontier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierDiagram {
    pub location: String,
    pub value_kind: ValueKind,
    pub orientation: Orientation,
    pub thresholds: Thresholds,
    pub points: Vec<ActivityPoint>,
    pub summary: Summary,
}

impl FrontierDiagram {
    pub fn candidates(&self) -> impl Iterator<Item = &ActivityPoint> {
        self.points.iter().filter(|p| !p.specialized)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["activity", "omega", "value", "specialized", "quadrant", "on_frontier"])
            .expect("in-memory csv write");
        for p in &self.points {
            w.write_record([
                p.activity.clone(),
                p.omega.to_string(),
                p.value.to_string(),
                p.specialized.to_string(),
                p.quadrant.map(|q| q.as_str().to_string()).unwrap_or_default(),
                p.on_frontier.to_string(),
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf8")
    }
}

/// Indices of the Pareto-maximal points under (maximize relatedness,
/// maximize value). Identical points are all kept. Runs in O(n log n).
pub fn strategic_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b].0.total_cmp(&points[a].0).then(points[b].1.total_cmp(&points[a].1))
    });
    let mut out = Vec::new();
    // best value among points with strictly greater relatedness
    let mut best_above = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let omega = points[order[i]].0;
        let group_end = order[i..].iter().position(|&k| points[k].0 != omega).map_or(order.len(), |n| i + n);
        let group_max = points[order[i]].1;
        if group_max > best_above {
            out.extend(order[i..group_end].iter().copied().filter(|&k| points[k].1 == group_max));
        }
        best_above = best_above.max(group_max);
        i = group_end;
    }
    out.sort_unstable();
    out
}

fn median(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

struct RawPoint {
    id: String,
    omega: f64,
    value: f64,
    specialized: bool,
}

struct Layout {
    thresholds: Thresholds,
    quadrants: Vec<Option<Quadrant>>,
    on_frontier: Vec<bool>,
    summary: Summary,
}

fn layout(points: &[RawPoint], orientation: Orientation, policy: ThresholdPolicy) -> Layout {
    let candidates: Vec<usize> = (0..points.len()).filter(|&i| !points[i].specialized).collect();
    let omegas: Vec<f64> = candidates.iter().map(|&i| points[i].omega).collect();
    let oriented: Vec<f64> = candidates.iter().map(|&i| orientation.apply(points[i].value)).collect();
    let thresholds = Thresholds {
        relatedness: policy.relatedness.or_else(|| median(&omegas)).unwrap_or(0.0),
        value: policy.value.unwrap_or(0.0),
    };
    let value_cut = orientation.apply(thresholds.value);

    let mut quadrants = vec![None; points.len()];
    let mut counts = QuadrantCounts::default();
    for (k, &i) in candidates.iter().enumerate() {
        let q = Quadrant::classify(omegas[k] >= thresholds.relatedness, oriented[k] >= value_cut);
        counts.add(q);
        quadrants[i] = Some(q);
    }

    let cloud: Vec<(f64, f64)> = omegas.iter().copied().zip(oriented.iter().copied()).collect();
    let mut on_frontier = vec![false; points.len()];
    for k in strategic_frontier(&cloud) {
        on_frontier[candidates[k]] = true;
    }

    let corr = if candidates.len() >= 3 { pearson(&omegas, &oriented) } else { None };
    Layout { thresholds, quadrants, on_frontier, summary: Summary { corr, counts } }
}

/// Relatedness–value diagram for one location. Specialized activities are
/// included for context but get no quadrant and are never on the frontier.
pub fn frontier_diagram(
    location: &str,
    omega: &DensityMatrix,
    m: &SpecializationMatrix,
    values: &ActivityValueVector,
    policy: ThresholdPolicy,
) -> Result<FrontierDiagram> {
    let c = omega.axes().location_index(location)?;
    let mc = m.axes().location_index(location)?;
    let mut raw = Vec::new();
    for (p, id) in omega.axes().activities.iter().enumerate() {
        let Some(value) = values.get(id) else { continue };
        let specialized = m
            .axes()
            .activities
            .get_index_of(id)
            .is_some_and(|j| m.values()[[mc, j]] == 1);
        raw.push(RawPoint { id: id.clone(), omega: omega.values()[[c, p]], value, specialized });
    }
    let l = layout(&raw, values.orientation, policy);
    let points = raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| ActivityPoint {
            activity: r.id,
            omega: r.omega,
            value: r.value,
            specialized: r.specialized,
            quadrant: l.quadrants[i],
            on_frontier: l.on_frontier[i],
        })
        .collect();
    Ok(FrontierDiagram {
        location: location.to_string(),
        value_kind: values.kind,
        orientation: values.orientation,
        thresholds: l.thresholds,
        points,
        summary: l.summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationPoint {
    pub location: String,
    pub omega: f64,
    pub value: f64,
    pub specialized: bool,
    pub quadrant: Option<Quadrant>,
    pub on_frontier: bool,
}

/// Dual view for one activity: every location placed by its ω for the
/// activity and its ECI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationDiagram {
    pub activity: String,
    pub thresholds: Thresholds,
    pub points: Vec<LocationPoint>,
    pub summary: Summary,
    /// Non-specialized locations by descending ω (ties by id).
    pub candidates: Vec<String>,
}

pub fn location_diagram(
    activity: &str,
    omega: &DensityMatrix,
    m: &SpecializationMatrix,
    scores: &ComplexityScores,
    policy: ThresholdPolicy,
) -> Result<LocationDiagram> {
    let p = omega.axes().activity_index(activity)?;
    let mp = m.axes().activity_index(activity)?;
    let mut raw = Vec::new();
    for (c, id) in omega.axes().locations.iter().enumerate() {
        let Some(value) = scores.eci_of(id) else { continue };
        let specialized = m
            .axes()
            .locations
            .get_index_of(id)
            .is_some_and(|i| m.values()[[i, mp]] == 1);
        raw.push(RawPoint { id: id.clone(), omega: omega.values()[[c, p]], value, specialized });
    }
    let l = layout(&raw, Orientation::HigherIsBetter, policy);
    let mut candidates: Vec<(&str, f64)> =
        raw.iter().filter(|r| !r.specialized).map(|r| (r.id.as_str(), r.omega)).collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let candidates = candidates.into_iter().map(|(id, _)| id.to_string()).collect();
    let points = raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| LocationPoint {
            location: r.id,
            omega: r.omega,
            value: r.value,
            specialized: r.specialized,
            quadrant: l.quadrants[i],
            on_frontier: l.on_frontier[i],
        })
        .collect();
    Ok(LocationDiagram {
        activity: activity.to_string(),
        thresholds: l.thresholds,
        points,
        summary: l.summary,
        candidates,
    })
}
