//! Queries over a loaded workspace. The CLI and the HTTP handlers both call
//! these functions and serialize with [`crate::render`], which keeps their
//! outputs byte-identical.

use std::collections::BTreeSet;

use ecp_core::data::snapshot_diff;
use ecp_core::frontier::{
    activity_value, frontier_diagram, location_diagram, ActivityValueVector, FrontierDiagram,
    LocationDiagram, ThresholdPolicy, ValueKind,
};
use ecp_core::data::IndicatorKind;
use ecp_core::metrics::{
    density_row, eci_pci, proximity, relatedness_density, DensityMatrix, SpecializationMatrix,
};
use ecp_core::spatial::{complexity_gradient, entry_lift, neighbor_density, GradientVector, LiftReport, Signal};
use ecp_core::strategy::{portfolio_split, EvaluationReport, PortfolioSplit, Schedule, StrategyInstance};
use serde::{Deserialize, Serialize};

use crate::error::{Kind, Result, ServiceError};
use crate::workspace::Workspace;

fn value_vector_for(
    ws: &Workspace,
    m: &SpecializationMatrix,
    scores: &ecp_core::metrics::ComplexityScores,
    kind: ValueKind,
) -> Result<ActivityValueVector> {
    let wanted = match kind {
        ValueKind::Pci => return Ok(ActivityValueVector::pci(scores)),
        ValueKind::Pgi => IndicatorKind::Gini,
        ValueKind::Pei => IndicatorKind::EmissionIntensity,
        ValueKind::Custom => {
            return Err(ServiceError::invalid("custom value vectors are not stored in workspaces"));
        }
    };
    match &ws.indicators {
        Some(ind) if ind.kind == wanted => Ok(activity_value(m, ind, kind)?),
        _ => Err(ServiceError::new(
            Kind::MissingInput,
            "missing_indicator",
            format!("value `{kind}` needs {} indicators; ingest them with --indicators", kind_label(wanted)),
        )),
    }
}

fn kind_label(kind: IndicatorKind) -> &'static str {
    match kind {
        IndicatorKind::Gini => "gini",
        IndicatorKind::EmissionIntensity => "emission_intensity",
        IndicatorKind::Other => "other",
    }
}

pub fn value_vector(ws: &Workspace, kind: ValueKind) -> Result<ActivityValueVector> {
    value_vector_for(ws, &ws.specialization, &ws.scores, kind)
}

pub fn frontier(ws: &Workspace, location: &str, kind: ValueKind, policy: ThresholdPolicy) -> Result<FrontierDiagram> {
    ws.specialization.axes().location_index(location)?;
    let values = value_vector(ws, kind)?;
    Ok(frontier_diagram(location, &ws.density, &ws.specialization, &values, policy)?)
}

pub fn locations(ws: &Workspace, activity: &str, policy: ThresholdPolicy) -> Result<LocationDiagram> {
    Ok(location_diagram(activity, &ws.density, &ws.specialization, &ws.scores, policy)?)
}

pub fn gradients(ws: &Workspace) -> Result<GradientVector> {
    let geo = ws.geo.as_ref().ok_or_else(|| {
        ServiceError::new(Kind::MissingInput, "missing_adjacency", "workspace has no spatial adjacency; ingest one with --adjacency")
    })?;
    Ok(complexity_gradient(&ws.scores, geo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftSignal {
    #[default]
    Omega,
    Geo,
}

/// Entry lift between two periods; the signal is evaluated at the earlier
/// one. Defaults: first period to the analysis period.
pub fn lift(ws: &Workspace, signal: LiftSignal, from: Option<&str>, to: Option<&str>, quantiles: usize) -> Result<LiftReport> {
    let from = from.unwrap_or_else(|| ws.manifest.periods.first().map(String::as_str).unwrap_or_default());
    let to = to.unwrap_or(&ws.manifest.params.period);
    let snapshot = |p: &str| {
        ws.snapshots
            .get(p)
            .ok_or_else(|| ServiceError::new(Kind::UnknownId, "unknown_period", format!("unknown period `{p}`")))
    };
    let (m0, m1) = (snapshot(from)?, snapshot(to)?);
    if from == to {
        return Err(ServiceError::new(
            Kind::MissingInput,
            "single_period",
            "entry lift needs two distinct periods",
        ));
    }
    let record = snapshot_diff(m0, m1)?;
    let base = &record.baseline;
    let report = match signal {
        LiftSignal::Omega => {
            let omega = relatedness_density(base, &proximity(base))?;
            entry_lift(&record, &omega as &dyn Signal, quantiles)?
        }
        LiftSignal::Geo => {
            let geo = ws.geo.as_ref().ok_or_else(|| {
                ServiceError::new(Kind::MissingInput, "missing_adjacency", "workspace has no spatial adjacency")
            })?;
            entry_lift(&record, &neighbor_density(base, geo) as &dyn Signal, quantiles)?
        }
    };
    Ok(report)
}

pub fn portfolio(eci: f64, schedule: Schedule) -> Result<PortfolioSplit> {
    Ok(portfolio_split(eci, schedule)?)
}

pub fn simulate(instance: &StrategyInstance) -> Result<EvaluationReport> {
    Ok(instance.evaluate()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recompute {
    /// Keep φ, ECI and PCI; recompute only the location's ω row.
    #[default]
    Frozen,
    Full,
}

fn default_value() -> ValueKind {
    ValueKind::Pci
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub location: String,
    /// Activities to treat as specialized.
    #[serde(default)]
    pub add: Vec<String>,
    #[serde(default = "default_value")]
    pub value: ValueKind,
    #[serde(default)]
    pub recompute: Recompute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub activity: String,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub location: String,
    pub added: Vec<String>,
    pub recompute: Recompute,
    pub deltas: Vec<Delta>,
    pub diagram: FrontierDiagram,
}

/// Re-draws a location's diagram as if it were also specialized in the
/// activities of `req.add`. Never touches the workspace.
pub fn whatif(ws: &Workspace, req: &WhatIfRequest) -> Result<WhatIfResponse> {
    let axes = ws.specialization.axes();
    let c = axes.location_index(&req.location)?;
    let added: BTreeSet<&str> = req.add.iter().map(String::as_str).collect();
    let mut columns = Vec::with_capacity(added.len());
    let mut overlap = Vec::new();
    for a in &added {
        let p = axes.activity_index(a)?;
        if ws.specialization.values()[[c, p]] == 1 {
            overlap.push(a.to_string());
        }
        columns.push(p);
    }
    if !overlap.is_empty() {
        return Err(ServiceError::new(
            Kind::Invalid,
            "already_specialized",
            format!("`{}` already specialized in {}", req.location, overlap.join(", ")),
        )
        .with_detail(serde_json::json!({ "overlap": overlap })));
    }
    let m1 = ws.specialization.with_added(c, &columns);
    let (omega, values) = match req.recompute {
        Recompute::Frozen => {
            let active: Vec<bool> = m1.values().row(c).iter().map(|x| *x == 1).collect();
            let mut w = ws.density.values().clone();
            for (p, v) in density_row(&active, &ws.proximity).into_iter().enumerate() {
                w[[c, p]] = v;
            }
            (DensityMatrix::from_parts(axes.clone(), w)?, value_vector(ws, req.value)?)
        }
        Recompute::Full => {
            let phi = proximity(&m1);
            let omega = relatedness_density(&m1, &phi)?;
            let scores = eci_pci(&m1)?;
            let values = value_vector_for(ws, &m1, &scores, req.value)?;
            (omega, values)
        }
    };
    let deltas = axes
        .activities
        .iter()
        .enumerate()
        .map(|(p, id)| {
            let (before, after) = (ws.density.values()[[c, p]], omega.values()[[c, p]]);
            Delta { activity: id.clone(), before, after, delta: after - before }
        })
        .collect();
    let diagram = frontier_diagram(&req.location, &omega, &m1, &values, ThresholdPolicy::default())?;
    Ok(WhatIfResponse {
        location: req.location.clone(),
        added: added.into_iter().map(String::from).collect(),
        recompute: req.recompute,
        deltas,
        diagram,
    })
}
