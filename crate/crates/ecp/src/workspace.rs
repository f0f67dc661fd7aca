//! Workspaces: a directory of canonical CSV/JSON artifacts plus a manifest.
//!
//! Only the canonical inputs and the manifest are read back on load; every
//! derived object is rebuilt from them and the content hash is checked, so
//! a loaded workspace is always consistent with its recorded parameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ecp_core::data::{
    parse_adjacency, parse_indicator_table, parse_trade_panel, ActivityMatrix, IndicatorKind,
    IndicatorVector, LoadReport, SpatialGraph,
};
use ecp_core::metrics::{
    binarize, eci_pci, fitness_complexity, proximity, rca, relatedness_density, ComplexityScores,
    DensityMatrix, FitnessScores, ProximityNetwork, SpecializationMatrix, FITNESS_MAX_ITERS,
    FITNESS_TOLERANCE,
};
use ecp_core::strategy::{build_activity_graph, ActivityGraph};
use ecp_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Kind, Result, ServiceError};
use crate::render;

pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_RCA_THRESHOLD: f64 = 1.0;
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.4;

const TRADE: &str = "trade.csv";
const INDICATORS: &str = "indicators.csv";
const ADJACENCY: &str = "adjacency.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub rca_threshold: f64,
    pub edge_threshold: f64,
    /// Period the metrics are computed for; the latest one by default.
    pub period: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator_kind: Option<IndicatorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub locations: usize,
    pub activities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub hash: String,
    pub created_unix: u64,
    pub params: Params,
    pub periods: Vec<String>,
    pub shape: Shape,
    pub load: LoadReport,
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Raw input texts for a build.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub trade: String,
    pub indicators: Option<(String, IndicatorKind)>,
    pub adjacency: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub manifest: Manifest,
    pub flows: BTreeMap<String, ActivityMatrix>,
    /// Specialization per period, all at the recorded threshold.
    pub snapshots: BTreeMap<String, SpecializationMatrix>,
    pub specialization: SpecializationMatrix,
    pub proximity: ProximityNetwork,
    pub density: DensityMatrix,
    pub scores: ComplexityScores,
    pub fitness: FitnessScores,
    pub indicators: Option<IndicatorVector>,
    pub geo: Option<SpatialGraph>,
    pub activity_graph: Option<ActivityGraph>,
}

fn sha256_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn panel_csv(flows: &BTreeMap<String, ActivityMatrix>) -> String {
    let mut out = String::from("location,activity,period,value\n");
    for m in flows.values() {
        out.extend(m.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    out
}

fn validate(params_rca: f64, edge: f64) -> Result<()> {
    if !(params_rca > 0.0 && params_rca.is_finite()) {
        return Err(ServiceError::new(
            Kind::Invalid,
            "invalid_threshold",
            format!("rca threshold must be a positive number, got {params_rca}"),
        ));
    }
    if !(edge > 0.0 && edge <= 1.0) {
        return Err(ServiceError::new(
            Kind::Invalid,
            "invalid_threshold",
            format!("edge threshold must lie in (0, 1], got {edge}"),
        ));
    }
    Ok(())
}

impl Workspace {
    /// Parses the inputs and derives every metric. `period` selects the
    /// analysis period (latest when `None`).
    pub fn build(inputs: &Inputs, rca_threshold: f64, edge_threshold: f64, period: Option<&str>) -> Result<Self> {
        validate(rca_threshold, edge_threshold)?;
        let panel = parse_trade_panel(&inputs.trade)?;
        let period = match period {
            Some(p) if panel.contains_key(p) => p.to_string(),
            Some(p) => return Err(ServiceError::invalid(format!("trade table has no period `{p}`"))),
            None => panel.keys().next_back().cloned().ok_or_else(|| ServiceError::invalid("empty trade table"))?,
        };
        let load = panel[&period].1.clone();
        let flows: BTreeMap<String, ActivityMatrix> = panel.into_iter().map(|(k, (m, _))| (k, m)).collect();
        let mut warnings = Vec::new();

        let mut snapshots = BTreeMap::new();
        for (p, m) in &flows {
            snapshots.insert(p.clone(), binarize(&rca(m), rca_threshold)?.with_period(p.as_str()));
        }
        let specialization = snapshots[&period].clone();
        let proximity = proximity(&specialization);
        let density = relatedness_density(&specialization, &proximity)?;
        let scores = eci_pci(&specialization)?;
        let fitness = fitness_complexity(&specialization, FITNESS_MAX_ITERS, FITNESS_TOLERANCE)?;
        if !fitness.converged {
            warnings.push(format!(
                "fitness-complexity did not converge in {} iterations (residual {:e})",
                fitness.iterations, fitness.residual
            ));
        }

        let indicators = match &inputs.indicators {
            Some((text, kind)) => {
                let ind = parse_indicator_table(text, *kind)?;
                let unresolved: Vec<&str> = ind.unresolved(&specialization.axes().locations).collect();
                if !unresolved.is_empty() {
                    warnings.push(format!("indicator rows for unknown locations: {}", unresolved.join(", ")));
                }
                Some(ind)
            }
            None => None,
        };
        let geo = inputs.adjacency.as_deref().map(parse_adjacency).transpose()?;
        let activity_graph = match build_activity_graph(&proximity, edge_threshold) {
            Ok(g) => Some(g),
            Err(CoreError::EmptyGraph { threshold }) => {
                warnings.push(format!("activity graph is empty at edge threshold {threshold}"));
                None
            }
            Err(e) => return Err(e.into()),
        };

        let params = Params {
            rca_threshold,
            edge_threshold,
            period: period.clone(),
            indicator_kind: indicators.as_ref().map(|i| i.kind),
        };
        let (nl, na) = specialization.axes().shape();
        let mut ws = Workspace {
            manifest: Manifest {
                hash: String::new(),
                created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                params,
                periods: flows.keys().cloned().collect(),
                shape: Shape { locations: nl, activities: na },
                load,
                artifacts: Vec::new(),
                warnings,
            },
            flows,
            snapshots,
            specialization,
            proximity,
            density,
            scores,
            fitness,
            indicators,
            geo,
            activity_graph,
        };
        ws.manifest.hash = ws.content_hash();
        ws.manifest.artifacts = ws.artifacts().into_iter().map(|(name, _)| name.to_string()).collect();
        Ok(ws)
    }

    /// Hash over the canonical inputs and the parameters.
    pub fn content_hash(&self) -> String {
        let params = serde_json::to_string(&self.manifest.params).unwrap_or_default();
        let trade = panel_csv(&self.flows);
        let indicators = self.indicators.as_ref().map(IndicatorVector::to_csv).unwrap_or_default();
        let adjacency = self.geo.as_ref().map(SpatialGraph::to_csv).unwrap_or_default();
        sha256_hex(&[&params, &trade, &indicators, &adjacency])
    }

    fn artifacts(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            (TRADE, panel_csv(&self.flows)),
            ("specialization.csv", self.specialization.to_csv()),
            ("proximity.csv", self.proximity.to_csv()),
            ("density.csv", self.density.to_csv()),
            ("scores.json", render(&self.scores)),
            ("fitness.json", render(&self.fitness)),
        ];
        if let Some(ind) = &self.indicators {
            out.push((INDICATORS, ind.to_csv()));
        }
        if let Some(geo) = &self.geo {
            out.push((ADJACENCY, geo.to_csv()));
        }
        if let Some(g) = &self.activity_graph {
            let mut csv = String::from("activity,neighbor\n");
            for (a, b) in g.edges() {
                csv.push_str(&format!("{a},{b}\n"));
            }
            out.push(("activity_graph.csv", csv));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| ServiceError::file(dir, e))?;
        for (name, body) in self.artifacts() {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| ServiceError::file(&path, e))?;
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, render(&self.manifest)).map_err(|e| ServiceError::file(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| ServiceError::file(&path, e))
        };
        let manifest: Manifest = serde_json::from_str(&read(MANIFEST)?).map_err(|e| {
            ServiceError::new(Kind::Internal, "bad_manifest", format!("{}: {e}", dir.join(MANIFEST).display()))
        })?;
        let p = &manifest.params;
        let inputs = Inputs {
            trade: read(TRADE)?,
            indicators: match p.indicator_kind {
                Some(kind) => Some((read(INDICATORS)?, kind)),
                None => None,
            },
            adjacency: if dir.join(ADJACENCY).exists() { Some(read(ADJACENCY)?) } else { None },
        };
        let mut ws = Self::build(&inputs, p.rca_threshold, p.edge_threshold, Some(&p.period))?;
        if ws.manifest.hash != manifest.hash {
            return Err(ServiceError::new(
                Kind::Internal,
                "hash_mismatch",
                format!("workspace {} does not match its manifest hash", dir.display()),
            ));
        }
        ws.manifest.created_unix = manifest.created_unix;
        Ok(ws)
    }
}

/// Reads an input file, mapping a missing file to the "file not found"
/// error.
pub fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| ServiceError::file(path, e))
}

/// Workspace directory for an id under `root`; ids are plain directory
/// names.
pub fn workspace_path(root: &Path, id: &str) -> Result<PathBuf> {
    let valid = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !valid {
        return Err(ServiceError::new(Kind::UnknownId, "unknown_workspace", format!("unknown workspace `{id}`")));
    }
    let path = root.join(id);
    if !path.join(MANIFEST).is_file() {
        return Err(ServiceError::new(Kind::UnknownId, "unknown_workspace", format!("unknown workspace `{id}`")));
    }
    Ok(path)
}
