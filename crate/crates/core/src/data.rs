//! Input tables: location×activity flows, location indicators, spatial
//! adjacency, and entry/exit detection between two specialization snapshots.
//!
//! All CSV inputs are UTF-8, comma separated, with a mandatory header line.
//! Identifiers are opaque case-sensitive strings and are always stored in
//! lexicographic order, so parsing does not depend on row order.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::{IndexMap, IndexSet};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SpecializationMatrix;

/// Location and activity identifiers shared by every matrix derived from
/// the same source table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axes {
    pub locations: IndexSet<String>,
    pub activities: IndexSet<String>,
}

impl Axes {
    pub fn new<L, A>(locations: L, activities: A) -> Result<Self>
    where
        L: IntoIterator,
        L::Item: Into<String>,
        A: IntoIterator,
        A::Item: Into<String>,
    {
        let locations = unique_ids(locations, "location")?;
        let activities = unique_ids(activities, "activity")?;
        Ok(Self { locations, activities })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.locations.len(), self.activities.len())
    }

    pub fn location_index(&self, id: &str) -> Result<usize> {
        self.locations
            .get_index_of(id)
            .ok_or_else(|| Error::UnknownLocation(id.to_string()))
    }

    pub fn activity_index(&self, id: &str) -> Result<usize> {
        self.activities
            .get_index_of(id)
            .ok_or_else(|| Error::UnknownActivity(id.to_string()))
    }

    pub fn location(&self, i: usize) -> &str {
        &self.locations[i]
    }

    pub fn activity(&self, p: usize) -> &str {
        &self.activities[p]
    }
}

fn unique_ids<I>(ids: I, what: &str) -> Result<IndexSet<String>>
where
    I: IntoIterator,
    I::Item: Into<String>,
{
    let mut out = IndexSet::new();
    for id in ids {
        let id = id.into();
        if !out.insert(id.clone()) {
            return Err(Error::InvalidParameter(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(out)
}

/// Nonnegative flows over (location, activity) for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMatrix {
    axes: Axes,
    period: String,
    values: Array2<f64>,
}

impl ActivityMatrix {
    /// Validates a dense matrix. Every location and activity must carry at
    /// least one strictly positive value.
    pub fn new(axes: Axes, period: impl Into<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != axes.shape() {
            return Err(Error::InvalidParameter(format!(
                "value shape {:?} does not match {} locations × {} activities",
                values.dim(),
                axes.locations.len(),
                axes.activities.len()
            )));
        }
        if axes.locations.is_empty() || axes.activities.is_empty() {
            return Err(Error::EmptyDataset("matrix has no locations or activities".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "flow values must be finite and nonnegative, found {v}"
            )));
        }
        for (c, row) in values.rows().into_iter().enumerate() {
            if !row.iter().any(|v| *v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "location `{}` has no positive flow",
                    axes.location(c)
                )));
            }
        }
        for (p, col) in values.columns().into_iter().enumerate() {
            if !col.iter().any(|v| *v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "activity `{}` has no positive flow",
                    axes.activity(p)
                )));
            }
        }
        Ok(Self { axes, period: period.into(), values })
    }

    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    pub fn period(&self) -> &str {
        &self.period
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, location: &str, activity: &str) -> Option<f64> {
        let c = self.axes.locations.get_index_of(location)?;
        let p = self.axes.activities.get_index_of(activity)?;
        Some(self.values[[c, p]])
    }

    /// Multiplies every flow by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self {
            axes: self.axes.clone(),
            period: self.period.clone(),
            values: self.values.mapv(|v| v * factor),
        })
    }

    /// Canonical CSV: header plus one row per positive cell, in index order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,activity,period,value\n");
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for ((c, p), v) in self.values.indexed_iter() {
            if *v > 0.0 {
                w.write_record([
                    self.axes.location(c),
                    self.axes.activity(p),
                    self.period.as_str(),
                    &v.to_string(),
                ])
                .expect("in-memory csv write");
            }
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf8"));
        out
    }
}

/// What happened while loading a trade table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows: usize,
    pub duplicates_summed: usize,
    pub dropped_locations: Vec<String>,
    pub dropped_activities: Vec<String>,
}

impl LoadReport {
    pub fn dropped(&self) -> usize {
        self.dropped_locations.len() + self.dropped_activities.len()
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse { line, message: e.to_string() }
}

/// Reads the header and checks it against the accepted column sets.
fn check_header(
    records: &mut csv::StringRecordsIter<'_, &[u8]>,
    accepted: &[&[&str]],
) -> Result<usize> {
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(Error::EmptyDataset("input has no header".into())),
    };
    let cols: Vec<&str> = header.iter().collect();
    accepted
        .iter()
        .find(|a| a.len() == cols.len() && a.iter().zip(&cols).all(|(x, y)| x == y))
        .map(|a| a.len())
        .ok_or_else(|| Error::Parse {
            line: line_of(&header).max(1),
            message: format!(
                "expected header `{}`, found `{}`",
                accepted.last().map(|a| a.join(",")).unwrap_or_default(),
                cols.join(",")
            ),
        })
}

fn parse_value(field: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric {what} `{field}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("non-finite {what} `{field}`") });
    }
    Ok(v)
}

struct TradeRow {
    location: String,
    activity: String,
    period: String,
    value: f64,
}

fn read_trade_rows(text: &str) -> Result<Vec<TradeRow>> {
    let mut rdr = reader(text);
    let mut records = rdr.records();
    check_header(&mut records, &[&["location", "activity", "period", "value"]])?;
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let value = parse_value(&record[3], line, "value")?;
        if value < 0.0 {
            return Err(Error::Parse { line, message: format!("negative value {value}") });
        }
        rows.push(TradeRow {
            location: record[0].to_string(),
            activity: record[1].to_string(),
            period: record[2].to_string(),
            value,
        });
    }
    Ok(rows)
}

fn assemble(period: &str, rows: &[&TradeRow]) -> Result<(ActivityMatrix, LoadReport)> {
    let mut cells: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut report = LoadReport { rows: rows.len(), ..Default::default() };
    for row in rows {
        match cells.entry((row.location.as_str(), row.activity.as_str())) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += row.value;
                report.duplicates_summed += 1;
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(row.value);
            }
        }
    }
    let all_locations: BTreeSet<&str> = cells.keys().map(|(c, _)| *c).collect();
    let all_activities: BTreeSet<&str> = cells.keys().map(|(_, p)| *p).collect();
    let positive: Vec<(&str, &str)> =
        cells.iter().filter(|(_, v)| **v > 0.0).map(|(k, _)| *k).collect();
    let locations: BTreeSet<&str> = positive.iter().map(|(c, _)| *c).collect();
    let activities: BTreeSet<&str> = positive.iter().map(|(_, p)| *p).collect();
    report.dropped_locations =
        all_locations.difference(&locations).map(|s| s.to_string()).collect();
    report.dropped_activities =
        all_activities.difference(&activities).map(|s| s.to_string()).collect();
    if locations.is_empty() {
        return Err(Error::EmptyDataset(format!("no positive flows for period `{period}`")));
    }
    let axes = Axes::new(locations.iter().copied(), activities.iter().copied())?;
    let mut values = Array2::zeros(axes.shape());
    for ((c, p), v) in cells {
        if let (Some(i), Some(j)) = (axes.locations.get_index_of(c), axes.activities.get_index_of(p)) {
            values[[i, j]] = v;
        }
    }
    Ok((ActivityMatrix::new(axes, period, values)?, report))
}

/// Parses a `location,activity,period,value` table.
///
/// When the table holds several periods a `period` filter is required.
/// Duplicate (location, activity) rows are summed; locations or activities
/// without any positive flow are dropped and listed in the report.
pub fn parse_trade_table(text: &str, period: Option<&str>) -> Result<(ActivityMatrix, LoadReport)> {
    let rows = read_trade_rows(text)?;
    let periods: BTreeSet<&str> = rows.iter().map(|r| r.period.as_str()).collect();
    let selected = match period {
        Some(p) => p,
        None => match periods.len() {
            0 => return Err(Error::EmptyDataset("table has no data rows".into())),
            1 => periods.iter().next().copied().unwrap_or_default(),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "table holds {} periods ({}); select one",
                    periods.len(),
                    periods.iter().copied().collect::<Vec<_>>().join(", ")
                )))
            }
        },
    };
    let selected_rows: Vec<&TradeRow> = rows.iter().filter(|r| r.period == selected).collect();
    if selected_rows.is_empty() {
        return Err(Error::EmptyDataset(format!("no rows for period `{selected}`")));
    }
    assemble(selected, &selected_rows)
}

/// Parses every period of a trade table, keyed by period label.
pub fn parse_trade_panel(text: &str) -> Result<BTreeMap<String, (ActivityMatrix, LoadReport)>> {
    let rows = read_trade_rows(text)?;
    let mut by_period: BTreeMap<&str, Vec<&TradeRow>> = BTreeMap::new();
    for row in &rows {
        by_period.entry(row.period.as_str()).or_default().push(row);
    }
    if by_period.is_empty() {
        return Err(Error::EmptyDataset("table has no data rows".into()));
    }
    by_period
        .into_iter()
        .map(|(period, rows)| assemble(period, &rows).map(|r| (period.to_string(), r)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    Gini,
    EmissionIntensity,
    Other,
}

impl std::str::FromStr for IndicatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(Self::Gini),
            "emission_intensity" | "emission-intensity" | "emissions" => Ok(Self::EmissionIntensity),
            "other" => Ok(Self::Other),
            _ => Err(Error::InvalidParameter(format!("unknown indicator kind `{s}`"))),
        }
    }
}

/// One real value per location, e.g. an income Gini.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorVector {
    pub kind: IndicatorKind,
    pub units: Option<String>,
    values: IndexMap<String, f64>,
}

impl IndicatorVector {
    pub fn new(kind: IndicatorKind, values: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut map = IndexMap::new();
        for (loc, v) in values {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite indicator for `{loc}`")));
            }
            if map.insert(loc.clone(), v).is_some() {
                return Err(Error::DuplicateLocation { location: loc, line: 0 });
            }
        }
        map.sort_keys();
        Ok(Self { kind, units: None, values: map })
    }

    pub fn get(&self, location: &str) -> Option<f64> {
        self.values.get(location).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Ids not present in `locations`.
    pub fn unresolved<'a>(&'a self, locations: &'a IndexSet<String>) -> impl Iterator<Item = &'a str> {
        self.values.keys().filter(|k| !locations.contains(*k)).map(|k| k.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,value\n");
        for (k, v) in &self.values {
            out.push_str(&format!("{},{}\n", csv_field(k), v));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn parse_indicator_table(text: &str, kind: IndicatorKind) -> Result<IndicatorVector> {
    let mut rdr = reader(text);
    let mut records = rdr.records();
    check_header(&mut records, &[&["location", "value"]])?;
    let mut values: IndexMap<String, f64> = IndexMap::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let v = parse_value(&record[1], line, "value")?;
        let loc = record[0].to_string();
        if values.contains_key(&loc) {
            return Err(Error::DuplicateLocation { location: loc, line });
        }
        values.insert(loc, v);
    }
    if values.is_empty() {
        return Err(Error::EmptyDataset("indicator table has no rows".into()));
    }
    values.sort_keys();
    Ok(IndicatorVector { kind, units: None, values })
}

/// Undirected weighted adjacency between locations.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    locations: IndexSet<String>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl SpatialGraph {
    /// Builds a symmetric graph; repeated edges keep the maximum weight.
    pub fn from_edges<S: AsRef<str>>(edges: impl IntoIterator<Item = (S, S, f64)>) -> Result<Self> {
        let mut weights: BTreeMap<(String, String), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            let (a, b) = (a.as_ref().to_string(), b.as_ref().to_string());
            if a == b {
                return Err(Error::SelfLoop { location: a, line: 0 });
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("edge {a}-{b} has invalid weight {w}")));
            }
            let key = if a < b { (a, b) } else { (b, a) };
            let slot = weights.entry(key).or_insert(w);
            *slot = slot.max(w);
        }
        let ids: BTreeSet<&str> =
            weights.keys().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
        let locations: IndexSet<String> = ids.into_iter().map(String::from).collect();
        let mut neighbors = vec![Vec::new(); locations.len()];
        for ((a, b), w) in &weights {
            let (i, j) = (locations.get_index_of(a).unwrap_or(0), locations.get_index_of(b).unwrap_or(0));
            neighbors[i].push((j, *w));
            neighbors[j].push((i, *w));
        }
        for n in &mut neighbors {
            n.sort_by_key(|(j, _)| *j);
        }
        Ok(Self { locations, neighbors })
    }

    pub fn locations(&self) -> &IndexSet<String> {
        &self.locations
    }

    /// Neighbors of `location` with their edge weights, in id order.
    pub fn neighbors(&self, location: &str) -> impl Iterator<Item = (&str, f64)> {
        self.locations
            .get_index_of(location)
            .map(|i| self.neighbors[i].as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|(j, w)| (self.locations[*j].as_str(), *w))
    }

    pub fn weight(&self, a: &str, b: &str) -> Option<f64> {
        self.neighbors(a).find(|(n, _)| *n == b).map(|(_, w)| w)
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each undirected edge once, endpoints in id order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.neighbors.iter().enumerate().flat_map(move |(i, ns)| {
            ns.iter()
                .filter(move |(j, _)| *j > i)
                .map(move |(j, w)| (self.locations[i].as_str(), self.locations[*j].as_str(), *w))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,neighbor,weight\n");
        for (a, b, w) in self.edges() {
            out.push_str(&format!("{},{},{}\n", csv_field(a), csv_field(b), w));
        }
        out
    }
}

pub fn parse_adjacency(text: &str) -> Result<SpatialGraph> {
    let mut rdr = reader(text);
    let mut records = rdr.records();
    let width = check_header(
        &mut records,
        &[&["location", "neighbor"], &["location", "neighbor", "weight"]],
    )?;
    let mut edges = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width && !(width == 3 && record.len() == 2) {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let (a, b) = (record[0].to_string(), record[1].to_string());
        if a == b {
            return Err(Error::SelfLoop { location: a, line });
        }
        let w = match record.get(2) {
            Some(f) if !f.is_empty() => parse_value(f, line, "weight")?,
            _ => 1.0,
        };
        if w < 0.0 {
            return Err(Error::Parse { line, message: format!("negative weight {w}") });
        }
        edges.push((a, b, w));
    }
    if edges.is_empty() {
        return Err(Error::EmptyDataset("adjacency table has no rows".into()));
    }
    SpatialGraph::from_edges(edges)
}

/// Entries (0→1) and exits (1→0) between two specialization snapshots,
/// restricted to the ids both snapshots share.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryExitRecord {
    pub periods: (String, String),
    pub entries: BTreeSet<(String, String)>,
    pub exits: BTreeSet<(String, String)>,
    pub dropped_locations: Vec<String>,
    pub dropped_activities: Vec<String>,
    /// The earlier snapshot restricted to the shared ids; its zero cells
    /// are the candidate universe for entry diagnostics.
    pub baseline: SpecializationMatrix,
}

impl EntryExitRecord {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.exits.is_empty()
    }
}

pub fn snapshot_diff(m0: &SpecializationMatrix, m1: &SpecializationMatrix) -> Result<EntryExitRecord> {
    let (a0, a1) = (m0.axes(), m1.axes());
    let locations: Vec<&String> = a0.locations.iter().filter(|l| a1.locations.contains(*l)).collect();
    let activities: Vec<&String> =
        a0.activities.iter().filter(|p| a1.activities.contains(*p)).collect();
    if locations.is_empty() || activities.is_empty() {
        return Err(Error::EmptyDataset("snapshots share no locations or activities".into()));
    }
    let symmetric_difference = |x: &IndexSet<String>, y: &IndexSet<String>| -> Vec<String> {
        let mut d: Vec<String> = x.symmetric_difference(y).cloned().collect();
        d.sort();
        d
    };
    let mut entries = BTreeSet::new();
    let mut exits = BTreeSet::new();
    let mut baseline = Array2::<u8>::zeros((locations.len(), activities.len()));
    for (i, c) in locations.iter().enumerate() {
        for (j, p) in activities.iter().enumerate() {
            let before = m0.is_specialized(c, p).unwrap_or(false);
            let after = m1.is_specialized(c, p).unwrap_or(false);
            baseline[[i, j]] = before as u8;
            match (before, after) {
                (false, true) => {
                    entries.insert(((*c).clone(), (*p).clone()));
                }
                (true, false) => {
                    exits.insert(((*c).clone(), (*p).clone()));
                }
                _ => {}
            }
        }
    }
    let axes = Axes::new(locations.into_iter().cloned(), activities.into_iter().cloned())?;
    Ok(EntryExitRecord {
        periods: (m0.period().to_string(), m1.period().to_string()),
        entries,
        exits,
        dropped_locations: symmetric_difference(&a0.locations, &a1.locations),
        dropped_activities: symmetric_difference(&a0.activities, &a1.activities),
        baseline: SpecializationMatrix::from_binary(axes, m0.threshold(), baseline)?
            .with_period(m0.period()),
    })
}
