//! Hydropower cascade: river network topology, inflow preparation, and the
//! water-balance constraint fragments the optimizer instantiates per year.
//!
//! A cascade is a directed acyclic graph of nodes — catchments where rivers
//! enter, river segments, reservoirs, plants, and spillways — connected by
//! links that carry water. Flows are annual volumes (MCM) per timeslice;
//! reservoir levels are instantaneous volumes (MCM). Every representative
//! day closes on itself: a reservoir ends each day at the level it started,
//! so annual net storage change is zero by construction.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use gridplan_lp::Sense;

/// Default economic lifetime for hydropower plants, years.
pub const DEFAULT_PLANT_LIFE: u32 = 40;

#[derive(Debug)]
pub enum CascadeError {
    Io { path: String, source: std::io::Error },
    Parse { line: usize, msg: String },
    DuplicateNode { id: String },
    DuplicateLink { from: String, to: String },
    UnknownNode { id: String },
    Cycle { id: String },
    BadDegree { id: String, msg: String },
    MissingAttr { id: String, attr: &'static str },
    BadAttr { id: String, attr: String, msg: String },
    UnknownRiver { river: String },
    BadInflow { river: String, msg: String },
    BadPattern { msg: String },
}

impl fmt::Display for CascadeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CascadeError::Io { path, source } => write!(f, "{path}: {source}"),
            CascadeError::Parse { line, msg } => write!(f, "line {line}: {msg}"),
            CascadeError::DuplicateNode { id } => write!(f, "duplicate node id {id}"),
            CascadeError::DuplicateLink { from, to } => {
                write!(f, "duplicate link {from} -> {to}")
            }
            CascadeError::UnknownNode { id } => write!(f, "link references unknown node {id}"),
            CascadeError::Cycle { id } => {
                write!(f, "network contains a cycle through node {id}")
            }
            CascadeError::BadDegree { id, msg } => write!(f, "node {id}: {msg}"),
            CascadeError::MissingAttr { id, attr } => {
                write!(f, "node {id}: missing required attribute {attr}")
            }
            CascadeError::BadAttr { id, attr, msg } => {
                write!(f, "node {id}: attribute {attr}: {msg}")
            }
            CascadeError::UnknownRiver { river } => {
                write!(f, "no inflow record for river {river}")
            }
            CascadeError::BadInflow { river, msg } => write!(f, "river {river}: {msg}"),
            CascadeError::BadPattern { msg } => write!(f, "day pattern: {msg}"),
        }
    }
}

impl std::error::Error for CascadeError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CascadeError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Catchment,
    RiverSegment,
    Reservoir,
    Plant,
    Spillway,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Catchment => "catchment",
            NodeKind::RiverSegment => "river_segment",
            NodeKind::Reservoir => "reservoir",
            NodeKind::Plant => "plant",
            NodeKind::Spillway => "spillway",
        }
    }
}

/// Cost and capacity parameters of a hydropower plant; the optimizer treats
/// each plant as an expandable technology.
#[derive(Debug, Clone)]
pub struct PlantData {
    pub region: String,
    /// Existing capacity, MW.
    pub capacity_mw: f64,
    /// Energy yield per unit of turbined water, MWh per MCM.
    pub rate_mwh_per_mcm: f64,
    /// Overnight cost per MW of new capacity.
    pub capex: f64,
    /// Fixed O&M per MW-year.
    pub fixed_om: f64,
    /// Variable O&M per MWh.
    pub var_om: f64,
    pub life: u32,
    /// Expansion headroom, MW (0 = no new build allowed).
    pub max_new_mw: f64,
    /// Last year the existing capacity remains available.
    pub residual_until: u32,
    /// Share of capacity that counts toward the reserve margin.
    pub firm_credit: f64,
}

#[derive(Debug, Clone)]
pub enum NodeData {
    Catchment { river: String, scale: f64 },
    RiverSegment { river: Option<String>, cap_mcm_per_day: Option<f64> },
    Reservoir { storage_mcm: f64, level_min: f64, level_max: f64 },
    Plant(PlantData),
    Spillway,
}

impl NodeData {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodeData::Catchment { .. } => NodeKind::Catchment,
            NodeData::RiverSegment { .. } => NodeKind::RiverSegment,
            NodeData::Reservoir { .. } => NodeKind::Reservoir,
            NodeData::Plant(_) => NodeKind::Plant,
            NodeData::Spillway => NodeKind::Spillway,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub data: NodeData,
}

/// Validated cascade network.
#[derive(Debug, Clone)]
pub struct Topology {
    pub nodes: Vec<Node>,
    /// Directed links as (from, to) node indices, in declaration order.
    pub links: Vec<(usize, usize)>,
    /// Link indices entering each node.
    pub in_links: Vec<Vec<usize>>,
    /// Link indices leaving each node.
    pub out_links: Vec<Vec<usize>>,
    by_id: BTreeMap<String, usize>,
}

impl Topology {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// One-line-per-element description, stable across runs.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {} {}\n", n.id, n.data.kind().as_str()));
        }
        for &(a, b) in &self.links {
            out.push_str(&format!("link {} -> {}\n", self.nodes[a].id, self.nodes[b].id));
        }
        out
    }
}

/// Parses and validates a cascade description.
///
/// Format, one element per line (`#` starts a comment):
/// ```text
/// node <id> catchment river=<name> [scale=<f>]
/// node <id> river_segment [river=<name>] [cap_mcm_per_day=<f>]
/// node <id> reservoir storage_mcm=<f> [level_min=<f>] [level_max=<f>]
/// node <id> plant region=<r> rate_mwh_per_mcm=<f> [capacity_mw=<f>] \
///     [capex=<f>] [fixed_om=<f>] [var_om=<f>] [life=<n>] [max_new_mw=<f>] \
///     [residual_until=<year>]
/// node <id> spillway
/// link <from> -> <to>
/// ```
pub fn build_topology(text: &str) -> Result<Topology, CascadeError> {
    let mut nodes: Vec<Node> = Vec::new();
    let mut by_id: BTreeMap<String, usize> = BTreeMap::new();
    let mut raw_links: Vec<(String, String, usize)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let lno = lineno + 1;
        match toks[0] {
            "node" => {
                if toks.len() < 3 {
                    return Err(CascadeError::Parse {
                        line: lno,
                        msg: "node needs an id and a kind".to_string(),
                    });
                }
                let id = toks[1].to_string();
                if by_id.contains_key(&id) {
                    return Err(CascadeError::DuplicateNode { id });
                }
                let data = parse_node(&id, toks[2], &toks[3..], lno)?;
                by_id.insert(id.clone(), nodes.len());
                nodes.push(Node { id, data });
            }
            "link" => {
                if toks.len() != 4 || toks[2] != "->" {
                    return Err(CascadeError::Parse {
                        line: lno,
                        msg: "link syntax is: link <from> -> <to>".to_string(),
                    });
                }
                raw_links.push((toks[1].to_string(), toks[3].to_string(), lno));
            }
            other => {
                return Err(CascadeError::Parse {
                    line: lno,
                    msg: format!("unknown directive {other:?}"),
                });
            }
        }
    }

    let mut links: Vec<(usize, usize)> = Vec::new();
    let mut seen_links: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    for (from, to, _lno) in &raw_links {
        let a = *by_id.get(from).ok_or_else(|| CascadeError::UnknownNode { id: from.clone() })?;
        let b = *by_id.get(to).ok_or_else(|| CascadeError::UnknownNode { id: to.clone() })?;
        if seen_links.insert((a, b), ()).is_some() {
            return Err(CascadeError::DuplicateLink { from: from.clone(), to: to.clone() });
        }
        links.push((a, b));
    }

    let n = nodes.len();
    let mut in_links = vec![Vec::new(); n];
    let mut out_links = vec![Vec::new(); n];
    for (li, &(a, b)) in links.iter().enumerate() {
        out_links[a].push(li);
        in_links[b].push(li);
    }

    // Acyclicity via Kahn's algorithm; report the lexicographically smallest
    // node left on a cycle so the message is stable.
    {
        let mut indeg: Vec<usize> = in_links.iter().map(|v| v.len()).collect();
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut done = 0usize;
        while let Some(i) = queue.pop() {
            done += 1;
            for &li in &out_links[i] {
                let j = links[li].1;
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    queue.push(j);
                }
            }
        }
        if done != n {
            let stuck = (0..n)
                .filter(|&i| indeg[i] > 0)
                .map(|i| nodes[i].id.clone())
                .min()
                .unwrap();
            return Err(CascadeError::Cycle { id: stuck });
        }
    }

    for (i, node) in nodes.iter().enumerate() {
        let ind = in_links[i].len();
        let outd = out_links[i].len();
        match &node.data {
            NodeData::Catchment { .. } => {
                if ind != 0 {
                    return Err(CascadeError::BadDegree {
                        id: node.id.clone(),
                        msg: format!("catchment must have no inflow links, has {ind}"),
                    });
                }
                if outd == 0 {
                    return Err(CascadeError::BadDegree {
                        id: node.id.clone(),
                        msg: "catchment must discharge somewhere".to_string(),
                    });
                }
            }
            NodeData::RiverSegment { river, .. } => {
                if ind == 0 && river.is_none() {
                    return Err(CascadeError::MissingAttr { id: node.id.clone(), attr: "river" });
                }
            }
            NodeData::Reservoir { .. } => {
                if outd == 0 {
                    return Err(CascadeError::BadDegree {
                        id: node.id.clone(),
                        msg: "reservoir needs at least one outlet".to_string(),
                    });
                }
                for &li in &out_links[i] {
                    let target = &nodes[links[li].1];
                    match target.data.kind() {
                        NodeKind::Plant | NodeKind::Spillway => {}
                        other => {
                            return Err(CascadeError::BadDegree {
                                id: node.id.clone(),
                                msg: format!(
                                    "reservoir outlets must feed a plant or spillway, \
                                     found {} ({})",
                                    target.id,
                                    other.as_str()
                                ),
                            });
                        }
                    }
                }
            }
            NodeData::Plant(_) => {
                if ind != 1 || outd != 1 {
                    return Err(CascadeError::BadDegree {
                        id: node.id.clone(),
                        msg: format!(
                            "plant must have exactly one inlet and one outlet, has {ind}/{outd}"
                        ),
                    });
                }
            }
            NodeData::Spillway => {}
        }
    }

    Ok(Topology { nodes, links, in_links, out_links, by_id })
}

fn parse_node(
    id: &str,
    kind: &str,
    attr_toks: &[&str],
    line: usize,
) -> Result<NodeData, CascadeError> {
    let mut attrs: BTreeMap<String, String> = BTreeMap::new();
    for tok in attr_toks {
        let (k, v) = tok.split_once('=').ok_or_else(|| CascadeError::Parse {
            line,
            msg: format!("expected key=value, got {tok:?}"),
        })?;
        attrs.insert(k.to_string(), v.to_string());
    }
    fn take_num(
        attrs: &mut BTreeMap<String, String>,
        id: &str,
        key: &str,
    ) -> Result<Option<f64>, CascadeError> {
        match attrs.remove(key) {
            None => Ok(None),
            Some(v) => v.parse::<f64>().map(Some).map_err(|_| CascadeError::BadAttr {
                id: id.to_string(),
                attr: key.to_string(),
                msg: format!("not a number: {v:?}"),
            }),
        }
    }

    let data = match kind {
        "catchment" => {
            let scale = take_num(&mut attrs, id, "scale")?.unwrap_or(1.0);
            let river = attrs
                .remove("river")
                .ok_or(CascadeError::MissingAttr { id: id.to_string(), attr: "river" })?;
            if scale < 0.0 {
                return Err(CascadeError::BadAttr {
                    id: id.to_string(),
                    attr: "scale".to_string(),
                    msg: "must be non-negative".to_string(),
                });
            }
            NodeData::Catchment { river, scale }
        }
        "river_segment" | "segment" => {
            let cap = take_num(&mut attrs, id, "cap_mcm_per_day")?;
            if let Some(c) = cap {
                if c < 0.0 {
                    return Err(CascadeError::BadAttr {
                        id: id.to_string(),
                        attr: "cap_mcm_per_day".to_string(),
                        msg: "must be non-negative".to_string(),
                    });
                }
            }
            NodeData::RiverSegment { river: attrs.remove("river"), cap_mcm_per_day: cap }
        }
        "reservoir" => {
            let storage = take_num(&mut attrs, id, "storage_mcm")?
                .ok_or(CascadeError::MissingAttr { id: id.to_string(), attr: "storage_mcm" })?;
            if storage <= 0.0 {
                return Err(CascadeError::BadAttr {
                    id: id.to_string(),
                    attr: "storage_mcm".to_string(),
                    msg: "must be positive".to_string(),
                });
            }
            let level_min = take_num(&mut attrs, id, "level_min")?.unwrap_or(0.0);
            let level_max = take_num(&mut attrs, id, "level_max")?.unwrap_or(storage);
            if !(0.0 <= level_min && level_min <= level_max && level_max <= storage) {
                return Err(CascadeError::BadAttr {
                    id: id.to_string(),
                    attr: "level_min/level_max".to_string(),
                    msg: format!(
                        "need 0 <= {level_min} <= {level_max} <= storage {storage}"
                    ),
                });
            }
            NodeData::Reservoir { storage_mcm: storage, level_min, level_max }
        }
        "plant" => {
            let rate = take_num(&mut attrs, id, "rate_mwh_per_mcm")?.ok_or(CascadeError::MissingAttr {
                id: id.to_string(),
                attr: "rate_mwh_per_mcm",
            })?;
            if rate <= 0.0 {
                return Err(CascadeError::BadAttr {
                    id: id.to_string(),
                    attr: "rate_mwh_per_mcm".to_string(),
                    msg: "must be positive".to_string(),
                });
            }
            let region = attrs
                .remove("region")
                .ok_or(CascadeError::MissingAttr { id: id.to_string(), attr: "region" })?;
            NodeData::Plant(PlantData {
                region,
                capacity_mw: take_num(&mut attrs, id, "capacity_mw")?.unwrap_or(0.0),
                rate_mwh_per_mcm: rate,
                capex: take_num(&mut attrs, id, "capex")?.unwrap_or(0.0),
                fixed_om: take_num(&mut attrs, id, "fixed_om")?.unwrap_or(0.0),
                var_om: take_num(&mut attrs, id, "var_om")?.unwrap_or(0.0),
                life: take_num(&mut attrs, id, "life")?.map(|v| v as u32).unwrap_or(DEFAULT_PLANT_LIFE),
                max_new_mw: take_num(&mut attrs, id, "max_new_mw")?.unwrap_or(0.0),
                residual_until: take_num(&mut attrs, id, "residual_until")?.map(|v| v as u32).unwrap_or(9999),
                firm_credit: take_num(&mut attrs, id, "firm_credit")?.unwrap_or(1.0),
            })
        }
        "spillway" => NodeData::Spillway,
        other => {
            return Err(CascadeError::Parse { line, msg: format!("unknown node kind {other:?}") })
        }
    };
    if let Some(key) = attrs.keys().next() {
        return Err(CascadeError::BadAttr {
            id: id.to_string(),
            attr: key.clone(),
            msg: format!("not understood for kind {kind}"),
        });
    }
    Ok(data)
}

/// Daily discharge per river, MCM per day, one value per day of the year.
#[derive(Debug, Clone, Default)]
pub struct InflowRecords {
    pub rivers: BTreeMap<String, Vec<f64>>,
}

impl InflowRecords {
    pub fn daily(&self, river: &str, day: usize) -> Result<f64, CascadeError> {
        let series = self
            .rivers
            .get(river)
            .ok_or_else(|| CascadeError::UnknownRiver { river: river.to_string() })?;
        series.get(day).copied().ok_or_else(|| CascadeError::BadInflow {
            river: river.to_string(),
            msg: format!("no record for day index {day}"),
        })
    }
}

/// Reads `river,day_of_year,discharge_mcm_per_day` (day_of_year is 1-based).
/// Each river must cover a full year of consecutive days.
pub fn read_inflows_csv(path: &Path) -> Result<InflowRecords, CascadeError> {
    let origin = path.display().to_string();
    let text =
        fs::read_to_string(path).map_err(|e| CascadeError::Io { path: origin, source: e })?;
    read_inflows_str(&text)
}

pub fn read_inflows_str(text: &str) -> Result<InflowRecords, CascadeError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut per_river: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let lno = i + 2;
        let rec = rec.map_err(|e| CascadeError::Parse { line: lno, msg: e.to_string() })?;
        if rec.len() != 3 {
            return Err(CascadeError::Parse {
                line: lno,
                msg: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        let river = rec[0].to_string();
        let day: usize = rec[1].parse().map_err(|_| CascadeError::Parse {
            line: lno,
            msg: format!("bad day_of_year {:?}", &rec[1]),
        })?;
        let flow: f64 = rec[2].parse().map_err(|_| CascadeError::Parse {
            line: lno,
            msg: format!("bad discharge {:?}", &rec[2]),
        })?;
        if !flow.is_finite() || flow < 0.0 {
            return Err(CascadeError::BadInflow {
                river,
                msg: format!("discharge must be finite and non-negative, got {flow}"),
            });
        }
        per_river.entry(river).or_default().push((day, flow));
    }
    let mut rivers = BTreeMap::new();
    for (river, mut days) in per_river {
        days.sort_by_key(|&(d, _)| d);
        let n = days.len();
        if n != 365 && n != 366 {
            return Err(CascadeError::BadInflow {
                river,
                msg: format!("expected 365 or 366 daily records, got {n}"),
            });
        }
        for (expect, &(d, _)) in days.iter().enumerate() {
            if d != expect + 1 {
                return Err(CascadeError::BadInflow {
                    river,
                    msg: format!("days must run 1..={n} without gaps; found {d}"),
                });
            }
        }
        rivers.insert(river, days.into_iter().map(|(_, f)| f).collect());
    }
    Ok(InflowRecords { rivers })
}

/// Representative-day shape shared with the optimizer: which source day each
/// representative stands for, its weight in days, and how many timeslices
/// subdivide a day.
#[derive(Debug, Clone)]
pub struct DayPattern {
    pub source_days: Vec<usize>,
    pub weights: Vec<f64>,
    pub hours_per_day: usize,
}

impl DayPattern {
    pub fn validate(&self) -> Result<(), CascadeError> {
        if self.source_days.len() != self.weights.len() {
            return Err(CascadeError::BadPattern {
                msg: format!(
                    "{} source days vs {} weights",
                    self.source_days.len(),
                    self.weights.len()
                ),
            });
        }
        if self.source_days.is_empty() {
            return Err(CascadeError::BadPattern { msg: "no representative days".to_string() });
        }
        if self.hours_per_day == 0 || self.hours_per_day > 24 {
            return Err(CascadeError::BadPattern {
                msg: format!("hours_per_day {} outside 1..=24", self.hours_per_day),
            });
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(CascadeError::BadPattern {
                msg: "weights must be positive".to_string(),
            });
        }
        Ok(())
    }

    pub fn n_ts(&self) -> usize {
        self.source_days.len() * self.hours_per_day
    }
}

/// Water entering each entry node (catchments and source segments) per
/// timeslice, annual MCM. A slice's inflow is the source day's discharge,
/// scaled, split evenly over the day, times the representative's weight.
pub fn inflow_per_timeslice(
    topo: &Topology,
    records: &InflowRecords,
    pattern: &DayPattern,
) -> Result<BTreeMap<String, Vec<f64>>, CascadeError> {
    pattern.validate()?;
    let h = pattern.hours_per_day as f64;
    let mut out = BTreeMap::new();
    for (i, node) in topo.nodes.iter().enumerate() {
        let (river, scale) = match &node.data {
            NodeData::Catchment { river, scale } => (river.as_str(), *scale),
            NodeData::RiverSegment { river: Some(river), .. } if topo.in_links[i].is_empty() => {
                (river.as_str(), 1.0)
            }
            _ => continue,
        };
        let mut per_ts = Vec::with_capacity(pattern.n_ts());
        for (r, &src) in pattern.source_days.iter().enumerate() {
            let daily = records.daily(river, src)?;
            let slice = daily * scale * pattern.weights[r] / h;
            for _ in 0..pattern.hours_per_day {
                per_ts.push(slice);
            }
        }
        out.insert(node.id.clone(), per_ts);
    }
    Ok(out)
}

/// Effective discharge cap per segment, MCM per day. Explicit attributes
/// win; a segment tagged with a river otherwise caps at the river's highest
/// historical daily discharge. Untagged, uncapped segments are absent.
/// Returns warnings for rivers that never flow.
pub fn segment_capacities(
    topo: &Topology,
    records: &InflowRecords,
) -> Result<(BTreeMap<String, f64>, Vec<String>), CascadeError> {
    let mut caps = BTreeMap::new();
    let mut warnings = Vec::new();
    for node in &topo.nodes {
        if let NodeData::RiverSegment { river, cap_mcm_per_day } = &node.data {
            if let Some(c) = cap_mcm_per_day {
                caps.insert(node.id.clone(), *c);
            } else if let Some(river) = river {
                let series = records
                    .rivers
                    .get(river)
                    .ok_or_else(|| CascadeError::UnknownRiver { river: river.clone() })?;
                let max = series.iter().cloned().fold(0.0f64, f64::max);
                if max == 0.0 {
                    warnings.push(format!(
                        "segment {}: river {} has zero discharge all year; capacity set to 0",
                        node.id, river
                    ));
                }
                caps.insert(node.id.clone(), max);
            }
        }
    }
    Ok((caps, warnings))
}

/// A variable reference inside a constraint fragment. The optimizer maps
/// these onto concrete LP columns for each model year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaterRef {
    /// Annual MCM through a link during a timeslice.
    Flow { link: usize, ts: usize },
    /// Reservoir volume at an interior hour boundary of a representative day
    /// (`hour` in `1..hours_per_day`). Boundaries 0 and `hours_per_day` are
    /// the shared start level.
    Level { reservoir: usize, day: usize, hour: usize },
    /// Level every representative day of a year starts and ends at.
    Start { reservoir: usize },
    /// Annual MWh generated by a plant during a timeslice.
    PlantGen { plant: usize, ts: usize },
}

/// One year-independent constraint row over water variables.
#[derive(Debug, Clone)]
pub struct FragmentRow {
    pub label: String,
    pub terms: Vec<(WaterRef, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A plant extracted from the network, ready to merge into the technology
/// list.
#[derive(Debug, Clone)]
pub struct CascadePlant {
    pub node_id: String,
    pub data: PlantData,
}

#[derive(Debug, Clone)]
pub struct CascadeReservoir {
    pub node_id: String,
    pub level_min: f64,
    pub level_max: f64,
}

#[derive(Debug, Clone)]
pub struct CascadeLink {
    pub from: String,
    pub to: String,
}

/// Everything the optimizer needs to embed the cascade: indexed plants,
/// reservoirs, and links; per-timeslice flow bounds; and the constraint rows
/// to instantiate for every model year.
#[derive(Debug, Clone)]
pub struct CascadeFragments {
    pub plants: Vec<CascadePlant>,
    pub reservoirs: Vec<CascadeReservoir>,
    pub links: Vec<CascadeLink>,
    pub rows: Vec<FragmentRow>,
    /// Upper bound on each flow variable, `[link][ts]`, infinite when free.
    pub flow_upper: Vec<Vec<f64>>,
    pub n_rep_days: usize,
    pub hours_per_day: usize,
    pub warnings: Vec<String>,
}

impl CascadeFragments {
    pub fn n_ts(&self) -> usize {
        self.n_rep_days * self.hours_per_day
    }
}

/// Compiles the network into constraint fragments under a day pattern.
///
/// Per timeslice: catchments and source segments release exactly their
/// inflow; pass-through segments and spillways conserve volume (terminal
/// ones discard it); plants conserve volume and couple generation to
/// turbined water; reservoirs follow the level recursion
/// `w·L(h+1) − w·L(h) − inflow + outflow = 0` with the day closing on the
/// shared start level.
pub fn compile_to_model(
    topo: &Topology,
    records: &InflowRecords,
    pattern: &DayPattern,
) -> Result<CascadeFragments, CascadeError> {
    pattern.validate()?;
    let inflows = inflow_per_timeslice(topo, records, pattern)?;
    let (caps, warnings) = segment_capacities(topo, records)?;

    let k = pattern.source_days.len();
    let hpd = pattern.hours_per_day;
    let n_ts = k * hpd;

    let mut plants = Vec::new();
    let mut plant_idx: BTreeMap<usize, usize> = BTreeMap::new();
    let mut reservoirs = Vec::new();
    let mut res_idx: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, node) in topo.nodes.iter().enumerate() {
        match &node.data {
            NodeData::Plant(data) => {
                plant_idx.insert(i, plants.len());
                plants.push(CascadePlant { node_id: node.id.clone(), data: data.clone() });
            }
            NodeData::Reservoir { level_min, level_max, .. } => {
                res_idx.insert(i, reservoirs.len());
                reservoirs.push(CascadeReservoir {
                    node_id: node.id.clone(),
                    level_min: *level_min,
                    level_max: *level_max,
                });
            }
            _ => {}
        }
    }
    let links: Vec<CascadeLink> = topo
        .links
        .iter()
        .map(|&(a, b)| CascadeLink {
            from: topo.nodes[a].id.clone(),
            to: topo.nodes[b].id.clone(),
        })
        .collect();

    let mut rows: Vec<FragmentRow> = Vec::new();
    let mut flow_upper = vec![vec![f64::INFINITY; n_ts]; links.len()];

    for (i, node) in topo.nodes.iter().enumerate() {
        let ins = &topo.in_links[i];
        let outs = &topo.out_links[i];
        match &node.data {
            NodeData::Catchment { .. } | NodeData::RiverSegment { .. } => {
                let entry_inflow = inflows.get(&node.id);
                let is_sink = outs.is_empty() && entry_inflow.is_none();
                if is_sink {
                    continue; // terminal segment: water leaves the system
                }
                if outs.is_empty() {
                    // A source segment must pass its inflow somewhere.
                    return Err(CascadeError::BadDegree {
                        id: node.id.clone(),
                        msg: "source node must have an outgoing link".to_string(),
                    });
                }
                for d in 0..k {
                    for h in 0..hpd {
                        let ts = d * hpd + h;
                        let mut terms = Vec::new();
                        for &li in outs {
                            terms.push((WaterRef::Flow { link: li, ts }, 1.0));
                        }
                        for &li in ins {
                            terms.push((WaterRef::Flow { link: li, ts }, -1.0));
                        }
                        let rhs = entry_inflow.map(|v| v[ts]).unwrap_or(0.0);
                        rows.push(FragmentRow {
                            label: format!("wb.{}.d{}.h{}", node.id, d, h),
                            terms,
                            sense: Sense::Eq,
                            rhs,
                        });
                    }
                }
                // Discharge capacity: a bound when the segment has a single
                // outlet, an explicit row when it branches.
                if let Some(&cap) = caps.get(&node.id) {
                    for d in 0..k {
                        let cap_slice = cap * pattern.weights[d] / hpd as f64;
                        for h in 0..hpd {
                            let ts = d * hpd + h;
                            if outs.len() == 1 {
                                let li = outs[0];
                                flow_upper[li][ts] = flow_upper[li][ts].min(cap_slice);
                            } else {
                                let terms = outs
                                    .iter()
                                    .map(|&li| (WaterRef::Flow { link: li, ts }, 1.0))
                                    .collect();
                                rows.push(FragmentRow {
                                    label: format!("segcap.{}.d{}.h{}", node.id, d, h),
                                    terms,
                                    sense: Sense::Le,
                                    rhs: cap_slice,
                                });
                            }
                        }
                    }
                }
            }
            NodeData::Spillway => {
                if outs.is_empty() {
                    continue; // terminal spillway: free disposal
                }
                for d in 0..k {
                    for h in 0..hpd {
                        let ts = d * hpd + h;
                        let mut terms = Vec::new();
                        for &li in outs {
                            terms.push((WaterRef::Flow { link: li, ts }, 1.0));
                        }
                        for &li in ins {
                            terms.push((WaterRef::Flow { link: li, ts }, -1.0));
                        }
                        rows.push(FragmentRow {
                            label: format!("wb.{}.d{}.h{}", node.id, d, h),
                            terms,
                            sense: Sense::Eq,
                            rhs: 0.0,
                        });
                    }
                }
            }
            NodeData::Plant(data) => {
                let p = plant_idx[&i];
                let (li_in, li_out) = (ins[0], outs[0]);
                for d in 0..k {
                    for h in 0..hpd {
                        let ts = d * hpd + h;
                        rows.push(FragmentRow {
                            label: format!("wb.{}.d{}.h{}", node.id, d, h),
                            terms: vec![
                                (WaterRef::Flow { link: li_out, ts }, 1.0),
                                (WaterRef::Flow { link: li_in, ts }, -1.0),
                            ],
                            sense: Sense::Eq,
                            rhs: 0.0,
                        });
                        rows.push(FragmentRow {
                            label: format!("turb.{}.d{}.h{}", node.id, d, h),
                            terms: vec![
                                (WaterRef::PlantGen { plant: p, ts }, 1.0),
                                (
                                    WaterRef::Flow { link: li_in, ts },
                                    -data.rate_mwh_per_mcm,
                                ),
                            ],
                            sense: Sense::Eq,
                            rhs: 0.0,
                        });
                    }
                }
            }
            NodeData::Reservoir { .. } => {
                let r = res_idx[&i];
                for d in 0..k {
                    let w = pattern.weights[d];
                    for h in 0..hpd {
                        let ts = d * hpd + h;
                        let mut terms = Vec::new();
                        // Level after this slice minus level before it...
                        let after = if h + 1 == hpd {
                            WaterRef::Start { reservoir: r }
                        } else {
                            WaterRef::Level { reservoir: r, day: d, hour: h + 1 }
                        };
                        let before = if h == 0 {
                            WaterRef::Start { reservoir: r }
                        } else {
                            WaterRef::Level { reservoir: r, day: d, hour: h }
                        };
                        if after == before {
                            // Single-slice days collapse the recursion to
                            // pure pass-through.
                        } else {
                            terms.push((after, w));
                            terms.push((before, -w));
                        }
                        // ...equals inflow minus outflow for one repetition,
                        // scaled by the weight to stay in annual units.
                        for &li in ins {
                            terms.push((WaterRef::Flow { link: li, ts }, -1.0));
                        }
                        for &li in outs {
                            terms.push((WaterRef::Flow { link: li, ts }, 1.0));
                        }
                        rows.push(FragmentRow {
                            label: format!("lvl.{}.d{}.h{}", node.id, d, h),
                            terms,
                            sense: Sense::Eq,
                            rhs: 0.0,
                        });
                    }
                }
            }
        }
    }

    Ok(CascadeFragments {
        plants,
        reservoirs,
        links,
        rows,
        flow_upper,
        n_rep_days: k,
        hours_per_day: hpd,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_river_text() -> String {
        let rivers = ["Cehotina", "Lim", "Piva", "Tara", "Uvac"];
        let mut text = String::new();
        for r in rivers {
            let lower = r.to_lowercase();
            text.push_str(&format!("node src_{lower} catchment river={r}\n"));
            text.push_str(&format!("node seg_{lower} river_segment\n"));
            text.push_str(&format!("link src_{lower} -> seg_{lower}\n"));
        }
        // One storage plant on the Piva, run-of-river on the Lim, a shared
        // downstream confluence segment acting as the sink.
        text.push_str(
            "node piva_res reservoir storage_mcm=790 level_min=50 level_max=790\n\
             node piva_hpp plant region=ME capacity_mw=342 rate_mwh_per_mcm=280 life=60\n\
             node piva_spill spillway\n\
             node lim_hpp plant region=RS capacity_mw=110 rate_mwh_per_mcm=150\n\
             node confluence river_segment\n\
             link seg_piva -> piva_res\n\
             link piva_res -> piva_hpp\n\
             link piva_res -> piva_spill\n\
             link piva_hpp -> confluence\n\
             link piva_spill -> confluence\n\
             link seg_lim -> lim_hpp\n\
             link lim_hpp -> confluence\n\
             link seg_cehotina -> confluence\n\
             link seg_tara -> confluence\n\
             link seg_uvac -> confluence\n",
        );
        text
    }

    fn flat_inflows(rivers: &[&str], mcm_per_day: f64) -> InflowRecords {
        let mut map = BTreeMap::new();
        for r in rivers {
            map.insert(r.to_string(), vec![mcm_per_day; 365]);
        }
        InflowRecords { rivers: map }
    }

    #[test]
    fn five_river_network_builds_and_validates() {
        let topo = build_topology(&five_river_text()).unwrap();
        assert_eq!(topo.nodes.len(), 15);
        assert_eq!(topo.links.len(), 15);
        let hpp = topo.node_index("piva_hpp").unwrap();
        match &topo.nodes[hpp].data {
            NodeData::Plant(p) => {
                assert_eq!(p.region, "ME");
                assert_eq!(p.capacity_mw, 342.0);
                assert_eq!(p.life, 60);
            }
            other => panic!("expected plant, got {other:?}"),
        }
        let desc = topo.describe();
        assert!(desc.contains("node piva_res reservoir"));
        assert!(desc.contains("link piva_res -> piva_spill"));
    }

    #[test]
    fn validation_rejects_malformed_networks() {
        let dup = "node a catchment river=R\nnode a spillway\n";
        assert!(matches!(build_topology(dup), Err(CascadeError::DuplicateNode { .. })));

        let dangling = "node a catchment river=R\nlink a -> ghost\n";
        assert!(matches!(build_topology(dangling), Err(CascadeError::UnknownNode { .. })));

        let cyclic = "node a river_segment river=R\nnode b river_segment\n\
                      link a -> b\nlink b -> a\n";
        assert!(matches!(build_topology(cyclic), Err(CascadeError::Cycle { .. })));

        let bad_plant = "node c catchment river=R\n\
                         node p plant region=X rate_mwh_per_mcm=100\n\
                         link c -> p\n";
        // Plant without an outlet.
        assert!(matches!(build_topology(bad_plant), Err(CascadeError::BadDegree { .. })));

        let no_river = "node c catchment\nnode s river_segment\nlink c -> s\n";
        assert!(matches!(
            build_topology(no_river),
            Err(CascadeError::MissingAttr { attr: "river", .. })
        ));

        let entry_seg = "node s river_segment\nnode t river_segment\nlink s -> t\n";
        assert!(matches!(
            build_topology(entry_seg),
            Err(CascadeError::MissingAttr { attr: "river", .. })
        ));

        let bad_outlet = "node c catchment river=R\n\
                          node r reservoir storage_mcm=10\n\
                          node s river_segment\n\
                          link c -> r\nlink r -> s\n";
        assert!(matches!(build_topology(bad_outlet), Err(CascadeError::BadDegree { .. })));

        let dup_link = "node c catchment river=R\nnode s river_segment\n\
                        link c -> s\nlink c -> s\n";
        assert!(matches!(build_topology(dup_link), Err(CascadeError::DuplicateLink { .. })));

        let bad_attr = "node c catchment river=R speed=9\n";
        assert!(matches!(build_topology(bad_attr), Err(CascadeError::BadAttr { .. })));
    }

    #[test]
    fn inflow_splits_days_and_applies_weights() {
        let text = "node c catchment river=R scale=0.5\nnode s river_segment\nlink c -> s\n";
        let topo = build_topology(text).unwrap();
        let mut records = flat_inflows(&["R"], 0.0);
        let series = records.rivers.get_mut("R").unwrap();
        series[10] = 24.0;
        series[20] = 48.0;
        let pattern =
            DayPattern { source_days: vec![10, 20], weights: vec![200.0, 165.0], hours_per_day: 3 };
        let inflows = inflow_per_timeslice(&topo, &records, &pattern).unwrap();
        let v = &inflows["c"];
        assert_eq!(v.len(), 6);
        // day 0: 24 * 0.5 * 200 / 3 per slice
        for h in 0..3 {
            assert!((v[h] - 800.0).abs() < 1e-12);
        }
        // day 1: 48 * 0.5 * 165 / 3 per slice
        for h in 3..6 {
            assert!((v[h] - 1320.0).abs() < 1e-12);
        }
        let total: f64 = v.iter().sum();
        assert!((total - (24.0 * 0.5 * 200.0 + 48.0 * 0.5 * 165.0)).abs() < 1e-9);
    }

    #[test]
    fn capacities_prefer_explicit_then_historical_max() {
        let text = "node c catchment river=R\n\
                    node s1 river_segment cap_mcm_per_day=5\n\
                    node s2 river_segment river=R\n\
                    node s3 river_segment river=Dry\n\
                    link c -> s1\nlink s1 -> s2\nlink s2 -> s3\n";
        let topo = build_topology(text).unwrap();
        let mut records = flat_inflows(&["R", "Dry"], 0.0);
        let series = records.rivers.get_mut("R").unwrap();
        series[100] = 7.5;

        let (caps, warnings) = segment_capacities(&topo, &records).unwrap();
        assert_eq!(caps["s1"], 5.0);
        assert_eq!(caps["s2"], 7.5);
        assert_eq!(caps["s3"], 0.0);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("s3"));
        assert!(warnings[0].contains("Dry"));
    }

    #[test]
    fn run_of_river_fragments_balance_inflow() {
        let text = "node c catchment river=R\n\
                    node p plant region=X rate_mwh_per_mcm=100 capacity_mw=50\n\
                    node out river_segment\n\
                    link c -> p\nlink p -> out\n";
        let topo = build_topology(text).unwrap();
        let records = flat_inflows(&["R"], 10.0);
        let pattern = DayPattern { source_days: vec![0], weights: vec![365.0], hours_per_day: 2 };
        let frags = compile_to_model(&topo, &records, &pattern).unwrap();

        assert_eq!(frags.plants.len(), 1);
        assert_eq!(frags.plants[0].node_id, "p");
        assert!(frags.reservoirs.is_empty());
        assert_eq!(frags.links.len(), 2);
        // catchment balance (2 ts) + plant balance (2) + turbine coupling (2);
        // terminal segment emits nothing.
        assert_eq!(frags.rows.len(), 6);

        let catchment: Vec<&FragmentRow> =
            frags.rows.iter().filter(|r| r.label.starts_with("wb.c.")).collect();
        assert_eq!(catchment.len(), 2);
        for row in catchment {
            assert_eq!(row.sense, Sense::Eq);
            assert!((row.rhs - 10.0 * 365.0 / 2.0).abs() < 1e-9);
            assert_eq!(row.terms.len(), 1);
        }
        let turb: Vec<&FragmentRow> =
            frags.rows.iter().filter(|r| r.label.starts_with("turb.p.")).collect();
        assert_eq!(turb.len(), 2);
        for row in turb {
            assert!(row
                .terms
                .iter()
                .any(|(r, c)| matches!(r, WaterRef::PlantGen { .. }) && *c == 1.0));
            assert!(row
                .terms
                .iter()
                .any(|(r, c)| matches!(r, WaterRef::Flow { .. }) && *c == -100.0));
        }
        assert!(frags.flow_upper.iter().flatten().all(|&u| u.is_infinite()));
    }

    #[test]
    fn reservoir_recursion_ties_day_ends_to_start_level() {
        let text = "node c catchment river=R\n\
                    node res reservoir storage_mcm=100 level_min=10 level_max=90\n\
                    node p plant region=X rate_mwh_per_mcm=100\n\
                    node out river_segment\n\
                    link c -> res\nlink res -> p\nlink p -> out\n";
        let topo = build_topology(text).unwrap();
        let records = flat_inflows(&["R"], 12.0);
        let pattern = DayPattern { source_days: vec![0], weights: vec![365.0], hours_per_day: 3 };
        let frags = compile_to_model(&topo, &records, &pattern).unwrap();

        assert_eq!(frags.reservoirs.len(), 1);
        assert_eq!(frags.reservoirs[0].level_min, 10.0);
        let lvl: Vec<&FragmentRow> =
            frags.rows.iter().filter(|r| r.label.starts_with("lvl.res.")).collect();
        assert_eq!(lvl.len(), 3);

        // Hour 0: before-level is the start variable.
        let h0 = lvl.iter().find(|r| r.label.ends_with(".h0")).unwrap();
        assert!(h0
            .terms
            .iter()
            .any(|(r, c)| *r == WaterRef::Start { reservoir: 0 } && *c == -365.0));
        assert!(h0.terms.iter().any(
            |(r, c)| *r == WaterRef::Level { reservoir: 0, day: 0, hour: 1 } && *c == 365.0
        ));
        // Last hour: after-level wraps to the start variable.
        let h2 = lvl.iter().find(|r| r.label.ends_with(".h2")).unwrap();
        assert!(h2
            .terms
            .iter()
            .any(|(r, c)| *r == WaterRef::Start { reservoir: 0 } && *c == 365.0));
        // Inflow enters with -1, outflow with +1.
        for row in &lvl {
            assert!(row
                .terms
                .iter()
                .any(|(r, c)| matches!(r, WaterRef::Flow { link: 0, .. }) && *c == -1.0));
            assert!(row
                .terms
                .iter()
                .any(|(r, c)| matches!(r, WaterRef::Flow { link: 1, .. }) && *c == 1.0));
        }
    }

    #[test]
    fn single_outlet_caps_become_bounds_and_branches_become_rows() {
        let text = "node c catchment river=R\n\
                    node s river_segment cap_mcm_per_day=6\n\
                    node f1 river_segment\n\
                    node f2 river_segment\n\
                    node b river_segment cap_mcm_per_day=4\n\
                    link c -> s\nlink s -> b\nlink b -> f1\nlink b -> f2\n";
        let topo = build_topology(text).unwrap();
        let records = flat_inflows(&["R"], 3.0);
        let pattern = DayPattern { source_days: vec![0], weights: vec![365.0], hours_per_day: 2 };
        let frags = compile_to_model(&topo, &records, &pattern).unwrap();

        // Segment s has a single outlet: its cap lands on link s->b (index 1).
        let expect = 6.0 * 365.0 / 2.0;
        for ts in 0..2 {
            assert!((frags.flow_upper[1][ts] - expect).abs() < 1e-9);
        }
        // Segment b branches: expect explicit segcap rows instead.
        let segcap: Vec<&FragmentRow> =
            frags.rows.iter().filter(|r| r.label.starts_with("segcap.b.")).collect();
        assert_eq!(segcap.len(), 2);
        for row in segcap {
            assert_eq!(row.sense, Sense::Le);
            assert!((row.rhs - 4.0 * 365.0 / 2.0).abs() < 1e-9);
            assert_eq!(row.terms.len(), 2);
        }
    }

    #[test]
    fn inflow_csv_requires_full_years() {
        let good = "river,day_of_year,discharge_mcm_per_day\n".to_string()
            + &(1..=365).map(|d| format!("R,{d},1.5\n")).collect::<String>();
        let records = read_inflows_str(&good).unwrap();
        assert_eq!(records.rivers["R"].len(), 365);
        assert_eq!(records.daily("R", 100).unwrap(), 1.5);

        let short = "river,day_of_year,discharge_mcm_per_day\nR,1,1.0\n";
        assert!(matches!(read_inflows_str(short), Err(CascadeError::BadInflow { .. })));

        let negative = "river,day_of_year,discharge_mcm_per_day\n".to_string()
            + &(1..=364).map(|d| format!("R,{d},1.0\n")).collect::<String>()
            + "R,365,-2.0\n";
        assert!(matches!(read_inflows_str(&negative), Err(CascadeError::BadInflow { .. })));
    }

    #[test]
    fn pattern_validation_guards_shapes() {
        let bad = DayPattern { source_days: vec![0, 1], weights: vec![365.0], hours_per_day: 24 };
        assert!(bad.validate().is_err());
        let bad_h = DayPattern { source_days: vec![0], weights: vec![365.0], hours_per_day: 25 };
        assert!(bad_h.validate().is_err());
        let ok = DayPattern {
            source_days: vec![0, 1],
            weights: vec![200.0, 165.0],
            hours_per_day: 24,
        };
        assert!(ok.validate().is_ok());
        assert_eq!(ok.n_ts(), 48);
    }
}
