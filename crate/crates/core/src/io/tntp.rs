//! Reader for the TNTP network and trips text formats.
//!
//! Network rows are `init term capacity length fft B power [...] ;`. Trips
//! files hold `Origin k` blocks followed by `dest : demand;` entries.
//! Metadata tags are read for consistency checks and otherwise ignored.

use std::collections::BTreeMap;

use super::{FormatError, Parsed};
use crate::cost::CostSpec;
use crate::network::{Instance, Network, OdPair};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TntpArc {
    pub init: usize,
    pub term: usize,
    pub capacity: f64,
    pub length: f64,
    pub free_flow_time: f64,
    pub b: f64,
    pub power: f64,
}

impl TntpArc {
    pub fn cost(&self) -> CostSpec {
        CostSpec::bpr(self.free_flow_time, self.capacity, self.b, self.power)
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Splits off `<TAG> value` metadata lines. Returns tags and the 1-based
/// line number where the body starts.
fn metadata(text: &str) -> (BTreeMap<String, String>, usize) {
    let mut tags = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        let Some(rest) = line.strip_prefix('<') else {
            return (tags, i + 1);
        };
        let Some((tag, value)) = rest.split_once('>') else {
            return (tags, i + 1);
        };
        let tag = tag.trim().to_ascii_uppercase();
        if tag == "END OF METADATA" {
            return (tags, i + 2);
        }
        tags.insert(tag, value.trim().to_string());
    }
    (tags, text.lines().count() + 1)
}

fn column_of(raw: &str, token: &str) -> usize {
    let base = raw.as_ptr() as usize;
    token.as_ptr() as usize - base + 1
}

fn parse_num<T: std::str::FromStr>(raw: &str, token: &str, line: usize, what: &str) -> Result<T, FormatError> {
    token
        .parse()
        .map_err(|_| syntax(line, column_of(raw, token), format!("bad {what} {token:?}")))
}

/// Arcs, declared node count and warnings of a network file.
pub type NetworkFile = (Vec<TntpArc>, Option<usize>, Vec<String>);

/// `(origin, destination, demand)` triples and warnings of a trips file.
pub type TripsFile = (Vec<(usize, usize, f64)>, Vec<String>);

/// Parses a network file. Returns arcs, the declared node count and
/// warnings.
pub fn parse_tntp_network(text: &str) -> Result<NetworkFile, FormatError> {
    let (tags, body_start) = metadata(text);
    let mut warnings = Vec::new();
    let mut arcs = Vec::new();
    for (i, raw) in text.lines().enumerate().skip(body_start - 1) {
        let line_no = i + 1;
        let content = raw.split('~').next().unwrap_or("");
        let content = content.split(';').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 7 {
            return Err(syntax(
                line_no,
                column_of(raw, tokens[0]),
                format!("expected at least 7 fields, found {}", tokens.len()),
            ));
        }
        arcs.push(TntpArc {
            init: parse_num(raw, tokens[0], line_no, "node id")?,
            term: parse_num(raw, tokens[1], line_no, "node id")?,
            capacity: parse_num(raw, tokens[2], line_no, "capacity")?,
            length: parse_num(raw, tokens[3], line_no, "length")?,
            free_flow_time: parse_num(raw, tokens[4], line_no, "free-flow time")?,
            b: parse_num(raw, tokens[5], line_no, "B")?,
            power: parse_num(raw, tokens[6], line_no, "power")?,
        });
    }
    if let Some(declared) = tags.get("NUMBER OF LINKS").and_then(|v| v.parse::<usize>().ok()) {
        if declared != arcs.len() {
            warnings.push(format!(
                "network declares {declared} links but has {} rows",
                arcs.len()
            ));
        }
    }
    let nodes = tags.get("NUMBER OF NODES").and_then(|v| v.parse().ok());
    Ok((arcs, nodes, warnings))
}

/// Parses a trips file into `(origin, destination, demand)` triples.
/// Zero and diagonal entries are skipped.
pub fn parse_tntp_trips(text: &str) -> Result<TripsFile, FormatError> {
    let (tags, body_start) = metadata(text);
    let mut warnings = Vec::new();
    let mut trips = Vec::new();
    let mut origin: Option<usize> = None;
    let mut total = 0.0;
    for (i, raw) in text.lines().enumerate().skip(body_start - 1) {
        let line_no = i + 1;
        let content = raw.split('~').next().unwrap_or("");
        let trimmed = content.trim_start();
        if let Some(rest) = trimmed.strip_prefix("Origin") {
            let tok = rest.trim();
            origin = Some(parse_num(raw, tok, line_no, "origin")?);
            continue;
        }
        for entry in content.split(';') {
            if entry.trim().is_empty() {
                continue;
            }
            let Some((dest, demand)) = entry.split_once(':') else {
                return Err(syntax(line_no, column_of(raw, entry.trim()), "expected `dest : demand`"));
            };
            let Some(o) = origin else {
                return Err(syntax(line_no, column_of(raw, entry.trim()), "entry before any Origin line"));
            };
            let d: usize = parse_num(raw, dest.trim(), line_no, "destination")?;
            let v: f64 = parse_num(raw, demand.trim(), line_no, "demand")?;
            total += v;
            if v != 0.0 && d != o {
                trips.push((o, d, v));
            }
        }
    }
    if let Some(declared) = tags.get("TOTAL OD FLOW").and_then(|v| v.parse::<f64>().ok()) {
        if (declared - total).abs() > 1e-6 * declared.abs().max(1.0) {
            warnings.push(format!(
                "trips declare total {declared} but entries sum to {total}; declared total ignored"
            ));
        }
    }
    Ok((trips, warnings))
}

/// Builds an instance from a network file and a trips file. Nodes are named
/// by their TNTP ids `1..=n`.
pub fn parse_tntp(network: &str, trips: &str) -> Result<Parsed, FormatError> {
    let (arcs, declared_nodes, mut warnings) = parse_tntp_network(network)?;
    let (trips, trip_warnings) = parse_tntp_trips(trips)?;
    warnings.extend(trip_warnings);
    let max_id = arcs
        .iter()
        .flat_map(|a| [a.init, a.term])
        .chain(trips.iter().flat_map(|t| [t.0, t.1]))
        .max()
        .unwrap_or(0);
    let n = declared_nodes.unwrap_or(0).max(max_id);
    let id = |k: usize| {
        k.checked_sub(1)
            .ok_or_else(|| FormatError::UnknownNode(k.to_string()))
    };
    let arc_list = arcs
        .iter()
        .map(|a| Ok((id(a.init)?, id(a.term)?, a.cost())))
        .collect::<Result<Vec<_>, FormatError>>()?;
    let od_pairs = trips
        .iter()
        .map(|&(o, d, v)| Ok(OdPair::new(id(o)?, id(d)?, v)))
        .collect::<Result<Vec<_>, FormatError>>()?;
    let network = Network::new((1..=n).map(|i| i.to_string()).collect(), arc_list);
    Ok(Parsed {
        instance: Instance::new(network, od_pairs),
        warnings,
    })
}
