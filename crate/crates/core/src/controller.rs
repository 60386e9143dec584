//! The query router: normalizes user demand into (level, location, time),
//! selects the data assets a query needs, and aggregates sub-results into
//! one grounded answer.

use regex::Regex;
use thiserror::Error;

use crate::asset::{AssetRegistry, GeoExtent, Modality, TimePoint, TimeRange};
use crate::table::columns_from_summary;
use crate::util::{approx_eq, extract_numbers};
use crate::Guid;

/// The what / where / why hierarchy, ordered by analytical depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum AnalysisLevel {
    What,
    Where,
    Why,
}

impl std::fmt::Display for AnalysisLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AnalysisLevel::What => "what",
            AnalysisLevel::Where => "where",
            AnalysisLevel::Why => "why",
        };
        f.write_str(s)
    }
}

impl AnalysisLevel {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "what" => AnalysisLevel::What,
            "where" => AnalysisLevel::Where,
            "why" => AnalysisLevel::Why,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub name: String,
    pub bbox: Option<GeoExtent>,
}

/// A user query normalized to (analysis level, location, time range).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedQuery {
    pub raw: String,
    pub level: AnalysisLevel,
    pub location: Option<Location>,
    pub time: Option<TimeRange>,
}

#[derive(Debug, Clone, Default)]
pub struct AlignDefaults {
    pub location: Option<Location>,
    pub time: Option<TimeRange>,
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("no assets match the aligned query")]
    NoMatchingAssets,
    #[error("no sub-results to aggregate")]
    EmptyResults,
    #[error("artifact {0} does not resolve in the registry")]
    DanglingArtifact(Guid),
    #[error(transparent)]
    Asset(#[from] crate::asset::AssetError),
}

/// Case-insensitive place-name lookup backed by a configuration file, one
/// record per line: `name, min_lon, min_lat, max_lon, max_lat`.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<(String, GeoExtent)>,
}

impl Gazetteer {
    pub fn new(entries: Vec<(String, GeoExtent)>) -> Self {
        Gazetteer { entries }
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for line in content.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(|p| p.trim()).collect();
            if parts.len() != 5 {
                continue;
            }
            let nums: Option<Vec<f64>> = parts[1..].iter().map(|p| p.parse().ok()).collect();
            if let Some(ns) = nums {
                if let Ok(e) = GeoExtent::new(ns[0], ns[1], ns[2], ns[3]) {
                    entries.push((parts[0].to_string(), e));
                }
            }
        }
        Ok(Gazetteer { entries })
    }

    /// Longest configured name appearing in the query, case-insensitive.
    pub fn find_in(&self, query: &str) -> Option<Location> {
        let q = query.to_lowercase();
        let mut best: Option<&(String, GeoExtent)> = None;
        for entry in &self.entries {
            if q.contains(&entry.0.to_lowercase()) {
                match best {
                    Some(b) if b.0.len() >= entry.0.len() => {}
                    _ => best = Some(entry),
                }
            }
        }
        best.map(|(name, bbox)| Location {
            name: name.clone(),
            bbox: Some(*bbox),
        })
    }
}

const WHY_PATTERNS: [&str; 5] = [
    "correlation",
    "influential factor",
    "why",
    "explain the relationship",
    "further analysis",
];
const WHERE_PATTERNS: [&str; 4] = ["distribution map", "cluster map", "where", "cluster"];

/// Deterministic keyword classification; total over non-empty queries.
pub fn classify_level(query: &str) -> AnalysisLevel {
    let q = query.to_lowercase();
    if WHY_PATTERNS.iter().any(|p| q.contains(p)) {
        return AnalysisLevel::Why;
    }
    if WHERE_PATTERNS.iter().any(|p| q.contains(p)) {
        return AnalysisLevel::Where;
    }
    AnalysisLevel::What
}

const MONTHS: [(&str, u32); 12] = [
    ("january", 1),
    ("february", 2),
    ("march", 3),
    ("april", 4),
    ("may", 5),
    ("june", 6),
    ("july", 7),
    ("august", 8),
    ("september", 9),
    ("october", 10),
    ("november", 11),
    ("december", 12),
];

fn extract_time(query: &str) -> Option<TimeRange> {
    let q = query.to_lowercase();
    let range_re = Regex::new(r"(?:between|from)\s+(\d{4})\s+(?:and|to)\s+(\d{4})").unwrap();
    if let Some(c) = range_re.captures(&q) {
        let a: i32 = c[1].parse().ok()?;
        let b: i32 = c[2].parse().ok()?;
        return Some(TimeRange::new(
            TimePoint::year(a.min(b)),
            TimePoint::year(a.max(b)),
        ));
    }
    // Month-year ("december 2017").
    for (name, m) in MONTHS {
        let re = Regex::new(&format!(r"{name}\s+(\d{{4}})")).unwrap();
        if let Some(c) = re.captures(&q) {
            let y: i32 = c[1].parse().ok()?;
            let p = TimePoint {
                year: y,
                month: Some(m),
                day: None,
            };
            return Some(TimeRange::new(p, p));
        }
    }
    // Bare years.
    let year_re = Regex::new(r"\b(1[89]\d\d|2[01]\d\d)\b").unwrap();
    let years: Vec<i32> = year_re
        .captures_iter(&q)
        .filter_map(|c| c[1].parse().ok())
        .collect();
    if years.is_empty() {
        return None;
    }
    let min = *years.iter().min().unwrap();
    let max = *years.iter().max().unwrap();
    Some(TimeRange::new(TimePoint::year(min), TimePoint::year(max)))
}

/// Normalize a query: level by keyword rules, location by gazetteer lookup,
/// time by year/month patterns, with configured fallbacks for the latter two.
pub fn align_demand(
    query: &str,
    gazetteer: &Gazetteer,
    defaults: &AlignDefaults,
) -> Result<AlignedQuery, ControllerError> {
    if query.trim().is_empty() {
        return Err(ControllerError::EmptyQuery);
    }
    let level = classify_level(query);
    let location = gazetteer.find_in(query).or_else(|| defaults.location.clone());
    let time = extract_time(query).or(defaults.time);
    Ok(AlignedQuery {
        raw: query.to_string(),
        level,
        location,
        time,
    })
}

/// Select the assets relevant to an aligned query: time intersection when
/// both sides carry time, extent intersection when both carry geography,
/// plus level-driven modality requirements. Deterministic order:
/// (modality, GUID text).
pub fn select_modalities(
    aligned: &AlignedQuery,
    registry: &AssetRegistry,
) -> Result<Vec<Guid>, ControllerError> {
    let assets = registry.assets();
    if assets.is_empty() {
        return Err(ControllerError::NoMatchingAssets);
    }
    let qbox = aligned.location.as_ref().and_then(|l| l.bbox);
    let mut picked: Vec<&crate::asset::DataAsset> = assets
        .iter()
        .filter(|a| {
            let time_ok = match (&aligned.time, &a.time_tag) {
                (Some(range), Some(tag)) => range.contains_point(tag),
                _ => true,
            };
            let geo_ok = match (&qbox, &a.geo_extent) {
                (Some(b), Some(e)) => b.intersects(e),
                _ => true,
            };
            time_ok && geo_ok
        })
        .collect();
    if picked.is_empty() {
        return Err(ControllerError::NoMatchingAssets);
    }
    match aligned.level {
        AnalysisLevel::Where => {
            if !picked.iter().any(|a| a.modality == Modality::Vector) {
                return Err(ControllerError::NoMatchingAssets);
            }
        }
        AnalysisLevel::Why => {
            // Need >= 2 tables sharing a group key (common column name).
            let tables: Vec<&&crate::asset::DataAsset> = picked
                .iter()
                .filter(|a| a.modality == Modality::Table)
                .collect();
            let mut ok = false;
            'outer: for i in 0..tables.len() {
                let ci = columns_from_summary(&tables[i].schema_summary);
                for t in tables.iter().skip(i + 1) {
                    let cj = columns_from_summary(&t.schema_summary);
                    if ci.iter().any(|c| cj.contains(c)) {
                        ok = true;
                        break 'outer;
                    }
                }
            }
            if !ok {
                return Err(ControllerError::NoMatchingAssets);
            }
        }
        AnalysisLevel::What => {}
    }
    picked.sort_by_key(|a| (a.modality, a.guid.to_string()));
    Ok(picked.iter().map(|a| a.guid).collect())
}

/// One sub-task outcome feeding aggregation.
#[derive(Debug, Clone)]
pub struct SubResult {
    pub subtask: String,
    pub text: String,
    pub artifacts: Vec<Guid>,
}

/// The final response: answer text, generated artifact GUIDs, and the flags
/// the scoring layer reads.
#[derive(Debug, Clone)]
pub struct AgentAnswer {
    pub text: String,
    pub artifacts: Vec<Guid>,
    /// True when the answer is backed by successful tool observations and
    /// introduces no unobserved numerals.
    pub grounded: bool,
    /// False when the loop hit its round limit or aborted.
    pub complete: bool,
}

/// Concatenate sub-results in order and cite every artifact by its
/// registered filename. Artifacts must resolve.
pub fn aggregate_results(
    registry: &AssetRegistry,
    sub_results: &[SubResult],
) -> Result<AgentAnswer, ControllerError> {
    if sub_results.is_empty() {
        return Err(ControllerError::EmptyResults);
    }
    let mut artifacts = Vec::new();
    let mut files = Vec::new();
    for sr in sub_results {
        for g in &sr.artifacts {
            let asset = registry
                .resolve(*g)
                .map_err(|_| ControllerError::DanglingArtifact(*g))?;
            if !artifacts.contains(g) {
                artifacts.push(*g);
                let base = std::path::Path::new(&asset.uri)
                    .file_name()
                    .map(|f| f.to_string_lossy().to_string())
                    .unwrap_or(asset.uri.clone());
                files.push(base);
            }
        }
    }
    let mut text = sub_results
        .iter()
        .map(|sr| sr.text.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n");
    if !files.is_empty() {
        text.push_str(&format!("\n\nGenerated artifacts: {}", files.join(", ")));
    }
    Ok(AgentAnswer {
        text,
        artifacts,
        grounded: true,
        complete: true,
    })
}

/// The grounding rule: every numeric literal in `answer_text` must occur in
/// some observation or in the query itself. The comparison allows 1e-6
/// (absolute or relative) so a value displayed at six decimals still matches
/// its full-precision form in an observation.
pub fn numerals_grounded(answer_text: &str, sources: &[&str]) -> bool {
    let allowed: Vec<f64> = sources
        .iter()
        .flat_map(|s| extract_numbers(s))
        .map(|t| t.value)
        .collect();
    extract_numbers(answer_text)
        .iter()
        .all(|t| allowed.iter().any(|&a| approx_eq(t.value, a, 1e-6)))
}

/// Filenames mentioned in answer text (tokens with a path-like extension).
pub fn mentioned_filenames(text: &str) -> Vec<String> {
    let re = Regex::new(r"[A-Za-z0-9_./-]+\.(?:csv|ppm|asc|shp|dbf|json|legend|txt)").unwrap();
    re.find_iter(text).map(|m| m.as_str().to_string()).collect()
}

/// Every filename mentioned must resolve in the registry (by uri or by
/// file-name component) — the "never fake a file name" rule.
pub fn filenames_resolve(registry: &AssetRegistry, text: &str) -> bool {
    mentioned_filenames(text).iter().all(|f| {
        let base = std::path::Path::new(f)
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| f.clone());
        registry.find_by_uri(&base).is_some() || registry.find_by_uri(f).is_some()
    })
}
