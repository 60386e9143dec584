//! Registered tools: the name/parameter descriptions that drive prompt
//! assembly, and the dispatch layer binding each tool to a toolkit
//! operation.
//!
//! Tools address assets three ways: the GUID text, the alias announced in a
//! prior observation (out1, out2, ...), or an ingested file name. All three
//! resolve through the registry; with alignment disabled resolution is off
//! and every asset-taking call fails, which is exactly the degradation the
//! no-alignment configuration measures.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, ClusterLabeling};
use crate::asset::Guid;
use crate::geo::{self, GeoError, PolygonGeom};
use crate::raster::{self, RasterError};
use crate::table::{self, Aggregate, FilterOp, FilterSpec, JoinKind, Literal, TableError};
use crate::util::fmt_num;
use crate::viz::{self, VizError};
use crate::workspace::{Workspace, WorkspaceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ToolGroup {
    Tabular,
    Vector,
    Raster,
    Analytics,
    Viz,
    /// Raw-excerpt access that comes with ingested data, not the toolkit.
    Data,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: &'static str,
    pub required: bool,
}

#[derive(Debug, Clone)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
    pub group: ToolGroup,
}

#[derive(Debug, Clone, Default)]
pub struct ToolSet {
    specs: Vec<ToolSpec>,
}

impl ToolSet {
    pub fn names(&self) -> Vec<&'static str> {
        self.specs.iter().map(|s| s.name).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolSpec> {
        self.specs.iter()
    }

    pub fn retain(&mut self, f: impl FnMut(&ToolSpec) -> bool) {
        self.specs.retain(f);
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn render_list(&self) -> String {
        if self.specs.is_empty() {
            return "(no tools registered)".to_string();
        }
        self.specs
            .iter()
            .map(|s| {
                let params: Vec<String> = s
                    .params
                    .iter()
                    .map(|p| {
                        format!(
                            "{} ({}{})",
                            p.name,
                            p.kind,
                            if p.required { "" } else { ", optional" }
                        )
                    })
                    .collect();
                format!("- {}: {} Params: {}", s.name, s.description, params.join(", "))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn p(name: &'static str, kind: &'static str, required: bool) -> ParamSpec {
    ParamSpec {
        name,
        kind,
        required,
    }
}

/// The full toolkit.
pub fn builtin_toolset() -> ToolSet {
    use ToolGroup::*;
    let specs = vec![
        ToolSpec {
            name: "read_table",
            description: "Parse a delimited text file with a header row and register it as a table asset.",
            params: vec![p("path", "text", true)],
            group: Tabular,
        },
        ToolSpec {
            name: "filter_rows",
            description: "Keep the rows of a table satisfying a predicate (or a conjunction via 'predicates').",
            params: vec![
                p("table", "asset", true),
                p("column", "text", false),
                p("op", "text", false),
                p("value", "literal", false),
                p("start", "number", false),
                p("end", "number", false),
                p("predicates", "array", false),
            ],
            group: Tabular,
        },
        ToolSpec {
            name: "join_tables",
            description: "Join two tables on a shared key column (inner by default, or left).",
            params: vec![
                p("left", "asset", true),
                p("right", "asset", true),
                p("key", "text", true),
                p("kind", "text", false),
            ],
            group: Tabular,
        },
        ToolSpec {
            name: "describe",
            description: "Descriptive statistics for one column (count, nulls, min, max, mean, std or distinct).",
            params: vec![p("table", "asset", true), p("column", "text", true)],
            group: Tabular,
        },
        ToolSpec {
            name: "group_aggregate",
            description: "Aggregate a value column per distinct group key (count, sum, or mean).",
            params: vec![
                p("table", "asset", true),
                p("group_key", "text", true),
                p("value", "text", true),
                p("agg", "text", true),
            ],
            group: Tabular,
        },
        ToolSpec {
            name: "change_table",
            description: "Per-key change between two snapshot tables: value before, after, and difference.",
            params: vec![
                p("before", "asset", true),
                p("after", "asset", true),
                p("key", "text", true),
                p("value", "text", true),
            ],
            // Change aggregation over tables is a table capability; the
            // single-modality variant keeps it.
            group: Tabular,
        },
        ToolSpec {
            name: "parse_vector",
            description: "Parse a vector file (.shp with sibling .dbf, or FeatureCollection JSON) and register it.",
            params: vec![p("path", "text", true)],
            group: Vector,
        },
        ToolSpec {
            name: "validate_geometry",
            description: "Repair a vector asset: close rings, fix winding, drop degenerate features.",
            params: vec![p("asset", "asset", true)],
            group: Vector,
        },
        ToolSpec {
            name: "spatial_join",
            description: "Tag each point with an attribute of the first containing polygon.",
            params: vec![
                p("points", "asset", true),
                p("polygons", "asset", true),
                p("tag_column", "text", true),
            ],
            group: Vector,
        },
        ToolSpec {
            name: "parse_grid",
            description: "Parse a categorical land-cover grid (.asc plus .legend) and register it as a raster asset.",
            params: vec![p("path", "text", true)],
            group: Raster,
        },
        ToolSpec {
            name: "clip_raster",
            description: "Clip a raster to an area of interest: a lon/lat box or a polygon feature of a vector asset.",
            params: vec![
                p("raster", "asset", true),
                p("min_lon", "number", false),
                p("min_lat", "number", false),
                p("max_lon", "number", false),
                p("max_lat", "number", false),
                p("polygons", "asset", false),
                p("feature", "number", false),
            ],
            group: Raster,
        },
        ToolSpec {
            name: "class_proportions",
            description: "Fraction of non-nodata cells per land-cover class.",
            params: vec![p("raster", "asset", true)],
            group: Raster,
        },
        ToolSpec {
            name: "proportion_change",
            description: "Per-class proportion change between two rasters sharing a legend.",
            params: vec![p("before", "asset", true), p("after", "asset", true)],
            group: Raster,
        },
        ToolSpec {
            name: "dbscan",
            description: "Density-based clustering of a point table; optionally keep only the top fraction of an intensity column first.",
            params: vec![
                p("points", "asset", true),
                p("eps", "number", true),
                p("min_pts", "number", true),
                p("intensity_column", "text", false),
                p("top_fraction", "number", false),
            ],
            group: Analytics,
        },
        ToolSpec {
            name: "categorize_clusters",
            description: "Bucket cluster sizes of a labeled table into small/medium/large; optionally count medium+large per group column.",
            params: vec![
                p("table", "asset", true),
                p("label_column", "text", false),
                p("small_max", "number", true),
                p("medium_max", "number", true),
                p("group_column", "text", false),
            ],
            group: Analytics,
        },
        ToolSpec {
            name: "pearson",
            description: "Pearson correlation matrix over two or more numeric columns (pairwise-complete).",
            params: vec![p("table", "asset", true), p("columns", "array", true)],
            group: Analytics,
        },
        ToolSpec {
            name: "render_cluster_map",
            description: "Render labeled points over a polygon basemap into an image asset with a legend.",
            params: vec![
                p("points", "asset", true),
                p("basemap", "asset", true),
                p("label_column", "text", false),
            ],
            group: Viz,
        },
        ToolSpec {
            name: "render_choropleth",
            description: "Fill polygons by a numeric attribute through a 5-step ramp into an image asset.",
            params: vec![p("polygons", "asset", true), p("value_column", "text", true)],
            group: Viz,
        },
        ToolSpec {
            name: "render_heatmap",
            description: "Kernel-density heat surface of a point table, optionally over a basemap.",
            params: vec![
                p("points", "asset", true),
                p("intensity_column", "text", false),
                p("basemap", "asset", false),
                p("bandwidth", "number", false),
            ],
            group: Viz,
        },
        ToolSpec {
            name: "read_raw",
            description: "Read the leading raw text of an ingested file (bounded excerpt).",
            params: vec![p("path", "text", true)],
            group: Data,
        },
    ];
    ToolSet { specs }
}

/// The toolkit restricted to the given groups.
pub fn toolset_for_groups(groups: &[ToolGroup]) -> ToolSet {
    let mut ts = builtin_toolset();
    ts.retain(|s| groups.contains(&s.group));
    ts
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("unknown asset '{0}' (not a guid, alias, or registered file)")]
    UnknownAsset(String),
    #[error("asset resolution unavailable: data alignment is disabled")]
    AlignmentDisabled,
    #[error("missing required parameter '{0}'")]
    MissingParam(&'static str),
    #[error("parameter '{0}' is malformed")]
    BadParam(&'static str),
    #[error("action input is not a JSON object: {0}")]
    BadInput(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Viz(#[from] VizError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-query mutable state threaded through tool execution.
pub struct ToolRuntime<'a> {
    pub ws: &'a Workspace,
    pub data_dir: PathBuf,
    /// ID-tracking on/off; off breaks asset resolution and derived aliases.
    pub alignment_enabled: bool,
    pub aliases: HashMap<String, Guid>,
    next_alias: usize,
    /// Rows shown in derived-table previews.
    pub preview_rows: usize,
    /// Character cap for raw excerpts.
    pub raw_budget: usize,
}

impl<'a> ToolRuntime<'a> {
    pub fn new(ws: &'a Workspace, data_dir: impl Into<PathBuf>) -> Self {
        ToolRuntime {
            ws,
            data_dir: data_dir.into(),
            alignment_enabled: true,
            aliases: HashMap::new(),
            next_alias: 0,
            preview_rows: 12,
            raw_budget: 4000,
        }
    }

    fn resolve(&self, key: &str) -> Result<Guid, ToolError> {
        if !self.alignment_enabled {
            return Err(ToolError::AlignmentDisabled);
        }
        if let Some(g) = self.aliases.get(key) {
            return Ok(*g);
        }
        if let Ok(g) = Guid::parse(key) {
            if self.ws.registry.resolve(g).is_ok() {
                return Ok(g);
            }
        }
        if let Some(a) = self.ws.registry.find_by_uri(key) {
            return Ok(a.guid);
        }
        Err(ToolError::UnknownAsset(key.to_string()))
    }

    /// Announce a derived asset: allocate the next alias and remember it.
    /// With alignment disabled results stay untracked.
    fn track(&mut self, guid: Guid) -> Option<String> {
        if !self.alignment_enabled {
            return None;
        }
        self.next_alias += 1;
        let alias = format!("out{}", self.next_alias);
        self.aliases.insert(alias.clone(), guid);
        Some(alias)
    }

    fn file_of(&self, guid: Guid) -> String {
        self.ws
            .registry
            .resolve(guid)
            .map(|a| {
                Path::new(&a.uri)
                    .file_name()
                    .map(|f| f.to_string_lossy().to_string())
                    .unwrap_or(a.uri)
            })
            .unwrap_or_default()
    }

    fn data_path(&self, rel: &str) -> Result<PathBuf, ToolError> {
        let cand = if Path::new(rel).is_absolute() {
            PathBuf::from(rel)
        } else {
            self.data_dir.join(rel)
        };
        if !cand.exists() {
            return Err(ToolError::FileNotFound(rel.to_string()));
        }
        Ok(cand)
    }
}

/// Result of one successful tool execution.
#[derive(Debug, Clone)]
pub struct ToolOutcome {
    pub observation: String,
    pub artifacts: Vec<Guid>,
}

fn parse_input(input: &str) -> Result<Value, ToolError> {
    let t = input.trim();
    if t.is_empty() {
        return Ok(Value::Object(serde_json::Map::new()));
    }
    serde_json::from_str(t).map_err(|e| ToolError::BadInput(e.to_string()))
}

fn get_str<'v>(v: &'v Value, key: &'static str) -> Result<&'v str, ToolError> {
    v.get(key)
        .and_then(|x| x.as_str())
        .ok_or(ToolError::MissingParam(key))
}

fn opt_str<'v>(v: &'v Value, key: &str) -> Option<&'v str> {
    v.get(key).and_then(|x| x.as_str())
}

fn get_f64(v: &Value, key: &'static str) -> Result<f64, ToolError> {
    v.get(key)
        .and_then(|x| x.as_f64())
        .ok_or(ToolError::MissingParam(key))
}

fn opt_f64(v: &Value, key: &str) -> Option<f64> {
    v.get(key).and_then(|x| x.as_f64())
}

fn literal_from(v: &Value) -> Result<Literal, ToolError> {
    match v {
        Value::Number(n) => Ok(Literal::Number(n.as_f64().unwrap_or(f64::NAN))),
        Value::String(s) => Ok(Literal::Text(s.clone())),
        Value::Bool(b) => Ok(Literal::Bool(*b)),
        _ => Err(ToolError::BadParam("value")),
    }
}

fn predicate_from(obj: &Value) -> Result<(String, FilterOp, Literal), ToolError> {
    let column = get_str(obj, "column")?.to_string();
    let op_s = get_str(obj, "op")?;
    let op = FilterOp::parse(op_s).ok_or(ToolError::BadParam("op"))?;
    let literal = if op == FilterOp::InYearRange {
        let a = get_f64(obj, "start")? as i32;
        let b = get_f64(obj, "end")? as i32;
        Literal::YearRange(a.min(b), a.max(b))
    } else {
        literal_from(obj.get("value").ok_or(ToolError::MissingParam("value"))?)?
    };
    Ok((column, op, literal))
}

fn table_preview(ws: &Workspace, guid: Guid, rows: usize) -> String {
    ws.table(guid)
        .map(|t| t.preview(rows))
        .unwrap_or_default()
}

fn derived_note(rt: &ToolRuntime, alias: &Option<String>, guid: Guid, what: &str) -> String {
    match alias {
        Some(a) => format!("{what} {a} (file {})", rt.file_of(guid)),
        None => format!("{what} (untracked: alignment disabled, derived results are not addressable)"),
    }
}

/// Execute one tool call. Errors are returned (the loop folds them into the
/// observation); successful calls produce an observation plus the derived
/// asset GUIDs.
pub fn execute_tool(rt: &mut ToolRuntime, name: &str, input: &str) -> Result<ToolOutcome, ToolError> {
    let args = parse_input(input)?;
    match name {
        "read_table" => {
            let path = rt.data_path(get_str(&args, "path")?)?;
            let guid = table::read_table(rt.ws, &path)?;
            let alias = rt.track(guid);
            let summary = rt.ws.registry.resolve(guid).map(|a| a.schema_summary).unwrap_or_default();
            let note = match &alias {
                Some(a) => format!("Registered table {} as {a} (guid {guid}): {summary}", rt.file_of(guid)),
                None => format!("Parsed table {}: {summary}", rt.file_of(guid)),
            };
            Ok(ToolOutcome {
                observation: note,
                artifacts: vec![guid],
            })
        }
        "filter_rows" => {
            let table = rt.resolve(get_str(&args, "table")?)?;
            let mut spec = FilterSpec::default();
            if let Some(arr) = args.get("predicates").and_then(|p| p.as_array()) {
                for obj in arr {
                    let (c, o, l) = predicate_from(obj)?;
                    spec = spec.and(&c, o, l);
                }
            } else {
                let (c, o, l) = predicate_from(&args)?;
                spec = spec.and(&c, o, l);
            }
            let out = table::filter_rows(rt.ws, table, &spec)?;
            let n = rt.ws.table(out)?.rows.len();
            let alias = rt.track(out);
            let mut obs = format!(
                "{}: {n} rows match.",
                derived_note(rt, &alias, out, "Derived table")
            );
            if n > 0 {
                obs.push('\n');
                obs.push_str(&table_preview(rt.ws, out, rt.preview_rows));
            }
            Ok(ToolOutcome {
                observation: obs,
                artifacts: vec![out],
            })
        }
        "join_tables" => {
            let left = rt.resolve(get_str(&args, "left")?)?;
            let right = rt.resolve(get_str(&args, "right")?)?;
            let key = get_str(&args, "key")?;
            let kind = match opt_str(&args, "kind").unwrap_or("inner") {
                "left" => JoinKind::Left,
                _ => JoinKind::Inner,
            };
            let out = table::join_tables(rt.ws, left, right, key, kind)?;
            let n = rt.ws.table(out)?.rows.len();
            let alias = rt.track(out);
            let mut obs = format!(
                "{}: {n} joined rows on '{key}'.",
                derived_note(rt, &alias, out, "Derived table")
            );
            if n > 0 {
                obs.push('\n');
                obs.push_str(&table_preview(rt.ws, out, rt.preview_rows));
            }
            Ok(ToolOutcome {
                observation: obs,
                artifacts: vec![out],
            })
        }
        "describe" => {
            let table = rt.resolve(get_str(&args, "table")?)?;
            let column = get_str(&args, "column")?;
            let stats = table::describe(rt.ws, table, column)?;
            Ok(ToolOutcome {
                observation: format!("Stats of {}: {}", rt.file_of(table), stats.render()),
                artifacts: vec![],
            })
        }
        "group_aggregate" => {
            let table = rt.resolve(get_str(&args, "table")?)?;
            let group_key = get_str(&args, "group_key")?;
            let value = get_str(&args, "value")?;
            let agg = Aggregate::parse(get_str(&args, "agg")?).ok_or(ToolError::BadParam("agg"))?;
            let out = table::group_aggregate(rt.ws, table, group_key, value, agg)?;
            let t = rt.ws.table(out)?;
            let n = t.rows.len();
            let preview = t.preview(rt.preview_rows.max(20));
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{}: {n} groups.\n{preview}",
                    derived_note(rt, &alias, out, "Derived table")
                ),
                artifacts: vec![out],
            })
        }
        "change_table" => {
            let before = rt.resolve(get_str(&args, "before")?)?;
            let after = rt.resolve(get_str(&args, "after")?)?;
            let key = get_str(&args, "key")?;
            let value = get_str(&args, "value")?;
            let out = analytics::change_table(rt.ws, before, after, key, value)?;
            let t = rt.ws.table(out)?;
            let preview = t.preview(rt.preview_rows.max(20));
            let n = t.rows.len();
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{}: {n} keys compared.\n{preview}",
                    derived_note(rt, &alias, out, "Derived change table")
                ),
                artifacts: vec![out],
            })
        }
        "parse_vector" => {
            let path = rt.data_path(get_str(&args, "path")?)?;
            let guid = geo::parse_vector(rt.ws, &path)?;
            let alias = rt.track(guid);
            let summary = rt.ws.registry.resolve(guid).map(|a| a.schema_summary).unwrap_or_default();
            let note = match &alias {
                Some(a) => format!("Registered vector {} as {a} (guid {guid}): {summary}", rt.file_of(guid)),
                None => format!("Parsed vector {}: {summary}", rt.file_of(guid)),
            };
            Ok(ToolOutcome {
                observation: note,
                artifacts: vec![guid],
            })
        }
        "validate_geometry" => {
            let asset = rt.resolve(get_str(&args, "asset")?)?;
            let (out, report) = geo::validate_geometry(rt.ws, asset)?;
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{}: {} repairs.",
                    derived_note(rt, &alias, out, "Validated vector"),
                    report.repairs.len()
                ),
                artifacts: vec![out],
            })
        }
        "spatial_join" => {
            if !rt.alignment_enabled {
                return Err(ToolError::AlignmentDisabled);
            }
            let points = rt.resolve(get_str(&args, "points")?)?;
            let polygons = rt.resolve(get_str(&args, "polygons")?)?;
            let tag_column = get_str(&args, "tag_column")?;
            let out = geo::spatial_join(rt.ws, points, polygons, tag_column)?;
            let t = rt.ws.table(out)?;
            let tag_idx = t.columns.len() - 1;
            let tagged = t.rows.iter().filter(|r| !r[tag_idx].is_null()).count();
            let n = t.rows.len();
            let preview = t.preview(rt.preview_rows);
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{}: tagged {tagged} of {n} points with '{tag_column}'.\n{preview}",
                    derived_note(rt, &alias, out, "Derived table")
                ),
                artifacts: vec![out],
            })
        }
        "parse_grid" => {
            let path = rt.data_path(get_str(&args, "path")?)?;
            let guid = raster::parse_grid(rt.ws, &path)?;
            let alias = rt.track(guid);
            let summary = rt.ws.registry.resolve(guid).map(|a| a.schema_summary).unwrap_or_default();
            let note = match &alias {
                Some(a) => format!("Registered raster {} as {a} (guid {guid}): {summary}", rt.file_of(guid)),
                None => format!("Parsed raster {}: {summary}", rt.file_of(guid)),
            };
            Ok(ToolOutcome {
                observation: note,
                artifacts: vec![guid],
            })
        }
        "clip_raster" => {
            let raster_g = rt.resolve(get_str(&args, "raster")?)?;
            let aoi: PolygonGeom = if let Some(polys) = opt_str(&args, "polygons") {
                let pg = rt.resolve(polys)?;
                let ft = rt.ws.vector(pg)?;
                let fi = opt_f64(&args, "feature").unwrap_or(0.0) as usize;
                match ft.geometries.get(fi) {
                    Some(crate::geo::Geometry::Polygon(p)) => p.clone(),
                    Some(crate::geo::Geometry::MultiPolygon(ps)) if !ps.is_empty() => ps[0].clone(),
                    _ => return Err(ToolError::BadParam("feature")),
                }
            } else {
                let x0 = get_f64(&args, "min_lon")?;
                let y0 = get_f64(&args, "min_lat")?;
                let x1 = get_f64(&args, "max_lon")?;
                let y1 = get_f64(&args, "max_lat")?;
                PolygonGeom {
                    exterior: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)],
                    holes: vec![],
                }
            };
            let out = raster::clip(rt.ws, raster_g, &aoi)?;
            let r = rt.ws.raster(out)?;
            let live: usize = r.class_counts().values().sum();
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{}: {}x{} cells, {live} non-nodata.",
                    derived_note(rt, &alias, out, "Clipped raster"),
                    r.nrows, r.ncols
                ),
                artifacts: vec![out],
            })
        }
        "class_proportions" => {
            let raster_g = rt.resolve(get_str(&args, "raster")?)?;
            let r = rt.ws.raster(raster_g)?;
            let props = raster::class_proportions(&r)?;
            let lines: Vec<String> = props
                .iter()
                .map(|(code, frac)| {
                    let label = r.class_names.get(code).cloned().unwrap_or_default();
                    format!("{label} ({code}): {}", fmt_num(*frac))
                })
                .collect();
            Ok(ToolOutcome {
                observation: format!("Class proportions:\n{}", lines.join("\n")),
                artifacts: vec![],
            })
        }
        "proportion_change" => {
            let before = rt.resolve(get_str(&args, "before")?)?;
            let after = rt.resolve(get_str(&args, "after")?)?;
            let (changes, report) = raster::proportion_change(rt.ws, before, after)?;
            let alias = rt.track(report);
            Ok(ToolOutcome {
                observation: format!(
                    "Proportion change per class:\n{}\n{}",
                    raster::render_changes(&changes),
                    derived_note(rt, &alias, report, "Report table")
                ),
                artifacts: vec![report],
            })
        }
        "dbscan" => {
            let points = rt.resolve(get_str(&args, "points")?)?;
            let eps = get_f64(&args, "eps")?;
            let min_pts = get_f64(&args, "min_pts")? as usize;
            let mut prefix = String::new();
            let input_guid = match (opt_str(&args, "intensity_column"), opt_f64(&args, "top_fraction")) {
                (Some(col), Some(frac)) => {
                    let t = rt.ws.table(points)?;
                    let (filtered, threshold) = analytics::top_fraction(&t, col, frac)?;
                    let kept = filtered.rows.len();
                    let total = t.rows.len();
                    let fg = table::register_derived_table(rt.ws, filtered, &[points], "filter")?;
                    prefix = format!(
                        "Kept top {} of '{col}': {kept} of {total} points at threshold >= {}.\n",
                        fmt_num(frac),
                        fmt_num(threshold)
                    );
                    fg
                }
                _ => points,
            };
            let (out, labeling) = analytics::dbscan(rt.ws, input_guid, eps, min_pts)?;
            let sizes: Vec<String> = labeling
                .sizes()
                .iter()
                .map(|(id, n)| format!("{id}:{n}"))
                .collect();
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{prefix}Clustering with eps={}, min_pts={min_pts}: {} clusters; sizes {}; noise {}.\n{}",
                    fmt_num(eps),
                    labeling.cluster_count(),
                    if sizes.is_empty() { "(none)".to_string() } else { sizes.join(", ") },
                    labeling.noise_count(),
                    derived_note(rt, &alias, out, "Labeled table")
                ),
                artifacts: vec![out],
            })
        }
        "categorize_clusters" => {
            let table_g = rt.resolve(get_str(&args, "table")?)?;
            let label_column = opt_str(&args, "label_column").unwrap_or("cluster");
            let small_max = get_f64(&args, "small_max")? as usize;
            let medium_max = get_f64(&args, "medium_max")? as usize;
            let t = rt.ws.table(table_g)?;
            let li = t.column_index(label_column)?;
            let labels: Vec<i64> = t
                .rows
                .iter()
                .map(|r| r[li].as_number().unwrap_or(-1.0) as i64)
                .collect();
            let labeling = ClusterLabeling {
                labels: labels.clone(),
                eps: 0.0,
                min_pts: 0,
            };
            let cats = analytics::categorize_clusters(&labeling, small_max, medium_max)?;
            let mut obs = format!(
                "Cluster size categories (small<={small_max}, medium<={medium_max}): small {}, medium {}, large {}.",
                cats.small, cats.medium, cats.large
            );
            let sizes: Vec<String> = cats.sizes.iter().map(|(id, n)| format!("{id}:{n}")).collect();
            if !sizes.is_empty() {
                obs.push_str(&format!(" Sizes {}.", sizes.join(", ")));
            }
            if let Some(group_col) = opt_str(&args, "group_column") {
                let gi = t.column_index(group_col)?;
                // Each cluster belongs to the group of its first member row.
                let mut med_large: std::collections::BTreeMap<String, usize> =
                    std::collections::BTreeMap::new();
                for (id, size) in &cats.sizes {
                    if *size <= small_max {
                        continue;
                    }
                    if let Some(row) = t
                        .rows
                        .iter()
                        .find(|r| r[li].as_number().map(|v| v as i64) == Some(*id))
                    {
                        let g = row[gi].render();
                        *med_large.entry(g).or_insert(0) += 1;
                    }
                }
                let parts: Vec<String> = med_large
                    .iter()
                    .map(|(g, n)| format!("{g}={n}"))
                    .collect();
                obs.push_str(&format!(
                    " Medium+large clusters by {group_col}: {}.",
                    if parts.is_empty() { "(none)".to_string() } else { parts.join(", ") }
                ));
            }
            Ok(ToolOutcome {
                observation: obs,
                artifacts: vec![],
            })
        }
        "pearson" => {
            let table_g = rt.resolve(get_str(&args, "table")?)?;
            let columns: Vec<String> = args
                .get("columns")
                .and_then(|c| c.as_array())
                .ok_or(ToolError::MissingParam("columns"))?
                .iter()
                .filter_map(|v| v.as_str().map(|s| s.to_string()))
                .collect();
            let (matrix, out) = analytics::pearson_matrix(rt.ws, table_g, &columns)?;
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{}\n{}",
                    matrix.render().trim_end(),
                    derived_note(rt, &alias, out, "Matrix table")
                ),
                artifacts: vec![out],
            })
        }
        "render_cluster_map" => {
            let points = rt.resolve(get_str(&args, "points")?)?;
            let basemap = rt.resolve(get_str(&args, "basemap")?)?;
            let label_column = opt_str(&args, "label_column").unwrap_or("cluster");
            let out = viz::render_cluster_map(rt.ws, points, basemap, label_column)?;
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{}.",
                    derived_note(rt, &alias, out, "Rendered cluster map to image")
                ),
                artifacts: vec![out],
            })
        }
        "render_choropleth" => {
            let polygons = rt.resolve(get_str(&args, "polygons")?)?;
            let value_column = get_str(&args, "value_column")?;
            let out = viz::render_choropleth(rt.ws, polygons, value_column)?;
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{} over '{value_column}'.",
                    derived_note(rt, &alias, out, "Rendered choropleth to image")
                ),
                artifacts: vec![out],
            })
        }
        "render_heatmap" => {
            let points = rt.resolve(get_str(&args, "points")?)?;
            let basemap = match opt_str(&args, "basemap") {
                Some(b) => Some(rt.resolve(b)?),
                None => None,
            };
            let bandwidth = opt_f64(&args, "bandwidth").unwrap_or(viz::DEFAULT_BANDWIDTH_PX);
            let out = viz::render_heatmap(
                rt.ws,
                points,
                opt_str(&args, "intensity_column"),
                basemap,
                bandwidth,
            )?;
            let alias = rt.track(out);
            Ok(ToolOutcome {
                observation: format!(
                    "{} (bandwidth {}px).",
                    derived_note(rt, &alias, out, "Rendered heatmap to image"),
                    fmt_num(bandwidth)
                ),
                artifacts: vec![out],
            })
        }
        "read_raw" => {
            let rel = get_str(&args, "path")?;
            let path = rt.data_path(rel)?;
            let content = std::fs::read_to_string(&path)?;
            let excerpt: String = content.chars().take(rt.raw_budget).collect();
            let truncated = content.chars().count() > rt.raw_budget;
            Ok(ToolOutcome {
                observation: format!(
                    "Raw content of {} ({}):\n{excerpt}",
                    Path::new(rel).file_name().map(|f| f.to_string_lossy().to_string()).unwrap_or_default(),
                    if truncated { "truncated excerpt" } else { "complete" },
                ),
                artifacts: vec![],
            })
        }
        _ => Err(ToolError::BadInput(format!("no executor bound for '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (tempfile::TempDir, Workspace) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("parks.csv"),
            "GISPROPNUM,name,borough,acres,built\nP1,Rose Garden,North,1.5,2015-06-01\nP2,Elm Common,South,3.2,2016-04-12\nP3,Willow Green,North,1.8,2015-09-20\n",
        )
        .unwrap();
        let ws = Workspace::new(dir.path().join("run")).unwrap();
        (dir, ws)
    }

    #[test]
    fn read_then_filter_chain_via_alias() {
        let (dir, ws) = setup();
        let mut rt = ToolRuntime::new(&ws, dir.path());
        let r1 = execute_tool(&mut rt, "read_table", r#"{"path":"parks.csv"}"#).unwrap();
        assert!(r1.observation.contains("out1"));
        assert!(r1.observation.contains("rows=3"));
        let r2 = execute_tool(
            &mut rt,
            "filter_rows",
            r#"{"table":"out1","column":"acres","op":"<","value":2}"#,
        )
        .unwrap();
        assert!(r2.observation.contains("2 rows match"));
        assert!(r2.observation.contains("Rose Garden"));
    }

    #[test]
    fn resolution_by_filename_works() {
        let (dir, ws) = setup();
        let mut rt = ToolRuntime::new(&ws, dir.path());
        execute_tool(&mut rt, "read_table", r#"{"path":"parks.csv"}"#).unwrap();
        let r = execute_tool(
            &mut rt,
            "describe",
            r#"{"table":"parks.csv","column":"acres"}"#,
        )
        .unwrap();
        assert!(r.observation.contains("count=3"));
    }

    #[test]
    fn alignment_disabled_breaks_chains() {
        let (dir, ws) = setup();
        let mut rt = ToolRuntime::new(&ws, dir.path());
        rt.alignment_enabled = false;
        let r1 = execute_tool(&mut rt, "read_table", r#"{"path":"parks.csv"}"#).unwrap();
        assert!(r1.observation.contains("untracked") || !r1.observation.contains("out1"));
        let err = execute_tool(
            &mut rt,
            "filter_rows",
            r#"{"table":"out1","column":"acres","op":"<","value":2}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ToolError::AlignmentDisabled));
    }

    #[test]
    fn unknown_asset_reported() {
        let (dir, ws) = setup();
        let mut rt = ToolRuntime::new(&ws, dir.path());
        let err = execute_tool(
            &mut rt,
            "describe",
            r#"{"table":"nope.csv","column":"acres"}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ToolError::UnknownAsset(_)));
    }

    #[test]
    fn read_raw_excerpt_capped() {
        let (dir, ws) = setup();
        let mut rt = ToolRuntime::new(&ws, dir.path());
        rt.raw_budget = 30;
        let r = execute_tool(&mut rt, "read_raw", r#"{"path":"parks.csv"}"#).unwrap();
        assert!(r.observation.contains("truncated"));
    }

    #[test]
    fn group_restriction_filters_tools() {
        let ts = toolset_for_groups(&[ToolGroup::Tabular]);
        assert!(ts.get("filter_rows").is_some());
        assert!(ts.get("dbscan").is_none());
        assert!(ts.get("render_cluster_map").is_none());
    }
}
