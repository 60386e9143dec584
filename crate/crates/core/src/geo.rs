//! Vector-modality toolkit: parse vector files (a shapefile subset and a
//! JSON interchange form), validate geometry, and run point-in-polygon
//! spatial joins.
//!
//! Coordinates are lon/lat decimal degrees throughout. All inputs must share
//! a common geographic CRS; mismatched `crs_id`s are an error rather than a
//! reprojection.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use thiserror::Error;

use crate::asset::{AssetDescriptor, GeoExtent, Modality};
use crate::table::{Cell, ColumnType, Table, TableError};
use crate::workspace::{Payload, Workspace, WorkspaceError};
use crate::Guid;

pub const DEFAULT_CRS: &str = "geographic-degrees";

/// Tolerance for on-boundary point tests, in degrees.
const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonGeom {
    /// Exterior ring, closed (first vertex equals last), CCW after validation.
    pub exterior: Vec<(f64, f64)>,
    /// Interior rings (holes), closed, CW after validation.
    pub holes: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(f64, f64),
    Polygon(PolygonGeom),
    MultiPolygon(Vec<PolygonGeom>),
}

impl Geometry {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Geometry::Point(_, _) => "point",
            Geometry::Polygon(_) => "polygon",
            Geometry::MultiPolygon(_) => "multipolygon",
        }
    }

    fn each_vertex(&self, mut f: impl FnMut(f64, f64)) {
        match self {
            Geometry::Point(x, y) => f(*x, *y),
            Geometry::Polygon(p) => {
                for &(x, y) in p.exterior.iter().chain(p.holes.iter().flatten()) {
                    f(x, y);
                }
            }
            Geometry::MultiPolygon(ps) => {
                for p in ps {
                    for &(x, y) in p.exterior.iter().chain(p.holes.iter().flatten()) {
                        f(x, y);
                    }
                }
            }
        }
    }
}

/// A set of geometries with one attribute row per geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub geometries: Vec<Geometry>,
    pub attributes: Table,
    pub crs_id: String,
}

impl FeatureTable {
    pub fn new(geometries: Vec<Geometry>, attributes: Table) -> Result<Self, GeoError> {
        if geometries.len() != attributes.rows.len() {
            return Err(GeoError::AttributeCountMismatch {
                features: geometries.len(),
                attributes: attributes.rows.len(),
            });
        }
        Ok(FeatureTable {
            geometries,
            attributes,
            crs_id: DEFAULT_CRS.to_string(),
        })
    }

    /// Extent recomputed from coordinates, never trusted from file headers.
    pub fn extent(&self) -> Option<GeoExtent> {
        let mut min_lon = f64::INFINITY;
        let mut min_lat = f64::INFINITY;
        let mut max_lon = f64::NEG_INFINITY;
        let mut max_lat = f64::NEG_INFINITY;
        let mut any = false;
        for g in &self.geometries {
            g.each_vertex(|x, y| {
                any = true;
                min_lon = min_lon.min(x);
                min_lat = min_lat.min(y);
                max_lon = max_lon.max(x);
                max_lat = max_lat.max(y);
            });
        }
        if !any {
            return None;
        }
        GeoExtent::new(min_lon, min_lat, max_lon, max_lat).ok()
    }

    pub fn schema_summary(&self) -> String {
        let kind = self
            .geometries
            .first()
            .map(|g| g.kind_name())
            .unwrap_or("empty");
        let ext = self
            .extent()
            .map(|e| {
                format!(
                    "({},{},{},{})",
                    e.min_lon, e.min_lat, e.max_lon, e.max_lat
                )
            })
            .unwrap_or_else(|| "none".into());
        let mut s = format!(
            "features={}; kind={kind}; extent={ext}; {}",
            self.geometries.len(),
            self.attributes.schema_summary()
        );
        if s.chars().count() > crate::asset::SCHEMA_SUMMARY_MAX {
            s.truncate(crate::asset::SCHEMA_SUMMARY_MAX - 3);
            s.push_str("...");
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("unsupported shape type {0} (only point=1 and polygon=5)")]
    UnsupportedShapeType(i32),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("{features} features but {attributes} attribute rows")]
    AttributeCountMismatch { features: usize, attributes: usize },
    #[error("ring has fewer than 3 distinct vertices")]
    DegenerateRing,
    #[error("point source lacks lon/lat columns")]
    MissingCoordinateColumns,
    #[error("crs mismatch: '{0}' vs '{1}'")]
    CrsMismatch(String, String),
    #[error("malformed vector json: {0}")]
    MalformedJson(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Parsing: shapefile subset
// ---------------------------------------------------------------------------

fn shoelace2(ring: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for w in ring.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        s += x1 * y2 - x2 * y1;
    }
    s
}

fn read_shp(bytes: &[u8]) -> Result<Vec<Geometry>, GeoError> {
    if bytes.len() < 100 {
        return Err(GeoError::MalformedHeader("file shorter than header".into()));
    }
    let file_code = BigEndian::read_i32(&bytes[0..4]);
    if file_code != 9994 {
        return Err(GeoError::MalformedHeader(format!(
            "bad file code {file_code}"
        )));
    }
    let shape_type = LittleEndian::read_i32(&bytes[32..36]);
    if shape_type != 1 && shape_type != 5 {
        return Err(GeoError::UnsupportedShapeType(shape_type));
    }
    let mut geoms = Vec::new();
    let mut off = 100usize;
    while off + 8 <= bytes.len() {
        let content_len = BigEndian::read_i32(&bytes[off + 4..off + 8]) as usize * 2;
        off += 8;
        if off + content_len > bytes.len() {
            return Err(GeoError::MalformedHeader("record overruns file".into()));
        }
        let rec = &bytes[off..off + content_len];
        off += content_len;
        if rec.len() < 4 {
            return Err(GeoError::MalformedHeader("record too short".into()));
        }
        let rec_type = LittleEndian::read_i32(&rec[0..4]);
        match rec_type {
            0 => continue, // null shape
            1 => {
                if rec.len() < 20 {
                    return Err(GeoError::MalformedHeader("point record too short".into()));
                }
                let x = LittleEndian::read_f64(&rec[4..12]);
                let y = LittleEndian::read_f64(&rec[12..20]);
                geoms.push(Geometry::Point(x, y));
            }
            5 => {
                if rec.len() < 44 {
                    return Err(GeoError::MalformedHeader("polygon record too short".into()));
                }
                let num_parts = LittleEndian::read_i32(&rec[36..40]) as usize;
                let num_points = LittleEndian::read_i32(&rec[40..44]) as usize;
                let parts_at = 44;
                let points_at = parts_at + num_parts * 4;
                if rec.len() < points_at + num_points * 16 {
                    return Err(GeoError::MalformedHeader(
                        "polygon record body too short".into(),
                    ));
                }
                let mut parts = Vec::with_capacity(num_parts + 1);
                for i in 0..num_parts {
                    parts.push(
                        LittleEndian::read_i32(&rec[parts_at + i * 4..parts_at + i * 4 + 4])
                            as usize,
                    );
                }
                parts.push(num_points);
                let mut rings = Vec::new();
                for w in parts.windows(2) {
                    let mut ring = Vec::with_capacity(w[1] - w[0]);
                    for p in w[0]..w[1] {
                        let base = points_at + p * 16;
                        let x = LittleEndian::read_f64(&rec[base..base + 8]);
                        let y = LittleEndian::read_f64(&rec[base + 8..base + 16]);
                        ring.push((x, y));
                    }
                    rings.push(ring);
                }
                geoms.push(rings_to_geometry(rings));
            }
            other => return Err(GeoError::UnsupportedShapeType(other)),
        }
    }
    Ok(geoms)
}

/// Shapefile rings: exterior clockwise, holes counter-clockwise. A hole is
/// attached to the first exterior whose bounding test contains its first
/// vertex; multiple exteriors become a multipolygon.
fn rings_to_geometry(rings: Vec<Vec<(f64, f64)>>) -> Geometry {
    let mut polys: Vec<PolygonGeom> = Vec::new();
    let mut pending_holes: Vec<Vec<(f64, f64)>> = Vec::new();
    for ring in rings {
        if shoelace2(&ring) <= 0.0 {
            // clockwise in file order: exterior
            polys.push(PolygonGeom {
                exterior: ring,
                holes: Vec::new(),
            });
        } else {
            pending_holes.push(ring);
        }
    }
    if polys.is_empty() {
        // Degenerate winding in the file; treat the first ring as exterior.
        if let Some(first) = pending_holes.first().cloned() {
            polys.push(PolygonGeom {
                exterior: first,
                holes: Vec::new(),
            });
            pending_holes.remove(0);
        }
    }
    for hole in pending_holes {
        let probe = hole[0];
        let host = polys
            .iter()
            .position(|p| ring_contains_even_odd(&p.exterior, probe.0, probe.1));
        match host {
            Some(i) => polys[i].holes.push(hole),
            None => {
                if let Some(last) = polys.last_mut() {
                    last.holes.push(hole);
                }
            }
        }
    }
    if polys.len() == 1 {
        Geometry::Polygon(polys.pop().unwrap())
    } else {
        Geometry::MultiPolygon(polys)
    }
}

fn read_dbf(bytes: &[u8]) -> Result<Table, GeoError> {
    if bytes.len() < 32 {
        return Err(GeoError::MalformedHeader("dbf shorter than header".into()));
    }
    let record_count = LittleEndian::read_u32(&bytes[4..8]) as usize;
    let header_len = LittleEndian::read_u16(&bytes[8..10]) as usize;
    let record_len = LittleEndian::read_u16(&bytes[10..12]) as usize;
    let mut fields: Vec<(String, u8, usize)> = Vec::new();
    let mut off = 32;
    while off + 32 <= header_len && bytes[off] != 0x0D {
        let name_bytes = &bytes[off..off + 11];
        let name: String = name_bytes
            .iter()
            .take_while(|b| **b != 0)
            .map(|b| *b as char)
            .collect();
        let ftype = bytes[off + 11];
        let flen = bytes[off + 16] as usize;
        fields.push((name, ftype, flen));
        off += 32;
    }
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    let mut pos = header_len;
    for _ in 0..record_count {
        if pos + record_len > bytes.len() {
            return Err(GeoError::MalformedHeader("dbf record overruns file".into()));
        }
        let rec = &bytes[pos..pos + record_len];
        pos += record_len;
        if rec[0] == 0x2A {
            continue; // deleted record
        }
        let mut cursor = 1usize;
        let mut row = Vec::with_capacity(fields.len());
        for (_, _, flen) in &fields {
            let raw: String = rec[cursor..cursor + flen]
                .iter()
                .map(|b| *b as char)
                .collect();
            row.push(raw.trim().to_string());
            cursor += flen;
        }
        raw_rows.push(row);
    }
    // Rebuild through the CSV type inference so years classify consistently.
    let mut csv = fields
        .iter()
        .map(|(n, _, _)| n.clone())
        .collect::<Vec<_>>()
        .join(",");
    for row in &raw_rows {
        csv.push('\n');
        let escaped: Vec<String> = row
            .iter()
            .map(|f| {
                if f.contains(',') || f.contains('"') {
                    format!("\"{}\"", f.replace('"', "\"\""))
                } else {
                    f.clone()
                }
            })
            .collect();
        csv.push_str(&escaped.join(","));
    }
    Ok(crate::table::parse_csv(&csv)?)
}

// ---------------------------------------------------------------------------
// Parsing: JSON interchange (FeatureCollection)
// ---------------------------------------------------------------------------

fn json_ring(v: &serde_json::Value) -> Result<Vec<(f64, f64)>, GeoError> {
    let arr = v
        .as_array()
        .ok_or_else(|| GeoError::MalformedJson("ring is not an array".into()))?;
    arr.iter()
        .map(|p| {
            let pair = p
                .as_array()
                .ok_or_else(|| GeoError::MalformedJson("coordinate is not a pair".into()))?;
            let x = pair
                .first()
                .and_then(|v| v.as_f64())
                .ok_or_else(|| GeoError::MalformedJson("bad lon".into()))?;
            let y = pair
                .get(1)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| GeoError::MalformedJson("bad lat".into()))?;
            Ok((x, y))
        })
        .collect()
}

fn json_polygon(coords: &serde_json::Value) -> Result<PolygonGeom, GeoError> {
    let rings = coords
        .as_array()
        .ok_or_else(|| GeoError::MalformedJson("polygon coordinates not array".into()))?;
    if rings.is_empty() {
        return Err(GeoError::MalformedJson("polygon with no rings".into()));
    }
    let exterior = json_ring(&rings[0])?;
    let holes = rings[1..]
        .iter()
        .map(json_ring)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolygonGeom { exterior, holes })
}

fn parse_vector_json(content: &str) -> Result<FeatureTable, GeoError> {
    let root: serde_json::Value =
        serde_json::from_str(content).map_err(|e| GeoError::MalformedJson(e.to_string()))?;
    let features = root
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| GeoError::MalformedJson("missing features array".into()))?;
    let mut geoms = Vec::new();
    let mut prop_maps: Vec<&serde_json::Map<String, serde_json::Value>> = Vec::new();
    let empty = serde_json::Map::new();
    for f in features {
        let geom = f
            .get("geometry")
            .ok_or_else(|| GeoError::MalformedJson("feature without geometry".into()))?;
        let gtype = geom
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or_else(|| GeoError::MalformedJson("geometry without type".into()))?;
        let coords = geom
            .get("coordinates")
            .ok_or_else(|| GeoError::MalformedJson("geometry without coordinates".into()))?;
        let g = match gtype {
            "Point" => {
                let pair = coords
                    .as_array()
                    .ok_or_else(|| GeoError::MalformedJson("point coords".into()))?;
                Geometry::Point(
                    pair.first().and_then(|v| v.as_f64()).unwrap_or(f64::NAN),
                    pair.get(1).and_then(|v| v.as_f64()).unwrap_or(f64::NAN),
                )
            }
            "Polygon" => Geometry::Polygon(json_polygon(coords)?),
            "MultiPolygon" => {
                let polys = coords
                    .as_array()
                    .ok_or_else(|| GeoError::MalformedJson("multipolygon coords".into()))?
                    .iter()
                    .map(json_polygon)
                    .collect::<Result<Vec<_>, _>>()?;
                Geometry::MultiPolygon(polys)
            }
            other => {
                return Err(GeoError::MalformedJson(format!(
                    "unsupported geometry type {other}"
                )))
            }
        };
        geoms.push(g);
        prop_maps.push(f.get("properties").and_then(|p| p.as_object()).unwrap_or(&empty));
    }
    // Attribute columns: sorted union of property keys.
    let mut keys: Vec<String> = Vec::new();
    for m in &prop_maps {
        for k in m.keys() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    keys.sort();
    let mut columns = Vec::new();
    let mut rows: Vec<Vec<Cell>> = vec![Vec::new(); prop_maps.len()];
    for k in &keys {
        let mut ty = ColumnType::Text;
        let mut any_num = false;
        let mut all_num = true;
        for m in &prop_maps {
            match m.get(k) {
                Some(v) if v.is_number() => any_num = true,
                Some(v) if v.is_null() => {}
                None => {}
                _ => all_num = false,
            }
        }
        if any_num && all_num {
            ty = ColumnType::Number;
        }
        for (i, m) in prop_maps.iter().enumerate() {
            let cell = match m.get(k) {
                Some(serde_json::Value::Number(n)) => {
                    Cell::Number(n.as_f64().unwrap_or(f64::NAN))
                }
                Some(serde_json::Value::String(s)) => Cell::Text(s.clone()),
                Some(serde_json::Value::Bool(b)) => Cell::Bool(*b),
                _ => Cell::Null,
            };
            rows[i].push(cell);
        }
        columns.push((k.clone(), ty));
    }
    if keys.is_empty() {
        // No properties at all: synthesize a feature index column.
        columns.push(("feature".to_string(), ColumnType::Number));
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(Cell::Number(i as f64));
        }
    }
    let attributes = Table::new(columns, rows)?;
    FeatureTable::new(geoms, attributes)
}

// ---------------------------------------------------------------------------
// Registered operations
// ---------------------------------------------------------------------------

fn register_vector(
    ws: &Workspace,
    ft: FeatureTable,
    uri: &str,
    parents: &[Guid],
    relation: &str,
) -> Result<Guid, GeoError> {
    let mut desc = AssetDescriptor::new(Modality::Vector, uri, ft.schema_summary());
    if let Some(ext) = ft.extent() {
        desc = desc.with_extent(ext);
    }
    let guid = if parents.is_empty() {
        ws.registry.register_asset(desc).map_err(WorkspaceError::Asset)?
    } else {
        let guid = Guid::new_random();
        let d = AssetDescriptor {
            uri: ws.run_path(guid, "vec.json").to_string_lossy().to_string(),
            ..desc
        };
        ws.registry
            .register_with_guid(guid, d)
            .map_err(WorkspaceError::Asset)?;
        guid
    };
    ws.insert_payload(guid, Payload::Vector(Arc::new(ft)));
    for p in parents {
        ws.registry
            .link_assets(*p, guid, relation)
            .map_err(WorkspaceError::Asset)?;
    }
    Ok(guid)
}

/// Parse a vector file (`.shp` with sibling `.dbf`, or the JSON interchange
/// form) and register it as a root Vector asset.
pub fn parse_vector(ws: &Workspace, path: &Path) -> Result<Guid, GeoError> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let ft = if ext == "shp" {
        let mut shp = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut shp)?;
        let geoms = read_shp(&shp)?;
        let dbf_path = path.with_extension("dbf");
        let attributes = if dbf_path.exists() {
            let mut dbf = Vec::new();
            std::fs::File::open(&dbf_path)?.read_to_end(&mut dbf)?;
            read_dbf(&dbf)?
        } else {
            // No attributes: synthesize a feature index.
            Table::new(
                vec![("feature".to_string(), ColumnType::Number)],
                (0..geoms.len()).map(|i| vec![Cell::Number(i as f64)]).collect(),
            )?
        };
        FeatureTable::new(geoms, attributes)?
    } else {
        let content = std::fs::read_to_string(path)?;
        parse_vector_json(&content)?
    };
    register_vector(ws, ft, &path.to_string_lossy(), &[], "")
}

/// One repair performed by [`validate_geometry`].
#[derive(Debug, Clone, PartialEq)]
pub enum Repair {
    ClosedRing { feature: usize, ring: usize },
    ReversedWinding { feature: usize, ring: usize },
    DroppedDegenerate { feature: usize },
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub repairs: Vec<Repair>,
}

fn distinct_vertices(ring: &[(f64, f64)]) -> usize {
    let mut seen: Vec<(f64, f64)> = Vec::new();
    for &v in ring {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen.len()
}

fn validate_polygon(
    poly: &PolygonGeom,
    feature: usize,
    report: &mut ValidationReport,
) -> Option<PolygonGeom> {
    let mut rings: Vec<Vec<(f64, f64)>> = Vec::new();
    let all: Vec<&Vec<(f64, f64)>> =
        std::iter::once(&poly.exterior).chain(poly.holes.iter()).collect();
    for (ri, ring) in all.iter().enumerate() {
        if distinct_vertices(ring) < 3 {
            report.repairs.push(Repair::DroppedDegenerate { feature });
            return None;
        }
        let mut r = (*ring).clone();
        if r.first() != r.last() {
            r.push(r[0]);
            report.repairs.push(Repair::ClosedRing { feature, ring: ri });
        }
        let area = shoelace2(&r);
        let want_ccw = ri == 0;
        if (want_ccw && area < 0.0) || (!want_ccw && area > 0.0) {
            r.reverse();
            report.repairs.push(Repair::ReversedWinding { feature, ring: ri });
        }
        rings.push(r);
    }
    let mut it = rings.into_iter();
    Some(PolygonGeom {
        exterior: it.next().unwrap(),
        holes: it.collect(),
    })
}

/// Close unclosed rings, fix winding (exterior CCW, holes CW), and drop
/// features with degenerate rings. Returns the repaired derived asset plus a
/// report of every repair. Validating an already-valid asset is a no-op.
pub fn validate_geometry(ws: &Workspace, asset: Guid) -> Result<(Guid, ValidationReport), GeoError> {
    let ft = ws.vector(asset)?;
    let mut report = ValidationReport::default();
    let mut geoms = Vec::new();
    let mut rows = Vec::new();
    for (fi, g) in ft.geometries.iter().enumerate() {
        let kept = match g {
            Geometry::Point(x, y) => Some(Geometry::Point(*x, *y)),
            Geometry::Polygon(p) => validate_polygon(p, fi, &mut report).map(Geometry::Polygon),
            Geometry::MultiPolygon(ps) => {
                let fixed: Vec<PolygonGeom> = ps
                    .iter()
                    .filter_map(|p| validate_polygon(p, fi, &mut report))
                    .collect();
                if fixed.is_empty() {
                    None
                } else {
                    Some(Geometry::MultiPolygon(fixed))
                }
            }
        };
        if let Some(g) = kept {
            geoms.push(g);
            rows.push(ft.attributes.rows[fi].clone());
        }
    }
    let attributes = Table::new(ft.attributes.columns.clone(), rows)?;
    let mut out = FeatureTable::new(geoms, attributes)?;
    out.crs_id = ft.crs_id.clone();
    let guid = register_vector(ws, out, "", &[asset], "validate")?;
    Ok((guid, report))
}

// ---------------------------------------------------------------------------
// Point-in-polygon and spatial join
// ---------------------------------------------------------------------------

fn point_on_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    if cross.abs() > EDGE_EPS {
        return false;
    }
    let dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay);
    let len2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay);
    dot >= -EDGE_EPS && dot <= len2 + EDGE_EPS
}

fn ring_has_on_boundary(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    ring.windows(2)
        .any(|w| point_on_segment(x, y, w[0].0, w[0].1, w[1].0, w[1].1))
}

fn ring_contains_even_odd(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (xi, yi) = w[0];
        let (xj, yj) = w[1];
        if (yi > y) != (yj > y) {
            let x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi;
            if x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Even-odd containment test. Points exactly on an edge or vertex count as
/// inside (including hole edges); interior rings otherwise exclude.
pub fn point_in_polygon(x: f64, y: f64, poly: &PolygonGeom) -> bool {
    if ring_has_on_boundary(&poly.exterior, x, y)
        || poly.holes.iter().any(|h| ring_has_on_boundary(h, x, y))
    {
        return true;
    }
    if !ring_contains_even_odd(&poly.exterior, x, y) {
        return false;
    }
    !poly.holes.iter().any(|h| ring_contains_even_odd(h, x, y))
}

pub fn geometry_contains(g: &Geometry, x: f64, y: f64) -> bool {
    match g {
        Geometry::Point(_, _) => false,
        Geometry::Polygon(p) => point_in_polygon(x, y, p),
        Geometry::MultiPolygon(ps) => ps.iter().any(|p| point_in_polygon(x, y, p)),
    }
}

/// Extract (lon, lat) pairs from a point source: a Table with lon/lat
/// columns, or a Vector asset of Point features.
pub fn point_coordinates(ws: &Workspace, points: Guid) -> Result<Vec<(f64, f64)>, GeoError> {
    if let Ok(t) = ws.table(points) {
        let li = t
            .column_index("lon")
            .map_err(|_| GeoError::MissingCoordinateColumns)?;
        let la = t
            .column_index("lat")
            .map_err(|_| GeoError::MissingCoordinateColumns)?;
        return t
            .rows
            .iter()
            .map(|r| match (r[li].as_number(), r[la].as_number()) {
                (Some(x), Some(y)) => Ok((x, y)),
                _ => Err(GeoError::MissingCoordinateColumns),
            })
            .collect();
    }
    let v = ws.vector(points)?;
    v.geometries
        .iter()
        .map(|g| match g {
            Geometry::Point(x, y) => Ok((*x, *y)),
            _ => Err(GeoError::MissingCoordinateColumns),
        })
        .collect()
}

/// Tag each point with an attribute of the first containing polygon in file
/// order; points in no polygon get Null. Output row count always equals the
/// input point count.
pub fn spatial_join(
    ws: &Workspace,
    points: Guid,
    polygons: Guid,
    tag_column: &str,
) -> Result<Guid, GeoError> {
    let polys = ws.vector(polygons)?;
    let tag_idx = polys.attributes.column_index(tag_column)?;
    let tag_ty = polys.attributes.columns[tag_idx].1;
    let coords = point_coordinates(ws, points)?;

    // Build the base table: the point table itself, or coordinates + the
    // point vector's attributes.
    let (mut columns, mut rows) = if let Ok(t) = ws.table(points) {
        (t.columns.clone(), t.rows.clone())
    } else {
        let v = ws.vector(points)?;
        if v.crs_id != polys.crs_id {
            return Err(GeoError::CrsMismatch(v.crs_id.clone(), polys.crs_id.clone()));
        }
        let mut cols = vec![
            ("lon".to_string(), ColumnType::Number),
            ("lat".to_string(), ColumnType::Number),
        ];
        cols.extend(v.attributes.columns.clone());
        let rows = coords
            .iter()
            .zip(&v.attributes.rows)
            .map(|(&(x, y), attrs)| {
                let mut row = vec![Cell::Number(x), Cell::Number(y)];
                row.extend(attrs.iter().cloned());
                row
            })
            .collect();
        (cols, rows)
    };

    let existing: std::collections::HashSet<String> =
        columns.iter().map(|(n, _)| n.clone()).collect();
    let out_name = if existing.contains(tag_column) {
        format!("{tag_column}_r")
    } else {
        tag_column.to_string()
    };
    columns.push((out_name, tag_ty));
    for (row, &(x, y)) in rows.iter_mut().zip(&coords) {
        let tag = polys
            .geometries
            .iter()
            .position(|g| geometry_contains(g, x, y))
            .map(|fi| polys.attributes.rows[fi][tag_idx].clone())
            .unwrap_or(Cell::Null);
        row.push(tag);
    }
    let out = Table::new(columns, rows)?;
    let guid = crate::table::register_derived_table(ws, out, &[points, polygons], "spatial_join")?;
    Ok(guid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::parse_csv;

    fn unit_square() -> PolygonGeom {
        PolygonGeom {
            exterior: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)],
            holes: vec![],
        }
    }

    fn ws() -> (tempfile::TempDir, Workspace) {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("run")).unwrap();
        (dir, ws)
    }

    #[test]
    fn center_point_inside_square() {
        assert!(point_in_polygon(0.5, 0.5, &unit_square()));
        assert!(!point_in_polygon(1.5, 0.5, &unit_square()));
    }

    #[test]
    fn hole_excludes_center() {
        let mut poly = unit_square();
        poly.holes.push(vec![
            (0.4, 0.4),
            (0.4, 0.6),
            (0.6, 0.6),
            (0.6, 0.4),
            (0.4, 0.4),
        ]);
        assert!(!point_in_polygon(0.5, 0.5, &poly));
        // Inside the square but outside the hole.
        assert!(point_in_polygon(0.1, 0.1, &poly));
        // On the hole boundary counts as inside overall.
        assert!(point_in_polygon(0.4, 0.5, &poly));
    }

    #[test]
    fn boundary_counts_as_inside() {
        let sq = unit_square();
        assert!(point_in_polygon(0.0, 0.5, &sq));
        assert!(point_in_polygon(1.0, 1.0, &sq));
        assert!(point_in_polygon(0.5, 0.0, &sq));
    }

    /// Winding-number oracle, independent of the even-odd implementation.
    fn winding_number_contains(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
        let mut wn = 0i32;
        for w in ring.windows(2) {
            let (xi, yi) = w[0];
            let (xj, yj) = w[1];
            let is_left = (xj - xi) * (y - yi) - (x - xi) * (yj - yi);
            if yi <= y {
                if yj > y && is_left > 0.0 {
                    wn += 1;
                }
            } else if yj <= y && is_left < 0.0 {
                wn -= 1;
            }
        }
        wn != 0
    }

    #[test]
    fn random_points_match_winding_oracle_on_concave_polygon() {
        use rand::{Rng, SeedableRng};
        // Concave 12-vertex polygon (simple, non-self-intersecting).
        let ring = vec![
            (0.0, 0.0),
            (4.0, 0.0),
            (4.0, 1.0),
            (2.0, 1.0),
            (2.0, 2.0),
            (4.0, 2.0),
            (4.0, 4.0),
            (3.0, 4.0),
            (3.0, 3.0),
            (1.0, 3.0),
            (1.0, 4.0),
            (0.0, 4.0),
            (0.0, 0.0),
        ];
        let poly = PolygonGeom {
            exterior: ring.clone(),
            holes: vec![],
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut tested = 0;
        for _ in 0..500 {
            let x: f64 = rng.gen_range(-0.5..4.5);
            let y: f64 = rng.gen_range(-0.5..4.5);
            if ring_has_on_boundary(&ring, x, y) {
                continue; // the oracle has no on-edge convention
            }
            tested += 1;
            assert_eq!(
                point_in_polygon(x, y, &poly),
                winding_number_contains(&ring, x, y),
                "disagreement at ({x},{y})"
            );
        }
        assert!(tested > 400);
    }

    #[test]
    fn translation_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let sq = unit_square();
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-1.0..2.0);
            let y: f64 = rng.gen_range(-1.0..2.0);
            let dx: f64 = rng.gen_range(-100.0..100.0);
            let dy: f64 = rng.gen_range(-100.0..100.0);
            let moved = PolygonGeom {
                exterior: sq.exterior.iter().map(|&(a, b)| (a + dx, b + dy)).collect(),
                holes: vec![],
            };
            assert_eq!(
                point_in_polygon(x, y, &sq),
                point_in_polygon(x + dx, y + dy, &moved)
            );
        }
    }

    #[test]
    fn json_square_parses_with_extent() {
        let (dir, ws) = ws();
        let json = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]},"properties":{"name":"A"}}
        ]}"#;
        let p = dir.path().join("sq.json");
        std::fs::write(&p, json).unwrap();
        let g = parse_vector(&ws, &p).unwrap();
        let ft = ws.vector(g).unwrap();
        assert_eq!(ft.geometries.len(), 1);
        let ext = ft.extent().unwrap();
        assert_eq!((ext.min_lon, ext.min_lat, ext.max_lon, ext.max_lat), (0.0, 0.0, 1.0, 1.0));
        assert_eq!(ft.attributes.rows.len(), 1);
    }

    #[test]
    fn polyline_shapefile_rejected() {
        // Minimal header claiming shape type 3.
        let mut bytes = vec![0u8; 100];
        BigEndian::write_i32(&mut bytes[0..4], 9994);
        LittleEndian::write_i32(&mut bytes[32..36], 3);
        let err = read_shp(&bytes).unwrap_err();
        assert!(matches!(err, GeoError::UnsupportedShapeType(3)));
    }

    #[test]
    fn bad_file_code_rejected() {
        let mut bytes = vec![0u8; 100];
        BigEndian::write_i32(&mut bytes[0..4], 1234);
        assert!(matches!(read_shp(&bytes), Err(GeoError::MalformedHeader(_))));
    }

    #[test]
    fn validate_already_valid_square_no_repairs() {
        let (_d, ws) = ws();
        let ft = FeatureTable::new(
            vec![Geometry::Polygon(unit_square())],
            parse_csv("name\nA\n").unwrap(),
        )
        .unwrap();
        let g = register_vector(&ws, ft, "mem://sq", &[], "").unwrap();
        let (out, report) = validate_geometry(&ws, g).unwrap();
        assert!(report.repairs.is_empty());
        assert_eq!(ws.vector(out).unwrap().geometries, ws.vector(g).unwrap().geometries);
    }

    #[test]
    fn clockwise_exterior_reversed() {
        let (_d, ws) = ws();
        let cw = PolygonGeom {
            exterior: vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (0.0, 0.0)],
            holes: vec![],
        };
        let ft = FeatureTable::new(vec![Geometry::Polygon(cw)], parse_csv("name\nA\n").unwrap())
            .unwrap();
        let g = register_vector(&ws, ft, "mem://cw", &[], "").unwrap();
        let (out, report) = validate_geometry(&ws, g).unwrap();
        assert_eq!(report.repairs.len(), 1);
        assert!(matches!(report.repairs[0], Repair::ReversedWinding { .. }));
        match &ws.vector(out).unwrap().geometries[0] {
            Geometry::Polygon(p) => assert!(shoelace2(&p.exterior) > 0.0),
            _ => panic!(),
        }
    }

    #[test]
    fn degenerate_ring_dropped_and_reported() {
        let (_d, ws) = ws();
        let degenerate = PolygonGeom {
            exterior: vec![(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)],
            holes: vec![],
        };
        let ft = FeatureTable::new(
            vec![Geometry::Polygon(degenerate), Geometry::Polygon(unit_square())],
            parse_csv("name\nBad\nGood\n").unwrap(),
        )
        .unwrap();
        let g = register_vector(&ws, ft, "mem://deg", &[], "").unwrap();
        let (out, report) = validate_geometry(&ws, g).unwrap();
        assert!(report
            .repairs
            .iter()
            .any(|r| matches!(r, Repair::DroppedDegenerate { feature: 0 })));
        let v = ws.vector(out).unwrap();
        assert_eq!(v.geometries.len(), 1);
        assert_eq!(v.attributes.rows.len(), 1);
        assert_eq!(v.attributes.rows[0][0], Cell::Text("Good".into()));
    }

    #[test]
    fn validate_is_idempotent() {
        let (_d, ws) = ws();
        let open_ring = PolygonGeom {
            exterior: vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)],
            holes: vec![],
        };
        let ft = FeatureTable::new(
            vec![Geometry::Polygon(open_ring)],
            parse_csv("name\nA\n").unwrap(),
        )
        .unwrap();
        let g = register_vector(&ws, ft, "mem://open", &[], "").unwrap();
        let (once, r1) = validate_geometry(&ws, g).unwrap();
        assert!(!r1.repairs.is_empty());
        let (_twice, r2) = validate_geometry(&ws, once).unwrap();
        assert!(r2.repairs.is_empty());
    }

    #[test]
    fn spatial_join_tags_first_containing_polygon() {
        let (dir, ws) = ws();
        // Two disjoint unit squares: A at origin, B shifted by 2.
        let json = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]},"properties":{"name":"A"}},
            {"type":"Feature","geometry":{"type":"Polygon","coordinates":[[[2,0],[3,0],[3,1],[2,1],[2,0]]]},"properties":{"name":"B"}}
        ]}"#;
        let vp = dir.path().join("two.json");
        std::fs::write(&vp, json).unwrap();
        let polys = parse_vector(&ws, &vp).unwrap();
        let tp = dir.path().join("pts.csv");
        std::fs::write(&tp, "lon,lat\n0.5,0.5\n5.0,5.0\n").unwrap();
        let pts = crate::table::read_table(&ws, &tp).unwrap();
        let out = spatial_join(&ws, pts, polys, "name").unwrap();
        let t = ws.table(out).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0][2], Cell::Text("A".into()));
        assert!(t.rows[1][2].is_null());
    }

    #[test]
    fn spatial_join_overlapping_polygons_match_brute_force_scan() {
        use rand::{Rng, SeedableRng};
        let (dir, ws) = ws();
        // 5 overlapping squares with deterministic layout.
        let mut features = Vec::new();
        for i in 0..5 {
            let x0 = i as f64 * 0.5;
            features.push(format!(
                r#"{{"type":"Feature","geometry":{{"type":"Polygon","coordinates":[[[{x0},0],[{x1},0],[{x1},2],[{x0},2],[{x0},0]]]}},"properties":{{"name":"P{i}"}}}}"#,
                x0 = x0,
                x1 = x0 + 1.0,
                i = i
            ));
        }
        let json = format!(
            r#"{{"type":"FeatureCollection","features":[{}]}}"#,
            features.join(",")
        );
        let vp = dir.path().join("overlap.json");
        std::fs::write(&vp, &json).unwrap();
        let polys = parse_vector(&ws, &vp).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut csv = String::from("lon,lat\n");
        let mut pts = Vec::new();
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-0.5..4.0);
            let y: f64 = rng.gen_range(-0.5..2.5);
            csv.push_str(&format!("{x},{y}\n"));
            pts.push((x, y));
        }
        let tp = dir.path().join("pts.csv");
        std::fs::write(&tp, &csv).unwrap();
        let ptable = crate::table::read_table(&ws, &tp).unwrap();
        let out = spatial_join(&ws, ptable, polys, "name").unwrap();
        let t = ws.table(out).unwrap();
        assert_eq!(t.rows.len(), 200);

        // O(n*m) first-containing oracle.
        let poly_ft = ws.vector(polys).unwrap();
        for (row, &(x, y)) in t.rows.iter().zip(&pts) {
            let expect = poly_ft
                .geometries
                .iter()
                .position(|g| geometry_contains(g, x, y))
                .map(|i| poly_ft.attributes.rows[i][0].clone())
                .unwrap_or(Cell::Null);
            assert_eq!(row[2], expect, "point ({x},{y})");
        }
    }

    #[test]
    fn attribute_count_mismatch_rejected() {
        let err = FeatureTable::new(
            vec![Geometry::Polygon(unit_square()), Geometry::Polygon(unit_square())],
            parse_csv("name\nOnly One\n").unwrap(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            GeoError::AttributeCountMismatch {
                features: 2,
                attributes: 1
            }
        ));
    }

    #[test]
    fn missing_coordinates_error() {
        let (dir, ws) = ws();
        let tp = dir.path().join("pts.csv");
        std::fs::write(&tp, "x,y\n1,2\n").unwrap();
        let pts = crate::table::read_table(&ws, &tp).unwrap();
        let err = point_coordinates(&ws, pts).unwrap_err();
        assert!(matches!(err, GeoError::MissingCoordinateColumns));
    }
}
