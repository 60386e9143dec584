//! Raster-modality toolkit: categorical land-cover grids in the ESRI ASCII
//! format, area-of-interest clipping, and class-proportion summaries.
//!
//! Rows in the text form run top to bottom; `origin` is the lower-left
//! corner. Cell membership for clipping uses the cell-center rule.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::asset::{AssetDescriptor, GeoExtent, Modality};
use crate::geo::{point_in_polygon, PolygonGeom};
use crate::table::{Cell, ColumnType, Table, TableError};
use crate::util::fmt_num;
use crate::workspace::{Payload, Workspace, WorkspaceError};
use crate::Guid;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRaster {
    pub nrows: usize,
    pub ncols: usize,
    /// Lower-left corner (lon, lat).
    pub origin: (f64, f64),
    /// Degrees per (square) cell.
    pub cell_size: f64,
    pub nodata: i32,
    /// Row-major, row 0 is the top row as in the text format.
    pub cells: Vec<i32>,
    pub class_names: BTreeMap<i32, String>,
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("header promises {expected} cells, body has {found}")]
    CellCountMismatch { expected: usize, found: usize },
    #[error("cell code {0} absent from legend and not nodata")]
    UnknownClassCode(i32),
    #[error("raster has no non-nodata cells")]
    AllNoData,
    #[error("clip polygon does not overlap the raster extent")]
    NoOverlap,
    #[error("legends share no class codes")]
    LegendMismatch,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl ClassRaster {
    pub fn cell(&self, row: usize, col: usize) -> i32 {
        self.cells[row * self.ncols + col]
    }

    /// Geographic center of a cell addressed by (top-based row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let lon = self.origin.0 + (col as f64 + 0.5) * self.cell_size;
        let lat = self.origin.1 + (self.nrows as f64 - 1.0 - row as f64 + 0.5) * self.cell_size;
        (lon, lat)
    }

    pub fn extent(&self) -> GeoExtent {
        GeoExtent {
            min_lon: self.origin.0,
            min_lat: self.origin.1,
            max_lon: self.origin.0 + self.ncols as f64 * self.cell_size,
            max_lat: self.origin.1 + self.nrows as f64 * self.cell_size,
        }
    }

    pub fn schema_summary(&self) -> String {
        let classes: Vec<String> = self
            .class_names
            .iter()
            .map(|(c, n)| format!("{c}:{n}"))
            .collect();
        let e = self.extent();
        let mut s = format!(
            "grid={}x{}; cellsize={}; nodata={}; classes=[{}]; extent=({},{},{},{})",
            self.nrows,
            self.ncols,
            self.cell_size,
            self.nodata,
            classes.join(","),
            e.min_lon,
            e.min_lat,
            e.max_lon,
            e.max_lat
        );
        if s.chars().count() > crate::asset::SCHEMA_SUMMARY_MAX {
            s.truncate(crate::asset::SCHEMA_SUMMARY_MAX - 3);
            s.push_str("...");
        }
        s
    }

    /// Per-class counts over non-nodata cells.
    pub fn class_counts(&self) -> BTreeMap<i32, usize> {
        let mut counts = BTreeMap::new();
        for &c in &self.cells {
            if c != self.nodata {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// ESRI ASCII grid + legend parsing
// ---------------------------------------------------------------------------

fn parse_header_line(line: &str) -> Option<(String, f64)> {
    let mut it = line.split_whitespace();
    let key = it.next()?.to_lowercase();
    let val: f64 = it.next()?.parse().ok()?;
    Some((key, val))
}

/// Parse the `.asc` grid text plus a `code,label` legend.
pub fn parse_grid_content(
    grid: &str,
    legend: &str,
) -> Result<ClassRaster, RasterError> {
    let mut lines = grid.lines().peekable();
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    while let Some(line) = lines.peek() {
        let first = line.split_whitespace().next().unwrap_or("");
        if first.chars().next().map(|c| c.is_ascii_alphabetic()).unwrap_or(false) {
            let (k, v) = parse_header_line(line)
                .ok_or_else(|| RasterError::MalformedHeader(format!("bad header line '{line}'")))?;
            header.insert(k, v);
            lines.next();
        } else {
            break;
        }
    }
    let need = |k: &str| {
        header
            .get(k)
            .copied()
            .ok_or_else(|| RasterError::MalformedHeader(format!("missing key {k}")))
    };
    let ncols = need("ncols")? as usize;
    let nrows = need("nrows")? as usize;
    let xll = need("xllcorner")?;
    let yll = need("yllcorner")?;
    let cell_size = need("cellsize")?;
    if cell_size <= 0.0 {
        return Err(RasterError::MalformedHeader("cellsize must be > 0".into()));
    }
    let nodata = header.get("nodata_value").copied().unwrap_or(-9999.0) as i32;

    let mut cells = Vec::with_capacity(nrows * ncols);
    for line in lines {
        for tok in line.split_whitespace() {
            let v: i32 = tok.parse().map_err(|_| {
                RasterError::MalformedHeader(format!("non-integer cell '{tok}'"))
            })?;
            cells.push(v);
        }
    }
    if cells.len() != nrows * ncols {
        return Err(RasterError::CellCountMismatch {
            expected: nrows * ncols,
            found: cells.len(),
        });
    }

    let mut class_names = BTreeMap::new();
    for line in legend.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (code, label) = line.split_once(',').ok_or_else(|| {
            RasterError::MalformedHeader(format!("bad legend line '{line}'"))
        })?;
        let code: i32 = code
            .trim()
            .parse()
            .map_err(|_| RasterError::MalformedHeader(format!("bad legend code '{code}'")))?;
        class_names.insert(code, label.trim().to_string());
    }
    for &c in &cells {
        if c != nodata && !class_names.contains_key(&c) {
            return Err(RasterError::UnknownClassCode(c));
        }
    }
    Ok(ClassRaster {
        nrows,
        ncols,
        origin: (xll, yll),
        cell_size,
        nodata,
        cells,
        class_names,
    })
}

pub fn write_grid(raster: &ClassRaster, grid_path: &Path, legend_path: &Path) -> Result<(), RasterError> {
    let mut out = String::new();
    writeln!(out, "ncols {}", raster.ncols).unwrap();
    writeln!(out, "nrows {}", raster.nrows).unwrap();
    writeln!(out, "xllcorner {}", raster.origin.0).unwrap();
    writeln!(out, "yllcorner {}", raster.origin.1).unwrap();
    writeln!(out, "cellsize {}", raster.cell_size).unwrap();
    writeln!(out, "NODATA_value {}", raster.nodata).unwrap();
    for r in 0..raster.nrows {
        let row: Vec<String> = (0..raster.ncols)
            .map(|c| raster.cell(r, c).to_string())
            .collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    std::fs::write(grid_path, out)?;
    let mut leg = String::new();
    for (code, label) in &raster.class_names {
        writeln!(leg, "{code},{label}").unwrap();
    }
    std::fs::write(legend_path, leg)?;
    Ok(())
}

fn register_raster(
    ws: &Workspace,
    raster: ClassRaster,
    uri: &str,
    parents: &[Guid],
    relation: &str,
) -> Result<Guid, RasterError> {
    let desc = AssetDescriptor::new(Modality::Raster, uri, raster.schema_summary())
        .with_extent(raster.extent());
    let guid = if parents.is_empty() {
        ws.registry.register_asset(desc).map_err(WorkspaceError::Asset)?
    } else {
        let guid = Guid::new_random();
        let grid_path = ws.run_path(guid, "asc");
        let legend_path = ws.run_path(guid, "legend");
        write_grid(&raster, &grid_path, &legend_path)?;
        let d = AssetDescriptor {
            uri: grid_path.to_string_lossy().to_string(),
            ..desc
        };
        ws.registry
            .register_with_guid(guid, d)
            .map_err(WorkspaceError::Asset)?;
        guid
    };
    ws.insert_payload(guid, Payload::Raster(Arc::new(raster)));
    for p in parents {
        ws.registry
            .link_assets(*p, guid, relation)
            .map_err(WorkspaceError::Asset)?;
    }
    Ok(guid)
}

/// Parse an ESRI ASCII grid and its sibling `<stem>.legend` file, register
/// as a root Raster asset.
pub fn parse_grid(ws: &Workspace, path: &Path) -> Result<Guid, RasterError> {
    let grid = std::fs::read_to_string(path)?;
    let legend_path = path.with_extension("legend");
    let legend = std::fs::read_to_string(&legend_path)?;
    let raster = parse_grid_content(&grid, &legend)?;
    register_raster(ws, raster, &path.to_string_lossy(), &[], "")
}

/// Clip to an area of interest: the output covers the AOI bounding box
/// snapped outward to the cell lattice (clamped to the source extent), and
/// cells whose centers fall outside the polygon become nodata.
pub fn clip(ws: &Workspace, raster: Guid, aoi: &PolygonGeom) -> Result<Guid, RasterError> {
    let r = ws.raster(raster)?;
    let out = clip_in_memory(&r, aoi)?;
    register_raster(ws, out, "", &[raster], "clip")
}

pub fn clip_in_memory(r: &ClassRaster, aoi: &PolygonGeom) -> Result<ClassRaster, RasterError> {
    let mut min_lon = f64::INFINITY;
    let mut min_lat = f64::INFINITY;
    let mut max_lon = f64::NEG_INFINITY;
    let mut max_lat = f64::NEG_INFINITY;
    for &(x, y) in &aoi.exterior {
        min_lon = min_lon.min(x);
        min_lat = min_lat.min(y);
        max_lon = max_lon.max(x);
        max_lat = max_lat.max(y);
    }
    let ext = r.extent();
    if min_lon >= ext.max_lon || max_lon <= ext.min_lon || min_lat >= ext.max_lat || max_lat <= ext.min_lat
    {
        return Err(RasterError::NoOverlap);
    }
    let cs = r.cell_size;
    // Lattice column/row indices measured from the lower-left origin.
    let col0 = (((min_lon - r.origin.0) / cs).floor().max(0.0)) as usize;
    let col1 = (((max_lon - r.origin.0) / cs).ceil().min(r.ncols as f64)) as usize;
    let row_b0 = (((min_lat - r.origin.1) / cs).floor().max(0.0)) as usize; // from bottom
    let row_b1 = (((max_lat - r.origin.1) / cs).ceil().min(r.nrows as f64)) as usize;
    if col0 >= col1 || row_b0 >= row_b1 {
        return Err(RasterError::NoOverlap);
    }
    let out_cols = col1 - col0;
    let out_rows = row_b1 - row_b0;
    let origin = (r.origin.0 + col0 as f64 * cs, r.origin.1 + row_b0 as f64 * cs);
    let mut cells = vec![r.nodata; out_rows * out_cols];
    for or in 0..out_rows {
        for oc in 0..out_cols {
            // Top-based row in the source grid for this output cell.
            let bottom_row = row_b0 + (out_rows - 1 - or);
            let src_row = r.nrows - 1 - bottom_row;
            let src_col = col0 + oc;
            let (cx, cy) = r.cell_center(src_row, src_col);
            if point_in_polygon(cx, cy, aoi) {
                cells[or * out_cols + oc] = r.cell(src_row, src_col);
            }
        }
    }
    Ok(ClassRaster {
        nrows: out_rows,
        ncols: out_cols,
        origin,
        cell_size: cs,
        nodata: r.nodata,
        cells,
        class_names: r.class_names.clone(),
    })
}

/// Fraction of non-nodata cells per class. Classes present in the legend but
/// absent from the grid report 0.
pub fn class_proportions(raster: &ClassRaster) -> Result<BTreeMap<i32, f64>, RasterError> {
    let counts = raster.class_counts();
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(RasterError::AllNoData);
    }
    let mut out = BTreeMap::new();
    for code in raster.class_names.keys() {
        let n = counts.get(code).copied().unwrap_or(0);
        out.insert(*code, n as f64 / total as f64);
    }
    Ok(out)
}

/// Per-class proportion change between two rasters sharing a legend.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassChange {
    pub code: i32,
    pub label: String,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

/// Compare two rasters class-by-class (by proportion, so differing grids are
/// legal). The report is also registered as a derived Table asset with
/// lineage to both inputs.
pub fn proportion_change(
    ws: &Workspace,
    before: Guid,
    after: Guid,
) -> Result<(Vec<ClassChange>, Guid), RasterError> {
    let rb = ws.raster(before)?;
    let ra = ws.raster(after)?;
    if rb.class_names.keys().all(|k| !ra.class_names.contains_key(k)) {
        return Err(RasterError::LegendMismatch);
    }
    let pb = class_proportions(&rb)?;
    let pa = class_proportions(&ra)?;
    let mut codes: Vec<i32> = rb
        .class_names
        .keys()
        .chain(ra.class_names.keys())
        .copied()
        .collect();
    codes.sort_unstable();
    codes.dedup();
    let mut changes = Vec::new();
    for code in codes {
        let label = rb
            .class_names
            .get(&code)
            .or_else(|| ra.class_names.get(&code))
            .cloned()
            .unwrap_or_default();
        let b = pb.get(&code).copied().unwrap_or(0.0);
        let a = pa.get(&code).copied().unwrap_or(0.0);
        changes.push(ClassChange {
            code,
            label,
            before: b,
            after: a,
            delta: a - b,
        });
    }
    let table = Table::new(
        vec![
            ("class_code".to_string(), ColumnType::Number),
            ("class_name".to_string(), ColumnType::Text),
            ("p_before".to_string(), ColumnType::Number),
            ("p_after".to_string(), ColumnType::Number),
            ("delta".to_string(), ColumnType::Number),
        ],
        changes
            .iter()
            .map(|c| {
                vec![
                    Cell::Number(c.code as f64),
                    Cell::Text(c.label.clone()),
                    Cell::Number(c.before),
                    Cell::Number(c.after),
                    Cell::Number(c.delta),
                ]
            })
            .collect(),
    )?;
    let guid = crate::table::register_derived_table(ws, table, &[before, after], "proportion_change")?;
    Ok((changes, guid))
}

/// Render a change report for observations.
pub fn render_changes(changes: &[ClassChange]) -> String {
    changes
        .iter()
        .map(|c| {
            format!(
                "{} ({}): before={} after={} delta={}",
                c.label,
                c.code,
                fmt_num(c.before),
                fmt_num(c.after),
                fmt_num(c.delta)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws() -> (tempfile::TempDir, Workspace) {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("run")).unwrap();
        (dir, ws)
    }

    fn grid_2x2() -> &'static str {
        "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 1\n1 1\n"
    }

    #[test]
    fn tiny_grid_parses() {
        let r = parse_grid_content(grid_2x2(), "1,grass\n").unwrap();
        assert_eq!(r.cells.len(), 4);
        assert_eq!(r.class_names.len(), 1);
        assert_eq!(r.cell_center(1, 0), (0.5, 0.5)); // bottom-left cell
        assert_eq!(r.cell_center(0, 1), (1.5, 1.5)); // top-right cell
    }

    #[test]
    fn cell_count_mismatch_detected() {
        let bad = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 1\n1\n";
        let err = parse_grid_content(bad, "1,grass\n").unwrap_err();
        assert!(matches!(err, RasterError::CellCountMismatch { expected: 4, found: 3 }));
    }

    #[test]
    fn unknown_class_code_detected() {
        let bad = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n7\n";
        let err = parse_grid_content(bad, "1,grass\n").unwrap_err();
        assert!(matches!(err, RasterError::UnknownClassCode(7)));
    }

    #[test]
    fn extent_follows_header_arithmetic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut body = String::new();
        for _ in 0..50 {
            let row: Vec<String> = (0..50).map(|_| rng.gen_range(1..=6).to_string()).collect();
            body.push_str(&row.join(" "));
            body.push('\n');
        }
        let grid = format!(
            "ncols 50\nnrows 50\nxllcorner 10\nyllcorner 20\ncellsize 0.01\nNODATA_value -1\n{body}"
        );
        let legend = "1,a\n2,b\n3,c\n4,d\n5,e\n6,f\n";
        let r = parse_grid_content(&grid, legend).unwrap();
        let e = r.extent();
        assert!((e.max_lon - (10.0 + 50.0 * 0.01)).abs() < 1e-12);
        assert!((e.max_lat - (20.0 + 50.0 * 0.01)).abs() < 1e-12);
    }

    #[test]
    fn proportions_hand_count() {
        let grid = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 1\n2 -1\n";
        let r = parse_grid_content(grid, "1,grass\n2,water\n").unwrap();
        let p = class_proportions(&r).unwrap();
        assert!((p[&1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[&2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_grid_single_class() {
        let r = parse_grid_content(grid_2x2(), "1,grass\n").unwrap();
        let p = class_proportions(&r).unwrap();
        assert_eq!(p[&1], 1.0);
    }

    #[test]
    fn all_nodata_errors() {
        let grid = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n-1\n";
        let r = parse_grid_content(grid, "1,grass\n").unwrap();
        assert!(matches!(class_proportions(&r), Err(RasterError::AllNoData)));
    }

    #[test]
    fn proportions_match_histogram_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cells: Vec<i32> = (0..2500).map(|_| rng.gen_range(1..=6)).collect();
        let r = ClassRaster {
            nrows: 50,
            ncols: 50,
            origin: (0.0, 0.0),
            cell_size: 0.01,
            nodata: -1,
            cells: cells.clone(),
            class_names: (1..=6).map(|c| (c, format!("c{c}"))).collect(),
        };
        let p = class_proportions(&r).unwrap();
        // Independent tally.
        for code in 1..=6 {
            let n = cells.iter().filter(|&&c| c == code).count();
            assert!((p[&code] - n as f64 / 2500.0).abs() < 1e-12);
        }
        let sum: f64 = p.values().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clip_full_extent_is_identity() {
        let (_d, ws) = ws();
        let r = parse_grid_content(grid_2x2(), "1,grass\n").unwrap();
        let g = register_raster(&ws, r.clone(), "mem://g", &[], "").unwrap();
        let aoi = PolygonGeom {
            exterior: vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0), (0.0, 0.0)],
            holes: vec![],
        };
        let out = clip(&ws, g, &aoi).unwrap();
        let c = ws.raster(out).unwrap();
        assert_eq!(c.cells, r.cells);
        assert_eq!(c.origin, r.origin);
    }

    #[test]
    fn clip_left_half_blanks_right_cells() {
        let (_d, ws) = ws();
        let grid = "ncols 4\nnrows 4\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n".to_string()
            + &"1 1 1 1\n".repeat(4);
        let r = parse_grid_content(&grid, "1,grass\n").unwrap();
        let g = register_raster(&ws, r, "mem://g", &[], "").unwrap();
        // Covers the left half: cell centers at x = 0.5, 1.5 fall inside.
        let aoi = PolygonGeom {
            exterior: vec![(0.0, 0.0), (2.0, 0.0), (2.0, 4.0), (0.0, 4.0), (0.0, 0.0)],
            holes: vec![],
        };
        let out = clip(&ws, g, &aoi).unwrap();
        let c = ws.raster(out).unwrap();
        assert_eq!(c.ncols, 2);
        assert_eq!(c.nrows, 4);
        assert!(c.cells.iter().all(|&v| v == 1));
    }

    #[test]
    fn concave_clip_matches_center_containment_oracle() {
        use rand::{Rng, SeedableRng};
        let (_d, ws) = ws();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let cells: Vec<i32> = (0..400).map(|_| rng.gen_range(1..=3)).collect();
        let r = ClassRaster {
            nrows: 20,
            ncols: 20,
            origin: (0.0, 0.0),
            cell_size: 1.0,
            nodata: -1,
            cells,
            class_names: (1..=3).map(|c| (c, format!("c{c}"))).collect(),
        };
        // L-shaped concave polygon.
        let aoi = PolygonGeom {
            exterior: vec![
                (1.0, 1.0),
                (15.0, 1.0),
                (15.0, 8.0),
                (8.0, 8.0),
                (8.0, 16.0),
                (1.0, 16.0),
                (1.0, 1.0),
            ],
            holes: vec![],
        };
        let g = register_raster(&ws, r.clone(), "mem://g", &[], "").unwrap();
        let out = clip(&ws, g, &aoi).unwrap();
        let c = ws.raster(out).unwrap();
        // Oracle: per-cell center containment over the source grid.
        for or_ in 0..c.nrows {
            for oc in 0..c.ncols {
                let (cx, cy) = c.cell_center(or_, oc);
                let expect_inside = point_in_polygon(cx, cy, &aoi);
                let v = c.cell(or_, oc);
                if expect_inside {
                    // Find the source cell with the same center.
                    let sc = ((cx - r.origin.0) / r.cell_size).floor() as usize;
                    let sb = ((cy - r.origin.1) / r.cell_size).floor() as usize;
                    let sr = r.nrows - 1 - sb;
                    assert_eq!(v, r.cell(sr, sc));
                } else {
                    assert_eq!(v, c.nodata);
                }
            }
        }
        // Conservation: per-class counts inside the polygon are unchanged.
        let mut src_counts: BTreeMap<i32, usize> = BTreeMap::new();
        for row in 0..r.nrows {
            for col in 0..r.ncols {
                let (cx, cy) = r.cell_center(row, col);
                if point_in_polygon(cx, cy, &aoi) {
                    *src_counts.entry(r.cell(row, col)).or_insert(0) += 1;
                }
            }
        }
        assert_eq!(src_counts, c.class_counts());
    }

    #[test]
    fn clip_no_overlap_errors() {
        let (_d, ws) = ws();
        let r = parse_grid_content(grid_2x2(), "1,grass\n").unwrap();
        let g = register_raster(&ws, r, "mem://g", &[], "").unwrap();
        let aoi = PolygonGeom {
            exterior: vec![(10.0, 10.0), (11.0, 10.0), (11.0, 11.0), (10.0, 11.0), (10.0, 10.0)],
            holes: vec![],
        };
        assert!(matches!(clip(&ws, g, &aoi), Err(RasterError::NoOverlap)));
    }

    #[test]
    fn clip_is_idempotent() {
        let (_d, ws) = ws();
        let grid = "ncols 4\nnrows 4\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n".to_string()
            + &"1 2 1 2\n".repeat(4);
        let r = parse_grid_content(&grid, "1,a\n2,b\n").unwrap();
        let g = register_raster(&ws, r, "mem://g", &[], "").unwrap();
        let aoi = PolygonGeom {
            exterior: vec![(0.0, 0.0), (3.0, 0.0), (3.0, 3.0), (0.0, 3.0), (0.0, 0.0)],
            holes: vec![],
        };
        let once = clip(&ws, g, &aoi).unwrap();
        let twice = clip(&ws, once, &aoi).unwrap();
        assert_eq!(ws.raster(once).unwrap().cells, ws.raster(twice).unwrap().cells);
    }

    #[test]
    fn identical_rasters_zero_delta() {
        let (_d, ws) = ws();
        let r = parse_grid_content(grid_2x2(), "1,grass\n").unwrap();
        let a = register_raster(&ws, r.clone(), "mem://a", &[], "").unwrap();
        let b = register_raster(&ws, r, "mem://b", &[], "").unwrap();
        let (changes, report) = proportion_change(&ws, a, b).unwrap();
        assert!(changes.iter().all(|c| c.delta == 0.0));
        // Report table has lineage to both rasters.
        let trace = ws.registry.trace_lineage(report).unwrap();
        assert!(trace.contains(&a) && trace.contains(&b));
    }

    #[test]
    fn total_swap_gives_unit_deltas() {
        let (_d, ws) = ws();
        let legend = "1,grass\n2,water\n";
        let g1 = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 1\n";
        let g2 = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n2 2\n";
        let a = register_raster(&ws, parse_grid_content(g1, legend).unwrap(), "m://a", &[], "").unwrap();
        let b = register_raster(&ws, parse_grid_content(g2, legend).unwrap(), "m://b", &[], "").unwrap();
        let (changes, _) = proportion_change(&ws, a, b).unwrap();
        let c1 = changes.iter().find(|c| c.code == 1).unwrap();
        let c2 = changes.iter().find(|c| c.code == 2).unwrap();
        assert_eq!(c1.delta, -1.0);
        assert_eq!(c2.delta, 1.0);
    }

    #[test]
    fn disjoint_legends_rejected() {
        let (_d, ws) = ws();
        let a = register_raster(
            &ws,
            parse_grid_content(grid_2x2(), "1,grass\n").unwrap(),
            "m://a",
            &[],
            "",
        )
        .unwrap();
        let g2 = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n7 7\n7 7\n";
        let b = register_raster(
            &ws,
            parse_grid_content(g2, "7,asphalt\n").unwrap(),
            "m://b",
            &[],
            "",
        )
        .unwrap();
        assert!(matches!(
            proportion_change(&ws, a, b),
            Err(RasterError::LegendMismatch)
        ));
    }
}
