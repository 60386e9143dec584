//! Image-modality toolkit: render cluster maps, choropleths, and heatmaps
//! over polygon basemaps into portable pixmap files registered as Image
//! assets.
//!
//! Rendering is deterministic: fixed palettes, no timestamps, pure buffer
//! math, so identical inputs produce byte-identical files. Files are written
//! atomically (temp + rename) with a sidecar text file recording viewport,
//! palette version, and input GUIDs.

use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::asset::{AssetDescriptor, GeoExtent, Modality};
use crate::geo::{point_coordinates, GeoError, Geometry, PolygonGeom};
use crate::table::TableError;
use crate::util::fmt_num;
use crate::workspace::{Workspace, WorkspaceError};
use crate::Guid;

pub const PALETTE_VERSION: &str = "v1";

/// 12-color categorical palette for cluster ids (no greys/black/white).
pub const CATEGORICAL: [(u8, u8, u8); 12] = [
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
];

/// 5-step sequential ramp for choropleths, light to dark.
pub const SEQUENTIAL: [(u8, u8, u8); 5] = [
    (239, 243, 255),
    (189, 215, 231),
    (107, 174, 214),
    (49, 130, 189),
    (8, 81, 156),
];

pub const NOISE_GREY: (u8, u8, u8) = (128, 128, 128);
pub const STROKE: (u8, u8, u8) = (40, 40, 40);
pub const BACKGROUND: (u8, u8, u8) = (255, 255, 255);
pub const TEXT: (u8, u8, u8) = (0, 0, 0);
const NEUTRAL: (u8, u8, u8) = (200, 200, 200);

pub const DEFAULT_WIDTH: usize = 480;
pub const DEFAULT_HEIGHT: usize = 360;
pub const DEFAULT_BANDWIDTH_PX: f64 = 12.0;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("viewport is empty or degenerate")]
    EmptyViewport,
    #[error("label column '{0}' missing")]
    MissingLabelColumn(String),
    #[error("all values null in '{0}'")]
    AllNull(String),
    #[error("no points to render")]
    EmptyPoints,
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Pixel canvas with an equirectangular lon/lat projection; aspect is
/// preserved by padding, not distortion.
#[derive(Debug, Clone)]
pub struct MapCanvas {
    pub width: usize,
    pub height: usize,
    pub viewport: GeoExtent,
    scale: f64,
    off_x: f64,
    off_y: f64,
}

impl MapCanvas {
    pub fn new(width: usize, height: usize, viewport: GeoExtent) -> Result<Self, VizError> {
        let dlon = viewport.max_lon - viewport.min_lon;
        let dlat = viewport.max_lat - viewport.min_lat;
        if !dlon.is_finite() || !dlat.is_finite() || dlon <= 0.0 || dlat <= 0.0 || width == 0 || height == 0
        {
            return Err(VizError::EmptyViewport);
        }
        let scale = (width as f64 / dlon).min(height as f64 / dlat);
        let off_x = (width as f64 - dlon * scale) / 2.0;
        let off_y = (height as f64 - dlat * scale) / 2.0;
        Ok(MapCanvas {
            width,
            height,
            viewport,
            scale,
            off_x,
            off_y,
        })
    }

    /// Viewport = extent padded by 5% on each side.
    pub fn fit_extent(extent: &GeoExtent) -> Result<Self, VizError> {
        let dlon = (extent.max_lon - extent.min_lon).max(1e-9);
        let dlat = (extent.max_lat - extent.min_lat).max(1e-9);
        let viewport = GeoExtent {
            min_lon: extent.min_lon - 0.05 * dlon,
            min_lat: extent.min_lat - 0.05 * dlat,
            max_lon: extent.max_lon + 0.05 * dlon,
            max_lat: extent.max_lat + 0.05 * dlat,
        };
        MapCanvas::new(DEFAULT_WIDTH, DEFAULT_HEIGHT, viewport)
    }

    pub fn to_pixel(&self, lon: f64, lat: f64) -> (f64, f64) {
        let x = self.off_x + (lon - self.viewport.min_lon) * self.scale;
        let y = self.off_y + (self.viewport.max_lat - lat) * self.scale;
        (x, y)
    }

    pub fn to_geo(&self, px: f64, py: f64) -> (f64, f64) {
        let lon = self.viewport.min_lon + (px - self.off_x) / self.scale;
        let lat = self.viewport.max_lat - (py - self.off_y) / self.scale;
        (lon, lat)
    }
}

/// Plain RGB raster buffer.
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<(u8, u8, u8)>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, fill: (u8, u8, u8)) -> Self {
        ImageBuffer {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn set(&mut self, x: i64, y: i64, c: (u8, u8, u8)) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    pub fn get(&self, x: usize, y: usize) -> (u8, u8, u8) {
        self.pixels[y * self.width + x]
    }

    pub fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, c: (u8, u8, u8)) {
        // Bresenham on rounded endpoints.
        let (mut x0, mut y0) = (x0.round() as i64, y0.round() as i64);
        let (x1, y1) = (x1.round() as i64, y1.round() as i64);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.set(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    pub fn disc(&mut self, cx: f64, cy: f64, r: f64, c: (u8, u8, u8)) {
        let x0 = (cx - r).floor() as i64;
        let x1 = (cx + r).ceil() as i64;
        let y0 = (cy - r).floor() as i64;
        let y1 = (cy + r).ceil() as i64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= r * r {
                    self.set(x, y, c);
                }
            }
        }
    }

    pub fn rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: (u8, u8, u8)) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.set(xx, yy, c);
            }
        }
    }
}

// 3x5 bitmap glyphs for digits and a few separators.
fn glyph(c: char) -> Option<[u8; 5]> {
    // Each row is 3 bits, most significant bit = leftmost pixel.
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        ':' => [0b000, 0b010, 0b000, 0b010, 0b000],
        ' ' => [0b000; 5],
        _ => return None,
    })
}

pub fn draw_text(buf: &mut ImageBuffer, x: i64, y: i64, text: &str, color: (u8, u8, u8)) {
    let mut cx = x;
    for ch in text.chars() {
        if let Some(rows) = glyph(ch) {
            for (ry, bits) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if bits & (0b100 >> rx) != 0 {
                        buf.set(cx + rx as i64, y + ry as i64, color);
                    }
                }
            }
        }
        cx += 4;
    }
}

// ---------------------------------------------------------------------------
// PPM I/O
// ---------------------------------------------------------------------------

/// Binary P6 portable pixmap; written via temp-file-then-rename.
pub fn write_ppm(buf: &ImageBuffer, path: &Path) -> std::io::Result<()> {
    let mut data = format!("P6\n{} {}\n255\n", buf.width, buf.height).into_bytes();
    for &(r, g, b) in &buf.pixels {
        data.push(r);
        data.push(g);
        data.push(b);
    }
    let tmp = path.with_extension("ppm.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&data)?;
    }
    std::fs::rename(&tmp, path)
}

pub fn read_ppm(path: &Path) -> std::io::Result<ImageBuffer> {
    let bytes = std::fs::read(path)?;
    let header_end = bytes
        .windows(1)
        .enumerate()
        .scan(0, |fields, (i, w)| {
            if w[0].is_ascii_whitespace() {
                *fields += 1;
            }
            Some((i, *fields))
        })
        .find(|&(_, fields)| fields == 4)
        .map(|(i, _)| i + 1)
        .unwrap_or(0);
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    let mut it = header.split_whitespace();
    let magic = it.next().unwrap_or("");
    assert_eq!(magic, "P6", "not a P6 pixmap");
    let width: usize = it.next().unwrap().parse().unwrap();
    let height: usize = it.next().unwrap().parse().unwrap();
    let _max: usize = it.next().unwrap().parse().unwrap();
    let mut pixels = Vec::with_capacity(width * height);
    for chunk in bytes[header_end..].chunks_exact(3) {
        pixels.push((chunk[0], chunk[1], chunk[2]));
    }
    Ok(ImageBuffer {
        width,
        height,
        pixels,
    })
}

// ---------------------------------------------------------------------------
// Shared drawing helpers
// ---------------------------------------------------------------------------

fn stroke_polygon(buf: &mut ImageBuffer, canvas: &MapCanvas, poly: &PolygonGeom) {
    for ring in std::iter::once(&poly.exterior).chain(poly.holes.iter()) {
        for w in ring.windows(2) {
            let (x0, y0) = canvas.to_pixel(w[0].0, w[0].1);
            let (x1, y1) = canvas.to_pixel(w[1].0, w[1].1);
            buf.line(x0, y0, x1, y1, STROKE);
        }
    }
}

fn stroke_geometry(buf: &mut ImageBuffer, canvas: &MapCanvas, g: &Geometry) {
    match g {
        Geometry::Point(x, y) => {
            let (px, py) = canvas.to_pixel(*x, *y);
            buf.set(px.round() as i64, py.round() as i64, STROKE);
        }
        Geometry::Polygon(p) => stroke_polygon(buf, canvas, p),
        Geometry::MultiPolygon(ps) => {
            for p in ps {
                stroke_polygon(buf, canvas, p);
            }
        }
    }
}

fn register_image(
    ws: &Workspace,
    buf: &ImageBuffer,
    kind: &str,
    canvas: &MapCanvas,
    parents: &[Guid],
) -> Result<Guid, VizError> {
    let guid = Guid::new_random();
    let path = ws.run_path(guid, "ppm");
    write_ppm(buf, &path)?;
    // Sidecar for auditability: viewport, palette version, inputs.
    let mut sidecar = String::new();
    sidecar.push_str(&format!(
        "kind={kind}\npalette={PALETTE_VERSION}\nviewport=({},{},{},{})\n",
        canvas.viewport.min_lon,
        canvas.viewport.min_lat,
        canvas.viewport.max_lon,
        canvas.viewport.max_lat
    ));
    for p in parents {
        sidecar.push_str(&format!("input={p}\n"));
    }
    std::fs::write(ws.run_path(guid, "txt"), sidecar)?;
    let desc = AssetDescriptor::new(
        Modality::Image,
        path.to_string_lossy(),
        format!(
            "image={}x{}; kind={kind}; palette={PALETTE_VERSION}",
            buf.width, buf.height
        ),
    )
    .with_extent(canvas.viewport);
    ws.registry
        .register_with_guid(guid, desc)
        .map_err(WorkspaceError::Asset)?;
    for p in parents {
        ws.registry
            .link_assets(*p, guid, "render")
            .map_err(WorkspaceError::Asset)?;
    }
    Ok(guid)
}

fn canvas_for(
    ws: &Workspace,
    basemap: Option<Guid>,
    fallback_points: &[(f64, f64)],
) -> Result<MapCanvas, VizError> {
    if let Some(bm) = basemap {
        let ft = ws.vector(bm)?;
        if let Some(ext) = ft.extent() {
            return MapCanvas::fit_extent(&ext);
        }
    }
    if fallback_points.is_empty() {
        return Err(VizError::EmptyViewport);
    }
    let mut ext = GeoExtent {
        min_lon: f64::INFINITY,
        min_lat: f64::INFINITY,
        max_lon: f64::NEG_INFINITY,
        max_lat: f64::NEG_INFINITY,
    };
    for &(x, y) in fallback_points {
        ext.min_lon = ext.min_lon.min(x);
        ext.min_lat = ext.min_lat.min(y);
        ext.max_lon = ext.max_lon.max(x);
        ext.max_lat = ext.max_lat.max(y);
    }
    MapCanvas::fit_extent(&ext)
}

// ---------------------------------------------------------------------------
// Renderers
// ---------------------------------------------------------------------------

/// Render labeled points over a polygon basemap. Each cluster id draws in a
/// fixed palette color, noise in grey; a legend block lists id and size.
pub fn render_cluster_map(
    ws: &Workspace,
    points_with_labels: Guid,
    basemap: Guid,
    label_column: &str,
) -> Result<Guid, VizError> {
    let t = ws.table(points_with_labels)?;
    let li = t
        .column_index(label_column)
        .map_err(|_| VizError::MissingLabelColumn(label_column.to_string()))?;
    let coords = point_coordinates(ws, points_with_labels)?;
    let canvas = canvas_for(ws, Some(basemap), &coords)?;
    let mut buf = ImageBuffer::new(canvas.width, canvas.height, BACKGROUND);
    let bm = ws.vector(basemap)?;
    for g in &bm.geometries {
        stroke_geometry(&mut buf, &canvas, g);
    }
    let mut sizes: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
    for (row, &(x, y)) in t.rows.iter().zip(&coords) {
        let label = row[li].as_number().unwrap_or(-1.0) as i64;
        let color = if label < 0 {
            NOISE_GREY
        } else {
            *sizes.entry(label).or_insert(0) += 1;
            CATEGORICAL[(label as usize) % CATEGORICAL.len()]
        };
        let (px, py) = canvas.to_pixel(x, y);
        buf.disc(px, py, 3.0, color);
    }
    // Legend block, bottom-left: swatch + "id:size" per cluster.
    for (k, (id, size)) in sizes.iter().enumerate() {
        let y = buf.height as i64 - 10 * (k as i64 + 1);
        let color = CATEGORICAL[(*id as usize) % CATEGORICAL.len()];
        buf.rect(4, y, 6, 6, color);
        draw_text(&mut buf, 13, y, &format!("{id}:{size}"), TEXT);
    }
    let guid = register_image(ws, &buf, "cluster_map", &canvas, &[points_with_labels, basemap])?;
    Ok(guid)
}

/// Fill polygons by a 5-step sequential ramp over the numeric value column;
/// null values hatch in neutral grey; legend shows the bin edges.
pub fn render_choropleth(
    ws: &Workspace,
    polygons: Guid,
    value_column: &str,
) -> Result<Guid, VizError> {
    let ft = ws.vector(polygons)?;
    let vi = ft.attributes.column_index(value_column)?;
    let values: Vec<Option<f64>> = ft.attributes.rows.iter().map(|r| r[vi].as_number()).collect();
    let present: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if present.is_empty() {
        return Err(VizError::AllNull(value_column.to_string()));
    }
    let min = present.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = present.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = max == min;
    let bin_of = |v: f64| -> usize {
        if degenerate {
            2 // mid color for a flat value range
        } else {
            (((v - min) / (max - min) * 5.0).floor() as usize).min(4)
        }
    };
    let ext = ft.extent().ok_or(VizError::EmptyViewport)?;
    let canvas = MapCanvas::fit_extent(&ext)?;
    let mut buf = ImageBuffer::new(canvas.width, canvas.height, BACKGROUND);
    for (fi, g) in ft.geometries.iter().enumerate() {
        let fill: Option<(u8, u8, u8)> = values[fi].map(|v| SEQUENTIAL[bin_of(v)]);
        let polys: Vec<&PolygonGeom> = match g {
            Geometry::Polygon(p) => vec![p],
            Geometry::MultiPolygon(ps) => ps.iter().collect(),
            Geometry::Point(_, _) => vec![],
        };
        for poly in polys {
            // Fill by per-pixel center containment within the bbox.
            let xs: Vec<f64> = poly.exterior.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = poly.exterior.iter().map(|p| p.1).collect();
            let (x0, y0) = canvas.to_pixel(
                xs.iter().cloned().fold(f64::INFINITY, f64::min),
                ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            let (x1, y1) = canvas.to_pixel(
                xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ys.iter().cloned().fold(f64::INFINITY, f64::min),
            );
            for py in y0.floor() as i64..=y1.ceil() as i64 {
                for px in x0.floor() as i64..=x1.ceil() as i64 {
                    let (lon, lat) = canvas.to_geo(px as f64 + 0.5, py as f64 + 0.5);
                    if crate::geo::point_in_polygon(lon, lat, poly) {
                        let c = match fill {
                            Some(c) => c,
                            None => {
                                // diagonal hatch for null values
                                if (px + py) % 4 < 2 {
                                    NEUTRAL
                                } else {
                                    BACKGROUND
                                }
                            }
                        };
                        buf.set(px, py, c);
                    }
                }
            }
            stroke_polygon(&mut buf, &canvas, poly);
        }
    }
    // Legend: 5 swatches with bin edges.
    for (k, swatch) in SEQUENTIAL.iter().enumerate() {
        let y = buf.height as i64 - 10 * (5 - k as i64);
        buf.rect(4, y, 6, 6, *swatch);
        let edge = if degenerate {
            min
        } else {
            min + (max - min) * k as f64 / 5.0
        };
        draw_text(&mut buf, 13, y, &fmt_num(edge), TEXT);
    }
    register_image(ws, &buf, "choropleth", &canvas, &[polygons])
}

/// Raw Gaussian kernel sums on the pixel grid: for each pixel, the sum of
/// `w_i * exp(-d^2 / (2 sigma^2))` over all points (pixel coordinates).
pub fn kernel_density(
    points_px: &[(f64, f64, f64)],
    width: usize,
    height: usize,
    sigma: f64,
) -> Vec<f64> {
    let mut grid = vec![0.0f64; width * height];
    let two_s2 = 2.0 * sigma * sigma;
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            for &(px, py, w) in points_px {
                let dx = x as f64 - px;
                let dy = y as f64 - py;
                sum += w * (-(dx * dx + dy * dy) / two_s2).exp();
            }
            grid[y * width + x] = sum;
        }
    }
    grid
}

fn heat_color(t: f64) -> (u8, u8, u8) {
    // black -> red -> yellow -> white
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 1.0 / 3.0 {
        (t * 3.0, 0.0, 0.0)
    } else if t < 2.0 / 3.0 {
        (1.0, (t - 1.0 / 3.0) * 3.0, 0.0)
    } else {
        (1.0, 1.0, (t - 2.0 / 3.0) * 3.0)
    };
    ((r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8)
}

/// Kernel-density heat surface composited over an optional basemap.
pub fn render_heatmap(
    ws: &Workspace,
    points: Guid,
    intensity_column: Option<&str>,
    basemap: Option<Guid>,
    bandwidth_px: f64,
) -> Result<Guid, VizError> {
    let coords = point_coordinates(ws, points)?;
    if coords.is_empty() {
        return Err(VizError::EmptyPoints);
    }
    let weights: Vec<f64> = match intensity_column {
        Some(col) => {
            let t = ws.table(points)?;
            let ci = t.column_index(col)?;
            t.rows
                .iter()
                .map(|r| r[ci].as_number().unwrap_or(0.0))
                .collect()
        }
        None => vec![1.0; coords.len()],
    };
    let canvas = canvas_for(ws, basemap, &coords)?;
    let mut buf = ImageBuffer::new(canvas.width, canvas.height, BACKGROUND);
    if let Some(bm) = basemap {
        let ft = ws.vector(bm)?;
        for g in &ft.geometries {
            stroke_geometry(&mut buf, &canvas, g);
        }
    }
    let pts_px: Vec<(f64, f64, f64)> = coords
        .iter()
        .zip(&weights)
        .map(|(&(x, y), &w)| {
            let (px, py) = canvas.to_pixel(x, y);
            (px, py, w)
        })
        .collect();
    let grid = kernel_density(&pts_px, canvas.width, canvas.height, bandwidth_px);
    let maxv = grid.iter().cloned().fold(0.0f64, f64::max);
    if maxv > 0.0 {
        for y in 0..canvas.height {
            for x in 0..canvas.width {
                let t = grid[y * canvas.width + x] / maxv;
                if t > 1e-3 {
                    let heat = heat_color(t);
                    let base = buf.get(x, y);
                    // alpha-composite with alpha = normalized intensity
                    let mix = |h: u8, b: u8| -> u8 {
                        (h as f64 * t + b as f64 * (1.0 - t)).round() as u8
                    };
                    buf.set(
                        x as i64,
                        y as i64,
                        (mix(heat.0, base.0), mix(heat.1, base.1), mix(heat.2, base.2)),
                    );
                }
            }
        }
    }
    let mut parents = vec![points];
    if let Some(bm) = basemap {
        parents.push(bm);
    }
    register_image(ws, &buf, "heatmap", &canvas, &parents)
}
