//! Minimal shapefile + dBASE writers used by the fixture generator. Output
//! is deterministic: the dBASE "last update" stamp is fixed so identical
//! inputs produce byte-identical files.

use std::io::Write;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

pub struct ShapePoly {
    pub exterior: Vec<(f64, f64)>,
    pub holes: Vec<Vec<(f64, f64)>>,
}

fn signed_area2(ring: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for w in ring.windows(2) {
        s += w[0].0 * w[1].1 - w[1].0 * w[0].1;
    }
    s
}

fn close_ring(mut ring: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if ring.first() != ring.last() {
        let first = ring[0];
        ring.push(first);
    }
    ring
}

fn oriented(ring: Vec<(f64, f64)>, clockwise: bool) -> Vec<(f64, f64)> {
    let mut ring = close_ring(ring);
    let cw = signed_area2(&ring) < 0.0;
    if cw != clockwise {
        ring.reverse();
    }
    ring
}

fn bbox(points: impl Iterator<Item = (f64, f64)>) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for (x, y) in points {
        b[0] = b[0].min(x);
        b[1] = b[1].min(y);
        b[2] = b[2].max(x);
        b[3] = b[3].max(y);
    }
    b
}

fn header(shape_type: i32, total_words: usize, bb: [f64; 4]) -> Vec<u8> {
    let mut h = vec![0u8; 100];
    BigEndian::write_i32(&mut h[0..4], 9994);
    BigEndian::write_i32(&mut h[24..28], total_words as i32);
    LittleEndian::write_i32(&mut h[28..32], 1000);
    LittleEndian::write_i32(&mut h[32..36], shape_type);
    LittleEndian::write_f64(&mut h[36..44], bb[0]);
    LittleEndian::write_f64(&mut h[44..52], bb[1]);
    LittleEndian::write_f64(&mut h[52..60], bb[2]);
    LittleEndian::write_f64(&mut h[60..68], bb[3]);
    h
}

/// Write shape-type-5 polygons: exterior rings clockwise, holes
/// counter-clockwise, per the format convention.
pub fn write_polygon_shp(path: &Path, polys: &[ShapePoly]) -> std::io::Result<()> {
    let mut records: Vec<Vec<u8>> = Vec::new();
    for poly in polys {
        let mut rings: Vec<Vec<(f64, f64)>> =
            vec![oriented(poly.exterior.clone(), true)];
        for h in &poly.holes {
            rings.push(oriented(h.clone(), false));
        }
        let num_points: usize = rings.iter().map(|r| r.len()).sum();
        let bb = bbox(rings.iter().flatten().copied());
        let mut rec = Vec::new();
        let mut buf = [0u8; 8];
        LittleEndian::write_i32(&mut buf[..4], 5);
        rec.extend_from_slice(&buf[..4]);
        for v in bb {
            LittleEndian::write_f64(&mut buf, v);
            rec.extend_from_slice(&buf);
        }
        LittleEndian::write_i32(&mut buf[..4], rings.len() as i32);
        rec.extend_from_slice(&buf[..4]);
        LittleEndian::write_i32(&mut buf[..4], num_points as i32);
        rec.extend_from_slice(&buf[..4]);
        let mut start = 0i32;
        for r in &rings {
            LittleEndian::write_i32(&mut buf[..4], start);
            rec.extend_from_slice(&buf[..4]);
            start += r.len() as i32;
        }
        for &(x, y) in rings.iter().flatten() {
            LittleEndian::write_f64(&mut buf, x);
            rec.extend_from_slice(&buf);
            LittleEndian::write_f64(&mut buf, y);
            rec.extend_from_slice(&buf);
        }
        records.push(rec);
    }
    write_shp(path, 5, &records, polys.iter().flat_map(|p| p.exterior.iter().copied()))
}

/// Write shape-type-1 points.
pub fn write_point_shp(path: &Path, points: &[(f64, f64)]) -> std::io::Result<()> {
    let mut records = Vec::new();
    for &(x, y) in points {
        let mut rec = Vec::new();
        let mut buf = [0u8; 8];
        LittleEndian::write_i32(&mut buf[..4], 1);
        rec.extend_from_slice(&buf[..4]);
        LittleEndian::write_f64(&mut buf, x);
        rec.extend_from_slice(&buf);
        LittleEndian::write_f64(&mut buf, y);
        rec.extend_from_slice(&buf);
        records.push(rec);
    }
    write_shp(path, 1, &records, points.iter().copied())
}

fn write_shp(
    path: &Path,
    shape_type: i32,
    records: &[Vec<u8>],
    all_points: impl Iterator<Item = (f64, f64)>,
) -> std::io::Result<()> {
    let content_bytes: usize = records.iter().map(|r| r.len() + 8).sum();
    let total_words = (100 + content_bytes) / 2;
    let bb = bbox(all_points);
    let mut out = header(shape_type, total_words, bb);
    for (i, rec) in records.iter().enumerate() {
        let mut rh = [0u8; 8];
        BigEndian::write_i32(&mut rh[0..4], (i + 1) as i32);
        BigEndian::write_i32(&mut rh[4..8], (rec.len() / 2) as i32);
        out.extend_from_slice(&rh);
        out.extend_from_slice(rec);
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)
}

pub struct DbfField {
    pub name: String,
    pub numeric: bool,
    pub len: u8,
    pub dec: u8,
}

impl DbfField {
    pub fn text(name: &str, len: u8) -> Self {
        DbfField {
            name: name.to_string(),
            numeric: false,
            len,
            dec: 0,
        }
    }

    pub fn number(name: &str, len: u8, dec: u8) -> Self {
        DbfField {
            name: name.to_string(),
            numeric: true,
            len,
            dec,
        }
    }
}

/// Write a dBASE III attribute table; `rows` are pre-rendered strings.
pub fn write_dbf(path: &Path, fields: &[DbfField], rows: &[Vec<String>]) -> std::io::Result<()> {
    let header_len = 32 + 32 * fields.len() + 1;
    let record_len = 1 + fields.iter().map(|f| f.len as usize).sum::<usize>();
    let mut out = Vec::new();
    out.push(0x03);
    out.extend_from_slice(&[95, 1, 1]); // fixed stamp for determinism
    let mut buf4 = [0u8; 4];
    LittleEndian::write_u32(&mut buf4, rows.len() as u32);
    out.extend_from_slice(&buf4);
    let mut buf2 = [0u8; 2];
    LittleEndian::write_u16(&mut buf2, header_len as u16);
    out.extend_from_slice(&buf2);
    LittleEndian::write_u16(&mut buf2, record_len as u16);
    out.extend_from_slice(&buf2);
    out.extend_from_slice(&[0u8; 20]);
    for f in fields {
        let mut desc = [0u8; 32];
        for (i, b) in f.name.bytes().take(10).enumerate() {
            desc[i] = b;
        }
        desc[11] = if f.numeric { b'N' } else { b'C' };
        desc[16] = f.len;
        desc[17] = f.dec;
        out.extend_from_slice(&desc);
    }
    out.push(0x0D);
    for row in rows {
        out.push(0x20);
        for (f, val) in fields.iter().zip(row) {
            let mut bytes: Vec<u8> = val.bytes().take(f.len as usize).collect();
            if f.numeric {
                // right-justify numerics
                let mut padded = vec![b' '; f.len as usize - bytes.len()];
                padded.extend_from_slice(&bytes);
                bytes = padded;
            } else {
                bytes.resize(f.len as usize, b' ');
            }
            out.extend_from_slice(&bytes);
        }
    }
    out.push(0x1A);
    let mut fh = std::fs::File::create(path)?;
    fh.write_all(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::Workspace;

    #[test]
    fn written_shapefile_parses_back() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("run")).unwrap();
        let shp = dir.path().join("sq.shp");
        write_polygon_shp(
            &shp,
            &[ShapePoly {
                exterior: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
                holes: vec![],
            }],
        )
        .unwrap();
        write_dbf(
            &dir.path().join("sq.dbf"),
            &[DbfField::text("name", 12)],
            &[vec!["Alpha".to_string()]],
        )
        .unwrap();
        let g = crate::geo::parse_vector(&ws, &shp).unwrap();
        let ft = ws.vector(g).unwrap();
        assert_eq!(ft.geometries.len(), 1);
        assert_eq!(ft.attributes.rows.len(), 1);
        let ext = ft.extent().unwrap();
        assert_eq!(
            (ext.min_lon, ext.min_lat, ext.max_lon, ext.max_lat),
            (0.0, 0.0, 1.0, 1.0)
        );
        assert_eq!(
            ft.attributes.rows[0][0],
            crate::table::Cell::Text("Alpha".into())
        );
    }

    #[test]
    fn point_shapefile_parses_back() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("run")).unwrap();
        let shp = dir.path().join("pts.shp");
        let pts = [(114.1, 22.3), (114.2, 22.4), (113.9, 22.2)];
        write_point_shp(&shp, &pts).unwrap();
        write_dbf(
            &dir.path().join("pts.dbf"),
            &[DbfField::number("id", 6, 0)],
            &[vec!["1".into()], vec!["2".into()], vec!["3".into()]],
        )
        .unwrap();
        let g = crate::geo::parse_vector(&ws, &shp).unwrap();
        let ft = ws.vector(g).unwrap();
        assert_eq!(ft.geometries.len(), 3);
        match &ft.geometries[0] {
            crate::geo::Geometry::Point(x, y) => {
                assert_eq!((*x, *y), (114.1, 22.3));
            }
            other => panic!("expected point, got {other:?}"),
        }
    }

    #[test]
    fn eighteen_districts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("run")).unwrap();
        let mut polys = Vec::new();
        let mut names = Vec::new();
        for i in 0..18 {
            let x0 = (i % 6) as f64;
            let y0 = (i / 6) as f64;
            polys.push(ShapePoly {
                exterior: vec![(x0, y0), (x0 + 1.0, y0), (x0 + 1.0, y0 + 1.0), (x0, y0 + 1.0)],
                holes: vec![],
            });
            names.push(vec![format!("District-{}", (b'A' + i as u8) as char)]);
        }
        let shp = dir.path().join("districts.shp");
        write_polygon_shp(&shp, &polys).unwrap();
        write_dbf(
            &dir.path().join("districts.dbf"),
            &[DbfField::text("name", 16)],
            &names,
        )
        .unwrap();
        let g = crate::geo::parse_vector(&ws, &shp).unwrap();
        let ft = ws.vector(g).unwrap();
        assert_eq!(ft.geometries.len(), 18);
        assert_eq!(ft.attributes.rows.len(), 18);
    }
}
