//! Analytical add-ons: density-based clustering of point events, cluster
//! size categorization, change aggregation between snapshots, and Pearson
//! correlation matrices for influential-factor analysis.
//!
//! Distances are planar Euclidean on lon/lat, which is acceptable at city
//! scale; haversine is out of scope.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geo::{point_coordinates, GeoError};
use crate::table::{Cell, ColumnType, JoinKind, Table, TableError};
use crate::util::fmt_num;
use crate::workspace::{Workspace, WorkspaceError};
use crate::Guid;

pub const NOISE: i64 = -1;
const UNVISITED: i64 = -2;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("thresholds must satisfy 0 < small_max < medium_max")]
    InvalidThresholds,
    #[error("column '{0}' has zero variance")]
    ZeroVariance(String),
    #[error("too few pairwise-complete observations for {0}")]
    TooFewObservations(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

/// Result of a clustering run: one label per input point, `-1` for noise,
/// cluster ids contiguous from 0 in discovery order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    pub labels: Vec<i64>,
    pub eps: f64,
    pub min_pts: usize,
}

impl ClusterLabeling {
    pub fn cluster_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l >= 0)
            .map(|&l| l + 1)
            .max()
            .unwrap_or(0) as usize
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Cluster id -> member count, noise excluded.
    pub fn sizes(&self) -> BTreeMap<i64, usize> {
        let mut sizes = BTreeMap::new();
        for &l in &self.labels {
            if l >= 0 {
                *sizes.entry(l).or_insert(0) += 1;
            }
        }
        sizes
    }
}

/// Classic density-based clustering. A point is core iff at least `min_pts`
/// points (itself included) lie within `eps`; clusters are maximal
/// density-connected sets; border points go to the first cluster discovered
/// in point-index order.
pub fn dbscan_labels(
    points: &[(f64, f64)],
    eps: f64,
    min_pts: usize,
) -> Result<ClusterLabeling, AnalyticsError> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(AnalyticsError::InvalidParameter("eps must be > 0".into()));
    }
    if min_pts < 1 {
        return Err(AnalyticsError::InvalidParameter("min_pts must be >= 1".into()));
    }
    if points.is_empty() {
        return Err(AnalyticsError::InvalidParameter("need at least 1 point".into()));
    }
    let eps2 = eps * eps;
    let region = |i: usize| -> Vec<usize> {
        let (xi, yi) = points[i];
        points
            .iter()
            .enumerate()
            .filter(|(_, &(x, y))| {
                let dx = x - xi;
                let dy = y - yi;
                dx * dx + dy * dy <= eps2
            })
            .map(|(j, _)| j)
            .collect()
    };
    let mut labels = vec![UNVISITED; points.len()];
    let mut cluster: i64 = 0;
    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        let neigh = region(i);
        if neigh.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        let mut queue: std::collections::VecDeque<usize> = neigh.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster; // border point claimed by first cluster
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = cluster;
            let nq = region(q);
            if nq.len() >= min_pts {
                queue.extend(nq);
            }
        }
        cluster += 1;
    }
    Ok(ClusterLabeling {
        labels,
        eps,
        min_pts,
    })
}

/// Cluster the lon/lat points of a table and register the labeled table as a
/// derived asset (input columns plus a `cluster` column).
pub fn dbscan(
    ws: &Workspace,
    points: Guid,
    eps: f64,
    min_pts: usize,
) -> Result<(Guid, ClusterLabeling), AnalyticsError> {
    let coords = point_coordinates(ws, points)?;
    let labeling = dbscan_labels(&coords, eps, min_pts)?;
    let t = ws.table(points)?;
    let mut columns = t.columns.clone();
    columns.push(("cluster".to_string(), ColumnType::Number));
    let rows = t
        .rows
        .iter()
        .zip(&labeling.labels)
        .map(|(r, &l)| {
            let mut row = r.clone();
            row.push(Cell::Number(l as f64));
            row
        })
        .collect();
    let out = Table::new(columns, rows)?;
    let guid = crate::table::register_derived_table(ws, out, &[points], "cluster")?;
    Ok((guid, labeling))
}

/// Small/medium/large bucket counts over non-noise clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterCategories {
    pub small: usize,
    pub medium: usize,
    pub large: usize,
    /// (cluster id, size), ascending by id.
    pub sizes: Vec<(i64, usize)>,
}

/// A cluster of size s is small iff s <= small_max, medium iff
/// small_max < s <= medium_max, else large. Noise is excluded.
pub fn categorize_clusters(
    labeling: &ClusterLabeling,
    small_max: usize,
    medium_max: usize,
) -> Result<ClusterCategories, AnalyticsError> {
    if small_max == 0 || small_max >= medium_max {
        return Err(AnalyticsError::InvalidThresholds);
    }
    let mut out = ClusterCategories {
        small: 0,
        medium: 0,
        large: 0,
        sizes: Vec::new(),
    };
    for (id, size) in labeling.sizes() {
        if size <= small_max {
            out.small += 1;
        } else if size <= medium_max {
            out.medium += 1;
        } else {
            out.large += 1;
        }
        out.sizes.push((id, size));
    }
    Ok(out)
}

/// Symmetric matrix of Pearson coefficients, unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub variables: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.variables.iter().position(|v| v == a)?;
        let j = self.variables.iter().position(|v| v == b)?;
        Some(self.values[i][j])
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("variables: {}\n", self.variables.join(", ")));
        for (i, var) in self.variables.iter().enumerate() {
            let row: Vec<String> = self.values[i].iter().map(|v| fmt_num(*v)).collect();
            out.push_str(&format!("{var}: [{}]\n", row.join(", ")));
        }
        out
    }
}

fn pearson_pair(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    (cov, vx, vy)
}

/// Pearson correlation over pairwise-complete observations. The matrix is
/// also registered as a derived Table asset.
pub fn pearson_matrix(
    ws: &Workspace,
    table: Guid,
    columns: &[String],
) -> Result<(CorrelationMatrix, Guid), AnalyticsError> {
    let t = ws.table(table)?;
    if columns.len() < 2 {
        return Err(AnalyticsError::InvalidParameter(
            "need at least 2 columns".into(),
        ));
    }
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| t.column_index(c).map_err(AnalyticsError::Table))
        .collect::<Result<_, _>>()?;
    for (c, &i) in columns.iter().zip(&idx) {
        if t.columns[i].1 != ColumnType::Number {
            return Err(AnalyticsError::Table(TableError::TypeMismatch {
                column: c.clone(),
                op: "pearson".into(),
            }));
        }
    }
    let k = columns.len();
    let mut values = vec![vec![0.0; k]; k];
    for a in 0..k {
        values[a][a] = 1.0;
        for b in (a + 1)..k {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for row in &t.rows {
                if let (Some(x), Some(y)) = (row[idx[a]].as_number(), row[idx[b]].as_number()) {
                    xs.push(x);
                    ys.push(y);
                }
            }
            if xs.len() < 2 {
                return Err(AnalyticsError::TooFewObservations(format!(
                    "{} vs {}",
                    columns[a], columns[b]
                )));
            }
            let (cov, vx, vy) = pearson_pair(&xs, &ys);
            if vx == 0.0 {
                return Err(AnalyticsError::ZeroVariance(columns[a].clone()));
            }
            if vy == 0.0 {
                return Err(AnalyticsError::ZeroVariance(columns[b].clone()));
            }
            let r = cov / (vx.sqrt() * vy.sqrt());
            values[a][b] = r;
            values[b][a] = r;
        }
    }
    let matrix = CorrelationMatrix {
        variables: columns.to_vec(),
        values,
    };
    // Materialize as variable x variable table.
    let mut tcols = vec![("variable".to_string(), ColumnType::Text)];
    for c in columns {
        tcols.push((c.clone(), ColumnType::Number));
    }
    let rows = matrix
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut row = vec![Cell::Text(v.clone())];
            row.extend(matrix.values[i].iter().map(|x| Cell::Number(*x)));
            row
        })
        .collect();
    let table_out = Table::new(tcols, rows)?;
    let guid = crate::table::register_derived_table(ws, table_out, &[table], "correlate")?;
    Ok((matrix, guid))
}

/// Verbal banding convention for correlation strength: |r| < 0.3 weak,
/// < 0.6 moderate, else strong.
pub fn correlation_band(r: f64) -> &'static str {
    let a = r.abs();
    if a < 0.3 {
        "weak"
    } else if a < 0.6 {
        "moderate"
    } else {
        "strong"
    }
}

/// Change aggregation between two snapshots keyed by a shared column:
/// derived table (key, <value>_before, <value>_after, change) sorted by key.
pub fn change_table(
    ws: &Workspace,
    before: Guid,
    after: Guid,
    key: &str,
    value: &str,
) -> Result<Guid, AnalyticsError> {
    let tb = ws.table(before)?;
    let ta = ws.table(after)?;
    let joined = crate::table::join_in_memory(&tb, &ta, key, JoinKind::Inner)?;
    let ki = joined.column_index(key)?;
    let bi = joined.column_index(value)?;
    let after_col = if joined.column_index(&format!("{value}_r")).is_ok() {
        format!("{value}_r")
    } else {
        value.to_string()
    };
    let ai = joined.column_index(&after_col)?;
    if joined.columns[bi].1 != ColumnType::Number || joined.columns[ai].1 != ColumnType::Number {
        return Err(AnalyticsError::Table(TableError::TypeMismatch {
            column: value.to_string(),
            op: "change".into(),
        }));
    }
    let key_ty = joined.columns[ki].1;
    let mut rows: Vec<Vec<Cell>> = joined
        .rows
        .iter()
        .map(|r| {
            let b = r[bi].as_number();
            let a = r[ai].as_number();
            let change = match (a, b) {
                (Some(a), Some(b)) => Cell::Number(a - b),
                _ => Cell::Null,
            };
            vec![r[ki].clone(), r[bi].clone(), r[ai].clone(), change]
        })
        .collect();
    rows.sort_by(|x, y| x[0].render().cmp(&y[0].render()));
    let out = Table::new(
        vec![
            (key.to_string(), key_ty),
            (format!("{value}_before"), ColumnType::Number),
            (format!("{value}_after"), ColumnType::Number),
            ("change".to_string(), ColumnType::Number),
        ],
        rows,
    )?;
    let guid = crate::table::register_derived_table(ws, out, &[before, after], "change")?;
    Ok(guid)
}

/// Keep the rows whose `column` value sits in the top `fraction` of the
/// distribution (ties at the threshold included). Returns the filtered table
/// and the threshold used. This is the "poor quality" percentile cut applied
/// before clustering.
pub fn top_fraction(table: &Table, column: &str, fraction: f64) -> Result<(Table, f64), AnalyticsError> {
    if !(0.0..=1.0).contains(&fraction) || fraction == 0.0 {
        return Err(AnalyticsError::InvalidParameter(
            "fraction must be in (0, 1]".into(),
        ));
    }
    let mut values = table.numeric_values(column)?;
    if values.is_empty() {
        return Err(AnalyticsError::InvalidParameter(format!(
            "column '{column}' has no numeric values"
        )));
    }
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    let threshold = values[k - 1];
    let idx = table.column_index(column)?;
    let rows = table
        .rows
        .iter()
        .filter(|r| r[idx].as_number().map(|v| v >= threshold).unwrap_or(false))
        .cloned()
        .collect();
    Ok((Table::new(table.columns.clone(), rows)?, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::oracle;
    use crate::table::parse_csv;

    fn points_table(ws: &Workspace, pts: &[(f64, f64)]) -> Guid {
        let mut csv = String::from("lon,lat\n");
        for (x, y) in pts {
            csv.push_str(&format!("{x},{y}\n"));
        }
        let t = parse_csv(&csv).unwrap();
        crate::table::register_derived_table(ws, t, &[], "test").unwrap()
    }

    fn ws() -> (tempfile::TempDir, Workspace) {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("run")).unwrap();
        (dir, ws)
    }

    #[test]
    fn single_point_min_pts_one() {
        let l = dbscan_labels(&[(0.0, 0.0)], 1.0, 1).unwrap();
        assert_eq!(l.labels, vec![0]);
        assert_eq!(l.cluster_count(), 1);
        assert_eq!(l.noise_count(), 0);
    }

    #[test]
    fn two_separated_blobs() {
        let mut pts = Vec::new();
        for i in 0..5 {
            pts.push((i as f64 * 0.01, 0.0));
        }
        for i in 0..5 {
            pts.push((100.0 + i as f64 * 0.01, 0.0));
        }
        let l = dbscan_labels(&pts, 0.05, 3).unwrap();
        assert_eq!(&l.labels[..5], &[0, 0, 0, 0, 0]);
        assert_eq!(&l.labels[5..], &[1, 1, 1, 1, 1]);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(dbscan_labels(&[(0.0, 0.0)], 0.0, 1).is_err());
        assert!(dbscan_labels(&[(0.0, 0.0)], 1.0, 0).is_err());
        assert!(dbscan_labels(&[], 1.0, 1).is_err());
    }

    #[test]
    fn random_instances_match_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for trial in 0..20 {
            let n = rng.gen_range(5..=200);
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
                .collect();
            let eps = rng.gen_range(0.02..0.2);
            let min_pts = rng.gen_range(1..=6);
            let got = dbscan_labels(&pts, eps, min_pts).unwrap();
            let want = oracle::dbscan_reference(&pts, eps, min_pts);
            assert_eq!(got.labels, want, "trial {trial} eps={eps} min_pts={min_pts}");
        }
    }

    #[test]
    fn partition_invariant_under_permutation() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<(f64, f64)> = (0..60)
            .map(|i| {
                let g = (i / 20) as f64;
                (g * 10.0 + (i % 20) as f64 * 0.01, 0.0)
            })
            .collect();
        let base = dbscan_labels(&pts, 0.05, 3).unwrap();
        let as_sets = |pts: &[(f64, f64)], labels: &[i64]| {
            let mut m: BTreeMap<i64, Vec<String>> = BTreeMap::new();
            for (p, &l) in pts.iter().zip(labels) {
                if l >= 0 {
                    m.entry(l).or_default().push(format!("{:?}", p));
                }
            }
            let mut sets: Vec<Vec<String>> = m
                .into_values()
                .map(|mut v| {
                    v.sort();
                    v
                })
                .collect();
            sets.sort();
            sets
        };
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<(f64, f64)> = perm.iter().map(|&i| pts[i]).collect();
        let other = dbscan_labels(&shuffled, 0.05, 3).unwrap();
        assert_eq!(as_sets(&pts, &base.labels), as_sets(&shuffled, &other.labels));
    }

    #[test]
    fn dbscan_asset_records_lineage() {
        let (_d, ws) = ws();
        let g = points_table(&ws, &[(0.0, 0.0), (0.001, 0.0), (0.002, 0.0)]);
        let (out, labeling) = dbscan(&ws, g, 0.01, 2).unwrap();
        assert_eq!(labeling.cluster_count(), 1);
        let t = ws.table(out).unwrap();
        assert_eq!(t.columns.last().unwrap().0, "cluster");
        assert!(ws.registry.trace_lineage(out).unwrap().contains(&g));
    }

    #[test]
    fn categorize_three_buckets() {
        let labeling = ClusterLabeling {
            labels: [vec![0; 2], vec![1; 5], vec![2; 40]].concat(),
            eps: 1.0,
            min_pts: 1,
        };
        let c = categorize_clusters(&labeling, 4, 20).unwrap();
        assert_eq!((c.small, c.medium, c.large), (1, 1, 1));
    }

    #[test]
    fn all_noise_counts_zero() {
        let labeling = ClusterLabeling {
            labels: vec![NOISE; 7],
            eps: 1.0,
            min_pts: 3,
        };
        let c = categorize_clusters(&labeling, 5, 15).unwrap();
        assert_eq!((c.small, c.medium, c.large), (0, 0, 0));
    }

    #[test]
    fn categorize_matches_bucket_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(30);
        let mut labels = Vec::new();
        let mut sizes = Vec::new();
        for id in 0..30i64 {
            let s = rng.gen_range(1..=40usize);
            sizes.push(s);
            labels.extend(std::iter::repeat_n(id, s));
        }
        let labeling = ClusterLabeling {
            labels,
            eps: 1.0,
            min_pts: 1,
        };
        let c = categorize_clusters(&labeling, 5, 15).unwrap();
        let small = sizes.iter().filter(|&&s| s <= 5).count();
        let medium = sizes.iter().filter(|&&s| s > 5 && s <= 15).count();
        let large = sizes.iter().filter(|&&s| s > 15).count();
        assert_eq!((c.small, c.medium, c.large), (small, medium, large));
        assert_eq!(c.small + c.medium + c.large, 30);
    }

    #[test]
    fn invalid_thresholds_rejected() {
        let labeling = ClusterLabeling {
            labels: vec![0],
            eps: 1.0,
            min_pts: 1,
        };
        assert!(categorize_clusters(&labeling, 0, 5).is_err());
        assert!(categorize_clusters(&labeling, 5, 5).is_err());
    }

    #[test]
    fn perfect_linear_correlation() {
        let (_d, ws) = ws();
        let t = parse_csv("x,y,z\n1,3,-1\n2,5,-2\n3,7,-3\n4,9,-4\n").unwrap();
        let g = crate::table::register_derived_table(&ws, t, &[], "test").unwrap();
        let (m, _) = pearson_matrix(&ws, g, &["x".into(), "y".into(), "z".into()]).unwrap();
        assert!((m.get("x", "y").unwrap() - 1.0).abs() < 1e-12);
        assert!((m.get("x", "z").unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m.get("x", "x").unwrap(), 1.0);
    }

    #[test]
    fn random_matrix_matches_direct_formula_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let (_d, ws) = ws();
        let mut csv = String::from("a,b\n");
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..50 {
            let x: f64 = rng.gen_range(-10.0..10.0);
            let y: f64 = rng.gen_range(-10.0..10.0);
            xs.push(x);
            ys.push(y);
            csv.push_str(&format!("{x},{y}\n"));
        }
        let t = parse_csv(&csv).unwrap();
        let g = crate::table::register_derived_table(&ws, t, &[], "test").unwrap();
        let (m, _) = pearson_matrix(&ws, g, &["a".into(), "b".into()]).unwrap();
        let want = oracle::pearson_direct(&xs, &ys);
        assert!((m.get("a", "b").unwrap() - want).abs() < 1e-12);
        // Symmetry and unit diagonal.
        assert_eq!(m.values[0][1], m.values[1][0]);
        assert_eq!(m.values[0][0], 1.0);
        assert_eq!(m.values[1][1], 1.0);
    }

    #[test]
    fn affine_rescale_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let (_d, ws) = ws();
        let xs: Vec<f64> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let ys: Vec<f64> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let build = |xs: &[f64], ys: &[f64]| {
            let mut csv = String::from("a,b\n");
            for (x, y) in xs.iter().zip(ys) {
                csv.push_str(&format!("{x},{y}\n"));
            }
            let t = parse_csv(&csv).unwrap();
            crate::table::register_derived_table(&ws, t, &[], "test").unwrap()
        };
        let g = build(&xs, &ys);
        let (m0, _) = pearson_matrix(&ws, g, &["a".into(), "b".into()]).unwrap();
        // Positive affine rescale leaves r unchanged.
        let xs_pos: Vec<f64> = xs.iter().map(|x| 3.5 * x + 11.0).collect();
        let g1 = build(&xs_pos, &ys);
        let (m1, _) = pearson_matrix(&ws, g1, &["a".into(), "b".into()]).unwrap();
        assert!((m0.get("a", "b").unwrap() - m1.get("a", "b").unwrap()).abs() < 1e-12);
        // Negative scale flips the sign.
        let xs_neg: Vec<f64> = xs.iter().map(|x| -2.0 * x + 4.0).collect();
        let g2 = build(&xs_neg, &ys);
        let (m2, _) = pearson_matrix(&ws, g2, &["a".into(), "b".into()]).unwrap();
        assert!((m0.get("a", "b").unwrap() + m2.get("a", "b").unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_names_column() {
        let (_d, ws) = ws();
        let t = parse_csv("a,b\n1,5\n2,5\n3,5\n").unwrap();
        let g = crate::table::register_derived_table(&ws, t, &[], "test").unwrap();
        match pearson_matrix(&ws, g, &["a".into(), "b".into()]) {
            Err(AnalyticsError::ZeroVariance(c)) => assert_eq!(c, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn change_table_computes_deltas() {
        let (_d, ws) = ws();
        let before = parse_csv("street,count\nA,10\nB,4\n").unwrap();
        let after = parse_csv("street,count\nB,7\nA,6\n").unwrap();
        let gb = crate::table::register_derived_table(&ws, before, &[], "test").unwrap();
        let ga = crate::table::register_derived_table(&ws, after, &[], "test").unwrap();
        let out = change_table(&ws, gb, ga, "street", "count").unwrap();
        let t = ws.table(out).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0][0], Cell::Text("A".into()));
        assert_eq!(t.rows[0][3], Cell::Number(-4.0));
        assert_eq!(t.rows[1][3], Cell::Number(3.0));
    }

    #[test]
    fn top_fraction_keeps_largest_values() {
        let t = parse_csv("v\n1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n").unwrap();
        let (out, threshold) = top_fraction(&t, "v", 0.1).unwrap();
        assert_eq!(threshold, 10.0);
        assert_eq!(out.rows.len(), 1);
        let (out3, th3) = top_fraction(&t, "v", 0.3).unwrap();
        assert_eq!(th3, 8.0);
        assert_eq!(out3.rows.len(), 3);
    }

    #[test]
    fn correlation_bands() {
        assert_eq!(correlation_band(0.1), "weak");
        assert_eq!(correlation_band(-0.45), "moderate");
        assert_eq!(correlation_band(0.9), "strong");
    }
}
