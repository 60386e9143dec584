//! Acceptance suite: one test per criterion, each printing a PASS line when
//! its assertions hold. Expected values come from independent brute-force
//! routes (the reference clustering, the raw-sums correlation formula,
//! per-cell tallies, nested-loop scans), never from the engine under test.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urbanlens_core::agent::parser::{parse_step, render_step, AgentStep, ParsedStep};
use urbanlens_core::agent::provider::ScriptedProvider;
use urbanlens_core::agent::tools::builtin_toolset;
use urbanlens_core::agent::{run_agent, AgentConfig, RunOptions, Transcript};
use urbanlens_core::analytics::{dbscan_labels, pearson_matrix};
use urbanlens_core::controller::{AlignDefaults, AnalysisLevel, Gazetteer};
use urbanlens_core::geo::{self, point_in_polygon, PolygonGeom};
use urbanlens_core::harness::eval::{ablation_config, load_questions, run_eval};
use urbanlens_core::harness::fixture::{generate_all, generate_fixture, FixtureCase};
use urbanlens_core::harness::oracle;
use urbanlens_core::raster::{class_proportions, clip_in_memory, parse_grid_content, ClassRaster};
use urbanlens_core::table::{self, parse_csv, Aggregate, FilterOp, FilterSpec, Literal};
use urbanlens_core::viz::{read_ppm, BACKGROUND, NOISE_GREY, STROKE, TEXT};
use urbanlens_core::Workspace;

fn fixtures_into(dir: &Path) {
    generate_all(42, dir).expect("fixture generation");
}

// ---------------------------------------------------------------------------
// 1. Ablation pattern on the 30-question synthetic bank
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_ablation_pattern() {
    let dir = tempfile::tempdir().unwrap();
    fixtures_into(dir.path());
    let work = dir.path().join("work");
    let started = Instant::now();

    let expect: [(&str, (usize, usize, usize)); 5] = [
        ("standalone", (0, 0, 0)),
        ("no_alignment", (0, 0, 0)),
        ("data_only", (4, 0, 0)),
        ("single_modality", (16, 0, 0)),
        ("full", (20, 8, 2)),
    ];
    for (name, (what, wher, why)) in expect {
        let cfg = ablation_config(name).unwrap();
        let report = run_eval(dir.path(), &cfg, &work).unwrap();
        let failures: Vec<String> = report
            .results
            .iter()
            .filter(|r| !r.pass)
            .map(|r| format!("{}: {:?}", r.id, r.diagnostics))
            .collect();
        assert_eq!(
            report.tally(AnalysisLevel::What),
            (what, 20),
            "{name} what-level tally; failures: {failures:?}"
        );
        assert_eq!(report.tally(AnalysisLevel::Where), (wher, 8), "{name} where-level tally");
        assert_eq!(report.tally(AnalysisLevel::Why), (why, 2), "{name} why-level tally");
        assert_eq!(report.overall(), (what + wher + why, 30), "{name} overall");
        if name == "standalone" {
            // Every standalone failure must come from the grounding flag.
            for r in &report.results {
                assert!(
                    r.diagnostics.iter().any(|d| d.contains("ungrounded")),
                    "standalone {} failed without the grounding flag: {:?}",
                    r.id,
                    r.diagnostics
                );
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "ablation grid took {elapsed:?}");
    println!("ACCEPTANCE 1 (ablation pattern, full 30/30, grid in {elapsed:?}): PASS");
}

// ---------------------------------------------------------------------------
// 2. DBSCAN oracle equivalence on 50 random instances
// ---------------------------------------------------------------------------

#[test]
fn acceptance_2_dbscan_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let n = rng.gen_range(5..=200);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
            .collect();
        let eps = rng.gen_range(0.01..0.25);
        let min_pts = rng.gen_range(1..=8);
        let got = dbscan_labels(&pts, eps, min_pts).unwrap();
        let want = oracle::dbscan_reference(&pts, eps, min_pts);

        // Partition equality as a set of point-index sets.
        let to_sets = |labels: &[i64]| {
            let mut m: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
            for (i, &l) in labels.iter().enumerate() {
                if l >= 0 {
                    m.entry(l).or_default().push(i);
                }
            }
            let mut sets: Vec<Vec<usize>> = m.into_values().collect();
            sets.sort();
            sets
        };
        assert_eq!(
            to_sets(&got.labels),
            to_sets(&want),
            "partition mismatch on trial {trial} (eps {eps}, min_pts {min_pts})"
        );
        // Noise sets equal exactly.
        let noise = |labels: &[i64]| -> Vec<usize> {
            labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == -1)
                .map(|(i, _)| i)
                .collect()
        };
        assert_eq!(noise(&got.labels), noise(&want), "noise mismatch on trial {trial}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "dbscan equivalence took {elapsed:?}");
    println!("ACCEPTANCE 2 (dbscan oracle equivalence, 50 instances in {elapsed:?}): PASS");
}

// ---------------------------------------------------------------------------
// 3. Spatial-join oracle equivalence
// ---------------------------------------------------------------------------

fn oracle_contains(poly: &PolygonGeom, x: f64, y: f64) -> bool {
    if oracle::on_ring_boundary(&poly.exterior, x, y)
        || poly.holes.iter().any(|h| oracle::on_ring_boundary(h, x, y))
    {
        return true;
    }
    oracle::winding_contains(&poly.exterior, x, y)
        && !poly.holes.iter().any(|h| oracle::winding_contains(h, x, y))
}

#[test]
fn acceptance_3_spatial_join_oracle_equivalence() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::new(dir.path().join("run")).unwrap();

        // 5 overlapping star-convex polygons.
        let mut polys = Vec::new();
        let mut features = Vec::new();
        for i in 0..5 {
            let cx = rng.gen_range(0.3..0.7);
            let cy = rng.gen_range(0.3..0.7);
            let k = rng.gen_range(3..=6);
            let mut angles: Vec<f64> = (0..k)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut ring: Vec<(f64, f64)> = angles
                .iter()
                .map(|a| {
                    let r = rng.gen_range(0.15..0.4);
                    (cx + r * a.cos(), cy + r * a.sin())
                })
                .collect();
            ring.push(ring[0]);
            let coords: Vec<String> = ring.iter().map(|(x, y)| format!("[{x},{y}]")).collect();
            features.push(format!(
                r#"{{"type":"Feature","geometry":{{"type":"Polygon","coordinates":[[{}]]}},"properties":{{"tag":"P{i}"}}}}"#,
                coords.join(",")
            ));
            polys.push(PolygonGeom {
                exterior: ring,
                holes: vec![],
            });
        }
        let json = format!(
            r#"{{"type":"FeatureCollection","features":[{}]}}"#,
            features.join(",")
        );
        let vpath = dir.path().join("polys.json");
        std::fs::write(&vpath, &json).unwrap();
        let pg = geo::parse_vector(&ws, &vpath).unwrap();

        let mut csv = String::from("lon,lat\n");
        let mut pts = Vec::new();
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-0.2..1.2);
            let y: f64 = rng.gen_range(-0.2..1.2);
            csv.push_str(&format!("{x},{y}\n"));
            pts.push((x, y));
        }
        let tpath = dir.path().join("pts.csv");
        std::fs::write(&tpath, &csv).unwrap();
        let tg = table::read_table(&ws, &tpath).unwrap();
        let joined = geo::spatial_join(&ws, tg, pg, "tag").unwrap();
        let jt = ws.table(joined).unwrap();
        assert_eq!(jt.rows.len(), 200, "join must keep every point");

        for (row, &(x, y)) in jt.rows.iter().zip(&pts) {
            // First-containing scan through the independent containment test.
            let expect = polys
                .iter()
                .position(|p| oracle_contains(p, x, y))
                .map(|i| format!("P{i}"));
            let got = row.last().unwrap().as_text().map(|s| s.to_string());
            let on_any_boundary = polys
                .iter()
                .any(|p| oracle::on_ring_boundary(&p.exterior, x, y));
            if !on_any_boundary {
                assert_eq!(got, expect, "seed {seed} point ({x},{y})");
            }
            // Dedicated point-in-polygon vs winding oracle.
            for p in &polys {
                if !oracle::on_ring_boundary(&p.exterior, x, y) {
                    assert_eq!(
                        point_in_polygon(x, y, p),
                        oracle::winding_contains(&p.exterior, x, y),
                        "containment mismatch at ({x},{y})"
                    );
                }
            }
        }
    }
    println!("ACCEPTANCE 3 (spatial join vs first-containing oracle, 20 seeds): PASS");
}

// ---------------------------------------------------------------------------
// 4. Raster conservation
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_raster_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..10 {
        let n = rng.gen_range(10..=40usize);
        let cells: Vec<i32> = (0..n * n).map(|_| rng.gen_range(1..=6)).collect();
        let r = ClassRaster {
            nrows: n,
            ncols: n,
            origin: (0.0, 0.0),
            cell_size: 1.0,
            nodata: -1,
            cells,
            class_names: (1..=6).map(|c| (c, format!("c{c}"))).collect(),
        };
        // Proportions sum to one.
        let p = class_proportions(&r).unwrap();
        let sum: f64 = p.values().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "trial {trial}: proportions sum {sum}");

        // Clip conserves per-class in-polygon counts exactly.
        let m = n as f64;
        let aoi = PolygonGeom {
            exterior: vec![
                (0.1 * m, 0.1 * m),
                (0.9 * m, 0.1 * m),
                (0.9 * m, 0.5 * m),
                (0.5 * m, 0.5 * m),
                (0.5 * m, 0.9 * m),
                (0.1 * m, 0.9 * m),
                (0.1 * m, 0.1 * m),
            ],
            holes: vec![],
        };
        let clipped = clip_in_memory(&r, &aoi).unwrap();
        let mut inside: std::collections::BTreeMap<i32, usize> = Default::default();
        for row in 0..r.nrows {
            for col in 0..r.ncols {
                let (x, y) = r.cell_center(row, col);
                if point_in_polygon(x, y, &aoi) {
                    *inside.entry(r.cell(row, col)).or_insert(0) += 1;
                }
            }
        }
        assert_eq!(inside, clipped.class_counts(), "trial {trial}: clip not conservative");
    }

    // proportion_change(a, a) is identically zero, checked through the
    // registered operation on a parsed grid.
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path().join("run")).unwrap();
    let grid = "ncols 3\nnrows 3\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 2 3\n2 3 1\n3 1 2\n";
    let legend = "1,a\n2,b\n3,c\n";
    std::fs::write(dir.path().join("g.asc"), grid).unwrap();
    std::fs::write(dir.path().join("g.legend"), legend).unwrap();
    let a = urbanlens_core::raster::parse_grid(&ws, &dir.path().join("g.asc")).unwrap();
    let b = urbanlens_core::raster::parse_grid(&ws, &dir.path().join("g.asc")).unwrap();
    let (changes, _) = urbanlens_core::raster::proportion_change(&ws, a, b).unwrap();
    assert!(changes.iter().all(|c| c.delta == 0.0));
    // Fixture grids also satisfy the sum rule.
    let fx = tempfile::tempdir().unwrap();
    generate_fixture(FixtureCase::Parks, 42, fx.path()).unwrap();
    for year in ["2010", "2017"] {
        let g = std::fs::read_to_string(fx.path().join("parks/data").join(format!("lulc_{year}.asc"))).unwrap();
        let l = std::fs::read_to_string(fx.path().join("parks/data").join(format!("lulc_{year}.legend"))).unwrap();
        let raster = parse_grid_content(&g, &l).unwrap();
        let p = class_proportions(&raster).unwrap();
        let sum: f64 = p.values().sum();
        assert!((sum - 1.0).abs() <= 1e-9);
    }
    println!("ACCEPTANCE 4 (raster conservation and zero self-change): PASS");
}

// ---------------------------------------------------------------------------
// 5. Correlation correctness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_correlation_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path().join("run")).unwrap();
    for trial in 0..20 {
        let n = rng.gen_range(10..=80);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let mut csv = String::from("a,b\n");
        for (x, y) in xs.iter().zip(&ys) {
            csv.push_str(&format!("{x},{y}\n"));
        }
        let t = parse_csv(&csv).unwrap();
        let g = table::register_derived_table(&ws, t, &[], "test").unwrap();
        let (m, _) = pearson_matrix(&ws, g, &["a".into(), "b".into()]).unwrap();
        let want = oracle::pearson_direct(&xs, &ys);
        let got = m.get("a", "b").unwrap();
        assert!(
            (got - want).abs() <= 1e-12,
            "trial {trial}: {got} vs direct-formula {want}"
        );
        assert_eq!(m.values[0][1], m.values[1][0], "symmetry");
        assert_eq!(m.values[0][0], 1.0);
        assert_eq!(m.values[1][1], 1.0);

        // Positive affine rescale leaves r unchanged to 1e-12.
        let scale = rng.gen_range(0.5..20.0);
        let shift = rng.gen_range(-100.0..100.0);
        let xs2: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
        let mut csv2 = String::from("a,b\n");
        for (x, y) in xs2.iter().zip(&ys) {
            csv2.push_str(&format!("{x},{y}\n"));
        }
        let t2 = parse_csv(&csv2).unwrap();
        let g2 = table::register_derived_table(&ws, t2, &[], "test").unwrap();
        let (m2, _) = pearson_matrix(&ws, g2, &["a".into(), "b".into()]).unwrap();
        assert!(
            (m2.get("a", "b").unwrap() - got).abs() <= 1e-12,
            "trial {trial}: affine rescale changed r"
        );
    }
    println!("ACCEPTANCE 5 (pearson vs direct formula, 20 tables): PASS");
}

// ---------------------------------------------------------------------------
// 6. ReAct protocol: golden corpus + render/reparse round trip
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_react_protocol() {
    let corpus: serde_json::Value = serde_json::from_str(include_str!("data/react_corpus.json")).unwrap();
    let entries = corpus.as_array().unwrap();
    assert_eq!(entries.len(), 20, "corpus must hold 20 completions");
    let mut mismatches = Vec::new();
    for e in entries {
        let name = e["name"].as_str().unwrap();
        let completion = e["completion"].as_str().unwrap();
        let expect = &e["expect"];
        let kind = expect["kind"].as_str().unwrap();
        match (parse_step(completion), kind) {
            (Ok(ParsedStep::Action(step)), "action") => {
                if let Some(a) = expect["action"].as_str() {
                    if step.action != a {
                        mismatches.push(format!("{name}: action '{}' != '{a}'", step.action));
                    }
                }
                if let Some(i) = expect["input"].as_str() {
                    if step.action_input != i {
                        mismatches.push(format!("{name}: input '{}' != '{i}'", step.action_input));
                    }
                }
                if let Some(t) = expect["thought"].as_str() {
                    if step.thought != t {
                        mismatches.push(format!("{name}: thought '{}' != '{t}'", step.thought));
                    }
                }
            }
            (Ok(ParsedStep::Final(f)), "final") => {
                if let Some(t) = expect["text"].as_str() {
                    if f.text != t {
                        mismatches.push(format!("{name}: final '{}' != '{t}'", f.text));
                    }
                }
                if let Some(t) = expect["thought"].as_str() {
                    if f.thought != t {
                        mismatches.push(format!("{name}: thought '{}' != '{t}'", f.thought));
                    }
                }
            }
            (Err(_), "unparseable") => {}
            (got, want) => mismatches.push(format!("{name}: variant {got:?} but expected {want}")),
        }
    }
    assert!(mismatches.is_empty(), "corpus mismatches: {mismatches:#?}");

    // Render-then-reparse equality on steps produced by a real loop run.
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("t.csv"),
        "k,v\n1,10\n2,20\n2,30\n",
    )
    .unwrap();
    let ws = Workspace::new(dir.path().join("run")).unwrap();
    table::read_table(&ws, &dir.path().join("t.csv")).unwrap();
    let provider = ScriptedProvider::from_entries(vec![
        "Thought: filter twos.\nAction: filter_rows\nAction Input: {\"table\": \"t.csv\", \"column\": \"k\", \"op\": \"==\", \"value\": 2}".into(),
        "Thought: describe.\nAction: describe\nAction Input: {\"table\": \"out1\", \"column\": \"v\"}".into(),
        "Thought: finish.\nFinal Answer: Two rows with mean 25.".into(),
    ]);
    let mut transcript = Transcript::new(4);
    run_agent(
        &ws,
        &builtin_toolset(),
        &provider,
        &Default::default(),
        &Gazetteer::default(),
        &AlignDefaults::default(),
        &mut transcript,
        "mean of v where k is 2?",
        &RunOptions {
            config: AgentConfig::default(),
            alignment_enabled: true,
            data_dir: dir.path().to_path_buf(),
        },
    )
    .unwrap();
    for s in &transcript.turns[0].steps {
        let step = AgentStep {
            thought: s.thought.clone(),
            action: s.action.clone(),
            action_input: s.action_input.clone(),
            observation: Some(s.observation.clone()),
        };
        match parse_step(&render_step(&step)).unwrap() {
            ParsedStep::Action(back) => assert_eq!(back, step, "round trip mismatch"),
            other => panic!("round trip produced {other:?}"),
        }
    }
    println!("ACCEPTANCE 6 (react corpus 20/20, loop round-trip): PASS");
}

// ---------------------------------------------------------------------------
// 7. Lineage integrity across all three fixture pipelines
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_lineage_integrity() {
    let dir = tempfile::tempdir().unwrap();
    fixtures_into(dir.path());
    for case in FixtureCase::all() {
        let case_dir = dir.path().join(case.dir_name());
        let questions = load_questions(&case_dir).unwrap();
        let ws = Workspace::new(dir.path().join("lineage-run").join(case.dir_name())).unwrap();
        urbanlens_core::harness::eval::ingest_data_dir(&ws, &case_dir.join("data")).unwrap();
        let roots: std::collections::BTreeSet<_> =
            ws.registry.assets().iter().map(|a| a.guid).collect();
        let mut transcript = Transcript::new(20);
        for q in &questions {
            let tpath = case_dir.join("transcripts/full").join(format!("{}.txt", q.id));
            let provider = ScriptedProvider::from_file(&tpath).unwrap();
            let answer = run_agent(
                &ws,
                &builtin_toolset(),
                &provider,
                &Default::default(),
                &Gazetteer::default(),
                &AlignDefaults::default(),
                &mut transcript,
                &q.prompt,
                &RunOptions {
                    config: AgentConfig {
                        data_dependent: Some(true),
                        ..AgentConfig::default()
                    },
                    alignment_enabled: true,
                    data_dir: case_dir.join("data"),
                },
            )
            .unwrap();
            assert!(answer.complete, "{} incomplete", q.id);
            let turn = transcript.turns.last().unwrap();
            assert!(
                turn.flags.filenames_ok,
                "{}: answer mentions an unregistered filename",
                q.id
            );
        }
        // Every derived and rendered asset traces to at least one ingested root.
        for asset in ws.registry.assets() {
            assert!(
                ws.registry.traces_to_root(asset.guid).unwrap(),
                "asset {} has no root lineage",
                asset.guid
            );
            if !roots.contains(&asset.guid) {
                let trace = ws.registry.trace_lineage(asset.guid).unwrap();
                assert!(
                    trace.iter().any(|g| roots.contains(g)),
                    "derived asset {} ({}) does not reach an ingested file",
                    asset.guid,
                    asset.uri
                );
            }
        }
    }
    println!("ACCEPTANCE 7 (lineage integrity over all fixture pipelines): PASS");
}

// ---------------------------------------------------------------------------
// 8. End-to-end case replays with value-level checks
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_case_replays() {
    let dir = tempfile::tempdir().unwrap();
    fixtures_into(dir.path());
    let cfg = ablation_config("full").unwrap();

    for case in FixtureCase::all() {
        let started = Instant::now();
        let case_root = dir.path().join("single").join(case.dir_name());
        std::fs::create_dir_all(&case_root).unwrap();
        // Copy the single case dir so run_eval sees exactly one case.
        let src = dir.path().join(case.dir_name());
        copy_tree(&src, &case_root.join(case.dir_name()));
        let report = run_eval(&case_root, &cfg, &case_root.join("work")).unwrap();
        let failures: Vec<String> = report
            .results
            .iter()
            .filter(|r| !r.pass)
            .map(|r| format!("{}: {:?}", r.id, r.diagnostics))
            .collect();
        assert!(failures.is_empty(), "{}: {failures:?}", case.dir_name());
        let elapsed = started.elapsed();
        assert!(elapsed.as_secs() < 15, "{} replay took {elapsed:?}", case.dir_name());
    }

    // Parks: whole-area land-cover change carries the planted qualitative
    // pattern (unclassified down, water up).
    {
        let ws = Workspace::new(dir.path().join("r8-parks")).unwrap();
        let data = dir.path().join("parks/data");
        let a = urbanlens_core::raster::parse_grid(&ws, &data.join("lulc_2010.asc")).unwrap();
        let b = urbanlens_core::raster::parse_grid(&ws, &data.join("lulc_2017.asc")).unwrap();
        let (changes, _) = urbanlens_core::raster::proportion_change(&ws, a, b).unwrap();
        let delta = |label: &str| changes.iter().find(|c| c.label == label).unwrap().delta;
        assert!(delta("unclassified") < 0.0, "unclassified should decrease");
        assert!(delta("water") > 0.0, "water should increase");
    }

    // Water: per-district 2021 means from the engine agree with an
    // independent pairwise-summation oracle to 1e-6, and the cluster map
    // question produced an image asset (already asserted by scoring above).
    {
        let ws = Workspace::new(dir.path().join("r8-water")).unwrap();
        let data = dir.path().join("water/data");
        let t = table::read_table(&ws, &data.join("water_quality.csv")).unwrap();
        let filtered = table::filter_rows(
            &ws,
            t,
            &FilterSpec::single("year", FilterOp::InYearRange, Literal::YearRange(2021, 2021)),
        )
        .unwrap();
        let grouped = table::group_aggregate(&ws, filtered, "district", "turbidity", Aggregate::Mean).unwrap();
        let gt = ws.table(grouped).unwrap();
        // Oracle: scan the raw csv.
        let raw = std::fs::read_to_string(data.join("water_quality.csv")).unwrap();
        let mut per_district: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
        for line in raw.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f[3] == "2021" {
                per_district
                    .entry(f[5].to_string())
                    .or_default()
                    .push(f[4].parse().unwrap());
            }
        }
        for row in &gt.rows {
            let d = row[0].as_text().unwrap();
            let got = row[1].as_number().unwrap();
            let want = oracle::pairwise_mean(&per_district[d]);
            assert!(
                (got - want).abs() <= 1e-6,
                "district {d}: {got} vs oracle {want}"
            );
        }
    }

    // Dumpsites: per-street deltas exactly equal the planted tallies, and
    // the correlation matrix matches the raw-sums oracle.
    {
        let ws = Workspace::new(dir.path().join("r8-dumps")).unwrap();
        let data = dir.path().join("dumpsites/data");
        let d12 = table::read_table(&ws, &data.join("dumpsites_2012.csv")).unwrap();
        let d22 = table::read_table(&ws, &data.join("dumpsites_2022.csv")).unwrap();
        let g12 = table::group_aggregate(&ws, d12, "street", "site_id", Aggregate::Count).unwrap();
        let g22 = table::group_aggregate(&ws, d22, "street", "site_id", Aggregate::Count).unwrap();
        let ch = urbanlens_core::analytics::change_table(&ws, g12, g22, "street", "count").unwrap();
        let ct = ws.table(ch).unwrap();
        // Oracle tallies from the raw files.
        let tally = |file: &str| -> std::collections::BTreeMap<String, i64> {
            let raw = std::fs::read_to_string(data.join(file)).unwrap();
            let mut m = std::collections::BTreeMap::new();
            for line in raw.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                *m.entry(f[5].to_string()).or_insert(0) += 1;
            }
            m
        };
        let t12 = tally("dumpsites_2012.csv");
        let t22 = tally("dumpsites_2022.csv");
        assert_eq!(ct.rows.len(), 8);
        let mut changes = Vec::new();
        let mut pop_changes = Vec::new();
        for row in &ct.rows {
            let street = row[0].as_text().unwrap().to_string();
            let before = row[1].as_number().unwrap() as i64;
            let after = row[2].as_number().unwrap() as i64;
            let delta = row[3].as_number().unwrap() as i64;
            assert_eq!(before, t12[&street], "{street} before");
            assert_eq!(after, t22[&street], "{street} after");
            assert_eq!(delta, t22[&street] - t12[&street], "{street} delta");
            changes.push(delta as f64);
        }
        // Correlation with population change matches the direct formula.
        let popraw = std::fs::read_to_string(data.join("population.csv")).unwrap();
        let mut pop_map = std::collections::BTreeMap::new();
        for line in popraw.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            pop_map.insert(f[0].to_string(), f[3].parse::<f64>().unwrap());
        }
        for row in &ct.rows {
            pop_changes.push(pop_map[row[0].as_text().unwrap()]);
        }
        let joined = table::join_tables(
            &ws,
            ch,
            table::read_table(&ws, &data.join("population.csv")).unwrap(),
            "street",
            table::JoinKind::Inner,
        )
        .unwrap();
        let (m, _) = pearson_matrix(&ws, joined, &["change".into(), "population_change".into()]).unwrap();
        let want = oracle::pearson_direct(&changes, &pop_changes);
        let got = m.get("change", "population_change").unwrap();
        assert!((got - want).abs() <= 1e-9, "r {got} vs oracle {want}");
    }
    println!("ACCEPTANCE 8 (case replays with oracle-level value checks): PASS");
}

fn copy_tree(src: &Path, dst: &Path) {
    std::fs::create_dir_all(dst).unwrap();
    for e in std::fs::read_dir(src).unwrap() {
        let p = e.unwrap().path();
        let target = dst.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_tree(&p, &target);
        } else {
            std::fs::copy(&p, &target).unwrap();
        }
    }
}

// ---------------------------------------------------------------------------
// 9. Rendering determinism and marker-color census
// ---------------------------------------------------------------------------

#[test]
fn acceptance_9_rendering_determinism() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(FixtureCase::Water, 42, dir.path()).unwrap();
    let data = dir.path().join("water/data");
    let ws = Workspace::new(dir.path().join("run")).unwrap();
    let t = table::read_table(&ws, &data.join("water_quality.csv")).unwrap();
    let basemap = geo::parse_vector(&ws, &data.join("districts.shp")).unwrap();
    let filtered = table::filter_rows(
        &ws,
        t,
        &FilterSpec::single("year", FilterOp::InYearRange, Literal::YearRange(2021, 2021)),
    )
    .unwrap();
    let table_2021 = ws.table(filtered).unwrap();
    let (poor, _) = urbanlens_core::analytics::top_fraction(&table_2021, "turbidity", 0.1).unwrap();
    let poor_g = table::register_derived_table(&ws, poor, &[filtered], "filter").unwrap();
    let (labeled, labeling) = urbanlens_core::analytics::dbscan(&ws, poor_g, 0.02, 3).unwrap();
    assert_eq!(labeling.cluster_count(), 3, "fixture should plant 3 clusters in 2021");

    let img1 = urbanlens_core::viz::render_cluster_map(&ws, labeled, basemap, "cluster").unwrap();
    let img2 = urbanlens_core::viz::render_cluster_map(&ws, labeled, basemap, "cluster").unwrap();
    let b1 = std::fs::read(ws.registry.resolve(img1).unwrap().uri.clone()).unwrap();
    let b2 = std::fs::read(ws.registry.resolve(img2).unwrap().uri.clone()).unwrap();
    assert_eq!(b1, b2, "two renders of identical inputs must be byte-identical");

    let img = read_ppm(Path::new(&ws.registry.resolve(img1).unwrap().uri)).unwrap();
    let mut marker_colors = std::collections::BTreeSet::new();
    for &p in &img.pixels {
        if p != BACKGROUND && p != STROKE && p != NOISE_GREY && p != TEXT {
            marker_colors.insert(p);
        }
    }
    assert_eq!(
        marker_colors.len(),
        3,
        "expected exactly 3 distinct non-grey marker colors, got {marker_colors:?}"
    );
    println!("ACCEPTANCE 9 (byte-identical renders, 3-color census): PASS");
}
