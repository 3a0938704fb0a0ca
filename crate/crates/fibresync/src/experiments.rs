//! Scripted figure reproductions and theorem-level surveys.
//!
//! Every run writes CSV series plus a JSON manifest; reruns with identical
//! manifests produce byte-identical outputs. The scripts consume only public
//! module APIs, so they double as integration checks.

use crate::certify::{escape_set, SublevelReport};
use crate::circle::{wrap, ArcUnion, CirclePoint};
use crate::dynamics::{circular_diameter, fibered_lyapunov, iterate_orbit, BaseTrajectory};
use crate::maps::{example1_map, Example1Params, SkewProduct};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Run description recorded next to every output file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub family: serde_json::Value,
    pub seed: Option<u64>,
    pub precision_bits: Option<u64>,
    pub n: Option<u64>,
    pub grid_n: Option<u64>,
    pub artifact_version: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, family: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            family,
            seed: None,
            precision_bits: None,
            n: None,
            grid_n: None,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(path)
    }
}

fn csv_writer(path: &Path, header: &str) -> std::io::Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    Ok(w)
}

/// Figure 1, left panel: `k` equispaced fibre points over `x0 = 1/(350 pi)`
/// iterated under the explicit degree-7 family, plus the diameter series.
pub struct Figure1Left {
    pub diameters: Vec<f64>,
    pub points_csv: PathBuf,
    pub sync_csv: PathBuf,
}

pub fn figure1_left(
    dir: &Path,
    eps_tilde: f64,
    k: usize,
    n: usize,
) -> std::io::Result<Figure1Left> {
    std::fs::create_dir_all(dir)?;
    let params = Example1Params::new(eps_tilde, 0.15).expect("valid eps_tilde");
    let m = example1_map(params);
    let mut base = BaseTrajectory::inv_pi_multiple(350, 7, n + 4, 256);
    let ys: Vec<CirclePoint> = (0..k).map(|i| wrap(i as f64 / k as f64)).collect();

    let points_csv = dir.join("figure1_left_points.csv");
    let sync_csv = dir.join("figure1_left_sync.csv");
    let mut pw = csv_writer(&points_csv, "j,point_index,y")?;
    let mut sw = csv_writer(&sync_csv, "j,diameter")?;

    let mut current = ys;
    let mut diameters = Vec::with_capacity(n + 1);
    for j in 0..=n {
        for (i, y) in current.iter().enumerate() {
            writeln!(pw, "{j},{i},{}", y.value())?;
        }
        let d = circular_diameter(&current);
        writeln!(sw, "{j},{d}")?;
        diameters.push(d);
        if j < n {
            let x = base.point(j);
            for y in current.iter_mut() {
                *y = m.fibre().eval(x, *y);
            }
        }
    }
    pw.flush()?;
    sw.flush()?;

    let mut manifest = RunManifest::new(
        "figure1-left",
        serde_json::json!({"family": "example1", "eps_tilde": eps_tilde, "c0": 0.15, "k": k, "x0": base.descriptor()}),
    );
    manifest.n = Some(n as u64);
    manifest.precision_bits = base.precision_bits();
    manifest.outputs = vec![
        points_csv.file_name().unwrap().to_string_lossy().into(),
        sync_csv.file_name().unwrap().to_string_lossy().into(),
    ];
    manifest.write(dir)?;
    Ok(Figure1Left {
        diameters,
        points_csv,
        sync_csv,
    })
}

/// Figure 1, right panel: the scatter of a long orbit of
/// `(1/(350 pi), 3/50)`.
pub struct Figure1Right {
    pub points: Vec<(f64, f64)>,
    pub scatter_csv: PathBuf,
}

pub fn figure1_right(dir: &Path, eps_tilde: f64, n: usize) -> std::io::Result<Figure1Right> {
    std::fs::create_dir_all(dir)?;
    let params = Example1Params::new(eps_tilde, 0.15).expect("valid eps_tilde");
    let m = example1_map(params);
    let mut base = BaseTrajectory::inv_pi_multiple(350, 7, n + 4, 256);
    let orbit = iterate_orbit(&m, &mut base, wrap(3.0 / 50.0), n - 1, None);
    let points: Vec<(f64, f64)> = orbit
        .points
        .iter()
        .map(|&(x, y)| (x.value(), y.value()))
        .collect();
    let scatter_csv = dir.join("figure1_right_scatter.csv");
    let mut w = csv_writer(&scatter_csv, "x,y")?;
    for &(x, y) in &points {
        writeln!(w, "{x},{y}")?;
    }
    w.flush()?;

    let mut manifest = RunManifest::new(
        "figure1-right",
        serde_json::json!({"family": "example1", "eps_tilde": eps_tilde, "c0": 0.15, "x0": base.descriptor(), "y0": 0.06}),
    );
    manifest.n = Some(n as u64);
    manifest.precision_bits = base.precision_bits();
    manifest.outputs = vec![scatter_csv.file_name().unwrap().to_string_lossy().into()];
    manifest.write(dir)?;
    Ok(Figure1Right { points, scatter_csv })
}

/// Figure 2: the curve `y = g(x) + 0.5` against the region
/// `G = [0, 0.4) u (0.6, 1]`, with the escape set on the x-axis.
pub struct Figure2 {
    pub escape: SublevelReport,
    pub region: ArcUnion,
    pub curve_csv: PathBuf,
    pub escape_json: PathBuf,
}

pub fn figure2(dir: &Path, eps_tilde: f64, curve_samples: usize, grid_n: usize) -> std::io::Result<Figure2> {
    std::fs::create_dir_all(dir)?;
    let params = Example1Params::new(eps_tilde, 0.15).expect("valid eps_tilde");
    let m = example1_map(params);
    // G = T \ [0.5 - 2e, 0.5 + 2e]; for e = 1/20 this is (0.6, 1.4)
    let lo = 0.5 + 2.0 * eps_tilde;
    let region = ArcUnion::single(lo, 1.0 - 4.0 * eps_tilde);

    let curve_csv = dir.join("figure2_curve.csv");
    let mut w = csv_writer(&curve_csv, "x,y")?;
    for i in 0..curve_samples {
        let x = i as f64 / curve_samples as f64;
        // the curve is the fibre image of the region midpoint: h(0.5) = 0.5
        let y = m.fibre().eval(wrap(x), wrap(0.5));
        writeln!(w, "{x},{}", y.value())?;
    }
    w.flush()?;

    let escape = escape_set(m.fibre(), &region, wrap(0.5), grid_n);
    let escape_json = dir.join("figure2_escape.json");
    let mut f = BufWriter::new(File::create(&escape_json)?);
    serde_json::to_writer_pretty(&mut f, &escape)?;
    f.write_all(b"\n")?;
    f.flush()?;

    let mut manifest = RunManifest::new(
        "figure2",
        serde_json::json!({
            "family": "example1", "eps_tilde": eps_tilde, "c0": 0.15,
            "region_boundaries": [0.5 - 2.0 * eps_tilde, 0.5 + 2.0 * eps_tilde],
        }),
    );
    manifest.grid_n = Some(grid_n as u64);
    manifest.outputs = vec![
        curve_csv.file_name().unwrap().to_string_lossy().into(),
        escape_json.file_name().unwrap().to_string_lossy().into(),
    ];
    manifest.write(dir)?;
    Ok(Figure2 {
        escape,
        region,
        curve_csv,
        escape_json,
    })
}

/// Survey summary: finite-time estimates over random starts and the fraction
/// below the theorem's threshold `log(C)/2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurveySummary {
    pub threshold: f64,
    pub fraction_below: f64,
    pub samples: usize,
    pub n: usize,
    pub estimates: Vec<f64>,
}

/// Finite-time fibered Lyapunov estimates over seeded random `(x, y)` starts.
/// Estimates are deterministic given the seed: sample `i` draws the base
/// digit stream from `seed + i` and `y0` from a separate stream.
pub fn lyapunov_survey(
    m: &SkewProduct,
    c: f64,
    samples: usize,
    n: usize,
    seed: u64,
    dir: Option<&Path>,
) -> std::io::Result<SurveySummary> {
    use rand::{Rng, SeedableRng};
    let threshold = c.ln() / 2.0;
    let estimates: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut base = BaseTrajectory::random(m.b(), seed.wrapping_add(i as u64));
            let mut yrng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15 ^ i as u64);
            let y0 = wrap(yrng.gen::<f64>());
            fibered_lyapunov(m, &mut base, y0, n).value
        })
        .collect();
    let below = estimates.iter().filter(|&&v| v < threshold).count();
    let summary = SurveySummary {
        threshold,
        fraction_below: below as f64 / samples as f64,
        samples,
        n,
        estimates,
    };
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join("survey.csv");
        let mut w = csv_writer(&csv, "sample,estimate")?;
        for (i, v) in summary.estimates.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        w.flush()?;
        let summary_json = dir.join("survey_summary.json");
        let mut f = BufWriter::new(File::create(&summary_json)?);
        serde_json::to_writer_pretty(
            &mut f,
            &serde_json::json!({
                "threshold": summary.threshold,
                "fraction_below": summary.fraction_below,
                "samples": summary.samples,
                "n": summary.n,
            }),
        )?;
        f.write_all(b"\n")?;
        f.flush()?;
        let mut manifest = RunManifest::new("survey", serde_json::json!({"b": m.b(), "c": c}));
        manifest.seed = Some(seed);
        manifest.n = Some(n as u64);
        manifest.outputs = vec!["survey.csv".into(), "survey_summary.json".into()];
        manifest.write(dir)?;
    }
    Ok(summary)
}

/// Orbit CSV `(j, x, y, log_dy)` for the CLI.
pub fn write_orbit_csv(
    dir: &Path,
    orbit: &crate::dynamics::OrbitRecord,
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("orbit.csv");
    let mut w = csv_writer(&path, "j,x,y,log_dy")?;
    for (j, &(x, y)) in orbit.points.iter().enumerate() {
        if j < orbit.log_dy.len() {
            writeln!(w, "{j},{},{},{}", x.value(), y.value(), orbit.log_dy[j])?;
        } else {
            writeln!(w, "{j},{},{},", x.value(), y.value())?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// Lyapunov running-average trace CSV `(j, partial_avg)`.
pub fn write_lyapunov_trace_csv(
    dir: &Path,
    est: &crate::dynamics::LyapunovEstimate,
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("lyapunov_trace.csv");
    let mut w = csv_writer(&path, "j,partial_avg")?;
    for &(j, v) in &est.partials {
        writeln!(w, "{j},{v}")?;
    }
    w.flush()?;
    Ok(path)
}

/// Sync diameter CSV `(j, diameter)`.
pub fn write_sync_csv(dir: &Path, diameters: &[f64]) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("sync.csv");
    let mut w = csv_writer(&path, "j,diameter")?;
    for (j, d) in diameters.iter().enumerate() {
        writeln!(w, "{j},{d}")?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{additive_map, GPiece, HPiece};

    #[test]
    fn figure1_left_shape_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let out = figure1_left(dir.path(), 1.0 / 6000.0, 50, 30).unwrap();
        assert_eq!(out.diameters.len(), 31);
        let body = std::fs::read_to_string(&out.points_csv).unwrap();
        let rows: Vec<&str> = body.lines().skip(1).collect();
        assert_eq!(rows.len(), 50 * 31);
        for r in rows {
            let y: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
            assert!((0.0..1.0).contains(&y));
        }
    }

    #[test]
    fn figure1_left_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        figure1_left(d1.path(), 1.0 / 6000.0, 10, 20).unwrap();
        figure1_left(d2.path(), 1.0 / 6000.0, 10, 20).unwrap();
        for f in ["figure1_left_points.csv", "figure1_left_sync.csv"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} must be byte-identical across reruns");
        }
    }

    #[test]
    fn figure1_right_first_row_is_start() {
        let dir = tempfile::tempdir().unwrap();
        let out = figure1_right(dir.path(), 1.0 / 6000.0, 500).unwrap();
        assert_eq!(out.points.len(), 500);
        let (x0, y0) = out.points[0];
        assert!((x0 - 9.094568176679733e-4).abs() < 1e-15);
        assert_eq!(y0, 0.06);
    }

    #[test]
    fn figure2_escape_structure() {
        let dir = tempfile::tempdir().unwrap();
        let out = figure2(dir.path(), 0.05, 10_000, 1 << 18).unwrap();
        assert_eq!(out.escape.components, 3);
        // symmetry of the escape set under x -> 2/3 - x
        for a in out.escape.set.arcs() {
            let mid = a.start.value() + a.length / 2.0;
            let reflected = wrap(2.0 / 3.0 - mid);
            assert!(
                out.escape.set.contains(reflected),
                "escape set must be symmetric about x = 1/3"
            );
        }
        let manifest: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.command, "figure2");
        assert_eq!(manifest.outputs.len(), 2);
    }

    #[test]
    fn survey_null_model() {
        let m = additive_map(5, GPiece::Sine { amp: 0.1 }, HPiece::Identity).unwrap();
        let s = lyapunov_survey(&m, 0.2, 50, 200, 9, None).unwrap();
        assert!(s.estimates.iter().all(|&v| v == 0.0));
        assert_eq!(s.fraction_below, 0.0);
    }

    #[test]
    fn survey_deterministic_across_thread_counts() {
        let m = additive_map(7, GPiece::RaisedCos { amp: 1.0 }, HPiece::Example1(
            crate::maps::Example1Params::new(0.05, 0.15).unwrap(),
        ))
        .unwrap();
        let a = lyapunov_survey(&m, 0.2, 20, 500, 123, None).unwrap();
        let b = lyapunov_survey(&m, 0.2, 20, 500, 123, None).unwrap();
        assert_eq!(a.estimates, b.estimates);
    }
}
