//! Command implementations: build the map, drive the library, write outputs
//! plus the run manifest.

use crate::config::{RunConfig, X0Spec, DEFAULT_C};
use crate::CliError;
use fibresync::certify::{
    build_certificate, certify_membership, CertifyError, CertifyOptions, ClassCertificate,
};
use fibresync::circle::{wrap, Arc, ArcUnion, CirclePoint};
use fibresync::cylinders::{audit_partition, classify_cylinder, CylinderWord, Status};
use fibresync::dynamics::{fibered_lyapunov, iterate_orbit, max_lyapunov_sl2, sync_diameter, BaseTrajectory};
use fibresync::experiments::{
    self, figure1_left, figure1_right, figure2, lyapunov_survey, RunManifest,
};
use fibresync::maps::SkewProduct;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

fn base_trajectory(cfg: &RunConfig, n_hint: usize) -> Result<BaseTrajectory, CliError> {
    let b = cfg.b();
    let t = match &cfg.x0 {
        X0Spec::Random => BaseTrajectory::random(b, cfg.seed),
        X0Spec::Rational { p, q } => BaseTrajectory::from_rational(*p, *q, b)
            .map_err(|e| CliError::Validation(vec![e.to_string()]))?,
        X0Spec::Decimal(s) => BaseTrajectory::from_decimal(s, b)
            .map_err(|e| CliError::Validation(vec![e.to_string()]))?,
        X0Spec::InvPiMultiple(k) => {
            BaseTrajectory::inv_pi_multiple(*k, b, n_hint, cfg.precision_bits.unwrap_or(256))
        }
    };
    Ok(t)
}

fn build_map(cfg: &RunConfig) -> Result<SkewProduct, CliError> {
    cfg.build_map().map_err(|e| CliError::Validation(vec![e]))
}

fn manifest_for(cfg: &RunConfig, command: &str) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        family: cfg.emit(),
        seed: Some(cfg.seed),
        precision_bits: cfg.precision_bits,
        n: cfg.command.n,
        grid_n: cfg.command.grid_n,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: Vec::new(),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Io(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}

fn certify_options(cfg: &RunConfig) -> CertifyOptions {
    let c = &cfg.command;
    CertifyOptions {
        c: c.c.unwrap_or(DEFAULT_C),
        explicit_g: c.g_arcs.as_ref().map(|arcs| {
            ArcUnion::from_arcs(
                arcs.iter()
                    .map(|&(s, l)| Arc::new(wrap(s), l))
                    .collect(),
            )
        }),
        region_grid_n: c.region_grid_n.unwrap_or(1 << 15) as usize,
        y_grid_n: c.y_grid_n.unwrap_or(2048) as usize,
        x_grid_n: c.x_grid_n.unwrap_or(4096) as usize,
        y_fatten_tol: c.y_fatten_tol,
        eps_prime: c.eps_prime,
    }
}

fn map_certify_error(e: CertifyError) -> CliError {
    match e {
        CertifyError::B0Unsatisfiable(_) => CliError::Numerical(e.to_string()),
        other => CliError::Certification(other.to_string()),
    }
}

pub fn cmd_certify(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let m = build_map(cfg)?;
    let opts = certify_options(cfg);
    let cert = build_certificate(m.fibre(), &opts).map_err(map_certify_error)?;
    let path = out_dir.join("certificate.json");
    write_json(&path, &cert)?;
    let mut manifest = manifest_for(cfg, "certify");
    manifest.outputs = vec!["certificate.json".into()];
    manifest.write(out_dir)?;
    println!(
        "certified: C = {}, s = {}, eps = {:.6e}, eps' = {:.6e}, l = {:.4}, delta = {:.4e}, b0 = {}",
        cert.c, cert.s, cert.eps, cert.eps_prime, cert.l, cert.delta, cert.b0
    );
    Ok(())
}

pub fn cmd_orbit(cfg: &RunConfig, out_dir: &Path, n: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let m = build_map(cfg)?;
    let mut base = base_trajectory(cfg, n)?;
    let orbit = iterate_orbit(&m, &mut base, wrap(cfg.y0), n, None);
    experiments::write_orbit_csv(out_dir, &orbit)?;
    let mut manifest = manifest_for(cfg, "orbit");
    manifest.n = Some(n as u64);
    manifest.precision_bits = base.precision_bits();
    manifest.outputs = vec!["orbit.csv".into()];
    manifest.write(out_dir)?;
    if let Some(step) = orbit.truncated_at {
        return Err(CliError::Numerical(format!(
            "orbit hit a derivative singularity at step {step}; partial output written"
        )));
    }
    Ok(())
}

pub fn cmd_lyapunov(cfg: &RunConfig, out_dir: &Path, n: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let m = build_map(cfg)?;
    let mut base = base_trajectory(cfg, n)?;
    let est = fibered_lyapunov(&m, &mut base, wrap(cfg.y0), n);
    experiments::write_lyapunov_trace_csv(out_dir, &est)?;
    let mut manifest = manifest_for(cfg, "lyapunov");
    manifest.n = Some(n as u64);
    manifest.precision_bits = base.precision_bits();
    manifest.outputs = vec!["lyapunov_trace.csv".into()];
    manifest.write(out_dir)?;
    println!(
        "{{\"estimate\": {}, \"n\": {}, \"truncated\": {}}}",
        est.value, est.n, est.truncated
    );
    if est.truncated {
        return Err(CliError::Numerical(format!(
            "orbit truncated by a derivative singularity after {} steps",
            est.n
        )));
    }
    Ok(())
}

pub fn cmd_sync(cfg: &RunConfig, out_dir: &Path, n: usize, k: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let m = build_map(cfg)?;
    let mut base = base_trajectory(cfg, n)?;
    let ys: Vec<CirclePoint> = (0..k).map(|i| wrap(i as f64 / k as f64)).collect();
    let d = sync_diameter(&m, &mut base, &ys, n);
    experiments::write_sync_csv(out_dir, &d)?;
    let mut manifest = manifest_for(cfg, "sync");
    manifest.n = Some(n as u64);
    manifest.precision_bits = base.precision_bits();
    manifest.outputs = vec!["sync.csv".into()];
    manifest.write(out_dir)?;
    Ok(())
}

pub fn cmd_scatter(cfg: &RunConfig, out_dir: &Path, n: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let m = build_map(cfg)?;
    let mut base = base_trajectory(cfg, n)?;
    let orbit = iterate_orbit(&m, &mut base, wrap(cfg.y0), n.saturating_sub(1).max(1), None);
    let path = out_dir.join("scatter.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "x,y")?;
    for &(x, y) in &orbit.points {
        writeln!(w, "{},{}", x.value(), y.value())?;
    }
    w.flush()?;
    let mut manifest = manifest_for(cfg, "scatter");
    manifest.n = Some(n as u64);
    manifest.precision_bits = base.precision_bits();
    manifest.outputs = vec!["scatter.csv".into()];
    manifest.write(out_dir)?;
    Ok(())
}

pub fn cmd_audit_partition(
    cfg: &RunConfig,
    out_dir: &Path,
    certificate: Option<&Path>,
    depth: usize,
    grid_n: usize,
    budget: u64,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let m = build_map(cfg)?;
    let cert: ClassCertificate = match certificate {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cert: ClassCertificate =
                serde_json::from_str(&text).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
            cert.validate().map_err(map_certify_error)?;
            cert
        }
        None => build_certificate(m.fibre(), &certify_options(cfg)).map_err(map_certify_error)?,
    };
    let y0 = wrap(cfg.y0);
    let report = audit_partition(&m, y0, &cert.g, &cert, depth, grid_n, budget);
    write_json(&out_dir.join("audit.json"), &report)?;

    // per-word verdicts for the levels that fit a bounded CSV
    let verdicts_path = out_dir.join("verdicts.csv");
    let mut w = BufWriter::new(File::create(&verdicts_path)?);
    writeln!(w, "word,status,margin")?;
    let mut emitted = 0u64;
    'levels: for level in 1..=report.depth {
        let count = (m.b() as u64).pow(level as u32);
        if emitted + count > 100_000 {
            break;
        }
        for idx in 0..count {
            let mut digits = vec![1u32; level];
            let mut i = idx;
            for k in (0..level).rev() {
                digits[k] = (i % m.b() as u64) as u32 + 1;
                i /= m.b() as u64;
            }
            let word = CylinderWord::new(m.b(), digits).unwrap();
            let v = classify_cylinder(&m, y0, &word, &cert.g, grid_n);
            let status = match v.status {
                Status::Good => "good",
                Status::Bad => "bad",
                Status::Unknown => "unknown",
            };
            writeln!(w, "{},{},{}", word.label(), status, v.margin)?;
            emitted += 1;
            if emitted >= 100_000 {
                break 'levels;
            }
        }
    }
    w.flush()?;
    let mut manifest = manifest_for(cfg, "audit-partition");
    manifest.grid_n = Some(grid_n as u64);
    manifest.outputs = vec!["audit.json".into(), "verdicts.csv".into()];
    manifest.write(out_dir)?;
    println!(
        "audited {} parents to depth {}: max bad+unknown = {} (q = {}), violations = {}",
        report.parents_audited,
        report.depth,
        report.max_bad_plus_unknown,
        report.q,
        report.violations.len()
    );
    Ok(())
}

pub fn cmd_schrodinger(cfg: &RunConfig, out_dir: &Path, n: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let params = cfg
        .schrodinger_params()
        .ok_or_else(|| CliError::Validation(vec!["schrodinger command requires the schrodinger family".into()]))?;
    let m = build_map(cfg)?;
    let mut base = base_trajectory(cfg, n)?;
    let est = fibered_lyapunov(&m, &mut base, wrap(cfg.y0), n);
    let mut base2 = base_trajectory(cfg, n)?;
    let l_tilde = max_lyapunov_sl2(&params, &mut base2, n);
    experiments::write_lyapunov_trace_csv(out_dir, &est)?;
    let gap = (est.value + 2.0 * l_tilde).abs();
    write_json(
        &out_dir.join("identity.json"),
        &serde_json::json!({
            "fibered_lyapunov": est.value,
            "max_lyapunov_sl2": l_tilde,
            "identity_gap": gap,
            "n": est.n,
        }),
    )?;
    let mut manifest = manifest_for(cfg, "schrodinger");
    manifest.n = Some(n as u64);
    manifest.outputs = vec!["lyapunov_trace.csv".into(), "identity.json".into()];
    manifest.write(out_dir)?;
    println!(
        "{{\"fibered_lyapunov\": {}, \"max_lyapunov_sl2\": {l_tilde}, \"identity_gap\": {gap}}}",
        est.value
    );
    if est.truncated {
        return Err(CliError::Numerical("projective orbit hit the singular fibre point".into()));
    }
    Ok(())
}

pub fn cmd_figure1(
    out_dir: &Path,
    eps_tilde: f64,
    k: usize,
    n_left: usize,
    n_right: usize,
) -> Result<(), CliError> {
    figure1_left(out_dir, eps_tilde, k, n_left)?;
    let right_dir = out_dir.join("right");
    figure1_right(&right_dir, eps_tilde, n_right)?;
    println!("figure 1 data written to {}", out_dir.display());
    Ok(())
}

pub fn cmd_figure2(out_dir: &Path, eps_tilde: f64, grid_n: usize) -> Result<(), CliError> {
    let fig = figure2(out_dir, eps_tilde, 16_384, grid_n)?;
    println!(
        "escape set: {} components, measure {:.6}",
        fig.escape.components, fig.escape.measure
    );
    Ok(())
}

pub fn cmd_survey(
    cfg: &RunConfig,
    out_dir: &Path,
    samples: usize,
    n: usize,
    allow_uncertified: bool,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let m = build_map(cfg)?;
    let c = cfg.command.c.unwrap_or(DEFAULT_C);
    let membership = certify_membership(m.fibre(), &certify_options(cfg));
    if let Err(e) = &membership {
        if !allow_uncertified {
            return Err(CliError::Certification(e.to_string()));
        }
        eprintln!("warning: running survey without a certificate: {e}");
    }
    let summary = lyapunov_survey(&m, c, samples, n, cfg.seed, Some(out_dir))?;
    println!(
        "{{\"threshold\": {}, \"fraction_below\": {}}}",
        summary.threshold, summary.fraction_below
    );
    Ok(())
}

/// Resolve the output directory: CLI flag beats config.
pub fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output_dir.clone())
}
