//! Command dispatch and artifact writing.
//!
//! Every command writes its CSV/JSON files plus `manifest.json` under the
//! output directory. Files are written sequentially after the computation,
//! floats in shortest round-trip form, maps in key order, so identical
//! configs give byte-identical output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::dyadic::{independence_test, pi_bad_estimate, GridShift, Window};
use crate::error::{Error, Result};
use crate::harness::{
    calibrate_c_emp, class_growth, convergence_curve, decay_audit, run_samples, summarize_randomized, Setup,
    CALIBRATION_STREAM,
};
use crate::operators::KernelOp;
use crate::shift::{assemble_shifts, classify_elements, ClassKind, GoodWeights, ShiftContext};
use crate::tables::PairingTables;
use crate::wavelet::{gram_defect, moment, WaveletFn};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Command {
    GridStats,
    WaveletCheck,
    DecayAudit,
    Represent,
    Convergence,
}

impl Command {
    pub const ALL: [Command; 5] =
        [Command::GridStats, Command::WaveletCheck, Command::DecayAudit, Command::Represent, Command::Convergence];

    pub fn name(self) -> &'static str {
        match self {
            Command::GridStats => "grid-stats",
            Command::WaveletCheck => "wavelet-check",
            Command::DecayAudit => "decay-audit",
            Command::Represent => "represent",
            Command::Convergence => "convergence",
        }
    }

    pub fn parse(s: &str) -> Result<Command> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command '{s}'")))
    }
}

/// One output file.
enum Artifact {
    Csv(&'static str, Vec<u8>),
    Text(&'static str, String),
}

/// Outcome of a finished command: what was written and any invariant finding.
#[derive(Debug)]
pub struct RunReport {
    pub command: Command,
    pub output: PathBuf,
    pub files: Vec<String>,
    pub manifest: Value,
    /// Finding raised after the artifacts were written.
    pub finding: Option<Error>,
}

struct Outcome {
    artifacts: Vec<Artifact>,
    results: Value,
    finding: Option<Error>,
}

fn csv_rows<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn pretty(v: &impl Serialize) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string()))
}

fn kernel(cfg: &RunConfig) -> Result<KernelOp> {
    KernelOp::by_name(&cfg.kernel, cfg.s, cfg.kernel_width)
}

fn require_d1(cfg: &RunConfig, cmd: Command) -> Result<()> {
    if cfg.d != 1 {
        return Err(Error::InvalidConfig(format!("d: {} supports d = 1 only", cmd.name())));
    }
    Ok(())
}

#[derive(Serialize)]
struct GoodnessRow {
    samples: u64,
    pi_bad_hat: f64,
    stderr: f64,
    bound: f64,
    r: u32,
    theta: f64,
    d: usize,
}

fn grid_stats_d<const D: usize>(cfg: &RunConfig) -> Result<Outcome> {
    let gaps = cfg.grid_reference_gaps();
    if gaps < cfg.r as i32 {
        return Err(Error::InvalidConfig(format!(
            "grid: reference cube has {gaps} ancestor levels, r = {} needs at least r",
            cfg.r
        )));
    }
    let w = Window::<D>::new(cfg.grid.level, cfg.grid.k_min, cfg.grid.k_max)?;
    let rep = pi_bad_estimate(&w, cfg.r, cfg.theta, cfg.mc_samples, cfg.seed)?;
    let indep = independence_test(&w, cfg.r, cfg.theta, cfg.mc_samples, cfg.seed)?;
    let row = GoodnessRow {
        samples: rep.samples,
        pi_bad_hat: rep.pi_bad_hat,
        stderr: rep.stderr,
        bound: rep.bound,
        r: rep.r,
        theta: rep.theta,
        d: rep.d,
    };
    let table: Vec<[u64; 3]> = indep.table.iter().enumerate().map(|(b, t)| [b as u64, t[0], t[1]]).collect();
    let mut itab = csv::Writer::from_writer(Vec::new());
    itab.write_record(["bin", "good", "bad"]).map_err(|e| Error::Io(e.to_string()))?;
    for t in &table {
        itab.serialize(t).map_err(|e| Error::Io(e.to_string()))?;
    }
    let finding = if rep.pi_bad_hat > rep.bound + 3.0 * rep.stderr {
        Some(Error::Finding(format!("pi_bad_hat {} exceeds bound {} + 3·{}", rep.pi_bad_hat, rep.bound, rep.stderr)))
    } else if !rep.references_agree {
        Some(Error::Finding("badness frequency depends on the reference cube".into()))
    } else {
        None
    };
    Ok(Outcome {
        artifacts: vec![
            Artifact::Csv("goodness.csv", csv_rows(&[row])?),
            Artifact::Csv("independence.csv", itab.into_inner().map_err(|e| Error::Io(e.to_string()))?),
        ],
        results: json!({
            "goodness": rep,
            "independence": { "statistic": indep.statistic, "dof": indep.dof, "p_value": indep.p_value },
            "seeds": { "seed": cfg.seed, "samples": format!("0..{}", cfg.mc_samples) },
        }),
        finding,
    })
}

fn grid_stats(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.d {
        1 => grid_stats_d::<1>(cfg),
        _ => grid_stats_d::<2>(cfg),
    }
}

fn wavelet_check(cfg: &RunConfig) -> Result<Outcome> {
    let sys = crate::wavelet::WaveletSystem::build_unchecked(&cfg.filter()?, cfg.q)?;
    let w = Window::<1>::new(2, 0, 2)?;
    let grid = GridShift::random(w, cfg.seed, 0, 2, 1.0)?;
    let cubes = w.all_cubes(&grid);
    let gram = gram_defect(&sys, &grid, &cubes, &[[true]])?;
    let mut worst_moment = 0.0f64;
    for c in &cubes {
        let wf = WaveletFn::new(&sys, &grid, *c, [true]);
        for a in 0..=sys.v.max(0) as u32 {
            worst_moment = worst_moment.max(moment(&wf, [a]).abs());
        }
    }
    let summary = sys.summary();
    let finding = if gram >= 1e-5 {
        Some(Error::Finding(format!("gram defect {gram:e} ≥ 1e-5")))
    } else if worst_moment >= 1e-6 {
        Some(Error::Finding(format!("moment {worst_moment:e} ≥ 1e-6")))
    } else {
        None
    };
    let meets = sys.u >= cfg.s && sys.v >= cfg.s as i32 - 1;
    let body = json!({
        "system": summary,
        "gram_defect": gram,
        "max_moment": worst_moment,
        "gram_window": w,
        "meets_s": meets,
    });
    Ok(Outcome { artifacts: vec![Artifact::Text("wavelet.json", pretty(&body)?)], results: body, finding })
}

#[derive(Serialize)]
struct AuditRow {
    class: &'static str,
    i: u32,
    j: u32,
    pairs: usize,
    max_pairing: f64,
    bound: f64,
    ratio: f64,
    psi_bound: Option<f64>,
    psi_ratio: Option<f64>,
}

fn decay(cfg: &RunConfig) -> Result<Outcome> {
    require_d1(cfg, Command::DecayAudit)?;
    let op = kernel(cfg)?;
    let sys = cfg.system()?;
    let grid = GridShift::random(cfg.window, cfg.seed, 0, cfg.r, cfg.theta)?;
    let tables = PairingTables::build(&op, &sys, &cfg.window, cfg.mesh, false)?;
    let top = cfg.n_max.unwrap_or(cfg.window.depth() - 1);
    let rows = decay_audit(&op, &sys, &grid, &tables, cfg.s, cfg.eps, top, top)?;
    let mut sorted: Vec<_> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.class, r.i, r.j));
    let out: Vec<AuditRow> = sorted
        .into_iter()
        .map(|r| AuditRow {
            class: r.class.name(),
            i: r.i,
            j: r.j,
            pairs: r.pairs,
            max_pairing: r.max_pairing,
            bound: r.bound,
            ratio: r.ratio,
            psi_bound: r.psi_bound,
            psi_ratio: r.psi_ratio,
        })
        .collect();
    let growth: serde_json::Map<String, Value> =
        ClassKind::ALL.iter().map(|c| (c.name().to_string(), json!(class_growth(&rows, *c)))).collect();
    Ok(Outcome {
        artifacts: vec![Artifact::Csv("decay_audit.csv", csv_rows(&out)?)],
        results: json!({
            "system": { "m": sys.m, "u": sys.u, "v": sys.v },
            "czs_seminorm": op.czs_seminorm()?,
            "op_norm": op.l2_norm,
            "max_shift_order": top,
            "max_ratio_by_order": growth,
            "seeds": { "seed": cfg.seed, "sample": 0 },
        }),
        finding: None,
    })
}

#[derive(Serialize)]
struct SampleRow {
    sample: u64,
    total: f64,
    unfiltered: f64,
    escaped: usize,
    excluded_bad: usize,
    coefficients: usize,
    max_normalized: f64,
    all_good: bool,
}

#[derive(Serialize)]
struct ShiftRow {
    seed: u64,
    sample: u64,
    i: u32,
    j: u32,
    classes: Vec<&'static str>,
    coefficients: usize,
    good: bool,
    max_normalized: f64,
    excluded_bad: usize,
    excluded_window: usize,
}

struct Expansion {
    c_emp: f64,
    weights: GoodWeights,
    samples: Vec<crate::harness::SampleTerms>,
    shifts: Vec<ShiftRow>,
    truth: f64,
    summary: crate::harness::RandomizedExpansion,
}

fn expansion_run(cfg: &RunConfig, cmd: Command) -> Result<Expansion> {
    require_d1(cfg, cmd)?;
    let op = kernel(cfg)?;
    let sys = cfg.system()?;
    let (f, g) = cfg.test_functions();
    let setup = Setup::new(&op, &sys, cfg.window, f, g, cfg.mesh, cfg.truth_mesh)?;
    let c_emp = calibrate_c_emp(&setup, cfg.s, cfg.eps, cfg.r, cfg.theta, cfg.calibration_samples, cfg.seed)?;
    if !(c_emp > 0.0) {
        return Err(Error::Finding("calibration found no nonzero good pairing".into()));
    }
    let norm = setup.normalization(cfg.s, cfg.eps, c_emp)?;
    let (weights, samples) = run_samples(&setup, &norm, cfg.r, cfg.theta, cfg.n_omega, cfg.seed)?;

    // Shift manifest of the first run grid.
    let grid = GridShift::random(cfg.window, cfg.seed, 0, cfg.r, cfg.theta)?;
    let is = setup.active(&grid, &setup.f);
    let js = setup.active(&grid, &setup.g);
    let pairs = classify_elements(&is, &js, &grid, sys.m)?;
    let ctx =
        ShiftContext { tables: &setup.tables, norm: &norm, weights: &weights, classes: &ClassKind::ALL, m: sys.m, sample: 0 };
    let shifts = assemble_shifts(&grid, &is, &js, &pairs, &ctx)?
        .values()
        .map(|s| ShiftRow {
            seed: s.seed,
            sample: s.sample,
            i: s.i,
            j: s.j,
            classes: ClassKind::ALL.iter().map(|c| c.name()).collect(),
            coefficients: s.coefficient_count(),
            good: s.good,
            max_normalized: s.max_normalized(),
            excluded_bad: s.excluded_bad,
            excluded_window: s.excluded_window,
        })
        .collect();
    let summary = summarize_randomized(&setup, &norm, cfg.r, cfg.theta, &weights, &samples);
    Ok(Expansion { c_emp, weights, samples, shifts, truth: setup.truth, summary })
}

fn expansion_manifest(cfg: &RunConfig, e: &Expansion) -> Value {
    json!({
        "c_emp": e.c_emp,
        "pi_good": e.weights.pi_good,
        "pi_good_certified": e.summary.pi_good_certified,
        "truth": e.truth,
        "excluded": { "bad": e.summary.excluded_bad, "window": e.summary.escaped },
        "seeds": {
            "seed": cfg.seed,
            "run_samples": format!("0..{}", cfg.n_omega),
            "calibration_samples": format!("{}..{}", CALIBRATION_STREAM, CALIBRATION_STREAM + cfg.calibration_samples),
        },
    })
}

fn normalization_finding(e: &Expansion) -> Option<Error> {
    (e.summary.max_normalized > 1.0 + 1e-12 || !e.summary.all_good).then(|| Error::NormalizationViolated {
        ratio: e.summary.max_normalized,
        detail: format!("run grids (all good: {})", e.summary.all_good),
    })
}

fn sample_rows(e: &Expansion) -> Vec<SampleRow> {
    e.samples
        .iter()
        .map(|s| SampleRow {
            sample: s.sample,
            total: s.total,
            unfiltered: s.unfiltered,
            escaped: s.escaped,
            excluded_bad: s.excluded_bad,
            coefficients: s.coefficients,
            max_normalized: s.max_normalized,
            all_good: s.all_good,
        })
        .collect()
}

fn represent(cfg: &RunConfig) -> Result<Outcome> {
    let e = expansion_run(cfg, Command::Represent)?;
    let mut results = expansion_manifest(cfg, &e);
    results["representation"] = json!(e.summary);
    let finding = normalization_finding(&e).or_else(|| {
        (!e.summary.within_tolerance()).then(|| {
            Error::Finding(format!(
                "|estimate − truth| = {:e} > 3·stderr + truncation defect",
                (e.summary.estimate - e.summary.truth).abs()
            ))
        })
    });
    Ok(Outcome {
        artifacts: vec![
            Artifact::Csv("samples.csv", csv_rows(&sample_rows(&e))?),
            Artifact::Text("representation.json", pretty(&e.summary)?),
            Artifact::Text("shifts.json", pretty(&e.shifts)?),
        ],
        results,
        finding,
    })
}

#[derive(Serialize)]
struct CurveSummary {
    slope: f64,
    fit_lo: u32,
    fit_hi: u32,
    e_full: f64,
    stderr: f64,
    truth: f64,
    n_omega: u64,
}

fn convergence(cfg: &RunConfig) -> Result<Outcome> {
    let e = expansion_run(cfg, Command::Convergence)?;
    let curve = convergence_curve(e.truth, &e.weights, &e.samples, cfg.n_max)?;
    let summary = CurveSummary {
        slope: curve.slope,
        fit_lo: curve.fit_range.0,
        fit_hi: curve.fit_range.1,
        e_full: curve.e_full,
        stderr: curve.stderr,
        truth: curve.truth,
        n_omega: curve.n_omega,
    };
    let dat: String = curve.points.iter().map(|p| format!("{} {:e}\n", p.n, p.e_n)).collect();
    let mut results = expansion_manifest(cfg, &e);
    results["convergence"] = json!(summary);
    Ok(Outcome {
        artifacts: vec![
            Artifact::Csv("convergence.csv", csv_rows(&[summary])?),
            Artifact::Csv("curve.csv", csv_rows(&curve.points)?),
            Artifact::Text("curve.dat", dat),
            Artifact::Csv("samples.csv", csv_rows(&sample_rows(&e))?),
        ],
        results,
        finding: normalization_finding(&e),
    })
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::write(dir.join(name), bytes).map_err(|e| Error::Io(format!("{}: {e}", dir.join(name).display())))
}

/// Runs `command` and writes its artifacts and `manifest.json` under
/// `cfg.output`. Module errors are returned as `Err`; invariant findings
/// after a completed run are returned in [`RunReport::finding`].
pub fn run_command(cfg: &RunConfig, command: Command) -> Result<RunReport> {
    let out = match command {
        Command::GridStats => grid_stats(cfg)?,
        Command::WaveletCheck => wavelet_check(cfg)?,
        Command::DecayAudit => decay(cfg)?,
        Command::Represent => represent(cfg)?,
        Command::Convergence => convergence(cfg)?,
    };
    fs::create_dir_all(&cfg.output).map_err(|e| Error::Io(format!("{}: {e}", cfg.output.display())))?;
    let mut files = Vec::new();
    for a in &out.artifacts {
        let (name, bytes) = match a {
            Artifact::Csv(n, b) => (*n, b.as_slice()),
            Artifact::Text(n, t) => (*n, t.as_bytes()),
        };
        write(&cfg.output, name, bytes)?;
        files.push(name.to_string());
    }
    let manifest = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "files": files,
        "results": out.results,
        "finding": out.finding.as_ref().map(|e| e.to_string()),
    });
    write(&cfg.output, "manifest.json", pretty(&manifest)?.as_bytes())?;
    files.push("manifest.json".into());
    Ok(RunReport { command, output: cfg.output.clone(), files, manifest, finding: out.finding })
}
