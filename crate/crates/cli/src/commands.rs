use std::path::{Path, PathBuf};

use scancusum::bounds::{
    beta_upper, beta_upper_walk_mc, default_horizon, gamma_pair_mc, gamma_pair_over_jump_mc, nu_report, BoundReport,
};
use scancusum::detect::{calibrate_threshold, detect, DetectorMode};
use scancusum::experiments::{run_table1, run_table2, Table1Config, Table2Config};
use scancusum::genmodel::sample_multiseq;
use scancusum::io::{
    read_dataset_csv, table1_text, table2_csv_records, table2_text, write_csv, write_dataset_csv,
    write_intensity_csv, TruthFile,
};
use scancusum::metrics::{aggregate, evaluate_sequence, summarize_replicate, SequenceEval};
use scancusum::stats::estimate_sigma;
use scancusum::{run_pipeline, DetectorConfig, IntensitySpec, JumpSpec, Streams};
use serde::{Deserialize, Serialize};

use crate::config::{
    BoundsConfig, CalibrateConfig, ConfigFile, DetectConfig, EvaluateConfig, GenerateConfig, PipelineConfig,
};
use crate::output::{align, csv_from_rows, emit, key_value_bodies, Bodies, RunRecord};
use crate::{
    BoundsArgs, CalibrateArgs, Cli, CliError, Command, DetectArgs, EvaluateArgs, GenerateArgs, IntensityKind, JumpKind,
    ModeArg, PipelineArgs, Quantity, Table1Args, Table2Args,
};

const DEFAULT_SEED: u64 = 1;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::internal)?;
    }
    let seed = cli.seed.or(file.seed);
    let ctx = Ctx {
        format: cli.format,
        output: cli.output.clone(),
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Generate(a) => generate(&ctx, a, file.generate.unwrap_or_default(), seed.unwrap_or(DEFAULT_SEED)),
        Command::Detect(a) => detect_cmd(&ctx, a, file.detect.unwrap_or_default()),
        Command::Evaluate(a) => evaluate(&ctx, a, file.evaluate.unwrap_or_default()),
        Command::Calibrate(a) => calibrate(&ctx, a, file.calibrate.unwrap_or_default(), seed.unwrap_or(DEFAULT_SEED)),
        Command::Bounds(a) => bounds(&ctx, a, file.bounds.unwrap_or_default(), seed.unwrap_or(DEFAULT_SEED)),
        Command::Table1(a) => table1(&ctx, a, file.table1, seed),
        Command::Table2(a) => table2(&ctx, a, file.table2, seed),
        Command::Pipeline(a) => pipeline(&ctx, a, file.pipeline.unwrap_or_default()),
    }
}

struct Ctx {
    format: crate::output::Format,
    output: Option<PathBuf>,
    quiet: bool,
}

impl Ctx {
    fn progress(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn jump_from(kind: JumpKind, param: Option<f64>) -> JumpSpec {
    match kind {
        JumpKind::Hmm => JumpSpec::HmmYao {
            sigma_xi: param.unwrap_or(1.0),
        },
        JumpKind::Normal => JumpSpec::Normal { sd: param.unwrap_or(1.0) },
        JumpKind::Point => JumpSpec::Point {
            delta: param.unwrap_or(1.0),
        },
    }
}

fn intensity_from(kind: IntensityKind, q: f64, mass_hi: f64, scale: f64) -> Result<IntensitySpec, CliError> {
    Ok(match kind {
        IntensityKind::Constant => IntensitySpec::constant(q)?,
        IntensityKind::TwoPoint => IntensitySpec::two_point(q, mass_hi, scale)?,
        IntensityKind::Beta => IntensitySpec::beta(q)?,
    })
}

fn spec_q(spec: &IntensitySpec) -> f64 {
    match spec {
        IntensitySpec::Constant { q } | IntensitySpec::Beta { q } | IntensitySpec::TwoPoint { q, .. } => *q,
        IntensitySpec::Custom { .. } => spec.mean(),
    }
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::create(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn with_path(path: &Path, e: scancusum::Error) -> CliError {
    match e {
        scancusum::Error::Io(source) => CliError::io(path, source),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    }
}

#[derive(Debug, Serialize)]
struct GenerateSummary {
    data: PathBuf,
    truth: PathBuf,
    t_len: usize,
    change_points: Vec<usize>,
}

fn generate(ctx: &Ctx, a: GenerateArgs, mut cfg: GenerateConfig, seed: u64) -> Result<(), CliError> {
    if let Some(v) = a.n_seq {
        cfg.n_seq = v;
    }
    if let Some(v) = a.t_len {
        cfg.t_len = v;
    }
    if a.intensity.is_some() || a.q.is_some() {
        let q = a.q.unwrap_or_else(|| spec_q(&cfg.intensity));
        let kind = a.intensity.unwrap_or(match cfg.intensity {
            IntensitySpec::TwoPoint { .. } => IntensityKind::TwoPoint,
            IntensitySpec::Beta { .. } => IntensityKind::Beta,
            _ => IntensityKind::Constant,
        });
        cfg.intensity = intensity_from(kind, q, a.mass_hi, a.scale)?;
    }
    if let Some(k) = a.jump {
        cfg.jump = jump_from(k, a.jump_param);
    }
    if let Some(v) = a.sigma_x {
        cfg.sigma_x = v;
    }
    if let Some(v) = a.replicate {
        cfg.replicate = v;
    }
    let ds = sample_multiseq(
        &cfg.intensity,
        cfg.n_seq,
        cfg.t_len,
        &cfg.jump,
        cfg.sigma_x,
        &Streams::new(seed),
        cfg.replicate,
    )?;
    let truth_path = a.truth.unwrap_or_else(|| {
        let mut s = a.data.clone().into_os_string();
        s.push(".truth.json");
        PathBuf::from(s)
    });
    let x: Vec<Vec<f64>> = ds.sequences.iter().map(|s| s.x.clone()).collect();
    write_dataset_csv(&x, create(&a.data)?).map_err(|e| with_path(&a.data, e))?;
    let truth = serde_json::to_string_pretty(&TruthFile::from_dataset(&ds)).map_err(CliError::internal)?;
    std::fs::write(&truth_path, truth + "\n").map_err(|e| CliError::io(&truth_path, e))?;
    let summary = GenerateSummary {
        data: a.data,
        truth: truth_path,
        t_len: cfg.t_len,
        change_points: ds.sequences.iter().map(|s| s.truth.tau.len()).collect(),
    };
    let rec = RunRecord::new("generate", seed, &cfg, summary)?;
    emit(&rec, ctx.format, || key_value_bodies(&rec.result), ctx.output.as_deref())
}

/// Detections of one sequence without the stored profiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceDetections {
    pub sequence: usize,
    pub sigma_x: f64,
    pub tau_hat: Vec<usize>,
    pub detections: Vec<DetectionRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRow {
    pub tau_hat: usize,
    pub u: usize,
    pub v: usize,
    pub scale: usize,
    pub window: usize,
    pub center: usize,
    pub scan_z: f64,
    pub fallback: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DetectOutput {
    pub t_len: usize,
    pub sequences: Vec<SequenceDetections>,
}

fn read_intensity_csv(path: &Path) -> Result<Vec<f64>, CliError> {
    #[derive(Deserialize)]
    struct Row {
        t: usize,
        a_hat: f64,
    }
    let rows: Vec<Row> = scancusum::io::read_csv(open(path)?).map_err(|e| with_path(path, e))?;
    rows.iter()
        .enumerate()
        .map(|(k, r)| {
            if r.t == k + 1 {
                Ok(r.a_hat)
            } else {
                Err(CliError::Usage(format!(
                    "{}: line {}: expected t = {}, found {}",
                    path.display(),
                    k + 2,
                    k + 1,
                    r.t
                )))
            }
        })
        .collect()
}

fn detect_cmd(ctx: &Ctx, a: DetectArgs, mut cfg: DetectConfig) -> Result<(), CliError> {
    if let Some(v) = a.c_scan {
        cfg.c_scan = v;
    }
    if let Some(v) = a.rho {
        cfg.rho = v;
    }
    if let Some(v) = a.sigma_x {
        cfg.sigma_x = v;
    }
    cfg.estimate_sigma |= a.estimate_sigma;
    if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Plain => DetectorMode::Plain,
            ModeArg::Extended => DetectorMode::Extended,
        };
    }
    let x = read_dataset_csv(open(&a.input)?).map_err(|e| with_path(&a.input, e))?;
    let intensity = a.intensity_csv.as_deref().map(read_intensity_csv).transpose()?;
    if cfg.mode == DetectorMode::Extended && intensity.is_none() {
        return Err(CliError::Usage("--mode extended needs --intensity-csv".into()));
    }
    let sequences = x
        .iter()
        .enumerate()
        .map(|(n, xs)| {
            let sigma = if cfg.estimate_sigma { estimate_sigma(xs)? } else { cfg.sigma_x };
            let dc = DetectorConfig::new(cfg.c_scan, sigma)?.with_rho(cfg.rho)?.with_mode(cfg.mode);
            let r = detect(xs, intensity.as_deref(), &dc)?;
            Ok(SequenceDetections {
                sequence: n,
                sigma_x: sigma,
                tau_hat: r.tau_hat(),
                detections: r
                    .detections
                    .iter()
                    .map(|d| DetectionRow {
                        tau_hat: d.tau_hat,
                        u: d.interval.u,
                        v: d.interval.v,
                        scale: d.scale,
                        window: d.window,
                        center: d.center,
                        scan_z: d.scan_z,
                        fallback: d.fallback,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let out = DetectOutput {
        t_len: x[0].len(),
        sequences,
    };
    let rec = RunRecord::new("detect", 0, &cfg, out)?;
    emit(
        &rec,
        ctx.format,
        || {
            let mut rows = vec![["sequence", "tau_hat", "u", "v", "scale", "window", "center", "scan_z", "fallback"]
                .map(String::from)
                .to_vec()];
            for s in &rec.result.sequences {
                for d in &s.detections {
                    rows.push(vec![
                        s.sequence.to_string(),
                        d.tau_hat.to_string(),
                        d.u.to_string(),
                        d.v.to_string(),
                        d.scale.to_string(),
                        d.window.to_string(),
                        d.center.to_string(),
                        d.scan_z.to_string(),
                        d.fallback.to_string(),
                    ]);
                }
            }
            Ok(Bodies {
                csv: csv_from_rows(&rows)?,
                table: align(&rows),
            })
        },
        ctx.output.as_deref(),
    )
}

#[derive(Debug, Serialize)]
struct EvaluateOutput {
    per_sequence: Vec<(usize, SequenceEval)>,
    summary: Option<scancusum::metrics::EvalReport>,
}

fn evaluate(ctx: &Ctx, a: EvaluateArgs, mut cfg: EvaluateConfig) -> Result<(), CliError> {
    if let Some(v) = a.delta0 {
        cfg.delta0 = v;
    }
    let truth: TruthFile = read_json(&a.truth)?;
    let det: serde_json::Value = read_json(&a.detections)?;
    let det: DetectOutput = serde_json::from_value(det.get("result").cloned().unwrap_or(det))
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.detections.display())))?;
    let t_len = truth.a.len() + 1;
    if det.t_len != t_len || det.sequences.len() != truth.sequences.len() {
        return Err(CliError::Usage(format!(
            "detections cover {} sequences of length {}, truth has {} of length {t_len}",
            det.sequences.len(),
            det.t_len,
            truth.sequences.len()
        )));
    }
    let per_sequence = truth
        .sequences
        .iter()
        .zip(&det.sequences)
        .enumerate()
        .filter(|(_, (t, _))| !t.tau.is_empty())
        .map(|(n, (t, d))| Ok((n, evaluate_sequence(&t.tau, &t.delta, &d.tau_hat, t_len, cfg.delta0)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let evals: Vec<SequenceEval> = per_sequence.iter().map(|p| p.1).collect();
    let summary = summarize_replicate(&evals).map(|r| aggregate(&[r])).transpose()?;
    let rec = RunRecord::new("evaluate", 0, &cfg, EvaluateOutput { per_sequence, summary })?;
    emit(
        &rec,
        ctx.format,
        || {
            let mut rows = vec![["sequence", "alpha", "beta", "gamma", "n_true"].map(String::from).to_vec()];
            for (n, e) in &rec.result.per_sequence {
                rows.push(vec![
                    n.to_string(),
                    e.alpha.to_string(),
                    e.beta.to_string(),
                    e.gamma.map_or("-".into(), |g| g.to_string()),
                    e.n_true.to_string(),
                ]);
            }
            if let Some(s) = &rec.result.summary {
                rows.push(vec![
                    "mean".into(),
                    s.alpha.to_string(),
                    s.beta.to_string(),
                    s.gamma.map_or("-".into(), |g| g.to_string()),
                    "-".into(),
                ]);
            }
            Ok(Bodies {
                csv: csv_from_rows(&rows)?,
                table: align(&rows),
            })
        },
        ctx.output.as_deref(),
    )
}

fn calibrate(ctx: &Ctx, a: CalibrateArgs, mut cfg: CalibrateConfig, seed: u64) -> Result<(), CliError> {
    if let Some(v) = a.t_len {
        cfg.t_len = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if let Some(v) = a.sigma_x {
        cfg.sigma_x = v;
    }
    if let Some(v) = a.rho {
        cfg.rho = v;
    }
    ctx.progress(&format!("calibrating on {} null sequences of length {}", cfg.reps, cfg.t_len));
    let cal = calibrate_threshold(cfg.t_len, cfg.sigma_x, cfg.alpha, cfg.reps, seed, cfg.rho)?;
    let rec = RunRecord::new("calibrate", seed, &cfg, cal)?;
    emit(&rec, ctx.format, || key_value_bodies(&rec.result), ctx.output.as_deref())
}

fn bounds(ctx: &Ctx, a: BoundsArgs, mut cfg: BoundsConfig, seed: u64) -> Result<(), CliError> {
    if a.delta.is_some() {
        cfg.delta = a.delta;
    }
    if let Some(k) = a.jump {
        cfg.jump = Some(jump_from(k, a.jump_param));
    }
    if let Some(v) = a.delta0 {
        cfg.delta0 = v;
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if a.horizon.is_some() {
        cfg.horizon = a.horizon;
    }
    if let Some(v) = a.max_horizon {
        cfg.max_horizon = v;
    }
    let need_delta = || cfg.delta.ok_or_else(|| CliError::Usage(format!("{:?} needs a Delta value", a.quantity)));
    let horizon = |d: f64| cfg.horizon.unwrap_or_else(|| default_horizon(d).min(cfg.max_horizon));
    let reports: Vec<BoundReport> = match a.quantity {
        Quantity::Nu => vec![nu_report(need_delta()?)?],
        Quantity::BetaUpper => {
            let jump = match (cfg.jump, cfg.delta) {
                (Some(j), _) => j,
                (None, Some(d)) => JumpSpec::Point { delta: d },
                (None, None) => return Err(CliError::Usage("beta-upper needs a Delta or --jump".into())),
            };
            vec![beta_upper(&jump, cfg.tol)?]
        }
        Quantity::BetaWalk => {
            let d = need_delta()?;
            vec![beta_upper_walk_mc(d, cfg.reps, horizon(d), seed)?]
        }
        Quantity::GammaLower | Quantity::GammaScan | Quantity::Gamma => {
            let pair = match (cfg.delta, cfg.jump) {
                (Some(d), _) => gamma_pair_mc(d, horizon(d), cfg.reps, seed)?,
                (None, Some(j)) => gamma_pair_over_jump_mc(&j, cfg.delta0, cfg.reps, cfg.max_horizon, seed)?,
                (None, None) => return Err(CliError::Usage("gamma needs a Delta or --jump with --delta0".into())),
            };
            match a.quantity {
                Quantity::GammaLower => vec![pair.lower],
                Quantity::GammaScan => vec![pair.scan],
                _ => vec![pair.lower, pair.scan],
            }
        }
    };
    for r in &reports {
        if r.horizon_warning {
            ctx.progress("warning: likelihood weight at the horizon exceeds 1e-8 of its maximum; raise --horizon");
        }
    }
    let rec = RunRecord::new("bounds", seed, &cfg, reports)?;
    emit(&rec, ctx.format, || key_value_bodies(&rec.result), ctx.output.as_deref())
}

fn table1(ctx: &Ctx, a: Table1Args, file: Option<Table1Config>, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = file.unwrap_or_default();
    if let Some(g) = a.grid {
        cfg.grid = g;
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if let Some(v) = a.max_horizon {
        cfg.max_horizon = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    ctx.progress(&format!("table1: {} replicates per Delta over {:?}", cfg.reps, cfg.grid));
    let report = run_table1(&cfg)?;
    let rec = RunRecord::new("table1", cfg.seed, &cfg, &report.rows)?;
    emit(
        &rec,
        ctx.format,
        || {
            let mut buf = Vec::new();
            write_csv(&report.rows, &mut buf)?;
            Ok(Bodies {
                csv: String::from_utf8(buf).map_err(CliError::internal)?,
                table: table1_text(&report.rows),
            })
        },
        ctx.output.as_deref(),
    )
}

fn table2(ctx: &Ctx, a: Table2Args, file: Option<Table2Config>, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = match (a.scaled, file) {
        (true, Some(f)) => Table2Config {
            seed: f.seed,
            ..Table2Config::scaled()
        },
        (true, None) => Table2Config::scaled(),
        (false, f) => f.unwrap_or_default(),
    };
    if let Some(v) = a.n_seq {
        cfg.n_seq = v;
    }
    if let Some(v) = a.t_len {
        cfg.t_len = v;
    }
    if let Some(v) = a.q {
        cfg.q = v;
    }
    if let Some(v) = a.reps {
        cfg.reps = v;
    }
    if let Some(v) = a.c_scan {
        cfg.c_scan = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(kinds) = a.kinds {
        cfg.kinds = kinds
            .into_iter()
            .map(|k| intensity_from(k, cfg.q, 0.01, 100.0))
            .collect::<Result<_, _>>()?;
    } else if a.q.is_some() && !cfg.kinds.is_empty() {
        return Err(CliError::Usage("--q cannot rescale intensity laws given in the config file".into()));
    }
    let quiet = ctx.quiet;
    let progress = move |m: &str| {
        if !quiet {
            eprintln!("{m}");
        }
    };
    let report = run_table2(&cfg, Some(&progress))?;
    let rec = RunRecord::new("table2", cfg.seed, &cfg, &report.rows)?;
    emit(
        &rec,
        ctx.format,
        || {
            let mut buf = Vec::new();
            write_csv(&table2_csv_records(&report), &mut buf)?;
            Ok(Bodies {
                csv: String::from_utf8(buf).map_err(CliError::internal)?,
                table: table2_text(&report),
            })
        },
        ctx.output.as_deref(),
    )
}

#[derive(Debug, Serialize)]
struct PipelineOutput {
    no_share: Option<scancusum::metrics::ReplicateEval>,
    with_share: Option<scancusum::metrics::ReplicateEval>,
    em_iterations: usize,
    em_converged: bool,
    em_loglik_trace: Vec<f64>,
    positions_above_one: usize,
    tau_hat: Vec<Vec<usize>>,
    tau_tilde: Vec<Vec<usize>>,
}

fn pipeline(ctx: &Ctx, a: PipelineArgs, mut cfg: PipelineConfig) -> Result<(), CliError> {
    if let Some(v) = a.c_scan {
        cfg.c_scan = v;
    }
    if let Some(v) = a.rho {
        cfg.rho = v;
    }
    if let Some(v) = a.sigma_x {
        cfg.sigma_x = v;
    }
    if let Some(v) = a.delta0 {
        cfg.delta0 = v;
    }
    if let Some(v) = a.em_max_iter {
        cfg.em.max_iter = v;
    }
    if let Some(v) = a.em_tol {
        cfg.em.tol = v;
    }
    let x = read_dataset_csv(open(&a.input)?).map_err(|e| with_path(&a.input, e))?;
    let truth: TruthFile = read_json(&a.truth)?;
    let ds = truth.into_dataset(x)?;
    let dc = DetectorConfig::new(cfg.c_scan, cfg.sigma_x)?.with_rho(cfg.rho)?;
    let out = run_pipeline(&ds, &dc, &cfg.em, cfg.delta0)?;
    if let Some(p) = &a.a_hat_csv {
        write_intensity_csv(&out.em.a_hat, create(p)?).map_err(|e| with_path(p, e))?;
    }
    let result = PipelineOutput {
        no_share: out.no_share,
        with_share: out.with_share,
        em_iterations: out.em.iterations,
        em_converged: out.em.converged,
        em_loglik_trace: out.em.loglik_trace.clone(),
        positions_above_one: out.em.positions_above_one,
        tau_hat: out.detections.iter().map(|d| d.tau_hat()).collect(),
        tau_tilde: out.refined.iter().map(|r| r.tau_tilde.clone()).collect(),
    };
    let rec = RunRecord::new("pipeline", 0, &cfg, result)?;
    emit(&rec, ctx.format, || key_value_bodies(&rec.result), ctx.output.as_deref())
}
