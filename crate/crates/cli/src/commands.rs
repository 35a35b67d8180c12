//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gfref_core::bayes::{
    fit_posterior, integrated_lik_nu, Conditionals, PosteriorSummary, SamplerConfig, ScanTuning, DEFAULT_REFINE_POINTS,
};
use gfref_core::covmodel::DEFAULT_TRUNCATION;
use gfref_core::designs::{regular_lattice, tune_defaults, SpatialDesign, Trend, TuningReport};
use gfref_core::likelihoods::{reml_fit_approx, reml_fit_exact};
use gfref_core::numerics::log_grid;
use gfref_core::priors::{
    default_theta_grid, tail_diagnostic, ApproxPrior, ExactPrior, PriorKind, Representation, SpectralConfig,
    TabulatedDensity, DEFAULT_GRID_POINTS, INVERSE_GAMMA_BASELINE,
};
use gfref_core::simstudy::{
    coverage_experiment, empirical_semivariogram, simulate_grf, tabulate_prior, DesignSpec, ExperimentConfig, GrfParams,
    QUADRATIC_TREND_BETA,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{parse_list, Resolver};
use crate::dataset::{load_dataset, write_dataset, Dataset};
use crate::failure::Failure;
use crate::{
    BenchArgs, CoverageArgs, FitArgs, PriorArgs, RemlArgs, SelectNuArgs, SemivariogramArgs, SimulateArgs, SpectralArgs,
};

type Out = Result<Value, Failure>;

fn require<T>(v: Option<T>, key: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::validation(format!("missing required setting '{key}'")))
}

fn parse_trend(s: &str) -> Result<Trend, Failure> {
    Trend::parse(s).ok_or_else(|| Failure::validation(format!("unknown trend '{s}' (constant, linear, quadratic)")))
}

fn parse_representation(s: &str) -> Result<Representation, Failure> {
    match s.to_ascii_lowercase().as_str() {
        "a" => Ok(Representation::A),
        "b" => Ok(Representation::B),
        _ => Err(Failure::validation(format!("unknown representation '{s}' (a, b)"))),
    }
}

/// Prior kind from its CLI name.
fn parse_prior(s: &str, rep: Representation, ig: (f64, f64)) -> Result<PriorKind, Failure> {
    match s.to_ascii_lowercase().as_str() {
        "exact" | "exact-ref" => Ok(PriorKind::ExactRef { representation: rep }),
        "approx" | "approx-ref" => Ok(PriorKind::ApproxRef),
        "ig" | "inverse-gamma" => Ok(PriorKind::InverseGamma { shape: ig.0, scale: ig.1 }),
        _ => Err(Failure::validation(format!("unknown prior '{s}' (exact, approx, ig)"))),
    }
}

fn load(r: &mut Resolver, flag: Option<PathBuf>) -> Result<Dataset, Failure> {
    let path: PathBuf = require(r.get_opt("data", flag)?, "data")?;
    load_dataset(&path)
}

fn trend_opt(r: &mut Resolver, flag: Option<String>) -> Result<Option<Trend>, Failure> {
    r.get_opt("trend", flag)?.map(|s: String| parse_trend(&s)).transpose()
}

/// Spectral tuning: explicit settings where given, design defaults otherwise.
fn spectral_config(
    r: &mut Resolver,
    args: &SpectralArgs,
    design: &SpatialDesign,
    nu: f64,
) -> Result<(SpectralConfig, TuningReport), Failure> {
    let tuning = tune_defaults(design, None, nu)?;
    let m1 = r.get("m1", args.m1, tuning.m1)?;
    let m2 = r.get("m2", args.m2, tuning.m2)?;
    let delta = r.get("delta", args.delta, tuning.delta)?;
    let truncation = r.get("truncation", args.truncation, DEFAULT_TRUNCATION)?;
    Ok((SpectralConfig { m1, m2, delta, truncation }, tuning))
}

fn theta_grid(r: &mut Resolver, design: &SpatialDesign, points: Option<usize>, lo: Option<f64>, hi: Option<f64>) -> Result<Vec<f64>, Failure> {
    let default = default_theta_grid(design)?;
    let n = r.get("grid-points", points, DEFAULT_GRID_POINTS)?;
    let lo = r.get("theta-min", lo, default[0])?;
    let hi = r.get("theta-max", hi, *default.last().expect("non-empty"))?;
    if !(lo > 0.0 && hi > lo) || n < 3 {
        return Err(Failure::validation(format!("invalid theta grid [{lo}, {hi}] with {n} points")));
    }
    Ok(log_grid(lo, hi, n))
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    ensure_parent(path)?;
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    Ok(())
}

fn density_bytes(d: &TabulatedDensity) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    d.write_csv(&mut buf)?;
    Ok(buf)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn tabulate(kind: PriorKind, design: &SpatialDesign, nu: f64, cfg: Option<SpectralConfig>, grid: &[f64], normalize: bool) -> Result<TabulatedDensity, Failure> {
    let d = tabulate_prior(kind, design, nu, cfg, grid)?;
    Ok(if normalize { d.normalize()? } else { d })
}

pub fn prior(r: &mut Resolver, a: PriorArgs) -> Out {
    let ds = load(r, a.data)?;
    let trend = trend_opt(r, a.trend)?;
    let design = ds.design(trend)?;
    let nu = r.get("nu", a.nu, 0.5)?;
    let kinds: String = r.get("kind", a.kind, "approx".to_string())?;
    let rep = parse_representation(&r.get("representation", a.representation, "a".to_string())?)?;
    let ig = (r.get("ig-shape", a.ig_shape, INVERSE_GAMMA_BASELINE.0)?, r.get("ig-scale", a.ig_scale, INVERSE_GAMMA_BASELINE.1)?);
    let normalize = r.switch("normalize", a.normalize)?;
    let grid = theta_grid(r, &design, a.grid_points, a.theta_min, a.theta_max)?;
    let out: PathBuf = r.get("out", a.out, PathBuf::from("prior.csv"))?;
    let kinds: Vec<PriorKind> = parse_list::<String>(&kinds)?.iter().map(|k| parse_prior(k, rep, ig)).collect::<Result<_, _>>()?;
    if kinds.is_empty() {
        return Err(Failure::validation("no prior kind given"));
    }
    let spectral = if kinds.contains(&PriorKind::ApproxRef) {
        let (cfg, tuning) = spectral_config(r, &a.spectral, &design, nu)?;
        r.note("tuning", &tuning);
        Some(cfg)
    } else {
        None
    };

    let mut columns = Vec::new();
    let mut meta = Vec::new();
    for k in &kinds {
        let d = tabulate(*k, &design, nu, spectral, &grid, normalize)?;
        meta.push(json!({
            "kind": k.label(),
            "tail": tail_diagnostic(&d),
            "normalization": d.normalization,
            "truncated_at": d.truncated_at,
            "sha256": sha256_hex(&density_bytes(&d)?),
        }));
        columns.push((k.label().replace('-', "_"), d));
    }
    ensure_parent(&out)?;
    let mut wtr = csv::Writer::from_path(&out).map_err(Failure::io)?;
    let mut header = vec!["theta".to_string()];
    for (name, _) in &columns {
        header.push(format!("{name}_density"));
        header.push(format!("{name}_log_density"));
    }
    wtr.write_record(&header).map_err(Failure::io)?;
    // Rows follow the requested grid. The approximate prior may have been
    // evaluated below it for normalization, and a tabulation stops early at
    // a conditioning failure; missing values are left blank.
    let rows = grid;
    for &t in &rows {
        let mut row = vec![format!("{t:.12e}")];
        for (_, d) in &columns {
            match d.theta.iter().position(|x| (x - t).abs() <= 1e-12 * t) {
                Some(i) => {
                    row.push(format!("{:.12e}", d.values[i]));
                    row.push(format!("{:.12e}", d.log_values[i]));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        wtr.write_record(&row).map_err(Failure::io)?;
    }
    wtr.flush().map_err(Failure::io)?;
    Ok(json!({ "rows": rows.len(), "output": out, "priors": meta }))
}

fn table2_report(s: &PosteriorSummary) -> String {
    let mut t = String::new();
    t.push_str(&format!("prior: {}\n", s.prior));
    t.push_str(&format!("{:<10} {:>12} {:>12} {:>12}  {}\n", "parameter", "estimate", "hpd_lower", "hpd_upper", "estimator"));
    for p in &s.parameters {
        let (est, how) = match (p.name.as_str(), p.mode) {
            ("theta", Some(m)) => (m, "posterior mode"),
            ("sigma2", _) => (p.median, "posterior median"),
            _ => (p.mean, "posterior mean"),
        };
        t.push_str(&format!("{:<10} {:>12.4} {:>12.4} {:>12.4}  {}\n", p.name, est, p.hpd_lower, p.hpd_upper, how));
    }
    t.push_str(&format!("{:.0}% HPD intervals from {} draws; ratio-of-uniforms acceptance rate {:.3}\n", 100.0 * s.level, s.n_draws, s.acceptance_rate));
    t
}

pub fn fit(r: &mut Resolver, a: FitArgs) -> Out {
    let ds = load(r, a.data)?;
    let trend = trend_opt(r, a.trend)?;
    let data = ds.data(trend)?;
    let nu = r.get("nu", a.nu, 0.5)?;
    let rep = parse_representation(&r.get("representation", a.representation, "a".to_string())?)?;
    let ig = (r.get("ig-shape", a.ig_shape, INVERSE_GAMMA_BASELINE.0)?, r.get("ig-scale", a.ig_scale, INVERSE_GAMMA_BASELINE.1)?);
    let kind = parse_prior(&r.get("prior", a.prior, "approx".to_string())?, rep, ig)?;
    let n_draws = r.get("draws", a.draws, 10_000usize)?;
    let seed = r.get("seed", a.seed, 1u64)?;
    let level = r.get("level", a.level, 0.95)?;
    let exact_marginal = r.switch("exact-marginal", a.exact_marginal)?;
    let conditionals = match r.get("conditionals", a.conditionals, "exact".to_string())?.as_str() {
        "exact" => Conditionals::Exact,
        "interpolated" => Conditionals::Interpolated,
        other => return Err(Failure::validation(format!("unknown conditionals '{other}' (exact, interpolated)"))),
    };
    let grid = theta_grid(r, &data.design, a.grid_points, a.theta_min, a.theta_max)?;
    let out_dir: PathBuf = r.get("out-dir", a.out_dir, PathBuf::from("fit-output"))?;
    let spectral = if kind == PriorKind::ApproxRef {
        let (cfg, tuning) = spectral_config(r, &a.spectral, &data.design, nu)?;
        r.note("tuning", &tuning);
        Some(cfg)
    } else {
        None
    };

    let prior = tabulate(kind, &data.design, nu, spectral, &grid, true)?;
    let prior_bytes = density_bytes(&prior)?;
    let cfg = SamplerConfig { n_draws, seed, exact_marginal, conditionals, refine_points: DEFAULT_REFINE_POINTS };
    let (post, draws) = fit_posterior(&data, nu, kind, &prior, &cfg)?;
    let summary = draws.summary(level)?;

    std::fs::create_dir_all(&out_dir)?;
    draws.save_csv(&out_dir.join("draws.csv"))?;
    std::fs::write(out_dir.join("prior.csv"), &prior_bytes)?;
    post.tabulated()?.save_csv(&out_dir.join("posterior_theta.csv"))?;
    std::fs::write(out_dir.join("report.txt"), table2_report(&summary))?;
    let body = json!({
        "summary": summary,
        "theta_mode": post.mode(),
        "acceptance_rate": draws.acceptance_rate,
        "prior_sha256": sha256_hex(&prior_bytes),
        "prior_extrapolated": post.prior_extrapolated(),
        "rou_box": draws.rou,
        "config": r.resolved(),
    });
    write_json(&out_dir.join("summary.json"), &body)?;
    Ok(json!({
        "output_dir": out_dir,
        "theta_mode": post.mode(),
        "acceptance_rate": draws.acceptance_rate,
        "prior_sha256": sha256_hex(&prior_bytes),
    }))
}

pub fn select_nu(r: &mut Resolver, a: SelectNuArgs) -> Out {
    let ds = load(r, a.data)?;
    let trend = trend_opt(r, a.trend)?;
    let data = ds.data(trend)?;
    let nus: Vec<f64> = parse_list(&r.get("nu-grid", a.nu_grid, "0.5,0.75,1,1.25,1.5,1.75,2,2.5".to_string())?)?;
    if nus.is_empty() || nus.iter().any(|v| !(*v > 0.0)) {
        return Err(Failure::validation("nu grid must hold positive values"));
    }
    let truncation = r.get("truncation", a.spectral.truncation, DEFAULT_TRUNCATION)?;
    let fixed = (r.get_opt("m1", a.spectral.m1)?, r.get_opt("m2", a.spectral.m2)?, r.get_opt("delta", a.spectral.delta)?);
    let tuning = match fixed {
        (Some(m1), Some(m2), Some(delta)) => ScanTuning::Fixed(SpectralConfig { m1, m2, delta, truncation }),
        (None, None, None) => ScanTuning::Auto { truncation },
        _ => return Err(Failure::validation("set all of m1, m2 and delta, or none of them")),
    };
    let grid = theta_grid(r, &data.design, a.grid_points, a.theta_min, a.theta_max)?;
    let out: PathBuf = r.get("out", a.out, PathBuf::from("smoothness.csv"))?;
    let scan = integrated_lik_nu(&nus, &data, tuning, Some(&grid))?;
    ensure_parent(&out)?;
    scan.write_csv(std::fs::File::create(&out)?)?;
    Ok(json!({ "output": out, "scan": scan }))
}

pub fn reml(r: &mut Resolver, a: RemlArgs) -> Out {
    let ds = load(r, a.data)?;
    let trend = trend_opt(r, a.trend)?;
    let data = ds.data(trend)?;
    let nu = r.get("nu", a.nu, 0.5)?;
    let method: String = r.get("method", a.method, "exact".to_string())?;
    let truncation = r.get("truncation", a.truncation, DEFAULT_TRUNCATION)?;
    let bounds = match (r.get_opt("theta-min", a.theta_min)?, r.get_opt("theta-max", a.theta_max)?) {
        (Some(l), Some(u)) => Some((l, u)),
        (None, None) => None,
        _ => return Err(Failure::validation("set both theta-min and theta-max, or neither")),
    };
    let out: Option<PathBuf> = r.get_opt("out", a.out)?;
    let fit = match method.as_str() {
        "exact" => reml_fit_exact(&data, nu, bounds)?,
        "approx" => reml_fit_approx(&data, nu, truncation, bounds)?,
        other => return Err(Failure::validation(format!("unknown method '{other}' (exact, approx)"))),
    };
    let v = json!({ "fit": fit });
    if let Some(p) = &out {
        write_json(p, &json!({ "fit": fit, "config": r.resolved() }))?;
    }
    Ok(v)
}

/// Design from `regular:MxN`, `uniform:N[:SEED]`, or a CSV path.
fn design_spec(s: &str) -> Result<DesignSpec, Failure> {
    let bad = || Failure::validation(format!("bad design '{s}' (regular:MxN, uniform:N[:SEED] or a CSV file)"));
    if let Some(rest) = s.strip_prefix("regular:") {
        let (a, b) = rest.split_once('x').ok_or_else(bad)?;
        return Ok(DesignSpec::Regular { m1: a.parse().map_err(|_| bad())?, m2: b.parse().map_err(|_| bad())? });
    }
    if let Some(rest) = s.strip_prefix("uniform:") {
        let mut it = rest.split(':');
        let n = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let seed = it.next().map_or(Ok(1), |v| v.parse().map_err(|_| bad()))?;
        return Ok(DesignSpec::Uniform { n, seed });
    }
    Ok(DesignSpec::Points { points: load_dataset(Path::new(s))?.locations })
}

fn default_beta(trend: Trend) -> Vec<f64> {
    match trend {
        Trend::Constant => vec![1.0],
        Trend::Linear => QUADRATIC_TREND_BETA[..3].to_vec(),
        Trend::Quadratic => QUADRATIC_TREND_BETA.to_vec(),
    }
}

fn beta_for(r: &mut Resolver, flag: Option<String>, trend: Trend) -> Result<Vec<f64>, Failure> {
    let beta = match r.get_opt::<String>("beta", flag)? {
        Some(s) => parse_list(&s)?,
        None => default_beta(trend),
    };
    if beta.len() != trend.dim() {
        return Err(Failure::validation(format!("beta has {} entries, the {trend:?} trend needs {}", beta.len(), trend.dim())));
    }
    Ok(beta)
}

pub fn simulate(r: &mut Resolver, a: SimulateArgs) -> Out {
    let spec = design_spec(&r.get("design", a.design, "regular:10x10".to_string())?)?;
    let trend = parse_trend(&r.get("trend", a.trend, "constant".to_string())?)?;
    let beta = beta_for(r, a.beta, trend)?;
    let params = GrfParams {
        beta,
        sigma2: r.get("sigma2", a.sigma2, 1.0)?,
        theta: r.get("theta", a.theta, 0.2)?,
        nu: r.get("nu", a.nu, 0.5)?,
    };
    let seed = r.get("seed", a.seed, 1u64)?;
    let out: PathBuf = r.get("out", a.out, PathBuf::from("simulated.csv"))?;
    let design = SpatialDesign::with_trend(spec.locations()?, trend)?;
    let data = simulate_grf(&design, &params, seed)?;
    ensure_parent(&out)?;
    write_dataset(&out, &data)?;
    Ok(json!({ "output": out, "n": data.n(), "p": data.p() }))
}

pub fn coverage(r: &mut Resolver, a: CoverageArgs) -> Out {
    let design = design_spec(&r.get("design", a.design, "regular:10x10".to_string())?)?;
    let trend = parse_trend(&r.get("trend", a.trend, "constant".to_string())?)?;
    let theta = r.get("theta", a.theta, 0.2)?;
    let nu = r.get("nu", a.nu, 0.5)?;
    let mut cfg = ExperimentConfig::desk_scale(theta, nu, trend);
    cfg.design = design;
    cfg.beta = beta_for(r, a.beta, trend)?;
    cfg.sigma2 = r.get("sigma2", a.sigma2, 1.0)?;
    let rep = parse_representation(&r.get("representation", a.representation, "a".to_string())?)?;
    let ig = (r.get("ig-shape", a.ig_shape, INVERSE_GAMMA_BASELINE.0)?, r.get("ig-scale", a.ig_scale, INVERSE_GAMMA_BASELINE.1)?);
    cfg.priors = parse_list::<String>(&r.get("priors", a.priors, "ig,exact,approx".to_string())?)?
        .iter()
        .map(|k| parse_prior(k, rep, ig))
        .collect::<Result<_, _>>()?;
    cfg.include_mle = !r.switch("no-mle", a.no_mle)?;
    cfg.mle_sigma2_interval = r.switch("mle-sigma2-interval", a.mle_sigma2_interval)?;
    cfg.replicates = r.get("replicates", a.replicates, cfg.replicates)?;
    cfg.n_draws = r.get("draws", a.draws, cfg.n_draws)?;
    cfg.level = r.get("level", a.level, cfg.level)?;
    cfg.seed = r.get("seed", a.seed, cfg.seed)?;
    cfg.refine_points = r.get("refine-points", a.refine_points, cfg.refine_points)?;
    let fixed = (r.get_opt("m1", a.spectral.m1)?, r.get_opt("m2", a.spectral.m2)?, r.get_opt("delta", a.spectral.delta)?);
    let truncation = r.get("truncation", a.spectral.truncation, DEFAULT_TRUNCATION)?;
    cfg.spectral = match fixed {
        (Some(m1), Some(m2), Some(delta)) => Some(SpectralConfig { m1, m2, delta, truncation }),
        (None, None, None) if truncation == DEFAULT_TRUNCATION => None,
        (None, None, None) => {
            let d = SpatialDesign::with_trend(cfg.design.locations()?, trend)?;
            let t = tune_defaults(&d, None, nu)?;
            Some(SpectralConfig { m1: t.m1, m2: t.m2, delta: t.delta, truncation })
        }
        _ => return Err(Failure::validation("set all of m1, m2 and delta, or none of them")),
    };
    let out_dir: PathBuf = r.get("out-dir", a.out_dir, PathBuf::from("coverage-output"))?;
    let report = coverage_experiment(&cfg)?;
    std::fs::create_dir_all(&out_dir)?;
    report.write_csv(std::fs::File::create(out_dir.join("report.csv"))?)?;
    write_json(&out_dir.join("report.json"), &json!({ "report": report, "config": r.resolved() }))?;
    Ok(json!({ "output_dir": out_dir, "summaries": report.summaries, "failure_fraction": report.failure_fraction }))
}

pub fn semivariogram(r: &mut Resolver, a: SemivariogramArgs) -> Out {
    let ds = load(r, a.data)?;
    let trend = trend_opt(r, a.trend)?;
    let data = ds.data(trend)?;
    let nu = r.get("nu", a.nu, 0.5)?;
    let bins = r.get("bins", a.bins, gfref_core::simstudy::DEFAULT_BINS)?;
    let out: PathBuf = r.get("out", a.out, PathBuf::from("semivariogram.csv"))?;
    let sv = empirical_semivariogram(&data, bins, nu)?;
    ensure_parent(&out)?;
    sv.write_csv(std::fs::File::create(&out)?)?;
    Ok(json!({ "output": out, "sigma2": sv.sigma2, "theta": sv.theta, "nu": sv.nu, "rss": sv.rss, "bins": sv.bins.len() }))
}

/// Regular √n × √n grid on [0, √n/10]² with approximate-prior grid U_M = S_n.
fn bench_design(n: usize, p: usize) -> Result<(SpatialDesign, SpectralConfig), Failure> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || side < 4 || side % 2 == 1 {
        return Err(Failure::validation(format!("bench needs n = m² with m even and ≥ 4, got n = {n}")));
    }
    let trend = match p {
        1 => Trend::Constant,
        3 => Trend::Linear,
        6 => Trend::Quadratic,
        _ => return Err(Failure::validation(format!("bench supports p = 1, 3 or 6, got {p}"))),
    };
    let spacing = side as f64 / (10.0 * (side - 1) as f64);
    let design = SpatialDesign::with_trend(regular_lattice(side, side, spacing, [0.0, 0.0]), trend)?;
    Ok((design, SpectralConfig { m1: side, m2: side, delta: spacing, truncation: DEFAULT_TRUNCATION }))
}

/// Timings of repeated exact and approximate prior evaluations.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchResult {
    pub n: usize,
    pub p: usize,
    pub nu: f64,
    pub evaluations: usize,
    pub exact_seconds: Option<f64>,
    pub approx_seconds: f64,
    pub ratio: Option<f64>,
}

pub fn run_bench(n: usize, p: usize, nu: f64, evals: usize, skip_exact: bool) -> Result<BenchResult, Failure> {
    if evals == 0 {
        return Err(Failure::validation("at least one evaluation is required"));
    }
    let (design, cfg) = bench_design(n, p)?;
    let grid = default_theta_grid(&design)?;
    let thetas = log_grid(grid[0] * 10.0, grid[grid.len() - 1] / 10.0, evals);
    let start = Instant::now();
    let ap = ApproxPrior::for_design(&design, nu, &cfg)?;
    let mut sink = 0.0;
    for &t in &thetas {
        sink += ap.value(t).unwrap_or(0.0);
    }
    let approx_seconds = start.elapsed().as_secs_f64();
    let exact_seconds = if skip_exact {
        None
    } else {
        let start = Instant::now();
        let ep = ExactPrior::new(&design, nu)?;
        for &t in &thetas {
            sink += ep.value(t, Representation::A).unwrap_or(0.0);
        }
        Some(start.elapsed().as_secs_f64())
    };
    std::hint::black_box(sink);
    Ok(BenchResult { n, p, nu, evaluations: evals, exact_seconds, approx_seconds, ratio: exact_seconds.map(|e| e / approx_seconds) })
}

pub fn bench(r: &mut Resolver, a: BenchArgs) -> Out {
    let n = r.get("n", a.n, 400usize)?;
    let p = r.get("p", a.p, 1usize)?;
    let nu = r.get("nu", a.nu, 0.5)?;
    let evals = r.get("evaluations", a.evaluations, 500usize)?;
    let skip_exact = r.switch("skip-exact", a.skip_exact)?;
    let out: PathBuf = r.get("out", a.out, PathBuf::from("bench.csv"))?;
    let res = run_bench(n, p, nu, evals, skip_exact)?;
    ensure_parent(&out)?;
    let mut wtr = csv::Writer::from_path(&out).map_err(Failure::io)?;
    wtr.write_record(["prior", "nu", "p", "n", "evaluations", "seconds"]).map_err(Failure::io)?;
    let mut rows = vec![("approximate", Some(res.approx_seconds))];
    rows.push(("exact", res.exact_seconds));
    for (name, secs) in rows {
        if let Some(s) = secs {
            wtr.write_record(&[name.to_string(), nu.to_string(), p.to_string(), n.to_string(), evals.to_string(), format!("{s:.6}")])
                .map_err(Failure::io)?;
        }
    }
    wtr.flush().map_err(Failure::io)?;
    Ok(json!({ "output": out, "bench": res }))
}

/// Wraps a command result with the echoed configuration.
pub fn envelope(command: &str, body: Value, config: BTreeMap<String, Value>) -> Value {
    json!({ "command": command, "config": config, "result": body })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_specs() {
        assert_eq!(design_spec("regular:10x12").unwrap(), DesignSpec::Regular { m1: 10, m2: 12 });
        assert_eq!(design_spec("uniform:50").unwrap(), DesignSpec::Uniform { n: 50, seed: 1 });
        assert_eq!(design_spec("uniform:50:7").unwrap(), DesignSpec::Uniform { n: 50, seed: 7 });
        assert!(design_spec("regular:10").is_err());
        assert!(design_spec("/no/such/file.csv").is_err());
    }

    #[test]
    fn bench_design_is_a_lattice_with_matching_spectral_grid() {
        let (d, cfg) = bench_design(100, 1).unwrap();
        assert_eq!(d.n(), 100);
        assert_eq!((cfg.m1, cfg.m2), (10, 10));
        assert!((cfg.delta - 1.0 / 9.0).abs() < 1e-15);
        assert!(bench_design(99, 1).is_err());
        assert!(bench_design(100, 2).is_err());
    }

    #[test]
    fn sha_is_hex() {
        let h = sha256_hex(b"abc");
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
