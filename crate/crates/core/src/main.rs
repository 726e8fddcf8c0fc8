use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fibercavity::calibrate::{self, Calibration};
use fibercavity::estimate::{self, BootstrapOptions, ClickCounts, G2Kind};
use fibercavity::fit::{self, MemoryModelGuess, MemoryParam, SeriesPoint};
use fibercavity::io::{self, format_float, RecordFormat, RecordWriter};
use fibercavity::model::predict;
use fibercavity::multiplex::{self, MultiplexPlan, LITERATURE_ENHANCEMENT, LITERATURE_K};
use fibercavity::readout::{self, ReadoutPoint};
use fibercavity::trialsim::{self, RunMode, DEFAULT_SEED_PHOTONS};
use fibercavity::{presets, Error, ExperimentConfig, Result, ValidatedConfig};

#[derive(Parser)]
#[command(name = "fibercavity", version, about = "Fiber-cavity quantum-memory photon source simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (JSON). Defaults to the built-in primary cavity.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw; a random one is chosen and recorded if omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1_000_000)]
    triggers: u64,
    /// Worker threads (default: number of processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config entry, e.g. `--set pulses.energy_p_nj=5.0`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print its derived quantities.
    Validate,
    /// Write a click-record file (CSV, or binary for a `.bin` path).
    Simulate {
        #[arg(long, value_enum, default_value_t = Mode::Readout)]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        delay: u16,
        /// Ring-down delays, comma separated.
        #[arg(long, value_delimiter = ',')]
        delays: Vec<u16>,
        #[arg(long, default_value_t = DEFAULT_SEED_PHOTONS)]
        seed_photons: f64,
    },
    /// Model predictions, or estimates from a record file, as a JSON report.
    Stats {
        #[arg(long, default_value_t = 1)]
        delay: u32,
        /// Fit source, noise and path parameters to the measured reference values first.
        #[arg(long)]
        calibrate: bool,
        /// Where to save the calibrated configuration.
        #[arg(long)]
        write_config: Option<PathBuf>,
        /// Estimate from this record file instead of the model.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Controls-only record file for background subtraction.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long, default_value_t = estimate::DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = estimate::DEFAULT_BLOCK)]
        block: u64,
    },
    /// Readout and noise over a delay or control-energy grid (CSV).
    Sweep {
        /// `delay` or `pulses.energy_p_nj`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Readout delay for energy sweeps.
        #[arg(long, default_value_t = 1)]
        delay: u32,
    },
    /// Fit a decay series CSV (`T,value,stderr`).
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FitModel::Exponential)]
        model: FitModel,
        /// Free memory-model parameters: amplitude, lifetime, delta, psi2.
        #[arg(long, value_delimiter = ',', default_value = "amplitude,lifetime,delta")]
        free: Vec<String>,
    },
    /// Temporal-multiplexing projection from a plan file (CSV over K).
    Multiplex {
        #[arg(long)]
        plan: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Readout,
    ControlsOnly,
    GenerationOnly,
    Dark,
    Ringdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    Exponential,
    Memory,
}

/// Provenance written next to every output file.
#[derive(Serialize)]
struct OutputManifest<'a> {
    command: &'a str,
    config_hash: String,
    seed: Option<u64>,
    created: u64,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<Value>,
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn load_config(common: &Common) -> Result<ValidatedConfig> {
    let base = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => presets::primary(),
    };
    base.with_overrides(&common.overrides)?.validate()
}

fn write_output(common: &Common, command: &str, cfg: &ValidatedConfig, seed: Option<u64>, body: &str, extra: Option<Value>) -> Result<()> {
    match &common.out {
        Some(path) => {
            io::write_string_atomic(path, body)?;
            let m = OutputManifest {
                command,
                config_hash: cfg.config().hash(),
                seed,
                created: now(),
                version: env!("CARGO_PKG_VERSION"),
                extra,
            };
            let mut s = serde_json::to_string_pretty(&m)?;
            s.push('\n');
            io::write_string_atomic(&io::manifest_path(path), &s)
        }
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty(v: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn validate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let d = cfg.derived();
    let report = json!({
        "valid": true,
        "config_hash": cfg.config().hash(),
        "derived": {
            "tau_ps": d.tau_ps,
            "zeta": d.zeta,
            "survival": d.ringdown_survival,
            "memory_survival": d.memory_survival,
            "lambda_r_nm": d.lambda_r_nm,
        },
    });
    write_output(common, "validate", &cfg, None, &pretty(&report)?, None)
}

fn simulate(common: &Common, mode: Mode, delay: u16, delays: Vec<u16>, seed_photons: f64) -> Result<()> {
    let cfg = load_config(common)?;
    let out = common
        .out
        .as_ref()
        .ok_or_else(|| Error::Config("simulate needs --out".into()))?;
    let seed = common.seed.unwrap_or_else(|| rand::rng().random());
    let mode = match mode {
        Mode::Readout => RunMode::Readout { delay },
        Mode::ControlsOnly => RunMode::ControlsOnly { delay },
        Mode::GenerationOnly => RunMode::GenerationOnly,
        Mode::Dark => RunMode::Dark,
        Mode::Ringdown => RunMode::Ringdown {
            delays: if delays.is_empty() { (0..34).map(|i| 1 + 10 * i).collect() } else { delays },
            seed_photons,
        },
    };
    let format = RecordFormat::from_path(out);
    let mut manifest = None;
    io::write_atomic(out, |w| {
        let mut writer = RecordWriter::new(w, format)?;
        manifest = Some(trialsim::simulate_with(&cfg, seed, common.triggers, &mode, |b| writer.write(b))?);
        Ok(())
    })?;
    let manifest = manifest.expect("simulation ran");
    io::write_manifest(out, &manifest)?;
    print!("{}", pretty(&manifest)?);
    Ok(())
}

fn read_counts(path: &Path, block: u64) -> Result<ClickCounts> {
    let mut counts = ClickCounts::new(block);
    io::read_records_with(path, RecordFormat::from_path(path), |b| {
        counts.extend(b);
        Ok(())
    })?;
    if counts.n_triggers() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(counts)
}

fn estimate_from_records(cfg: &ValidatedConfig, records: &Path, background: Option<&Path>, opts: BootstrapOptions, block: u64) -> Result<Value> {
    let counts = read_counts(records, block)?;
    let clock = io::read_manifest(records).map(|m| m.clock_rate_khz).unwrap_or(cfg.pulses.clock_rate_khz);
    let rates = estimate::estimate_rates(&counts, clock)?;
    let g2 = |k| estimate::estimate_g2(&counts, k, opts).ok();
    let mut report = json!({
        "source": records.display().to_string(),
        "n_triggers": counts.n_triggers(),
        "rates": rates,
        "g2": {
            "xc_hr": g2(G2Kind::CrossHr),
            "xc_hs": g2(G2Kind::CrossHs),
            "ac_heralded": g2(G2Kind::HeraldedAuto),
            "ac_unheralded": g2(G2Kind::UnheraldedAuto),
        },
        "efficiencies": {
            "heralding_probability": estimate::heralding_probability(&counts, opts).ok(),
            "klyshko_eta_h": estimate::klyshko_efficiency(&counts, opts).ok(),
        },
    });
    if let Some(bg) = background {
        let bgc = read_counts(bg, block)?;
        let bg_rates = estimate::estimate_rates(&bgc, clock)?;
        report["background_subtracted_rates"] = serde_json::to_value(rates.subtract(&bg_rates))?;
        report["efficiencies"]["heralding_efficiency_subtracted"] =
            serde_json::to_value(estimate::heralding_efficiency_subtracted(&counts, &bgc, opts).ok())?;
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn stats(
    common: &Common,
    delay: u32,
    calibrate_first: bool,
    write_config: Option<PathBuf>,
    records: Option<PathBuf>,
    background: Option<PathBuf>,
    resamples: usize,
    block: u64,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    let mut calibration: Option<Calibration> = None;
    if calibrate_first {
        let (targets, free) = calibrate::reference_targets();
        let cal = calibrate::calibrate(cfg.config(), &targets, &free, delay)?;
        cfg = cal.config.clone().validate()?;
        if let Some(p) = &write_config {
            io::write_string_atomic(p, &cfg.config().to_json_string())?;
        }
        calibration = Some(cal);
    }
    let seed = common.seed.unwrap_or_else(|| rand::rng().random());
    let report = match records {
        Some(r) => estimate_from_records(&cfg, &r, background.as_deref(), BootstrapOptions { resamples, seed }, block)?,
        None => {
            let p = predict(&cfg, delay)?;
            let o = p.observables;
            json!({
                "delay": delay,
                "rates": {
                    "H": o.rate_h_cps, "S": o.rate_s_cps, "R": o.rate_r_cps,
                    "H&R": o.rate_hr_cps, "H&R1&R2": o.rate_hr1r2_cps,
                },
                "g2": {
                    "xc_hs_raw": o.g2_xc_hs_raw,
                    "xc_hs_subtracted": o.g2_xc_hs_subtracted,
                    "xc_hr": o.g2_xc_hr,
                    "ac_heralded": o.g2_ac_heralded,
                    "noise": o.g2_noise,
                },
                "efficiencies": {
                    "readout": p.routing.readout,
                    "eta_bsfwm": readout::internal_conversion(&cfg)?,
                    "heralding_probability": o.heralding_probability,
                    "heralding_efficiency_subtracted": o.heralding_efficiency_subtracted,
                    "klyshko_eta_h": o.klyshko_eta_h,
                },
            })
        }
    };
    let mut report = report;
    report["config_hash"] = json!(cfg.config().hash());
    if let Some(cal) = &calibration {
        report["residuals"] = serde_json::to_value(&cal.residuals)?;
        report["calibrated"] = serde_json::to_value(&cal.config)?;
    }
    write_output(common, "stats", &cfg, Some(seed), &pretty(&report)?, None)
}

fn sweep(common: &Common, param: &str, from: f64, to: f64, steps: usize, delay: u32) -> Result<()> {
    let cfg = load_config(common)?;
    if steps < 1 {
        return Err(Error::Config("--steps must be ≥ 1".into()));
    }
    let grid: Vec<f64> = (0..steps)
        .map(|i| if steps == 1 { from } else { from + (to - from) * i as f64 / (steps - 1) as f64 })
        .collect();
    let mut csv = String::from("T_or_Ep,survival,eta_conv,total,noise_mean\n");
    let mut row = |x: f64, p: &ReadoutPoint, noise: f64| {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            format_float(x),
            format_float(p.survival),
            format_float(p.eta_conv),
            format_float(p.total),
            format_float(noise)
        ));
    };
    match param {
        "delay" | "T" => {
            let noise = cfg.noise.noise_mean_per_nj * cfg.pulses.energy_p_nj;
            let points = grid
                .iter()
                .map(|&t| {
                    if t < 1.0 {
                        return Err(Error::Config("delays must be ≥ 1".into()));
                    }
                    readout::readout_at(&cfg, t, cfg.pulses.energy_p_nj, cfg.pulses.energy_q_nj)
                })
                .collect::<Result<Vec<_>>>()?;
            for (t, p) in grid.iter().zip(&points) {
                row(*t, p, noise);
            }
        }
        "pulses.energy_p_nj" | "pulses.energy_p" | "energy_p" => {
            let survival = readout::readout_probability(delay.max(1), &cfg)?.survival;
            for s in readout::power_scan(&grid, &cfg, delay)? {
                let total = if delay == 0 { s.eta_conv } else { survival * s.eta_conv };
                let point = ReadoutPoint {
                    delay_cycles: delay as f64,
                    survival: if delay == 0 { 1.0 } else { survival },
                    eta_conv: s.eta_conv,
                    total,
                };
                row(s.energy_p_nj, &point, s.noise_mean);
            }
        }
        other => return Err(Error::Config(format!("cannot sweep '{other}': use delay or pulses.energy_p_nj"))),
    }
    write_output(common, "sweep", &cfg, None, &csv, Some(json!({ "param": param, "from": from, "to": to, "steps": steps })))
}

fn read_series(path: &Path) -> Result<Vec<SeriesPoint>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    if header.len() < 2 || header[0] != "T" || header[1] != "value" || (header.len() == 3 && header[2] != "stderr") || header.len() > 3 {
        return Err(Error::Format("series header must be 'T,value,stderr' or 'T,value'".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("line {}: bad number '{s}'", i + 2)));
        if f.len() != header.len() {
            return Err(Error::Format(format!("line {}: expected {} fields", i + 2, header.len())));
        }
        let stderr = match f.get(2) {
            Some(s) if !s.is_empty() => Some(num(s)?),
            _ => None,
        };
        out.push(SeriesPoint { delay: num(f[0])?, value: num(f[1])?, stderr });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

fn fit_cmd(common: &Common, input: &Path, model: FitModel, free: &[String]) -> Result<()> {
    let cfg = load_config(common)?;
    let series = read_series(input)?;
    let result = match model {
        FitModel::Exponential => fit::fit_exponential(&series)?,
        FitModel::Memory => {
            let free = free.iter().map(|s| MemoryParam::parse(s)).collect::<Result<Vec<_>>>()?;
            let t1 = series.iter().map(|p| p.delay).fold(f64::INFINITY, f64::min);
            let first = series.iter().find(|p| p.delay == t1).map(|p| p.value).unwrap_or(1.0);
            let shape = readout::readout_at(&cfg, t1, cfg.pulses.energy_p_nj, cfg.pulses.energy_q_nj)?.total;
            let guess = MemoryModelGuess::from_config(&cfg, if shape > 0.0 { first / shape } else { 1.0 });
            fit::fit_memory_model(&series, &cfg, &free, guess)?
        }
    };
    write_output(common, "fit", &cfg, None, &pretty(&result)?, Some(json!({ "input": input.display().to_string() })))
}

/// Plan file: any field left out is taken from the configuration.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    #[serde(default = "default_k")]
    k: u32,
    #[serde(default = "default_max_k")]
    max_k: u32,
    #[serde(default = "default_spacing")]
    bin_spacing: u32,
    #[serde(default)]
    switch_latency: u32,
    p_herald: Option<f64>,
    readout_curve: Option<Vec<f64>>,
}

fn default_k() -> u32 {
    LITERATURE_K
}
fn default_max_k() -> u32 {
    100
}
fn default_spacing() -> u32 {
    1
}

fn multiplex_cmd(common: &Common, plan_path: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let text = std::fs::read_to_string(plan_path)?;
    let pf: PlanFile = serde_json::from_str(&text).map_err(|e| Error::Config(format!("plan: {e}")))?;
    let p_herald = match pf.p_herald {
        Some(p) => p,
        None => predict(&cfg, 1)?.observables.rate_h_cps / (cfg.pulses.clock_rate_khz * 1e3),
    };
    let max_k = pf.max_k.max(pf.k).max(LITERATURE_K);
    let plan = match pf.readout_curve {
        Some(curve) => MultiplexPlan { k: pf.k, bin_spacing: pf.bin_spacing, p_herald, readout_curve: curve, switch_latency: pf.switch_latency },
        None => MultiplexPlan::from_config(&cfg, pf.k, max_k, pf.bin_spacing, pf.switch_latency, p_herald)?,
    };
    let chosen = multiplex::multiplex_success(&plan)?;
    let outcomes = multiplex::scan(&plan, pf.max_k.max(pf.k))?;
    let k_star = multiplex::optimal_k(&plan, pf.max_k.max(pf.k))?;
    let at_literature_k = multiplex::multiplex_success(&plan.with_k(LITERATURE_K)).ok();

    let mut csv = String::from("K,p_out,enhancement\n");
    for o in &outcomes {
        csv.push_str(&format!("{},{},{}\n", o.k, format_float(o.p_out), format_float(o.enhancement)));
    }
    let summary = json!({
        "label": "projection: first-success temporal multiplexing into this storage cavity; not a measured result",
        "p_herald": p_herald,
        "bin_spacing": plan.bin_spacing,
        "switch_latency": plan.switch_latency,
        "k": chosen.k,
        "p_out": chosen.p_out,
        "enhancement": chosen.enhancement,
        "optimal_k": k_star,
        "k40": at_literature_k.map(|o| json!({ "p_out": o.p_out, "enhancement": o.enhancement })),
        "literature_context": format!(
            "temporal multiplexing of K={LITERATURE_K} independent sources on another platform reported {LITERATURE_ENHANCEMENT} improvement; shown for scale, not as a target"
        ),
    });
    match &common.out {
        Some(_) => {
            write_output(common, "multiplex", &cfg, None, &csv, Some(summary.clone()))?;
            print!("{}", pretty(&summary)?);
        }
        None => {
            print!("{csv}");
            eprint!("{}", pretty(&summary)?);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let c = &cli.common;
    match cli.command {
        Command::Validate => validate(c),
        Command::Simulate { mode, delay, delays, seed_photons } => simulate(c, mode, delay, delays, seed_photons),
        Command::Stats { delay, calibrate, write_config, records, background, resamples, block } => {
            stats(c, delay, calibrate, write_config, records, background, resamples, block)
        }
        Command::Sweep { param, from, to, steps, delay } => sweep(c, &param, from, to, steps, delay),
        Command::Fit { input, model, free } => fit_cmd(c, &input, model, &free),
        Command::Multiplex { plan } => multiplex_cmd(c, &plan),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, code) = if e.is_config_error() { ("ConfigInvalid", 2) } else { ("RuntimeFailure", 3) };
            let body = json!({ "error": category, "kind": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
