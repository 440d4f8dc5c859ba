//! Command-line front end: formula sweeps to CSV, single-config
//! verification, and placement-plan inspection.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::model::SystemConfig;
use crate::rational::Rational;
use crate::scheme_smallmem::RegimeError;
use crate::scheme_three::{self, ThreeUserError};
use crate::verifier::{self, DemandPolicy, SchemeKind, SweepRow};

pub const SEED_ENV: &str = "HETCACHE_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "hetcache",
    about = "Coded-placement caching for unequal cache sizes: exact loads, simulation, verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate coded and uncoded delivery loads over a parameter grid.
    LoadSweep(SweepArgs),
    /// Simulate one configuration end to end and check every invariant.
    Verify(ConfigArgs),
    /// Print the subfile plan and per-user cache composition.
    Plan(ConfigArgs),
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long = "K", short = 'K')]
    pub k: usize,
    /// File count; exclusive with --N-range.
    #[arg(long = "N", short = 'N')]
    pub n: Option<usize>,
    /// File-count range start:end:step (inclusive), e.g. 11:201:10.
    #[arg(long = "N-range", value_name = "START:END:STEP")]
    pub n_range: Option<String>,
    /// Geometric cache profile m_k = alpha * m_{k+1}; exclusive with --alpha-range.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Alpha range start:end:step as exact decimals, e.g. 0.3:1.0:0.05.
    #[arg(long, value_name = "START:END:STEP")]
    pub alpha_range: Option<String>,
    /// Largest normalized cache size m_K (used with --alpha/--alpha-range).
    #[arg(long = "mK")]
    pub m_k: Option<String>,
    /// Explicit cache sizes, exclusive with the alpha parameterization.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<String>>,
    /// Also simulate every grid point.
    #[arg(long)]
    pub verify_each: bool,
    /// Emit 12-significant-digit decimals instead of exact fractions.
    #[arg(long)]
    pub decimal: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Field exponent r (3, 8 or 16).
    #[arg(long, default_value_t = 8)]
    pub field: u32,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[arg(long = "K", short = 'K')]
    pub k: Option<usize>,
    #[arg(long = "N", short = 'N')]
    pub n: Option<usize>,
    /// Cache sizes as exact fractions or decimals, e.g. 9/20,1/2,0.55.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<String>>,
    /// Key=value config file providing K, N, m, seed, r.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Demand policy: auto (exhaustive up to 10^5, sampled beyond) or distinct.
    #[arg(long, default_value = "auto")]
    pub policy: String,
    #[arg(long, default_value_t = 8)]
    pub field: u32,
}

/// Process exit codes: 1 = verification failed, 2 = configuration outside
/// the schemes' scope (or usage error, via clap's own exit).
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::LoadSweep(args) => run_sweep(args),
        Command::Verify(args) => run_verify(args),
        Command::Plan(args) => run_plan(args),
    }
}

fn seed_from(opt: Option<u64>) -> u64 {
    opt.or_else(|| {
        std::env::var(SEED_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(1)
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    Rational::from_str(s).map_err(|e| e.to_string())
}

fn parse_range(s: &str) -> Result<(Rational, Rational, Rational), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("range `{s}` must be START:END:STEP"));
    }
    Ok((
        parse_rational(parts[0])?,
        parse_rational(parts[1])?,
        parse_rational(parts[2])?,
    ))
}

/// m_k = alpha^(K-k) * m_K, exact.
fn geometric_profile(k: usize, alpha: &Rational, m_k: &Rational) -> Vec<Rational> {
    let mut m = vec![Rational::zero(); k];
    let mut cur = m_k.clone();
    for i in (0..k).rev() {
        m[i] = cur.clone();
        cur = &cur * alpha;
    }
    m
}

fn format_value(x: &Rational, decimal: bool) -> String {
    if decimal {
        format!("{:.11e}", x.to_f64())
    } else {
        x.to_string()
    }
}

fn emit_csv(rows: &[SweepRow], k: usize, decimal: bool, out: Option<&PathBuf>) -> i32 {
    let mut text = String::new();
    let ms: Vec<String> = (1..=k).map(|i| format!("m{i}")).collect();
    text.push_str(&format!("param,{},region,R_coded,R_uncoded,gap\n", ms.join(",")));
    for row in rows {
        let m_cols: Vec<String> = row.m.iter().map(|x| format_value(x, decimal)).collect();
        if let Some(err) = &row.error {
            text.push_str(&format!(
                "{},{},error: {err},,,\n",
                format_value(&row.param, decimal),
                m_cols.join(",")
            ));
            continue;
        }
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_value(&row.param, decimal),
            m_cols.join(","),
            row.region,
            format_value(&row.coded, decimal),
            format_value(&row.uncoded, decimal),
            format_value(&row.gap, decimal),
        ));
    }
    match out {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                eprintln!("cannot write {}: {e}", path.display());
                return 2;
            }
            0
        }
        None => {
            print!("{text}");
            let _ = std::io::stdout().flush();
            0
        }
    }
}

fn run_sweep(args: SweepArgs) -> i32 {
    let seed = seed_from(args.seed);
    let k = args.k;
    let with_m = |m: Vec<Rational>, n: usize| -> Result<SystemConfig, String> {
        SystemConfig::new(n, m, args.field).map_err(|e| e.to_string())
    };

    let build = || -> Result<Vec<(Rational, SystemConfig)>, String> {
        let mut out = Vec::new();
        if let Some(range) = &args.n_range {
            let (start, end, step) = parse_range(range)?;
            let alpha = parse_rational(args.alpha.as_deref().ok_or("`--N-range` needs --alpha")?)?;
            let mk = parse_rational(args.m_k.as_deref().ok_or("`--N-range` needs --mK")?)?;
            let mut n = start.clone();
            while n <= end {
                let n_int = n.to_f64() as usize;
                out.push((
                    Rational::int(n_int as i64),
                    with_m(geometric_profile(k, &alpha, &mk), n_int)?,
                ));
                n += &step;
            }
            return Ok(out);
        }
        let n = args.n.ok_or("need --N or --N-range")?;
        if let Some(range) = &args.alpha_range {
            let (start, end, step) = parse_range(range)?;
            let mk = parse_rational(args.m_k.as_deref().ok_or("`--alpha-range` needs --mK")?)?;
            let mut alpha = start.clone();
            while alpha <= end {
                out.push((
                    alpha.clone(),
                    with_m(geometric_profile(k, &alpha, &mk), n)?,
                ));
                alpha += &step;
            }
            return Ok(out);
        }
        if let Some(alpha) = &args.alpha {
            let alpha = parse_rational(alpha)?;
            let mk = parse_rational(args.m_k.as_deref().ok_or("`--alpha` needs --mK")?)?;
            out.push((alpha.clone(), with_m(geometric_profile(k, &alpha, &mk), n)?));
            return Ok(out);
        }
        if let Some(ms) = &args.m {
            let m: Vec<Rational> = ms
                .iter()
                .map(|s| parse_rational(s))
                .collect::<Result<_, _>>()?;
            if m.len() != k {
                return Err(format!("expected {k} cache sizes, got {}", m.len()));
            }
            out.push((Rational::zero(), with_m(m, n)?));
            return Ok(out);
        }
        Err("need one of --m, --alpha or --alpha-range".into())
    };
    let grid = match build() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let rows = verifier::sweep(&grid, args.verify_each, seed);
    if args.verify_each && rows.iter().any(|r| r.verified == Some(false)) {
        emit_csv(&rows, k, args.decimal, args.out.as_ref());
        eprintln!("error: some sweep points failed verification");
        return 1;
    }
    emit_csv(&rows, k, args.decimal, args.out.as_ref())
}

struct ResolvedConfig {
    cfg: SystemConfig,
    seed: u64,
}

fn resolve_config(args: &ConfigArgs) -> Result<ResolvedConfig, String> {
    let mut k = args.k;
    let mut n = args.n;
    let mut m_strings: Option<Vec<String>> = args.m.clone();
    let mut seed = args.seed;
    let mut r = args.field;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("bad config line `{line}`"))?;
            let value = value.trim();
            match key.trim() {
                "K" | "k" => k = Some(value.parse().map_err(|_| "bad K")?),
                "N" | "n" => n = Some(value.parse().map_err(|_| "bad N")?),
                "m" => {
                    m_strings = Some(value.split(',').map(|s| s.trim().to_string()).collect())
                }
                "seed" => seed = Some(value.parse().map_err(|_| "bad seed")?),
                "r" => r = value.parse().map_err(|_| "bad r")?,
                other => return Err(format!("unknown config key `{other}`")),
            }
        }
    }
    let m_strings = m_strings.ok_or("need --m or a config file with m=")?;
    let m: Vec<Rational> = m_strings
        .iter()
        .map(|s| parse_rational(s))
        .collect::<Result<_, _>>()?;
    if let Some(k) = k {
        if k != m.len() {
            return Err(format!("--K {k} disagrees with {} cache sizes", m.len()));
        }
    }
    let n = n.ok_or("need --N or a config file with N=")?;
    let cfg = SystemConfig::new(n, m, r).map_err(|e| e.to_string())?;
    Ok(ResolvedConfig {
        cfg,
        seed: seed_from(seed),
    })
}

fn scheme_for(cfg: &SystemConfig) -> SchemeKind {
    if cfg.k == 3 {
        SchemeKind::ThreeUser
    } else {
        SchemeKind::SmallMemory
    }
}

fn out_of_scope(e: &verifier::VerifyError) -> bool {
    matches!(
        e,
        verifier::VerifyError::Three(
            ThreeUserError::OutOfScheme
                | ThreeUserError::NeedAtLeastFourFiles
                | ThreeUserError::Unachievable
        ) | verifier::VerifyError::Regime(
            RegimeError::OutOfRegime { .. } | RegimeError::BadDimensions { .. }
        )
    )
}

fn run_verify(args: ConfigArgs) -> i32 {
    let resolved = match resolve_config(&args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let policy = match args.policy.as_str() {
        "auto" => DemandPolicy::Auto,
        "distinct" => DemandPolicy::DistinctOnly,
        other => {
            eprintln!("error: unknown policy `{other}`");
            return 2;
        }
    };
    let cfg = &resolved.cfg;
    let scheme = scheme_for(cfg);
    let report = match verifier::verify_config(cfg, scheme, policy, resolved.seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return if out_of_scope(&e) { 2 } else { 1 };
        }
    };
    let m_list: Vec<String> = report.m.iter().map(|x| x.to_string()).collect();
    println!("config: K={} N={} m=[{}] seed={}", report.k, report.n, m_list.join(", "), resolved.seed);
    println!("regime: {}", report.regime);
    println!("R={} (uncoded {})", report.formula_coded, report.formula_uncoded);
    println!("F={} demands={} completion-pieces={}", report.f_used, report.demands_run, report.completion_total);
    match &report.distinct_load {
        Some(load) => println!("measured distinct-demand load: {load}"),
        None => println!("measured distinct-demand load: (no distinct demand in policy)"),
    }
    println!(
        "checks: partition={} budget-within={} budget-exact={:?}",
        report.partition_ok, report.budget_within, report.budget_exact
    );
    let pass = report.pass();
    if !pass {
        for failure in report.failures.iter().take(10) {
            println!("failure: {failure}");
        }
        if report.failures.len() > 10 {
            println!("... {} failures total", report.failures.len());
        }
    }
    // machine-readable summary row (sweep CSV columns plus pass flag)
    println!(
        "csv: 0,{},{},{},{},{},{}",
        m_list.join(","),
        report.regime.replace("region ", ""),
        report.formula_coded,
        report.formula_uncoded,
        &report.formula_uncoded - &report.formula_coded,
        if pass { "pass" } else { "fail" }
    );
    i32::from(!pass)
}

fn run_plan(args: ConfigArgs) -> i32 {
    let resolved = match resolve_config(&args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cfg = &resolved.cfg;
    let spec = if cfg.k == 3 {
        match scheme_three::place_three(cfg) {
            Ok(plan) => {
                println!("region: {}", plan.region);
                if plan.components.len() > 1 {
                    println!("components:");
                    for c in &plan.components {
                        let ms: Vec<String> = c.m.iter().map(|x| x.to_string()).collect();
                        println!("  weight {} at m=[{}] via {:?}", c.weight, ms.join(", "), c.kind);
                    }
                }
                plan.spec
            }
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    } else {
        match crate::scheme_smallmem::place_small_mem(cfg) {
            Ok(spec) => {
                println!("regime: small-memory");
                spec
            }
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    };
    let nonzero = spec
        .plan
        .order
        .iter()
        .filter(|t| !spec.plan.size[*t].is_zero())
        .count();
    println!("subfiles ({nonzero} nonzero of {} planned):", spec.plan.order.len());
    for tag in &spec.plan.order {
        let size = &spec.plan.size[tag];
        if !size.is_zero() {
            println!("  {tag}: {size}");
        }
    }
    println!("min F: {}", spec.plan.min_f());
    for (user, cache) in spec.caches.iter().enumerate() {
        let uncoded: Vec<String> = cache
            .uncoded
            .iter()
            .filter(|t| !spec.plan.size[*t].is_zero())
            .cloned()
            .collect();
        let coded: Vec<String> = cache
            .families
            .iter()
            .filter(|f| !spec.plan.size[&f.tag].is_zero())
            .map(|f| format!("{}(j={})", f.tag, f.deficiency))
            .collect();
        let used = cache.size(&spec.plan, cfg.n).expect("tags resolve");
        println!(
            "user {}: stores {} of budget {} | uncoded [{}] | coded [{}]",
            user + 1,
            used,
            Rational::int(cfg.n as i64) * cfg.m[user].clone(),
            uncoded.join(", "),
            coded.join(", ")
        );
    }
    0
}
