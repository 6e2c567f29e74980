//! `spdr`: simulate, solve, classify and verify diffusions on star graphs
//! from a JSON configuration.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use spider_core::config::{RunConfig, Source};
use spider_core::dirichlet::{expected_exit_time, solve_ball};
use spider_core::timechange::{sticky_compose, Synthesizer};
use spider_core::verify::{run_suite, write_reports, Suite, SuiteSettings};
use spider_core::{DiffusionSpec, EdgeId, Error, Path, Seed};

/// Exit code for a failed verification.
pub const EXIT_FAILED: i32 = 1;
/// Exit code for bad arguments, configs and runtime errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "spdr", version, about = "Diffusions on star graphs as time-changed Walsh Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "SPDR_THREADS")]
    threads: Option<usize>,
    /// Overrides the configured time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Overrides the configured number of paths.
    #[arg(long)]
    paths: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Binary,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Smoke,
    Full,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesise paths of the configured diffusion.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
    },
    /// Build sticky paths by composing non-sticky paths with the vertex clock.
    Sticky {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
    },
    /// Solve the ball Dirichlet problem and write per-edge tables.
    Dirichlet {
        #[command(flatten)]
        common: Common,
    },
    /// Classify the far boundary of every edge.
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Run the verification suite and emit a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "smoke")]
        suite: SuiteArg,
    },
    /// Write the normalized configuration and its hash.
    Export {
        #[command(flatten)]
        common: Common,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

struct Loaded {
    cfg: RunConfig,
    spec: DiffusionSpec,
    hash: String,
}

fn load(common: &Common) -> Result<Loaded, Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.simulation.seed = s;
    }
    if let Some(dt) = common.dt {
        cfg.simulation.dt = dt;
        cfg.simulation.h = None;
    }
    if let Some(n) = common.paths {
        cfg.simulation.n_paths = n;
    }
    let cfg = cfg.normalize();
    let spec = cfg.spec()?;
    let hash = cfg.hash();
    Ok(Loaded { cfg, spec, hash })
}

fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, Error> {
    match threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

fn out_dir(common: &Common) -> Result<Option<PathBuf>, Error> {
    if let Some(d) = &common.out {
        fs::create_dir_all(d)?;
    }
    Ok(common.out.clone())
}

fn dispatch(cmd: Command) -> Result<i32, Error> {
    match cmd {
        Command::Simulate { common, format } => simulate(&common, format, false),
        Command::Sticky { common, format } => simulate(&common, format, true),
        Command::Dirichlet { common } => dirichlet(&common),
        Command::Classify { common } => classify(&common),
        Command::Verify { common, suite } => verify(&common, suite),
        Command::Export { common } => export(&common),
    }
}

fn simulate(common: &Common, format: Format, compose: bool) -> Result<i32, Error> {
    let l = load(common)?;
    let sim = &l.cfg.simulation;
    let settings = l.cfg.synthesis();
    let seed = l.cfg.seed();
    let x0 = l.cfg.start();
    let paths: Vec<Path> = if compose {
        let mut base_cfg = l.cfg.clone();
        base_cfg.rho = 0.0;
        let base_spec = base_cfg.spec()?;
        let syn = Synthesizer::new(&base_spec, settings)?;
        with_pool(common.threads, || {
            (0..sim.n_paths as u64)
                .into_par_iter()
                .map(|i| {
                    let base = syn.path(x0, sim.horizon, seed.path(i))?;
                    sticky_compose(&base, &l.spec, settings.h)
                })
                .collect::<Result<Vec<_>, Error>>()
        })??
    } else {
        let syn = Synthesizer::new(&l.spec, settings)?;
        with_pool(common.threads, || {
            (0..sim.n_paths as u64)
                .into_par_iter()
                .map(|i| syn.path(x0, sim.horizon, seed.path(i)))
                .collect::<Result<Vec<_>, Error>>()
        })??
    };
    let dir = out_dir(common)?.unwrap_or_else(|| PathBuf::from("."));
    let mut files = Vec::new();
    for (i, mut p) in paths.into_iter().enumerate() {
        p.meta.spec_hash = l.hash.clone();
        let stem = format!("path_{i:05}");
        if matches!(format, Format::Csv | Format::Both) {
            let name = format!("{stem}.csv");
            p.write_csv(BufWriter::new(File::create(dir.join(&name))?))?;
            files.push(name);
        }
        if matches!(format, Format::Binary | Format::Both) {
            let name = format!("{stem}.bin");
            p.write_binary(BufWriter::new(File::create(dir.join(&name))?))?;
            files.push(name);
        }
    }
    let manifest = json!({
        "config_hash": l.hash,
        "spec_hash": l.spec.hash(),
        "seed": sim.seed,
        "n_paths": sim.n_paths,
        "dt": sim.dt,
        "h": settings.h,
        "horizon": sim.horizon,
        "sticky_compose": compose,
        "files": files,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!("wrote {} paths to {}", sim.n_paths, dir.display());
    Ok(0)
}

fn dirichlet(common: &Common) -> Result<i32, Error> {
    let l = load(common)?;
    let (delta, source) = match &l.cfg.dirichlet {
        Some(d) => (d.delta, d.source),
        None => ((0.5 * l.spec.graph().min_length()).min(1.0), Source::One),
    };
    let sol = match source {
        Source::One => expected_exit_time(&l.spec, delta)?,
        Source::Radius => solve_ball(&l.spec, delta, |p| p.radius())?,
    };
    let summary = json!({
        "config_hash": l.hash,
        "seed": l.cfg.simulation.seed,
        "delta": delta,
        "source": source,
        "vertex_value": sol.vertex_value,
        "gluing_residual": sol.gluing_residual(),
    });
    if let Some(dir) = out_dir(common)? {
        let mut w = BufWriter::new(File::create(dir.join("dirichlet.csv"))?);
        writeln!(w, "# config_hash={} seed={}", l.hash, l.cfg.simulation.seed)?;
        sol.write_csv(&mut w)?;
        w.flush()?;
        write_json(&dir.join("dirichlet.json"), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(0)
}

fn classify(common: &Common) -> Result<i32, Error> {
    let l = load(common)?;
    let mut rows = Vec::new();
    for e in l.spec.graph().edges() {
        let b = l.spec.boundary_integrals(e, None)?;
        rows.push((e, l.spec.graph().length(e), b.class(), b.i1, b.i2));
    }
    let fd = rows.iter().all(|r| r.2 == spider_core::measure::BoundaryClass::Natural);
    let fmt = |g: spider_core::measure::Growth| match g {
        spider_core::measure::Growth::Finite(v) => format!("{v}"),
        spider_core::measure::Growth::Divergent => "inf".to_string(),
    };
    let mut table = format!("# config_hash={} seed={}\nedge,length,class,i1,i2\n", l.hash, l.cfg.simulation.seed);
    for (e, len, class, i1, i2) in &rows {
        let len = if len.is_infinite() { "inf".to_string() } else { len.to_string() };
        table.push_str(&format!("{},{len},{class},{},{}\n", edge_name(*e), fmt(*i1), fmt(*i2)));
    }
    if let Some(dir) = out_dir(common)? {
        fs::write(dir.join("classify.csv"), &table)?;
    }
    print!("{table}");
    println!("feller_dynkin={fd}");
    Ok(0)
}

fn edge_name(e: EdgeId) -> String {
    format!("e{}", e.index() + 1)
}

fn verify(common: &Common, suite: SuiteArg) -> Result<i32, Error> {
    let l = load(common)?;
    let suite = match suite {
        SuiteArg::Smoke => Suite::Smoke,
        SuiteArg::Full => Suite::Full,
    };
    let mut st = SuiteSettings::defaults(suite);
    st.horizon = l.cfg.simulation.horizon;
    if let Some(dt) = common.dt {
        st.dt = dt;
    }
    if let Some(n) = common.paths {
        st.n_paths = n;
    }
    st.seed = Seed::new(common.seed.unwrap_or(l.cfg.simulation.seed));
    let mut reports = with_pool(common.threads, || run_suite(&l.spec, suite, st))??;
    for r in &mut reports {
        r.meta.insert("config_hash".into(), l.hash.clone().into());
    }
    if let Some(dir) = out_dir(common)? {
        write_reports(&reports, BufWriter::new(File::create(dir.join("report.json"))?))?;
    }
    write_reports(&reports, io::stdout().lock())?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        Ok(EXIT_FAILED)
    }
}

fn export(common: &Common) -> Result<i32, Error> {
    let l = load(common)?;
    let text = l.cfg.to_json();
    if let Some(dir) = out_dir(common)? {
        fs::write(dir.join("config.normalized.json"), format!("{text}\n"))?;
        fs::write(dir.join("config.hash"), format!("{}\n", l.hash))?;
    }
    println!("{text}");
    eprintln!("config_hash={}", l.hash);
    Ok(0)
}

fn write_json(path: &FsPath, v: &serde_json::Value) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    Ok(())
}
