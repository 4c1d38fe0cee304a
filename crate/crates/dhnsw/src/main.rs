use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use dhnsw::bench::{
    build_index, load_meta, load_workload, run_experiment, save_meta, upload_to_target, Target,
};
use dhnsw::config::Settings;
use dhnsw::engine::{read_directory, ComputeEngine, EngineConfig, ExecMode, QueryBatch};
use dhnsw::error::{Error, Result};
use dhnsw::hnsw::VectorRecord;
use dhnsw::memory::{spawn_server, MemoryNode};

#[derive(Parser)]
#[command(
    name = "dhnsw",
    about = "Partitioned HNSW vector search over a remote memory region",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a standalone memory node serving the wire protocol over TCP.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build the index from the configured dataset, upload it, and write the
    /// meta sidecar.
    Build {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the sidecar output path (defaults to `meta_path`).
        #[arg(long)]
        meta_out: Option<PathBuf>,
    },
    /// Execute one query batch against an uploaded index.
    Query {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Inline query vector, comma-separated floats.
        #[arg(long, conflicts_with = "queries")]
        vector: Option<String>,
        /// An .fvecs file of query vectors.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Query at most this many vectors from the file.
        #[arg(long)]
        limit: Option<usize>,
        /// Transport strategy: naive | nodoorbell | full.
        #[arg(long, default_value = "full")]
        mode: String,
    },
    /// Insert one vector into its partition's overflow space.
    Insert {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        id: u64,
        /// Comma-separated floats.
        #[arg(long)]
        vector: String,
    },
    /// Run the full latency/recall/round-trip sweep and emit the report.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the JSON report here (otherwise stdout).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write a CSV projection here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Inspect the remote memory layout.
    Layout {
        #[command(subcommand)]
        action: LayoutAction,
    },
}

#[derive(Subcommand)]
enum LayoutAction {
    /// Print the remote cluster directory in human-readable form.
    Dump {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_settings(path: &Option<PathBuf>) -> Result<Settings> {
    match path {
        Some(p) => Settings::from_file(p),
        None => {
            let mut s = Settings::default();
            if let Ok(addr) = std::env::var(dhnsw::config::ADDRESS_ENV_VAR) {
                if !addr.is_empty() {
                    s.address = addr;
                }
            }
            Ok(s)
        }
    }
}

fn parse_vector(text: &str) -> Result<Vec<f32>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f32>()
                .map_err(|_| Error::Config(format!("'{s}' is not a float")))
        })
        .collect()
}

fn tcp_target(settings: &Settings) -> Result<Target> {
    if settings.backend != "tcp" {
        return Err(Error::Config(
            "this command talks to a running memory node; set backend = tcp".into(),
        ));
    }
    Ok(Target::Tcp(settings.address.clone()))
}

fn connect_engine(settings: &Settings, target: &Target) -> Result<ComputeEngine> {
    let meta = load_meta(&settings.meta_path)?;
    let config = EngineConfig {
        ef_meta: settings.ef_meta_resolved(),
        cache_clusters: settings.cache_clusters_resolved(meta.partition_count()),
    };
    ComputeEngine::connect(meta, target.connect(settings)?, config)
}

fn cmd_serve(settings: &Settings) -> Result<()> {
    let node = MemoryNode::new();
    let capacity = settings.region_mb * 1024 * 1024;
    node.register(capacity)?;
    let handle = spawn_server(node, &settings.address)?;
    println!(
        "memory node serving {} bytes on {}",
        capacity,
        handle.addr()
    );
    loop {
        std::thread::park();
    }
}

fn cmd_build(settings: &Settings, meta_out: &Option<PathBuf>) -> Result<()> {
    let workload = load_workload(settings)?;
    println!(
        "building index over {} vectors (dim {}), {} representatives",
        workload.base.len(),
        workload.base.first().map(|r| r.values.len()).unwrap_or(0),
        settings.representatives
    );
    let built = build_index(&workload.base, settings)?;
    let target = match settings.backend.as_str() {
        "tcp" => Target::Tcp(settings.address.clone()),
        _ => Target::Inproc(MemoryNode::new()), // dry-run upload for validation
    };
    let directory = upload_to_target(&built, &target, settings)?;
    let sidecar = meta_out
        .clone()
        .unwrap_or_else(|| settings.meta_path.clone());
    save_meta(&built.meta, &sidecar)?;
    println!(
        "uploaded {} clusters in {} groups, region length {} bytes, directory version {}",
        directory.num_clusters(),
        directory.num_groups,
        directory.region_len(),
        directory.version
    );
    if settings.backend != "tcp" {
        println!("backend = inproc: upload was a dry run into a scratch region");
    }
    println!("meta sidecar written to {}", sidecar.display());
    Ok(())
}

fn cmd_query(
    settings: &Settings,
    vector: &Option<String>,
    queries: &Option<PathBuf>,
    limit: Option<usize>,
    mode: &str,
) -> Result<()> {
    let mode = ExecMode::from_str(mode)?;
    let target = tcp_target(settings)?;
    let mut engine = connect_engine(settings, &target)?;
    let query_vectors = match (vector, queries) {
        (Some(text), None) => vec![parse_vector(text)?],
        (None, Some(path)) => {
            let mut qs = dhnsw::dataset::load_fvecs(path)?;
            if let Some(n) = limit {
                qs.truncate(n);
            }
            qs
        }
        _ => {
            return Err(Error::Config(
                "provide exactly one of --vector or --queries".into(),
            ))
        }
    };
    let batch = QueryBatch {
        queries: query_vectors,
        k: settings.k,
        probes: settings.b,
        ef_search: settings.ef_search,
    };
    let out = engine.execute(mode, &batch)?;
    for (qi, hits) in out.results.iter().enumerate() {
        println!("query {qi}:");
        for (rank, (id, dist)) in hits.iter().enumerate() {
            println!("  {:>2}. id {:<12} distance {:.6}", rank + 1, id, dist);
        }
    }
    println!(
        "round trips {} | bytes read {} | doorbell ops {}",
        out.stats.round_trips, out.stats.bytes_read, out.stats.doorbell_ops
    );
    Ok(())
}

fn cmd_insert(settings: &Settings, id: u64, vector: &str) -> Result<()> {
    let target = tcp_target(settings)?;
    let mut engine = connect_engine(settings, &target)?;
    let record = VectorRecord::new(id, parse_vector(vector)?);
    let partition = engine.insert_vector(&record)?;
    println!("inserted id {id} into partition {partition}");
    Ok(())
}

fn cmd_bench(
    settings: &Settings,
    report_path: &Option<PathBuf>,
    csv_path: &Option<PathBuf>,
) -> Result<()> {
    let workload = load_workload(settings)?;
    let built = build_index(&workload.base, settings)?;
    let target = Target::from_settings(settings)?;
    upload_to_target(&built, &target, settings)?;
    eprintln!(
        "index uploaded: {} vectors, {} partitions; running {} modes x {} ef points over {} queries",
        workload.base.len(),
        built.meta.partition_count(),
        settings.modes.len(),
        settings.ef_sweep.len(),
        workload.queries.len()
    );
    let out = run_experiment(
        settings,
        &target,
        &built.meta,
        &workload.base,
        &workload.queries,
        workload.truth.clone(),
    )?;

    let json = out.report.to_json();
    let report_path = report_path.clone().or_else(|| settings.report_path.clone());
    match &report_path {
        Some(p) => {
            std::fs::write(p, &json)?;
            eprintln!("report written to {}", p.display());
        }
        None => println!("{json}"),
    }
    let csv_path = csv_path.clone().or_else(|| settings.csv_path.clone());
    if let Some(p) = &csv_path {
        let file = std::fs::File::create(p)?;
        out.report.write_csv(file)?;
        eprintln!("csv written to {}", p.display());
    }
    if let Some(p) = &settings.results_path {
        let dump = serde_json::to_string(&out.runs).expect("runs serialize");
        std::fs::write(p, dump)?;
        eprintln!("per-query results written to {}", p.display());
    }
    Ok(())
}

fn cmd_layout_dump(settings: &Settings) -> Result<()> {
    let target = tcp_target(settings)?;
    let mut transport = target.connect(settings)?;
    let directory = read_directory(&mut transport)?;
    println!("{}", directory.dump());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Serve { config } => cmd_serve(&load_settings(config)?),
        Command::Build { config, meta_out } => cmd_build(&load_settings(config)?, meta_out),
        Command::Query {
            config,
            vector,
            queries,
            limit,
            mode,
        } => cmd_query(&load_settings(config)?, vector, queries, *limit, mode),
        Command::Insert { config, id, vector } => cmd_insert(&load_settings(config)?, *id, vector),
        Command::Bench {
            config,
            report,
            csv,
        } => cmd_bench(&load_settings(config)?, report, csv),
        Command::Layout { action } => match action {
            LayoutAction::Dump { config } => cmd_layout_dump(&load_settings(config)?),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.category().exit_code() as u8)
        }
    }
}
