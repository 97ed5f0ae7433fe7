use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use cmx::engine::{evaluate, QueryError};
use cmx::service::{self, AppState, DEFAULT_MAX_UPLOAD_BYTES, DEFAULT_PORT};
use cmx::spec::{parse_spec, Violation};
use cmx::store::{load_dataset_dir, write_dataset_dir, DatasetHandle};
use cmx::view::{to_csv, to_json, to_table};
use cmx::{ingest, Dataset};

const EXIT_INVALID: u8 = 1;
const EXIT_ZERO_MASS: u8 = 2;

#[derive(Parser)]
#[command(name = "cmx", version, about = "Generalized confusion matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a schema and prediction log and write a dataset directory.
    Ingest {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a spec against a dataset directory.
    Query {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Run the HTTP service on 127.0.0.1.
    Serve {
        #[arg(long, env = "CMX_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long, env = "CMX_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, env = "CMX_MAX_UPLOAD_BYTES", default_value_t = DEFAULT_MAX_UPLOAD_BYTES)]
        max_upload_bytes: usize,
    },
}

struct Failure {
    code: u8,
    lines: Vec<String>,
}

impl Failure {
    fn new(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            lines: vec![message.into()],
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new(format!("{}: {e}", path.display())))
}

fn plural(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

fn summary(ds: &Dataset) -> String {
    let dims: Vec<String> = ds
        .schema()
        .iter()
        .map(|d| format!("{}: {}", d.name(), plural(d.classes().len(), "class", "classes")))
        .collect();
    format!(
        "{}, {} ({})",
        plural(ds.len(), "record", "records"),
        plural(dims.len(), "dimension", "dimensions"),
        dims.join(", ")
    )
}

fn run_ingest(schema: &Path, records: &Path, out: &Path) -> Result<(), Failure> {
    let schema_bytes = read(schema)?;
    let records_bytes = read(records)?;
    let ds = ingest(&schema_bytes, &records_bytes).map_err(|e| Failure {
        code: EXIT_INVALID,
        lines: e.violations(),
    })?;
    let id = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let name = records
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| id.clone());
    let handle = DatasetHandle::for_dataset(id, name, &ds);
    write_dataset_dir(out, &ds, &handle).map_err(|e| Failure::new(e.to_string()))?;
    println!("{}", summary(&ds));
    Ok(())
}

fn violation_lines(violations: &[Violation]) -> Vec<String> {
    violations.iter().map(|v| format!("{}: {v}", v.kind())).collect()
}

fn run_query(data: &Path, spec_path: &Path, format: Format) -> Result<(), Failure> {
    let (ds, _) = load_dataset_dir(data).map_err(|e| Failure::new(e.to_string()))?;
    let text = read(spec_path)?;
    let spec = parse_spec(&text).map_err(|e| Failure {
        code: EXIT_INVALID,
        lines: violation_lines(&[Violation::from(e)]),
    })?;
    let view = evaluate(&ds, &spec).map_err(|e| match e {
        QueryError::Invalid(v) => Failure {
            code: EXIT_INVALID,
            lines: violation_lines(&v),
        },
        QueryError::ZeroMass => Failure {
            code: EXIT_ZERO_MASS,
            lines: vec![e.to_string()],
        },
        other => Failure::new(other.to_string()),
    })?;
    let output = match format {
        Format::Json => to_json(&view, &spec),
        Format::Csv => to_csv(&view).map_err(|e| Failure::new(e.to_string()))?,
        Format::Table => to_table(&view),
    };
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(output.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| Failure::new(e.to_string()))
}

fn run_serve(data_dir: &Path, port: u16, max_upload_bytes: usize) -> Result<(), Failure> {
    if !data_dir.is_dir() {
        return Err(Failure::new(format!("{}: not a directory", data_dir.display())));
    }
    let state = AppState::open(data_dir).map_err(|e| Failure::new(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(e.to_string()))?;
    runtime.block_on(async {
        let listener = service::bind(port)
            .await
            .map_err(|e| Failure::new(format!("cannot listen on port {port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::new(e.to_string()))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        service::serve(listener, Arc::new(state), max_upload_bytes)
            .await
            .map_err(|e| Failure::new(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Ingest {
            schema,
            records,
            out,
        } => run_ingest(schema, records, out),
        Command::Query { data, spec, format } => run_query(data, spec, *format),
        Command::Serve {
            data_dir,
            port,
            max_upload_bytes,
        } => run_serve(data_dir, *port, *max_upload_bytes),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            for line in failure.lines {
                eprintln!("cmx: {line}");
            }
            ExitCode::from(failure.code)
        }
    }
}
