use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use provdb::frontend::{demo, Catalog, QueryOptions, QueryOutput};
use provdb::probability::Method;
use provdb::{GateId, RelationSchema};

#[derive(Parser)]
#[command(
    name = "provdb",
    version,
    about = "Provenance-aware relational queries"
)]
struct Cli {
    /// Catalog directory.
    #[arg(long, global = true, default_value = ".")]
    catalog: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create an empty catalog.
    Init { dir: PathBuf },
    /// Add a table from a CSV file.
    Load {
        table: String,
        csv: PathBuf,
        /// Column declarations, e.g. `id:int,name:text`.
        #[arg(long)]
        schema: String,
    },
    /// Give every tuple of a table its own provenance token.
    AddProvenance {
        table: String,
        /// Name of the token column.
        #[arg(long)]
        column: Option<String>,
        /// Seed for new token ids.
        #[arg(long, hide = true)]
        seed: Option<u64>,
    },
    /// Attach probabilities to a table's tokens.
    SetProb(SetProb),
    /// Evaluate a query file (`-` for standard input).
    Query(QueryArgs),
    /// Inspect the provenance circuit.
    Circuit {
        #[command(subcommand)]
        command: CircuitCommand,
    },
    /// Run a built-in example.
    Demo {
        #[arg(value_enum)]
        name: DemoName,
        /// Seed for token ids.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["column", "token", "all"])))]
struct SetProb {
    table: String,
    /// Numeric column holding each row's probability.
    #[arg(long)]
    column: Option<String>,
    /// A single token and its probability.
    #[arg(long, num_args = 2, value_names = ["UUID", "P"])]
    token: Option<Vec<String>>,
    /// One probability for every token.
    #[arg(long)]
    all: Option<f64>,
}

#[derive(Args)]
struct QueryArgs {
    file: String,
    #[arg(long, value_enum)]
    semiring: Option<SemiringName>,
    /// Column whose values label tokens in the output.
    #[arg(long)]
    mapping: Option<String>,
    /// Compute each output tuple's probability.
    #[arg(long)]
    prob: bool,
    #[arg(long, value_enum, default_value = "auto", requires = "prob")]
    method: MethodName,
    #[arg(long, requires = "prob")]
    samples: Option<u64>,
    /// Sampler seed for the Monte Carlo method.
    #[arg(long, requires = "prob")]
    seed: Option<u64>,
    /// Print the rewritten query first.
    #[arg(long)]
    explain: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Subcommand)]
enum CircuitCommand {
    /// Gate counts by kind.
    Stats,
    /// Graphviz rendering of the circuit below a gate.
    ExportDot { root: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoName {
    Personnel,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemiringName {
    Why,
    Counting,
    Formula,
    Boolean,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodName {
    Auto,
    Readonce,
    Treedec,
    Wmc,
    Enumerate,
    Montecarlo,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn open(cli: &Cli) -> Result<Catalog> {
    open_seeded(cli, None)
}

fn open_seeded(cli: &Cli, seed: Option<u64>) -> Result<Catalog> {
    Catalog::open_with(&cli.catalog, seed)
        .with_context(|| format!("opening catalog {}", cli.catalog.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::Init { dir } => {
            Catalog::init(dir)?;
            writeln!(out, "initialized catalog in {}", dir.display())?;
        }
        Command::Load { table, csv, schema } => {
            let Some(decl) = RelationSchema::parse_decl(schema) else {
                bail!("bad schema declaration `{schema}`");
            };
            let mut cat = open(&cli)?;
            cat.load_table(table, csv, decl)?;
            writeln!(
                out,
                "loaded {} rows into {table}",
                cat.table(table)?.rows.len()
            )?;
        }
        Command::AddProvenance {
            table,
            column,
            seed,
        } => {
            let mut cat = open_seeded(&cli, *seed)?;
            cat.add_provenance(table, column.as_deref())?;
            writeln!(
                out,
                "added {} tokens to {table}",
                cat.table(table)?.tokens.len()
            )?;
        }
        Command::SetProb(args) => {
            let mut cat = open(&cli)?;
            if let Some(col) = &args.column {
                cat.set_prob_column(&args.table, col)?;
            } else if let Some(p) = args.all {
                cat.set_prob_all(&args.table, p)?;
            } else if let Some(pair) = &args.token {
                let token = GateId::from_str(&pair[0])
                    .map_err(|_| anyhow::anyhow!("`{}` is not a token", pair[0]))?;
                let p: f64 = pair[1]
                    .parse()
                    .with_context(|| format!("`{}` is not a probability", pair[1]))?;
                cat.set_prob(&args.table, token, p)?;
            }
        }
        Command::Query(args) => {
            let text = if args.file == "-" {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s)?;
                s
            } else {
                std::fs::read_to_string(&args.file)
                    .with_context(|| format!("reading {}", args.file))?
            };
            let mut cat = open(&cli)?;
            let opts = QueryOptions {
                semiring: args.semiring.map(|s| {
                    s.to_possible_value()
                        .expect("not skipped")
                        .get_name()
                        .to_string()
                }),
                mapping: args.mapping.clone(),
                probability: args.prob.then(|| method(args)),
            };
            if args.explain {
                writeln!(out, "{}", cat.explain(&text)?)?;
            }
            let result = cat.run_query(&text, &opts)?;
            if args.explain && !result.methods.is_empty() {
                let names: Vec<&str> = result.methods.iter().map(Method::name).collect();
                writeln!(out, "methods: {}", names.join(", "))?;
            }
            match args.format {
                Format::Text => write!(out, "{}", render_table(&result))?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut out);
                    w.write_record(&result.columns)?;
                    for row in &result.rows {
                        w.write_record(row)?;
                    }
                    w.flush()?;
                }
            }
        }
        Command::Circuit { command } => {
            let cat = open(&cli)?;
            match command {
                CircuitCommand::Stats => {
                    let store = cat.store();
                    writeln!(out, "gates: {}", store.len())?;
                    writeln!(out, "bytes: {}", store.byte_len())?;
                    for (kind, n) in store.stats() {
                        writeln!(out, "{}: {n}", kind.name())?;
                    }
                }
                CircuitCommand::ExportDot { root } => {
                    let root = GateId::from_str(root)
                        .map_err(|_| anyhow::anyhow!("`{root}` is not a gate id"))?;
                    write!(out, "{}", cat.store().export_dot(root, &|_| None)?)?;
                }
            }
        }
        Command::Demo {
            name: DemoName::Personnel,
            seed,
        } => {
            let mut cat = demo::personnel_catalog(*seed)?;
            let why = QueryOptions {
                semiring: Some("why".into()),
                mapping: Some("name".into()),
                probability: None,
            };
            writeln!(out, "query: {}", demo::Q_CITY)?;
            writeln!(out)?;
            write!(out, "{}", render_table(&cat.run_query(demo::Q_CITY, &why)?))?;
            writeln!(out)?;
            let prob = QueryOptions {
                probability: Some(Method::Auto),
                ..Default::default()
            };
            write!(
                out,
                "{}",
                render_table(&cat.run_query(demo::Q_CITY, &prob)?)
            )?;
        }
    }
    Ok(())
}

fn method(args: &QueryArgs) -> Method {
    match args.method {
        MethodName::Auto => Method::Auto,
        MethodName::Readonce => Method::ReadOnce,
        MethodName::Treedec => Method::TreeDec,
        MethodName::Wmc => Method::Wmc,
        MethodName::Enumerate => Method::Enumerate,
        MethodName::Montecarlo => Method::MonteCarlo {
            samples: args.samples.unwrap_or(Method::DEFAULT_SAMPLES),
            seed: args.seed.unwrap_or(0),
        },
    }
}

fn render_table(result: &QueryOutput) -> String {
    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = result.columns.iter().map(|c| width(c)).collect();
    for row in &result.rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(width(cell));
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - width(c))))
            .collect();
        format!("{}\n", padded.join(" | ").trim_end())
    };
    let mut s = line(&result.columns);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    s.push_str(&rule.join("-+-"));
    s.push('\n');
    for row in &result.rows {
        s.push_str(&line(row));
    }
    s.push_str(&format!("({} rows)\n", result.rows.len()));
    s
}
