use clap::{Parser, Subcommand};
use qbd_cli::error::{exit, CliError};
use qbd_cli::report::Format;

#[derive(Parser)]
#[command(name = "qbd", version, about = "Stationary distributions of quasi-birth-and-death chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a model with one method.
    Solve {
        #[arg(long)]
        spec: String,
        /// qdesa, qdesa+, qdesa++, lpca, direct or auto
        #[arg(long, default_value = "auto")]
        method: String,
        #[arg(long)]
        out: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Keep only the k most probable states.
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Solve with several methods and compare the distributions pairwise.
    Compare {
        #[arg(long)]
        spec: String,
        /// Comma-separated method list.
        #[arg(long)]
        methods: String,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long)]
        out: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Time the rate-matrix computation over a list of sizes.
    Bench {
        /// priority or lpc-general
        #[arg(long)]
        family: String,
        /// Comma-separated, strictly increasing, at least four.
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: Option<String>,
        /// Worker threads for independent cells.
        #[arg(long, env = "QBD_THREADS", default_value_t = 1)]
        threads: usize,
    },
    /// Check a spec and report which methods apply.
    Validate {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            spec,
            method,
            out,
            format,
            top_k,
        } => qbd_cli::solve(&spec, &method, out.as_deref(), format, top_k).map(|_| ()),
        Command::Compare {
            spec,
            methods,
            tol,
            out,
            format,
        } => match qbd_cli::compare(&spec, &methods, tol, out.as_deref(), format)? {
            (_, Some(e)) => Err(e),
            (_, None) => Ok(()),
        },
        Command::Bench {
            family,
            sizes,
            repeats,
            out,
            threads,
        } => qbd_cli::bench(&family, &sizes, repeats, threads, out.as_deref()).map(|_| ()),
        Command::Validate { spec, out } => qbd_cli::validate(&spec, out.as_deref()).map(|_| ()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match run(Cli::parse()) {
        Ok(()) => exit::OK,
        Err(e) => {
            let report = e.to_report();
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            e.exit_code()
        }
    };
    std::process::exit(code);
}
