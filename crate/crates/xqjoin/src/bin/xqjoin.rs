//! Thin command-line front end over the library pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xqjoin::cli::{self, CompileStages, PipelineConfig, RunMode};

#[derive(Parser)]
#[command(name = "xqjoin", about = "XQuery-to-SQL compilation via join graph isolation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Name of the document encoding table in emitted SQL.
    #[arg(long, default_value = "doc")]
    doc_table: String,
    /// Append a descendant-or-self::node() step over the result sequence.
    #[arg(long)]
    serialize_wrap: bool,
    /// Print the rewrite step log.
    #[arg(long)]
    trace: bool,
    /// Quote node-kind literals in SQL (needed for execution).
    #[arg(long)]
    quote_kinds: bool,
    /// Render pre + size as this precomputed column.
    #[arg(long)]
    size_sum_column: Option<String>,
    /// Engine command template with {csv} and {sql} placeholders.
    #[arg(long)]
    engine: Option<String>,
}

impl ConfigArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            doc_table: self.doc_table.clone(),
            serialize_wrap: self.serialize_wrap,
            trace: self.trace,
            quote_kinds: self.quote_kinds,
            size_sum_column: self.size_sum_column.clone(),
            engine: self.engine.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Shred an XML file into the CSV node-table encoding.
    Shred {
        xml: PathBuf,
        /// Document URI stored on the document node.
        #[arg(long)]
        uri: Option<String>,
        /// Fragment id when several documents share one table.
        #[arg(long, default_value_t = 0)]
        frag: u32,
        /// Output CSV path (stdout when absent).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compile a query and print the requested stage artifacts.
    Compile {
        /// Query text, or a path when --file is given.
        query: String,
        #[arg(long)]
        file: bool,
        #[arg(long)]
        core: bool,
        #[arg(long)]
        plan: bool,
        #[arg(long)]
        isolated: bool,
        #[arg(long)]
        sql: bool,
        #[arg(long)]
        sql_stacked: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a query over a shredded document.
    Run {
        query: String,
        /// Document table CSV.
        doc: PathBuf,
        #[arg(long)]
        file: bool,
        /// oracle | plan | isolated | sql
        #[arg(long, default_value = "oracle")]
        mode: String,
        /// Run all available modes and require agreement.
        #[arg(long)]
        check: bool,
        /// Serialize the resulting nodes back to XML.
        #[arg(long)]
        serialize: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Differential testing over generated queries.
    Fuzz {
        /// First seed (inclusive).
        #[arg(long, default_value_t = 0)]
        from: u64,
        /// Last seed (exclusive).
        #[arg(long, default_value_t = 100)]
        to: u64,
        #[arg(long, default_value_t = 4)]
        depth: u32,
        /// Document CSVs (bundled corpus when empty).
        docs: Vec<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn read_query(query: String, file: bool) -> Result<String, cli::CliError> {
    if file {
        std::fs::read_to_string(&query)
            .map_err(|e| cli::CliError::Input(format!("{query}: {e}")))
    } else {
        Ok(query)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests are not usage errors.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let result: Result<String, cli::CliError> = match cli.command {
        Cmd::Shred { xml, uri, frag, out } => {
            let uri = uri.unwrap_or_else(|| {
                xml.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            cli::cmd_shred(&xml, &uri, frag, out.as_deref()).map(|()| String::new())
        }
        Cmd::Compile { query, file, core, plan, isolated, sql, sql_stacked, config } => {
            read_query(query, file).and_then(|q| {
                let stages = CompileStages { core, plan, isolated, sql, sql_stacked };
                let stages = if [core, plan, isolated, sql, sql_stacked].iter().any(|b| *b) {
                    stages
                } else {
                    CompileStages { sql: true, ..Default::default() }
                };
                cli::cmd_compile(&q, stages, &config.config())
            })
        }
        Cmd::Run { query, doc, file, mode, check, serialize, config } => {
            read_query(query, file).and_then(|q| {
                let mode = match mode.as_str() {
                    "oracle" => Some(RunMode::Oracle),
                    "plan" => Some(RunMode::Plan),
                    "isolated" => Some(RunMode::Isolated),
                    "sql" => Some(RunMode::Sql),
                    other => {
                        return Err(cli::CliError::Input(format!("unknown mode {other}")));
                    }
                };
                cli::cmd_run(&q, &doc, mode, check, serialize, &config.config())
            })
        }
        Cmd::Fuzz { from, to, depth, docs, config } => {
            cli::cmd_fuzz(from..to, depth, &docs, &config.config())
        }
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
