//! End-to-end pipeline driving: shred, compile, run, and fuzz. The binary
//! in `src/bin` is a thin wrapper over these functions, and the runnable
//! examples call them directly.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::algebra::Plan;
use crate::compiler::compile;
use crate::evaluator::generate::{gen_query, Vocabulary};
use crate::evaluator::oracle::eval_xquery;
use crate::evaluator::{eval_plan, items_of};
use crate::frontend::{core_dump, normalize, parse, render, Core, Expr};
use crate::infoset::{shred, Axis, DocTable, NodeTest};
use crate::isolator::{isolate, trace_text};
use crate::sqlgen::{emit_single_block, emit_stacked, SqlOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("result divergence: {0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

fn input_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

/// Everything the pipeline commands need to know; the defaults reproduce
/// the golden outputs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub doc_table: String,
    /// Make serialization explicit by appending a
    /// `descendant-or-self::node()` step over the result sequence.
    pub serialize_wrap: bool,
    pub trace: bool,
    pub quote_kinds: bool,
    pub size_sum_column: Option<String>,
    /// Engine command template with `{csv}` and `{sql}` placeholders.
    pub engine: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            doc_table: "doc".into(),
            serialize_wrap: false,
            trace: false,
            quote_kinds: false,
            size_sum_column: None,
            engine: None,
        }
    }
}

impl PipelineConfig {
    pub fn sql_options(&self) -> SqlOptions {
        SqlOptions {
            doc_table: self.doc_table.clone(),
            quote_kinds: self.quote_kinds,
            size_sum_column: self.size_sum_column.clone(),
        }
    }
}

/// Wraps a query so its result is stepped through
/// `descendant-or-self::node()`, surfacing all nodes a serializer needs.
pub fn serialize_wrap(e: Expr) -> Expr {
    Expr::For {
        var: "ser_wrap".into(),
        input: Box::new(e),
        body: Box::new(Expr::Step {
            input: Box::new(Expr::Var("ser_wrap".into())),
            axis: Axis::DescendantOrSelf,
            test: NodeTest::AnyNode,
        }),
    }
}

/// Shreds an XML file into the CSV encoding.
pub fn cmd_shred(xml_path: &Path, uri: &str, frag: u32, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(xml_path).map_err(input_err)?;
    let doc = shred(&text, uri, frag).map_err(input_err)?;
    let csv = doc.to_csv();
    match out {
        Some(p) => std::fs::write(p, csv).map_err(input_err)?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Which artifacts `cmd_compile` prints.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompileStages {
    pub core: bool,
    pub plan: bool,
    pub isolated: bool,
    pub sql: bool,
    pub sql_stacked: bool,
}

/// Parses a query and returns the requested stage dumps.
pub fn cmd_compile(
    query: &str,
    stages: CompileStages,
    config: &PipelineConfig,
) -> Result<String, CliError> {
    let mut out = String::new();
    let mut expr = parse(query).map_err(input_err)?;
    if config.serialize_wrap {
        expr = serialize_wrap(expr);
    }
    let core = normalize(&expr);
    let want: usize = [stages.core, stages.plan, stages.isolated, stages.sql, stages.sql_stacked]
        .iter()
        .filter(|b| **b)
        .count();
    let section = |out: &mut String, title: &str, body: &str| {
        if want > 1 {
            out.push_str("== ");
            out.push_str(title);
            out.push('\n');
        }
        out.push_str(body);
        if !body.ends_with('\n') {
            out.push('\n');
        }
    };
    if stages.core {
        section(&mut out, "core", &core_dump(&core, false));
    }
    let compiled = compile(&core).map_err(input_err)?;
    if stages.plan {
        section(&mut out, "plan", &compiled.plan.dump());
    }
    if stages.isolated || stages.sql || stages.sql_stacked || config.trace {
        let (isolated, report) = isolate(&compiled.plan);
        if config.trace {
            section(&mut out, "trace", &trace_text(&isolated, &report));
        }
        if stages.isolated {
            section(&mut out, "isolated", &isolated.dump());
        }
        if stages.sql {
            let block = emit_single_block(&isolated, &config.sql_options()).map_err(input_err)?;
            section(&mut out, "sql", &block.render());
        }
        if stages.sql_stacked {
            section(&mut out, "sql-stacked", &emit_stacked(&compiled.plan, &config.sql_options()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunMode {
    Oracle,
    Plan,
    Isolated,
    Sql,
}

/// Compiles and evaluates a query over a document, returning the item
/// sequence (pre ranks).
pub fn run_items(
    query: &str,
    doc: &DocTable,
    mode: RunMode,
    config: &PipelineConfig,
) -> Result<Vec<i64>, CliError> {
    let mut expr = parse(query).map_err(input_err)?;
    if config.serialize_wrap {
        expr = serialize_wrap(expr);
    }
    let core = normalize(&expr);
    run_core_items(&core, doc, mode, config)
}

pub fn run_core_items(
    core: &Core,
    doc: &DocTable,
    mode: RunMode,
    config: &PipelineConfig,
) -> Result<Vec<i64>, CliError> {
    match mode {
        RunMode::Oracle => Ok(eval_xquery(core, doc).into_iter().map(|p| p as i64).collect()),
        RunMode::Plan => {
            let compiled = compile(core).map_err(input_err)?;
            Ok(items_of(&eval_plan(&compiled.plan, doc).map_err(input_err)?))
        }
        RunMode::Isolated => {
            let compiled = compile(core).map_err(input_err)?;
            let (isolated, _) = isolate(&compiled.plan);
            Ok(items_of(&eval_plan(&isolated, doc).map_err(input_err)?))
        }
        RunMode::Sql => {
            let engine = config
                .engine
                .as_deref()
                .ok_or_else(|| CliError::Input("no engine command configured".into()))?;
            let compiled = compile(core).map_err(input_err)?;
            let (isolated, report) = isolate(&compiled.plan);
            let mut opts = config.sql_options();
            opts.quote_kinds = true;
            let (sql, item_column) = if report.normal_form {
                (emit_single_block(&isolated, &opts).map_err(input_err)?.render(), 0)
            } else {
                (emit_stacked(&compiled.plan, &opts), 1)
            };
            let rows = run_engine(engine, &doc.to_csv(), &sql)?;
            rows.iter()
                .map(|r| {
                    let cell = r.get(item_column).cloned().unwrap_or_default();
                    parse_item(&cell)
                })
                .collect()
        }
    }
}

fn parse_item(cell: &str) -> Result<i64, CliError> {
    if let Ok(n) = cell.parse::<i64>() {
        return Ok(n);
    }
    cell.parse::<f64>()
        .map(|f| f as i64)
        .map_err(|_| CliError::Input(format!("engine returned a non-numeric item {cell:?}")))
}

/// Runs the engine command template over a CSV-loaded document and a SQL
/// text, returning the result rows (pipe- or comma-separated columns).
pub fn run_engine(template: &str, csv: &str, sql: &str) -> Result<Vec<Vec<String>>, CliError> {
    let dir = std::env::temp_dir();
    let stamp = format!(
        "xqjoin-{}-{:x}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    );
    let csv_path: PathBuf = dir.join(format!("{stamp}.csv"));
    let sql_path: PathBuf = dir.join(format!("{stamp}.sql"));
    std::fs::write(&csv_path, csv).map_err(input_err)?;
    std::fs::write(&sql_path, sql).map_err(input_err)?;
    let cmd = template
        .replace("{csv}", &csv_path.display().to_string())
        .replace("{sql}", &sql_path.display().to_string());
    let output = Command::new("sh").arg("-c").arg(&cmd).output().map_err(input_err)?;
    let _ = std::fs::remove_file(&csv_path);
    let _ = std::fs::remove_file(&sql_path);
    if !output.status.success() {
        return Err(CliError::Input(format!(
            "engine command failed ({}): {}",
            output.status,
            String::from_utf8_lossy(&output.stderr)
        )));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let sep = if l.contains('|') { '|' } else { ',' };
            l.split(sep).map(|c| c.to_string()).collect()
        })
        .collect())
}

/// Runs a query in one mode, or in `--check` mode runs every available mode
/// and diffs the item sequences.
pub fn cmd_run(
    query: &str,
    doc_csv: &Path,
    mode: Option<RunMode>,
    check: bool,
    serialize: bool,
    config: &PipelineConfig,
) -> Result<String, CliError> {
    let doc = DocTable::from_csv_path(doc_csv).map_err(input_err)?;
    if check {
        let mut modes = vec![RunMode::Oracle, RunMode::Plan, RunMode::Isolated];
        if config.engine.is_some() {
            modes.push(RunMode::Sql);
        }
        let mut results = Vec::new();
        for m in &modes {
            results.push(run_items(query, &doc, m.clone(), config)?);
        }
        for window in results.windows(2) {
            if window[0] != window[1] {
                return Err(CliError::Divergence(format!(
                    "modes disagree: {:?} vs {:?}",
                    window[0], window[1]
                )));
            }
        }
        return Ok(format!("{} modes agree: {:?}\n", results.len(), results[0]));
    }
    let items = run_items(query, &doc, mode.unwrap_or(RunMode::Oracle), config)?;
    if serialize {
        let pres: Vec<u32> = items.iter().map(|&i| i as u32).collect();
        let xml = doc.serialize(&pres).map_err(input_err)?;
        Ok(format!("{xml}\n"))
    } else {
        let mut out = String::new();
        for i in items {
            out.push_str(&i.to_string());
            out.push('\n');
        }
        Ok(out)
    }
}

/// One divergence found by the fuzzer, with full artifact dumps.
#[derive(Debug)]
pub struct Divergence {
    pub seed: u64,
    pub query: String,
    pub detail: String,
    pub artifacts: String,
}

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub checked: usize,
    pub divergences: Vec<Divergence>,
}

/// Three-way agreement over generated queries: naive oracle, initial plan
/// interpretation, isolated plan interpretation. Shards across worker
/// threads; each worker owns its artifacts.
pub fn fuzz_doc(
    doc: &DocTable,
    uri: &str,
    seeds: Range<u64>,
    depth: u32,
    config: &PipelineConfig,
) -> FuzzReport {
    let vocab = Vocabulary::from_doc(uri, doc);
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8);
    let seeds: Vec<u64> = seeds.collect();
    let chunks: Vec<&[u64]> = seeds.chunks(seeds.len().max(1).div_ceil(workers)).collect();
    let mut report = FuzzReport::default();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in chunks {
            let vocab = &vocab;
            let config = config.clone();
            handles.push(scope.spawn(move || {
                let mut local = FuzzReport::default();
                for &seed in chunk {
                    let expr = gen_query(seed, depth, vocab);
                    local.checked += 1;
                    if let Some(d) = check_three_way(seed, &expr, doc, &config) {
                        local.divergences.push(d);
                    }
                }
                local
            }));
        }
        for h in handles {
            let local = h.join().expect("fuzz worker panicked");
            report.checked += local.checked;
            report.divergences.extend(local.divergences);
        }
    });
    report
}

/// Checks one query; `None` means all routes agreed.
pub fn check_three_way(
    seed: u64,
    expr: &Expr,
    doc: &DocTable,
    config: &PipelineConfig,
) -> Option<Divergence> {
    let query = render(expr);
    let core = normalize(expr);
    let fail = |detail: String, plan: Option<&Plan>, isolated: Option<&Plan>| {
        let mut artifacts = format!("query: {query}\ncore: {}\n", core_dump(&core, false));
        if let Some(p) = plan {
            artifacts.push_str("plan:\n");
            artifacts.push_str(&p.dump());
        }
        if let Some(p) = isolated {
            artifacts.push_str("isolated:\n");
            artifacts.push_str(&p.dump());
        }
        Some(Divergence { seed, query: query.clone(), detail, artifacts })
    };
    let oracle: Vec<i64> = eval_xquery(&core, doc).into_iter().map(|p| p as i64).collect();
    let compiled = match compile(&core) {
        Ok(c) => c,
        Err(e) => return fail(format!("compilation failed: {e}"), None, None),
    };
    let plan_items = match eval_plan(&compiled.plan, doc) {
        Ok(t) => items_of(&t),
        Err(e) => return fail(format!("plan evaluation failed: {e}"), Some(&compiled.plan), None),
    };
    if plan_items != oracle {
        return fail(
            format!("oracle {oracle:?} vs plan {plan_items:?}"),
            Some(&compiled.plan),
            None,
        );
    }
    let (isolated, report) = isolate(&compiled.plan);
    let errs = isolated.validate();
    if !errs.is_empty() {
        return fail(format!("isolated plan invalid: {errs:?}"), Some(&compiled.plan), Some(&isolated));
    }
    if report.steps.len() > report.step_budget {
        return fail("step budget exceeded".into(), Some(&compiled.plan), Some(&isolated));
    }
    let iso_items = match eval_plan(&isolated, doc) {
        Ok(t) => items_of(&t),
        Err(e) => {
            return fail(
                format!("isolated evaluation failed: {e}"),
                Some(&compiled.plan),
                Some(&isolated),
            )
        }
    };
    if iso_items != oracle {
        return fail(
            format!("oracle {oracle:?} vs isolated {iso_items:?}"),
            Some(&compiled.plan),
            Some(&isolated),
        );
    }
    let _ = config;
    None
}

/// Runs the fuzzer over documents given as CSV paths (or the bundled corpus
/// when empty) and renders a report; divergences are an error.
pub fn cmd_fuzz(
    seeds: Range<u64>,
    depth: u32,
    doc_csvs: &[PathBuf],
    config: &PipelineConfig,
) -> Result<String, CliError> {
    let docs: Vec<(String, DocTable)> = if doc_csvs.is_empty() {
        crate::corpus::small_docs().into_iter().map(|(u, d)| (u.to_string(), d)).collect()
    } else {
        let mut v = Vec::new();
        for p in doc_csvs {
            let doc = DocTable::from_csv_path(p).map_err(input_err)?;
            let uri = doc.rows.first().and_then(|r| r.name.clone()).unwrap_or_default();
            v.push((uri, doc));
        }
        v
    };
    let mut out = String::new();
    let mut total = 0usize;
    for (uri, doc) in &docs {
        let report = fuzz_doc(doc, uri, seeds.clone(), depth, config);
        total += report.checked;
        if let Some(d) = report.divergences.first() {
            let mut msg = format!("seed {} on {}: {}\n{}", d.seed, uri, d.detail, d.artifacts);
            if !msg.ends_with('\n') {
                msg.push('\n');
            }
            return Err(CliError::Divergence(msg));
        }
        let _ = writeln!(out, "{uri}: {} queries, 0 divergences", report.checked);
    }
    let _ = writeln!(out, "total: {total} queries checked");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn compile_stage_dumps_are_labeled_when_several_are_requested() {
        let out = cmd_compile(
            corpus::Q1,
            CompileStages { core: true, sql: true, ..Default::default() },
            &PipelineConfig::default(),
        )
        .unwrap();
        assert!(out.contains("== core"));
        assert!(out.contains("== sql"));
        assert!(out.contains("SELECT DISTINCT d2.*"));
    }

    #[test]
    fn run_modes_agree_on_q1() {
        let doc = corpus::auction_doc();
        let config = PipelineConfig::default();
        let a = run_items(corpus::Q1, &doc, RunMode::Oracle, &config).unwrap();
        let b = run_items(corpus::Q1, &doc, RunMode::Plan, &config).unwrap();
        let c = run_items(corpus::Q1, &doc, RunMode::Isolated, &config).unwrap();
        assert_eq!(a, vec![1]);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn serialize_wrap_adds_the_extra_step() {
        let doc = corpus::auction_doc();
        let config = PipelineConfig { serialize_wrap: true, ..Default::default() };
        let items = run_items(corpus::Q1, &doc, RunMode::Oracle, &config).unwrap();
        // The whole open_auction subtree: pre ranks 1 through 9.
        assert_eq!(items, (1..=9).collect::<Vec<i64>>());
    }

    #[test]
    fn injected_rewrite_defect_is_detected() {
        use crate::algebra::Operator;
        // Sabotage a duplicate-heavy query: drop the tail duplicate
        // elimination, as a buggy rule 6 application would.
        let q = r#"doc("nested.xml")/descendant::box/descendant::part"#;
        let ndoc = corpus::nested_doc();
        let core = normalize(&parse(q).unwrap());
        let compiled = compile(&core).unwrap();
        let (isolated, _) = isolate(&compiled.plan);
        let mut sabotaged = isolated.clone();
        let victim = sabotaged
            .nodes()
            .iter()
            .find(|n| matches!(sabotaged.op(**n), Operator::Distinct { .. }))
            .copied()
            .expect("isolated plan has a distinct");
        let Operator::Distinct { child } = *sabotaged.op(victim) else { unreachable!() };
        sabotaged.root = sabotaged.store.substitute(sabotaged.root, victim, child);
        let oracle: Vec<i64> = eval_xquery(&core, &ndoc).into_iter().map(|p| p as i64).collect();
        let good = items_of(&eval_plan(&isolated, &ndoc).unwrap());
        let bad = items_of(&eval_plan(&sabotaged, &ndoc).unwrap());
        assert_eq!(good, oracle);
        assert_ne!(bad, oracle, "the three-way check flags the sabotaged plan");
    }
}
