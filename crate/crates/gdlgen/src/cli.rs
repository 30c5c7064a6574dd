//! Command-line surface: grammar extraction, prefix inspection, batch
//! generation runs, and evaluation.
//!
//! Exit codes are a stable contract: 0 success, 1 runtime or backend
//! failure, 2 input or parse error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backend::{
    Backend, Demonstration, HttpBackend, HttpConfig, RandomBackend, ScriptedBackend,
    TEMPLATE_VERSION,
};
use crate::dataset::{self, DemoMode, Example};
use crate::earley::{self, TerminalExpectation};
use crate::grammar::Grammar;
use crate::lexer::tokenize;
use crate::metrics::{self, aggregate, AggregateReport, CompileMode, ExternalCmd, InstanceReport};
use crate::minimal;
use crate::pipeline::{run_pipeline, DecodingConfig, Method, RandomParams, Termination};

#[derive(Parser)]
#[command(
    name = "gdlgen",
    version,
    about = "Grammar-guided game description generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract the minimal grammar that derives a description, or check one.
    GrammarExtract {
        /// Grammar file (reference grammar; with --check, the grammar to check).
        grammar: PathBuf,
        /// Description file.
        description: PathBuf,
        /// Verify minimality instead of extracting; prints removable rules.
        #[arg(long)]
        check: bool,
    },
    /// Longest valid prefix and follow candidates for a description.
    Prefix {
        grammar: PathBuf,
        description: PathBuf,
    },
    /// Run a generation method over every dataset instance.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Reference grammar file.
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; one subdirectory per instance.
        #[arg(long)]
        out: PathBuf,
        /// Concurrent instances (capped by the backend's max_concurrency).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score one or more generation runs against the dataset.
    Evaluate {
        /// Run directory from `generate`; repeat for multi-seed aggregation.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        grammar: PathBuf,
        /// Directory of concept vectors (<id>.reference.json, <id>.predicted.json).
        #[arg(long)]
        concepts: Option<PathBuf>,
        /// External playability check; description on stdin, exit 0 = playable.
        #[arg(long = "functional-cmd")]
        functional_cmd: Option<String>,
        /// External compilation check; replaces the parse proxy.
        #[arg(long = "compile-cmd")]
        compile_cmd: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Gdg,
    Ggdg,
    Random,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Gdg => Method::Gdg,
            MethodArg::Ggdg => Method::Ggdg,
            MethodArg::Random => Method::Random,
        }
    }
}

enum CliError {
    /// Bad inputs: missing files, parse failures, invalid config.
    Input(String),
    /// Failures at run time: backend errors, unwritable outputs.
    Runtime(String),
}

type CliResult<T> = Result<T, CliError>;

fn input<T: std::fmt::Display>(e: T) -> CliError {
    CliError::Input(e.to_string())
}

fn runtime<T: std::fmt::Display>(e: T) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::GrammarExtract {
            grammar,
            description,
            check,
        } => cmd_grammar_extract(&grammar, &description, check),
        Cmd::Prefix {
            grammar,
            description,
        } => cmd_prefix(&grammar, &description),
        Cmd::Generate {
            config,
            dataset,
            grammar,
            method,
            seed,
            out,
            jobs,
        } => cmd_generate(&config, &dataset, &grammar, method.into(), seed, &out, jobs),
        Cmd::Evaluate {
            runs,
            dataset,
            grammar,
            concepts,
            functional_cmd,
            compile_cmd,
        } => cmd_evaluate(
            &runs,
            &dataset,
            &grammar,
            concepts.as_deref(),
            functional_cmd.as_deref(),
            compile_cmd.as_deref(),
        ),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Input(msg)) => {
            eprintln!("gdlgen: {}", msg);
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("gdlgen: {}", msg);
            1
        }
    }
}

fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| input(format!("cannot read {}: {}", path.display(), e)))
}

fn load_closed_grammar(path: &Path) -> CliResult<Grammar> {
    Grammar::parse(&read_file(path)?, false)
        .map_err(|e| input(format!("{}: {}", path.display(), e)))
}

// ---------------------------------------------------------------------------
// grammar-extract and prefix
// ---------------------------------------------------------------------------

fn cmd_grammar_extract(grammar: &Path, description: &Path, check: bool) -> CliResult<i32> {
    let g = load_closed_grammar(grammar)?;
    let text = read_file(description)?;
    let stream = tokenize(&text).map_err(|e| input(format!("{}: {}", description.display(), e)))?;
    if check {
        let removable = minimal::check_minimality(&g, &g, &stream).map_err(input)?;
        let rendered: Vec<String> = removable.iter().map(|a| a.to_string()).collect();
        println!("{}", serde_json::json!({ "removable": rendered }));
        return Ok(if rendered.is_empty() { 0 } else { 1 });
    }
    let minimal_grammar = minimal::extract_minimal(&g, &stream).map_err(input)?;
    print!("{}", minimal_grammar.render());
    Ok(0)
}

#[derive(Serialize)]
struct PrefixJson {
    status: &'static str,
    valid_len: usize,
    candidates: Vec<CandidateJson>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CandidateJson {
    Literal { text: String },
    Class { name: String },
}

fn cmd_prefix(grammar: &Path, description: &Path) -> CliResult<i32> {
    let g = load_closed_grammar(grammar)?;
    let text = read_file(description)?;
    let stream = tokenize(&text).map_err(|e| input(format!("{}: {}", description.display(), e)))?;
    let analysis = earley::parse_prefix(&g, &stream).map_err(input)?;
    let candidates = analysis
        .candidates
        .iter()
        .map(|c| match c {
            TerminalExpectation::Literal(text) => CandidateJson::Literal { text: text.clone() },
            TerminalExpectation::Class(c) => CandidateJson::Class {
                name: c.name().to_string(),
            },
        })
        .collect();
    let json = PrefixJson {
        status: match analysis.status {
            earley::PrefixStatus::Complete => "complete",
            earley::PrefixStatus::Prefix => "prefix",
        },
        valid_len: analysis.valid_len,
        candidates,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&json).expect("serializable")
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum BackendConfig {
    Http(HttpConfig),
    Scripted {
        path: PathBuf,
    },
    Random {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_depth_limit")]
        depth_limit: usize,
    },
}

fn default_depth_limit() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize)]
struct RunConfig {
    #[serde(flatten)]
    decoding: DecodingConfig,
    #[serde(default = "default_demo_mode")]
    demo_mode: DemoMode,
    /// When set, drop dataset examples longer than this many lexer tokens.
    #[serde(default)]
    dataset_max_tokens: Option<usize>,
    #[serde(default = "default_template_version")]
    template_version: String,
    backend: BackendConfig,
}

fn default_demo_mode() -> DemoMode {
    DemoMode::Same
}

fn default_template_version() -> String {
    TEMPLATE_VERSION.to_string()
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    method: String,
    seed: u64,
    template_version: String,
    demo_mode: DemoMode,
    instances: Vec<InstanceStatus>,
}

#[derive(Serialize, Deserialize)]
struct InstanceStatus {
    id: String,
    status: String,
}

struct InstanceJob {
    index: usize,
    example: Example,
    demos: Vec<Demonstration>,
}

fn cmd_generate(
    config_path: &Path,
    dataset_path: &Path,
    grammar_path: &Path,
    method: Method,
    seed: u64,
    out: &Path,
    jobs: usize,
) -> CliResult<i32> {
    let config: RunConfig = serde_json::from_str(&read_file(config_path)?)
        .map_err(|e| input(format!("{}: {}", config_path.display(), e)))?;
    if config.template_version != TEMPLATE_VERSION {
        return Err(input(format!(
            "unknown template version {:?}; this build ships {:?}",
            config.template_version, TEMPLATE_VERSION
        )));
    }
    let g_full = load_closed_grammar(grammar_path)?;
    let mut examples = dataset::load_dataset(dataset_path).map_err(input)?;
    if let Some(bound) = config.dataset_max_tokens {
        examples = dataset::filter_by_length(examples, bound, &dataset::lexer_token_count)
            .map_err(input)?;
    }
    if examples.is_empty() {
        return Err(input("dataset has no usable instances"));
    }

    // Demonstration grammars are needed for grammar-aware methods; compute
    // them once per example, up front, so data problems fail fast.
    let needs_grammars = !matches!(method, Method::Gdg);
    let mut grammar_cache: BTreeMap<String, Grammar> = BTreeMap::new();
    if needs_grammars {
        for example in &examples {
            let g = match &example.grammar {
                Some(g) => g.clone(),
                None => {
                    let stream = tokenize(&example.description)
                        .expect("dataset descriptions lex after load validation");
                    minimal::extract_minimal(&g_full, &stream).map_err(|e| {
                        input(format!(
                            "cannot derive a demonstration grammar for {}: {}",
                            example.id, e
                        ))
                    })?
                }
            };
            grammar_cache.insert(example.id.clone(), g);
        }
    }

    // Resolve demonstrations for every instance before any backend work.
    let mut queue: Vec<InstanceJob> = Vec::new();
    for (index, example) in examples.iter().enumerate() {
        let selected = dataset::select_demonstrations(
            &examples,
            example,
            config.decoding.demo_count,
            config.demo_mode,
            seed.wrapping_add(index as u64),
        )
        .map_err(input)?;
        let demos = selected
            .into_iter()
            .map(|d| Demonstration {
                query: d.query.clone(),
                grammar: needs_grammars.then(|| grammar_cache[&d.id].clone()),
                description: d.description,
            })
            .collect();
        queue.push(InstanceJob {
            index,
            example: example.clone(),
            demos,
        });
    }

    std::fs::create_dir_all(out)
        .map_err(|e| runtime(format!("cannot create {}: {}", out.display(), e)))?;

    let scripted_base = match &config.backend {
        BackendConfig::Scripted { path } => {
            let resolved = resolve_relative(config_path, path);
            Some(ScriptedBackend::from_path(&resolved).map_err(input)?)
        }
        _ => None,
    };
    if let BackendConfig::Http(http) = &config.backend {
        // Surface configuration problems (missing key variable, bad URL)
        // before any instance starts.
        HttpBackend::new(http.clone()).map_err(input)?;
    }

    let effective_jobs = match &config.backend {
        BackendConfig::Http(http) => http
            .max_concurrency
            .map(|cap| jobs.min(cap.max(1)))
            .unwrap_or(jobs),
        _ => jobs,
    }
    .max(1);

    let instance_count = examples.len();
    let statuses: Mutex<Vec<Option<InstanceStatus>>> =
        Mutex::new((0..instance_count).map(|_| None).collect());
    let work: Mutex<std::collections::VecDeque<InstanceJob>> = Mutex::new(queue.into());

    let worker = |work: &Mutex<std::collections::VecDeque<InstanceJob>>,
                  statuses: &Mutex<Vec<Option<InstanceStatus>>>|
     -> CliResult<()> {
        loop {
            let job = match work.lock().expect("queue lock").pop_front() {
                Some(job) => job,
                None => return Ok(()),
            };
            let instance_seed = seed.wrapping_add(job.index as u64);
            let mut backend: Box<dyn Backend> = match &config.backend {
                BackendConfig::Http(http) => {
                    Box::new(HttpBackend::new(http.clone()).map_err(runtime)?)
                }
                BackendConfig::Scripted { .. } => Box::new(
                    scripted_base
                        .as_ref()
                        .expect("scripted backend loaded above")
                        .clone(),
                ),
                BackendConfig::Random { seed: rseed, .. } => {
                    Box::new(RandomBackend::new(rseed.wrapping_add(job.index as u64)))
                }
            };
            let random_params = match &config.backend {
                BackendConfig::Random { depth_limit, .. } => RandomParams {
                    seed: instance_seed,
                    depth_limit: *depth_limit,
                },
                _ => RandomParams {
                    seed: instance_seed,
                    depth_limit: default_depth_limit(),
                },
            };
            let dir = out.join(&job.example.id);
            std::fs::create_dir_all(&dir)
                .map_err(|e| runtime(format!("cannot create {}: {}", dir.display(), e)))?;
            let status = match run_pipeline(
                method,
                backend.as_mut(),
                &g_full,
                &job.demos,
                &job.example.query,
                &config.decoding,
                random_params,
            ) {
                Ok(result) => {
                    write_out(
                        &dir.join("prediction.txt"),
                        &format!("{}\n", result.description),
                    )?;
                    if let Some(g) = &result.grammar {
                        write_out(&dir.join("grammar.txt"), &g.render())?;
                    }
                    let trace_json =
                        serde_json::to_string_pretty(&result.trace).expect("trace serializes");
                    write_out(&dir.join("trace.json"), &format!("{}\n", trace_json))?;
                    let backend_failed = result.trace.rule_termination
                        == Some(Termination::BackendError)
                        || result.trace.desc_termination == Some(Termination::BackendError);
                    if backend_failed {
                        "backend-error"
                    } else {
                        "ok"
                    }
                }
                Err(e) => {
                    write_out(&dir.join("error.txt"), &format!("{}\n", e))?;
                    "failed"
                }
            };
            statuses.lock().expect("status lock")[job.index] = Some(InstanceStatus {
                id: job.example.id.clone(),
                status: status.to_string(),
            });
        }
    };

    if effective_jobs <= 1 {
        worker(&work, &statuses)?;
    } else {
        std::thread::scope(|scope| -> CliResult<()> {
            let mut handles = Vec::new();
            for _ in 0..effective_jobs {
                handles.push(scope.spawn(|| worker(&work, &statuses)));
            }
            for handle in handles {
                handle
                    .join()
                    .map_err(|_| runtime("worker thread panicked"))??;
            }
            Ok(())
        })?;
    }

    let statuses: Vec<InstanceStatus> = statuses
        .into_inner()
        .expect("status lock")
        .into_iter()
        .map(|s| s.expect("every instance ran"))
        .collect();
    let any_failure = statuses.iter().any(|s| s.status != "ok");
    let manifest = RunManifest {
        method: method.name().to_string(),
        seed,
        template_version: config.template_version.clone(),
        demo_mode: config.demo_mode,
        instances: statuses,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_out(&out.join("run.json"), &format!("{}\n", manifest_json))?;
    Ok(if any_failure { 1 } else { 0 })
}

fn write_out(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content)
        .map_err(|e| runtime(format!("cannot write {}: {}", path.display(), e)))
}

fn resolve_relative(config_path: &Path, target: &Path) -> PathBuf {
    if target.is_absolute() {
        target.to_path_buf()
    } else {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(target)
    }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SeedInstances {
    run: String,
    instances: Vec<InstanceReport>,
}

#[derive(Serialize)]
struct MetricsReportJson {
    seeds: Vec<SeedInstances>,
    aggregate: AggregateReport,
}

fn cmd_evaluate(
    runs: &[PathBuf],
    dataset_path: &Path,
    grammar_path: &Path,
    concepts: Option<&Path>,
    functional_cmd: Option<&str>,
    compile_cmd: Option<&str>,
) -> CliResult<i32> {
    let g_full = load_closed_grammar(grammar_path)?;
    let examples = dataset::load_dataset(dataset_path).map_err(input)?;
    let by_id: BTreeMap<&str, &Example> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let compile = compile_cmd.map(ExternalCmd::new);
    let functional = functional_cmd.map(ExternalCmd::new);

    let mut seeds = Vec::new();
    for run_dir in runs {
        let manifest_text = read_file(&run_dir.join("run.json"))?;
        let manifest: RunManifest = serde_json::from_str(&manifest_text)
            .map_err(|e| input(format!("{}: bad run.json: {}", run_dir.display(), e)))?;
        let mut rows = Vec::new();
        for instance in &manifest.instances {
            let example = by_id.get(instance.id.as_str()).ok_or_else(|| {
                input(format!(
                    "run instance {} is not in the dataset",
                    instance.id
                ))
            })?;
            let prediction_path = run_dir.join(&instance.id).join("prediction.txt");
            let prediction = read_file(&prediction_path)?;
            let prediction = prediction.trim_end_matches('\n').to_string();
            let mut notes = Vec::new();

            let compiled = metrics::compilability(&g_full, &prediction, compile.as_ref());
            if let Some(note) = &compiled.note {
                notes.push(format!("compile: {}", note));
            }

            let functional_state = match &functional {
                Some(cmd) => {
                    if compiled.compilable {
                        let (state, note) = metrics::functionality(&prediction, cmd);
                        if let Some(note) = note {
                            notes.push(format!("functional: {}", note));
                        }
                        state
                    } else {
                        // Not compilable means not evaluated for play:
                        // counts as non-functional.
                        Some(false)
                    }
                }
                None => None,
            };

            let ncd = match functional_state {
                Some(false) => Some(1.0),
                Some(true) => match concepts {
                    Some(dir) => match load_concept_pair(dir, &instance.id) {
                        Ok((reference, predicted)) => {
                            match metrics::concept_distance(&reference, &predicted) {
                                Ok(d) => Some(d),
                                Err(e) => {
                                    notes.push(format!("ncd: {}", e));
                                    None
                                }
                            }
                        }
                        Err(note) => {
                            notes.push(note);
                            None
                        }
                    },
                    None => {
                        notes.push("ncd: no concepts directory supplied".to_string());
                        None
                    }
                },
                None => None,
            };

            rows.push(InstanceReport {
                id: instance.id.clone(),
                compilable: compiled.compilable,
                compile_mode: if compile.is_some() {
                    CompileMode::External
                } else {
                    CompileMode::ParseProxy
                },
                functional: functional_state,
                rouge_l_f1: metrics::rouge_l_f1(&example.description, &prediction),
                ncd,
                notes,
            });
        }
        seeds.push(SeedInstances {
            run: run_dir.display().to_string(),
            instances: rows,
        });
    }

    let aggregate_report = aggregate(
        &seeds
            .iter()
            .map(|s| s.instances.clone())
            .collect::<Vec<_>>(),
    )
    .map_err(runtime)?;
    let report = MetricsReportJson {
        seeds,
        aggregate: aggregate_report,
    };
    let rendered = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{}", rendered);
    write_out(&runs[0].join("report.json"), &format!("{}\n", rendered))?;
    Ok(0)
}

fn load_concept_pair(
    dir: &Path,
    id: &str,
) -> Result<(metrics::ConceptVector, metrics::ConceptVector), String> {
    let reference = dir.join(format!("{}.reference.json", id));
    let predicted = dir.join(format!("{}.predicted.json", id));
    if !reference.exists() || !predicted.exists() {
        return Err(format!("ncd: concept vectors missing for {}", id));
    }
    let r =
        metrics::ConceptVector::from_json_file(&reference).map_err(|e| format!("ncd: {}", e))?;
    let p =
        metrics::ConceptVector::from_json_file(&predicted).map_err(|e| format!("ncd: {}", e))?;
    Ok((r, p))
}
