//! Command-line frontend: grammar projection, specialization, batch parsing
//! of sentences and word-graphs, PARSEVAL evaluation, 3SAT reduction
//! instance generation, and oracle verification of the optimized parser.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use stsg::acnf::{to_acnf, AcnfGrammar};
use stsg::chart::{
    cky_sentence, cky_wordgraph, scfg_viterbi, word_graphs_from_str, WordGraph,
};
use stsg::disambig::{
    brute_mpp_mps, input_probability, mpd, mpid, recognize_derivation_tree, DerivationResult,
    EnumLimits,
};
use stsg::eval::parseval;
use stsg::grammar::{
    project_dop, project_sdop, scfg_of, stsg_from_str, stsg_to_string, validate_stsg,
    CutMarkedTreebank, Stsg,
};
use stsg::npc::{build_instance, manifest, Cnf3Formula, ProblemKind};
use stsg::specialize::{integrated_parse, sequential_cover, Dispatch, LearnerConfig};
use stsg::trees::{parse_bracketed, ProjectionParams, Symbol, Tree, Treebank};

#[derive(Parser)]
#[command(name = "stsg", about = "Tree-substitution grammar parsing toolkit")]
struct Cli {
    /// Worker threads for batch parsing (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for randomized verification inputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProjectionFlags {
    /// Maximum elementary-tree depth (0 = unbounded).
    #[arg(short = 'd', default_value_t = 4)]
    depth: u32,
    /// Maximum substitution sites (0 = unbounded).
    #[arg(short = 'n', default_value_t = 2)]
    sites: u32,
    /// Maximum terminals (0 = unbounded).
    #[arg(short = 'l', default_value_t = 7)]
    terminals: u32,
    /// Maximum consecutive terminals (0 = unbounded).
    #[arg(short = 'L', default_value_t = 3)]
    consecutive: u32,
}

impl ProjectionFlags {
    fn params(&self) -> ProjectionParams {
        let opt = |v: u32| if v == 0 { None } else { Some(v) };
        ProjectionParams::new(
            opt(self.depth),
            opt(self.sites),
            opt(self.terminals),
            opt(self.consecutive),
        )
    }
}

#[derive(Args, Clone)]
struct LearnerFlags {
    /// Constituency-probability threshold.
    #[arg(long, default_value_t = 0.95)]
    delta: f64,
    /// Minimum constituent frequency.
    #[arg(long, default_value_t = 5)]
    phi: u64,
    /// Longest learned symbol sequence.
    #[arg(long, default_value_t = 8)]
    max_ssf_len: usize,
    /// Stop once this fraction of internal nodes is reduced.
    #[arg(long)]
    coverage: Option<f64>,
    /// Score sequences through local-context back-off.
    #[arg(long)]
    backoff: bool,
    /// Collapse consecutive repeated symbols in sequence keys.
    #[arg(long)]
    eqclass: bool,
}

impl LearnerFlags {
    fn config(&self) -> LearnerConfig {
        LearnerConfig {
            delta: self.delta,
            phi: self.phi,
            max_ssf_len: self.max_ssf_len,
            coverage_upper_bound: self.coverage,
            use_backoff: self.backoff,
            use_eqclass: self.eqclass,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Most probable derivation of a sentence.
    Mpd,
    /// Input probability (sum over derivations).
    Prob,
    /// Most probable derivation of a word-graph.
    Mpid,
    /// Stochastic CFG Viterbi (depth-1 grammars).
    Viterbi,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReductionKind {
    Mppwg,
    Mps,
    Mpp,
    MpsScfg,
}

impl From<ReductionKind> for ProblemKind {
    fn from(k: ReductionKind) -> ProblemKind {
        match k {
            ReductionKind::Mppwg => ProblemKind::Mppwg,
            ReductionKind::Mps => ProblemKind::Mps,
            ReductionKind::Mpp => ProblemKind::Mpp,
            ReductionKind::MpsScfg => ProblemKind::MpsScfg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Project a DOP grammar from a tree-bank.
    Project {
        treebank: PathBuf,
        #[command(flatten)]
        projection: ProjectionFlags,
        /// Smooth unknown words with add-one counts.
        #[arg(long)]
        add_one_unknowns: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Project a specialized DOP grammar from a cut-marked tree-bank.
    Sdop {
        marked_treebank: PathBuf,
        #[command(flatten)]
        projection: ProjectionFlags,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Learn cut marks and emit the marked tree-bank plus specialized TSG.
    Specialize {
        treebank: PathBuf,
        #[command(flatten)]
        learner: LearnerFlags,
        /// Output path for the marked tree-bank.
        #[arg(long)]
        marked_out: PathBuf,
        /// Output path for the specialized TSG.
        #[arg(long)]
        tsg_out: PathBuf,
    },
    /// Parse sentences or word-graphs with a grammar.
    Parse {
        grammar: PathBuf,
        /// Sentences (one per line) or a word-graph file (`WG` headers).
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Mpd)]
        mode: Mode,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Parse with a specialized grammar, falling back to the full one.
    IsdopParse {
        /// The specialized TSG.
        spec_grammar: PathBuf,
        /// The full grammar.
        full_grammar: PathBuf,
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score test parses against gold parses.
    Eval {
        /// Gold parses, one bracketed tree per line.
        gold: PathBuf,
        /// Test parses, one bracketed tree or NOPARSE per line.
        test: PathBuf,
        /// Emit machine-readable key=value lines instead of the table.
        #[arg(long)]
        key_values: bool,
    },
    /// Build a 3SAT decision-problem instance from a DIMACS formula.
    Reduce3sat {
        formula: PathBuf,
        #[arg(long, value_enum, default_value_t = ReductionKind::Mppwg)]
        kind: ReductionKind,
        /// Directory for the grammar, word-graph and manifest files.
        #[arg(short, long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Compare the optimized parser against the brute-force oracle.
    Verify {
        grammar: PathBuf,
        /// Sentences to check, one per line; omit to sample from the
        /// grammar's own derivations.
        input: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_grammar(path: &Path) -> Result<Stsg> {
    let stsg = stsg_from_str(&read(path)?)?;
    let diagnostics = validate_stsg(&stsg);
    for line in diagnostics.to_lines() {
        eprintln!("warning: {}: {line}", path.display());
    }
    Ok(stsg)
}

fn sentence_of(line: &str) -> Vec<Symbol> {
    line.split_whitespace().map(Symbol::terminal).collect()
}

/// Inputs for batch parsing: plain sentences or word-graphs.
enum BatchInput {
    Sentences(Vec<Vec<Symbol>>),
    WordGraphs(Vec<WordGraph>),
}

fn load_input(path: &Path) -> Result<BatchInput> {
    let text = read(path)?;
    if text.lines().next().is_some_and(|l| l.trim_start().starts_with("WG")) {
        Ok(BatchInput::WordGraphs(word_graphs_from_str(&text)?))
    } else {
        Ok(BatchInput::Sentences(
            text.lines()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty())
                .map(sentence_of)
                .collect(),
        ))
    }
}

fn words_of(sentence: &[Symbol]) -> String {
    sentence.iter().map(|s| s.text()).collect::<Vec<_>>().join(" ")
}

fn result_line(r: &DerivationResult, with_sentence: bool) -> String {
    let ids: Vec<String> = r.derivation.iter().map(|i| i.to_string()).collect();
    let mut line = format!(
        "{}\t{}\t{}",
        r.log_prob,
        r.parse.tree.to_bracketed(),
        ids.join(" ")
    );
    if with_sentence {
        line.push('\t');
        line.push_str(&words_of(&r.sentence));
    }
    line
}

fn parse_batch(g: &AcnfGrammar, stsg: &Stsg, input: &BatchInput, mode: Mode) -> Result<Vec<String>> {
    let lines: Vec<String> = match (mode, input) {
        (Mode::Mpd, BatchInput::Sentences(sents)) => sents
            .par_iter()
            .map(|s| match cky_sentence(g, s).ok().and_then(|c| mpd(g, &c)) {
                Some(r) => result_line(&r, false),
                None => "NOPARSE".into(),
            })
            .collect(),
        (Mode::Prob, BatchInput::Sentences(sents)) => sents
            .par_iter()
            .map(|s| {
                let p = cky_sentence(g, s)
                    .map(|c| input_probability(g, &c))
                    .unwrap_or(f64::NEG_INFINITY);
                if p.is_finite() {
                    format!("{p}")
                } else {
                    "NOPARSE".into()
                }
            })
            .collect(),
        (Mode::Prob, BatchInput::WordGraphs(graphs)) => graphs
            .par_iter()
            .map(|wg| {
                let p = input_probability(g, &cky_wordgraph(g, wg));
                if p.is_finite() {
                    format!("{p}")
                } else {
                    "NOPARSE".into()
                }
            })
            .collect(),
        (Mode::Mpid, BatchInput::WordGraphs(graphs)) => graphs
            .par_iter()
            .map(|wg| match mpid(g, wg) {
                Some(r) => result_line(&r, true),
                None => "NOPARSE".into(),
            })
            .collect(),
        (Mode::Mpid, BatchInput::Sentences(sents)) => sents
            .par_iter()
            .map(|s| match mpid(g, &WordGraph::from_sentence(s)) {
                Some(r) => result_line(&r, true),
                None => "NOPARSE".into(),
            })
            .collect(),
        (Mode::Viterbi, _) => {
            let scfg = scfg_of(stsg).context("viterbi mode needs a depth-1 grammar")?;
            let graphs: Vec<WordGraph> = match input {
                BatchInput::Sentences(sents) => {
                    sents.iter().map(|s| WordGraph::from_sentence(s)).collect()
                }
                BatchInput::WordGraphs(graphs) => graphs.clone(),
            };
            graphs
                .par_iter()
                .map(|wg| match scfg_viterbi(&scfg, wg) {
                    Some((tree, log)) => format!("{log}\t{}", tree.to_bracketed()),
                    None => "NOPARSE".into(),
                })
                .collect()
        }
        (Mode::Mpd, BatchInput::WordGraphs(_)) => {
            bail!("mpd mode parses sentences; use --mode mpid for word-graphs")
        }
    };
    Ok(lines)
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("initializing worker pool")?;
    }
    match cli.command {
        Command::Project { treebank, projection, add_one_unknowns, output } => {
            let tb = Treebank::from_str(&read(&treebank)?)?;
            let stsg = project_dop(&tb, &projection.params(), add_one_unknowns)?;
            emit(output.as_ref(), &stsg_to_string(&stsg))?;
        }
        Command::Sdop { marked_treebank, projection, output } => {
            let mtb = CutMarkedTreebank::from_str(&read(&marked_treebank)?)?;
            let stsg = project_sdop(&mtb, &projection.params())?;
            emit(output.as_ref(), &stsg_to_string(&stsg))?;
        }
        Command::Specialize { treebank, learner, marked_out, tsg_out } => {
            let tb = Treebank::from_str(&read(&treebank)?)?;
            let out = sequential_cover(&tb, &learner.config())?;
            fs::write(&marked_out, out.marked.to_string())
                .with_context(|| format!("writing {}", marked_out.display()))?;
            fs::write(&tsg_out, stsg_to_string(&out.tsg))
                .with_context(|| format!("writing {}", tsg_out.display()))?;
            for l in &out.learned {
                eprintln!(
                    "iteration {}: learned {:?} freq {}/{} cp {:.4} measure {}",
                    l.iteration,
                    l.key.iter().map(|s| s.text()).collect::<Vec<_>>().join(" "),
                    l.freq_c,
                    l.freq_total,
                    l.cp,
                    l.measure
                );
            }
        }
        Command::Parse { grammar, input, mode, output } => {
            let stsg = load_grammar(&grammar)?;
            let g = to_acnf(&stsg)?;
            let lines = parse_batch(&g, &stsg, &load_input(&input)?, mode)?;
            emit(output.as_ref(), &(lines.join("\n") + "\n"))?;
        }
        Command::IsdopParse { spec_grammar, full_grammar, input, output } => {
            let spec = to_acnf(&load_grammar(&spec_grammar)?)?;
            let full = to_acnf(&load_grammar(&full_grammar)?)?;
            let graphs: Vec<WordGraph> = match load_input(&input)? {
                BatchInput::Sentences(sents) => {
                    sents.iter().map(|s| WordGraph::from_sentence(s)).collect()
                }
                BatchInput::WordGraphs(graphs) => graphs,
            };
            let lines: Vec<String> = graphs
                .par_iter()
                .map(|wg| {
                    let r = integrated_parse(&spec, &full, wg);
                    let (model, result) = match r.dispatch {
                        Dispatch::UseSdop => {
                            ("sdop", mpd(&spec, &cky_wordgraph(&spec, wg)))
                        }
                        Dispatch::UseDop => ("dop", mpd(&full, &r.full_chart)),
                    };
                    match result {
                        Some(res) => format!("{model}\t{}", result_line(&res, true)),
                        None => "NOPARSE".into(),
                    }
                })
                .collect();
            emit(output.as_ref(), &(lines.join("\n") + "\n"))?;
        }
        Command::Eval { gold, test, key_values } => {
            let parse_trees = |text: &str, allow_nil: bool| -> Result<Vec<Option<Tree>>> {
                text.lines()
                    .map(|l| l.trim())
                    .filter(|l| !l.is_empty())
                    .map(|l| {
                        if allow_nil && (l == "NOPARSE" || l == "NIL") {
                            Ok(None)
                        } else {
                            // Parse results carry the tree in column 2.
                            let tree_text =
                                if l.contains('\t') { l.split('\t').nth(1).unwrap_or(l) } else { l };
                            Ok(Some(parse_bracketed(tree_text)?))
                        }
                    })
                    .collect()
            };
            let gold: Vec<Tree> = parse_trees(&read(&gold)?, false)?
                .into_iter()
                .map(|t| t.expect("gold parses are never nil"))
                .collect();
            let test = parse_trees(&read(&test)?, true)?;
            let report = parseval(&gold, &test)?;
            if key_values {
                print!("{}", report.to_key_values());
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::Reduce3sat { formula, kind, output_dir } => {
            let f = Cnf3Formula::from_dimacs(&read(&formula)?)?;
            let inst = build_instance(&f, kind.into())?;
            fs::create_dir_all(&output_dir)?;
            fs::write(output_dir.join("instance.stsg"), stsg_to_string(&inst.stsg))?;
            fs::write(output_dir.join("instance.wg"), inst.word_graph.to_string())?;
            let mut lines = manifest(&inst);
            lines.push('\n');
            if let Some(sentence) = &inst.sentence {
                lines.push_str(&format!("SENTENCE {}\n", words_of(sentence)));
            }
            fs::write(output_dir.join("manifest.txt"), &lines)?;
            print!("{lines}");
        }
        Command::Verify { grammar, input } => {
            let stsg = load_grammar(&grammar)?;
            let g = to_acnf(&stsg)?;
            let sentences: Vec<Vec<Symbol>> = match input {
                Some(path) => match load_input(&path)? {
                    BatchInput::Sentences(s) => s,
                    BatchInput::WordGraphs(_) => bail!("verify expects plain sentences"),
                },
                None => sample_sentences(&stsg, cli.seed)?,
            };
            let limits = EnumLimits::default();
            let mut mismatches = 0usize;
            for s in &sentences {
                let wg = WordGraph::from_sentence(s);
                let oracle = brute_mpp_mps(&stsg, &wg, &limits)?;
                let result = cky_sentence(&g, s).ok().and_then(|c| mpd(&g, &c));
                let ok = match (&result, oracle.derivations.is_empty()) {
                    (None, true) => true,
                    (Some(r), false) => {
                        (r.log_prob - oracle.best_derivation_weight.ln()).abs() < 1e-9
                            && recognize_derivation_tree(&stsg, &r.parse)
                    }
                    _ => false,
                };
                println!(
                    "{}\t{}",
                    if ok { "OK" } else { "MISMATCH" },
                    words_of(s)
                );
                if !ok {
                    mismatches += 1;
                }
            }
            if mismatches > 0 {
                eprintln!("{mismatches} of {} inputs mismatched", sentences.len());
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Deterministic verification inputs when none are given: the grammar's own
/// derivable sentences up to the enumeration length cap, found by exhaustive
/// enumeration over full lattices, capped at 50 per seed-rotated order.
fn sample_sentences(stsg: &Stsg, seed: u64) -> Result<Vec<Vec<Symbol>>> {
    use stsg::disambig::enumerate_derivations;
    let terminals: Vec<Symbol> = stsg
        .elems()
        .iter()
        .flat_map(|e| e.tree.frontier())
        .filter(|s| s.is_terminal())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let limits = EnumLimits::default();
    let mut sentences: Vec<Vec<Symbol>> = Vec::new();
    for len in 1..=4usize {
        let mut transitions = Vec::new();
        for pos in 0..len {
            for w in &terminals {
                transitions.push(stsg::chart::Transition {
                    from: pos,
                    to: pos + 1,
                    word: w.clone(),
                    prob: 1.0,
                });
            }
        }
        let wg = WordGraph::new(len + 1, transitions)?;
        for d in enumerate_derivations(stsg, &wg, &limits)? {
            if !sentences.contains(&d.sentence) {
                sentences.push(d.sentence);
            }
        }
    }
    if sentences.is_empty() {
        bail!("the grammar derives no sentence of length <= 4 to verify against");
    }
    let offset = (seed as usize) % sentences.len();
    sentences.rotate_left(offset);
    sentences.truncate(50);
    Ok(sentences)
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
