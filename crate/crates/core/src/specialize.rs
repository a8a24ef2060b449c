//! Grammar specialization by ambiguity reduction: a sequential-covering
//! learner that marks cut nodes in a tree-bank, guided by how often a symbol
//! sequence on the current frontiers is a constituent (its constituency
//! probability) and by how much cutting it would shrink the tree-bank (its
//! global reduction factor). The marked tree-bank yields a specialized TSG:
//! the learned ambiguity sets plus the residue partial trees plus the
//! lexical rules. An integrated parser runs the specialized TSG first and
//! falls back to the full grammar.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::acnf::AcnfGrammar;
use crate::chart::{cky_wordgraph, Chart, WordGraph};
use crate::disambig;
use crate::grammar::{CutMarkedTreebank, GrammarError, Stsg};
use crate::trees::{NodeId, Symbol, Tree, Treebank};

/// Thresholds and switches for the cut-node learner.
#[derive(Clone, Debug)]
pub struct LearnerConfig {
    /// Constituency-probability threshold: a sequence with cp ≤ delta scores
    /// zero.
    pub delta: f64,
    /// Minimum constituent frequency for a sequence to be viable.
    pub phi: u64,
    /// Longest symbol sequence considered.
    pub max_ssf_len: usize,
    /// Stop once this fraction of the original internal nodes has been
    /// reduced. `None` disables the bound; `Some(0.0)` stops immediately.
    pub coverage_upper_bound: Option<f64>,
    /// Score sequences through local-context back-off instead of globally.
    pub use_backoff: bool,
    /// Collapse consecutive repeated symbols when keying sequences.
    pub use_eqclass: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            delta: 0.95,
            phi: 5,
            max_ssf_len: 8,
            coverage_upper_bound: None,
            use_backoff: false,
            use_eqclass: false,
        }
    }
}

/// A frontier symbol sequence under study (terminal-free by construction).
pub type SsfKey = Vec<Symbol>;

/// One context position: a frontier symbol or the frontier boundary.
#[derive(Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord)]
pub enum CtxSym {
    Boundary,
    Sym(Symbol),
}

/// One occurrence of a sequence on a frontier: two context symbols on each
/// side and whether the occurrence is a constituent (a node's frontier).
#[derive(Clone, Debug)]
pub struct CtxRecord {
    pub ctx: [CtxSym; 4],
    pub constituent: bool,
}

/// Frequencies of one sequence over the current iteration's frontiers.
#[derive(Clone, Debug, Default)]
pub struct SsfStats {
    /// Occurrences anywhere along frontiers, overlaps counted.
    pub freq_total: u64,
    /// Occurrences that are exactly the frontier of some node's subtree.
    pub freq_c: u64,
    /// Constituent occurrences: (tree index, subtree root). When several
    /// nodes share one frontier span (unary chains), the topmost is kept and
    /// the span counts once.
    pub occurrences: Vec<(usize, NodeId)>,
    /// One record per occurrence, for the back-off measure.
    pub contexts: Vec<CtxRecord>,
}

impl SsfStats {
    /// Constituency probability: of all occurrences, the constituent share.
    pub fn cp(&self) -> f64 {
        if self.freq_total == 0 {
            0.0
        } else {
            self.freq_c as f64 / self.freq_total as f64
        }
    }
}

fn ssf_key(symbols: &[Symbol], eqclass: bool) -> SsfKey {
    if !eqclass {
        return symbols.to_vec();
    }
    let mut out: SsfKey = Vec::with_capacity(symbols.len());
    for s in symbols {
        if out.last() != Some(s) {
            out.push(s.clone());
        }
    }
    out
}

/// The current partial tree of one tree-bank tree: everything above the cut
/// marks. Marked nodes and original leaves are the view's leaves.
struct View {
    /// Leaf node ids, left to right.
    leaves: Vec<NodeId>,
    /// Internal view nodes with their frontier span, in postorder (children
    /// before parents, so the last node with a given span is the topmost).
    nodes: Vec<(NodeId, usize, usize)>,
}

fn build_view(tree: &Tree, marks: &HashSet<NodeId>) -> View {
    fn walk(tree: &Tree, marks: &HashSet<NodeId>, nid: NodeId, view: &mut View) -> (usize, usize) {
        if tree.is_leaf(nid) || marks.contains(&nid) {
            view.leaves.push(nid);
            return (view.leaves.len() - 1, view.leaves.len());
        }
        let lo = view.leaves.len();
        for &c in tree.children(nid) {
            walk(tree, marks, c, view);
        }
        let hi = view.leaves.len();
        view.nodes.push((nid, lo, hi));
        (lo, hi)
    }
    let mut view = View { leaves: Vec::new(), nodes: Vec::new() };
    walk(tree, marks, tree.root(), &mut view);
    view
}

/// Collects frequency statistics over the frontiers of the current partial
/// trees. Sequences containing a terminal or longer than the configured
/// bound are skipped.
pub fn ssf_pass(
    tb: &Treebank,
    marks: &[HashSet<NodeId>],
    cfg: &LearnerConfig,
) -> BTreeMap<SsfKey, SsfStats> {
    let mut map: BTreeMap<SsfKey, SsfStats> = BTreeMap::new();
    for (ti, tree) in tb.trees().iter().enumerate() {
        let view = build_view(tree, &marks[ti]);
        let fs: Vec<Symbol> = view.leaves.iter().map(|&n| tree.label(n).clone()).collect();
        // Topmost view node per frontier span.
        let mut spans: HashMap<(usize, usize), NodeId> = HashMap::new();
        for &(nid, lo, hi) in &view.nodes {
            spans.insert((lo, hi), nid);
        }
        for start in 0..fs.len() {
            for end in start + 1..=fs.len() {
                if end - start > cfg.max_ssf_len {
                    break;
                }
                if fs[end - 1].is_terminal() {
                    break;
                }
                let key = ssf_key(&fs[start..end], cfg.use_eqclass);
                let ctx_at = |pos: isize| -> CtxSym {
                    if pos < 0 || pos as usize >= fs.len() {
                        CtxSym::Boundary
                    } else {
                        CtxSym::Sym(fs[pos as usize].clone())
                    }
                };
                let ctx = [
                    ctx_at(start as isize - 2),
                    ctx_at(start as isize - 1),
                    ctx_at(end as isize),
                    ctx_at(end as isize + 1),
                ];
                let constituent = spans.get(&(start, end)).copied();
                let e = map.entry(key).or_default();
                e.freq_total += 1;
                e.contexts.push(CtxRecord { ctx, constituent: constituent.is_some() });
                if let Some(nid) = constituent {
                    e.freq_c += 1;
                    e.occurrences.push((ti, nid));
                }
            }
        }
    }
    map
}

/// Global reduction factor, gated by the viability thresholds: zero when the
/// sequence is too rare or too often a non-constituent, otherwise
/// (length − 1) times the constituent frequency.
pub fn grf_measure(key: &[Symbol], stats: &SsfStats, cfg: &LearnerConfig) -> u64 {
    if stats.freq_c < cfg.phi || stats.cp() <= cfg.delta {
        0
    } else {
        (key.len() as u64 - 1) * stats.freq_c
    }
}

type CtxPattern = [Option<CtxSym>; 4];

/// `a` matches every record `b` matches (wildcards are `None`).
fn generalizes(a: &CtxPattern, b: &CtxPattern) -> bool {
    a.iter().zip(b).all(|(x, y)| x.is_none() || x == y)
}

fn pattern_matches(p: &CtxPattern, ctx: &[CtxSym; 4]) -> bool {
    p.iter().zip(ctx).all(|(x, y)| match x {
        None => true,
        Some(s) => s == y,
    })
}

/// Context back-off scoring: the viability gate is applied per local context
/// (two symbols each side, generalized with wildcards); the score sums
/// (length − 1) × constituent frequency over the most general unrelated
/// viable contexts. When the fully wildcarded context is viable this equals
/// [`grf_measure`].
pub fn backoff_measure(key: &[Symbol], stats: &SsfStats, cfg: &LearnerConfig) -> u64 {
    let mut patterns: BTreeSet<CtxPattern> = BTreeSet::new();
    for r in &stats.contexts {
        for mask in 0u8..16 {
            let mut p: CtxPattern = [None, None, None, None];
            for (pos, slot) in p.iter_mut().enumerate() {
                if mask & (1 << pos) == 0 {
                    *slot = Some(r.ctx[pos].clone());
                }
            }
            patterns.insert(p);
        }
    }
    let mut viable: Vec<(CtxPattern, u64)> = Vec::new();
    for p in patterns {
        let mut freq = 0u64;
        let mut freq_c = 0u64;
        for r in &stats.contexts {
            if pattern_matches(&p, &r.ctx) {
                freq += 1;
                if r.constituent {
                    freq_c += 1;
                }
            }
        }
        if freq_c >= cfg.phi && freq > 0 && (freq_c as f64 / freq as f64) > cfg.delta {
            viable.push((p, freq_c));
        }
    }
    // Most general first; BTreeSet order breaks ties deterministically.
    viable.sort_by_key(|(p, _)| std::cmp::Reverse(p.iter().filter(|s| s.is_none()).count()));
    let mut selected: Vec<CtxPattern> = Vec::new();
    let mut score = 0u64;
    for (p, freq_c) in viable {
        let related = selected
            .iter()
            .any(|s| generalizes(s, &p) || generalizes(&p, s));
        if !related {
            score += (key.len() as u64 - 1) * freq_c;
            selected.push(p);
        }
    }
    score
}

/// The configured measure: back-off scoring when enabled, plain GRF
/// otherwise.
pub fn measure(key: &[Symbol], stats: &SsfStats, cfg: &LearnerConfig) -> u64 {
    if cfg.use_backoff {
        backoff_measure(key, stats, cfg)
    } else {
        grf_measure(key, stats, cfg)
    }
}

/// One sequence accepted by the learner, kept for auditing the gates.
#[derive(Clone, Debug)]
pub struct LearnedSsf {
    pub iteration: usize,
    pub key: SsfKey,
    pub freq_total: u64,
    pub freq_c: u64,
    pub cp: f64,
    pub measure: u64,
}

/// The learner's output: the cut-marked tree-bank, the specialized TSG
/// (probabilities are 1.0 placeholders), and the learning log.
#[derive(Clone, Debug)]
pub struct SpecializeOutcome {
    pub marked: CutMarkedTreebank,
    pub tsg: Stsg,
    pub learned: Vec<LearnedSsf>,
}

/// Copies the subtree at `nid`, truncating at marked strict descendants:
/// they become substitution-site leaves.
pub fn cut_subtree(tree: &Tree, nid: NodeId, marks: &HashSet<NodeId>) -> Tree {
    fn conv(tree: &Tree, c: NodeId, marks: &HashSet<NodeId>) -> Tree {
        if tree.is_leaf(c) || marks.contains(&c) {
            Tree::leaf(tree.label(c).clone())
        } else {
            let kids = tree.children(c).iter().map(|&k| conv(tree, k, marks)).collect();
            Tree::node(tree.label(c).clone(), kids)
        }
    }
    let kids = tree.children(nid).iter().map(|&k| conv(tree, k, marks)).collect();
    Tree::node(tree.label(nid).clone(), kids)
}

fn is_preterminal(tree: &Tree, nid: NodeId) -> bool {
    !tree.is_leaf(nid)
        && tree
            .children(nid)
            .iter()
            .all(|&c| tree.is_leaf(c) && tree.label(c).is_terminal())
}

/// Internal nodes strictly below a mark; these have left the current view.
fn reduced_internal(tree: &Tree, marks: &HashSet<NodeId>) -> usize {
    fn walk(tree: &Tree, marks: &HashSet<NodeId>, nid: NodeId, below: bool, n: &mut usize) {
        if below && !tree.is_leaf(nid) {
            *n += 1;
        }
        let below_next = below || marks.contains(&nid);
        for &c in tree.children(nid) {
            walk(tree, marks, c, below_next, n);
        }
    }
    let mut n = 0;
    walk(tree, marks, tree.root(), false, &mut n);
    n
}

/// Competing keys: two sequences compete when, in some tree, the subtree of
/// one contains the subtree of the other. Nested view spans capture exactly
/// the ancestor/descendant node pairs.
fn collect_competitors(
    tb: &Treebank,
    marks: &[HashSet<NodeId>],
    cfg: &LearnerConfig,
) -> BTreeMap<SsfKey, BTreeSet<SsfKey>> {
    let mut out: BTreeMap<SsfKey, BTreeSet<SsfKey>> = BTreeMap::new();
    for (ti, tree) in tb.trees().iter().enumerate() {
        let view = build_view(tree, &marks[ti]);
        let fs: Vec<Symbol> = view.leaves.iter().map(|&n| tree.label(n).clone()).collect();
        let keyed: Vec<(usize, usize, SsfKey)> = view
            .nodes
            .iter()
            .filter(|&&(_, lo, hi)| {
                hi - lo <= cfg.max_ssf_len && fs[lo..hi].iter().all(|s| s.is_nonterminal())
            })
            .map(|&(_, lo, hi)| (lo, hi, ssf_key(&fs[lo..hi], cfg.use_eqclass)))
            .collect();
        for (i, a) in keyed.iter().enumerate() {
            for b in keyed.iter().skip(i + 1) {
                // a precedes b in postorder; equal or nested spans mean the
                // two nodes lie on one root path.
                let nested = (b.0 <= a.0 && a.1 <= b.1) || (a.0 <= b.0 && b.1 <= a.1);
                if nested {
                    out.entry(a.2.clone()).or_default().insert(b.2.clone());
                    out.entry(b.2.clone()).or_default().insert(a.2.clone());
                }
            }
        }
    }
    out
}

/// The sequential-covering learner. Iteration zero cuts all lexical
/// (preterminal to word) productions; each later iteration recomputes
/// frontier statistics, marks the nodes whose frontier key strictly beats
/// every competitor, and reduces the marked subtrees to their roots. Stops
/// when no key scores, when an iteration marks nothing, or when the
/// coverage bound is hit. Finally, all roots are marked and the TSG is
/// collected from the cut pieces plus the lexical rules.
pub fn sequential_cover(
    tb: &Treebank,
    cfg: &LearnerConfig,
) -> Result<SpecializeOutcome, GrammarError> {
    let trees = tb.trees();
    let mut marks: Vec<HashSet<NodeId>> = vec![HashSet::new(); trees.len()];
    let total_internal: usize = trees.iter().map(|t| t.internal_nodes().len()).sum();
    let coverage_reached = |marks: &[HashSet<NodeId>]| -> bool {
        let Some(bound) = cfg.coverage_upper_bound else { return false };
        let reduced: usize = trees.iter().zip(marks).map(|(t, m)| reduced_internal(t, m)).sum();
        reduced as f64 / total_internal.max(1) as f64 >= bound
    };

    let mut learned: Vec<LearnedSsf> = Vec::new();
    if !coverage_reached(&marks) {
        for (t, m) in trees.iter().zip(marks.iter_mut()) {
            for nid in t.internal_nodes() {
                if is_preterminal(t, nid) {
                    m.insert(nid);
                }
            }
        }
        let mut iteration = 1;
        loop {
            if coverage_reached(&marks) {
                break;
            }
            let stats = ssf_pass(tb, &marks, cfg);
            let measures: BTreeMap<&SsfKey, u64> =
                stats.iter().map(|(k, s)| (k, measure(k, s, cfg))).collect();
            if measures.values().all(|&m| m == 0) {
                break;
            }
            let competitors = collect_competitors(tb, &marks, cfg);
            let mut new_marks: Vec<(usize, NodeId)> = Vec::new();
            let mut learned_keys: BTreeSet<SsfKey> = BTreeSet::new();
            for (ti, tree) in trees.iter().enumerate() {
                let view = build_view(tree, &marks[ti]);
                let fs: Vec<Symbol> =
                    view.leaves.iter().map(|&n| tree.label(n).clone()).collect();
                let mut keyed: HashMap<NodeId, SsfKey> = HashMap::new();
                for &(nid, lo, hi) in &view.nodes {
                    if hi - lo <= cfg.max_ssf_len
                        && fs[lo..hi].iter().all(|s| s.is_nonterminal())
                    {
                        keyed.insert(nid, ssf_key(&fs[lo..hi], cfg.use_eqclass));
                    }
                }
                // Depth-first from the root, stopping at winning nodes.
                let mut stack = vec![tree.root()];
                while let Some(nid) = stack.pop() {
                    if tree.is_leaf(nid) || marks[ti].contains(&nid) {
                        continue;
                    }
                    let wins = keyed.get(&nid).is_some_and(|key| {
                        let m = measures[key];
                        m > 0
                            && competitors.get(key).is_none_or(|cs| {
                                cs.iter().all(|c| m > measures.get(c).copied().unwrap_or(0))
                            })
                    });
                    if wins {
                        new_marks.push((ti, nid));
                        learned_keys.insert(keyed[&nid].clone());
                    } else {
                        for &c in tree.children(nid).iter().rev() {
                            stack.push(c);
                        }
                    }
                }
            }
            if new_marks.is_empty() {
                break;
            }
            for key in learned_keys {
                let s = &stats[&key];
                learned.push(LearnedSsf {
                    iteration,
                    freq_total: s.freq_total,
                    freq_c: s.freq_c,
                    cp: s.cp(),
                    measure: measures[&key],
                    key,
                });
            }
            for (ti, nid) in new_marks {
                marks[ti].insert(nid);
            }
            iteration += 1;
        }
    }
    for (t, m) in trees.iter().zip(marks.iter_mut()) {
        m.insert(t.root());
    }

    let mut seen: HashSet<String> = HashSet::new();
    let mut elems: Vec<(Tree, f64)> = Vec::new();
    for (ti, tree) in trees.iter().enumerate() {
        for nid in tree.preorder() {
            if marks[ti].contains(&nid) {
                let piece = cut_subtree(tree, nid, &marks[ti]);
                if seen.insert(piece.to_bracketed()) {
                    elems.push((piece, 1.0));
                }
            }
        }
        // Lexical rules are always part of the specialized grammar, even
        // when the coverage bound blocked the lexical cut.
        for nid in tree.internal_nodes() {
            if is_preterminal(tree, nid) {
                let piece = tree.subtree(nid);
                if seen.insert(piece.to_bracketed()) {
                    elems.push((piece, 1.0));
                }
            }
        }
    }
    let tsg = Stsg::new(tb.start().clone(), elems)?;
    let marked = CutMarkedTreebank::new(tb.clone(), marks)
        .expect("roots are marked and marks sit on internal nodes");
    Ok(SpecializeOutcome { marked, tsg, learned })
}

/// Frontier of `nid` in the cut sense: leaf labels reached without passing
/// below a marked strict descendant.
fn cut_frontier(tree: &Tree, nid: NodeId, marks: &HashSet<NodeId>) -> Vec<Symbol> {
    fn walk(tree: &Tree, c: NodeId, marks: &HashSet<NodeId>, out: &mut Vec<Symbol>) {
        if tree.is_leaf(c) || marks.contains(&c) {
            out.push(tree.label(c).clone());
        } else {
            for &k in tree.children(c) {
                walk(tree, k, marks, out);
            }
        }
    }
    let mut out = Vec::new();
    for &c in tree.children(nid) {
        walk(tree, c, marks, &mut out);
    }
    out
}

/// Completes the ambiguity sets of the marked tree-bank: nodes are grouped
/// by their cut-sense frontier; when a group holds marked as well as
/// unmarked nodes, the unmarked nodes' cut subtrees are returned so the
/// grammar covers those missed structures too.
pub fn complete_ambiguity_sets(mtb: &CutMarkedTreebank) -> Vec<Tree> {
    let mut groups: BTreeMap<Vec<Symbol>, Vec<(usize, NodeId, bool)>> = BTreeMap::new();
    for (ti, tree) in mtb.treebank().trees().iter().enumerate() {
        let marks = mtb.marks(ti);
        for nid in tree.internal_nodes() {
            let f = cut_frontier(tree, nid, marks);
            if f.iter().any(|s| s.is_terminal()) {
                continue;
            }
            groups.entry(f).or_default().push((ti, nid, marks.contains(&nid)));
        }
    }
    let mut seen: HashSet<String> = HashSet::new();
    let mut out: Vec<Tree> = Vec::new();
    for nodes in groups.values() {
        let any_marked = nodes.iter().any(|&(_, _, m)| m);
        let any_unmarked = nodes.iter().any(|&(_, _, m)| !m);
        if !(any_marked && any_unmarked) {
            continue;
        }
        for &(ti, nid, m) in nodes {
            if !m {
                let sub = cut_subtree(
                    &mtb.treebank().trees()[ti],
                    nid,
                    mtb.marks(ti),
                );
                if seen.insert(sub.to_bracketed()) {
                    out.push(sub);
                }
            }
        }
    }
    out
}

/// Which grammar the integrated parser hands to the disambiguator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dispatch {
    /// The specialized TSG spans the whole input; use the specialized model.
    UseSdop,
    /// Fall back to the full model over the full chart.
    UseDop,
}

/// Result of the two-grammar integrated parse.
#[derive(Clone, Debug)]
pub struct IntegratedParse {
    /// Spans the specialized TSG derives completely from some elementary
    /// tree root.
    pub complete: HashSet<(usize, usize)>,
    pub dispatch: Dispatch,
    /// The full grammar's chart, covering everything the specialized pass
    /// did not.
    pub full_chart: Chart,
}

/// Parses with the specialized TSG first, flags the spans it covers as
/// complete, then brings the chart up to the full grammar's coverage and
/// decides which model disambiguates: the specialized one when it derives
/// the whole input from the start symbol, the full one otherwise.
pub fn integrated_parse(
    spec: &AcnfGrammar,
    full: &AcnfGrammar,
    wg: &WordGraph,
) -> IntegratedParse {
    let spec_chart = cky_wordgraph(spec, wg);
    let complete = disambig::viable_root_spans(spec, &spec_chart);
    let recognized = disambig::mpd(spec, &spec_chart).is_some();
    let full_chart = cky_wordgraph(full, wg);
    IntegratedParse {
        complete,
        dispatch: if recognized { Dispatch::UseSdop } else { Dispatch::UseDop },
        full_chart,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acnf::to_acnf;
    use crate::grammar::project_dop;
    use crate::trees::{parse_bracketed, ProjectionParams};

    fn t(s: &str) -> Tree {
        parse_bracketed(s).unwrap()
    }

    fn bank(lines: &[(&str, usize)]) -> Treebank {
        let mut trees = Vec::new();
        for &(s, n) in lines {
            for _ in 0..n {
                trees.push(t(s));
            }
        }
        Treebank::new(trees).unwrap()
    }

    fn elem_brackets(g: &Stsg) -> BTreeSet<String> {
        g.elems().iter().map(|e| e.tree.to_bracketed()).collect()
    }

    fn lexical_marks(tb: &Treebank) -> Vec<HashSet<NodeId>> {
        tb.trees()
            .iter()
            .map(|t| {
                t.internal_nodes()
                    .into_iter()
                    .filter(|&n| is_preterminal(t, n))
                    .collect()
            })
            .collect()
    }

    fn syms(s: &str) -> Vec<Symbol> {
        s.split_whitespace().map(Symbol::nonterminal).collect()
    }

    #[test]
    fn ssf_pass_counts_constituents() {
        let tb = bank(&[("(S (A a) (B b))", 10)]);
        let stats = ssf_pass(&tb, &lexical_marks(&tb), &LearnerConfig::default());
        let s = &stats[&syms("A B")];
        assert_eq!((s.freq_total, s.freq_c), (10, 10));
        assert!((s.cp() - 1.0).abs() < 1e-12);
        // 19 constituent and 1 flat occurrence.
        let tb = bank(&[("(S (A a) (B b))", 19), ("(S (A a) (B b) (C c))", 1)]);
        let stats = ssf_pass(&tb, &lexical_marks(&tb), &LearnerConfig::default());
        let s = &stats[&syms("A B")];
        assert_eq!((s.freq_total, s.freq_c), (20, 19));
        assert!((s.cp() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn ssf_pass_respects_length_bound() {
        let tb = bank(&[("(S (A a) (B b) (C c))", 1)]);
        let cfg = LearnerConfig { max_ssf_len: 2, ..LearnerConfig::default() };
        let stats = ssf_pass(&tb, &lexical_marks(&tb), &cfg);
        assert!(stats.contains_key(&syms("A B")));
        assert!(!stats.contains_key(&syms("A B C")));
    }

    #[test]
    fn grf_gates() {
        let cfg = LearnerConfig { phi: 5, ..LearnerConfig::default() };
        let key = syms("A B C");
        let mk = |freq_total, freq_c| SsfStats {
            freq_total,
            freq_c,
            occurrences: Vec::new(),
            contexts: Vec::new(),
        };
        assert_eq!(grf_measure(&key, &mk(10, 10), &cfg), 20);
        assert_eq!(grf_measure(&key, &mk(100, 94), &cfg), 0);
        assert_eq!(grf_measure(&key, &mk(4, 4), &cfg), 0);
    }

    fn ctx(names: [&str; 4], constituent: bool) -> CtxRecord {
        CtxRecord {
            ctx: names.map(|n| CtxSym::Sym(Symbol::nonterminal(n))),
            constituent,
        }
    }

    #[test]
    fn backoff_degenerates_to_grf() {
        let cfg = LearnerConfig { phi: 5, ..LearnerConfig::default() };
        let key = syms("A B");
        let mut stats = SsfStats::default();
        for _ in 0..10 {
            stats.contexts.push(ctx(["X", "Y", "Z", "W"], true));
            stats.freq_total += 1;
            stats.freq_c += 1;
        }
        assert_eq!(backoff_measure(&key, &stats, &cfg), grf_measure(&key, &stats, &cfg));
        assert_eq!(backoff_measure(&key, &stats, &cfg), 10);
    }

    #[test]
    fn backoff_sums_unrelated_contexts() {
        let cfg = LearnerConfig { phi: 5, ..LearnerConfig::default() };
        let key = syms("A B");
        let mut stats = SsfStats::default();
        let push = |stats: &mut SsfStats, c: CtxRecord, n: usize| {
            for _ in 0..n {
                stats.freq_total += 1;
                if c.constituent {
                    stats.freq_c += 1;
                }
                stats.contexts.push(c.clone());
            }
        };
        push(&mut stats, ctx(["X", "Y", "Z", "W"], true), 6);
        push(&mut stats, ctx(["P", "Q", "R", "T"], true), 7);
        // Pollution differing in exactly one position kills every proper
        // generalization of the two exact contexts (and the global one).
        for (group, other) in [(["X", "Y", "Z", "W"], "V1"), (["P", "Q", "R", "T"], "V2")] {
            for pos in 0..4 {
                let mut names = group;
                names[pos] = other;
                push(&mut stats, ctx(names, false), 200);
            }
        }
        assert_eq!(grf_measure(&key, &stats, &cfg), 0);
        assert_eq!(backoff_measure(&key, &stats, &cfg), 13);
    }

    #[test]
    fn learner_cuts_the_toy_bank() {
        let tb = bank(&[("(S (A a) (B b))", 10)]);
        let cfg = LearnerConfig { phi: 1, ..LearnerConfig::default() };
        let out = sequential_cover(&tb, &cfg).unwrap();
        assert_eq!(
            elem_brackets(&out.tsg),
            ["(S (A) (B))", "(A a)", "(B b)"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        );
        assert_eq!(out.learned.len(), 1);
        assert_eq!(out.learned[0].key, syms("A B"));
        assert_eq!(out.learned[0].freq_c, 10);
        // Every internal node of every tree is a cut point here.
        for (ti, tree) in tb.trees().iter().enumerate() {
            assert_eq!(out.marked.marks(ti).len(), tree.internal_nodes().len());
        }
    }

    #[test]
    fn low_cp_delays_ambiguous_sequences() {
        let tb = bank(&[("(S (A a) (B b))", 10), ("(S (A a) (B b) (C c))", 10)]);
        let cfg = LearnerConfig { phi: 1, ..LearnerConfig::default() };
        let out = sequential_cover(&tb, &cfg).unwrap();
        // In iteration 1, "A B" has cp 10/20 and is gated; "A B C" has cp 1
        // and is learned. Once those trees leave the view, "A B" reaches
        // cp 1 and is learned in iteration 2.
        assert_eq!(
            out.learned
                .iter()
                .map(|l| (l.iteration, l.key.clone()))
                .collect::<Vec<_>>(),
            vec![(1, syms("A B C")), (2, syms("A B"))]
        );
        assert_eq!(
            elem_brackets(&out.tsg),
            ["(S (A) (B))", "(S (A) (B) (C))", "(A a)", "(B b)", "(C c)"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        );
    }

    #[test]
    fn zero_coverage_emits_whole_trees() {
        let tb = bank(&[("(S (A a) (B b))", 10)]);
        let cfg = LearnerConfig {
            phi: 1,
            coverage_upper_bound: Some(0.0),
            ..LearnerConfig::default()
        };
        let out = sequential_cover(&tb, &cfg).unwrap();
        assert_eq!(
            elem_brackets(&out.tsg),
            ["(S (A a) (B b))", "(A a)", "(B b)"]
                .iter()
                .map(|s| s.to_string())
                .collect()
        );
        for (ti, tree) in tb.trees().iter().enumerate() {
            assert_eq!(out.marked.marks(ti).len(), 1);
            assert!(out.marked.marks(ti).contains(&tree.root()));
        }
    }

    /// Recomposes a tree from its cut pieces at the marks; used to check
    /// that the cuts conserve the training trees.
    fn recompose(tree: &Tree, marks: &HashSet<NodeId>, nid: NodeId) -> Tree {
        let mut piece = cut_subtree(tree, nid, marks);
        let mut cut_kids: Vec<NodeId> = Vec::new();
        fn collect(tree: &Tree, c: NodeId, marks: &HashSet<NodeId>, out: &mut Vec<NodeId>) {
            if tree.is_leaf(c) {
                return;
            }
            if marks.contains(&c) {
                out.push(c);
                return;
            }
            for &k in tree.children(c) {
                collect(tree, k, marks, out);
            }
        }
        for &c in tree.children(nid) {
            collect(tree, c, marks, &mut cut_kids);
        }
        let sites = piece.substitution_sites();
        assert_eq!(sites.len(), cut_kids.len());
        for (site, desc) in sites.into_iter().zip(cut_kids) {
            let sub = recompose(tree, marks, desc);
            piece.substitute(site, &sub);
        }
        piece
    }

    #[test]
    fn cuts_conserve_training_trees() {
        let tb = bank(&[
            ("(S (X (A a) (B b)) (C c))", 10),
            ("(S (A a) (X (C c) (B b)))", 10),
        ]);
        let out = sequential_cover(&tb, &LearnerConfig::default()).unwrap();
        let pieces = elem_brackets(&out.tsg);
        for (ti, tree) in tb.trees().iter().enumerate() {
            let marks = out.marked.marks(ti);
            assert_eq!(&recompose(tree, marks, tree.root()), tree);
            for &nid in marks {
                assert!(pieces.contains(&cut_subtree(tree, nid, marks).to_bracketed()));
            }
        }
    }

    #[test]
    fn completion_extracts_unmarked_structures() {
        // Three occurrences cut at X (marked), one left unmarked inside a
        // taller tree: the unmarked subtree joins the grammar.
        let mtb = CutMarkedTreebank::from_str(
            "(S@ (X@ (A@ a) (B@ b)))\n\
             (S@ (X@ (A@ a) (B@ b)))\n\
             (S@ (X@ (A@ a) (B@ b)))\n\
             (S@ (X (A@ a) (B@ b)))\n",
        )
        .unwrap();
        let extra = complete_ambiguity_sets(&mtb);
        assert_eq!(extra.len(), 1);
        assert_eq!(extra[0].to_bracketed(), "(X (A) (B))");
        // Fully marked or fully unmarked groups add nothing.
        let mtb = CutMarkedTreebank::from_str("(S@ (X@ (A@ a) (B@ b)))").unwrap();
        assert!(complete_ambiguity_sets(&mtb).is_empty());
    }

    #[test]
    fn integrated_parse_dispatches() {
        let tb = bank(&[
            ("(S (X (A a) (B b)) (C c))", 10),
            ("(S (A a) (X (C c) (B b)))", 10),
        ]);
        let out = sequential_cover(&tb, &LearnerConfig::default()).unwrap();
        let spec = to_acnf(&out.tsg).unwrap();
        let full =
            to_acnf(&project_dop(&tb, &ProjectionParams::default(), false).unwrap()).unwrap();
        let sent = |s: &str| {
            WordGraph::from_sentence(
                &s.split_whitespace().map(Symbol::terminal).collect::<Vec<_>>(),
            )
        };
        // A training sentence: the specialized grammar covers it.
        let r = integrated_parse(&spec, &full, &sent("a b c"));
        assert_eq!(r.dispatch, Dispatch::UseSdop);
        assert!(r.complete.contains(&(0, 3)));
        // A novel recombination only the full grammar derives.
        let r = integrated_parse(&spec, &full, &sent("c b c"));
        assert_eq!(r.dispatch, Dispatch::UseDop);
        assert!(disambig::mpd(&full, &r.full_chart).is_some());
        // Outside both string languages.
        let r = integrated_parse(&spec, &full, &sent("b b b"));
        assert_eq!(r.dispatch, Dispatch::UseDop);
        assert!(disambig::mpd(&full, &r.full_chart).is_none());
    }
}
