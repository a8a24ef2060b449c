//! Stochastic tree-substitution grammars, projection from tree-banks and the
//! textual grammar format.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::trees::{
    enumerate_subtrees, parse_bracketed, parse_marked_bracketed, treebank_lines,
    write_marked_bracketed, Cfg, CfgRule, NodeId, ProjectionParams, Symbol, SymbolKind, Tree,
    Treebank, TreebankError,
};

/// The reserved terminal substituted for out-of-vocabulary words.
pub const UNKNOWN_WORD: &str = "⟨UNK⟩";

/// Index of an internal node across all elementary trees of one grammar.
pub type OrigAddress = usize;

#[derive(Clone, Debug)]
pub struct ElementaryTree {
    pub id: usize,
    pub tree: Tree,
    /// Natural log of the substitution probability.
    pub log_prob: f64,
    /// Address of every internal node of `tree`.
    pub addresses: HashMap<NodeId, OrigAddress>,
}

impl ElementaryTree {
    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }

    pub fn root_label(&self) -> &Symbol {
        self.tree.label(self.tree.root())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AddressedNode {
    pub elem: usize,
    pub node: NodeId,
}

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("grammar has no elementary trees")]
    Empty,
    #[error("elementary tree {0} has no internal node")]
    BareLeaf(usize),
    #[error("elementary tree {0} has probability {1} outside (0, 1]")]
    BadProbability(usize, f64),
    #[error("start symbol {0:?} never appears as an elementary-tree root")]
    UnusedStart(String),
    #[error("symbol {0:?} is used both as a terminal and as a nonterminal")]
    MixedKind(String),
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("tree-bank contains the reserved terminal {UNKNOWN_WORD}")]
    ReservedUnknown,
    #[error("elementary tree {0} is not of depth 1")]
    NotDepthOne(usize),
}

/// A stochastic tree-substitution grammar: elementary trees with substitution
/// probabilities, composed by substitution at nonterminal frontier leaves.
#[derive(Clone, Debug)]
pub struct Stsg {
    start: Symbol,
    elems: Vec<ElementaryTree>,
    nonterminals: BTreeSet<Symbol>,
    terminals: BTreeSet<Symbol>,
    addr_index: Vec<AddressedNode>,
}

impl Stsg {
    /// Builds a grammar from `(tree, probability)` pairs. Shape errors are
    /// rejected here; probability normalization is reported by
    /// [`validate_stsg`] instead so that imperfect grammars can be inspected.
    pub fn new(start: Symbol, elems: Vec<(Tree, f64)>) -> Result<Stsg, GrammarError> {
        if elems.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut out = Vec::new();
        let mut addr_index = Vec::new();
        let mut nonterminals = BTreeSet::new();
        let mut terminals = BTreeSet::new();
        let mut seen_start = false;
        for (id, (tree, prob)) in elems.into_iter().enumerate() {
            if tree.is_leaf(tree.root()) {
                return Err(GrammarError::BareLeaf(id));
            }
            if !(prob > 0.0 && prob <= 1.0) {
                return Err(GrammarError::BadProbability(id, prob));
            }
            seen_start |= tree.label(tree.root()) == &start;
            let mut addresses = HashMap::new();
            for nid in tree.internal_nodes() {
                addresses.insert(nid, addr_index.len());
                addr_index.push(AddressedNode { elem: id, node: nid });
            }
            for nid in tree.preorder() {
                let label = tree.label(nid);
                match label.kind() {
                    SymbolKind::Terminal => {
                        terminals.insert(label.clone());
                    }
                    SymbolKind::Nonterminal => {
                        nonterminals.insert(label.clone());
                    }
                }
            }
            out.push(ElementaryTree { id, tree, log_prob: prob.ln(), addresses });
        }
        let nt_texts: HashSet<&str> = nonterminals.iter().map(|s| s.text()).collect();
        if let Some(bad) = terminals.iter().find(|t| nt_texts.contains(t.text())) {
            return Err(GrammarError::MixedKind(bad.text().to_string()));
        }
        if !seen_start {
            return Err(GrammarError::UnusedStart(start.text().to_string()));
        }
        Ok(Stsg { start, elems: out, nonterminals, terminals, addr_index })
    }

    pub fn start(&self) -> &Symbol {
        &self.start
    }

    pub fn elems(&self) -> &[ElementaryTree] {
        &self.elems
    }

    pub fn nonterminals(&self) -> &BTreeSet<Symbol> {
        &self.nonterminals
    }

    pub fn terminals(&self) -> &BTreeSet<Symbol> {
        &self.terminals
    }

    pub fn num_addresses(&self) -> usize {
        self.addr_index.len()
    }

    /// Resolves an address to its elementary tree and node.
    pub fn resolve(&self, addr: OrigAddress) -> Option<AddressedNode> {
        self.addr_index.get(addr).copied()
    }

    /// Elementary trees whose root carries `label`.
    pub fn roots_labelled<'a>(&'a self, label: &'a Symbol) -> impl Iterator<Item = &'a ElementaryTree> {
        self.elems.iter().filter(move |e| e.root_label() == label)
    }

    /// True when the grammar carries lexical trees for the reserved unknown
    /// word.
    pub fn handles_unknown_words(&self) -> bool {
        self.terminals.contains(&Symbol::terminal(UNKNOWN_WORD))
    }

    /// The CFG read off the elementary trees, one rule per internal node.
    pub fn underlying_cfg(&self) -> Cfg {
        let mut rules = BTreeSet::new();
        for e in &self.elems {
            for id in e.tree.internal_nodes() {
                let rhs = e.tree.children(id).iter().map(|&c| e.tree.label(c).clone()).collect();
                rules.insert(CfgRule { lhs: e.tree.label(id).clone(), rhs });
            }
        }
        Cfg {
            nonterminals: self.nonterminals.clone(),
            terminals: self.terminals.clone(),
            start: self.start.clone(),
            rules,
        }
    }
}

/// True for an elementary tree that is a single unary rule over a nonterminal
/// child; such trees cannot be brought into binary normal form and are left
/// out of projections.
fn is_single_unary(tree: &Tree) -> bool {
    let ch = tree.children(tree.root());
    ch.len() == 1 && tree.is_leaf(ch[0]) && tree.label(ch[0]).is_nonterminal()
}

fn normalize(start: Symbol, counts: Vec<(Tree, u64)>) -> Result<Stsg, GrammarError> {
    let mut by_root: BTreeMap<Symbol, u64> = BTreeMap::new();
    for (tree, count) in &counts {
        *by_root.entry(tree.label(tree.root()).clone()).or_insert(0) += count;
    }
    let elems = counts
        .into_iter()
        .map(|(tree, count)| {
            let total = by_root[tree.label(tree.root())];
            let p = count as f64 / total as f64;
            (tree, p)
        })
        .collect();
    Stsg::new(start, elems)
}

/// Projects a DOP grammar from a tree-bank: elementary trees are the subtree
/// occurrences admitted by `params`, with per-root relative-frequency
/// probabilities. With `add_one_unknowns`, every preterminal gets a lexical
/// tree over the reserved unknown word with count 1 and every other count is
/// incremented by 1 before normalizing.
pub fn project_dop(
    tb: &Treebank,
    params: &ProjectionParams,
    add_one_unknowns: bool,
) -> Result<Stsg, GrammarError> {
    let mut counts: Vec<(Tree, u64)> = Vec::new();
    let mut index: HashMap<Tree, usize> = HashMap::new();
    fn bump(counts: &mut Vec<(Tree, u64)>, index: &mut HashMap<Tree, usize>, tree: Tree, by: u64) {
        match index.get(&tree) {
            Some(&i) => counts[i].1 += by,
            None => {
                index.insert(tree.clone(), counts.len());
                counts.push((tree, by));
            }
        }
    }
    let mut preterminals: BTreeSet<Symbol> = BTreeSet::new();
    for t in tb.trees() {
        for id in t.internal_nodes() {
            if t.children(id).iter().all(|&c| t.is_leaf(c) && t.label(c).is_terminal()) {
                preterminals.insert(t.label(id).clone());
            }
        }
        for sub in enumerate_subtrees(t, params) {
            if !is_single_unary(&sub) {
                bump(&mut counts, &mut index, sub, 1);
            }
        }
    }
    if add_one_unknowns {
        if tb.trees().iter().any(|t| {
            t.leaves()
                .iter()
                .any(|&l| t.label(l) == &Symbol::terminal(UNKNOWN_WORD))
        }) {
            return Err(GrammarError::ReservedUnknown);
        }
        for (_, c) in counts.iter_mut() {
            *c += 1;
        }
        for p in preterminals {
            bump(
                &mut counts,
                &mut index,
                Tree::node(p, vec![Tree::leaf(Symbol::terminal(UNKNOWN_WORD))]),
                1,
            );
        }
    }
    normalize(tb.start().clone(), counts)
}

#[derive(Debug, Error, PartialEq)]
pub enum MarkError {
    #[error("tree {0}: root is not marked")]
    UnmarkedRoot(usize),
    #[error("tree {0}: a leaf carries a mark")]
    MarkedLeaf(usize),
    #[error(transparent)]
    Treebank(#[from] TreebankError),
}

/// A tree-bank whose trees carry cut marks on internal nodes; marked nodes
/// are elementary-tree borders.
#[derive(Clone, Debug)]
pub struct CutMarkedTreebank {
    treebank: Treebank,
    marks: Vec<HashSet<NodeId>>,
}

impl CutMarkedTreebank {
    pub fn new(treebank: Treebank, marks: Vec<HashSet<NodeId>>) -> Result<Self, MarkError> {
        assert_eq!(treebank.trees().len(), marks.len());
        for (i, (t, m)) in treebank.trees().iter().zip(&marks).enumerate() {
            if !m.contains(&t.root()) {
                return Err(MarkError::UnmarkedRoot(i));
            }
            if m.iter().any(|id| t.is_leaf(*id)) {
                return Err(MarkError::MarkedLeaf(i));
            }
        }
        Ok(CutMarkedTreebank { treebank, marks })
    }

    pub fn from_str(text: &str) -> Result<Self, MarkError> {
        let mut trees = Vec::new();
        let mut marks = Vec::new();
        for (index, line) in treebank_lines(text) {
            let (t, m) = parse_marked_bracketed(line)
                .map_err(|source| TreebankError::Parse { index, source })?;
            trees.push(t);
            marks.push(m);
        }
        CutMarkedTreebank::new(Treebank::new(trees)?, marks)
    }

    pub fn treebank(&self) -> &Treebank {
        &self.treebank
    }

    pub fn marks(&self, index: usize) -> &HashSet<NodeId> {
        &self.marks[index]
    }

    pub fn to_string(&self) -> String {
        let mut out = String::new();
        for (t, m) in self.treebank.trees().iter().zip(&self.marks) {
            out.push_str(&write_marked_bracketed(t, m));
            out.push('\n');
        }
        out
    }

    /// Marks every internal node of every tree.
    pub fn fully_marked(treebank: Treebank) -> Self {
        let marks = treebank
            .trees()
            .iter()
            .map(|t| t.internal_nodes().into_iter().collect())
            .collect();
        CutMarkedTreebank { treebank, marks }
    }
}

/// Depth of an extracted subtree where only cut-marked nodes and terminal
/// leaves count: the maximum, over root-to-leaf paths, of the number of
/// counted nodes strictly below the subtree root. When every internal node is
/// marked this equals ordinary depth.
fn marked_depth(
    tree: &Tree,
    marks: &HashSet<NodeId>,
    sub: &SubtreeShape,
) -> u32 {
    fn walk(tree: &Tree, marks: &HashSet<NodeId>, sub: &SubtreeShape, id: NodeId) -> u32 {
        if sub.leaves.contains(&id) {
            return u32::from(marks.contains(&id) || tree.label(id).is_terminal());
        }
        let below = tree
            .children(id)
            .iter()
            .map(|&c| walk(tree, marks, sub, c))
            .max()
            .unwrap_or(0);
        below + u32::from(marks.contains(&id))
    }
    tree.children(sub.root)
        .iter()
        .map(|&c| walk(tree, marks, sub, c))
        .max()
        .unwrap_or(0)
}

struct SubtreeShape {
    root: NodeId,
    /// Nodes of the original tree acting as leaves of the extracted subtree.
    leaves: HashSet<NodeId>,
}

impl SubtreeShape {
    fn materialize(&self, tree: &Tree) -> Tree {
        fn build(tree: &Tree, shape: &SubtreeShape, id: NodeId) -> Tree {
            if shape.leaves.contains(&id) || tree.is_leaf(id) {
                return Tree::leaf(tree.label(id).clone());
            }
            let children = tree
                .children(id)
                .iter()
                .map(|&c| build(tree, shape, c))
                .collect();
            Tree::node(tree.label(id).clone(), children)
        }
        build(tree, self, self.root)
    }
}

/// Projects an SDOP grammar from a cut-marked tree-bank: subtrees are rooted
/// at marked nodes with leaves at marked nodes or terminals; the depth bound
/// counts marked nodes only, the other bounds apply to the extracted shape
/// and are waived at marked-depth 1. Marking every node makes this coincide
/// with [`project_dop`] without add-one smoothing.
pub fn project_sdop(
    mtb: &CutMarkedTreebank,
    params: &ProjectionParams,
) -> Result<Stsg, GrammarError> {
    let mut counts: Vec<(Tree, u64)> = Vec::new();
    let mut index: HashMap<Tree, usize> = HashMap::new();
    let mut bump = |tree: Tree| match index.get(&tree) {
        Some(&i) => counts[i].1 += 1,
        None => {
            index.insert(tree.clone(), counts.len());
            counts.push((tree, 1));
        }
    };
    for (ti, tree) in mtb.treebank().trees().iter().enumerate() {
        let marks = mtb.marks(ti);
        for root in tree.internal_nodes() {
            if !marks.contains(&root) {
                continue;
            }
            // Enumerate cut choices: descend; at a marked node either cut or
            // expand, at an unmarked internal node always expand.
            let mut shapes: Vec<HashSet<NodeId>> = vec![HashSet::new()];
            fn expand(
                tree: &Tree,
                marks: &HashSet<NodeId>,
                id: NodeId,
                acc: &mut Vec<HashSet<NodeId>>,
            ) {
                for &c in tree.children(id) {
                    if tree.is_leaf(c) {
                        for s in acc.iter_mut() {
                            s.insert(c);
                        }
                    } else if marks.contains(&c) {
                        let mut expanded: Vec<HashSet<NodeId>> = acc.clone();
                        expand(tree, marks, c, &mut expanded);
                        for s in acc.iter_mut() {
                            s.insert(c);
                        }
                        acc.extend(expanded);
                    } else {
                        expand(tree, marks, c, acc);
                    }
                }
            }
            expand(tree, marks, root, &mut shapes);
            for leaves in shapes {
                let shape = SubtreeShape { root, leaves };
                let sub = shape.materialize(tree);
                if is_single_unary(&sub) {
                    continue;
                }
                let d = marked_depth(tree, marks, &shape);
                let admitted = d <= 1 || {
                    let sites = sub.substitution_sites().len() as u32;
                    let terms = sub
                        .frontier()
                        .iter()
                        .filter(|s| s.is_terminal())
                        .count() as u32;
                    let run = max_terminal_run(&sub);
                    params.max_depth.map_or(true, |b| d <= b)
                        && params.max_sub_sites.map_or(true, |b| sites <= b)
                        && params.max_terminals.map_or(true, |b| terms <= b)
                        && params.max_consecutive_terminals.map_or(true, |b| run <= b)
                };
                if admitted {
                    bump(sub);
                }
            }
        }
    }
    if counts.is_empty() {
        return Err(GrammarError::Empty);
    }
    normalize(mtb.treebank().start().clone(), counts)
}

fn max_terminal_run(tree: &Tree) -> u32 {
    let mut best = 0u32;
    let mut run = 0u32;
    for s in tree.frontier() {
        if s.is_terminal() {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// A stochastic CFG: rules with probabilities, normalized per left-hand side.
#[derive(Clone, Debug)]
pub struct Scfg {
    pub cfg: Cfg,
    pub probs: Vec<(CfgRule, f64)>,
}

impl Scfg {
    pub fn rules_for<'a>(&'a self, lhs: &'a Symbol) -> impl Iterator<Item = &'a (CfgRule, f64)> {
        self.probs.iter().filter(move |(r, _)| &r.lhs == lhs)
    }
}

/// Reads an SCFG off an STSG whose elementary trees all have depth 1; each
/// tree becomes one rule carrying the tree's probability.
pub fn scfg_of(stsg: &Stsg) -> Result<Scfg, GrammarError> {
    let mut probs = Vec::new();
    let mut rules = BTreeSet::new();
    for e in stsg.elems() {
        if e.tree.depth() != 1 {
            return Err(GrammarError::NotDepthOne(e.id));
        }
        let rule = CfgRule {
            lhs: e.root_label().clone(),
            rhs: e.tree.frontier(),
        };
        rules.insert(rule.clone());
        probs.push((rule, e.prob()));
    }
    Ok(Scfg {
        cfg: Cfg {
            nonterminals: stsg.nonterminals().clone(),
            terminals: stsg.terminals().clone(),
            start: stsg.start().clone(),
            rules,
        },
        probs,
    })
}

/// Validation report for an STSG. Empty when the grammar is well formed.
#[derive(Clone, Debug, Default)]
pub struct StsgDiagnostics {
    /// Roots whose probabilities do not sum to 1, with the deviation.
    pub sum_deviations: Vec<(Symbol, f64)>,
    /// A unary-rule cycle in the underlying CFG, if any.
    pub unary_cycle: Option<Vec<Symbol>>,
    /// Nonterminals not reachable from the start symbol.
    pub unreachable: Vec<Symbol>,
    /// Substitution-site labels with no elementary tree rooted there.
    pub underivable_sites: Vec<Symbol>,
}

impl StsgDiagnostics {
    pub fn is_empty(&self) -> bool {
        self.sum_deviations.is_empty()
            && self.unary_cycle.is_none()
            && self.unreachable.is_empty()
            && self.underivable_sites.is_empty()
    }

    pub fn to_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (s, d) in &self.sum_deviations {
            out.push(format!("root {s}: probability sum off by {d:+e}"));
        }
        if let Some(cycle) = &self.unary_cycle {
            let names: Vec<&str> = cycle.iter().map(|s| s.text()).collect();
            out.push(format!("unary cycle: {}", names.join(" -> ")));
        }
        for s in &self.unreachable {
            out.push(format!("unreachable symbol: {s}"));
        }
        for s in &self.underivable_sites {
            out.push(format!("no elementary tree rooted at substitution-site label: {s}"));
        }
        out
    }
}

const SUM_TOLERANCE: f64 = 1e-9;

/// Checks per-root normalization, infinite ambiguity via unary cycles,
/// reachability from the start symbol and derivability of substitution sites.
pub fn validate_stsg(stsg: &Stsg) -> StsgDiagnostics {
    let mut diag = StsgDiagnostics::default();
    let mut sums: BTreeMap<&Symbol, f64> = BTreeMap::new();
    for e in stsg.elems() {
        *sums.entry(e.root_label()).or_insert(0.0) += e.prob();
    }
    for (root, sum) in sums {
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            diag.sum_deviations.push((root.clone(), sum - 1.0));
        }
    }
    diag.unary_cycle = stsg.underlying_cfg().unary_cycle();
    // Reachability: start reaches the frontier symbols of trees rooted at any
    // reachable label.
    let mut reachable: BTreeSet<&Symbol> = BTreeSet::new();
    let mut queue = vec![stsg.start()];
    reachable.insert(stsg.start());
    while let Some(label) = queue.pop() {
        for e in stsg.roots_labelled(label) {
            for id in e.tree.preorder() {
                let s = e.tree.label(id);
                if s.is_nonterminal() && reachable.insert(s) {
                    queue.push(s);
                }
            }
        }
    }
    diag.unreachable = stsg
        .nonterminals()
        .iter()
        .filter(|s| !reachable.contains(s))
        .cloned()
        .collect();
    let root_labels: BTreeSet<&Symbol> = stsg.elems().iter().map(|e| e.root_label()).collect();
    let mut underivable: BTreeSet<Symbol> = BTreeSet::new();
    for e in stsg.elems() {
        for site in e.tree.substitution_sites() {
            let label = e.tree.label(site);
            if !root_labels.contains(label) {
                underivable.insert(label.clone());
            }
        }
    }
    diag.underivable_sites = underivable.into_iter().collect();
    diag
}

/// Clones every elementary tree `times` times, dividing each probability by
/// `times`. Root-normalization and the generated tree language are preserved
/// while the number of addresses grows by the same factor.
pub fn duplicate_elems(stsg: &Stsg, times: usize) -> Stsg {
    assert!(times >= 1);
    let mut elems = Vec::new();
    for e in stsg.elems() {
        for _ in 0..times {
            elems.push((e.tree.clone(), e.prob() / times as f64));
        }
    }
    Stsg::new(stsg.start().clone(), elems).expect("duplication preserves shape")
}

/// Serializes a grammar: header `STSG <start>`, then one
/// `<prob>\t<bracketed tree>` line per elementary tree, probabilities with
/// 15 significant digits.
pub fn stsg_to_string(stsg: &Stsg) -> String {
    let mut out = format!("STSG {}\n", stsg.start());
    for e in stsg.elems() {
        out.push_str(&format!("{:.14e}\t{}\n", e.prob(), e.tree.to_bracketed()));
    }
    out
}

/// Parses the format produced by [`stsg_to_string`]. Leaf tokens written as
/// `(A)` are substitution sites; bare tokens are terminals. A text appearing
/// as an internal label anywhere in the file is treated as a nonterminal on
/// frontiers as well.
pub fn stsg_from_str(text: &str) -> Result<Stsg, GrammarError> {
    let lines = treebank_lines(text);
    let mut iter = lines.into_iter();
    let (hline, header) = iter.next().ok_or(GrammarError::Empty)?;
    let start_text = header
        .strip_prefix("STSG ")
        .ok_or_else(|| GrammarError::Format {
            line: hline,
            message: "expected header: STSG <start>".into(),
        })?
        .trim();
    if start_text.is_empty() || start_text.contains(char::is_whitespace) {
        return Err(GrammarError::Format {
            line: hline,
            message: "malformed start symbol".into(),
        });
    }
    let mut elems = Vec::new();
    for (line, body) in iter {
        let (p, t) = body.split_once('\t').ok_or_else(|| GrammarError::Format {
            line,
            message: "expected <prob>\\t<tree>".into(),
        })?;
        let prob: f64 = p.trim().parse().map_err(|_| GrammarError::Format {
            line,
            message: format!("bad probability {p:?}"),
        })?;
        let tree = parse_bracketed(t.trim()).map_err(|e| GrammarError::Format {
            line,
            message: e.to_string(),
        })?;
        elems.push((tree, prob));
    }
    // Kind reconciliation across the whole file: a text used as an internal
    // label anywhere must be nonterminal on every frontier.
    let internal: HashSet<String> = elems
        .iter()
        .flat_map(|(t, _)| {
            t.internal_nodes()
                .into_iter()
                .map(|id| t.label(id).text().to_string())
                .collect::<Vec<_>>()
        })
        .collect();
    let elems = elems
        .into_iter()
        .map(|(t, p)| (promote_leaves(&t, &internal), p))
        .collect();
    Stsg::new(Symbol::nonterminal(start_text), elems)
}

fn promote_leaves(tree: &Tree, internal: &HashSet<String>) -> Tree {
    fn walk(tree: &Tree, id: NodeId, internal: &HashSet<String>) -> Tree {
        if tree.is_leaf(id) {
            let label = tree.label(id);
            if label.is_terminal() && internal.contains(label.text()) {
                return Tree::leaf(Symbol::nonterminal(label.text()));
            }
            return Tree::leaf(label.clone());
        }
        let children = tree
            .children(id)
            .iter()
            .map(|&c| walk(tree, c, internal))
            .collect();
        Tree::node(tree.label(id).clone(), children)
    }
    walk(tree, tree.root(), internal)
}
