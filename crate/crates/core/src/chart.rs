//! Word-graphs and CKY chart parsing over the CNF cover grammar, plus a
//! free-standing Viterbi parser for stochastic CFGs and the construction of a
//! single-parse chart used for parse probabilities.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::acnf::{AcnfError, AcnfGrammar, CnfRule, RuleId};
use crate::grammar::{Scfg, UNKNOWN_WORD};
use crate::trees::{NodeId, Symbol, Tree};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub word: Symbol,
    pub prob: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum WordGraphError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("transition {from} -> {to} does not move forward")]
    NotForward { from: usize, to: usize },
    #[error("transition target {0} is not a state")]
    BadState(usize),
    #[error("transition probability {0} outside (0, 1]")]
    BadProbability(f64),
    #[error("word-graph needs at least two states")]
    TooSmall,
}

/// An acyclic weighted word-graph over states `0..=last_state()`; every
/// transition moves strictly forward, so paths from 0 to the last state are
/// finite. A sentence is the special case of a linear graph.
#[derive(Clone, Debug)]
pub struct WordGraph {
    num_states: usize,
    transitions: Vec<Transition>,
}

impl WordGraph {
    pub fn new(num_states: usize, transitions: Vec<Transition>) -> Result<Self, WordGraphError> {
        if num_states < 2 {
            return Err(WordGraphError::TooSmall);
        }
        for t in &transitions {
            if t.from >= t.to {
                return Err(WordGraphError::NotForward { from: t.from, to: t.to });
            }
            if t.to >= num_states {
                return Err(WordGraphError::BadState(t.to));
            }
            if !(t.prob > 0.0 && t.prob <= 1.0) {
                return Err(WordGraphError::BadProbability(t.prob));
            }
        }
        Ok(WordGraph { num_states, transitions })
    }

    pub fn from_sentence(words: &[Symbol]) -> Self {
        let transitions = words
            .iter()
            .enumerate()
            .map(|(i, w)| Transition { from: i, to: i + 1, word: w.clone(), prob: 1.0 })
            .collect();
        WordGraph { num_states: words.len() + 1, transitions }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn last_state(&self) -> usize {
        self.num_states - 1
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// States whose outgoing probabilities do not sum to 1 (final state and
    /// states without outgoing transitions are skipped). Informational only.
    pub fn unnormalized_states(&self) -> Vec<(usize, f64)> {
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        for t in &self.transitions {
            *sums.entry(t.from).or_insert(0.0) += t.prob;
        }
        sums.into_iter()
            .filter(|(_, s)| (s - 1.0).abs() > 1e-9)
            .collect()
    }

    /// All full paths as `(word sequence, path probability)`.
    pub fn paths(&self) -> Vec<(Vec<Symbol>, f64)> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<Symbol>, f64)> = vec![(0, Vec::new(), 1.0)];
        while let Some((state, words, prob)) = stack.pop() {
            if state == self.last_state() {
                out.push((words.clone(), prob));
            }
            for t in &self.transitions {
                if t.from == state {
                    let mut w = words.clone();
                    w.push(t.word.clone());
                    stack.push((t.to, w, prob * t.prob));
                }
            }
        }
        out
    }

    /// Total path probability per accepted word sequence.
    pub fn accepted_strings(&self) -> HashMap<Vec<Symbol>, f64> {
        let mut out: HashMap<Vec<Symbol>, f64> = HashMap::new();
        for (words, prob) in self.paths() {
            *out.entry(words).or_insert(0.0) += prob;
        }
        out
    }

    /// States reachable from any state of `from` by one transition labelled
    /// `word`.
    pub fn step(&self, from: &HashSet<usize>, word: &Symbol) -> HashSet<usize> {
        self.transitions
            .iter()
            .filter(|t| from.contains(&t.from) && &t.word == word)
            .map(|t| t.to)
            .collect()
    }

    /// Serializes as `WG <num states>` followed by one
    /// `TRANS <from> <to> <word> <prob>` line per transition.
    pub fn to_string(&self) -> String {
        let mut out = format!("WG {}\n", self.num_states);
        for t in &self.transitions {
            out.push_str(&format!("TRANS {} {} {} {:.14e}\n", t.from, t.to, t.word, t.prob));
        }
        out
    }
}

/// Parses a file of word-graphs: each `WG` header starts a new graph.
pub fn word_graphs_from_str(text: &str) -> Result<Vec<WordGraph>, WordGraphError> {
    let mut out = Vec::new();
    let mut current: Option<(usize, Vec<Transition>)> = None;
    let flush = |cur: &mut Option<(usize, Vec<Transition>)>,
                     out: &mut Vec<WordGraph>|
     -> Result<(), WordGraphError> {
        if let Some((n, ts)) = cur.take() {
            out.push(WordGraph::new(n, ts)?);
        }
        Ok(())
    };
    for (line, body) in crate::trees::treebank_lines(text) {
        if let Some(rest) = body.strip_prefix("WG") {
            flush(&mut current, &mut out)?;
            let n: usize = rest.trim().parse().map_err(|_| WordGraphError::Format {
                line,
                message: "expected WG <num states>".into(),
            })?;
            current = Some((n, Vec::new()));
        } else if let Some(rest) = body.strip_prefix("TRANS") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let err = |message: &str| WordGraphError::Format { line, message: message.into() };
            if parts.len() != 4 {
                return Err(err("expected TRANS <from> <to> <word> <prob>"));
            }
            let from = parts[0].parse().map_err(|_| err("bad state"))?;
            let to = parts[1].parse().map_err(|_| err("bad state"))?;
            let prob = parts[3].parse().map_err(|_| err("bad probability"))?;
            let t = Transition { from, to, word: Symbol::terminal(parts[2]), prob };
            match &mut current {
                Some((_, ts)) => ts.push(t),
                None => return Err(err("TRANS before WG header")),
            }
        } else {
            return Err(WordGraphError::Format {
                line,
                message: format!("unrecognized line: {body}"),
            });
        }
    }
    flush(&mut current, &mut out)?;
    Ok(out)
}

/// A chart item: a dotted CNF rule over a span. Dotted (non-final) binary
/// items are derivable from the final items present, so the chart stores
/// finals and reconstructs the rest.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Item {
    /// `A -> w •`
    LexicalFinal(RuleId),
    /// `A -> B • C`
    BinaryPartial(RuleId),
    /// `A -> B C •`
    BinaryFinal(RuleId),
}

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("unknown word {0:?} (grammar has no unknown-word trees)")]
    UnknownWord(String),
    #[error("parse uses a rule missing from the grammar: {0}")]
    RuleNotInGrammar(String),
    #[error(transparent)]
    Shape(#[from] AcnfError),
}

/// The parse forest produced by CKY: final items per span with their
/// back-structure (split points for binary items, transition probabilities
/// for lexical items).
#[derive(Clone, Debug)]
pub struct Chart {
    n: usize,
    /// Lexical final items per span with the transition probability consumed.
    lexical: HashMap<(usize, usize), Vec<(RuleId, f64)>>,
    /// Split points per final binary item occurrence, ascending.
    splits: HashMap<(RuleId, usize, usize), Vec<usize>>,
    /// Final items (lexical and binary) per (lhs label, span), ascending ids.
    finals: HashMap<(Symbol, usize, usize), Vec<RuleId>>,
}

impl Chart {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lexical_at(&self, i: usize, j: usize) -> &[(RuleId, f64)] {
        self.lexical.get(&(i, j)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn splits_of(&self, rule: RuleId, i: usize, j: usize) -> &[usize] {
        self.splits.get(&(rule, i, j)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn finals_at(&self, lhs: &Symbol, i: usize, j: usize) -> &[RuleId] {
        self.finals
            .get(&(lhs.clone(), i, j))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Binary final items present over the span, ascending rule id.
    pub fn binary_finals_at(&self, i: usize, j: usize) -> Vec<RuleId> {
        let mut out: Vec<RuleId> = self
            .splits
            .keys()
            .filter(|(_, a, b)| *a == i && *b == j)
            .map(|(r, _, _)| *r)
            .collect();
        out.sort_unstable();
        out
    }

    /// Recognition: some final item with the start label covers 0..n.
    pub fn recognizes(&self, start: &Symbol) -> bool {
        !self.finals_at(start, 0, self.n).is_empty()
    }

    /// All items over a span, the dotted ones reconstructed: `A -> B • C` is
    /// present iff some final item with left-hand side B is.
    pub fn items_at(&self, g: &AcnfGrammar, i: usize, j: usize) -> Vec<Item> {
        let mut out: Vec<Item> = Vec::new();
        for &(rule, _) in self.lexical_at(i, j) {
            out.push(Item::LexicalFinal(rule));
        }
        for rule in self.binary_finals_at(i, j) {
            out.push(Item::BinaryFinal(rule));
        }
        let mut partial: HashSet<RuleId> = HashSet::new();
        for ((lhs, a, b), _) in self.finals.iter() {
            if *a == i && *b == j {
                for &r in g.binary_rules_with_left(lhs) {
                    partial.insert(r);
                }
            }
        }
        let mut partial: Vec<RuleId> = partial.into_iter().collect();
        partial.sort_unstable();
        out.extend(partial.into_iter().map(Item::BinaryPartial));
        out
    }
}

fn push_final(chart: &mut Chart, lhs: &Symbol, rule: RuleId, i: usize, j: usize) {
    let e = chart.finals.entry((lhs.clone(), i, j)).or_default();
    if !e.contains(&rule) {
        e.push(rule);
        e.sort_unstable();
    }
}

/// CKY over a word-graph: lexical items are seeded from transitions, binary
/// items deduced bottom-up over span widths.
pub fn cky_wordgraph(g: &AcnfGrammar, wg: &WordGraph) -> Chart {
    let n = wg.last_state();
    let mut chart = Chart {
        n,
        lexical: HashMap::new(),
        splits: HashMap::new(),
        finals: HashMap::new(),
    };
    for t in wg.transitions() {
        for &rule in g.lexical_rules_for(&t.word) {
            // Parallel transitions with the same word are distinct paths:
            // every entry is kept, so max aggregation sees the best path and
            // sum aggregation sees their total weight.
            let e = chart.lexical.entry((t.from, t.to)).or_default();
            e.push((rule, t.prob));
            let lhs = g.rules()[rule].lhs().clone();
            push_final(&mut chart, &lhs, rule, t.from, t.to);
        }
    }
    for (_, e) in chart.lexical.iter_mut() {
        e.sort_by_key(|(r, _)| *r);
    }
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width;
            for k in i + 1..j {
                // Dotted items A -> B • C over [i, k] exist for every final
                // item with lhs B there; complete them with C finals at [k, j].
                let left_lhs: Vec<Symbol> = chart
                    .finals
                    .iter()
                    .filter(|((_, a, b), _)| *a == i && *b == k)
                    .map(|((s, _, _), _)| s.clone())
                    .collect();
                for b in left_lhs {
                    for &rule in g.binary_rules_with_left(&b) {
                        let (lhs, right) = match &g.rules()[rule] {
                            CnfRule::Binary { lhs, right, .. } => (lhs.clone(), right),
                            CnfRule::Lexical { .. } => unreachable!(),
                        };
                        if !chart.finals_at(right, k, j).is_empty() {
                            let e = chart.splits.entry((rule, i, j)).or_default();
                            if !e.contains(&k) {
                                e.push(k);
                            }
                            push_final(&mut chart, &lhs, rule, i, j);
                        }
                    }
                }
            }
        }
    }
    for (_, e) in chart.splits.iter_mut() {
        e.sort_unstable();
    }
    chart
}

/// Replaces words missing from the grammar's lexicon by the reserved unknown
/// word when the grammar carries unknown-word trees; errors otherwise.
pub fn map_unknown_words(g: &AcnfGrammar, words: &[Symbol]) -> Result<Vec<Symbol>, ChartError> {
    let mut out = Vec::with_capacity(words.len());
    for w in words {
        if g.stsg().terminals().contains(w) {
            out.push(w.clone());
        } else if g.stsg().handles_unknown_words() {
            out.push(Symbol::terminal(UNKNOWN_WORD));
        } else {
            return Err(ChartError::UnknownWord(w.text().to_string()));
        }
    }
    Ok(out)
}

/// CKY over a sentence; out-of-vocabulary words go through the unknown-word
/// mapping.
pub fn cky_sentence(g: &AcnfGrammar, words: &[Symbol]) -> Result<Chart, ChartError> {
    let mapped = map_unknown_words(g, words)?;
    Ok(cky_wordgraph(g, &WordGraph::from_sentence(&mapped)))
}

/// Builds the single-parse chart for a parse over the source symbols: the
/// parse is reshaped like the grammar's elementary trees and every node
/// becomes one item occurrence. The resulting chart contains exactly the
/// derivations of this parse.
pub fn tree_to_chart(g: &AcnfGrammar, parse: &Tree) -> Result<Chart, ChartError> {
    let shaped = g.shape_parse(parse)?;
    let n = shaped.frontier().len();
    let mut chart = Chart {
        n,
        lexical: HashMap::new(),
        splits: HashMap::new(),
        finals: HashMap::new(),
    };
    // Span of each node by cumulative frontier width.
    fn walk(
        g: &AcnfGrammar,
        t: &Tree,
        id: NodeId,
        start: usize,
        chart: &mut Chart,
    ) -> Result<usize, ChartError> {
        if t.is_leaf(id) {
            if t.label(id).is_nonterminal() {
                return Err(ChartError::Shape(AcnfError::IncompleteParse));
            }
            return Ok(start + 1);
        }
        let ch = t.children(id);
        let rule = if ch.len() == 1 {
            CnfRule::Lexical { lhs: t.label(id).clone(), word: t.label(ch[0]).clone() }
        } else {
            CnfRule::Binary {
                lhs: t.label(id).clone(),
                left: t.label(ch[0]).clone(),
                right: t.label(ch[1]).clone(),
            }
        };
        let rule_id = g
            .rule_id(&rule)
            .ok_or_else(|| ChartError::RuleNotInGrammar(rule.to_string()))?;
        let mut end = start;
        let mut boundaries = Vec::new();
        for &c in ch {
            end = walk(g, t, c, end, chart)?;
            boundaries.push(end);
        }
        match &g.rules()[rule_id] {
            CnfRule::Lexical { lhs, .. } => {
                let e = chart.lexical.entry((start, end)).or_default();
                if !e.iter().any(|(r, _)| *r == rule_id) {
                    e.push((rule_id, 1.0));
                }
                push_final(chart, lhs, rule_id, start, end);
            }
            CnfRule::Binary { lhs, .. } => {
                let k = boundaries[0];
                let e = chart.splits.entry((rule_id, start, end)).or_default();
                if !e.contains(&k) {
                    e.push(k);
                    e.sort_unstable();
                }
                push_final(chart, lhs, rule_id, start, end);
            }
        }
        Ok(end)
    }
    walk(g, &shaped, shaped.root(), 0, &mut chart)?;
    Ok(chart)
}

/// Viterbi parsing for a stochastic CFG over a sentence or word-graph: the
/// most probable derivation (rule tree), including transition probabilities.
/// Rules of arbitrary arity are matched by recursive span splitting, which is
/// exact on the small inputs this is meant for. Ties break toward earlier
/// rules and splits.
pub fn scfg_viterbi(scfg: &Scfg, wg: &WordGraph) -> Option<(Tree, f64)> {
    let n = wg.last_state();
    let mut memo: HashMap<(Symbol, usize, usize), Option<(Tree, f64)>> = HashMap::new();
    let mut in_progress: HashSet<(Symbol, usize, usize)> = HashSet::new();
    let result = best(scfg, wg, &scfg.cfg.start, 0, n, &mut memo, &mut in_progress)?;
    Some(result)
}

fn best(
    scfg: &Scfg,
    wg: &WordGraph,
    sym: &Symbol,
    i: usize,
    j: usize,
    memo: &mut HashMap<(Symbol, usize, usize), Option<(Tree, f64)>>,
    in_progress: &mut HashSet<(Symbol, usize, usize)>,
) -> Option<(Tree, f64)> {
    let key = (sym.clone(), i, j);
    if let Some(v) = memo.get(&key) {
        return v.clone();
    }
    if sym.is_terminal() {
        let hit = wg
            .transitions()
            .iter()
            .filter(|t| t.from == i && t.to == j && &t.word == sym)
            .map(|t| t.prob)
            .fold(None::<f64>, |acc, p| Some(acc.map_or(p, |a| a.max(p))));
        let v = hit.map(|p| (Tree::leaf(sym.clone()), p.ln()));
        memo.insert(key, v.clone());
        return v;
    }
    // Unary-rule chains could recurse on the same key; the grammar validator
    // rejects unary cycles, but guard anyway.
    if !in_progress.insert(key.clone()) {
        return None;
    }
    let mut out: Option<(Tree, f64)> = None;
    for (rule, prob) in scfg.rules_for(sym) {
        if let Some((children, score)) = fit(scfg, wg, &rule.rhs, i, j, memo, in_progress) {
            let total = score + prob.ln();
            let better = out.as_ref().map_or(true, |(_, s)| total > *s);
            if better {
                out = Some((Tree::node(sym.clone(), children), total));
            }
        }
    }
    in_progress.remove(&key);
    memo.insert(key, out.clone());
    out
}

fn fit(
    scfg: &Scfg,
    wg: &WordGraph,
    rhs: &[Symbol],
    i: usize,
    j: usize,
    memo: &mut HashMap<(Symbol, usize, usize), Option<(Tree, f64)>>,
    in_progress: &mut HashSet<(Symbol, usize, usize)>,
) -> Option<(Vec<Tree>, f64)> {
    if rhs.len() == 1 {
        let (t, s) = best(scfg, wg, &rhs[0], i, j, memo, in_progress)?;
        return Some((vec![t], s));
    }
    let mut out: Option<(Vec<Tree>, f64)> = None;
    for k in i + 1..j {
        if let Some((first, s1)) = best(scfg, wg, &rhs[0], i, k, memo, in_progress) {
            if let Some((rest, s2)) = fit(scfg, wg, &rhs[1..], k, j, memo, in_progress) {
                let total = s1 + s2;
                if out.as_ref().map_or(true, |(_, s)| total > *s) {
                    let mut children = vec![first];
                    children.extend(rest);
                    out = Some((children, total));
                }
            }
        }
    }
    out
}
