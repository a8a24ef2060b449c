//! Disambiguation over a parse forest: the most probable derivation, input
//! probabilities, and single-parse probabilities, plus brute-force
//! enumerators used to cross-check the chart algorithms on small inputs.
//!
//! Phase one (in [`crate::chart`]) builds the CKY forest over the CNF cover
//! grammar. Phase two, here, scores node occurrences per span: a lexical
//! occurrence scores its transition probability (times the tree probability
//! at roots); a binary occurrence combines its two children over each split
//! point, where an internal child must be the recorded child address and a
//! substitution-site child may be any root occurrence with the right label.
//! The tree probability enters exactly once per elementary tree, at its root
//! occurrence.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::acnf::{AcnfGrammar, Address, ChildSlot, CnfRule, DecoratedTree};
use crate::chart::{cky_wordgraph, tree_to_chart, Chart, WordGraph};
use crate::grammar::Stsg;
use crate::trees::{NodeId, Symbol, Tree};

/// How binary occurrences locate their viable children.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    /// Internal children are found by one table lookup; site children go
    /// through a per-(label, span) cache of the best root occurrence. The
    /// work per occurrence-span pair is constant.
    Optimized,
    /// Every child is found by testing each occurrence of each final item
    /// over the child span for viability. Quadratic in occurrence counts;
    /// kept as the contrast case for the instrumentation.
    NaivePairwise,
}

/// Instrumentation for the viability recursion.
#[derive(Clone, Copy, Debug, Default)]
pub struct SearchStats {
    /// Child resolutions performed: one per internal lookup or cache hit,
    /// one per root occurrence scanned while filling a cache entry, and one
    /// per pairwise test in naive mode.
    pub viability_checks: u64,
}

#[derive(Clone, Copy)]
enum Back {
    Lexical,
    Binary { k: usize, left: Address, right: Address },
}

#[derive(Clone, Copy)]
struct Scored {
    log: f64,
    back: Back,
}

/// A most probable derivation with everything read off it.
#[derive(Clone, Debug)]
pub struct DerivationResult {
    /// The parse over the source symbols, decorated with source addresses.
    pub parse: DecoratedTree,
    /// The parse over the cover grammar, decorated with cover addresses.
    pub cnf_parse: DecoratedTree,
    /// Elementary tree ids in leftmost substitution order.
    pub derivation: Vec<usize>,
    /// Natural log of the derivation probability, including transition
    /// probabilities when the chart came from a word-graph.
    pub log_prob: f64,
    /// The terminal string the derivation covers.
    pub sentence: Vec<Symbol>,
}

fn resolve_child_max(
    g: &AcnfGrammar,
    chart: &Chart,
    scores: &HashMap<(Address, usize, usize), Scored>,
    agg: &mut HashMap<(Symbol, usize, usize), Option<(f64, Address)>>,
    stats: &mut SearchStats,
    mode: SearchMode,
    slot: &ChildSlot,
    sym: &Symbol,
    i: usize,
    j: usize,
) -> Option<(f64, Address)> {
    match mode {
        SearchMode::Optimized => match slot {
            ChildSlot::Internal(cc) => {
                stats.viability_checks += 1;
                scores.get(&(*cc, i, j)).map(|s| (s.log, *cc))
            }
            ChildSlot::Site => {
                // Substitution viability is "some elementary-tree root with
                // this label covers the span": one check per resolution; the
                // per-span best root is cached and the max over the
                // precomputed root list is aggregation, not further checks.
                stats.viability_checks += 1;
                if let Some(cached) = agg.get(&(sym.clone(), i, j)) {
                    return *cached;
                }
                let mut best: Option<(f64, Address)> = None;
                for &rule in chart.finals_at(sym, i, j) {
                    for &r in g.root_occurrences(rule) {
                        if let Some(s) = scores.get(&(r, i, j)) {
                            if best.map_or(true, |(b, _)| s.log > b) {
                                best = Some((s.log, r));
                            }
                        }
                    }
                }
                agg.insert((sym.clone(), i, j), best);
                best
            }
        },
        SearchMode::NaivePairwise => {
            let mut best: Option<(f64, Address)> = None;
            for &rule in chart.finals_at(sym, i, j) {
                for &cc in g.occurrences(rule) {
                    stats.viability_checks += 1;
                    let viable = match slot {
                        ChildSlot::Internal(x) => cc == *x,
                        ChildSlot::Site => g.addr(cc).is_root,
                    };
                    if !viable {
                        continue;
                    }
                    if let Some(s) = scores.get(&(cc, i, j)) {
                        if best.map_or(true, |(b, _)| s.log > b) {
                            best = Some((s.log, cc));
                        }
                    }
                }
            }
            best
        }
    }
}

/// Best viable score per (occurrence, span), spans by ascending width.
/// Ties break toward earlier splits, rules and addresses, so the winner is
/// deterministic.
fn best_scores(
    g: &AcnfGrammar,
    chart: &Chart,
    mode: SearchMode,
) -> (HashMap<(Address, usize, usize), Scored>, SearchStats) {
    let n = chart.n();
    let mut scores: HashMap<(Address, usize, usize), Scored> = HashMap::new();
    let mut agg: HashMap<(Symbol, usize, usize), Option<(f64, Address)>> = HashMap::new();
    let mut stats = SearchStats::default();
    for width in 1..=n {
        for i in 0..=n - width {
            let j = i + width;
            for &(rule, trans) in chart.lexical_at(i, j) {
                for &c in g.occurrences(rule) {
                    let info = g.addr(c);
                    scores.insert(
                        (c, i, j),
                        Scored { log: info.pf_log + trans.ln(), back: Back::Lexical },
                    );
                }
            }
            for rule in chart.binary_finals_at(i, j) {
                let (left_sym, right_sym) = match &g.rules()[rule] {
                    CnfRule::Binary { left, right, .. } => (left.clone(), right.clone()),
                    CnfRule::Lexical { .. } => unreachable!(),
                };
                for &c in g.occurrences(rule) {
                    let info = g.addr(c);
                    let slots = info.slots.clone().expect("binary occurrence has slots");
                    let mut best: Option<Scored> = None;
                    for &k in chart.splits_of(rule, i, j) {
                        let Some((ls, la)) = resolve_child_max(
                            g, chart, &scores, &mut agg, &mut stats, mode, &slots[0],
                            &left_sym, i, k,
                        ) else {
                            continue;
                        };
                        let Some((rs, ra)) = resolve_child_max(
                            g, chart, &scores, &mut agg, &mut stats, mode, &slots[1],
                            &right_sym, k, j,
                        ) else {
                            continue;
                        };
                        let cand = ls + rs + info.pf_log;
                        if best.map_or(true, |b| cand > b.log) {
                            best = Some(Scored {
                                log: cand,
                                back: Back::Binary { k, left: la, right: ra },
                            });
                        }
                    }
                    if let Some(b) = best {
                        scores.insert((c, i, j), b);
                    }
                }
            }
        }
    }
    (scores, stats)
}

enum DKid {
    Term(Symbol),
    Node(DNode),
}

struct DNode {
    label: Symbol,
    addr: Address,
    kids: Vec<DKid>,
}

fn extract(
    g: &AcnfGrammar,
    scores: &HashMap<(Address, usize, usize), Scored>,
    c: Address,
    i: usize,
    j: usize,
) -> DNode {
    let info = g.addr(c);
    match scores[&(c, i, j)].back {
        Back::Lexical => {
            let word = match &g.rules()[info.rule] {
                CnfRule::Lexical { word, .. } => word.clone(),
                CnfRule::Binary { .. } => unreachable!(),
            };
            DNode { label: info.label.clone(), addr: c, kids: vec![DKid::Term(word)] }
        }
        Back::Binary { k, left, right } => DNode {
            label: info.label.clone(),
            addr: c,
            kids: vec![
                DKid::Node(extract(g, scores, left, i, k)),
                DKid::Node(extract(g, scores, right, k, j)),
            ],
        },
    }
}

fn dnode_tree(d: &DNode) -> Tree {
    let kids = d
        .kids
        .iter()
        .map(|k| match k {
            DKid::Term(w) => Tree::leaf(w.clone()),
            DKid::Node(n) => dnode_tree(n),
        })
        .collect();
    Tree::node(d.label.clone(), kids)
}

fn dnode_assign(t: &Tree, nid: NodeId, d: &DNode, map: &mut HashMap<NodeId, usize>) {
    map.insert(nid, d.addr);
    for (&cid, kid) in t.children(nid).iter().zip(&d.kids) {
        if let DKid::Node(n) = kid {
            dnode_assign(t, cid, n, map);
        }
    }
}

/// Elementary tree ids of a decorated source parse, in leftmost substitution
/// order (preorder over the elementary tree roots).
pub fn derivation_ids(stsg: &Stsg, parse: &DecoratedTree) -> Vec<usize> {
    let mut ids = Vec::new();
    for nid in parse.tree.preorder() {
        if parse.tree.is_leaf(nid) {
            continue;
        }
        let addr = parse.addrs[&nid];
        let an = stsg.resolve(addr).expect("decorated address resolves");
        if an.node == stsg.elems()[an.elem].tree.root() {
            ids.push(an.elem);
        }
    }
    ids
}

/// Most probable derivation over the chart, with instrumentation.
pub fn mpd_with_stats(
    g: &AcnfGrammar,
    chart: &Chart,
    mode: SearchMode,
) -> (Option<DerivationResult>, SearchStats) {
    let (scores, stats) = best_scores(g, chart, mode);
    let n = chart.n();
    let mut top: Option<(f64, Address)> = None;
    for label in g.start_labels() {
        for &rule in chart.finals_at(label, 0, n) {
            for &c in g.root_occurrences(rule) {
                if let Some(s) = scores.get(&(c, 0, n)) {
                    if top.map_or(true, |(b, _)| s.log > b) {
                        top = Some((s.log, c));
                    }
                }
            }
        }
    }
    let Some((log, c)) = top else { return (None, stats) };
    let d = extract(g, &scores, c, 0, n);
    let tree = dnode_tree(&d);
    let mut addrs = HashMap::new();
    dnode_assign(&tree, tree.root(), &d, &mut addrs);
    let cnf_parse = DecoratedTree { tree, addrs };
    let parse = g.reverse_parse(&cnf_parse).expect("chart parse reverses");
    let derivation = derivation_ids(g.stsg(), &parse);
    let sentence = parse.tree.frontier();
    (
        Some(DerivationResult { parse, cnf_parse, derivation, log_prob: log, sentence }),
        stats,
    )
}

/// Most probable derivation over the chart.
pub fn mpd(g: &AcnfGrammar, chart: &Chart) -> Option<DerivationResult> {
    mpd_with_stats(g, chart, SearchMode::Optimized).0
}

/// Most probable derivation over a word-graph, transition probabilities
/// included in the score.
pub fn mpid(g: &AcnfGrammar, wg: &WordGraph) -> Option<DerivationResult> {
    mpd(g, &cky_wordgraph(g, wg))
}

/// Spans over which some elementary tree root has a viable derivation: the
/// grammar derives exactly that stretch of the input from that root.
pub fn viable_root_spans(g: &AcnfGrammar, chart: &Chart) -> HashSet<(usize, usize)> {
    let (scores, _) = best_scores(g, chart, SearchMode::Optimized);
    scores
        .keys()
        .filter(|&&(c, _, _)| g.addr(c).is_root)
        .map(|&(_, i, j)| (i, j))
        .collect()
}

/// Total viable probability per (occurrence, span), linear scale.
fn total_scores(g: &AcnfGrammar, chart: &Chart) -> HashMap<(Address, usize, usize), f64> {
    let n = chart.n();
    let mut scores: HashMap<(Address, usize, usize), f64> = HashMap::new();
    let mut agg: HashMap<(Symbol, usize, usize), f64> = HashMap::new();
    for width in 1..=n {
        for i in 0..=n - width {
            let j = i + width;
            for &(rule, trans) in chart.lexical_at(i, j) {
                for &c in g.occurrences(rule) {
                    scores.insert((c, i, j), g.addr(c).pf_log.exp() * trans);
                }
            }
            for rule in chart.binary_finals_at(i, j) {
                let (left_sym, right_sym) = match &g.rules()[rule] {
                    CnfRule::Binary { left, right, .. } => (left.clone(), right.clone()),
                    CnfRule::Lexical { .. } => unreachable!(),
                };
                for &c in g.occurrences(rule) {
                    let info = g.addr(c);
                    let slots = info.slots.clone().expect("binary occurrence has slots");
                    let mut total = 0.0;
                    for &k in chart.splits_of(rule, i, j) {
                        let l = child_total(g, chart, &scores, &mut agg, &slots[0], &left_sym, i, k);
                        let r =
                            child_total(g, chart, &scores, &mut agg, &slots[1], &right_sym, k, j);
                        total += l * r;
                    }
                    if total > 0.0 {
                        scores.insert((c, i, j), total * info.pf_log.exp());
                    }
                }
            }
        }
    }
    scores
}

fn child_total(
    g: &AcnfGrammar,
    chart: &Chart,
    scores: &HashMap<(Address, usize, usize), f64>,
    agg: &mut HashMap<(Symbol, usize, usize), f64>,
    slot: &ChildSlot,
    sym: &Symbol,
    i: usize,
    j: usize,
) -> f64 {
    match slot {
        ChildSlot::Internal(cc) => scores.get(&(*cc, i, j)).copied().unwrap_or(0.0),
        ChildSlot::Site => {
            if let Some(&cached) = agg.get(&(sym.clone(), i, j)) {
                return cached;
            }
            let mut total = 0.0;
            for &rule in chart.finals_at(sym, i, j) {
                for &r in g.root_occurrences(rule) {
                    total += scores.get(&(r, i, j)).copied().unwrap_or(0.0);
                }
            }
            agg.insert((sym.clone(), i, j), total);
            total
        }
    }
}

/// Natural log of the total probability of the chart's input: the sum over
/// all derivations of all start-rooted full-span parses. `NEG_INFINITY` when
/// the input has no derivation.
pub fn input_probability(g: &AcnfGrammar, chart: &Chart) -> f64 {
    let scores = total_scores(g, chart);
    let n = chart.n();
    let mut total = 0.0;
    for label in g.start_labels() {
        for &rule in chart.finals_at(label, 0, n) {
            for &c in g.root_occurrences(rule) {
                total += scores.get(&(c, 0, n)).copied().unwrap_or(0.0);
            }
        }
    }
    if total > 0.0 {
        total.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Natural log of the total probability of one parse tree: the sum over the
/// derivations producing exactly that tree. A parse the grammar cannot
/// produce scores `NEG_INFINITY` rather than erroring.
pub fn parse_probability(g: &AcnfGrammar, parse: &Tree) -> f64 {
    match tree_to_chart(g, parse) {
        Ok(chart) => input_probability(g, &chart),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Checks that a decorated parse is a derivation tree of the grammar: the
/// root carries the start symbol and a root address, internal children carry
/// the exact child address of their parent's elementary tree (parenthood),
/// and children at substitution sites carry a root address whose tree's root
/// label matches the site (substitution).
pub fn recognize_derivation_tree(stsg: &Stsg, parse: &DecoratedTree) -> bool {
    let root = parse.tree.root();
    if parse.tree.label(root) != stsg.start() {
        return false;
    }
    check_node(stsg, parse, root, None)
}

/// `required` is the address this node must carry: `None` at substitution
/// points (any root address of matching label) and `Some` under parenthood.
fn check_node(stsg: &Stsg, parse: &DecoratedTree, nid: NodeId, required: Option<usize>) -> bool {
    if parse.tree.is_leaf(nid) {
        return false;
    }
    let Some(&addr) = parse.addrs.get(&nid) else { return false };
    let Some(an) = stsg.resolve(addr) else { return false };
    let e = &stsg.elems()[an.elem];
    match required {
        Some(want) => {
            if addr != want {
                return false;
            }
        }
        None => {
            if an.node != e.tree.root() {
                return false;
            }
        }
    }
    if parse.tree.label(nid) != e.tree.label(an.node) {
        return false;
    }
    let ekids = e.tree.children(an.node);
    let tkids = parse.tree.children(nid);
    if ekids.len() != tkids.len() {
        return false;
    }
    for (&ec, &tc) in ekids.iter().zip(tkids) {
        let elabel = e.tree.label(ec);
        if elabel.is_terminal() {
            if !parse.tree.is_leaf(tc) || parse.tree.label(tc) != elabel {
                return false;
            }
        } else if e.tree.is_leaf(ec) {
            // Substitution site: the derived child continues with some
            // elementary tree rooted in the site's label.
            if parse.tree.label(tc) != elabel || !check_node(stsg, parse, tc, None) {
                return false;
            }
        } else if !check_node(stsg, parse, tc, Some(e.addresses[&ec])) {
            return false;
        }
    }
    true
}

/// Caps for the brute-force enumerators.
#[derive(Clone, Copy, Debug)]
pub struct EnumLimits {
    pub max_input_len: usize,
    pub max_derivations: usize,
    pub max_steps: usize,
}

impl Default for EnumLimits {
    fn default() -> Self {
        EnumLimits { max_input_len: 7, max_derivations: 200_000, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnumError {
    #[error("input longer than the enumeration cap of {0} words")]
    InputTooLong(usize),
    #[error("enumeration exceeded {0} expansion steps")]
    StepOverflow(usize),
    #[error("enumeration exceeded {0} derivations")]
    DerivationOverflow(usize),
}

/// One fully expanded derivation found by [`enumerate_derivations`].
#[derive(Clone, Debug)]
pub struct EnumeratedDerivation {
    /// Elementary tree ids in leftmost substitution order.
    pub ids: Vec<usize>,
    /// The derived parse decorated with source addresses.
    pub decorated: DecoratedTree,
    /// Natural log of the derivation probability. Transition probabilities
    /// are not included; weight the sentence separately.
    pub log_prob: f64,
    pub sentence: Vec<Symbol>,
}

#[derive(Clone)]
enum FItem {
    Term(Symbol),
    Site(Symbol),
}

struct Enumerator<'a> {
    stsg: &'a Stsg,
    wg: &'a WordGraph,
    limits: &'a EnumLimits,
    by_root: HashMap<&'a Symbol, Vec<usize>>,
    steps: usize,
    out: Vec<(Vec<usize>, f64, Vec<Symbol>)>,
}

impl<'a> Enumerator<'a> {
    fn run(&mut self, frontier: &[FItem], ids: &mut Vec<usize>, logp: f64) -> Result<(), EnumError> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(EnumError::StepOverflow(self.limits.max_steps));
        }
        let n = self.wg.last_state();
        // Every word crosses at least one state, so a frontier with more
        // leaves than states cannot complete.
        if frontier.len() > n {
            return Ok(());
        }
        // The terminal prefix before the first site is fixed; prune if no
        // path through the graph starts with it.
        let mut states: HashSet<usize> = HashSet::from([0]);
        let mut site_pos = None;
        for (idx, it) in frontier.iter().enumerate() {
            match it {
                FItem::Term(w) => {
                    states = self.wg.step(&states, w);
                    if states.is_empty() {
                        return Ok(());
                    }
                }
                FItem::Site(_) => {
                    site_pos = Some(idx);
                    break;
                }
            }
        }
        let Some(idx) = site_pos else {
            if states.contains(&n) {
                if self.out.len() >= self.limits.max_derivations {
                    return Err(EnumError::DerivationOverflow(self.limits.max_derivations));
                }
                let sentence = frontier
                    .iter()
                    .map(|it| match it {
                        FItem::Term(w) => w.clone(),
                        FItem::Site(_) => unreachable!(),
                    })
                    .collect();
                self.out.push((ids.clone(), logp, sentence));
            }
            return Ok(());
        };
        let label = match &frontier[idx] {
            FItem::Site(l) => l.clone(),
            FItem::Term(_) => unreachable!(),
        };
        let Some(elems) = self.by_root.get(&label).cloned() else { return Ok(()) };
        for eid in elems {
            let e = &self.stsg.elems()[eid];
            let mut nf = frontier[..idx].to_vec();
            for sym in e.tree.frontier() {
                nf.push(if sym.is_terminal() { FItem::Term(sym) } else { FItem::Site(sym) });
            }
            nf.extend_from_slice(&frontier[idx + 1..]);
            ids.push(eid);
            self.run(&nf, ids, logp + e.log_prob)?;
            ids.pop();
        }
        Ok(())
    }
}

/// Rebuilds the derived parse from a derivation id sequence by leftmost
/// substitution, decorated with source addresses. `None` when the sequence
/// does not spell a complete derivation.
pub fn derivation_tree(stsg: &Stsg, ids: &[usize]) -> Option<DecoratedTree> {
    fn build(
        stsg: &Stsg,
        ids: &[usize],
        pos: &mut usize,
    ) -> Option<(Tree, HashMap<NodeId, usize>)> {
        let eid = *ids.get(*pos)?;
        *pos += 1;
        let e = stsg.elems().get(eid)?;
        let mut tree = e.tree.clone();
        let mut dec = e.addresses.clone();
        for site in e.tree.substitution_sites() {
            let (sub, subdec) = build(stsg, ids, pos)?;
            if sub.label(sub.root()) != tree.label(site) {
                return None;
            }
            let map = tree.substitute(site, &sub);
            for (nid, addr) in subdec {
                dec.insert(map[&nid], addr);
            }
        }
        Some((tree, dec))
    }
    let mut pos = 0;
    let (tree, addrs) = build(stsg, ids, &mut pos)?;
    if pos != ids.len() || tree.label(tree.root()) != stsg.start() {
        return None;
    }
    Some(DecoratedTree { tree, addrs })
}

/// Enumerates every complete derivation whose terminal string the word-graph
/// accepts, by leftmost substitution with prefix pruning. Derivations come
/// out in depth-first order over ascending elementary tree ids.
pub fn enumerate_derivations(
    stsg: &Stsg,
    wg: &WordGraph,
    limits: &EnumLimits,
) -> Result<Vec<EnumeratedDerivation>, EnumError> {
    if wg.last_state() > limits.max_input_len {
        return Err(EnumError::InputTooLong(limits.max_input_len));
    }
    let mut by_root: HashMap<&Symbol, Vec<usize>> = HashMap::new();
    for e in stsg.elems() {
        by_root.entry(e.root_label()).or_default().push(e.id);
    }
    let mut en = Enumerator { stsg, wg, limits, by_root, steps: 0, out: Vec::new() };
    let start = vec![FItem::Site(stsg.start().clone())];
    en.run(&start, &mut Vec::new(), 0.0)?;
    Ok(en
        .out
        .into_iter()
        .map(|(ids, log_prob, sentence)| {
            let decorated = derivation_tree(stsg, &ids).expect("enumerated derivation rebuilds");
            EnumeratedDerivation { ids, decorated, log_prob, sentence }
        })
        .collect())
}

/// Exhaustive disambiguation summary for small inputs, used as an oracle for
/// the chart algorithms.
#[derive(Clone, Debug)]
pub struct BruteForce {
    pub derivations: Vec<EnumeratedDerivation>,
    /// Sum over derivations of derivation probability times the total
    /// path weight of its sentence: the input probability.
    pub total_weight: f64,
    /// Max over derivations of derivation probability times the best path
    /// weight of its sentence: the most probable derivation's weight.
    pub best_derivation_weight: f64,
    /// Most probable parse and its aggregated weight; ties break toward the
    /// lexicographically smaller bracketed form.
    pub mpp: Option<(Tree, f64)>,
    /// Most probable sentence and its aggregated weight; ties break toward
    /// the lexicographically smaller word sequence.
    pub mps: Option<(Vec<Symbol>, f64)>,
}

pub fn brute_mpp_mps(
    stsg: &Stsg,
    wg: &WordGraph,
    limits: &EnumLimits,
) -> Result<BruteForce, EnumError> {
    let derivations = enumerate_derivations(stsg, wg, limits)?;
    // Per accepted string: total path weight and best single path weight.
    let mut string_info: HashMap<Vec<Symbol>, (f64, f64)> = HashMap::new();
    for (s, p) in wg.paths() {
        let e = string_info.entry(s).or_insert((0.0, 0.0));
        e.0 += p;
        if p > e.1 {
            e.1 = p;
        }
    }
    let mut total_weight = 0.0;
    let mut best_derivation_weight = 0.0;
    let mut by_parse: BTreeMap<String, (Tree, f64)> = BTreeMap::new();
    let mut by_sentence: BTreeMap<String, (Vec<Symbol>, f64)> = BTreeMap::new();
    for d in &derivations {
        let (sum_w, best_w) = string_info[&d.sentence];
        let p = d.log_prob.exp();
        total_weight += p * sum_w;
        if p * best_w > best_derivation_weight {
            best_derivation_weight = p * best_w;
        }
        let pkey = d.decorated.tree.to_bracketed();
        let pe = by_parse.entry(pkey).or_insert_with(|| (d.decorated.tree.clone(), 0.0));
        pe.1 += p * sum_w;
        let words: Vec<&str> = d.sentence.iter().map(|w| w.text()).collect();
        let se = by_sentence
            .entry(words.join(" "))
            .or_insert_with(|| (d.sentence.clone(), 0.0));
        se.1 += p * sum_w;
    }
    let mut mpp: Option<(Tree, f64)> = None;
    for (_, (t, w)) in by_parse {
        if mpp.as_ref().map_or(true, |(_, bw)| w > *bw) {
            mpp = Some((t, w));
        }
    }
    let mut mps: Option<(Vec<Symbol>, f64)> = None;
    for (_, (s, w)) in by_sentence {
        if mps.as_ref().map_or(true, |(_, bw)| w > *bw) {
            mps = Some((s, w));
        }
    }
    Ok(BruteForce { derivations, total_weight, best_derivation_weight, mpp, mps })
}
