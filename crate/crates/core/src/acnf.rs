//! Compilation of an STSG into an address-preserving CNF cover grammar.
//!
//! Every elementary tree is reshaped in three steps: internal unary chains
//! are merged into compound labels, terminal children with siblings are
//! wrapped under fresh preterminals, and nodes with more than two children
//! are right-linearized under a fresh shared symbol. Every internal nodeI of
//! the reshaped trees gets a unique address; the addresses carry enough
//! structure to undo the reshaping and to decide which parent/child address
//! pairs belong to the same elementary tree (parenthood) or meet at a
//! substitution site.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::grammar::{OrigAddress, Stsg};
use crate::trees::{NodeId, Symbol, Tree};

pub type Address = usize;
pub type RuleId = usize;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum CnfRule {
    Binary { lhs: Symbol, left: Symbol, right: Symbol },
    Lexical { lhs: Symbol, word: Symbol },
}

impl CnfRule {
    pub fn lhs(&self) -> &Symbol {
        match self {
            CnfRule::Binary { lhs, .. } | CnfRule::Lexical { lhs, .. } => lhs,
        }
    }
}

impl std::fmt::Display for CnfRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CnfRule::Binary { lhs, left, right } => write!(f, "{lhs} -> {left} {right}"),
            CnfRule::Lexical { lhs, word } => write!(f, "{lhs} -> {word}"),
        }
    }
}

/// What a binary rule occurrence finds below one of its child positions.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ChildSlot {
    /// The child is an internal node of the same elementary tree.
    Internal(Address),
    /// The child is a substitution site; any root of matching label may
    /// substitute.
    Site,
}

#[derive(Clone, Debug)]
pub enum NodeOrigin {
    /// A node of the source elementary tree, unchanged.
    Plain(OrigAddress),
    /// A merged unary chain; labels and source addresses top to bottom.
    Merged(Vec<(Symbol, OrigAddress)>),
    /// A fresh preterminal wrapping a terminal that had siblings.
    Wrapper,
    /// A fresh node introduced by right-linearization.
    Linearizer,
}

#[derive(Clone, Debug)]
pub struct AddrInfo {
    pub elem: usize,
    pub label: Symbol,
    pub rule: RuleId,
    /// Child slots for a binary rule occurrence; `None` for lexical rules.
    pub slots: Option<[ChildSlot; 2]>,
    pub is_root: bool,
    /// log PT of the elementary tree at roots, 0 elsewhere.
    pub pf_log: f64,
    pub origin: NodeOrigin,
}

#[derive(Debug, Error, PartialEq)]
pub enum AcnfError {
    #[error("symbol {0:?} contains the reserved character '|'")]
    ReservedBar(String),
    #[error("elementary tree {0} is a single unary rule and cannot be binarized")]
    SingleUnary(usize),
    #[error("elementary tree {0} has a substitution site as an only child")]
    UnaryAtSite(usize),
    #[error("parse node carries no address")]
    MissingAddress,
    #[error("parse references address {0} unknown to the grammar")]
    UnknownAddress(usize),
    #[error("address {addr} belongs to label {expected:?}, parse has {found:?}")]
    AddressMismatch { addr: usize, expected: String, found: String },
    #[error("parse is not fully lexicalized")]
    IncompleteParse,
    #[error("parse cannot be shaped for this grammar: {0}")]
    NotShapeable(String),
}

/// The reshaped tree structure, kept around for reversal and debugging.
#[derive(Clone, Debug)]
enum TChild {
    Node(TNode),
    Site(Symbol),
    Term(Symbol),
}

#[derive(Clone, Debug)]
struct TNode {
    label: Symbol,
    origin: NodeOrigin,
    children: Vec<TChild>,
}

#[derive(Clone, Debug)]
pub struct AcnfGrammar {
    stsg: Stsg,
    rules: Vec<CnfRule>,
    rule_ids: HashMap<CnfRule, RuleId>,
    occurrences: Vec<Vec<Address>>,
    root_occurrences: Vec<Vec<Address>>,
    addrs: Vec<AddrInfo>,
    by_left: HashMap<Symbol, Vec<RuleId>>,
    lexical_by_word: HashMap<Symbol, Vec<RuleId>>,
    wrapper_sym: BTreeMap<Symbol, Symbol>,
    lin_sym: BTreeMap<Symbol, Symbol>,
    elem_roots: Vec<Address>,
    start_labels: BTreeSet<Symbol>,
}

impl AcnfGrammar {
    pub fn start(&self) -> &Symbol {
        self.stsg.start()
    }

    pub fn stsg(&self) -> &Stsg {
        &self.stsg
    }

    pub fn rules(&self) -> &[CnfRule] {
        &self.rules
    }

    pub fn rule_id(&self, rule: &CnfRule) -> Option<RuleId> {
        self.rule_ids.get(rule).copied()
    }

    /// Addresses at which the rule occurs, in ascending order.
    pub fn occurrences(&self, rule: RuleId) -> &[Address] {
        &self.occurrences[rule]
    }

    /// The subset of [`occurrences`](Self::occurrences) that are elementary
    /// tree roots.
    pub fn root_occurrences(&self, rule: RuleId) -> &[Address] {
        &self.root_occurrences[rule]
    }

    pub fn addr(&self, a: Address) -> &AddrInfo {
        &self.addrs[a]
    }

    pub fn num_addresses(&self) -> usize {
        self.addrs.len()
    }

    pub fn binary_rules_with_left(&self, sym: &Symbol) -> &[RuleId] {
        self.by_left.get(sym).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn lexical_rules_for(&self, word: &Symbol) -> &[RuleId] {
        self.lexical_by_word.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Address of the transformed root node of elementary tree `elem`.
    pub fn elem_root(&self, elem: usize) -> Address {
        self.elem_roots[elem]
    }

    /// CNF labels that a full derivation of the grammar can carry at the top.
    /// These are the transformed root labels of start-rooted elementary
    /// trees; unary merging can turn the start symbol into a compound label.
    pub fn start_labels(&self) -> &BTreeSet<Symbol> {
        &self.start_labels
    }

    /// Substitution probability (natural log) of the elementary tree `elem`.
    pub fn elem_log_prob(&self, elem: usize) -> f64 {
        self.stsg.elems()[elem].log_prob
    }

    /// Pretty listing of the CNF rule set with occurrence counts.
    pub fn dump_rules(&self) -> String {
        let mut out = String::new();
        for (id, rule) in self.rules.iter().enumerate() {
            let occ = self.occurrences[id].len();
            let roots = self.root_occurrences[id].len();
            let _ = writeln!(out, "{rule}\toccurrences={occ} roots={roots}");
        }
        out
    }

    /// Reshapes a parse over the source symbols into the form this grammar's
    /// CNF parses take: unary chains merged, terminals wrapped, wide nodes
    /// right-linearized. Fails when the parse needs a fresh symbol this
    /// grammar never introduced.
    pub fn shape_parse(&self, parse: &Tree) -> Result<Tree, AcnfError> {
        let shaped = shape_node(parse, parse.root(), &|w| self.wrapper_sym.get(w).cloned(), &|l| {
            self.lin_sym.get(l).cloned()
        })?;
        Ok(shaped)
    }

    /// Undoes the three reshaping steps on a decorated CNF parse, returning
    /// the parse over the source symbols decorated with source addresses.
    pub fn reverse_parse(&self, parse: &DecoratedTree) -> Result<DecoratedTree, AcnfError> {
        let mut out = self.reverse_children(parse, parse.tree.root())?;
        if out.len() != 1 {
            return Err(AcnfError::NotShapeable("root reversed to multiple nodes".into()));
        }
        match out.pop().unwrap() {
            RChild::Node(root) => Ok(rnode_to_decorated(&root)),
            RChild::Term(_) => Err(AcnfError::IncompleteParse),
        }
    }

    fn reverse_children(
        &self,
        parse: &DecoratedTree,
        nid: NodeId,
    ) -> Result<Vec<RChild>, AcnfError> {
        let tree = &parse.tree;
        if tree.is_leaf(nid) {
            let label = tree.label(nid);
            if label.is_terminal() {
                return Ok(vec![RChild::Term(label.clone())]);
            }
            return Err(AcnfError::IncompleteParse);
        }
        let addr = *parse
            .addrs
            .get(&nid)
            .ok_or(AcnfError::MissingAddress)?;
        let info = self
            .addrs
            .get(addr)
            .ok_or(AcnfError::UnknownAddress(addr))?;
        if &info.label != tree.label(nid) {
            return Err(AcnfError::AddressMismatch {
                addr,
                expected: info.label.text().to_string(),
                found: tree.label(nid).text().to_string(),
            });
        }
        let mut kids = Vec::new();
        for &c in tree.children(nid) {
            kids.extend(self.reverse_children(parse, c)?);
        }
        match &info.origin {
            NodeOrigin::Linearizer => Ok(kids),
            NodeOrigin::Wrapper => {
                // A wrapper holds exactly the terminal it wraps.
                Ok(kids)
            }
            NodeOrigin::Plain(orig) => Ok(vec![RChild::Node(RNode {
                label: info.label.clone(),
                addr: *orig,
                children: kids,
            })]),
            NodeOrigin::Merged(chain) => {
                let (bottom_label, bottom_addr) = chain.last().unwrap().clone();
                let mut node = RNode { label: bottom_label, addr: bottom_addr, children: kids };
                for (label, orig) in chain.iter().rev().skip(1) {
                    node = RNode {
                        label: label.clone(),
                        addr: *orig,
                        children: vec![RChild::Node(node)],
                    };
                }
                Ok(vec![RChild::Node(node)])
            }
        }
    }
}

/// A tree whose internal nodes carry addresses. Depending on context the
/// addresses refer to source elementary-tree nodes or to CNF grammar nodes.
#[derive(Clone, Debug)]
pub struct DecoratedTree {
    pub tree: Tree,
    pub addrs: HashMap<NodeId, usize>,
}

#[derive(Clone)]
enum RChild {
    Node(RNode),
    Term(Symbol),
}

#[derive(Clone)]
struct RNode {
    label: Symbol,
    addr: OrigAddress,
    children: Vec<RChild>,
}

fn rnode_to_decorated(root: &RNode) -> DecoratedTree {
    fn build(n: &RNode) -> Tree {
        let children = n
            .children
            .iter()
            .map(|c| match c {
                RChild::Node(m) => build(m),
                RChild::Term(s) => Tree::leaf(s.clone()),
            })
            .collect();
        Tree::node(n.label.clone(), children)
    }
    fn assign(n: &RNode, tree: &Tree, nid: NodeId, out: &mut HashMap<NodeId, usize>) {
        out.insert(nid, n.addr);
        let ids = tree.children(nid);
        for (c, &cid) in n.children.iter().zip(ids) {
            if let RChild::Node(m) = c {
                assign(m, tree, cid, out);
            }
        }
    }
    let tree = build(root);
    let mut addrs = HashMap::new();
    assign(root, &tree, tree.root(), &mut addrs);
    DecoratedTree { tree, addrs }
}

struct FreshSymbols {
    used: BTreeSet<String>,
}

impl FreshSymbols {
    fn new(stsg: &Stsg) -> Self {
        let used = stsg
            .nonterminals()
            .iter()
            .chain(stsg.terminals().iter())
            .map(|s| s.text().to_string())
            .collect();
        FreshSymbols { used }
    }

    fn fresh(&mut self, base: &str) -> Symbol {
        let mut candidate = format!("{base}′");
        let mut k = 1usize;
        while self.used.contains(&candidate) {
            k += 1;
            candidate = format!("{base}′{k}");
        }
        self.used.insert(candidate.clone());
        Symbol::nonterminal(candidate)
    }
}

/// Step 1: merge maximal internal unary chains into one node with a compound
/// label. Returns an error marker when a substitution site ends up as an only
/// child, which no reshaping can repair.
fn merge_unary_chains(
    tree: &Tree,
    id: NodeId,
    addr_of: &HashMap<NodeId, OrigAddress>,
) -> Result<TNode, ()> {
    let mut chain = vec![(tree.label(id).clone(), addr_of[&id])];
    let mut cur = id;
    loop {
        let ch = tree.children(cur);
        if ch.len() == 1 && !tree.is_leaf(ch[0]) {
            cur = ch[0];
            chain.push((tree.label(cur).clone(), addr_of[&cur]));
            continue;
        }
        break;
    }
    let ch = tree.children(cur);
    if ch.len() == 1 && tree.is_leaf(ch[0]) && tree.label(ch[0]).is_nonterminal() {
        return Err(());
    }
    let mut children = Vec::new();
    for &c in ch {
        if tree.is_leaf(c) {
            let label = tree.label(c).clone();
            children.push(if label.is_terminal() {
                TChild::Term(label)
            } else {
                TChild::Site(label)
            });
        } else {
            children.push(TChild::Node(merge_unary_chains(tree, c, addr_of)?));
        }
    }
    let (label, origin) = if chain.len() == 1 {
        (chain[0].0.clone(), NodeOrigin::Plain(chain[0].1))
    } else {
        let text = chain
            .iter()
            .map(|(s, _)| s.text())
            .collect::<Vec<_>>()
            .join("|");
        (Symbol::nonterminal(text), NodeOrigin::Merged(chain))
    };
    Ok(TNode { label, origin, children })
}

/// Step 2: wrap terminal children that have siblings under fresh
/// preterminals, one shared wrapper symbol per word.
fn wrap_terminals(
    node: &mut TNode,
    fresh: &mut FreshSymbols,
    wrapper_sym: &mut BTreeMap<Symbol, Symbol>,
) {
    let single_terminal =
        node.children.len() == 1 && matches!(node.children[0], TChild::Term(_));
    if !single_terminal {
        for child in &mut node.children {
            if let TChild::Term(word) = child {
                let sym = wrapper_sym
                    .entry(word.clone())
                    .or_insert_with(|| fresh.fresh(word.text()))
                    .clone();
                *child = TChild::Node(TNode {
                    label: sym,
                    origin: NodeOrigin::Wrapper,
                    children: vec![TChild::Term(word.clone())],
                });
            }
        }
    }
    for child in &mut node.children {
        if let TChild::Node(n) = child {
            wrap_terminals(n, fresh, wrapper_sym);
        }
    }
}

/// Step 3: right-linearize nodes with more than two children, inserting
/// m - 2 fresh nodes that share one symbol derived from the node's label.
fn linearize(
    node: &mut TNode,
    fresh: &mut FreshSymbols,
    lin_sym: &mut BTreeMap<Symbol, Symbol>,
) {
    for child in &mut node.children {
        if let TChild::Node(n) = child {
            linearize(n, fresh, lin_sym);
        }
    }
    while node.children.len() > 2 {
        let sym = lin_sym
            .entry(node.label.clone())
            .or_insert_with(|| fresh.fresh(node.label.text()))
            .clone();
        let rest = node.children.split_off(1);
        node.children.push(TChild::Node(TNode {
            label: sym,
            origin: NodeOrigin::Linearizer,
            children: rest,
        }));
        // The freshly created tail may itself still be too wide.
        if let Some(TChild::Node(tail)) = node.children.last_mut() {
            linearize_tail(tail, fresh, lin_sym, &node.label);
        }
    }
}

fn linearize_tail(
    node: &mut TNode,
    fresh: &mut FreshSymbols,
    lin_sym: &mut BTreeMap<Symbol, Symbol>,
    source_label: &Symbol,
) {
    while node.children.len() > 2 {
        let sym = lin_sym
            .entry(source_label.clone())
            .or_insert_with(|| fresh.fresh(source_label.text()))
            .clone();
        let rest = node.children.split_off(1);
        node.children.push(TChild::Node(TNode {
            label: sym,
            origin: NodeOrigin::Linearizer,
            children: rest,
        }));
        if let Some(TChild::Node(tail)) = node.children.last_mut() {
            linearize_tail(tail, fresh, lin_sym, source_label);
        }
    }
}

/// Compiles an STSG into its CNF cover grammar with addressing. Fails on
/// grammars whose trees contain a unary rule over a nonterminal leaf, since
/// no CNF reshaping preserves the substitution interface of such trees.
pub fn to_acnf(stsg: &Stsg) -> Result<AcnfGrammar, AcnfError> {
    for s in stsg.nonterminals().iter().chain(stsg.terminals().iter()) {
        if s.text().contains('|') {
            return Err(AcnfError::ReservedBar(s.text().to_string()));
        }
    }
    let mut fresh = FreshSymbols::new(stsg);
    let mut wrapper_sym = BTreeMap::new();
    let mut lin_sym = BTreeMap::new();
    let mut shaped: Vec<TNode> = Vec::new();
    for e in stsg.elems() {
        let ch = e.tree.children(e.tree.root());
        if ch.len() == 1 && e.tree.is_leaf(ch[0]) && e.tree.label(ch[0]).is_nonterminal() {
            return Err(AcnfError::SingleUnary(e.id));
        }
        let mut node = merge_unary_chains(&e.tree, e.tree.root(), &e.addresses)
            .map_err(|()| AcnfError::UnaryAtSite(e.id))?;
        wrap_terminals(&mut node, &mut fresh, &mut wrapper_sym);
        linearize(&mut node, &mut fresh, &mut lin_sym);
        shaped.push(node);
    }

    let mut g = AcnfGrammar {
        stsg: stsg.clone(),
        rules: Vec::new(),
        rule_ids: HashMap::new(),
        occurrences: Vec::new(),
        root_occurrences: Vec::new(),
        addrs: Vec::new(),
        by_left: HashMap::new(),
        lexical_by_word: HashMap::new(),
        wrapper_sym,
        lin_sym,
        elem_roots: Vec::new(),
        start_labels: BTreeSet::new(),
    };
    for (elem, node) in shaped.iter().enumerate() {
        let root = register(&mut g, elem, node, true);
        g.elem_roots.push(root);
        if stsg.elems()[elem].root_label() == stsg.start() {
            g.start_labels.insert(g.addrs[root].label.clone());
        }
    }
    Ok(g)
}

fn intern_rule(g: &mut AcnfGrammar, rule: CnfRule) -> RuleId {
    if let Some(&id) = g.rule_ids.get(&rule) {
        return id;
    }
    let id = g.rules.len();
    g.rule_ids.insert(rule.clone(), id);
    g.occurrences.push(Vec::new());
    g.root_occurrences.push(Vec::new());
    match &rule {
        CnfRule::Binary { left, .. } => {
            g.by_left.entry(left.clone()).or_default().push(id);
        }
        CnfRule::Lexical { word, .. } => {
            g.lexical_by_word.entry(word.clone()).or_default().push(id);
        }
    }
    g.rules.push(rule);
    id
}

fn register(g: &mut AcnfGrammar, elem: usize, node: &TNode, is_root: bool) -> Address {
    let addr = g.addrs.len();
    // Reserve the slot first so parents precede children in address order.
    g.addrs.push(AddrInfo {
        elem,
        label: node.label.clone(),
        rule: 0,
        slots: None,
        is_root,
        pf_log: if is_root { g.stsg.elems()[elem].log_prob } else { 0.0 },
        origin: node.origin.clone(),
    });
    fn child_label(c: &TChild) -> Symbol {
        match c {
            TChild::Node(n) => n.label.clone(),
            TChild::Site(s) => s.clone(),
            TChild::Term(_) => unreachable!("terminals are wrapped"),
        }
    }
    // Intern the rule before descending so that rule ids follow preorder.
    let rule = match node.children.as_slice() {
        [TChild::Term(w)] => CnfRule::Lexical { lhs: node.label.clone(), word: w.clone() },
        [a, b] => CnfRule::Binary {
            lhs: node.label.clone(),
            left: child_label(a),
            right: child_label(b),
        },
        other => unreachable!("node with {} children after reshaping", other.len()),
    };
    let rule_id = intern_rule(g, rule);
    g.addrs[addr].rule = rule_id;
    g.occurrences[rule_id].push(addr);
    if is_root {
        g.root_occurrences[rule_id].push(addr);
    }
    if let [a, b] = node.children.as_slice() {
        let mut slot = |c: &TChild| match c {
            TChild::Node(n) => ChildSlot::Internal(register(g, elem, n, false)),
            TChild::Site(_) => ChildSlot::Site,
            TChild::Term(_) => unreachable!("terminals are wrapped"),
        };
        let sl = slot(a);
        let sr = slot(b);
        g.addrs[addr].slots = Some([sl, sr]);
    }
    addr
}

/// Reshapes an arbitrary parse tree the way [`to_acnf`] reshapes elementary
/// trees, resolving fresh symbols through the provided lookups.
fn shape_node(
    tree: &Tree,
    id: NodeId,
    wrapper: &dyn Fn(&Symbol) -> Option<Symbol>,
    lin: &dyn Fn(&Symbol) -> Option<Symbol>,
) -> Result<Tree, AcnfError> {
    // Merge the unary chain starting here.
    let mut labels = vec![tree.label(id).clone()];
    let mut cur = id;
    while tree.children(cur).len() == 1 && !tree.is_leaf(tree.children(cur)[0]) {
        cur = tree.children(cur)[0];
        labels.push(tree.label(cur).clone());
    }
    let ch = tree.children(cur);
    if ch.len() == 1 && tree.is_leaf(ch[0]) && tree.label(ch[0]).is_nonterminal() {
        return Err(AcnfError::NotShapeable(
            "substitution site as an only child".into(),
        ));
    }
    let label = if labels.len() == 1 {
        labels.pop().unwrap()
    } else {
        Symbol::nonterminal(
            labels.iter().map(|s| s.text()).collect::<Vec<_>>().join("|"),
        )
    };
    let single_terminal = ch.len() == 1 && tree.is_leaf(ch[0]) && tree.label(ch[0]).is_terminal();
    if single_terminal {
        return Ok(Tree::node(label, vec![Tree::leaf(tree.label(ch[0]).clone())]));
    }
    let mut children: Vec<Tree> = Vec::new();
    for &c in ch {
        if tree.is_leaf(c) {
            let cl = tree.label(c).clone();
            if cl.is_terminal() {
                let w = wrapper(&cl).ok_or_else(|| {
                    AcnfError::NotShapeable(format!("no wrapper symbol for word {cl}"))
                })?;
                children.push(Tree::node(w, vec![Tree::leaf(cl)]));
            } else {
                children.push(Tree::leaf(cl));
            }
        } else {
            children.push(shape_node(tree, c, wrapper, lin)?);
        }
    }
    // Right-linearize.
    while children.len() > 2 {
        let sym = lin(&label).ok_or_else(|| {
            AcnfError::NotShapeable(format!("no linearization symbol for {label}"))
        })?;
        let rest = children.split_off(children.len() - 2);
        let tail = Tree::node(sym, rest);
        children.push(tail);
    }
    Ok(Tree::node(label, children))
}
