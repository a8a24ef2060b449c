//! Trees, symbols, tree-banks and the tree-level operations everything else
//! builds on: bracketed I/O, underlying CFG extraction, unary-chain collapse
//! and bounded subtree enumeration.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum SymbolKind {
    Terminal,
    Nonterminal,
}

/// A grammar symbol. Two symbols are equal only when both text and kind match;
/// a text may not be used with both kinds inside one grammar or tree-bank.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    text: String,
    kind: SymbolKind,
}

impl Symbol {
    pub fn new(text: impl Into<String>, kind: SymbolKind) -> Self {
        let text = text.into();
        debug_assert!(!text.is_empty());
        Symbol { text, kind }
    }

    pub fn terminal(text: impl Into<String>) -> Self {
        Symbol::new(text, SymbolKind::Terminal)
    }

    pub fn nonterminal(text: impl Into<String>) -> Self {
        Symbol::new(text, SymbolKind::Nonterminal)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    pub fn is_terminal(&self) -> bool {
        self.kind == SymbolKind::Terminal
    }

    pub fn is_nonterminal(&self) -> bool {
        self.kind == SymbolKind::Nonterminal
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SymbolKind::Terminal => write!(f, "'{}'", self.text),
            SymbolKind::Nonterminal => write!(f, "{}", self.text),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.text)
    }
}

pub type NodeId = usize;

#[derive(Clone, Debug)]
struct TreeNode {
    label: Symbol,
    children: Vec<NodeId>,
}

/// An ordered labelled tree stored in an arena. Node ids are stable for the
/// lifetime of the tree. Leaves may carry terminal labels or nonterminal
/// labels (substitution sites); internal nodes are always nonterminal.
#[derive(Clone, Debug)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    root: NodeId,
}

impl Tree {
    pub fn leaf(label: Symbol) -> Tree {
        Tree {
            nodes: vec![TreeNode { label, children: Vec::new() }],
            root: 0,
        }
    }

    pub fn node(label: Symbol, children: Vec<Tree>) -> Tree {
        assert!(label.is_nonterminal(), "internal nodes must be nonterminal");
        assert!(!children.is_empty());
        let mut nodes = Vec::new();
        let mut child_roots = Vec::new();
        for child in children {
            let offset = nodes.len();
            child_roots.push(child.root + offset);
            nodes.extend(child.nodes.into_iter().map(|mut n| {
                for c in &mut n.children {
                    *c += offset;
                }
                n
            }));
        }
        let root = nodes.len();
        nodes.push(TreeNode { label, children: child_roots });
        Tree { nodes, root }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn label(&self, id: NodeId) -> &Symbol {
        &self.nodes[id].label
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node ids in preorder (parent before children, children left to right).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            for &c in self.nodes[id].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Internal (non-leaf) node ids in preorder.
    pub fn internal_nodes(&self) -> Vec<NodeId> {
        self.preorder().into_iter().filter(|&id| !self.is_leaf(id)).collect()
    }

    /// Leaf ids from left to right.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.preorder().into_iter().filter(|&id| self.is_leaf(id)).collect()
    }

    /// Leaf labels from left to right.
    pub fn frontier(&self) -> Vec<Symbol> {
        self.leaves().into_iter().map(|id| self.label(id).clone()).collect()
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth_below(self.root)
    }

    pub fn depth_below(&self, id: NodeId) -> usize {
        self.children(id)
            .iter()
            .map(|&c| 1 + self.depth_below(c))
            .max()
            .unwrap_or(0)
    }

    /// Nonterminal leaves (substitution sites), left to right.
    pub fn substitution_sites(&self) -> Vec<NodeId> {
        self.leaves()
            .into_iter()
            .filter(|&id| self.label(id).is_nonterminal())
            .collect()
    }

    /// Copies the subtree rooted at `id` into a fresh tree.
    pub fn subtree(&self, id: NodeId) -> Tree {
        if self.is_leaf(id) {
            return Tree::leaf(self.label(id).clone());
        }
        let children = self
            .children(id)
            .iter()
            .map(|&c| self.subtree(c))
            .collect();
        Tree::node(self.label(id).clone(), children)
    }

    /// Replaces the leaf `site` with a copy of `sub`, returning the mapping
    /// from `sub`'s node ids to the ids they received in `self`.
    pub fn substitute(&mut self, site: NodeId, sub: &Tree) -> HashMap<NodeId, NodeId> {
        assert!(self.is_leaf(site));
        assert_eq!(self.label(site), sub.label(sub.root()));
        let mut map = HashMap::new();
        map.insert(sub.root(), site);
        for id in sub.preorder() {
            if !map.contains_key(&id) {
                let new_id = self.nodes.len();
                self.nodes.push(TreeNode {
                    label: sub.label(id).clone(),
                    children: Vec::new(),
                });
                map.insert(id, new_id);
            }
        }
        for id in sub.preorder() {
            let children = sub.children(id).iter().map(|c| map[c]).collect();
            self.nodes[map[&id]].children = children;
        }
        map
    }

    pub fn to_bracketed(&self) -> String {
        let mut out = String::new();
        self.write_node(self.root, &mut out);
        out
    }

    fn write_node(&self, id: NodeId, out: &mut String) {
        let n = &self.nodes[id];
        if n.children.is_empty() {
            match n.label.kind() {
                SymbolKind::Terminal => out.push_str(n.label.text()),
                SymbolKind::Nonterminal => {
                    out.push('(');
                    out.push_str(n.label.text());
                    out.push(')');
                }
            }
        } else {
            out.push('(');
            out.push_str(n.label.text());
            for &c in &n.children {
                out.push(' ');
                self.write_node(c, out);
            }
            out.push(')');
        }
    }

    fn structural_eq(&self, a: NodeId, other: &Tree, b: NodeId) -> bool {
        if self.label(a) != other.label(b) {
            return false;
        }
        let ca = self.children(a);
        let cb = other.children(b);
        ca.len() == cb.len()
            && ca
                .iter()
                .zip(cb.iter())
                .all(|(&x, &y)| self.structural_eq(x, other, y))
    }
}

impl PartialEq for Tree {
    fn eq(&self, other: &Tree) -> bool {
        self.structural_eq(self.root, other, other.root)
    }
}

impl Eq for Tree {}

impl std::hash::Hash for Tree {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        // Hash the canonical bracketed form; cheap at the sizes we handle.
        self.to_bracketed().hash(state);
        // Kind of the root distinguishes a bare terminal from anything else.
        self.label(self.root).kind().hash(state);
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_bracketed())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeParseError {
    #[error("offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

fn syntax(offset: usize, message: impl Into<String>) -> TreeParseError {
    TreeParseError::Syntax { offset, message: message.into() }
}

#[derive(Clone, Copy, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Token<'_>)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            out.push((i, Token::Open));
            i += 1;
        } else if c == ')' {
            out.push((i, Token::Close));
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_whitespace() || c == '(' || c == ')' {
                    break;
                }
                i += 1;
            }
            out.push((start, Token::Atom(&text[start..i])));
        }
    }
    out
}

struct Parser<'a> {
    tokens: Vec<(usize, Token<'a>)>,
    pos: usize,
    end: usize,
    marks: bool,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(usize, Token<'a>)> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, Token<'a>)> {
        let t = self.tokens.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn atom(&mut self, what: &str) -> Result<(usize, &'a str, bool), TreeParseError> {
        match self.next() {
            Some((off, Token::Atom(a))) => {
                let (a, marked) = if self.marks {
                    match a.strip_suffix('@') {
                        Some(stripped) => (stripped, true),
                        None => (a, false),
                    }
                } else {
                    (a, false)
                };
                if a.is_empty() {
                    return Err(syntax(off, format!("empty {what}")));
                }
                Ok((off, a, marked))
            }
            Some((off, _)) => Err(syntax(off, format!("expected {what}"))),
            None => Err(syntax(self.end, format!("expected {what}, found end of input"))),
        }
    }

    fn node(&mut self) -> Result<Tree, TreeParseError> {
        match self.peek() {
            Some((_, Token::Open)) => {
                self.next();
                let (_, label, _) = self.atom("node label")?;
                let mut children = Vec::new();
                loop {
                    match self.peek() {
                        Some((_, Token::Close)) => {
                            self.next();
                            break;
                        }
                        Some(_) => children.push(self.node()?),
                        None => {
                            return Err(syntax(self.end, "unbalanced '(': missing ')'"));
                        }
                    }
                }
                let tree = if children.is_empty() {
                    Tree::leaf(Symbol::nonterminal(label))
                } else {
                    Tree::node(Symbol::nonterminal(label), children)
                };
                Ok(tree)
            }
            Some((_, Token::Atom(_))) => {
                let (_, word, marked) = self.atom("leaf")?;
                if marked {
                    // A mark on a terminal leaf is meaningless.
                    return Err(syntax(self.end, "terminal leaf cannot be marked"));
                }
                Ok(Tree::leaf(Symbol::terminal(word)))
            }
            Some((off, Token::Close)) => Err(syntax(off, "unexpected ')'")),
            None => Err(syntax(self.end, "empty input")),
        }
    }
}

fn parse_with_marks(text: &str, marks: bool) -> Result<(Tree, HashSet<NodeId>), TreeParseError> {
    let tokens = tokenize(text);
    let mut parser = Parser { tokens, pos: 0, end: text.len(), marks };
    match parser.peek() {
        Some((_, Token::Open)) => {}
        Some((off, _)) => return Err(syntax(off, "a tree must start with '('")),
        None => return Err(syntax(0, "empty input")),
    }
    let tree = parser.node()?;
    if let Some((off, _)) = parser.peek() {
        return Err(syntax(off, "trailing input after tree"));
    }
    // Second pass over the token stream in lockstep with the tree to attach
    // the `@` flags to node ids.
    let mut mark_set = HashSet::new();
    if marks {
        let mut parser2 = Parser {
            tokens: tokenize(text),
            pos: 0,
            end: text.len(),
            marks: true,
        };
        collect_marks(&mut parser2, &tree, tree.root(), &mut mark_set)?;
    }
    Ok((tree, mark_set))
}

/// Walks the token stream in lockstep with `tree`, recording which node ids
/// carried a trailing `@` on their label.
fn collect_marks(
    p: &mut Parser<'_>,
    tree: &Tree,
    id: NodeId,
    out: &mut HashSet<NodeId>,
) -> Result<(), TreeParseError> {
    match p.peek() {
        Some((_, Token::Open)) => {
            p.next();
            let (_, _, marked) = p.atom("node label")?;
            if marked {
                out.insert(id);
            }
            for &c in tree.children(id) {
                collect_marks(p, tree, c, out)?;
            }
            match p.next() {
                Some((_, Token::Close)) => Ok(()),
                _ => Err(syntax(p.end, "unbalanced '(': missing ')'")),
            }
        }
        Some((_, Token::Atom(_))) => {
            p.next();
            Ok(())
        }
        _ => Err(syntax(p.end, "internal mark scan error")),
    }
}

/// Parses a bracketed tree: `(Label child ...)`. A bare token is a terminal
/// leaf, `(A)` is a nonterminal leaf (substitution site).
pub fn parse_bracketed(text: &str) -> Result<Tree, TreeParseError> {
    parse_with_marks(text, false).map(|(t, _)| t)
}

/// Parses a bracketed tree in which node labels may carry a trailing `@`
/// mark. Returns the tree plus the set of marked node ids.
pub fn parse_marked_bracketed(text: &str) -> Result<(Tree, HashSet<NodeId>), TreeParseError> {
    parse_with_marks(text, true)
}

pub fn write_bracketed(tree: &Tree) -> String {
    tree.to_bracketed()
}

pub fn write_marked_bracketed(tree: &Tree, marks: &HashSet<NodeId>) -> String {
    fn walk(tree: &Tree, id: NodeId, marks: &HashSet<NodeId>, out: &mut String) {
        if tree.is_leaf(id) {
            match tree.label(id).kind() {
                SymbolKind::Terminal => out.push_str(tree.label(id).text()),
                SymbolKind::Nonterminal => {
                    out.push('(');
                    out.push_str(tree.label(id).text());
                    if marks.contains(&id) {
                        out.push('@');
                    }
                    out.push(')');
                }
            }
            return;
        }
        out.push('(');
        out.push_str(tree.label(id).text());
        if marks.contains(&id) {
            out.push('@');
        }
        for &c in tree.children(id) {
            out.push(' ');
            walk(tree, c, marks, out);
        }
        out.push(')');
    }
    let mut out = String::new();
    walk(tree, tree.root(), marks, &mut out);
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum TreebankError {
    #[error("tree {index}: {source}")]
    Parse {
        index: usize,
        #[source]
        source: TreeParseError,
    },
    #[error("tree-bank is empty")]
    Empty,
    #[error("symbol {0:?} is used both as a terminal and as a nonterminal")]
    MixedKind(String),
    #[error("tree {index} has root {found:?}, expected {expected:?}")]
    RootMismatch { index: usize, found: String, expected: String },
}

/// A multiset of full parse trees sharing one start symbol. Duplicate trees
/// are kept; every occurrence counts.
#[derive(Clone, Debug)]
pub struct Treebank {
    trees: Vec<Tree>,
    start: Symbol,
}

impl Treebank {
    pub fn new(trees: Vec<Tree>) -> Result<Treebank, TreebankError> {
        if trees.is_empty() {
            return Err(TreebankError::Empty);
        }
        let mut internal: HashSet<String> = HashSet::new();
        let mut terminal: HashSet<String> = HashSet::new();
        for t in &trees {
            for id in t.preorder() {
                let label = t.label(id);
                if t.is_leaf(id) && label.is_terminal() {
                    terminal.insert(label.text().to_string());
                } else {
                    internal.insert(label.text().to_string());
                }
            }
        }
        if let Some(bad) = internal.intersection(&terminal).min() {
            return Err(TreebankError::MixedKind(bad.clone()));
        }
        let start = trees[0].label(trees[0].root()).clone();
        for (index, t) in trees.iter().enumerate() {
            let found = t.label(t.root());
            if found != &start {
                return Err(TreebankError::RootMismatch {
                    index,
                    found: found.text().to_string(),
                    expected: start.text().to_string(),
                });
            }
        }
        Ok(Treebank { trees, start })
    }

    /// Loads one bracketed tree per line; `#` lines and blank lines skipped.
    pub fn from_str(text: &str) -> Result<Treebank, TreebankError> {
        let mut trees = Vec::new();
        for (index, line) in treebank_lines(text) {
            let t = parse_bracketed(line)
                .map_err(|source| TreebankError::Parse { index, source })?;
            trees.push(t);
        }
        Treebank::new(trees)
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn start(&self) -> &Symbol {
        &self.start
    }

    pub fn to_string(&self) -> String {
        let mut out = String::new();
        for t in &self.trees {
            out.push_str(&t.to_bracketed());
            out.push('\n');
        }
        out
    }
}

/// Data lines of a treebank-style file with their 0-based line numbers.
pub fn treebank_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct CfgRule {
    pub lhs: Symbol,
    pub rhs: Vec<Symbol>,
}

impl fmt::Display for CfgRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs)?;
        for s in &self.rhs {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

/// A context-free grammar given as a finite rule set.
#[derive(Clone, Debug)]
pub struct Cfg {
    pub nonterminals: BTreeSet<Symbol>,
    pub terminals: BTreeSet<Symbol>,
    pub start: Symbol,
    pub rules: BTreeSet<CfgRule>,
}

impl Cfg {
    /// Returns a unary-rule cycle (as the list of nonterminals involved) if
    /// one exists; such a grammar is infinitely ambiguous.
    pub fn unary_cycle(&self) -> Option<Vec<Symbol>> {
        let mut edges: BTreeMap<&Symbol, Vec<&Symbol>> = BTreeMap::new();
        for r in &self.rules {
            if r.rhs.len() == 1 && r.rhs[0].is_nonterminal() {
                edges.entry(&r.lhs).or_default().push(&r.rhs[0]);
            }
        }
        // Depth-first cycle search over the unary graph.
        fn visit<'a>(
            v: &'a Symbol,
            edges: &BTreeMap<&'a Symbol, Vec<&'a Symbol>>,
            state: &mut HashMap<&'a Symbol, u8>,
            stack: &mut Vec<&'a Symbol>,
        ) -> Option<Vec<Symbol>> {
            state.insert(v, 1);
            stack.push(v);
            for &w in edges.get(v).into_iter().flatten() {
                match state.get(w) {
                    Some(1) => {
                        let start = stack.iter().position(|&x| x == w).unwrap();
                        return Some(stack[start..].iter().map(|&s| s.clone()).collect());
                    }
                    Some(_) => {}
                    None => {
                        if let Some(c) = visit(w, edges, state, stack) {
                            return Some(c);
                        }
                    }
                }
            }
            stack.pop();
            state.insert(v, 2);
            None
        }
        let mut state = HashMap::new();
        let keys: Vec<&Symbol> = edges.keys().copied().collect();
        for v in keys {
            if !state.contains_key(v) {
                let mut stack = Vec::new();
                if let Some(c) = visit(v, &edges, &mut state, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }
}

/// Extracts the CFG read off a tree-bank: one rule per internal node.
pub fn underlying_cfg(tb: &Treebank) -> Cfg {
    let mut rules = BTreeSet::new();
    let mut nonterminals = BTreeSet::new();
    let mut terminals = BTreeSet::new();
    for t in tb.trees() {
        for id in t.preorder() {
            let label = t.label(id).clone();
            if t.is_leaf(id) {
                match label.kind() {
                    SymbolKind::Terminal => {
                        terminals.insert(label);
                    }
                    SymbolKind::Nonterminal => {
                        nonterminals.insert(label);
                    }
                }
            } else {
                let rhs = t
                    .children(id)
                    .iter()
                    .map(|&c| t.label(c).clone())
                    .collect();
                nonterminals.insert(label.clone());
                rules.insert(CfgRule { lhs: label, rhs });
            }
        }
    }
    Cfg { nonterminals, terminals, start: tb.start().clone(), rules }
}

/// Collapses unary nonterminal chains: every non-root node that is the only
/// child of its parent and has at least one nonterminal child is removed and
/// its children spliced into the parent. Preterminal-only unaries (a single
/// child whose children are all terminal) stay. Idempotent.
pub fn bamboo_collapse(tree: &Tree) -> Tree {
    fn effective_children(tree: &Tree, id: NodeId) -> Vec<NodeId> {
        let ch = tree.children(id);
        if ch.len() == 1 {
            let c = ch[0];
            if tree
                .children(c)
                .iter()
                .any(|&g| tree.label(g).is_nonterminal())
            {
                return effective_children(tree, c);
            }
        }
        ch.to_vec()
    }
    fn rebuild(tree: &Tree, id: NodeId) -> Tree {
        if tree.is_leaf(id) {
            return Tree::leaf(tree.label(id).clone());
        }
        let children = effective_children(tree, id)
            .into_iter()
            .map(|c| rebuild(tree, c))
            .collect();
        Tree::node(tree.label(id).clone(), children)
    }
    rebuild(tree, tree.root())
}

/// Bounds on subtree extraction. `None` means unbounded. Bounds other than
/// depth are waived for subtrees of depth 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectionParams {
    pub max_depth: Option<u32>,
    pub max_sub_sites: Option<u32>,
    pub max_terminals: Option<u32>,
    pub max_consecutive_terminals: Option<u32>,
}

impl ProjectionParams {
    pub const fn unbounded() -> Self {
        ProjectionParams {
            max_depth: None,
            max_sub_sites: None,
            max_terminals: None,
            max_consecutive_terminals: None,
        }
    }

    pub fn new(d: Option<u32>, n: Option<u32>, l: Option<u32>, cl: Option<u32>) -> Self {
        ProjectionParams {
            max_depth: d,
            max_sub_sites: n,
            max_terminals: l,
            max_consecutive_terminals: cl,
        }
    }
}

impl Default for ProjectionParams {
    /// The default working bounds: depth 4, 2 substitution sites, 7 terminals,
    /// 3 consecutive terminals.
    fn default() -> Self {
        ProjectionParams {
            max_depth: Some(4),
            max_sub_sites: Some(2),
            max_terminals: Some(7),
            max_consecutive_terminals: Some(3),
        }
    }
}

/// Frontier shape bookkeeping for the consecutive-terminal bound: the longest
/// terminal run overall plus the runs touching each end.
#[derive(Clone, Copy, Debug)]
struct RunInfo {
    len: u32,
    prefix: u32,
    suffix: u32,
    max: u32,
}

impl RunInfo {
    fn terminal() -> Self {
        RunInfo { len: 1, prefix: 1, suffix: 1, max: 1 }
    }

    fn site() -> Self {
        RunInfo { len: 1, prefix: 0, suffix: 0, max: 0 }
    }

    fn concat(self, rhs: RunInfo) -> RunInfo {
        let joined = self.suffix + rhs.prefix;
        RunInfo {
            len: self.len + rhs.len,
            prefix: if self.prefix == self.len { self.len + rhs.prefix } else { self.prefix },
            suffix: if rhs.suffix == rhs.len { rhs.len + self.suffix } else { rhs.suffix },
            max: self.max.max(rhs.max).max(joined),
        }
    }
}

#[derive(Clone)]
struct SubtreeCand {
    tree: Tree,
    depth: u32,
    sites: u32,
    terminals: u32,
    run: RunInfo,
}

fn within(v: u32, bound: Option<u32>) -> bool {
    bound.map_or(true, |b| v <= b)
}

/// Enumerates every subtree occurrence of `tree` admitted by `params`: for
/// each internal node, each way of either cutting or expanding each child,
/// subject to the bounds. Depth-1 subtrees are always admitted. The result is
/// a multiset: equal subtrees rooted at different positions (or admitted via
/// different cuts) appear once per occurrence.
pub fn enumerate_subtrees(tree: &Tree, params: &ProjectionParams) -> Vec<Tree> {
    let mut by_node: HashMap<NodeId, Vec<SubtreeCand>> = HashMap::new();
    let mut order = tree.internal_nodes();
    order.reverse(); // children before parents
    for id in order {
        let mut per_child: Vec<Vec<SubtreeCand>> = Vec::new();
        for &c in tree.children(id) {
            let mut opts = Vec::new();
            if tree.is_leaf(c) {
                let label = tree.label(c).clone();
                if label.is_terminal() {
                    opts.push(SubtreeCand {
                        tree: Tree::leaf(label),
                        depth: 0,
                        sites: 0,
                        terminals: 1,
                        run: RunInfo::terminal(),
                    });
                } else {
                    opts.push(SubtreeCand {
                        tree: Tree::leaf(label),
                        depth: 0,
                        sites: 1,
                        terminals: 0,
                        run: RunInfo::site(),
                    });
                }
            } else {
                // Cut: the child becomes a substitution site.
                opts.push(SubtreeCand {
                    tree: Tree::leaf(tree.label(c).clone()),
                    depth: 0,
                    sites: 1,
                    terminals: 0,
                    run: RunInfo::site(),
                });
                // Expand with any admissible subtree of the child.
                opts.extend(by_node[&c].iter().cloned());
            }
            per_child.push(opts);
        }
        // Cartesian product over child options, pruned against the bounds.
        // Anything violating a bound cannot be rescued higher up (all counts
        // are monotone), except the depth-1 combination, handled separately.
        let mut combos: Vec<(Vec<Tree>, u32, u32, u32, Option<RunInfo>)> =
            vec![(Vec::new(), 0, 0, 0, None)];
        for opts in &per_child {
            let mut next = Vec::new();
            for (trees, depth, sites, terms, run) in &combos {
                for opt in opts {
                    let sites2 = sites + opt.sites;
                    let terms2 = terms + opt.terminals;
                    if !within(sites2, params.max_sub_sites)
                        || !within(terms2, params.max_terminals)
                    {
                        continue;
                    }
                    let run2 = match run {
                        None => opt.run,
                        Some(r) => r.concat(opt.run),
                    };
                    if !within(run2.max, params.max_consecutive_terminals) {
                        continue;
                    }
                    let depth2 = (*depth).max(opt.depth + 1);
                    if !within(depth2, params.max_depth) {
                        continue;
                    }
                    let mut trees2 = trees.clone();
                    trees2.push(opt.tree.clone());
                    next.push((trees2, depth2, sites2, terms2, Some(run2)));
                }
            }
            combos = next;
        }
        let mut cands: Vec<SubtreeCand> = combos
            .into_iter()
            .map(|(trees, depth, sites, terminals, run)| SubtreeCand {
                tree: Tree::node(tree.label(id).clone(), trees),
                depth,
                sites,
                terminals,
                run: run.unwrap(),
            })
            .collect();
        // The depth-1 subtree (all children cut) is admitted unconditionally.
        let depth1_missing = !cands.iter().any(|c| c.depth == 1);
        if depth1_missing {
            let mut trees = Vec::new();
            let mut sites = 0;
            let mut terminals = 0;
            let mut run: Option<RunInfo> = None;
            for &c in tree.children(id) {
                let label = tree.label(c).clone();
                let info = if label.is_terminal() && tree.is_leaf(c) {
                    terminals += 1;
                    RunInfo::terminal()
                } else {
                    sites += u32::from(label.is_nonterminal());
                    RunInfo::site()
                };
                run = Some(match run {
                    None => info,
                    Some(r) => r.concat(info),
                });
                trees.push(Tree::leaf(if tree.is_leaf(c) {
                    label
                } else {
                    tree.label(c).clone()
                }));
            }
            cands.push(SubtreeCand {
                tree: Tree::node(tree.label(id).clone(), trees),
                depth: 1,
                sites,
                terminals,
                run: run.unwrap(),
            });
        }
        by_node.insert(id, cands);
    }

    let mut out = Vec::new();
    for id in tree.internal_nodes() {
        for cand in &by_node[&id] {
            let admitted = cand.depth == 1
                || (within(cand.depth, params.max_depth)
                    && within(cand.sites, params.max_sub_sites)
                    && within(cand.terminals, params.max_terminals)
                    && within(cand.run.max, params.max_consecutive_terminals));
            if admitted {
                out.push(cand.tree.clone());
            }
        }
    }
    out
}
