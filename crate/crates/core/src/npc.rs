//! Constructive reductions from 3SAT to the decision versions of the hard
//! disambiguation problems: most probable parse of a word-graph (MPPWG),
//! most probable sentence (MPS), most probable parse of a sentence (MPP),
//! and MPS under a stochastic CFG. Each reduction builds a grammar, an
//! input, and an exact rational threshold Q such that the answer is Yes iff
//! the formula is satisfiable. A brute-force decider verifies instances at
//! exhaustive sizes.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::chart::{Transition, WordGraph};
use crate::grammar::{GrammarError, Stsg};
use crate::trees::{Symbol, Tree};

/// A Boolean formula in 3-conjunctive normal form. Literals are signed
/// 1-based variable indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cnf3Formula {
    pub num_vars: u32,
    pub clauses: Vec<[i32; 3]>,
}

#[derive(Debug, Error, PartialEq)]
pub enum NpcError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("literal {0} is out of range")]
    BadLiteral(i64),
    #[error("the formula has no clauses")]
    EmptyFormula,
    #[error("instance too large for exhaustive search (n ≤ {max_vars}, m ≤ {max_clauses})")]
    TooLarge { max_vars: u32, max_clauses: usize },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

impl Cnf3Formula {
    pub fn new(num_vars: u32, clauses: Vec<[i32; 3]>) -> Result<Self, NpcError> {
        for c in &clauses {
            for &lit in c {
                if lit == 0 || lit.unsigned_abs() > num_vars {
                    return Err(NpcError::BadLiteral(lit as i64));
                }
            }
        }
        Ok(Cnf3Formula { num_vars, clauses })
    }

    /// Parses the DIMACS CNF format: a "p cnf <vars> <clauses>" header, then
    /// clauses of exactly three signed integers each, terminated by 0.
    /// Comment lines start with 'c'.
    pub fn from_dimacs(text: &str) -> Result<Self, NpcError> {
        let mut header: Option<(u32, usize)> = None;
        let mut clauses: Vec<[i32; 3]> = Vec::new();
        let mut current: Vec<i32> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            let err = |message: &str| NpcError::Format { line: ln + 1, message: message.into() };
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            if line.starts_with('p') {
                if header.is_some() {
                    return Err(err("duplicate header"));
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                let parsed = match fields.as_slice() {
                    ["p", "cnf", n, m] => n.parse().ok().zip(m.parse().ok()),
                    _ => None,
                };
                header = Some(parsed.ok_or_else(|| err("malformed \"p cnf <n> <m>\" header"))?);
                continue;
            }
            if header.is_none() {
                return Err(err("clause before the \"p cnf\" header"));
            }
            for tok in line.split_whitespace() {
                let lit: i32 =
                    tok.parse().map_err(|_| err(&format!("bad literal {tok:?}")))?;
                if lit == 0 {
                    let c: [i32; 3] = current
                        .as_slice()
                        .try_into()
                        .map_err(|_| err("clause does not have exactly 3 literals"))?;
                    clauses.push(c);
                    current.clear();
                } else {
                    current.push(lit);
                }
            }
        }
        let (num_vars, m) = header.ok_or(NpcError::Format {
            line: 1,
            message: "missing \"p cnf\" header".into(),
        })?;
        if !current.is_empty() {
            return Err(NpcError::Format {
                line: text.lines().count(),
                message: "unterminated clause".into(),
            });
        }
        if clauses.len() != m {
            return Err(NpcError::Format {
                line: text.lines().count(),
                message: format!("header promises {m} clauses, found {}", clauses.len()),
            });
        }
        Cnf3Formula::new(num_vars, clauses)
    }

    /// Exhaustive satisfiability check. The empty formula is vacuously
    /// satisfiable.
    pub fn sat_bruteforce(&self) -> bool {
        assert!(self.num_vars <= 24, "exhaustive search limited to 24 variables");
        (0u64..(1 << self.num_vars)).any(|assign| {
            self.clauses.iter().all(|c| {
                c.iter().any(|&lit| {
                    let v = assign >> (lit.unsigned_abs() - 1) & 1 == 1;
                    if lit > 0 {
                        v
                    } else {
                        !v
                    }
                })
            })
        })
    }
}

/// Which decision problem an instance targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// Most probable parse of a word-graph, under an STSG.
    Mppwg,
    /// Most probable sentence of a word-graph, under an STSG.
    Mps,
    /// Most probable parse of a fixed sentence, under an STSG.
    Mpp,
    /// Most probable sentence of a word-graph, under a stochastic CFG.
    MpsScfg,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Mppwg => "MPPWG",
            ProblemKind::Mps => "MPS",
            ProblemKind::Mpp => "MPP",
            ProblemKind::MpsScfg => "MPS-SCFG",
        }
    }
}

/// A constructed decision-problem instance. Probabilities are exact
/// rationals in `elems`; `stsg` carries their floating approximations for
/// interoperation with the parsing pipeline.
#[derive(Clone, Debug)]
pub struct ReductionInstance {
    pub kind: ProblemKind,
    pub stsg: Stsg,
    /// The elementary trees with exact probabilities, in `stsg` order.
    pub elems: Vec<(Tree, BigRational)>,
    pub word_graph: WordGraph,
    /// The fixed target sentence (MPP only).
    pub sentence: Option<Vec<Symbol>>,
    pub theta: BigRational,
    pub q: BigRational,
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn pow(base: &BigRational, exp: u32) -> BigRational {
    let mut out = BigRational::one();
    for _ in 0..exp {
        out *= base;
    }
    out
}

fn lit_symbol(lit: i32) -> Symbol {
    if lit > 0 {
        Symbol::nonterminal(format!("u{lit}"))
    } else {
        Symbol::nonterminal(format!("-u{}", -lit))
    }
}

fn clause_symbol(k: usize) -> Symbol {
    Symbol::nonterminal(format!("C{}", k + 1))
}

fn word_symbol(k: usize, j: usize) -> Symbol {
    Symbol::terminal(format!("v{}{}", k + 1, j + 1))
}

/// Flattens a tree to its depth-1 skeleton: root over frontier leaves.
fn mask(tree: &Tree) -> Tree {
    let kids = tree
        .leaves()
        .into_iter()
        .map(|l| Tree::leaf(tree.label(l).clone()))
        .collect();
    Tree::node(tree.label(tree.root()).clone(), kids)
}

/// Builds the decision-problem instance for `f` per the five construction
/// steps: consistent-assignment trees for every variable, three
/// one-true-disjunct trees per conjunct, true/false trees per literal, the
/// bare conjunct spine, and the derived probabilities. θ is placed at the
/// midpoint of its open interval and Q at the exact threshold formula.
/// Variables that never occur in a clause are dropped and the rest
/// renumbered, so every constructed tree is lexicalized somewhere.
pub fn build_instance(f: &Cnf3Formula, kind: ProblemKind) -> Result<ReductionInstance, NpcError> {
    if f.clauses.is_empty() {
        return Err(NpcError::EmptyFormula);
    }
    // Renumber to the variables that actually occur, in first-occurrence
    // order.
    let mut order: Vec<u32> = Vec::new();
    for c in &f.clauses {
        for &lit in c {
            let v = lit.unsigned_abs();
            if !order.contains(&v) {
                order.push(v);
            }
        }
    }
    let renum = |lit: i32| -> i32 {
        let idx = order.iter().position(|&v| v == lit.unsigned_abs()).unwrap() as i32 + 1;
        if lit > 0 {
            idx
        } else {
            -idx
        }
    };
    let clauses: Vec<[i32; 3]> = f.clauses.iter().map(|c| c.map(renum)).collect();
    let n = order.len();
    let m = clauses.len();
    let m3 = 3 * m as u32;

    // Occurrence counts of both literals of each variable.
    let mut occ = vec![0u32; n];
    for c in &clauses {
        for &lit in c {
            occ[lit.unsigned_abs() as usize - 1] += 1;
        }
    }

    // The weight a lexical substitution contributes: 1/2 in the T/F
    // reductions, 1/(6m) in the fresh-word MPP reduction.
    let beta = match kind {
        ProblemKind::Mpp => ratio(1, 6 * m as i64),
        _ => ratio(1, 2),
    };
    let sigma: BigRational = occ.iter().map(|&ni| pow(&beta, ni)).sum();
    let two = ratio(2, 1);
    let upper = (&two * &sigma).recip();
    let lower = (&two * &sigma + pow(&beta, m as u32)).recip();
    assert!(lower < upper, "the θ interval is open and nonempty by construction");
    let theta = (&lower + &upper) / &two;
    let p0 = BigRational::one() - &two * &theta * &sigma;
    let q = BigRational::from(BigInt::from(n)) * &theta * pow(&beta, m3)
        + &p0 * pow(&beta, 2 * m as u32) * pow(&ratio(1, 3), m as u32);

    let s = Symbol::nonterminal("S");
    let t_sym = Symbol::terminal("T");
    let f_sym = Symbol::terminal("F");
    // In the MPP reduction T and F become internal nonterminals above the
    // fresh sentence words.
    let tf_leaf = |truth: bool, k: usize, j: usize| -> Tree {
        let label = if truth { &t_sym } else { &f_sym };
        match kind {
            ProblemKind::Mpp => Tree::node(
                Symbol::nonterminal(label.text()),
                vec![Tree::leaf(word_symbol(k, j))],
            ),
            _ => Tree::leaf(label.clone()),
        }
    };

    let mut elems: Vec<(Tree, BigRational)> = Vec::new();
    // Step 1: consistent assignments, two per variable.
    for i in 0..n {
        for truth in [true, false] {
            let var = i as i32 + 1;
            let conjuncts = clauses
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let kids = c
                        .iter()
                        .enumerate()
                        .map(|(j, &lit)| {
                            if lit.unsigned_abs() as usize - 1 == i {
                                let value = if lit == var { truth } else { !truth };
                                Tree::node(lit_symbol(lit), vec![tf_leaf(value, k, j)])
                            } else {
                                Tree::leaf(lit_symbol(lit))
                            }
                        })
                        .collect();
                    Tree::node(clause_symbol(k), kids)
                })
                .collect();
            elems.push((Tree::node(s.clone(), conjuncts), &theta * pow(&beta, occ[i])));
        }
    }
    // Step 2: one true disjunct per conjunct, three ways.
    for (k, c) in clauses.iter().enumerate() {
        for true_j in 0..3 {
            let kids = c
                .iter()
                .enumerate()
                .map(|(j, &lit)| {
                    if j == true_j {
                        Tree::node(lit_symbol(lit), vec![tf_leaf(true, k, j)])
                    } else {
                        Tree::leaf(lit_symbol(lit))
                    }
                })
                .collect();
            elems.push((Tree::node(clause_symbol(k), kids), ratio(1, 3)));
        }
    }
    // Step 3: every literal assigned true and false. In the MPP reduction
    // each assignment splits into 3m trees, one per sentence word.
    for i in 0..n {
        let var = i as i32 + 1;
        for lit in [var, -var] {
            for truth in [true, false] {
                match kind {
                    ProblemKind::Mpp => {
                        for k in 0..m {
                            for j in 0..3 {
                                elems.push((
                                    Tree::node(lit_symbol(lit), vec![tf_leaf(truth, k, j)]),
                                    beta.clone(),
                                ));
                            }
                        }
                    }
                    _ => elems.push((
                        Tree::node(lit_symbol(lit), vec![tf_leaf(truth, 0, 0)]),
                        beta.clone(),
                    )),
                }
            }
        }
    }
    // Step 4: the bare conjunct spine.
    let spine = (0..m).map(|k| Tree::leaf(clause_symbol(k))).collect();
    elems.push((Tree::node(s.clone(), spine), p0));

    if kind == ProblemKind::MpsScfg {
        for (tree, _) in &mut elems {
            *tree = mask(tree);
        }
    }

    let (word_graph, sentence) = match kind {
        ProblemKind::Mpp => {
            let words: Vec<Symbol> =
                (0..m).flat_map(|k| (0..3).map(move |j| word_symbol(k, j))).collect();
            (WordGraph::from_sentence(&words), Some(words))
        }
        _ => {
            let mut transitions = Vec::new();
            for pos in 0..m3 as usize {
                for w in [&t_sym, &f_sym] {
                    transitions.push(Transition {
                        from: pos,
                        to: pos + 1,
                        word: w.clone(),
                        prob: 1.0,
                    });
                }
            }
            (
                WordGraph::new(m3 as usize + 1, transitions)
                    .expect("the lattice is well-formed by construction"),
                None,
            )
        }
    };

    let float_elems: Vec<(Tree, f64)> = elems
        .iter()
        .map(|(t, p)| {
            let num: f64 = p.numer().to_string().parse().unwrap();
            let den: f64 = p.denom().to_string().parse().unwrap();
            (t.clone(), num / den)
        })
        .collect();
    let stsg = Stsg::new(s, float_elems)?;
    Ok(ReductionInstance { kind, stsg, elems, word_graph, sentence, theta, q })
}

/// The CLI manifest line describing an instance's exact threshold data.
pub fn manifest(inst: &ReductionInstance) -> String {
    format!("THETA {} Q {} KIND {}", inst.theta, inst.q, inst.kind.name())
}

/// One complete derivation of the instance grammar: its sentence, derived
/// parse, and exact probability.
#[derive(Clone, Debug)]
pub struct ExactDerivation {
    pub sentence: Vec<Symbol>,
    pub parse: Tree,
    pub prob: BigRational,
}

/// Enumerates every complete derivation of the instance grammar whose
/// sentence the instance input admits, by leftmost substitution with prefix
/// pruning against the input.
pub fn enumerate_exact(inst: &ReductionInstance) -> Vec<ExactDerivation> {
    let start = inst.stsg.start();
    let max_len = inst.word_graph.last_state();
    let prefix_ok = |words: &[Symbol]| -> bool {
        if words.len() > max_len {
            return false;
        }
        match &inst.sentence {
            Some(target) => words == &target[..words.len()],
            None => true,
        }
    };
    let mut out: Vec<ExactDerivation> = Vec::new();
    let mut stack: Vec<(Tree, BigRational)> = inst
        .elems
        .iter()
        .filter(|(t, _)| t.label(t.root()) == start)
        .map(|(t, p)| (t.clone(), p.clone()))
        .collect();
    while let Some((tree, prob)) = stack.pop() {
        let words: Vec<Symbol> = tree
            .leaves()
            .into_iter()
            .map(|l| tree.label(l).clone())
            .take_while(|s| s.is_terminal())
            .collect();
        if !prefix_ok(&words) {
            continue;
        }
        match tree.substitution_sites().first().copied() {
            None => {
                if words.len() == max_len {
                    out.push(ExactDerivation { sentence: words, parse: tree, prob });
                }
            }
            Some(site) => {
                let label = tree.label(site).clone();
                for (sub, p) in &inst.elems {
                    if sub.label(sub.root()) == &label {
                        let mut next = tree.clone();
                        next.substitute(site, sub);
                        stack.push((next, &prob * p));
                    }
                }
            }
        }
    }
    out
}

/// Decides the instance exhaustively: derivations are grouped by parse for
/// the parse problems and by sentence for the sentence problems, and the
/// answer is Yes iff some group's probability reaches the threshold Q.
pub fn decide_by_bruteforce(inst: &ReductionInstance) -> Result<bool, NpcError> {
    let m = inst.word_graph.last_state() / 3;
    let n = inst
        .elems
        .iter()
        .filter(|(t, _)| t.label(t.root()).text() == "S")
        .count()
        .saturating_sub(1)
        / 2;
    if n > 4 || m > 4 {
        return Err(NpcError::TooLarge { max_vars: 4, max_clauses: 4 });
    }
    let mut groups: BTreeMap<String, BigRational> = BTreeMap::new();
    for d in enumerate_exact(inst) {
        let key = match inst.kind {
            ProblemKind::Mppwg | ProblemKind::Mpp => d.parse.to_bracketed(),
            ProblemKind::Mps | ProblemKind::MpsScfg => {
                d.sentence
                    .iter()
                    .map(|s| s.text().to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        };
        *groups.entry(key).or_insert_with(BigRational::zero) += d.prob;
    }
    Ok(groups.values().any(|p| p >= &inst.q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_formula() -> Cnf3Formula {
        // (u1 ∨ ¬u2 ∨ u3) ∧ (¬u1 ∨ u2 ∨ ¬u3)
        Cnf3Formula::new(3, vec![[1, -2, 3], [-1, 2, -3]]).unwrap()
    }

    fn unsat_formula() -> Cnf3Formula {
        Cnf3Formula::new(1, vec![[1, 1, 1], [-1, -1, -1]]).unwrap()
    }

    const ALL_KINDS: [ProblemKind; 4] =
        [ProblemKind::Mppwg, ProblemKind::Mps, ProblemKind::Mpp, ProblemKind::MpsScfg];

    #[test]
    fn dimacs_roundtrip_and_errors() {
        let f = Cnf3Formula::from_dimacs("c example\np cnf 3 2\n1 -2 3 0\n-1 2 -3 0\n").unwrap();
        assert_eq!(f, worked_formula());
        assert!(Cnf3Formula::from_dimacs("p cnf 2 1\n1 2 0\n").is_err());
        assert!(Cnf3Formula::from_dimacs("1 2 3 0\n").is_err());
        assert!(Cnf3Formula::from_dimacs("p cnf 1 1\n1 2 3 0\n").is_err());
    }

    #[test]
    fn sat_bruteforce_examples() {
        assert!(worked_formula().sat_bruteforce());
        assert!(!unsat_formula().sat_bruteforce());
        assert!(Cnf3Formula::new(2, vec![]).unwrap().sat_bruteforce());
    }

    #[test]
    fn worked_formula_theta_and_q() {
        let inst = build_instance(&worked_formula(), ProblemKind::Mppwg).unwrap();
        assert_eq!(inst.theta, ratio(13, 21));
        let theta = &inst.theta;
        let expected = ratio(3, 64) * theta
            + (BigRational::one() - ratio(3, 2) * theta) * ratio(1, 144);
        assert_eq!(inst.q, expected);
        // 2n consistent trees + 3m conjunct trees + 4n literal trees + the
        // spine.
        assert_eq!(inst.elems.len(), 2 * 3 + 3 * 2 + 4 * 3 + 1);
    }

    #[test]
    fn per_root_probabilities_sum_to_one() {
        for kind in ALL_KINDS {
            let inst = build_instance(&worked_formula(), kind).unwrap();
            let mut sums: BTreeMap<Symbol, BigRational> = BTreeMap::new();
            for (t, p) in &inst.elems {
                *sums.entry(t.label(t.root()).clone()).or_insert_with(BigRational::zero) +=
                    p.clone();
            }
            for (root, sum) in sums {
                assert!(sum.is_one(), "root {root:?} sums to {sum} under {kind:?}");
            }
        }
    }

    #[test]
    fn derivation_probabilities_take_two_values() {
        for kind in ALL_KINDS {
            let inst = build_instance(&worked_formula(), kind).unwrap();
            let m = 2u32;
            let beta = match kind {
                ProblemKind::Mpp => ratio(1, 12),
                _ => ratio(1, 2),
            };
            let first = &inst.theta * pow(&beta, 3 * m);
            let sigma: BigRational = pow(&beta, 2) * ratio(3, 1);
            let second = (BigRational::one() - ratio(2, 1) * &inst.theta * sigma)
                * pow(&beta, 2 * m)
                * pow(&ratio(1, 3), m);
            let derivs = enumerate_exact(&inst);
            assert!(!derivs.is_empty());
            for d in &derivs {
                assert!(
                    d.prob == first || d.prob == second,
                    "unexpected derivation probability {} under {kind:?}",
                    d.prob
                );
            }
            // 3^m second-type derivations stay below one first-type one.
            assert!(ratio(9, 1) * second < first);
        }
    }

    #[test]
    fn scfg_masking_is_injective() {
        let stsg = build_instance(&worked_formula(), ProblemKind::Mps).unwrap();
        let scfg = build_instance(&worked_formula(), ProblemKind::MpsScfg).unwrap();
        assert_eq!(stsg.elems.len(), scfg.elems.len());
        let productions: std::collections::HashSet<String> =
            scfg.elems.iter().map(|(t, _)| t.to_bracketed()).collect();
        assert_eq!(productions.len(), scfg.elems.len());
        for (t, _) in &scfg.elems {
            assert!(t.internal_nodes().len() == 1);
        }
    }

    #[test]
    fn decisions_match_satisfiability() {
        for kind in ALL_KINDS {
            let inst = build_instance(&worked_formula(), kind).unwrap();
            assert!(decide_by_bruteforce(&inst).unwrap(), "worked formula under {kind:?}");
            let inst = build_instance(&unsat_formula(), kind).unwrap();
            assert!(!decide_by_bruteforce(&inst).unwrap(), "unsat formula under {kind:?}");
            let single = Cnf3Formula::new(2, vec![[1, -2, 2]]).unwrap();
            let inst = build_instance(&single, kind).unwrap();
            assert!(decide_by_bruteforce(&inst).unwrap(), "single clause under {kind:?}");
        }
    }

    #[test]
    fn unused_variables_are_dropped() {
        // Variable 2 never occurs; the instance must match the one built
        // from the renumbered formula.
        let f = Cnf3Formula::new(3, vec![[1, 3, 1]]).unwrap();
        let g = Cnf3Formula::new(2, vec![[1, 2, 1]]).unwrap();
        let a = build_instance(&f, ProblemKind::Mps).unwrap();
        let b = build_instance(&g, ProblemKind::Mps).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.q, b.q);
        assert_eq!(a.elems.len(), b.elems.len());
    }

    #[test]
    fn manifest_is_exact() {
        let inst = build_instance(&worked_formula(), ProblemKind::Mppwg).unwrap();
        let line = manifest(&inst);
        assert!(line.starts_with("THETA 13/21 Q "));
        assert!(line.ends_with(" KIND MPPWG"));
    }
}
