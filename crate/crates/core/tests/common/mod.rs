//! Shared generators for the randomized acceptance checks. Everything is
//! seeded, so failures reproduce.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stsg::chart::{Transition, WordGraph};
use stsg::grammar::Stsg;
use stsg::trees::{Symbol, Tree};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const NONTERMINALS: [&str; 3] = ["S", "A", "B"];
pub const TERMINALS: [&str; 3] = ["a", "b", "c"];

pub fn terminal_alphabet() -> Vec<Symbol> {
    TERMINALS.iter().map(|s| Symbol::terminal(*s)).collect()
}

/// A random elementary tree of the given remaining depth. One-child nodes
/// always get a terminal child, so no tree has a substitution site or a
/// nonterminal as an only child (which binarization rejects).
fn rand_elem(rng: &mut ChaCha8Rng, root: &str, depth: u32) -> Tree {
    let arity = rng.gen_range(1..=3);
    let kids = (0..arity)
        .map(|_| {
            if arity == 1 || depth == 0 || rng.gen_bool(0.5) {
                if arity == 1 || rng.gen_bool(0.6) {
                    Tree::leaf(Symbol::terminal(TERMINALS[rng.gen_range(0..3)]))
                } else {
                    Tree::leaf(Symbol::nonterminal(NONTERMINALS[rng.gen_range(0..3)]))
                }
            } else {
                let root = NONTERMINALS[rng.gen_range(0..3)];
                rand_elem(rng, root, depth - 1)
            }
        })
        .collect();
    Tree::node(Symbol::nonterminal(root), kids)
}

/// A random STSG over fixed small alphabets: at most `max_elems` elementary
/// trees of depth at most `max_depth`, at least one rooted in the start
/// symbol S, with random per-root-normalized probabilities.
pub fn rand_stsg(rng: &mut ChaCha8Rng, max_elems: usize, max_depth: u32) -> Stsg {
    let count = rng.gen_range(3..=max_elems.max(3));
    let mut trees: Vec<Tree> = Vec::new();
    for i in 0..count {
        let root = if i == 0 { "S" } else { NONTERMINALS[rng.gen_range(0..3)] };
        let t = rand_elem(rng, root, max_depth - 1);
        if !trees.contains(&t) {
            trees.push(t);
        }
    }
    let weights: Vec<f64> = trees.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
    let elems = trees
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let root = t.label(t.root());
            let total: f64 = trees
                .iter()
                .zip(&weights)
                .filter(|(o, _)| o.label(o.root()) == root)
                .map(|(_, w)| w)
                .sum();
            (t.clone(), weights[i] / total)
        })
        .collect();
    Stsg::new(Symbol::nonterminal("S"), elems).expect("generated trees are well-formed")
}

/// Repeats every elementary tree `factor` times; probabilities are kept, so
/// the grammar has `factor` interchangeable copies of each subtree.
pub fn duplicate_elems(stsg: &Stsg, factor: usize) -> Stsg {
    let mut elems = Vec::new();
    for e in stsg.elems() {
        for _ in 0..factor {
            elems.push((e.tree.clone(), e.log_prob.exp()));
        }
    }
    Stsg::new(stsg.start().clone(), elems).expect("duplication preserves well-formedness")
}

/// The full word lattice of the given length: every alphabet word on every
/// position, unit probabilities.
pub fn full_lattice(alphabet: &[Symbol], len: usize) -> WordGraph {
    let mut transitions = Vec::new();
    for pos in 0..len {
        for w in alphabet {
            transitions.push(Transition { from: pos, to: pos + 1, word: w.clone(), prob: 1.0 });
        }
    }
    WordGraph::new(len + 1, transitions).expect("lattice is well-formed")
}

/// A random acyclic word-graph with at most `max_states` states: every state
/// reaches the next one, plus random forward skips, with random transition
/// probabilities.
pub fn rand_word_graph(rng: &mut ChaCha8Rng, max_states: usize) -> WordGraph {
    let states = rng.gen_range(2..=max_states);
    let mut transitions = Vec::new();
    for from in 0..states - 1 {
        let fanout = rng.gen_range(1..=2);
        for _ in 0..fanout {
            let to = rng.gen_range(from + 1..states);
            transitions.push(Transition {
                from,
                to,
                word: Symbol::terminal(TERMINALS[rng.gen_range(0..3)]),
                prob: rng.gen_range(0.1..=1.0),
            });
        }
        // Keep every state connected toward the end.
        if !transitions.iter().any(|t| t.from == from && t.to == from + 1) {
            transitions.push(Transition {
                from,
                to: from + 1,
                word: Symbol::terminal(TERMINALS[rng.gen_range(0..3)]),
                prob: rng.gen_range(0.1..=1.0),
            });
        }
    }
    WordGraph::new(states, transitions).expect("generated graph is well-formed")
}

/// All sentences over `alphabet` of length 1..=`max_len`.
pub fn all_sentences(alphabet: &[Symbol], max_len: usize) -> Vec<Vec<Symbol>> {
    let mut out: Vec<Vec<Symbol>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<Symbol>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for w in alphabet {
                let mut ext = s.clone();
                ext.push(w.clone());
                next.push(ext);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out.retain(|s| !s.is_empty());
    out
}
