//! Deterministic fixtures shared by the benchmarks: a small English-like
//! tree-bank with genuine attachment ambiguity, and inputs derived from it.

use stsg::acnf::{to_acnf, AcnfGrammar};
use stsg::grammar::{project_dop, Stsg};
use stsg::trees::{ProjectionParams, Symbol, Treebank};

const NOUNS: [&str; 6] = ["man", "dog", "cat", "telescope", "park", "idea"];
const VERBS: [&str; 4] = ["saw", "liked", "chased", "heard"];

/// A tree-bank mixing verb-attached and noun-attached prepositional phrases,
/// so projected grammars disambiguate rather than just recognize.
pub fn treebank(trees: usize) -> Treebank {
    let mut text = String::new();
    for i in 0..trees {
        let n1 = NOUNS[i % NOUNS.len()];
        let n2 = NOUNS[(i + 2) % NOUNS.len()];
        let n3 = NOUNS[(i + 4) % NOUNS.len()];
        let v = VERBS[i % VERBS.len()];
        let line = if i % 2 == 0 {
            format!(
                "(S (NP (D the) (N {n1})) (VP (V {v}) (NP (D a) (N {n2})) \
                 (PP (P with) (NP (D a) (N {n3})))))"
            )
        } else {
            format!(
                "(S (NP (D the) (N {n1})) (VP (V {v}) (NP (NP (D a) (N {n2})) \
                 (PP (P with) (NP (D a) (N {n3}))))))"
            )
        };
        text.push_str(&line);
        text.push('\n');
    }
    Treebank::from_str(&text).expect("fixture tree-bank parses")
}

pub fn grammar(trees: usize) -> Stsg {
    project_dop(
        &treebank(trees),
        &ProjectionParams::new(Some(3), Some(2), Some(7), Some(3)),
        false,
    )
    .expect("fixture grammar projects")
}

pub fn acnf_grammar(trees: usize) -> AcnfGrammar {
    to_acnf(&grammar(trees)).expect("fixture grammar converts")
}

/// An ambiguous sentence every fixture grammar recognizes.
pub fn sentence() -> Vec<Symbol> {
    "the man saw a cat with a park"
        .split_whitespace()
        .map(Symbol::terminal)
        .collect()
}
