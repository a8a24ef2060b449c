//! PARSEVAL-style comparison of output parses against gold parses: exact
//! match, labeled and non-labeled bracketing recall/precision, non-crossing
//! bracket rates, and zero-crossing sentence rate. An unparsed item (the nil
//! tree) contributes no brackets and is excluded from the recognized count.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::trees::{Symbol, Tree};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("gold has {gold} items but test has {test}")]
    LengthMismatch { gold: usize, test: usize },
    #[error("item {index}: gold frontier has {gold} words but test has {test}")]
    FrontierMismatch { index: usize, gold: usize, test: usize },
}

/// Aggregate scores over a test run. All rates are fractions in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Fraction of items assigned a parse.
    pub recognized: f64,
    /// Fraction of recognized items whose parse equals the gold parse.
    pub exact_match: f64,
    pub labeled_bracket_recall: f64,
    pub labeled_bracket_precision: f64,
    pub bracket_recall: f64,
    pub bracket_precision: f64,
    /// Non-crossing brackets relative to the gold bracket count.
    pub ncb_recall: f64,
    /// Non-crossing brackets relative to the output bracket count.
    pub ncb_precision: f64,
    /// Fraction of recognized items with no crossing bracket.
    pub zero_crossing: f64,
    pub num_items: usize,
    pub avg_sentence_length: f64,
}

impl EvalReport {
    /// Machine-readable key=value lines, one measure per line.
    pub fn to_key_values(&self) -> String {
        format!(
            "recognized={}\nexact_match={}\nlabeled_bracket_recall={}\n\
             labeled_bracket_precision={}\nbracket_recall={}\nbracket_precision={}\n\
             ncb_recall={}\nncb_precision={}\nzero_crossing={}\nnum_items={}\n\
             avg_sentence_length={}\n",
            self.recognized,
            self.exact_match,
            self.labeled_bracket_recall,
            self.labeled_bracket_precision,
            self.bracket_recall,
            self.bracket_precision,
            self.ncb_recall,
            self.ncb_precision,
            self.zero_crossing,
            self.num_items,
            self.avg_sentence_length,
        )
    }

    /// Aligned human-readable table.
    pub fn to_table(&self) -> String {
        let rows = [
            ("Recognized", self.recognized),
            ("Exact match", self.exact_match),
            ("Labeled bracket recall", self.labeled_bracket_recall),
            ("Labeled bracket precision", self.labeled_bracket_precision),
            ("Bracket recall", self.bracket_recall),
            ("Bracket precision", self.bracket_precision),
            ("NCB recall", self.ncb_recall),
            ("NCB precision", self.ncb_precision),
            ("Zero crossing", self.zero_crossing),
        ];
        let mut out = String::new();
        for (name, value) in rows {
            out.push_str(&format!("{name:<26} {value:.4}\n"));
        }
        out.push_str(&format!("{:<26} {}\n", "Items", self.num_items));
        out.push_str(&format!("{:<26} {:.4}\n", "Avg sentence length", self.avg_sentence_length));
        out
    }
}

/// Labeled brackets of a tree: every nonterminal node (preterminals
/// included) as (label, i−1, j) over its covered terminal positions,
/// counting terminals from one.
pub fn labeled_brackets(tree: &Tree) -> BTreeSet<(Symbol, usize, usize)> {
    fn walk(
        tree: &Tree,
        nid: crate::trees::NodeId,
        next: &mut usize,
        out: &mut BTreeSet<(Symbol, usize, usize)>,
    ) -> (usize, usize) {
        if tree.is_leaf(nid) && tree.label(nid).is_terminal() {
            *next += 1;
            return (*next - 1, *next);
        }
        let lo = *next;
        for &c in tree.children(nid) {
            walk(tree, c, next, out);
        }
        let hi = *next;
        if hi > lo {
            out.insert((tree.label(nid).clone(), lo, hi));
        }
        (lo, hi)
    }
    let mut out = BTreeSet::new();
    let mut next = 0;
    walk(tree, tree.root(), &mut next, &mut out);
    out
}

fn crossing(a: (usize, usize), b: (usize, usize)) -> bool {
    (a.0 < b.0 && b.0 < a.1 && a.1 < b.1) || (b.0 < a.0 && a.0 < b.1 && b.1 < a.1)
}

fn rate(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Compares output parses against gold parses. `None` marks an item the
/// system failed to parse.
pub fn parseval(gold: &[Tree], test: &[Option<Tree>]) -> Result<EvalReport, EvalError> {
    if gold.len() != test.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), test: test.len() });
    }
    let mut recognized = 0usize;
    let mut exact = 0usize;
    let mut zero_cross = 0usize;
    let mut lb_hits = 0usize;
    let mut lb_gold = 0usize;
    let mut lb_test = 0usize;
    let mut nb_hits = 0usize;
    let mut nb_gold = 0usize;
    let mut nb_test = 0usize;
    let mut non_crossing = 0usize;
    let mut total_words = 0usize;
    for (index, (g, t)) in gold.iter().zip(test).enumerate() {
        let g_words = g.frontier().len();
        total_words += g_words;
        let g_lb = labeled_brackets(g);
        lb_gold += g_lb.len();
        let g_nb: BTreeSet<(usize, usize)> = g_lb.iter().map(|&(_, i, j)| (i, j)).collect();
        nb_gold += g_nb.len();
        let Some(t) = t else { continue };
        let t_words = t.frontier().len();
        if t_words != g_words {
            return Err(EvalError::FrontierMismatch { index, gold: g_words, test: t_words });
        }
        recognized += 1;
        if t == g {
            exact += 1;
        }
        let t_lb = labeled_brackets(t);
        lb_test += t_lb.len();
        lb_hits += t_lb.intersection(&g_lb).count();
        let t_nb: BTreeSet<(usize, usize)> = t_lb.iter().map(|&(_, i, j)| (i, j)).collect();
        nb_test += t_nb.len();
        nb_hits += t_nb.intersection(&g_nb).count();
        let crossers = t_nb.iter().filter(|&&b| g_nb.iter().any(|&gb| crossing(b, gb))).count();
        non_crossing += t_nb.len() - crossers;
        if crossers == 0 {
            zero_cross += 1;
        }
    }
    Ok(EvalReport {
        recognized: rate(recognized as f64, gold.len() as f64),
        exact_match: rate(exact as f64, recognized as f64),
        labeled_bracket_recall: rate(lb_hits as f64, lb_gold as f64),
        labeled_bracket_precision: rate(lb_hits as f64, lb_test as f64),
        bracket_recall: rate(nb_hits as f64, nb_gold as f64),
        bracket_precision: rate(nb_hits as f64, nb_test as f64),
        ncb_recall: rate(non_crossing as f64, nb_gold as f64),
        ncb_precision: rate(non_crossing as f64, nb_test as f64),
        zero_crossing: rate(zero_cross as f64, recognized as f64),
        num_items: gold.len(),
        avg_sentence_length: rate(total_words as f64, gold.len() as f64),
    })
}
