//! The acceptance gate: one test per criterion, each printing a PASS/FAIL
//! line. The checks compare the optimized algorithms against independent
//! brute-force oracles on seeded random inputs.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

use common::*;
use stsg::acnf::to_acnf;
use stsg::chart::{cky_sentence, cky_wordgraph, scfg_viterbi, WordGraph};
use stsg::disambig::{
    brute_mpp_mps, enumerate_derivations, input_probability, mpd, mpd_with_stats, mpid,
    parse_probability, recognize_derivation_tree, EnumLimits, SearchMode,
};
use stsg::eval::parseval;
use stsg::grammar::{project_dop, scfg_of, Stsg};
use stsg::npc::{build_instance, decide_by_bruteforce, enumerate_exact, Cnf3Formula, ProblemKind};
use stsg::specialize::{integrated_parse, sequential_cover, Dispatch, LearnerConfig};
use stsg::trees::{parse_bracketed, NodeId, ProjectionParams, Symbol, Tree, Treebank};

fn report(n: usize, what: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(body) {
        Ok(()) => println!("criterion {n} ({what}): PASS"),
        Err(e) => {
            println!("criterion {n} ({what}): FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

/// Derivations of every sentence of length at most `max_len`, grouped by
/// sentence, found by exhaustive enumeration over full word lattices.
fn derivations_by_sentence(
    stsg: &Stsg,
    max_len: usize,
) -> BTreeMap<Vec<Symbol>, Vec<f64>> {
    let alphabet = terminal_alphabet();
    let limits = EnumLimits::default();
    let mut by_sentence: BTreeMap<Vec<Symbol>, Vec<f64>> = BTreeMap::new();
    for len in 1..=max_len {
        let wg = full_lattice(&alphabet, len);
        for d in enumerate_derivations(stsg, &wg, &limits).expect("within enumeration caps") {
            by_sentence.entry(d.sentence.clone()).or_default().push(d.log_prob);
        }
    }
    by_sentence
}

#[test]
fn criterion_1_oracle_mpd_equivalence() {
    report(1, "oracle MPD equivalence", || {
        let mut rng = rng(0xC1);
        let mut grammars_with_language = 0;
        for case in 0..200 {
            let stsg = rand_stsg(&mut rng, 8, 3);
            let g = to_acnf(&stsg).expect("generated grammars binarize");
            let by_sentence = derivations_by_sentence(&stsg, 5);
            if !by_sentence.is_empty() {
                grammars_with_language += 1;
            }
            for (sentence, logs) in &by_sentence {
                let best = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let chart = cky_sentence(&g, sentence).expect("known words");
                let result = mpd(&g, &chart)
                    .unwrap_or_else(|| panic!("case {case}: {sentence:?} not recognized"));
                assert!(
                    (result.log_prob - best).abs() < 1e-9,
                    "case {case}: MPD {} vs oracle {best} on {sentence:?}",
                    result.log_prob
                );
                assert!(
                    recognize_derivation_tree(&stsg, &result.parse),
                    "case {case}: decorated parse fails the viability check"
                );
                assert_eq!(&result.sentence, sentence);
            }
        }
        // The corpus must actually exercise the comparison.
        assert!(grammars_with_language > 150, "only {grammars_with_language} grammars derive anything");
    });
}

#[test]
fn criterion_2_probability_sums() {
    report(2, "probability-sum equivalence", || {
        let mut rng = rng(0xC2);
        for case in 0..200 {
            let stsg = rand_stsg(&mut rng, 8, 3);
            let g = to_acnf(&stsg).expect("generated grammars binarize");
            let alphabet = terminal_alphabet();
            let limits = EnumLimits::default();
            for len in 1..=4 {
                let wg = full_lattice(&alphabet, len);
                let derivs = enumerate_derivations(&stsg, &wg, &limits).unwrap();
                let mut by_sentence: BTreeMap<Vec<Symbol>, f64> = BTreeMap::new();
                let mut by_parse: BTreeMap<String, (Tree, f64)> = BTreeMap::new();
                for d in &derivs {
                    *by_sentence.entry(d.sentence.clone()).or_insert(0.0) += d.log_prob.exp();
                    let e = by_parse
                        .entry(d.decorated.tree.to_bracketed())
                        .or_insert_with(|| (d.decorated.tree.clone(), 0.0));
                    e.1 += d.log_prob.exp();
                }
                for (sentence, sum) in &by_sentence {
                    let chart = cky_sentence(&g, sentence).unwrap();
                    let got = input_probability(&g, &chart).exp();
                    assert!(
                        (got - sum).abs() < 1e-9,
                        "case {case}: sentence probability {got} vs oracle {sum}"
                    );
                }
                for (parse, sum) in by_parse.values() {
                    let got = parse_probability(&g, parse).exp();
                    assert!(
                        (got - sum).abs() < 1e-9,
                        "case {case}: parse probability {got} vs oracle {sum}"
                    );
                }
            }
        }
    });
}

#[test]
fn criterion_3_scfg_degeneracy() {
    report(3, "SCFG degeneracy", || {
        let mut rng = rng(0xC3);
        let mut compared = 0;
        for case in 0..50 {
            let stsg = rand_stsg(&mut rng, 8, 1);
            let g = to_acnf(&stsg).expect("depth-1 grammars binarize");
            let scfg = scfg_of(&stsg).expect("depth-1 grammars flatten");
            for sentence in all_sentences(&terminal_alphabet(), 4) {
                let wg = WordGraph::from_sentence(&sentence);
                let viterbi = scfg_viterbi(&scfg, &wg);
                // A word outside the lexicon means the sentence is not in
                // the language.
                let result = cky_sentence(&g, &sentence).ok().and_then(|c| mpd(&g, &c));
                match (viterbi, result) {
                    (None, None) => {}
                    (Some((vt, vp)), Some(r)) => {
                        compared += 1;
                        assert_eq!(
                            vt.to_bracketed(),
                            r.parse.tree.to_bracketed(),
                            "case {case}: parses differ on {sentence:?}"
                        );
                        // Both scores are sums of the same rule log
                        // probabilities; allow reassociation slack only.
                        assert!(
                            (vp - r.log_prob).abs() < 1e-12,
                            "case {case}: {vp} vs {} on {sentence:?}",
                            r.log_prob
                        );
                    }
                    (v, r) => panic!(
                        "case {case}: recognition disagrees on {sentence:?}: viterbi {} mpd {}",
                        v.is_some(),
                        r.is_some()
                    ),
                }
            }
        }
        assert!(compared > 100, "only {compared} recognized sentences compared");
    });
}

#[test]
fn criterion_4_acnf_language_preservation() {
    report(4, "ACNF language preservation", || {
        let mut rng = rng(0xC4);
        for case in 0..50 {
            let stsg = rand_stsg(&mut rng, 6, 3);
            let g = to_acnf(&stsg).expect("generated grammars binarize");
            let before: BTreeSet<Vec<Symbol>> =
                derivations_by_sentence(&stsg, 6).into_keys().collect();
            for sentence in all_sentences(&terminal_alphabet(), 6) {
                let result = cky_sentence(&g, &sentence).ok().and_then(|c| mpd(&g, &c));
                assert_eq!(
                    result.is_some(),
                    before.contains(&sentence),
                    "case {case}: languages differ on {sentence:?}"
                );
                if let Some(r) = result {
                    // The reversed parse must be a real derivation of the
                    // original grammar over the same words.
                    assert!(recognize_derivation_tree(&stsg, &r.parse), "case {case}");
                    assert_eq!(r.parse.tree.frontier(), sentence, "case {case}");
                }
            }
        }
    });
}

#[test]
fn criterion_5_word_graph_mpid() {
    report(5, "word-graph MPiD", || {
        let mut rng = rng(0xC5);
        let limits = EnumLimits::default();
        let mut recognized_graphs = 0;
        for case in 0..50 {
            let stsg = rand_stsg(&mut rng, 8, 3);
            let g = to_acnf(&stsg).expect("generated grammars binarize");
            let wg = rand_word_graph(&mut rng, 6);
            let brute = brute_mpp_mps(&stsg, &wg, &limits).unwrap();
            let result = mpid(&g, &wg);
            assert_eq!(
                result.is_some(),
                !brute.derivations.is_empty(),
                "case {case}: recognition disagrees"
            );
            if let Some(r) = &result {
                recognized_graphs += 1;
                let best = brute.best_derivation_weight.ln();
                assert!(
                    (r.log_prob - best).abs() < 1e-9,
                    "case {case}: MPiD {} vs oracle {best}",
                    r.log_prob
                );
            }
            // Linear unit-probability graphs reduce to sentence MPD.
            for sentence in derivations_by_sentence(&stsg, 4).into_keys() {
                let linear = WordGraph::from_sentence(&sentence);
                let via_graph = mpid(&g, &linear).expect("derivable sentence");
                let chart = cky_sentence(&g, &sentence).unwrap();
                let direct = mpd(&g, &chart).expect("derivable sentence");
                assert_eq!(via_graph.log_prob, direct.log_prob, "case {case}");
                assert_eq!(via_graph.derivation, direct.derivation, "case {case}");
            }
        }
        assert!(recognized_graphs > 5, "only {recognized_graphs} graphs recognized");
    });
}

#[test]
fn criterion_6_reduction_answer_preservation() {
    report(6, "3SAT reduction preservation", || {
        let mut rng = rng(0xC6);
        let kinds =
            [ProblemKind::Mppwg, ProblemKind::Mps, ProblemKind::Mpp, ProblemKind::MpsScfg];
        let mut formulas: Vec<Cnf3Formula> = Vec::new();
        while formulas.len() < 50 {
            let n = rng.gen_range(1..=3u32);
            let m = rng.gen_range(1..=3usize);
            let clauses: Vec<[i32; 3]> = (0..m)
                .map(|_| {
                    [0; 3].map(|_| {
                        let v = rng.gen_range(1..=n as i32);
                        if rng.gen_bool(0.5) {
                            v
                        } else {
                            -v
                        }
                    })
                })
                .collect();
            formulas.push(Cnf3Formula::new(n, clauses).unwrap());
        }
        // The paper's worked example must be a Yes instance.
        formulas.push(Cnf3Formula::new(3, vec![[1, -2, 3], [-1, 2, -3]]).unwrap());
        for (fi, f) in formulas.iter().enumerate() {
            let expected = f.sat_bruteforce();
            for kind in kinds {
                let inst = build_instance(f, kind).unwrap();
                assert_eq!(
                    decide_by_bruteforce(&inst).unwrap(),
                    expected,
                    "formula {fi} under {kind:?}"
                );
                // θ requirements, in exact rationals. θ itself may exceed 1;
                // what must stay in (0, 1) are the derived probabilities.
                let one = BigRational::one();
                assert!(inst.theta > BigRational::zero());
                let mut root_sums: BTreeMap<String, BigRational> = BTreeMap::new();
                for (t, p) in &inst.elems {
                    assert!(p > &BigRational::zero() && p <= &one, "formula {fi}: pᵢ range");
                    *root_sums
                        .entry(t.label(t.root()).text().to_string())
                        .or_insert_with(BigRational::zero) += p.clone();
                }
                for (root, sum) in root_sums {
                    assert!(sum.is_one(), "formula {fi}: root {root} sums to {sum}");
                }
                // Distinguishability: all derivations take one of the two
                // type probabilities, and 3^m second-type ones stay below a
                // first-type one.
                let derivs = enumerate_exact(&inst);
                let mut probs: BTreeSet<BigRational> =
                    derivs.iter().map(|d| d.prob.clone()).collect();
                assert!(probs.len() <= 2, "formula {fi}: more than two derivation weights");
                if probs.len() == 2 {
                    let second = probs.pop_first().unwrap();
                    let first = probs.pop_first().unwrap();
                    let m = f.clauses.len() as u32;
                    let mut margin = second;
                    for _ in 0..m {
                        margin *= BigRational::from_integer(3.into());
                    }
                    assert!(margin < first, "formula {fi}: second type not distinguishable");
                }
                if kind != ProblemKind::Mpp {
                    let n_eff = inst
                        .elems
                        .iter()
                        .filter(|(t, _)| t.label(t.root()).text() == "S")
                        .count()
                        .saturating_sub(1)
                        / 2;
                    let m = f.clauses.len();
                    assert!(
                        inst.elems.len() <= 2 * n_eff + 1 + 3 * m + 4 * n_eff,
                        "formula {fi}: too many elementary trees"
                    );
                }
            }
        }
    });
}

#[test]
fn criterion_7_linearity_contrast() {
    report(7, "linearity contrast", || {
        // A grammar with enough interchangeable structure that every final
        // has several root occurrences.
        let elems = [
            ("(S (A) (B))", 0.4),
            ("(S (A) (S))", 0.2),
            ("(S a (B))", 0.4),
            ("(A a)", 0.5),
            ("(A a (B))", 0.5),
            ("(B b)", 0.6),
            ("(B b (B))", 0.4),
        ];
        let base = Stsg::new(
            Symbol::nonterminal("S"),
            elems
                .iter()
                .map(|(s, p)| (parse_bracketed(s).unwrap(), *p))
                .collect(),
        )
        .unwrap();
        let sentence: Vec<Symbol> =
            "a a b b b b".split_whitespace().map(Symbol::terminal).collect();
        let checks = |stsg: &Stsg, mode: SearchMode| -> u64 {
            let g = to_acnf(stsg).unwrap();
            let chart = cky_sentence(&g, &sentence).unwrap();
            let (result, stats) = mpd_with_stats(&g, &chart, mode);
            assert!(result.is_some(), "the probe sentence must be recognized");
            stats.viability_checks
        };
        let opt: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&f| checks(&duplicate_elems(&base, f), SearchMode::Optimized) as f64)
            .collect();
        let naive: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&f| checks(&duplicate_elems(&base, f), SearchMode::NaivePairwise) as f64)
            .collect();
        let (o2, o4) = (opt[1] / opt[0], opt[2] / opt[0]);
        let (n2, n4) = (naive[1] / naive[0], naive[2] / naive[0]);
        println!("optimized growth x2={o2:.2} x4={o4:.2}; naive growth x2={n2:.2} x4={n4:.2}");
        assert!(o2 <= 2.2, "optimized doubling grew {o2:.2}x");
        assert!(o4 <= 4.8, "optimized quadrupling grew {o4:.2}x");
        assert!(n2 >= 3.5, "naive doubling grew only {n2:.2}x");
        assert!(n4 >= 12.0, "naive quadrupling grew only {n4:.2}x");
    });
}

/// Recomposes a training tree from its cut pieces at the marks by repeated
/// substitution; identity proves the cuts conserve the tree.
fn recompose(tree: &Tree, marks: &HashSet<NodeId>, nid: NodeId) -> Tree {
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
    let mut piece = stsg::specialize::cut_subtree(tree, nid, marks);
    let mut cut_kids: Vec<NodeId> = Vec::new();
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
fn criterion_8_specialization_conservation() {
    report(8, "specialization conservation", || {
        let mut trees = Vec::new();
        let templates = [
            ("(S (X (A a) (B b)) (C c))", 90),
            ("(S (A a) (X (C c) (B b)))", 90),
            ("(S (A a) (B b))", 20),
        ];
        for (s, count) in templates {
            for _ in 0..count {
                trees.push(parse_bracketed(s).unwrap());
            }
        }
        let tb = Treebank::new(trees).unwrap();
        assert_eq!(tb.trees().len(), 200);
        let cfg = LearnerConfig::default();
        let out = sequential_cover(&tb, &cfg).unwrap();
        // Every training tree recomposes exactly from its cut pieces, and
        // every piece is in the specialized grammar.
        let pieces: BTreeSet<String> =
            out.tsg.elems().iter().map(|e| e.tree.to_bracketed()).collect();
        for (ti, tree) in tb.trees().iter().enumerate() {
            let marks = out.marked.marks(ti);
            assert_eq!(&recompose(tree, marks, tree.root()), tree, "tree {ti}");
            for &nid in marks {
                let piece = stsg::specialize::cut_subtree(tree, nid, marks);
                assert!(pieces.contains(&piece.to_bracketed()), "tree {ti} piece missing");
            }
        }
        // Every learned sequence passed the constituency-probability gate.
        assert!(!out.learned.is_empty(), "the learner must learn something here");
        for l in &out.learned {
            assert!(l.cp > cfg.delta, "learned {:?} with cp {}", l.key, l.cp);
        }
        // Integrated parsing recognizes exactly what the full grammar does.
        let spec = to_acnf(&out.tsg).unwrap();
        let full_stsg = project_dop(&tb, &ProjectionParams::default(), false).unwrap();
        let full = to_acnf(&full_stsg).unwrap();
        let alphabet: Vec<Symbol> = ["a", "b", "c"].iter().map(|s| Symbol::terminal(*s)).collect();
        let mut specialized_hits = 0;
        for sentence in all_sentences(&alphabet, 4) {
            let wg = WordGraph::from_sentence(&sentence);
            let r = integrated_parse(&spec, &full, &wg);
            let full_alone = mpd(&full, &cky_wordgraph(&full, &wg)).is_some();
            let integrated = match r.dispatch {
                Dispatch::UseSdop => true,
                Dispatch::UseDop => mpd(&full, &r.full_chart).is_some(),
            };
            assert_eq!(integrated, full_alone, "recognition differs on {sentence:?}");
            if r.dispatch == Dispatch::UseSdop {
                specialized_hits += 1;
                assert!(full_alone, "specialized-only sentence {sentence:?}");
            }
        }
        assert!(specialized_hits > 0, "the specialized grammar never dispatched");
    });
}

#[test]
fn criterion_9_parseval_exactness() {
    report(9, "PARSEVAL exactness", || {
        let t = |s: &str| parse_bracketed(s).unwrap();
        // Pair 1: identity.
        let gold = vec![t("(S (A a) (B b) (C c))")];
        let test = vec![Some(t("(S (A a) (B b) (C c))"))];
        let r = parseval(&gold, &test).unwrap();
        assert_eq!(
            (r.recognized, r.exact_match, r.zero_crossing),
            (1.0, 1.0, 1.0)
        );
        assert_eq!(
            (
                r.labeled_bracket_recall,
                r.labeled_bracket_precision,
                r.bracket_recall,
                r.bracket_precision,
                r.ncb_recall,
                r.ncb_precision
            ),
            (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        );
        // Pair 2: one extra non-crossing bracket. Gold brackets: S(0,3)
        // A(0,1) B(1,2) C(2,3); test adds X(0,2). Hits 4 of 5.
        let gold = vec![t("(S (A a) (B b) (C c))")];
        let test = vec![Some(t("(S (X (A a) (B b)) (C c))"))];
        let r = parseval(&gold, &test).unwrap();
        assert_eq!(r.bracket_recall, 1.0);
        assert_eq!(r.bracket_precision, 4.0 / 5.0);
        assert_eq!(r.labeled_bracket_recall, 1.0);
        assert_eq!(r.labeled_bracket_precision, 4.0 / 5.0);
        assert_eq!(r.ncb_recall, 5.0 / 4.0);
        assert_eq!(r.ncb_precision, 1.0);
        assert_eq!(r.zero_crossing, 1.0);
        assert_eq!(r.exact_match, 0.0);
        // Pair 3: a crossing bracket plus one unparsed item. Gold brackets
        // of item 1: S(0,3) X(0,2) A(0,1) B(1,2) C(2,3); test Y(1,3)
        // crosses X(0,2). Hits: S A B C = 4.
        let gold = vec![t("(S (X (A a) (B b)) (C c))"), t("(S (A a) (B b))")];
        let test = vec![Some(t("(S (A a) (Y (B b) (C c)))")), None];
        let r = parseval(&gold, &test).unwrap();
        assert_eq!(r.recognized, 0.5);
        assert_eq!(r.exact_match, 0.0);
        assert_eq!(r.zero_crossing, 0.0);
        // Gold sets: 5 + 3 brackets; test set: 5 brackets, 4 hits labeled
        // only where labels agree: S(0,3) A(0,1) B(1,2) hit; C(2,3) gold vs
        // test C(2,3) hit too. Labeled hits: S,A,B,C = 4.
        assert_eq!(r.labeled_bracket_recall, 4.0 / 8.0);
        assert_eq!(r.labeled_bracket_precision, 4.0 / 5.0);
        assert_eq!(r.bracket_recall, 4.0 / 8.0);
        assert_eq!(r.bracket_precision, 4.0 / 5.0);
        assert_eq!(r.ncb_recall, 4.0 / 8.0);
        assert_eq!(r.ncb_precision, 4.0 / 5.0);
        assert_eq!((r.num_items, r.avg_sentence_length), (2, 2.5));
    });
}
