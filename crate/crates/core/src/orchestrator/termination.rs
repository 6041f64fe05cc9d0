use std::collections::HashMap;

use super::LoopConfig;
use crate::state::{TerminationReason, Verification};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationDecision {
    Continue,
    Stop(TerminationReason),
}

/// Decides whether the loop stops after step `t`.
///
/// Checked in priority order: convergence (`score > tau`, strict), budget
/// (`t + 1 >= max_iters`), then prompt oscillation.
pub fn check_termination(
    latest: &Verification,
    t: usize,
    prompts: &[impl AsRef<str>],
    config: &LoopConfig,
) -> TerminationDecision {
    if latest.score() > config.tau {
        TerminationDecision::Stop(TerminationReason::Converged)
    } else if t + 1 >= config.max_iters {
        TerminationDecision::Stop(TerminationReason::BudgetExhausted)
    } else if detect_oscillation(prompts, config) {
        TerminationDecision::Stop(TerminationReason::Deadlock)
    } else {
        TerminationDecision::Continue
    }
}

/// True when the latest prompt repeats one of the two before it (period-1 or
/// period-2 cycles) within the configured window.
pub fn detect_oscillation(prompts: &[impl AsRef<str>], config: &LoopConfig) -> bool {
    let start = prompts.len().saturating_sub(config.oscillation_window);
    let window = &prompts[start..];
    let Some((latest, earlier)) = window.split_last() else {
        return false;
    };
    earlier
        .iter()
        .rev()
        .take(2)
        .any(|p| prompt_similarity(latest.as_ref(), p.as_ref()) >= config.oscillation_similarity)
}

fn trigrams(text: &str) -> HashMap<String, usize> {
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    let mut grams = HashMap::new();
    if words.is_empty() {
        return grams;
    }
    if words.len() < 3 {
        // too short for a trigram: the whole token sequence is one gram
        grams.insert(words.join(" "), 1);
        return grams;
    }
    for w in words.windows(3) {
        *grams.entry(w.join(" ")).or_insert(0) += 1;
    }
    grams
}

/// Jaccard index over word-trigram multisets, case- and whitespace-insensitive.
pub fn prompt_similarity(a: &str, b: &str) -> f64 {
    let (ga, gb) = (trigrams(a), trigrams(b));
    if ga.is_empty() && gb.is_empty() {
        return 1.0;
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (g, &ca) in &ga {
        let cb = gb.get(g).copied().unwrap_or(0);
        inter += ca.min(cb);
        union += ca.max(cb);
    }
    union += gb
        .iter()
        .filter(|(g, _)| !ga.contains_key(*g))
        .map(|(_, c)| c)
        .sum::<usize>();
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config() -> LoopConfig {
        LoopConfig {
            tau: 0.9,
            max_iters: 8,
            ..LoopConfig::default()
        }
    }

    fn v(score: f64) -> Verification {
        Verification::new(score, Some("fb".into())).unwrap()
    }

    const NONE: [&str; 0] = [];

    #[test]
    fn converges_above_tau() {
        assert_eq!(
            check_termination(&v(0.95), 0, &NONE, &config()),
            TerminationDecision::Stop(TerminationReason::Converged)
        );
    }

    #[test]
    fn tau_itself_does_not_converge() {
        assert_eq!(check_termination(&v(0.9), 0, &NONE, &config()), TerminationDecision::Continue);
    }

    #[test]
    fn budget_on_last_iteration() {
        assert_eq!(
            check_termination(&v(0.1), 7, &NONE, &config()),
            TerminationDecision::Stop(TerminationReason::BudgetExhausted)
        );
    }

    #[test]
    fn convergence_outranks_budget_and_deadlock() {
        assert_eq!(
            check_termination(&v(0.95), 7, &["a b c", "a b c"], &config()),
            TerminationDecision::Stop(TerminationReason::Converged)
        );
        assert_eq!(
            check_termination(&v(0.5), 7, &["a b c", "a b c"], &config()),
            TerminationDecision::Stop(TerminationReason::BudgetExhausted)
        );
        assert_eq!(
            check_termination(&v(0.5), 1, &["a b c", "a b c"], &config()),
            TerminationDecision::Stop(TerminationReason::Deadlock)
        );
    }

    #[test]
    fn period_two_repeat_is_detected() {
        let a = "draw a red cube on the table";
        let b = "place two spheres next to the wall";
        assert_eq!(prompt_similarity(a, a), 1.0);
        assert!(detect_oscillation(&[a, b, a, b], &config()));
        assert!(detect_oscillation(&[a, b, a], &config()));
        assert!(!detect_oscillation(&[a, b], &config()));
    }

    #[test]
    fn distinct_prompts_do_not_oscillate() {
        let ps = [
            "alpha beta gamma delta",
            "epsilon zeta eta theta",
            "iota kappa lambda mu",
            "nu xi omicron pi",
        ];
        for i in 0..ps.len() {
            for j in 0..i {
                assert_eq!(prompt_similarity(ps[i], ps[j]), 0.0);
            }
        }
        assert!(!detect_oscillation(&ps, &config()));
    }

    #[test]
    fn single_prompt_is_vacuous() {
        assert!(!detect_oscillation(&["one prompt only"], &config()));
        assert!(!detect_oscillation(&NONE, &config()));
    }

    #[test]
    fn lag_beyond_two_is_ignored() {
        let (a, b, c) = ("one two three", "four five six", "seven eight nine");
        assert!(!detect_oscillation(&[a, b, c, a], &config()));
    }

    #[test]
    fn window_limits_lookback() {
        let cfg = LoopConfig {
            oscillation_window: 2,
            ..config()
        };
        let (a, b) = ("one two three", "four five six");
        assert!(!detect_oscillation(&[a, b, a], &cfg));
        assert!(detect_oscillation(&[a, b, b], &cfg));
    }

    #[test]
    fn multiset_jaccard_by_hand() {
        // trigrams: {a b c, b c a, c a b} vs {a b c, b c d}: 1 shared, 4 total
        assert!((prompt_similarity("a b c a b", "a b c d") - 0.25).abs() < 1e-12);
        // repeated trigram counts twice in the multiset
        assert!((prompt_similarity("x y z x y z", "x y z") - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn similarity_ignores_case_and_spacing(
            words in prop::collection::vec("[a-z]{1,6}", 1..12),
            other in prop::collection::vec("[a-z]{1,6}", 1..12),
            gaps in prop::collection::vec(1usize..4, 12),
        ) {
            let plain = words.join(" ");
            let noisy: String = words
                .iter()
                .zip(&gaps)
                .map(|(w, g)| format!("{}{}", w.to_uppercase(), "\t ".repeat(*g)))
                .collect();
            let o = other.join(" ");
            prop_assert_eq!(prompt_similarity(&plain, &noisy), 1.0);
            prop_assert_eq!(prompt_similarity(&plain, &o), prompt_similarity(&noisy, &o));
            let cfg = config();
            prop_assert_eq!(
                detect_oscillation(&[o.as_str(), plain.as_str()], &cfg),
                detect_oscillation(&[o.as_str(), noisy.as_str()], &cfg)
            );
        }

        #[test]
        fn similarity_is_symmetric_and_bounded(a in "[a-c ]{0,30}", b in "[a-c ]{0,30}") {
            let s = prompt_similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, prompt_similarity(&b, &a));
        }
    }
}
