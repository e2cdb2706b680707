//! Yes/no posterior from first-position token log-probabilities.

use serde::{Deserialize, Serialize};

/// Log-probability assigned to a class missing from the returned candidates.
pub const ABSENT_CLASS_LOGPROB: f64 = -20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YesNoPosterior {
    pub p_yes: f64,
    pub logprob_yes: f64,
    pub logprob_no: f64,
    pub fallback_used: bool,
}

/// `exp(ly) / (exp(ly) + exp(ln))`, evaluated as a logistic in the margin so it
/// is shift invariant and never overflows. The result is clamped into the open
/// unit interval.
pub fn p_yes(logprob_yes: f64, logprob_no: f64) -> f64 {
    let margin = logprob_yes - logprob_no;
    let p = if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl YesNoPosterior {
    pub fn from_logprobs(logprob_yes: f64, logprob_no: f64) -> Self {
        Self {
            p_yes: p_yes(logprob_yes, logprob_no),
            logprob_yes,
            logprob_no,
            fallback_used: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Yes,
    No,
}

fn classify(token: &str) -> Option<Class> {
    match token.trim().to_lowercase().as_str() {
        "yes" => Some(Class::Yes),
        "no" => Some(Class::No),
        _ => None,
    }
}

fn log_sum_exp(values: &[f64]) -> Option<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    Some(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Folds surface variants (`yes`, `Yes`, ` yes`, ...) of each class by summing
/// their probabilities. Returns `None` when neither class is present.
pub fn posterior_from_top_logprobs<'a>(
    candidates: impl IntoIterator<Item = (&'a str, f64)>,
) -> Option<YesNoPosterior> {
    let (mut yes, mut no) = (Vec::new(), Vec::new());
    for (token, lp) in candidates {
        match classify(token) {
            Some(Class::Yes) => yes.push(lp),
            Some(Class::No) => no.push(lp),
            None => {}
        }
    }
    let ly = log_sum_exp(&yes);
    let ln = log_sum_exp(&no);
    let (ly, ln, fallback) = match (ly, ln) {
        (None, None) => return None,
        (Some(y), Some(n)) => (y, n, false),
        (Some(y), None) => (y, ABSENT_CLASS_LOGPROB.min(y), true),
        (None, Some(n)) => (ABSENT_CLASS_LOGPROB.min(n), n, true),
    };
    let mut post = YesNoPosterior::from_logprobs(ly, ln);
    post.fallback_used = fallback;
    Some(post)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logprobs_give_one_half() {
        assert_eq!(p_yes(-1.3, -1.3), 0.5);
        assert_eq!(p_yes(0.0, 0.0), 0.5);
    }

    #[test]
    fn worked_value() {
        // 1 / (1 + e^(-2.2)), evaluated by hand: e^-2.2 = 0.110803..., p = 0.900249...
        let expected = 1.0 / (1.0 + (-2.2f64).exp());
        assert!((p_yes(-0.1, -2.3) - expected).abs() < 1e-12);
        assert!((p_yes(-0.1, -2.3) - 0.900).abs() < 1e-3);
    }

    #[test]
    fn variants_are_summed() {
        let half = 0.5f64.ln();
        let quarter = 0.25f64.ln();
        let p = posterior_from_top_logprobs([(" yes", quarter), ("Yes", quarter), (" no", half)]).unwrap();
        assert!((p.p_yes - 0.5).abs() < 1e-12);
        assert!(!p.fallback_used);
    }

    #[test]
    fn absent_class_is_floored() {
        let p = posterior_from_top_logprobs([(" yes", -0.01), (" maybe", -5.0)]).unwrap();
        assert!(p.fallback_used);
        assert_eq!(p.logprob_no, ABSENT_CLASS_LOGPROB);
        assert!(p.p_yes > 0.99 && p.p_yes < 1.0);
    }

    #[test]
    fn neither_class_is_none() {
        assert!(posterior_from_top_logprobs([("def", -0.1), ("```", -1.0)]).is_none());
    }

    #[test]
    fn extreme_margins_stay_open() {
        assert!(p_yes(0.0, -1000.0) < 1.0);
        assert!(p_yes(-1000.0, 0.0) > 0.0);
    }
}
