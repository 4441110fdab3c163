use serde::{Deserialize, Serialize};

use super::RetrievalResult;

pub const LLM_CALL_BUCKETS: [&str; 6] = ["0", "1", "2-5", "6-10", "11-20", ">20"];

pub fn llm_call_bucket(calls: u64) -> &'static str {
    match calls {
        0 => "0",
        1 => "1",
        2..=5 => "2-5",
        6..=10 => "6-10",
        11..=20 => "11-20",
        _ => ">20",
    }
}

/// Per-query call statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CallStats {
    pub llm_calls: u64,
    pub bucket: String,
    /// Completion tokens of each call, in order.
    pub tokens_per_call: Vec<u64>,
    pub calls_under_100_tokens: u64,
    pub warnings: Vec<String>,
}

pub fn instrument(result: &RetrievalResult) -> CallStats {
    let tokens_per_call: Vec<u64> = result.trace.iter().map(|t| t.completion_tokens).collect();
    let mut warnings = Vec::new();
    if result.trace.len() as u64 != result.llm_calls {
        warnings.push(format!("trace has {} entries for {} calls", result.trace.len(), result.llm_calls));
    }
    if result.llm_calls > u64::from(result.max_rounds) {
        warnings.push(format!("{} calls exceed max_rounds {}", result.llm_calls, result.max_rounds));
    }
    CallStats {
        llm_calls: result.llm_calls,
        bucket: llm_call_bucket(result.llm_calls).to_string(),
        calls_under_100_tokens: tokens_per_call.iter().filter(|t| **t < 100).count() as u64,
        tokens_per_call,
        warnings,
    }
}
