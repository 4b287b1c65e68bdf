//! Run summary JSON.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: String,
    pub converged: bool,
    pub objective: f64,
    pub ax_minus_b_l1: f64,
    pub rounds: u64,
    pub uplink_words: u64,
    pub downlink_words: u64,
    pub t_tilde_final: f64,
    /// `L R δ`, the additive accuracy the run targets.
    pub accuracy_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ref_opt: Option<f64>,
    /// `objective - ref_opt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_bound: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setup_words: Option<(u64, u64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_words: Option<(u64, u64)>,
}

impl Summary {
    pub fn with_reference(mut self, ref_opt: Option<f64>) -> Self {
        self.ref_opt = ref_opt;
        self.slack = ref_opt.map(|r| self.objective - r);
        self.within_bound = self.slack.map(|s| s <= self.accuracy_bound);
        self
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("summary serializes");
        text.push('\n');
        text
    }
}
