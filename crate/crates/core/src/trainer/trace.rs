//! Training history: per-iteration objective records and per-layer summaries.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub layer: usize,
    pub iteration: usize,
    /// Measured objective at this iteration (loss-scaled, possibly sampled).
    pub objective: f64,
    pub sqrt_objective: f64,
    /// Cumulative objective evaluations consumed so far in the run.
    pub measurements_used: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    /// Converged measured objective (post-refinement under the exact model,
    /// trailing-window average under shot noise).
    pub final_objective: f64,
    pub iterations: usize,
    pub measurements: u64,
    /// Layer skipped because the remaining power fell below the null-space
    /// threshold; its value is reported as zero.
    pub skipped_null_space: bool,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub iterations: Vec<IterationRecord>,
    pub layers: Vec<LayerSummary>,
}

impl TrainingTrace {
    pub fn record(
        &mut self,
        layer: usize,
        iteration: usize,
        objective: f64,
        measurements_used: u64,
    ) {
        self.iterations.push(IterationRecord {
            layer,
            iteration,
            objective,
            sqrt_objective: objective.max(0.0).sqrt(),
            measurements_used,
        });
    }

    /// CSV with columns `layer,iter,objective,sqrt_objective,measurements_used`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,iter,objective,sqrt_objective,measurements_used\n");
        for r in &self.iterations {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.layer, r.iteration, r.objective, r.sqrt_objective, r.measurements_used
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let mut trace = TrainingTrace::default();
        trace.record(0, 0, 0.25, 1);
        trace.record(0, 1, 0.36, 2);
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "layer,iter,objective,sqrt_objective,measurements_used");
        assert!(lines[1].starts_with("0,0,0.25,0.5,"));
    }
}
