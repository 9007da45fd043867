use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_with, trial_seed, RunOptions, RunOutcome, Scenario, SimError};
use crate::time::ExactTime;

/// Integer aggregate over trials; merging is associative and commutative,
/// so the result does not depend on scheduling.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: u64,
    pub successes: u64,
    pub delay_detections: u64,
    pub wrong_bit_detections: u64,
    /// Sum of |arrival error| over every station verdict with an arrival.
    pub abs_error_sum: ExactTime,
    pub max_abs_error: ExactTime,
    pub error_samples: u64,
    pub qke_sessions: u64,
    pub qke_sifted: u64,
    pub qke_sample: u64,
    pub qke_errors: u64,
    pub qke_aborts: u64,
}

impl TrialSummary {
    pub fn from_outcome(o: &RunOutcome) -> Self {
        let mut s = TrialSummary {
            trials: 1,
            successes: o.decision.authenticated as u64,
            delay_detections: o.delay_detected() as u64,
            wrong_bit_detections: o.wrong_bit_detected() as u64,
            qke_sessions: o.qke.sessions as u64,
            qke_sifted: o.qke.sifted_length as u64,
            qke_sample: o.qke.sample_length as u64,
            qke_errors: o.qke.sample_errors as u64,
            qke_aborts: o.qke.aborted.is_some() as u64,
            ..Default::default()
        };
        for v in &o.verdicts {
            for st in &v.stations {
                if let Some(e) = st.arrival_error {
                    let e = e.abs();
                    s.abs_error_sum += e;
                    s.max_abs_error = s.max_abs_error.max(e);
                    s.error_samples += 1;
                }
            }
        }
        s
    }

    pub fn merge(mut self, o: TrialSummary) -> TrialSummary {
        self.trials += o.trials;
        self.successes += o.successes;
        self.delay_detections += o.delay_detections;
        self.wrong_bit_detections += o.wrong_bit_detections;
        self.abs_error_sum += o.abs_error_sum;
        self.max_abs_error = self.max_abs_error.max(o.max_abs_error);
        self.error_samples += o.error_samples;
        self.qke_sessions += o.qke_sessions;
        self.qke_sifted += o.qke_sifted;
        self.qke_sample += o.qke_sample;
        self.qke_errors += o.qke_errors;
        self.qke_aborts += o.qke_aborts;
        self
    }

    pub fn p_hat(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn mean_abs_error(&self) -> f64 {
        if self.error_samples == 0 {
            0.0
        } else {
            self.abs_error_sum.as_units() / self.error_samples as f64
        }
    }
}

/// Runs `trials` independent sessions, trial `i` seeded with
/// `trial_seed(master_seed, i)`, on `workers` threads (0 = all cores).
///
/// On failure the error of the lowest-indexed failing trial is returned.
pub fn run_trials(
    scenario: &Scenario,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<TrialSummary, SimError> {
    scenario.validate().map_err(SimError::Invalid)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Invariant(format!("thread pool: {e}")))?;
    let opts = RunOptions { trace: false };
    type Acc = Result<TrialSummary, (u64, SimError)>;
    let merge = |a: Acc, b: Acc| -> Acc {
        match (a, b) {
            (Ok(x), Ok(y)) => Ok(x.merge(y)),
            (Err(e), Ok(_)) | (Ok(_), Err(e)) => Err(e),
            (Err(e1), Err(e2)) => Err(if e1.0 <= e2.0 { e1 } else { e2 }),
        }
    };
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                run_with(scenario, trial_seed(master_seed, i), opts)
                    .map(|o| TrialSummary::from_outcome(&o))
                    .map_err(|e| (i, e))
            })
            .reduce(|| Ok(TrialSummary::default()), merge)
    })
    .map_err(|(_, e)| e)
}
