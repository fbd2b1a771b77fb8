use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;

use super::{run_episode, Diagnostician, EpisodeConfig, PolicyFault};
use crate::domain::{FeatureValues, PatientRecord, Transcript};

/// Builds one fresh policy per episode from what a clinician could see.
pub trait PolicyFactory: Sync {
    fn name(&self) -> String;
    fn build(&self, patient_id: &str, values: &FeatureValues) -> Box<dyn Diagnostician>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// Completed episodes in patient order, plus any aborted partials.
    pub transcripts: Vec<Transcript>,
    /// First batch-stopping fault, with its patient id.
    pub fault: Option<(String, PolicyFault)>,
}

/// Run episodes with at most `parallel` in flight. A fault from any policy
/// stops new episodes from starting; finished ones are kept.
pub fn run_batch(
    patients: &[PatientRecord],
    factory: &dyn PolicyFactory,
    config: &EpisodeConfig,
    parallel: usize,
) -> BatchOutcome {
    let abort = AtomicBool::new(false);
    let fault: Mutex<Option<(String, PolicyFault)>> = Mutex::new(None);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallel.max(1)).build().expect("thread pool");
    let results: Vec<Option<Transcript>> = pool.install(|| {
        patients
            .par_iter()
            .map(|p| {
                if abort.load(Ordering::SeqCst) {
                    return None;
                }
                let mut policy = factory.build(&p.patient_id, &p.values);
                match run_episode(p, policy.as_mut(), config) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        abort.store(true, Ordering::SeqCst);
                        let mut slot = fault.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some((p.patient_id.clone(), e.fault));
                        }
                        Some(e.partial)
                    }
                }
            })
            .collect()
    });
    BatchOutcome { transcripts: results.into_iter().flatten().collect(), fault: fault.into_inner().unwrap() }
}
