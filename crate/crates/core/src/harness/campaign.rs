//! Parallel Monte-Carlo campaigns with results merged in trial order.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::trial::{run_trial, TrialConfig, TrialResult, World};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub trials: usize,
    pub diverged: usize,
    pub failed: usize,
    /// Largest per-trial RMS velocity error per axis.
    pub rms_envelope: Vector3<f64>,
    /// Mean over trials of the per-trial RMS velocity error per axis.
    pub mean_rms: Vector3<f64>,
}

impl CampaignSummary {
    pub fn from_results(results: &[TrialResult]) -> Self {
        let mut envelope = Vector3::zeros();
        let mut sum = Vector3::zeros();
        let mut counted = 0usize;
        for r in results {
            let rms = r.rms_error();
            if rms.iter().all(|x| x.is_finite()) {
                envelope = envelope.sup(&rms);
                sum += rms;
                counted += 1;
            }
        }
        Self {
            trials: results.len(),
            diverged: results.iter().filter(|r| r.diverged).count(),
            failed: results.iter().filter(|r| r.failed()).count(),
            rms_envelope: envelope,
            mean_rms: if counted > 0 {
                sum / counted as f64
            } else {
                Vector3::repeat(f64::NAN)
            },
        }
    }
}

/// Runs trials `0..n` of `base` (its `trial` field is ignored) on
/// `parallelism` worker threads. A trial that cannot be set up is recorded
/// as failed and the campaign continues.
pub fn run_monte_carlo(
    base: &TrialConfig,
    world: &World,
    n: usize,
    parallelism: usize,
) -> Result<(Vec<TrialResult>, CampaignSummary), HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config(
            "campaign needs at least one trial".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<TrialResult> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|k| {
                let cfg = TrialConfig {
                    trial: k,
                    ..base.clone()
                };
                run_trial(&cfg, world)
                    .unwrap_or_else(|e| TrialResult::setup_failure(&cfg, e.to_string()))
            })
            .collect()
    });
    let summary = CampaignSummary::from_results(&results);
    Ok((results, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::FilterMode;
    use crate::harness::{SimConfig, TrialOptions};

    fn base(text: &str) -> (TrialConfig, World) {
        let sim = SimConfig::parse(text).unwrap();
        let world = World::build(&sim).unwrap();
        let cfg = TrialConfig {
            sim,
            mode: FilterMode::Vision,
            master_seed: 3,
            trial: 0,
            options: TrialOptions::default(),
        };
        (cfg, world)
    }

    const SHORT: &str = "terrain = flat\nvelocity_model = fixed\nvelocity_x = 5\nduration = 3";

    #[test]
    fn single_trial_campaign_matches_run_trial() {
        let (cfg, world) = base(SHORT);
        let (results, summary) = run_monte_carlo(&cfg, &world, 1, 2).unwrap();
        assert_eq!(results, vec![run_trial(&cfg, &world).unwrap()]);
        assert_eq!(summary.trials, 1);
        assert_eq!(summary.failed, 0);
        assert_eq!(summary.rms_envelope, results[0].rms_error());
        assert_eq!(results[0].series.len(), 31);
    }

    #[test]
    fn zero_trials_is_an_error() {
        let (cfg, world) = base(SHORT);
        assert!(matches!(
            run_monte_carlo(&cfg, &world, 0, 1),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn setup_errors_become_failed_trials() {
        // The trajectory leaves the terrain, so no scenario can be drawn.
        let (cfg, world) = base(&format!(
            "{SHORT}\nterrain_half_extent = 500\nvelocity_x = 50\nduration = 60"
        ));
        let (results, summary) = run_monte_carlo(&cfg, &world, 2, 1).unwrap();
        assert_eq!(summary.failed, 2);
        assert!(results.iter().all(|r| r.diverged && r.series.is_empty()));
        assert!(results[1]
            .failure
            .as_deref()
            .unwrap()
            .contains("trajectory"));
    }
}
