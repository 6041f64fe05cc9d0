use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use cothought_core::orchestrator::{Backoff, RecordingSleeper, RetryPolicy};
use cothought_core::{
    Answerer, BackendError, Backends, Critic, CritiqueRequest, ImagePayload, LoopConfig,
    Orchestrator, Planner, PlannerRequest, Query, RasterImage, Simulator, SimulatorRequest,
    TaskMode, TerminationReason, TextualThought, Verification, VisualThought,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Backend that draws each behavior from a shared seeded stream.
struct Chaos {
    rng: Mutex<ChaCha8Rng>,
    calls: AtomicUsize,
    fail_rate: f64,
}

impl Chaos {
    fn roll<T>(&self, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> T {
        self.calls.fetch_add(1, Ordering::SeqCst);
        f(&mut self.rng.lock().unwrap())
    }

    fn maybe_fail(&self, rng: &mut ChaCha8Rng) -> Result<(), BackendError> {
        if rng.random_bool(self.fail_rate) {
            return Err(match rng.random_range(0..4) {
                0 => BackendError::GenerationRejected("refused".into()),
                1 => BackendError::MalformedOutput("garbage".into()),
                _ => BackendError::Unavailable("503".into()),
            });
        }
        Ok(())
    }
}

const VOCAB: &[&str] = &["red", "cube", "on", "blue", "table", "left", "of", "sphere"];

impl Planner for Chaos {
    fn id(&self) -> &str {
        "chaos"
    }
    fn plan(&self, r: &PlannerRequest<'_>) -> Result<TextualThought, BackendError> {
        self.roll(|rng| {
            self.maybe_fail(rng)?;
            let n = rng.random_range(1..6);
            let words: Vec<&str> = (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
            Ok(TextualThought::new(r.step_index(), words.join(" "))?)
        })
    }
}

impl Simulator for Chaos {
    fn id(&self) -> &str {
        "chaos"
    }
    fn simulate(&self, r: &SimulatorRequest<'_>) -> Result<VisualThought, BackendError> {
        self.roll(|rng| {
            self.maybe_fail(rng)?;
            let img = RasterImage::filled(1, 1, [rng.random(), 0, 0]).unwrap();
            Ok(VisualThought::new(r.prompt.step_index(), ImagePayload::Inline(img), "chaos"))
        })
    }
}

impl Critic for Chaos {
    fn id(&self) -> &str {
        "chaos"
    }
    fn critique(&self, _: &CritiqueRequest<'_>) -> Result<Verification, BackendError> {
        self.roll(|rng| {
            self.maybe_fail(rng)?;
            let score = match rng.random_range(0..4) {
                0 => 1.0,
                1 => 0.0,
                _ => rng.random_range(0.0..=1.0),
            };
            Ok(Verification::new(score, Some("adjust".into()))?)
        })
    }
}

impl Answerer for Chaos {
    fn id(&self) -> &str {
        "chaos"
    }
    fn answer(&self, _: &Query, best: &VisualThought) -> Result<String, BackendError> {
        self.roll(|rng| {
            self.maybe_fail(rng)?;
            Ok(format!("answer from step {}", best.step_index()))
        })
    }
}

#[test]
fn every_fuzzed_run_terminates_well_formed() {
    let mut outcomes = [0usize; 4];
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = LoopConfig {
            tau: rng.random_range(0.05..=1.0),
            max_iters: rng.random_range(1..10),
            oscillation_window: rng.random_range(2..6),
            oscillation_similarity: rng.random_range(0.3..=1.0),
            transport_retries: rng.random_range(0..3),
        };
        let mode = if rng.random_bool(0.5) {
            TaskMode::QuestionAnswering
        } else {
            TaskMode::VisualGeneration
        };
        let chaos = Chaos {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed ^ 0xfeed)),
            calls: AtomicUsize::new(0),
            fail_rate: [0.0, 0.05, 0.3][seed as usize % 3],
        };
        let backends = Backends {
            planner: &chaos,
            simulator: &chaos,
            critic: &chaos,
            answerer: &chaos,
        };
        let retry = RetryPolicy {
            retries: config.transport_retries,
            backoff: Backoff::default(),
            sleeper: Arc::new(RecordingSleeper::default()),
        };
        let query = Query::new(format!("fuzz-{seed}"), "fuzz", mode).unwrap();
        let result = Orchestrator::new(backends, config)
            .with_retry_policy(retry)
            .run(&query);
        let per_iter = 3 * (config.transport_retries as usize + 1);
        assert!(chaos.calls.load(Ordering::SeqCst) <= config.max_iters * per_iter + per_iter);
        match result {
            Err(_) => outcomes[3] += 1,
            Ok(out) => {
                out.check_consistency().unwrap();
                let tr = out.trajectory();
                assert!(tr.len() <= config.max_iters, "seed {seed}");
                let max = tr
                    .steps()
                    .iter()
                    .filter_map(|s| s.verification())
                    .map(Verification::score)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(out.best_score(), max, "seed {seed}");
                if out.reason() == TerminationReason::Converged {
                    let last = tr.steps().last().unwrap().verification().unwrap();
                    assert!(last.score() > config.tau);
                }
                outcomes[out.reason() as usize] += 1;
            }
        }
    }
    // every termination path was exercised
    assert!(outcomes.iter().all(|&n| n > 0), "{outcomes:?}");
}
