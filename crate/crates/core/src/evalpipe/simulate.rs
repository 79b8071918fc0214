use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_tasks, split_affect, RatingRecord, RatingTask, Stage, Stage1Rating, Stage2Rating};

/// Latent per-utterance scores. Typicality below 0.5 means nonsensical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceTruth {
    pub utterance_id: String,
    pub typicality: f64,
    pub offensiveness: f64,
    pub forwardness: f64,
    pub affect: f64,
}

/// Symmetric discrete noise, uniform over `-max_offset..=max_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub max_offset: i32,
}

impl NoiseModel {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.max_offset == 0 {
            0.0
        } else {
            f64::from(rng.random_range(-self.max_offset..=self.max_offset))
        }
    }
}

fn answer(truth: f64, noise: f64, lo: i32, hi: i32) -> i32 {
    ((truth + noise).round() as i32).clamp(lo, hi)
}

/// Simulated crowd: `n_raters` raters (`sim-00`, `sim-01`, ...) each rate
/// every task of both stages. Records come out task by task, rater by rater,
/// so arrival order is deterministic.
pub fn simulate_raters(truths: &[UtteranceTruth], noise: NoiseModel, n_raters: usize, seed: u64) -> Vec<RatingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = truths.iter().map(|t| t.utterance_id.clone()).collect();
    let find = |id: &str| truths.iter().find(|t| t.utterance_id == id).unwrap();
    let mut out = Vec::new();
    for stage in [Stage::One, Stage::Two] {
        for task in build_tasks(&ids, stage) {
            for j in 0..n_raters {
                let rater = format!("sim-{j:02}");
                for uid in &task.utterance_ids {
                    let t = find(uid);
                    let rec = match stage {
                        Stage::One => {
                            let nonsensical = t.typicality < 0.5;
                            let mut ask = |v: f64| (!nonsensical).then(|| answer(v, noise.draw(&mut rng), 1, 5) as u8);
                            let typicality = ask(t.typicality);
                            let offensiveness = ask(t.offensiveness);
                            let forwardness = ask(t.forwardness);
                            RatingRecord::Stage1(Stage1Rating {
                                task_id: task.task_id.clone(),
                                rater_id: rater.clone(),
                                utterance_id: uid.clone(),
                                nonsensical,
                                typicality,
                                offensiveness,
                                forwardness,
                            })
                        }
                        Stage::Two => {
                            let v = answer(t.affect, noise.draw(&mut rng), -4, 4) as i8;
                            let (affect_class, strength) = split_affect(v);
                            RatingRecord::Stage2(Stage2Rating {
                                task_id: task.task_id.clone(),
                                rater_id: rater.clone(),
                                utterance_id: uid.clone(),
                                affect_class,
                                strength,
                            })
                        }
                    };
                    out.push(rec);
                }
            }
        }
    }
    out
}

/// A rater who gives the same answers to everything in `tasks`.
pub fn constant_rater(rater_id: &str, tasks: &[RatingTask]) -> Vec<RatingRecord> {
    let mut out = Vec::new();
    for task in tasks {
        for uid in &task.utterance_ids {
            out.push(match task.stage {
                Stage::One => RatingRecord::Stage1(Stage1Rating {
                    task_id: task.task_id.clone(),
                    rater_id: rater_id.into(),
                    utterance_id: uid.clone(),
                    nonsensical: false,
                    typicality: Some(5),
                    offensiveness: Some(1),
                    forwardness: Some(5),
                }),
                Stage::Two => {
                    let (affect_class, strength) = split_affect(4);
                    RatingRecord::Stage2(Stage2Rating {
                        task_id: task.task_id.clone(),
                        rater_id: rater_id.into(),
                        utterance_id: uid.clone(),
                        affect_class,
                        strength,
                    })
                }
            });
        }
    }
    out
}
