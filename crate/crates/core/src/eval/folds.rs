use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::signal::FeatureSample;

/// A trial, identified by participant and trial id. All samples cut from
/// one trial share it and always land on the same side of a split.
pub type Unit = (u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    /// Folds over one participant's trials.
    Dependent,
    /// Leave one participant out.
    Independent,
}

impl Paradigm {
    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Dependent => "dependent",
            Paradigm::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub id: usize,
    /// The participant whose trials are tested.
    pub participant: u32,
    pub train: Vec<Unit>,
    pub test: Vec<Unit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub paradigm: Paradigm,
    pub folds: Vec<Fold>,
}

/// Shuffles one participant's trials and cuts them into `folds` groups
/// whose sizes differ by at most one. Fold ids start at `first_id`.
pub fn kfold_video_split(
    participant: u32,
    trials: &[u32],
    folds: usize,
    seed: u64,
    first_id: usize,
) -> Result<Vec<Fold>, EvalError> {
    let mut ids: Vec<u32> = trials.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if folds < 2 || ids.len() < folds {
        return Err(EvalError::TooFewTrials {
            participant,
            trials: ids.len(),
            folds,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(participant) + 1);
    ids.shuffle(&mut rng);
    let base = ids.len() / folds;
    let extra = ids.len() % folds;
    let mut start = 0;
    Ok((0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let mut test: Vec<Unit> = ids[start..start + len].iter().map(|&t| (participant, t)).collect();
            let mut train: Vec<Unit> = ids[..start]
                .iter()
                .chain(&ids[start + len..])
                .map(|&t| (participant, t))
                .collect();
            test.sort_unstable();
            train.sort_unstable();
            start += len;
            Fold {
                id: first_id + f,
                participant,
                train,
                test,
            }
        })
        .collect())
}

/// One fold per participant: that participant's trials are tested, all
/// other participants' trials train.
pub fn lopo_split(units: &[Unit]) -> Result<Vec<Fold>, EvalError> {
    let participants: BTreeSet<u32> = units.iter().map(|u| u.0).collect();
    if participants.len() < 2 {
        return Err(EvalError::TooFewParticipants(participants.len()));
    }
    let mut all: Vec<Unit> = units.to_vec();
    all.sort_unstable();
    all.dedup();
    Ok(participants
        .iter()
        .enumerate()
        .map(|(id, &p)| Fold {
            id,
            participant: p,
            train: all.iter().copied().filter(|u| u.0 != p).collect(),
            test: all.iter().copied().filter(|u| u.0 == p).collect(),
        })
        .collect())
}

/// Trials of every participant, sorted.
pub fn units_of(samples: &[FeatureSample]) -> BTreeMap<u32, Vec<u32>> {
    let mut map: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for s in samples {
        map.entry(s.participant).or_default().insert(s.trial);
    }
    map.into_iter()
        .map(|(p, t)| (p, t.into_iter().collect()))
        .collect()
}

pub fn make_plan(
    samples: &[FeatureSample],
    paradigm: Paradigm,
    folds: usize,
    seed: u64,
) -> Result<FoldPlan, EvalError> {
    let units = units_of(samples);
    let folds = match paradigm {
        Paradigm::Dependent => {
            let mut out = Vec::new();
            for (p, trials) in &units {
                let first = out.len();
                out.extend(kfold_video_split(*p, trials, folds, seed, first)?);
            }
            out
        }
        Paradigm::Independent => {
            let all: Vec<Unit> = units
                .iter()
                .flat_map(|(p, ts)| ts.iter().map(move |t| (*p, *t)))
                .collect();
            lopo_split(&all)?
        }
    };
    Ok(FoldPlan { paradigm, folds })
}

/// Exhaustive leakage check: no unit on both sides of a fold, and the
/// test sides cover every unit in scope exactly once (per participant for
/// the dependent paradigm, overall for the independent one). Independent
/// folds must also keep the test participant out of training entirely.
pub fn verify_plan(plan: &FoldPlan, samples: &[FeatureSample]) -> Result<(), EvalError> {
    let units = units_of(samples);
    let mut tested: BTreeMap<Unit, usize> = BTreeMap::new();
    for fold in &plan.folds {
        let train: BTreeSet<Unit> = fold.train.iter().copied().collect();
        if train.len() != fold.train.len() {
            return Err(EvalError::Leakage(format!("fold {} repeats a training trial", fold.id)));
        }
        for u in &fold.test {
            if train.contains(u) {
                return Err(EvalError::Leakage(format!(
                    "fold {}: trial {:?} on both sides",
                    fold.id, u
                )));
            }
            *tested.entry(*u).or_default() += 1;
        }
        match plan.paradigm {
            Paradigm::Dependent => {
                if fold.train.iter().chain(&fold.test).any(|u| u.0 != fold.participant) {
                    return Err(EvalError::Leakage(format!(
                        "fold {} mixes participants",
                        fold.id
                    )));
                }
            }
            Paradigm::Independent => {
                if fold.train.iter().any(|u| u.0 == fold.participant)
                    || fold.test.iter().any(|u| u.0 != fold.participant)
                {
                    return Err(EvalError::Leakage(format!(
                        "fold {}: participant {} appears in training",
                        fold.id, fold.participant
                    )));
                }
            }
        }
    }
    for (p, trials) in &units {
        for t in trials {
            match tested.get(&(*p, *t)) {
                Some(1) => {}
                Some(n) => {
                    return Err(EvalError::Leakage(format!(
                        "trial {:?} tested {n} times",
                        (p, t)
                    )))
                }
                None => return Err(EvalError::Leakage(format!("trial {:?} never tested", (p, t)))),
            }
        }
    }
    if tested.len() != units.values().map(Vec::len).sum::<usize>() {
        return Err(EvalError::Leakage("plan tests trials absent from the data".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn video_folds_are_a_partition() {
        for (trials, size) in [(20u32, 2usize), (40, 4)] {
            let ids: Vec<u32> = (0..trials).collect();
            let folds = kfold_video_split(3, &ids, 10, 1, 0).unwrap();
            assert_eq!(folds.len(), 10);
            let mut seen = BTreeSet::new();
            for f in &folds {
                assert_eq!(f.test.len(), size);
                assert_eq!(f.train.len() + f.test.len(), trials as usize);
                for u in &f.test {
                    assert!(seen.insert(*u));
                }
            }
            assert_eq!(seen.len(), trials as usize);
        }
        assert!(matches!(
            kfold_video_split(0, &[1, 2, 3], 10, 0, 0),
            Err(EvalError::TooFewTrials { trials: 3, .. })
        ));
    }

    #[test]
    fn uneven_counts_differ_by_one() {
        let folds = kfold_video_split(0, &(0..23).collect::<Vec<_>>(), 10, 0, 0).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
    }

    #[test]
    fn lopo_counts() {
        for p in [3u32, 24, 32] {
            let units: Vec<Unit> = (0..p).flat_map(|p| (0..2).map(move |t| (p, t))).collect();
            let folds = lopo_split(&units).unwrap();
            assert_eq!(folds.len(), p as usize);
            let tested: BTreeSet<u32> = folds.iter().map(|f| f.participant).collect();
            assert_eq!(tested.len(), p as usize);
        }
        assert!(lopo_split(&[(0, 1), (0, 2)]).is_err());
    }

    #[test]
    fn same_seed_same_plan() {
        let ids: Vec<u32> = (0..20).collect();
        assert_eq!(
            kfold_video_split(1, &ids, 10, 5, 0).unwrap(),
            kfold_video_split(1, &ids, 10, 5, 0).unwrap()
        );
        assert_ne!(
            kfold_video_split(1, &ids, 10, 5, 0).unwrap(),
            kfold_video_split(1, &ids, 10, 6, 0).unwrap()
        );
    }
}
