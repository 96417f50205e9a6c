//! Class-stratified train/val/test splits, deterministic per seed.

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let sum = train + val + test;
        if train <= 0.0 || val <= 0.0 || test <= 0.0 || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadFractions(vec![train, val, test]));
        }
        Ok(SplitFractions { train, val, test })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Disjoint, exhaustive partition of recipe ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn partition_of(&self, id: &str) -> Option<Split> {
        if self.train.iter().any(|x| x == id) {
            Some(Split::Train)
        } else if self.val.iter().any(|x| x == id) {
            Some(Split::Val)
        } else if self.test.iter().any(|x| x == id) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    /// Disjointness + exhaustiveness against a corpus.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id.clone()) {
                return Err(Error::BadSubset(format!("id {id:?} in two partitions")));
            }
            if corpus.recipe_by_id(id).is_none() {
                return Err(Error::BadSubset(format!("id {id:?} not in corpus")));
            }
        }
        if seen.len() != corpus.len() {
            return Err(Error::BadSubset(format!(
                "split covers {} of {} recipes",
                seen.len(),
                corpus.len()
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)
            .map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Largest-remainder allocation of `n` samples to the three fractions.
/// Remainder ties resolve in train > val > test order.
fn allocate(n: usize, fractions: &SplitFractions) -> [usize; 3] {
    let targets = fractions.as_array().map(|f| f * n as f64);
    let mut counts = targets.map(|t| t.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = targets[a] - counts[a] as f64;
        let rb = targets[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[order[i % 3]] += 1;
    }
    counts
}

/// Stratified split: within every class, sample membership is shuffled with
/// the seed and counts follow the fractions to within ±1.
pub fn make_split(
    corpus: &Corpus,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment> {
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in corpus.recipes() {
        by_class.entry(&r.class_name).or_default().push(&r.id);
    }
    let mut rng = Rng::seed_from(seed);
    let mut assignment = SplitAssignment {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut ids) in by_class {
        let counts = allocate(ids.len(), &fractions);
        if counts.contains(&0) {
            return Err(Error::ClassTooSmall {
                class: class.to_string(),
                have: ids.len(),
                need: 3,
            });
        }
        rng.shuffle(&mut ids);
        let (train_end, val_end) = (counts[0], counts[0] + counts[1]);
        assignment
            .train
            .extend(ids[..train_end].iter().map(|s| s.to_string()));
        assignment
            .val
            .extend(ids[train_end..val_end].iter().map(|s| s.to_string()));
        assignment
            .test
            .extend(ids[val_end..].iter().map(|s| s.to_string()));
    }
    assignment.train.sort();
    assignment.val.sort();
    assignment.test.sort();
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Recipe;

    fn corpus(per_class: usize, classes: usize) -> Corpus {
        let mut recipes = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                recipes.push(Recipe {
                    id: format!("c{c:02}/r{i:03}"),
                    class_name: format!("c{c:02}"),
                    image_ref: String::new(),
                    ingredients: [format!("ing{c}")].into_iter().collect(),
                });
            }
        }
        Corpus::from_recipes(recipes).unwrap()
    }

    fn class_counts(ids: &[String]) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for id in ids {
            let class = id.split('/').next().unwrap().to_string();
            *counts.entry(class).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn ten_by_ten_gives_exactly_8_1_1() {
        let corpus = corpus(10, 10);
        let split = make_split(&corpus, SplitFractions::new(0.8, 0.1, 0.1).unwrap(), 0).unwrap();
        for counts in [
            class_counts(&split.train),
            class_counts(&split.val),
            class_counts(&split.test),
        ] {
            assert_eq!(counts.len(), 10);
        }
        for &n in class_counts(&split.train).values() {
            assert_eq!(n, 8);
        }
        for &n in class_counts(&split.val).values() {
            assert_eq!(n, 1);
        }
        for &n in class_counts(&split.test).values() {
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn same_seed_same_split_different_seed_differs() {
        let corpus = corpus(10, 4);
        let a = make_split(&corpus, SplitFractions::default(), 7).unwrap();
        let b = make_split(&corpus, SplitFractions::default(), 7).unwrap();
        let c = make_split(&corpus, SplitFractions::default(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_balanced() {
        let corpus = corpus(13, 5);
        let fractions = SplitFractions::new(0.7, 0.15, 0.15).unwrap();
        let split = make_split(&corpus, fractions, 3).unwrap();
        split.validate(&corpus).unwrap();
        // Counting oracle: per class the deviation from frac*n is under 1.
        for (ids, frac) in [
            (&split.train, fractions.train),
            (&split.val, fractions.val),
            (&split.test, fractions.test),
        ] {
            for &count in class_counts(ids).values() {
                let target = frac * 13.0;
                assert!(
                    (count as f64 - target).abs() < 1.0,
                    "count {count} vs target {target}"
                );
            }
        }
    }

    #[test]
    fn class_with_too_few_samples_errors() {
        let corpus = corpus(2, 1);
        match make_split(&corpus, SplitFractions::default(), 0) {
            Err(Error::ClassTooSmall { have: 2, need: 3, .. }) => {}
            other => panic!("expected class-too-small, got {other:?}"),
        }
    }

    #[test]
    fn fractions_must_be_positive_and_normalized() {
        assert!(SplitFractions::new(0.8, 0.2, 0.0).is_err());
        assert!(SplitFractions::new(0.5, 0.3, 0.3).is_err());
        assert!(SplitFractions::new(0.7, 0.15, 0.15).is_ok());
    }

    #[test]
    fn split_file_round_trip() {
        let corpus = corpus(6, 2);
        let split = make_split(&corpus, SplitFractions::default(), 1).unwrap();
        let dir = std::env::temp_dir().join(format!("ingrec-split-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("split.json");
        split.write_to(&path).unwrap();
        let back = SplitAssignment::read_from(&path).unwrap();
        assert_eq!(split, back);
        assert_eq!(back.partition_of(&split.train[0]), Some(Split::Train));
        assert_eq!(back.partition_of("nope"), None);
    }
}
