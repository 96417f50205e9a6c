//! Ingredient vocabulary: canonical names, the simplified-vocabulary
//! projection (descriptor-particle removal), and binary target encoding.

use crate::error::{Error, Result};
use crate::losses::TargetVector;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

/// Descriptor tokens removed by the default simplification, one per line in
/// `assets/default_particles.txt`. External particle files override this.
pub const DEFAULT_PARTICLES: &str = include_str!("../assets/default_particles.txt");

/// Lowercase, collapse whitespace, trim non-alphanumeric characters from
/// token edges. Errors if nothing survives.
pub fn canonicalize(raw: &str) -> Result<String> {
    let cleaned: Vec<String> = raw
        .to_lowercase()
        .split_whitespace()
        .map(|tok| {
            tok.trim_matches(|c: char| !c.is_alphanumeric())
                .to_string()
        })
        .filter(|tok| !tok.is_empty())
        .collect();
    if cleaned.is_empty() {
        return Err(Error::EmptyIngredient {
            raw: raw.to_string(),
        });
    }
    Ok(cleaned.join(" "))
}

/// Remove every particle token from a canonical name; an all-particle name
/// keeps its original form so no ingredient ever becomes empty.
pub fn simplify(name: &str, particles: &BTreeSet<String>) -> String {
    let kept: Vec<&str> = name
        .split(' ')
        .filter(|tok| !particles.contains(*tok))
        .collect();
    if kept.is_empty() {
        name.to_string()
    } else {
        kept.join(" ")
    }
}

/// Ordered, deduplicated ingredient-name ↔ id map. Names are sorted
/// lexicographically so line number == id in the on-disk format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Result<Self> {
        let set: BTreeSet<String> = names.into_iter().collect();
        if set.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let names: Vec<String> = set.into_iter().collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(Vocabulary { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(|s| s.as_str())
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Binary encoding of an ingredient-name set. Strict mode errors on
    /// unknown names; lenient mode drops them and reports how many.
    pub fn encode(&self, ingredients: &BTreeSet<String>, strict: bool) -> Result<(TargetVector, usize)> {
        let mut bits = vec![0u8; self.names.len()];
        let mut dropped = 0;
        for name in ingredients {
            match self.id(name) {
                Some(i) => bits[i] = 1,
                None if strict => {
                    return Err(Error::UnknownIngredient { name: name.clone() })
                }
                None => dropped += 1,
            }
        }
        Ok((TargetVector::new(bits)?, dropped))
    }

    pub fn decode(&self, target: &TargetVector) -> BTreeSet<String> {
        target
            .indices()
            .into_iter()
            .filter_map(|i| self.name(i).map(str::to_string))
            .collect()
    }

    /// FNV-1a content hash over the newline-joined names, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for name in &self.names {
            for b in name.as_bytes() {
                hash ^= *b as u64;
                hash = hash.wrapping_mul(0x1000_0000_01b3);
            }
            hash ^= b'\n' as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{hash:016x}")
    }

    /// One canonical name per line, line number = id.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for name in &self.names {
            out.push_str(name);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let names: Vec<String> = text.lines().map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::BadVocabulary(format!("{}: empty", path.display())));
        }
        for pair in names.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::BadVocabulary(format!(
                    "{}: names must be sorted and unique ({:?} before {:?})",
                    path.display(),
                    pair[0],
                    pair[1]
                )));
            }
        }
        Vocabulary::from_names(names)
    }
}

/// The fine-grained → simplified projection induced by a particle list.
#[derive(Clone, Debug)]
pub struct SimplificationMap {
    particles: Vec<String>,
    projection: BTreeMap<String, String>,
    simplified: Vocabulary,
}

impl SimplificationMap {
    /// Build the total projection over a fine-grained vocabulary.
    pub fn build(fine: &Vocabulary, particles: &[String]) -> Result<Self> {
        let particle_set: BTreeSet<String> = particles.iter().cloned().collect();
        let projection: BTreeMap<String, String> = fine
            .names()
            .iter()
            .map(|n| (n.clone(), simplify(n, &particle_set)))
            .collect();
        let simplified = Vocabulary::from_names(projection.values().cloned())?;
        Ok(SimplificationMap {
            particles: particles.to_vec(),
            projection,
            simplified,
        })
    }

    pub fn particles(&self) -> &[String] {
        &self.particles
    }

    pub fn simplified_vocab(&self) -> &Vocabulary {
        &self.simplified
    }

    pub fn project(&self, fine_name: &str) -> Option<&str> {
        self.projection.get(fine_name).map(|s| s.as_str())
    }

    /// Project a set of fine-grained names; unknown names are simplified on
    /// the fly so prediction sets outside the training vocabulary still map.
    pub fn project_set(&self, names: &BTreeSet<String>) -> BTreeSet<String> {
        let particle_set: BTreeSet<String> = self.particles.iter().cloned().collect();
        names
            .iter()
            .map(|n| match self.project(n) {
                Some(s) => s.to_string(),
                None => simplify(n, &particle_set),
            })
            .collect()
    }

    /// id-level projection table: fine id → simplified id.
    pub fn id_projection(&self, fine: &Vocabulary) -> Vec<usize> {
        fine.names()
            .iter()
            .map(|n| {
                let simple = self.project(n).expect("projection total over fine vocab");
                self.simplified.id(simple).expect("simplified name present")
            })
            .collect()
    }

    /// Tab-separated "fine\tsimplified" dump.
    pub fn write_projection(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (fine, simple) in &self.projection {
            let _ = writeln!(out, "{fine}\t{simple}");
        }
        std::fs::write(path, out).map_err(|e| Error::io(format!("write {}", path.display()), e))
    }
}

/// Corpus-level vocabulary statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VocabStats {
    pub n_ingredients: usize,
    pub n_recipes: usize,
    pub mean_ingredients_per_recipe: f64,
}

/// Build the vocabulary covering every ingredient set in a corpus, with the
/// mean-ingredients-per-recipe statistic used to pick the baseline K.
pub fn build_vocabulary<'a, I>(ingredient_sets: I) -> Result<(Vocabulary, VocabStats)>
where
    I: IntoIterator<Item = &'a BTreeSet<String>>,
{
    let mut names = BTreeSet::new();
    let mut n_recipes = 0usize;
    let mut total = 0usize;
    for set in ingredient_sets {
        n_recipes += 1;
        total += set.len();
        names.extend(set.iter().cloned());
    }
    if n_recipes == 0 {
        return Err(Error::EmptyCorpus);
    }
    let vocab = Vocabulary::from_names(names)?;
    let stats = VocabStats {
        n_ingredients: vocab.len(),
        n_recipes,
        mean_ingredients_per_recipe: total as f64 / n_recipes as f64,
    };
    Ok((vocab, stats))
}

/// Parse a particles file: one token per line, blank lines ignored.
pub fn parse_particles(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Load particles from a file, or the shipped default when `path` is None.
pub fn load_particles(path: Option<&Path>) -> Result<Vec<String>> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::io(format!("read {}", p.display()), e))?;
            Ok(parse_particles(&text))
        }
        None => Ok(parse_particles(DEFAULT_PARTICLES)),
    }
}
