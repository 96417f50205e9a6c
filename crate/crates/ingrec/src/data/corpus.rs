//! Recipe corpora: class-level (every image of a food class shares the
//! class's ingredient list) and recipe-level (per-recipe lists) loaders.

use crate::error::{Error, Result};
use crate::losses::TargetVector;
use crate::vocab::{self, canonicalize, VocabStats, Vocabulary};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// One sample: an image (or feature) reference plus its ingredient set.
/// Ingredients are canonical names; numeric ids exist only relative to a
/// `Vocabulary`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recipe {
    pub id: String,
    pub class_name: String,
    pub image_ref: String,
    pub ingredients: BTreeSet<String>,
}

/// A corpus is a list of recipes, canonically ordered by id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    recipes: Vec<Recipe>,
}

/// On-disk JSON-lines record.
#[derive(Serialize, Deserialize)]
struct RecipeRecord {
    id: String,
    class: String,
    image: String,
    ingredients: Vec<String>,
}

impl Corpus {
    pub fn from_recipes(mut recipes: Vec<Recipe>) -> Result<Self> {
        if recipes.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        recipes.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in recipes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateRecipeId {
                    id: pair[0].id.clone(),
                });
            }
        }
        for r in &recipes {
            if r.ingredients.is_empty() {
                return Err(Error::EmptyIngredient {
                    raw: format!("recipe {} has no ingredients", r.id),
                });
            }
        }
        Ok(Corpus { recipes })
    }

    pub fn recipes(&self) -> &[Recipe] {
        &self.recipes
    }

    pub fn len(&self) -> usize {
        self.recipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipes.is_empty()
    }

    pub fn recipe_by_id(&self, id: &str) -> Option<&Recipe> {
        self.recipes
            .binary_search_by(|r| r.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.recipes[i])
    }

    pub fn class_names(&self) -> BTreeSet<String> {
        self.recipes.iter().map(|r| r.class_name.clone()).collect()
    }

    /// Vocabulary over every ingredient name in the corpus, plus stats.
    pub fn build_vocabulary(&self) -> Result<(Vocabulary, VocabStats)> {
        vocab::build_vocabulary(self.recipes.iter().map(|r| &r.ingredients))
    }

    /// Encode the ingredient set of one recipe.
    pub fn target_for(&self, id: &str, vocab: &Vocabulary, strict: bool) -> Result<TargetVector> {
        let recipe = self
            .recipe_by_id(id)
            .ok_or_else(|| Error::BadSubset(format!("unknown recipe id {id:?}")))?;
        Ok(vocab.encode(&recipe.ingredients, strict)?.0)
    }

    /// Retain only the given ids (e.g. the in-distribution part).
    pub fn subset(&self, ids: &BTreeSet<String>) -> Result<Corpus> {
        Corpus::from_recipes(
            self.recipes
                .iter()
                .filter(|r| ids.contains(&r.id))
                .cloned()
                .collect(),
        )
    }

    /// Write as JSON-lines, one record per recipe.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in &self.recipes {
            let record = RecipeRecord {
                id: r.id.clone(),
                class: r.class_name.clone(),
                image: r.image_ref.clone(),
                ingredients: r.ingredients.iter().cloned().collect(),
            };
            out.push_str(&serde_json::to_string(&record)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(format!("write {}", path.display()), e))
    }
}

fn canonical_set(raw: &[String], context: &str) -> Result<BTreeSet<String>> {
    let mut set = BTreeSet::new();
    for item in raw {
        let name = canonicalize(item).map_err(|_| Error::EmptyIngredient {
            raw: format!("{context}: {item:?}"),
        })?;
        set.insert(name);
    }
    Ok(set)
}

/// Load a recipe-level corpus: one JSON object per line with fields
/// `id`, `class`, `image`, `ingredients`.
pub fn load_recipe_level(recipes_file: &Path, images_root: Option<&Path>) -> Result<Corpus> {
    let text = std::fs::read_to_string(recipes_file)
        .map_err(|e| Error::io(format!("read {}", recipes_file.display()), e))?;
    let path_str = recipes_file.display().to_string();
    let mut recipes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RecipeRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                path: path_str.clone(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if record.ingredients.is_empty() {
            return Err(Error::MalformedLine {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("recipe {:?} has an empty ingredient list", record.id),
            });
        }
        let ingredients = canonical_set(&record.ingredients, &record.id)?;
        let image_ref = match images_root {
            Some(root) => root.join(&record.image).display().to_string(),
            None => record.image,
        };
        recipes.push(Recipe {
            id: record.id,
            class_name: record.class,
            image_ref,
            ingredients,
        });
    }
    Corpus::from_recipes(recipes)
}

/// Load a class-level corpus: `classes_file` lists one food class per line,
/// `class_ingredients_file` holds `class_name: ing1, ing2, ...` lines, and
/// every image under `images_root/<class>/` becomes a recipe inheriting the
/// class ingredient set.
pub fn load_class_level(
    classes_file: &Path,
    class_ingredients_file: &Path,
    images_root: &Path,
) -> Result<Corpus> {
    let classes_text = std::fs::read_to_string(classes_file)
        .map_err(|e| Error::io(format!("read {}", classes_file.display()), e))?;
    let classes: Vec<String> = classes_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if classes.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let ing_text = std::fs::read_to_string(class_ingredients_file)
        .map_err(|e| Error::io(format!("read {}", class_ingredients_file.display()), e))?;
    let ing_path = class_ingredients_file.display().to_string();
    let mut class_ingredients: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (lineno, line) in ing_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (class, list) = line.split_once(':').ok_or_else(|| Error::MalformedLine {
            path: ing_path.clone(),
            line: lineno + 1,
            message: "expected `class_name: ing1, ing2, ...`".into(),
        })?;
        let raw: Vec<String> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if raw.is_empty() {
            return Err(Error::MalformedLine {
                path: ing_path.clone(),
                line: lineno + 1,
                message: format!("class {:?} has an empty ingredient list", class.trim()),
            });
        }
        let set = canonical_set(&raw, class.trim())?;
        class_ingredients.insert(class.trim().to_string(), set);
    }

    let mut recipes = Vec::new();
    for class in &classes {
        let ingredients = class_ingredients
            .get(class)
            .ok_or_else(|| Error::MalformedLine {
                path: ing_path.clone(),
                line: 0,
                message: format!("missing ingredient line for class {class:?}"),
            })?;
        let dir = images_root.join(class);
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(format!("list images under {}", dir.display()), e))?;
        let mut files: Vec<String> = Vec::new();
        for entry in entries {
            let entry =
                entry.map_err(|e| Error::io(format!("read entry in {}", dir.display()), e))?;
            let path = entry.path();
            if path.is_file() {
                files.push(path.display().to_string());
            }
        }
        files.sort();
        for file in files {
            let stem = Path::new(&file)
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "image".into());
            recipes.push(Recipe {
                id: format!("{class}/{stem}"),
                class_name: class.clone(),
                image_ref: file,
                ingredients: ingredients.clone(),
            });
        }
    }
    Corpus::from_recipes(recipes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn scratch_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("ingrec-corpus-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn recipe(id: &str, class: &str, ingredients: &[&str]) -> Recipe {
        Recipe {
            id: id.into(),
            class_name: class.into(),
            image_ref: format!("{id}.ppm"),
            ingredients: ingredients.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn corpus_sorts_by_id_and_rejects_duplicates() {
        let c = Corpus::from_recipes(vec![
            recipe("b", "x", &["egg"]),
            recipe("a", "x", &["flour"]),
        ])
        .unwrap();
        assert_eq!(c.recipes()[0].id, "a");
        assert!(c.recipe_by_id("b").is_some());

        let dup = Corpus::from_recipes(vec![
            recipe("a", "x", &["egg"]),
            recipe("a", "y", &["flour"]),
        ]);
        assert!(matches!(dup, Err(Error::DuplicateRecipeId { .. })));
    }

    #[test]
    fn corpus_rejects_empty_ingredient_sets() {
        let r = Recipe {
            id: "a".into(),
            class_name: "x".into(),
            image_ref: "a.ppm".into(),
            ingredients: BTreeSet::new(),
        };
        assert!(Corpus::from_recipes(vec![r]).is_err());
    }

    #[test]
    fn recipe_level_happy_path_and_round_trip() {
        let dir = scratch_dir("jsonl");
        let path = dir.join("recipes.jsonl");
        fs::write(
            &path,
            concat!(
                "{\"id\":\"r1\",\"class\":\"pie\",\"image\":\"r1.ppm\",\"ingredients\":[\"Apples\",\"flour\"]}\n",
                "{\"id\":\"r2\",\"class\":\"salad\",\"image\":\"r2.ppm\",\"ingredients\":[\"lettuce\"]}\n",
            ),
        )
        .unwrap();
        let corpus = load_recipe_level(&path, None).unwrap();
        assert_eq!(corpus.len(), 2);
        assert!(corpus.recipes()[0].ingredients.contains("apples"));

        // Loading is pure in the file contents.
        let again = load_recipe_level(&path, None).unwrap();
        assert_eq!(corpus, again);

        let rewritten = dir.join("rewritten.jsonl");
        corpus.write_jsonl(&rewritten).unwrap();
        let back = load_recipe_level(&rewritten, None).unwrap();
        assert_eq!(corpus, back);
    }

    #[test]
    fn recipe_level_reports_malformed_line_number() {
        let dir = scratch_dir("badline");
        let path = dir.join("recipes.jsonl");
        fs::write(
            &path,
            "{\"id\":\"r1\",\"class\":\"pie\",\"image\":\"x\",\"ingredients\":[\"a\"]}\nnot json\n",
        )
        .unwrap();
        match load_recipe_level(&path, None) {
            Err(Error::MalformedLine { line: 2, .. }) => {}
            other => panic!("expected malformed line 2, got {other:?}"),
        }
    }

    #[test]
    fn recipe_level_rejects_duplicate_ids() {
        let dir = scratch_dir("dupid");
        let path = dir.join("recipes.jsonl");
        let line = "{\"id\":\"r1\",\"class\":\"pie\",\"image\":\"x\",\"ingredients\":[\"a\"]}\n";
        fs::write(&path, format!("{line}{line}")).unwrap();
        assert!(matches!(
            load_recipe_level(&path, None),
            Err(Error::DuplicateRecipeId { .. })
        ));
    }

    #[test]
    fn class_level_expands_images_into_recipes() {
        let dir = scratch_dir("classlevel");
        fs::write(dir.join("classes.txt"), "pie\nsalad\n").unwrap();
        fs::write(
            dir.join("ingredients.txt"),
            "pie: Apples, flour, sugar\nsalad: lettuce, tomato\n",
        )
        .unwrap();
        for class in ["pie", "salad"] {
            let sub = dir.join("images").join(class);
            fs::create_dir_all(&sub).unwrap();
            for i in 0..3 {
                fs::write(sub.join(format!("img{i}.ppm")), b"stub").unwrap();
            }
        }
        let corpus = load_class_level(
            &dir.join("classes.txt"),
            &dir.join("ingredients.txt"),
            &dir.join("images"),
        )
        .unwrap();
        assert_eq!(corpus.len(), 6);
        let sets: BTreeSet<_> = corpus
            .recipes()
            .iter()
            .map(|r| r.ingredients.clone())
            .collect();
        assert_eq!(sets.len(), 2);
        // Count oracle: one recipe per image file.
        let mut file_count = 0;
        for class in ["pie", "salad"] {
            file_count += fs::read_dir(dir.join("images").join(class)).unwrap().count();
        }
        assert_eq!(corpus.len(), file_count);
    }

    #[test]
    fn class_level_missing_or_empty_ingredients_error() {
        let dir = scratch_dir("classerr");
        fs::write(dir.join("classes.txt"), "pie\n").unwrap();
        fs::write(dir.join("ingredients.txt"), "salad: lettuce\n").unwrap();
        fs::create_dir_all(dir.join("images/pie")).unwrap();
        match load_class_level(
            &dir.join("classes.txt"),
            &dir.join("ingredients.txt"),
            &dir.join("images"),
        ) {
            Err(Error::MalformedLine { message, .. }) => {
                assert!(message.contains("missing ingredient line"))
            }
            other => panic!("expected missing-class error, got {other:?}"),
        }

        fs::write(dir.join("ingredients.txt"), "pie: ,\n").unwrap();
        assert!(matches!(
            load_class_level(
                &dir.join("classes.txt"),
                &dir.join("ingredients.txt"),
                &dir.join("images"),
            ),
            Err(Error::MalformedLine { .. })
        ));
    }

    #[test]
    fn duplicate_ingredients_collapse_in_recipe_set() {
        let dir = scratch_dir("dedup");
        let path = dir.join("recipes.jsonl");
        fs::write(
            &path,
            "{\"id\":\"r1\",\"class\":\"c\",\"image\":\"x\",\"ingredients\":[\"Egg\",\"egg\",\"egg \"]}\n",
        )
        .unwrap();
        let corpus = load_recipe_level(&path, None).unwrap();
        assert_eq!(corpus.recipes()[0].ingredients.len(), 1);
        let (vocab, _) = corpus.build_vocabulary().unwrap();
        assert_eq!(vocab.names(), &["egg"]);
    }
}
