//! Synthetic "shape-salad" corpus: ingredients are colored shape primitives,
//! recipes are combinations of them rendered at seeded random positions on a
//! gray canvas. Held-out combinations form a zero-shot partition that never
//! appears in training.

use crate::data::{Corpus, ImageStore, Recipe};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Diamond,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Circle, Shape::Square, Shape::Triangle, Shape::Diamond];

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Diamond => "diamond",
        }
    }

    /// Is pixel offset (dx, dy) from the center inside the shape of size r?
    fn contains(&self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            Shape::Circle => dx * dx + dy * dy <= r * r,
            Shape::Square => dx.abs() <= 0.8 * r && dy.abs() <= 0.8 * r,
            // Upward triangle with apex at (0, -r) and base at dy = r.
            Shape::Triangle => dy >= -r && dy <= r && dx.abs() <= (dy + r) / 2.0,
            Shape::Diamond => dx.abs() + dy.abs() <= r,
        }
    }

    /// Analytic filled area for the coverage oracle.
    pub fn analytic_area(&self, r: f64) -> f64 {
        match self {
            Shape::Circle => std::f64::consts::PI * r * r,
            Shape::Square => (1.6 * r) * (1.6 * r),
            Shape::Triangle => 2.0 * r * r,
            Shape::Diamond => 2.0 * r * r,
        }
    }
}

const COLORS: [(&str, [f64; 3]); 4] = [
    ("red", [1.0, 0.0, 0.0]),
    ("green", [0.0, 1.0, 0.0]),
    ("blue", [0.0, 0.0, 1.0]),
    ("yellow", [1.0, 1.0, 0.0]),
];

const BACKGROUND: f64 = 0.5;

/// One "ingredient": a colored shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Primitive {
    pub shape: Shape,
    pub color_index: usize,
}

impl Primitive {
    pub fn name(&self) -> String {
        format!("{}-{}", COLORS[self.color_index].0, self.shape.name())
    }

    pub fn rgb(&self) -> [f64; 3] {
        COLORS[self.color_index].1
    }

    /// Fixed catalog order: color-major over `Shape::ALL`.
    pub fn catalog(n: usize) -> Result<Vec<Primitive>> {
        let max = Shape::ALL.len() * COLORS.len();
        if n == 0 || n > max {
            return Err(Error::BadSyntheticSpec(format!(
                "primitive count {n} outside 1..={max}"
            )));
        }
        Ok((0..n)
            .map(|i| Primitive {
                shape: Shape::ALL[i % Shape::ALL.len()],
                color_index: i / Shape::ALL.len(),
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub image_h: usize,
    pub image_w: usize,
    pub primitives: Vec<Primitive>,
    /// Each combo is a set of catalog indices.
    pub combos: Vec<BTreeSet<usize>>,
    /// Combo indices reserved for the zero-shot partition.
    pub held_out: BTreeSet<usize>,
    pub samples_per_combo: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Seeded catalog of distinct combos in which every primitive appears in
    /// at least one training (non-held-out) combo. The first training combos
    /// are the single-primitive recipes (each ingredient photographed alone),
    /// the rest are random 2-4 primitive combinations; held-out combos are
    /// always combinations, so the zero-shot partition tests unseen pairings.
    pub fn generate(
        n_primitives: usize,
        n_combos: usize,
        n_held_out: usize,
        samples_per_combo: usize,
        image_h: usize,
        image_w: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_held_out >= n_combos {
            return Err(Error::BadSyntheticSpec(format!(
                "{n_held_out} held-out combos leave no training combos of {n_combos}"
            )));
        }
        let primitives = Primitive::catalog(n_primitives)?;
        let n_training = n_combos - n_held_out;
        if n_training < n_primitives {
            return Err(Error::BadSyntheticSpec(format!(
                "{n_training} training combos cannot cover {n_primitives} singletons"
            )));
        }
        let mut rng = Rng::seed_from(seed).derive(0xC0B0);
        let mut combos: Vec<BTreeSet<usize>> = Vec::new();
        let mut seen: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
        let mut scratch = Vec::new();
        for p in 0..n_primitives {
            let combo = BTreeSet::from([p]);
            seen.insert(combo.clone());
            combos.push(combo);
        }
        while combos.len() < n_combos {
            let size = 2 + rng.below(3); // 2..=4 primitives per combo
            let mut combo: BTreeSet<usize> = BTreeSet::new();
            while combo.len() < size {
                combo.insert(rng.subset(n_primitives, 1, &mut scratch)[0]);
            }
            if seen.insert(combo.clone()) {
                combos.push(combo);
            }
        }
        let held_out: BTreeSet<usize> = (n_training..n_combos).collect();
        let spec = SyntheticSpec {
            image_h,
            image_w,
            primitives,
            combos,
            held_out,
            samples_per_combo,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Desk-scale default: 12 primitives, 40 combos with 8 held out,
    /// 50 samples per combo on 32x32 canvases.
    pub fn desk_default(seed: u64) -> Result<Self> {
        SyntheticSpec::generate(12, 40, 8, 50, 32, 32, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_combo == 0 || self.combos.is_empty() {
            return Err(Error::BadSyntheticSpec(
                "need at least one combo and one sample per combo".into(),
            ));
        }
        let mut covered = vec![false; self.primitives.len()];
        for (i, combo) in self.combos.iter().enumerate() {
            if combo.is_empty() {
                return Err(Error::BadSyntheticSpec(format!("combo {i} is empty")));
            }
            for &p in combo {
                if p >= self.primitives.len() {
                    return Err(Error::BadSyntheticSpec(format!(
                        "combo {i} references primitive {p} outside the catalog"
                    )));
                }
                if !self.held_out.contains(&i) {
                    covered[p] = true;
                }
            }
        }
        if let Some(missing) = covered.iter().position(|&c| !c) {
            return Err(Error::BadSyntheticSpec(format!(
                "primitive {} ({}) appears in no training combo",
                missing,
                self.primitives[missing].name()
            )));
        }
        for &h in &self.held_out {
            if h >= self.combos.len() {
                return Err(Error::BadSyntheticSpec(format!(
                    "held-out index {h} outside the combo catalog"
                )));
            }
        }
        // Zero-shot disjointness: a held-out combination must not equal any
        // training combination.
        let training: BTreeSet<&BTreeSet<usize>> = self
            .combos
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.held_out.contains(i))
            .map(|(_, c)| c)
            .collect();
        for &h in &self.held_out {
            if training.contains(&self.combos[h]) {
                return Err(Error::BadSyntheticSpec(format!(
                    "held-out combo {h} duplicates a training combo"
                )));
            }
        }
        Ok(())
    }

    /// Primitive size in pixels for this canvas.
    pub fn primitive_radius(&self) -> f64 {
        (self.image_h.min(self.image_w) as f64 / 6.4).max(3.0)
    }
}

/// Generated corpus: all samples (training combos and held-out combos),
/// rendered images, and the designated zero-shot ids.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub images: ImageStore,
    pub zero_shot_ids: Vec<String>,
}

impl SyntheticCorpus {
    /// The in-distribution part (held-out combos removed).
    pub fn training_corpus(&self) -> Result<Corpus> {
        let zero: BTreeSet<&String> = self.zero_shot_ids.iter().collect();
        let keep: BTreeSet<String> = self
            .corpus
            .recipes()
            .iter()
            .filter(|r| !zero.contains(&r.id))
            .map(|r| r.id.clone())
            .collect();
        self.corpus.subset(&keep)
    }

    pub fn zero_shot_corpus(&self) -> Result<Corpus> {
        let keep: BTreeSet<String> = self.zero_shot_ids.iter().cloned().collect();
        self.corpus.subset(&keep)
    }
}

struct Placement {
    cx: f64,
    cy: f64,
    primitive: Primitive,
}

fn render_sample(spec: &SyntheticSpec, combo: &BTreeSet<usize>, rng: &mut Rng) -> Result<Tensor> {
    let (h, w) = (spec.image_h, spec.image_w);
    let r = spec.primitive_radius();
    let margin = r.ceil() as usize + 1;
    if 2 * margin >= h || 2 * margin >= w {
        return Err(Error::CanvasTooSmall {
            h,
            w,
            n_primitives: combo.len(),
        });
    }
    // Greedy placement can corner itself, so retry whole layouts.
    let mut placements: Vec<Placement> = Vec::with_capacity(combo.len());
    'layouts: for _layout in 0..50 {
        placements.clear();
        for &p in combo {
            let mut placed = false;
            for _attempt in 0..100 {
                let cx = (margin + rng.below(w - 2 * margin)) as f64;
                let cy = (margin + rng.below(h - 2 * margin)) as f64;
                let clear = placements.iter().all(|q| {
                    let (dx, dy) = (q.cx - cx, q.cy - cy);
                    dx * dx + dy * dy >= (2.0 * r + 1.0) * (2.0 * r + 1.0)
                });
                if clear {
                    placements.push(Placement {
                        cx,
                        cy,
                        primitive: spec.primitives[p],
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'layouts;
            }
        }
        break 'layouts;
    }
    if placements.len() != combo.len() {
        return Err(Error::CanvasTooSmall {
            h,
            w,
            n_primitives: combo.len(),
        });
    }
    let mut image = Tensor::filled(&[3, h, w], BACKGROUND);
    let data = image.data_mut();
    for place in &placements {
        let rgb = place.primitive.rgb();
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - place.cx, y as f64 - place.cy);
                if place.primitive.shape.contains(dx, dy, r) {
                    for c in 0..3 {
                        data[c * h * w + y * w + x] = rgb[c];
                    }
                }
            }
        }
    }
    Ok(image)
}

/// Render the full corpus described by `spec`: ground truth per sample is
/// exactly its combo's primitive set, and the rendering of each sample is a
/// pure function of (seed, combo index, sample index).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let base = Rng::seed_from(spec.seed);
    let mut recipes = Vec::new();
    let mut images = ImageStore::new();
    let mut zero_shot_ids = Vec::new();
    for (c, combo) in spec.combos.iter().enumerate() {
        let class_name = format!("combo{c:03}");
        let ingredients: BTreeSet<String> = combo
            .iter()
            .map(|&p| spec.primitives[p].name())
            .collect();
        for s in 0..spec.samples_per_combo {
            let id = format!("{class_name}/s{s:03}");
            let mut rng = base.derive((c * spec.samples_per_combo + s) as u64 + 1);
            let image = render_sample(spec, combo, &mut rng)?;
            images.insert(id.clone(), image);
            if spec.held_out.contains(&c) {
                zero_shot_ids.push(id.clone());
            }
            recipes.push(Recipe {
                id,
                class_name: class_name.clone(),
                image_ref: String::new(),
                ingredients: ingredients.clone(),
            });
        }
    }
    zero_shot_ids.sort();
    Ok(SyntheticCorpus {
        corpus: Corpus::from_recipes(recipes)?,
        images,
        zero_shot_ids,
    })
}
