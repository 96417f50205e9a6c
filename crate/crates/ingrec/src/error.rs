use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected input {expected:?}, got {found:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("stale cache: {0}")]
    StaleCache(String),
    #[error("maxpool2x2 requires even spatial dims, got {h}x{w}")]
    OddPoolInput { h: usize, w: usize },
    #[error("tensor shape {shape:?} does not match data length {len}")]
    BadTensor { shape: Vec<usize>, len: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("class index {index} out of range for {n_labels} labels")]
    ClassOutOfRange { index: usize, n_labels: usize },
    #[error("invalid decision rule: {0}")]
    InvalidRule(String),
    #[error("ingredient name empty after canonicalization: {raw:?}")]
    EmptyIngredient { raw: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown ingredient {name:?} (strict encoding)")]
    UnknownIngredient { name: String },
    #[error("vocabulary file invalid: {0}")]
    BadVocabulary(String),
    #[error("{path}:{line}: {message}")]
    MalformedLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate recipe id {id:?}")]
    DuplicateRecipeId { id: String },
    #[error("class {class:?} has {have} samples but {need} partitions require at least one each")]
    ClassTooSmall {
        class: String,
        have: usize,
        need: usize,
    },
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),
    #[error("invalid synthetic spec: {0}")]
    BadSyntheticSpec(String),
    #[error("canvas {h}x{w} too small to place {n_primitives} primitives without overlap")]
    CanvasTooSmall {
        h: usize,
        w: usize,
        n_primitives: usize,
    },
    #[error("invalid train config: {0}")]
    BadTrainConfig(String),
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint truncated: expected {expected} parameter bytes, got {found}")]
    TruncatedCheckpoint { expected: usize, found: usize },
    #[error("incompatible backbone: {0}")]
    IncompatibleBackbone(String),
    #[error("layer {layer} ({kind}) has no inspectable activations")]
    NotInspectable { layer: usize, kind: &'static str },
    #[error("inspection subset invalid: {0}")]
    BadSubset(String),
    #[error("bad image file {path}: {message}")]
    BadImage { path: String, message: String },
    #[error("feature file invalid: {0}")]
    BadFeatureFile(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
