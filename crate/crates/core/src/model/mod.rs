//! LR, FM, FFM, NFM, DeepFM and FNFM with explicit forward and backward
//! passes over mini-batches of encoded examples.

mod forward;
mod loss;
mod params;

use serde::{Deserialize, Serialize};

use crate::data::{DataError, FieldSchema};
use crate::interaction::concat_width;
use crate::nn::NnError;

pub use forward::ForwardCache;
pub use loss::nll_loss;
pub use params::{BnParamGrads, Embeddings, Gradients, LayerGrads, LinearPart, Mlp, Model, ModelParams, ParamBlock};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl From<NnError> for ModelError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Shape { expected, found } => ModelError::Shape { expected, found },
            NnError::Batch(m) => ModelError::Config(m),
            NnError::State(m) => ModelError::State(m),
            NnError::Numeric(m) => ModelError::Numeric(m),
        }
    }
}

impl From<DataError> for ModelError {
    fn from(e: DataError) -> Self {
        ModelError::Shape {
            expected: "examples matching the model schema".into(),
            found: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Fm,
    Ffm,
    Nfm,
    DeepFm,
    Fnfm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Lr,
        ModelKind::Fm,
        ModelKind::Ffm,
        ModelKind::Nfm,
        ModelKind::DeepFm,
        ModelKind::Fnfm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Fm => "fm",
            ModelKind::Ffm => "ffm",
            ModelKind::Nfm => "nfm",
            ModelKind::DeepFm => "deepfm",
            ModelKind::Fnfm => "fnfm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    pub fn has_embeddings(self) -> bool {
        self != ModelKind::Lr
    }

    pub fn field_aware(self) -> bool {
        matches!(self, ModelKind::Ffm | ModelKind::Fnfm)
    }

    /// Kinds with an MLP on top of the interaction layer.
    pub fn is_deep(self) -> bool {
        matches!(self, ModelKind::Nfm | ModelKind::DeepFm | ModelKind::Fnfm)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// FNFM interaction layer: full pairwise concatenation, or its segment sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    #[default]
    Concat,
    FieldPool,
}

fn default_init_std() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub embedding_dim: usize,
    /// Hidden layer widths; ReLU after each. A scalar head follows.
    pub hidden: Vec<usize>,
    /// Batch normalization on the MLP input (deep kinds only).
    pub use_batchnorm: bool,
    #[serde(default)]
    pub interaction: InteractionMode,
    /// Standard deviation of the Gaussian embedding initializer.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, embedding_dim: usize, hidden: Vec<usize>, use_batchnorm: bool) -> Self {
        Self {
            kind,
            embedding_dim,
            hidden,
            use_batchnorm,
            interaction: InteractionMode::Concat,
            init_std: default_init_std(),
        }
    }

    pub fn lr() -> Self {
        Self::new(ModelKind::Lr, 0, Vec::new(), false)
    }

    pub fn with_interaction(mut self, mode: InteractionMode) -> Self {
        self.interaction = mode;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let kind = self.kind;
        if kind.has_embeddings() && self.embedding_dim == 0 {
            return Err(ModelError::Config(format!("{kind} needs embedding_dim >= 1")));
        }
        if kind.is_deep() && self.hidden.is_empty() {
            return Err(ModelError::Config(format!("{kind} needs at least one hidden layer")));
        }
        if self.hidden.contains(&0) {
            return Err(ModelError::Config("hidden layer widths must be >= 1".into()));
        }
        if kind != ModelKind::Fnfm && self.interaction != InteractionMode::Concat {
            return Err(ModelError::Config(format!("interaction mode only applies to fnfm, not {kind}")));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(ModelError::Config(format!("init_std {} is invalid", self.init_std)));
        }
        Ok(())
    }

    /// Whether the built model carries a batch-normalization layer.
    pub fn has_batchnorm(&self) -> bool {
        self.use_batchnorm && self.kind.is_deep()
    }

    /// Width of the MLP input for `num_fields` fields; 0 for shallow kinds.
    pub fn deep_width(&self, num_fields: usize) -> usize {
        let d = self.embedding_dim;
        match self.kind {
            ModelKind::Lr | ModelKind::Fm | ModelKind::Ffm => 0,
            ModelKind::Nfm => d,
            ModelKind::DeepFm => num_fields * d,
            ModelKind::Fnfm => match self.interaction {
                InteractionMode::Concat => concat_width(num_fields, d),
                InteractionMode::FieldPool => d,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    /// `w0` plus one weight per feature.
    pub linear: usize,
    pub embeddings: usize,
    /// Weights and biases of every dense layer including the head.
    pub mlp: usize,
    pub mlp_first_weights: usize,
    pub batchnorm: usize,
    pub total: usize,
}

pub fn param_count(spec: &ModelSpec, schema: &FieldSchema) -> ParamCount {
    let (n, f, d) = (schema.num_features(), schema.num_fields(), spec.embedding_dim);
    let linear = n + 1;
    let embeddings = match spec.kind {
        ModelKind::Lr => 0,
        k if k.field_aware() => n * f * d,
        _ => n * d,
    };
    let (mut mlp, mut first) = (0, 0);
    let bn_width = spec.deep_width(f);
    if spec.kind.is_deep() {
        let mut prev = bn_width;
        for (i, &h) in spec.hidden.iter().chain(std::iter::once(&1)).enumerate() {
            if i == 0 {
                first = prev * h;
            }
            mlp += prev * h + h;
            prev = h;
        }
    }
    let batchnorm = if spec.has_batchnorm() { 2 * bn_width } else { 0 };
    ParamCount {
        linear,
        embeddings,
        mlp,
        mlp_first_weights: first,
        batchnorm,
        total: linear + embeddings + mlp + batchnorm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let schema = FieldSchema::categorical(&[5, 5, 5]).unwrap();
        let ffm = ModelSpec::new(ModelKind::Ffm, 4, vec![], false);
        assert_eq!(param_count(&ffm, &schema).embeddings, 180);
        assert_eq!(param_count(&ModelSpec::lr(), &schema).total, 16);
        let schema = FieldSchema::categorical(&[3, 3, 3, 3]).unwrap();
        let fnfm = ModelSpec::new(ModelKind::Fnfm, 3, vec![8], true);
        let c = param_count(&fnfm, &schema);
        assert_eq!(c.mlp_first_weights, 8 * 18);
        assert_eq!(c.batchnorm, 36);
        assert_eq!(c.mlp, 8 * 18 + 8 + 8 + 1);
    }

    #[test]
    fn validation() {
        assert!(ModelSpec::new(ModelKind::Fm, 0, vec![], false).validate().is_err());
        assert!(ModelSpec::new(ModelKind::Nfm, 4, vec![], false).validate().is_err());
        assert!(ModelSpec::new(ModelKind::Ffm, 4, vec![], false)
            .with_interaction(InteractionMode::FieldPool)
            .validate()
            .is_err());
        assert!(ModelSpec::new(ModelKind::Fnfm, 4, vec![8], true).validate().is_ok());
        assert_eq!(ModelKind::parse("DeepFM"), Some(ModelKind::DeepFm));
    }
}
