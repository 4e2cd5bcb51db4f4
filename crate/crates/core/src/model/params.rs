use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{param_count, ModelError, ModelKind, ModelSpec, ParamCount};
use crate::data::FieldSchema;
use crate::interaction::{FieldAwareEmbeddings, PlainEmbeddings};
use crate::nn::{BatchNormLayer, DenseLayer, InitPolicy, Matrix, ParamAccess};
use crate::sparse::SparseRows;

/// Bias `w0` and one weight per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPart {
    pub w0: f64,
    pub w: Vec<f64>,
}

impl LinearPart {
    pub fn zeros(num_features: usize) -> Self {
        Self {
            w0: 0.0,
            w: vec![0.0; num_features],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Embeddings {
    None,
    Plain(PlainEmbeddings),
    FieldAware(FieldAwareEmbeddings),
}

impl Embeddings {
    pub fn dim(&self) -> usize {
        match self {
            Embeddings::None => 0,
            Embeddings::Plain(e) => e.dim(),
            Embeddings::FieldAware(e) => e.dim(),
        }
    }

    pub fn table(&self) -> &[f64] {
        match self {
            Embeddings::None => &[],
            Embeddings::Plain(e) => e.table(),
            Embeddings::FieldAware(e) => e.table(),
        }
    }

    pub fn table_mut(&mut self) -> &mut [f64] {
        match self {
            Embeddings::None => &mut [],
            Embeddings::Plain(e) => e.table_mut(),
            Embeddings::FieldAware(e) => e.table_mut(),
        }
    }

    /// Table shape: `[n, D]` or `[n, f, D]`.
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Embeddings::None => vec![0],
            Embeddings::Plain(e) => vec![e.num_features(), e.dim()],
            Embeddings::FieldAware(e) => vec![e.num_features(), e.num_fields(), e.dim()],
        }
    }
}

/// Hidden layers (ReLU after each) followed by a scalar head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub linear: LinearPart,
    pub embeddings: Embeddings,
    pub mlp: Mlp,
    pub bn: Option<BatchNormLayer>,
}

/// Named, shaped view of one parameter block, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [f64],
}

/// A model instance: spec, schema and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub(super) spec: ModelSpec,
    pub(super) schema: FieldSchema,
    pub params: ModelParams,
}

impl Model {
    /// Fresh parameters: Gaussian embeddings (`spec.init_std`), Glorot hidden
    /// layers, and zeros for the linear part and the head, so every kind starts
    /// at a near-zero logit.
    pub fn new(spec: ModelSpec, schema: FieldSchema, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, f, d) = (schema.num_features(), schema.num_fields(), spec.embedding_dim);
        let emb_policy = InitPolicy::gaussian(spec.init_std, seed);
        let embeddings = match spec.kind {
            ModelKind::Lr => Embeddings::None,
            k if k.field_aware() => Embeddings::FieldAware(FieldAwareEmbeddings::init(n, f, d, &emb_policy, &mut rng)),
            _ => Embeddings::Plain(PlainEmbeddings::init(n, d, &emb_policy, &mut rng)),
        };
        let width = spec.deep_width(f);
        let mut layers = Vec::new();
        if spec.kind.is_deep() {
            let glorot = InitPolicy::glorot(seed);
            let mut prev = width;
            for &h in &spec.hidden {
                layers.push(glorot.dense(prev, h, &mut rng));
                prev = h;
            }
            layers.push(DenseLayer::zeros(prev, 1));
        }
        let bn = spec.has_batchnorm().then(|| BatchNormLayer::new(width));
        let params = ModelParams {
            linear: LinearPart::zeros(n),
            embeddings,
            mlp: Mlp { layers },
            bn,
        };
        Ok(Self { spec, schema, params })
    }

    /// Every parameter zero except BN `gamma = 1`.
    pub fn zeros(spec: ModelSpec, schema: FieldSchema) -> Result<Self, ModelError> {
        let mut model = Self::new(spec, schema, 0)?;
        model.params.embeddings.table_mut().fill(0.0);
        for layer in &mut model.params.mlp.layers {
            layer.weight.as_mut_slice().fill(0.0);
            layer.bias.fill(0.0);
        }
        Ok(model)
    }

    /// Assembles a model from existing parameters after checking every shape.
    pub fn from_parts(spec: ModelSpec, schema: FieldSchema, params: ModelParams) -> Result<Self, ModelError> {
        spec.validate()?;
        let expected = Self::new(spec.clone(), schema.clone(), 0)?;
        let a: Vec<(String, Vec<usize>)> = expected.blocks().into_iter().map(|b| (b.name, b.shape)).collect();
        let model = Self { spec, schema, params };
        let b: Vec<(String, Vec<usize>)> = model.blocks().into_iter().map(|b| (b.name, b.shape)).collect();
        if a != b {
            return Err(ModelError::Shape {
                expected: format!("{a:?}"),
                found: format!("{b:?}"),
            });
        }
        for block in model.blocks() {
            let len: usize = block.shape.iter().product();
            if block.values.len() != len {
                return Err(ModelError::Shape {
                    expected: format!("{len} values in {}", block.name),
                    found: format!("{}", block.values.len()),
                });
            }
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn schema(&self) -> &FieldSchema {
        &self.schema
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(&self.spec, &self.schema)
    }

    /// Width of the MLP input.
    pub fn deep_width(&self) -> usize {
        self.spec.deep_width(self.schema.num_fields())
    }

    /// All parameter blocks in canonical order: `w0`, `linear`, `embeddings`,
    /// `mlp.{k}.weight`, `mlp.{k}.bias`, `bn.gamma`, `bn.beta`.
    pub fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let p = &self.params;
        let mut out = vec![
            ParamBlock {
                name: "w0".into(),
                shape: vec![1],
                values: std::slice::from_ref(&p.linear.w0),
            },
            ParamBlock {
                name: "linear".into(),
                shape: vec![p.linear.w.len()],
                values: &p.linear.w,
            },
        ];
        if !matches!(p.embeddings, Embeddings::None) {
            out.push(ParamBlock {
                name: "embeddings".into(),
                shape: p.embeddings.shape(),
                values: p.embeddings.table(),
            });
        }
        for (k, layer) in p.mlp.layers.iter().enumerate() {
            out.push(ParamBlock {
                name: format!("mlp.{k}.weight"),
                shape: vec![layer.outputs(), layer.inputs()],
                values: layer.weight.as_slice(),
            });
            out.push(ParamBlock {
                name: format!("mlp.{k}.bias"),
                shape: vec![layer.outputs()],
                values: &layer.bias,
            });
        }
        if let Some(bn) = &p.bn {
            out.push(ParamBlock {
                name: "bn.gamma".into(),
                shape: vec![bn.width()],
                values: &bn.gamma,
            });
            out.push(ParamBlock {
                name: "bn.beta".into(),
                shape: vec![bn.width()],
                values: &bn.beta,
            });
        }
        out
    }

    /// Mutable views of every block, in [`Model::blocks`] order.
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let ModelParams {
            linear,
            embeddings,
            mlp,
            bn,
        } = &mut self.params;
        let mut out: Vec<&mut [f64]> = vec![std::slice::from_mut(&mut linear.w0), &mut linear.w];
        if !matches!(embeddings, Embeddings::None) {
            out.push(embeddings.table_mut());
        }
        for layer in &mut mlp.layers {
            out.push(layer.weight.as_mut_slice());
            out.push(&mut layer.bias);
        }
        if let Some(bn) = bn {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out
    }

    /// Mutable slice of block `b` in [`Model::blocks`] order.
    pub fn block_mut(&mut self, b: usize) -> &mut [f64] {
        self.blocks_mut().swap_remove(b)
    }

    /// Euclidean norm of every block, for diagnostics.
    pub fn block_norms(&self) -> Vec<(String, f64)> {
        self.blocks()
            .into_iter()
            .map(|b| (b.name, b.values.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect()
    }
}

impl ParamAccess for Model {
    fn block_names(&self) -> Vec<String> {
        self.blocks().into_iter().map(|b| b.name).collect()
    }

    fn block_len(&self, block: usize) -> usize {
        self.blocks()[block].values.len()
    }

    fn param(&self, block: usize, index: usize) -> f64 {
        self.blocks()[block].values[index]
    }

    fn set_param(&mut self, block: usize, index: usize, value: f64) {
        self.block_mut(block)[index] = value;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnParamGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Gradient record mirroring [`ModelParams`]. Linear weights and embedding
/// rows are sparse: only rows read by the forward pass appear.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w0: f64,
    /// Width 1, keyed by feature index.
    pub linear: SparseRows,
    /// Keyed by table row: the feature for plain tables, `feature * f +
    /// target_field` for field-aware ones.
    pub embeddings: SparseRows,
    pub mlp: Vec<LayerGrads>,
    pub bn: Option<BnParamGrads>,
}

impl Gradients {
    /// Adds `lambda * theta` for linear weights and embedding rows that were
    /// touched by the batch. `w0`, dense layers and BN are not regularized.
    pub fn add_l2(&mut self, params: &ModelParams, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        let rows = self.linear.row_ids().to_vec();
        for (s, row) in rows.into_iter().enumerate() {
            self.linear.values_mut()[s] += lambda * params.linear.w[row];
        }
        let d = self.embeddings.width();
        let table = params.embeddings.table();
        let rows = self.embeddings.row_ids().to_vec();
        let values = self.embeddings.values_mut();
        for (s, row) in rows.into_iter().enumerate() {
            for k in 0..d {
                values[s * d + k] += lambda * table[row * d + k];
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite()
            && self.linear.values().iter().all(|v| v.is_finite())
            && self.embeddings.values().iter().all(|v| v.is_finite())
            && self
                .mlp
                .iter()
                .all(|l| l.weight.as_slice().iter().chain(&l.bias).all(|v| v.is_finite()))
            && self
                .bn
                .as_ref()
                .is_none_or(|b| b.gamma.iter().chain(&b.beta).all(|v| v.is_finite()))
    }

    /// Dense gradient per block, in [`Model::blocks`] order.
    pub fn to_dense(&self, model: &Model) -> Vec<Vec<f64>> {
        let p = &model.params;
        let mut out = vec![vec![self.w0], self.linear.to_dense(p.linear.w.len())];
        if !matches!(p.embeddings, Embeddings::None) {
            let d = p.embeddings.dim();
            out.push(self.embeddings.to_dense(p.embeddings.table().len() / d));
        }
        for l in &self.mlp {
            out.push(l.weight.as_slice().to_vec());
            out.push(l.bias.clone());
        }
        if let Some(bn) = &self.bn {
            out.push(bn.gamma.clone());
            out.push(bn.beta.clone());
        }
        out
    }
}
